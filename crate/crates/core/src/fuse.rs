//! Merging per-region detections into image-level detections.
//!
//! Detections are mapped back to image coordinates, concatenated, reduced by
//! greedy NMS and then by incomplete box suppression (IBS). IBS handles the
//! case NMS misses: an object cut by the border of one focal region is
//! reported there as a truncated box whose IoU with the complete box from a
//! neighbouring region is small. Clipping the neighbour's box to the first
//! region reproduces the truncation, so the two can be compared directly.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::boxgeom::{apply_map, clip, iou, BBox, ScoredBox};
use crate::error::{Error, Result};
use crate::focal::FocalRegion;

/// Detections allowed to stick out of their region by this much.
const REGION_SLACK: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuseConfig {
    pub nms_iou: f64,
    /// Two regions overlap when their IoU exceeds this.
    pub ibs_region_iou: f64,
    /// A clipped competitor suppresses a box when their IoU exceeds this.
    pub ibs_box_iou: f64,
    /// Restrict NMS and IBS to boxes of the same class.
    pub per_class: bool,
    /// Run IBS after NMS.
    pub ibs: bool,
}

impl Default for FuseConfig {
    fn default() -> Self {
        Self {
            nms_iou: 0.5,
            ibs_region_iou: 0.05,
            ibs_box_iou: 0.5,
            per_class: true,
            ibs: true,
        }
    }
}

impl FuseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nms_iou", self.nms_iou),
            ("ibs_region_iou", self.ibs_region_iou),
            ("ibs_box_iou", self.ibs_box_iou),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Detector output for one focal region, in detector-input coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDetections {
    pub region: FocalRegion,
    pub detections: Vec<ScoredBox>,
}

impl RegionDetections {
    /// Clamps every box to the detector frame, dropping boxes left with no area.
    pub fn ingest(region: FocalRegion, detections: Vec<ScoredBox>) -> Self {
        let frame = region.detector.frame();
        let detections = detections
            .into_iter()
            .filter_map(|d| clip(&d.bbox, &frame).map(|bbox| ScoredBox { bbox, ..d }))
            .collect();
        Self { region, detections }
    }
}

/// Detections of one region already in image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBoxes {
    pub rect: BBox,
    pub detections: Vec<ScoredBox>,
}

/// Maps a region's detections back to image coordinates.
///
/// Boxes are first clamped to the detector frame, so every result lies inside
/// the region rectangle.
pub fn remap_to_image(rd: &RegionDetections) -> Vec<ScoredBox> {
    let frame = rd.region.detector.frame();
    let back = rd.region.to_detector.inverse();
    rd.detections
        .iter()
        .filter_map(|d| {
            clip(&d.bbox, &frame).map(|b| ScoredBox {
                bbox: apply_map(&b, &back),
                ..*d
            })
        })
        .collect()
}

/// Descending score, then ascending position.
fn rank_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy NMS returning the indices of survivors in selection order.
pub fn nms_indices(boxes: &[ScoredBox], iou_threshold: f64, per_class: bool) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in rank_order(boxes.iter().map(|b| b.score)) {
        let cand = &boxes[i];
        let suppressed = kept.iter().any(|&k| {
            let other = &boxes[k];
            (!per_class || other.class_id == cand.class_id) && iou(&other.bbox, &cand.bbox) > iou_threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

/// Greedy NMS: highest score first, ties by input position. A box is dropped
/// when its IoU with an already kept box exceeds `iou_threshold`.
pub fn nms(boxes: &[ScoredBox], iou_threshold: f64, per_class: bool) -> Vec<ScoredBox> {
    nms_indices(boxes, iou_threshold, per_class)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}

/// IBS over detections tagged with their region index. Returns a keep flag
/// per detection.
///
/// Single greedy pass in rank order (score descending, then region index,
/// then position). A detection in region `i` is suppressed when a detection
/// already kept in a region overlapping `i`, clipped to region `i`, has IoU
/// above `ibs_box_iou` with it. Everything kept earlier outranks the current
/// box, so suppression only ever flows from higher to lower confidence.
fn ibs_keep(rects: &[BBox], items: &[(usize, ScoredBox)], cfg: &FuseConfig) -> Vec<bool> {
    let overlapping: Vec<Vec<usize>> = rects
        .iter()
        .enumerate()
        .map(|(i, ri)| {
            rects
                .iter()
                .enumerate()
                .filter(|&(k, rk)| k != i && iou(ri, rk) > cfg.ibs_region_iou)
                .map(|(k, _)| k)
                .collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, da) = &items[a];
        let (rb, db) = &items[b];
        db.score
            .total_cmp(&da.score)
            .then(ra.cmp(rb))
            .then(a.cmp(&b))
    });

    let mut kept_by_region: Vec<Vec<usize>> = vec![Vec::new(); rects.len()];
    let mut keep = vec![false; items.len()];
    for idx in order {
        let (region, det) = &items[idx];
        let frame = &rects[*region];
        let suppressed = overlapping[*region].iter().any(|&k| {
            kept_by_region[k].iter().any(|&o| {
                let other = &items[o].1;
                if cfg.per_class && other.class_id != det.class_id {
                    return false;
                }
                clip(&other.bbox, frame).is_some_and(|c| iou(&c, &det.bbox) > cfg.ibs_box_iou)
            })
        });
        if !suppressed {
            kept_by_region[*region].push(idx);
            keep[idx] = true;
        }
    }
    keep
}

fn check_inside(rect: &BBox, det: &ScoredBox, region: usize) -> Result<()> {
    if !rect.contains(&det.bbox, REGION_SLACK) {
        return Err(Error::RegionGeometry {
            image_id: String::new(),
            region_id: region,
            reason: format!(
                "detection {:?} lies outside region {:?}",
                det.bbox.to_array(),
                rect.to_array()
            ),
        });
    }
    Ok(())
}

/// Incomplete box suppression over detections already in image coordinates.
///
/// Survivors are returned grouped by region, in input order within a region.
pub fn ibs(per_region: &[RegionBoxes], cfg: &FuseConfig) -> Result<Vec<ScoredBox>> {
    cfg.validate()?;
    let rects: Vec<BBox> = per_region.iter().map(|r| r.rect).collect();
    let mut items = Vec::new();
    for (i, r) in per_region.iter().enumerate() {
        for d in &r.detections {
            check_inside(&r.rect, d, i)?;
            items.push((i, *d));
        }
    }
    let keep = ibs_keep(&rects, &items, cfg);
    Ok(items
        .into_iter()
        .zip(keep)
        .filter_map(|((_, d), k)| k.then_some(d))
        .collect())
}

/// Full merge for one image: remap, concatenate, NMS, then IBS (unless
/// disabled). Output is sorted by score descending, ties by concatenation
/// position.
pub fn merge_pipeline(per_region: &[RegionDetections], cfg: &FuseConfig) -> Result<Vec<ScoredBox>> {
    cfg.validate()?;
    if let Some(first) = per_region.first() {
        if let Some(other) = per_region.iter().find(|r| r.region.image_id != first.region.image_id) {
            return Err(Error::RegionGeometry {
                image_id: other.region.image_id.clone(),
                region_id: other.region.region_id,
                reason: format!("cannot merge with regions of image {:?}", first.region.image_id),
            });
        }
    }
    let rects: Vec<BBox> = per_region.iter().map(|r| r.region.rect).collect();
    let mut items: Vec<(usize, ScoredBox)> = Vec::new();
    for (i, rd) in per_region.iter().enumerate() {
        rd.region.to_detector.validate()?;
        items.extend(remap_to_image(rd).into_iter().map(|d| (i, d)));
    }
    let flat: Vec<ScoredBox> = items.iter().map(|(_, d)| *d).collect();
    let mut survivors = nms_indices(&flat, cfg.nms_iou, cfg.per_class);
    survivors.sort_unstable();

    if cfg.ibs {
        let sub: Vec<(usize, ScoredBox)> = survivors.iter().map(|&i| items[i]).collect();
        let keep = ibs_keep(&rects, &sub, cfg);
        survivors = survivors
            .into_iter()
            .zip(keep)
            .filter_map(|(i, k)| k.then_some(i))
            .collect();
    }
    survivors.sort_by(|&a, &b| match flat[b].score.total_cmp(&flat[a].score) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    Ok(survivors.into_iter().map(|i| flat[i]).collect())
}
