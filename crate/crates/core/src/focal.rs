//! Focal regions: cluster envelopes, crop-level ground truth, and the
//! crop-to-detector transform.

use serde::{Deserialize, Serialize};

use crate::boxgeom::{area, clip, AffineMap, BBox, ImageSize};
use crate::error::{Error, Result};
use crate::mixture::{cluster_boxes, EmConfig, FeatureGrid, MixtureModel};

/// Gap added around each cluster envelope.
pub const DEFAULT_MARGIN: f64 = 20.0;
/// Minimum fraction of a box's area inside a crop for it to be kept.
pub const DEFAULT_KEEP_THRESHOLD: f64 = 0.30;
/// Detect-stage input resolution.
pub const DEFAULT_DETECTOR: ImageSize = ImageSize::new(1000, 600);

/// A rectangle of an image that is cropped and resized for the detect stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalRegion {
    pub image_id: String,
    pub region_id: usize,
    /// Image coordinates.
    pub rect: BBox,
    pub detector: ImageSize,
    /// Image coordinates to detector-input coordinates; maps `rect` onto
    /// `(0, 0, detector.width, detector.height)`.
    pub to_detector: AffineMap,
}

impl FocalRegion {
    pub fn new(image_id: impl Into<String>, region_id: usize, rect: BBox, detector: ImageSize) -> Result<Self> {
        let to_detector = make_detector_map(&rect, detector)?;
        Ok(Self {
            image_id: image_id.into(),
            region_id,
            rect,
            detector,
            to_detector,
        })
    }
}

/// Anisotropic scale and offset taking `rect` onto the detector frame.
pub fn make_detector_map(rect: &BBox, detector: ImageSize) -> Result<AffineMap> {
    if detector.width == 0 || detector.height == 0 {
        return Err(Error::Config(format!(
            "detector size must be positive, got {}x{}",
            detector.width, detector.height
        )));
    }
    if rect.width() <= 0.0 || rect.height() <= 0.0 {
        return Err(Error::InvalidMap(format!(
            "region {:?} has zero area",
            rect.to_array()
        )));
    }
    let sx = f64::from(detector.width) / rect.width();
    let sy = f64::from(detector.height) / rect.height();
    AffineMap::new(sx, sy, -sx * rect.x1, -sy * rect.y1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub margin: f64,
    pub detector: ImageSize,
}

impl Default for RegionParams {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            detector: DEFAULT_DETECTOR,
        }
    }
}

/// One region per non-empty cluster: the member envelope grown by `margin`
/// on every side, clamped to the image.
///
/// Regions are numbered in increasing cluster-label order. A cluster whose
/// clamped envelope has no area (all members outside the image) is skipped.
pub fn regions_from_clusters(
    image_id: &str,
    image: ImageSize,
    boxes: &[BBox],
    labels: &[usize],
    params: &RegionParams,
) -> Result<Vec<FocalRegion>> {
    if boxes.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} boxes but {} cluster labels",
            boxes.len(),
            labels.len()
        )));
    }
    if !(params.margin >= 0.0) {
        return Err(Error::Config(format!("margin must be >= 0, got {}", params.margin)));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut envelopes: Vec<Option<BBox>> = vec![None; k];
    for (b, &l) in boxes.iter().zip(labels) {
        envelopes[l] = Some(match envelopes[l] {
            Some(e) => e.union_envelope(b),
            None => *b,
        });
    }
    let frame = image.frame();
    let mut out = Vec::new();
    for env in envelopes.into_iter().flatten() {
        let grown = BBox {
            x1: env.x1 - params.margin,
            y1: env.y1 - params.margin,
            x2: env.x2 + params.margin,
            y2: env.y2 + params.margin,
        };
        if let Some(rect) = clip(&grown, &frame) {
            out.push(FocalRegion::new(image_id, out.len(), rect, params.detector)?);
        }
    }
    Ok(out)
}

/// Clusters an image's boxes and returns the fitted model and its regions.
pub fn focus_regions(
    image_id: &str,
    image: ImageSize,
    boxes: &[BBox],
    grid_rows: usize,
    grid_cols: usize,
    em: &EmConfig,
    params: &RegionParams,
) -> Result<(MixtureModel, Vec<FocalRegion>)> {
    let grid = FeatureGrid::new(grid_rows, grid_cols, f64::from(image.width), f64::from(image.height))?;
    let (model, assignment) = cluster_boxes(boxes, &grid, em)?;
    let regions = regions_from_clusters(image_id, image, boxes, &assignment.labels, params)?;
    Ok((model, regions))
}

/// A ground-truth box as seen by one crop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    /// Crop coordinates (origin at the region's top-left corner).
    pub bbox: BBox,
    pub class_id: u32,
    /// Clipped area over original area.
    pub kept_fraction: f64,
    /// Index of the source annotation in the image's annotation list.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedCrop {
    pub region: FocalRegion,
    pub gt: Vec<CropBox>,
    /// Zero-area annotations that were skipped.
    #[serde(default)]
    pub dropped_degenerate: usize,
}

impl RefinedCrop {
    /// Crop-space box mapped back to image coordinates.
    pub fn to_image(&self, b: &BBox) -> BBox {
        b.translate(self.region.rect.x1, self.region.rect.y1)
    }
}

/// Ground truth for one crop: each annotation clipped to the region and kept
/// when at least `keep_threshold` of its area survives.
pub fn refine_gt(region: &FocalRegion, annotations: &[(BBox, u32)], keep_threshold: f64) -> Result<RefinedCrop> {
    if !(keep_threshold > 0.0 && keep_threshold <= 1.0) {
        return Err(Error::Config(format!(
            "keep_threshold must be in (0, 1], got {keep_threshold}"
        )));
    }
    let (ox, oy) = (region.rect.x1, region.rect.y1);
    let mut gt = Vec::new();
    let mut dropped_degenerate = 0;
    for (i, (b, class_id)) in annotations.iter().enumerate() {
        let full = area(b);
        if full <= 0.0 {
            dropped_degenerate += 1;
            continue;
        }
        let Some(c) = clip(b, &region.rect) else {
            continue;
        };
        let kept_fraction = (area(&c) / full).min(1.0);
        if kept_fraction >= keep_threshold {
            gt.push(CropBox {
                bbox: c.translate(-ox, -oy),
                class_id: *class_id,
                kept_fraction,
                source: i,
            });
        }
    }
    Ok(RefinedCrop {
        region: region.clone(),
        gt,
        dropped_degenerate,
    })
}

/// Even-partition baseline: 3 columns by 2 rows of non-overlapping tiles.
///
/// Leftover pixels go to the leftmost columns and the top row, one each.
pub fn eip_regions(image_id: &str, image: ImageSize, detector: ImageSize) -> Result<Vec<FocalRegion>> {
    const COLS: u32 = 3;
    const ROWS: u32 = 2;
    if image.width < COLS || image.height < ROWS {
        return Err(Error::Config(format!(
            "image {}x{} too small for a {COLS}x{ROWS} partition",
            image.width, image.height
        )));
    }
    let spans = |len: u32, parts: u32| -> Vec<(u32, u32)> {
        let (base, rem) = (len / parts, len % parts);
        let mut start = 0;
        (0..parts)
            .map(|i| {
                let size = base + u32::from(i < rem);
                let s = (start, start + size);
                start += size;
                s
            })
            .collect()
    };
    let mut out = Vec::with_capacity(6);
    for (y1, y2) in spans(image.height, ROWS) {
        for &(x1, x2) in &spans(image.width, COLS) {
            let rect = BBox::new(f64::from(x1), f64::from(y1), f64::from(x2), f64::from(y2))?;
            out.push(FocalRegion::new(image_id, out.len(), rect, detector)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxgeom::{apply_map, intersect, invert_map};

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn params(margin: f64) -> RegionParams {
        RegionParams {
            margin,
            detector: DEFAULT_DETECTOR,
        }
    }

    #[test]
    fn envelope_with_margin() {
        let boxes = [bx(100., 100., 150., 150.), bx(200., 180., 260., 240.)];
        let r = regions_from_clusters("a", ImageSize::new(1000, 1000), &boxes, &[0, 0], &params(20.0)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].rect, bx(80., 80., 280., 260.));
    }

    #[test]
    fn envelope_clamped_to_image() {
        let r = regions_from_clusters("a", ImageSize::new(100, 100), &[bx(5., 5., 30., 30.)], &[0], &params(20.0)).unwrap();
        assert_eq!(r[0].rect, bx(0., 0., 50., 50.));
    }

    #[test]
    fn zero_margin_is_the_box() {
        let b = bx(12., 7., 40., 33.);
        let r = regions_from_clusters("a", ImageSize::new(100, 100), &[b], &[0], &params(0.0)).unwrap();
        assert_eq!(r[0].rect, b);
    }

    #[test]
    fn empty_clusters_and_inputs() {
        let r = regions_from_clusters("a", ImageSize::new(100, 100), &[], &[], &params(20.0)).unwrap();
        assert!(r.is_empty());
        let boxes = [bx(0., 0., 10., 10.), bx(50., 50., 60., 60.)];
        let r = regions_from_clusters("a", ImageSize::new(100, 100), &boxes, &[0, 3], &params(5.0)).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].region_id, 1);
        assert!(regions_from_clusters("a", ImageSize::new(100, 100), &boxes, &[0], &params(5.0)).is_err());
    }

    #[test]
    fn refine_examples() {
        let region = FocalRegion::new("a", 0, bx(5., 0., 100., 100.), DEFAULT_DETECTOR).unwrap();
        let anns = [
            (bx(0., 0., 10., 10.), 3),
            (bx(20., 20., 30., 40.), 1),
            (bx(50., 50., 50., 60.), 2),
        ];
        let crop = refine_gt(&region, &anns, 0.3).unwrap();
        assert_eq!(crop.gt.len(), 2);
        assert_eq!(crop.gt[0].bbox, bx(0., 0., 5., 10.));
        assert_eq!(crop.gt[0].kept_fraction, 0.5);
        assert_eq!(crop.gt[0].class_id, 3);
        assert_eq!(crop.gt[1].bbox, bx(15., 20., 25., 40.));
        assert_eq!(crop.gt[1].kept_fraction, 1.0);
        assert_eq!(crop.dropped_degenerate, 1);
        assert_eq!(crop.to_image(&crop.gt[1].bbox), anns[1].0);

        let region = FocalRegion::new("a", 0, bx(8., 0., 100., 100.), DEFAULT_DETECTOR).unwrap();
        let crop = refine_gt(&region, &anns[..1], 0.3).unwrap();
        assert!(crop.gt.is_empty());

        assert!(refine_gt(&region, &anns, 0.0).is_err());
        assert!(refine_gt(&region, &anns, 1.5).is_err());
    }

    #[test]
    fn detector_map_examples() {
        let m = make_detector_map(&bx(0., 0., 1000., 600.), ImageSize::new(1000, 600)).unwrap();
        assert_eq!(m, AffineMap::IDENTITY);
        let m = make_detector_map(&bx(100., 100., 600., 350.), ImageSize::new(1000, 500)).unwrap();
        assert_eq!(m, AffineMap::new(2.0, 2.0, -200.0, -200.0).unwrap());
        assert!(make_detector_map(&bx(1., 1., 1., 5.), ImageSize::new(10, 10)).is_err());
        assert!(make_detector_map(&bx(1., 1., 3., 5.), ImageSize::new(0, 10)).is_err());
    }

    #[test]
    fn detector_map_round_trip() {
        let rect = bx(123.25, 47.5, 911.0, 388.75);
        let m = make_detector_map(&rect, DEFAULT_DETECTOR).unwrap();
        let fwd = apply_map(&rect, &m);
        assert!((fwd.x1).abs() < 1e-9 && (fwd.y1).abs() < 1e-9);
        assert!((fwd.x2 - 1000.0).abs() < 1e-9 && (fwd.y2 - 600.0).abs() < 1e-9);
        let back = apply_map(&fwd, &invert_map(&m));
        for (a, b) in back.to_array().iter().zip(rect.to_array()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn check_partition(image: ImageSize, tiles: &[FocalRegion]) {
        assert_eq!(tiles.len(), 6);
        let total: f64 = tiles.iter().map(|t| t.rect.area()).sum();
        assert_eq!(total, f64::from(image.width) * f64::from(image.height));
        for (i, a) in tiles.iter().enumerate() {
            assert!(image.frame().contains(&a.rect, 0.0));
            for b in &tiles[i + 1..] {
                assert!(intersect(&a.rect, &b.rect).is_none());
            }
        }
    }

    #[test]
    fn eip_examples() {
        let img = ImageSize::new(300, 200);
        let t = eip_regions("a", img, DEFAULT_DETECTOR).unwrap();
        assert!(t.iter().all(|r| r.rect.width() == 100.0 && r.rect.height() == 100.0));
        check_partition(img, &t);

        let img = ImageSize::new(301, 200);
        let t = eip_regions("a", img, DEFAULT_DETECTOR).unwrap();
        let widths: Vec<f64> = t[..3].iter().map(|r| r.rect.width()).collect();
        assert_eq!(widths, vec![101.0, 100.0, 100.0]);
        check_partition(img, &t);

        let img = ImageSize::new(1918, 1077);
        check_partition(img, &eip_regions("a", img, DEFAULT_DETECTOR).unwrap());
        assert!(eip_regions("a", ImageSize::new(2, 10), DEFAULT_DETECTOR).is_err());
    }
}
