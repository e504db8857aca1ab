//! Per-image stages chained into a closed loop: focus, refine, oracle
//! detection, merge and evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{ImageSize, ScoredBox};
use crate::error::{Error, Result};
use crate::evalkit::{coco_eval, EvalReport, DEFAULT_MAX_DETS};
use crate::focal::{eip_regions, focus_regions, refine_gt, FocalRegion, RefinedCrop, RegionParams};
use crate::fuse::{merge_pipeline, FuseConfig, RegionDetections};
use crate::io::{Dataset, DetectionFile, ImageDetections, ImageRecord};
use crate::mixture::{EmConfig, MixtureModel};
use crate::scenes::{oracle_detect, OracleSpec};

/// Every tunable of the pipeline in one flat table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub margin: f64,
    pub keep_threshold: f64,
    pub detector_width: u32,
    pub detector_height: u32,
    pub nms_iou: f64,
    pub ibs_region_iou: f64,
    pub ibs_box_iou: f64,
    pub per_class: bool,
    pub ibs: bool,
    pub em_max_iterations: usize,
    pub em_tolerance: f64,
    pub em_covariance_floor: f64,
    pub em_restarts: usize,
    pub seed: u64,
    pub max_dets: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let em = EmConfig::default();
        let fuse = FuseConfig::default();
        let region = RegionParams::default();
        Self {
            grid_rows: 4,
            grid_cols: 4,
            margin: region.margin,
            keep_threshold: crate::focal::DEFAULT_KEEP_THRESHOLD,
            detector_width: region.detector.width,
            detector_height: region.detector.height,
            nms_iou: fuse.nms_iou,
            ibs_region_iou: fuse.ibs_region_iou,
            ibs_box_iou: fuse.ibs_box_iou,
            per_class: fuse.per_class,
            ibs: fuse.ibs,
            em_max_iterations: em.max_iterations,
            em_tolerance: em.tolerance,
            em_covariance_floor: em.covariance_floor,
            em_restarts: em.restarts,
            seed: 0,
            max_dets: DEFAULT_MAX_DETS,
        }
    }
}

impl PipelineConfig {
    pub fn em(&self) -> EmConfig {
        EmConfig {
            max_iterations: self.em_max_iterations,
            tolerance: self.em_tolerance,
            covariance_floor: self.em_covariance_floor,
            rng_seed: self.seed,
            restarts: self.em_restarts,
        }
    }

    pub fn fuse(&self) -> FuseConfig {
        FuseConfig {
            nms_iou: self.nms_iou,
            ibs_region_iou: self.ibs_region_iou,
            ibs_box_iou: self.ibs_box_iou,
            per_class: self.per_class,
            ibs: self.ibs,
        }
    }

    pub fn detector(&self) -> ImageSize {
        ImageSize::new(self.detector_width, self.detector_height)
    }

    pub fn region_params(&self) -> RegionParams {
        RegionParams {
            margin: self.margin,
            detector: self.detector(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::Config("grid_rows and grid_cols must be >= 1".into()));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be >= 0, got {}", self.margin)));
        }
        if !(self.keep_threshold > 0.0 && self.keep_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "keep_threshold must be in (0, 1], got {}",
                self.keep_threshold
            )));
        }
        if self.detector_width == 0 || self.detector_height == 0 {
            return Err(Error::Config("detector size must be positive".into()));
        }
        if self.max_dets == 0 {
            return Err(Error::Config("max_dets must be >= 1".into()));
        }
        self.em().validate()?;
        self.fuse().validate()
    }
}

/// How an image is cut into regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegionMethod {
    /// Mixture-model clustering of the ground truth.
    #[default]
    Focus,
    /// Fixed 3x2 tiling.
    Even,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRegions {
    pub image_id: String,
    pub image_size: ImageSize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<MixtureModel>,
    pub regions: Vec<FocalRegion>,
}

fn image_size(record: &ImageRecord) -> Result<ImageSize> {
    record
        .size
        .ok_or_else(|| Error::Config(format!("image {} has no size", record.image_id)))
}

/// Regions for one image. With [`RegionMethod::Focus`] an image without
/// objects gets no regions.
pub fn image_regions(record: &ImageRecord, method: RegionMethod, cfg: &PipelineConfig) -> Result<ImageRegions> {
    let size = image_size(record)?;
    let (model, regions) = match method {
        RegionMethod::Even => (None, eip_regions(&record.image_id, size, cfg.detector())?),
        RegionMethod::Focus => {
            let boxes: Vec<_> = record.objects().into_iter().map(|(b, _)| b).collect();
            if boxes.is_empty() {
                (None, Vec::new())
            } else {
                let (m, r) = focus_regions(
                    &record.image_id,
                    size,
                    &boxes,
                    cfg.grid_rows,
                    cfg.grid_cols,
                    &cfg.em(),
                    &cfg.region_params(),
                )?;
                (Some(m), r)
            }
        }
    };
    Ok(ImageRegions {
        image_id: record.image_id.clone(),
        image_size: size,
        model,
        regions,
    })
}

pub fn refine_image(regions: &[FocalRegion], record: &ImageRecord, cfg: &PipelineConfig) -> Result<Vec<RefinedCrop>> {
    let objects = record.objects();
    regions
        .iter()
        .map(|r| refine_gt(r, &objects, cfg.keep_threshold))
        .collect()
}

pub fn oracle_image(crops: &[RefinedCrop], oracle: &OracleSpec) -> Result<Vec<RegionDetections>> {
    crops.iter().map(|c| oracle_detect(c, oracle)).collect()
}

pub fn merge_image(image_id: &str, per_region: &[RegionDetections], cfg: &PipelineConfig) -> Result<ImageDetections> {
    let detections: Vec<ScoredBox> = if per_region.is_empty() {
        Vec::new()
    } else {
        merge_pipeline(per_region, &cfg.fuse())?
    };
    Ok(ImageDetections {
        image_id: image_id.to_string(),
        detections,
    })
}

/// Everything the closed loop produced for a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutput {
    pub regions: Vec<ImageRegions>,
    pub crops: Vec<Vec<RefinedCrop>>,
    pub detections: DetectionFile,
    pub report: EvalReport,
}

/// Regions, crop ground truth, oracle detections, merged results and COCO
/// metrics for every image. Images are processed in parallel; outputs are in
/// image-id order.
pub fn run_closed_loop(
    dataset: &Dataset,
    method: RegionMethod,
    cfg: &PipelineConfig,
    oracle: &OracleSpec,
) -> Result<LoopOutput> {
    cfg.validate()?;
    oracle.validate()?;
    let mut records: Vec<&ImageRecord> = dataset.images.iter().collect();
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let per_image: Vec<(ImageRegions, Vec<RefinedCrop>, ImageDetections)> = records
        .par_iter()
        .map(|rec| {
            let regions = image_regions(rec, method, cfg)?;
            let crops = refine_image(&regions.regions, rec, cfg)?;
            let rds = oracle_image(&crops, oracle)?;
            let dets = merge_image(&rec.image_id, &rds, cfg)?;
            Ok((regions, crops, dets))
        })
        .collect::<Result<_>>()?;
    let mut regions = Vec::with_capacity(per_image.len());
    let mut crops = Vec::with_capacity(per_image.len());
    let mut images = Vec::with_capacity(per_image.len());
    for (r, c, d) in per_image {
        regions.push(r);
        crops.push(c);
        images.push(d);
    }
    let detections = DetectionFile { images };
    let report = coco_eval(&detections.to_set(), &dataset.ground_truth(), cfg.max_dets)?;
    Ok(LoopOutput {
        regions,
        crops,
        detections,
        report,
    })
}
