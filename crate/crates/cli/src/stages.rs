//! File formats exchanged between stages and the subcommand bodies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use focusdet::evalkit::{coco_eval, voc_ap_at, EvalReport, VocScore};
use focusdet::focal::RefinedCrop;
use focusdet::fuse::RegionDetections;
use focusdet::io::{
    parse_annotations, parse_detections, read_json, write_atomic, write_json, write_visdrone_annotations,
    write_visdrone_results, ClassMap, Dataset, DetectionFile, ImageDetections, ImageRecord,
};
use focusdet::pipeline::{image_regions, merge_image, oracle_image, refine_image, ImageRegions, RegionMethod};
use focusdet::scenes::{corpus_dataset, generate_corpus, scale_stats, ScaleStats};
use focusdet::ImageSize;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunMeta, Settings};
use crate::svg::area_svg;
use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub meta: RunMeta,
    #[serde(flatten)]
    pub dataset: Dataset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
    pub images: Vec<ImageRegions>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageCrops {
    pub image_id: String,
    pub crops: Vec<RefinedCrop>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CropsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
    pub images: Vec<ImageCrops>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRegionDetections {
    pub image_id: String,
    pub regions: Vec<RegionDetections>,
}

/// Detector output per region; the hand-off point for a real detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionDetectionsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
    pub images: Vec<ImageRegionDetections>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergedFile {
    pub meta: RunMeta,
    pub images: Vec<ImageDetections>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportFile<'a> {
    pub meta: &'a RunMeta,
    #[serde(flatten)]
    pub report: &'a EvalReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleFile<'a> {
    pub meta: &'a RunMeta,
    #[serde(flatten)]
    pub stats: &'a ScaleStats,
}

/// Where image sizes come from when annotations lack them.
#[derive(Debug, Clone, Default)]
pub struct SizeSource {
    pub sizes: Option<PathBuf>,
    pub images: Option<PathBuf>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

fn image_dir_sizes(dir: &Path) -> Result<BTreeMap<String, ImageSize>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Data(e.to_string()))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let (w, h) =
            image::image_dimensions(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), ImageSize::new(w, h));
        }
    }
    Ok(out)
}

/// Reads ground truth and fills in missing image sizes.
pub fn load_dataset(path: &Path, classes: &ClassMap, src: &SizeSource) -> Result<Dataset, CliError> {
    let mut ds = parse_annotations(path, classes)?;
    let mut known: BTreeMap<String, ImageSize> = BTreeMap::new();
    if let Some(p) = &src.sizes {
        known.extend(read_json::<BTreeMap<String, ImageSize>>(p)?);
    }
    if let Some(d) = &src.images {
        known.extend(image_dir_sizes(d)?);
    }
    for im in &mut ds.images {
        if let Some(s) = known.get(&im.image_id) {
            im.size = Some(*s);
        }
    }
    ds.sort();
    Ok(ds)
}

fn require_sizes(ds: &Dataset) -> Result<(), CliError> {
    match ds.images.iter().find(|im| im.size.is_none()) {
        Some(im) => Err(CliError::Data(format!(
            "image {} has no size; pass --sizes or --images",
            im.image_id
        ))),
        None => Ok(()),
    }
}

fn records_by_id(ds: &Dataset) -> BTreeMap<&str, &ImageRecord> {
    ds.images.iter().map(|im| (im.image_id.as_str(), im)).collect()
}

pub fn synth(s: &Settings, n_images: usize, out: &Path, visdrone_dir: Option<&Path>) -> Result<Dataset, CliError> {
    let spec = s.scene();
    let scenes = generate_corpus(&spec, n_images)?;
    let dataset = corpus_dataset(&scenes, spec.classes());
    let mut meta = s.meta("synth");
    meta.scene = Some(spec);
    write_json(
        out,
        &DatasetFile {
            meta,
            dataset: dataset.clone(),
        },
    )?;
    if let Some(dir) = visdrone_dir {
        write_visdrone_annotations(dir, &dataset)?;
    }
    Ok(dataset)
}

pub fn gen_regions(s: &Settings, ds: &Dataset, method: RegionMethod, out: &Path) -> Result<RegionsFile, CliError> {
    require_sizes(ds)?;
    let cfg = &s.file.pipeline;
    let images = ds
        .images
        .par_iter()
        .map(|rec| image_regions(rec, method, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let file = RegionsFile {
        meta: Some(s.meta("gen-regions")),
        images,
    };
    write_json(out, &file)?;
    Ok(file)
}

pub fn refine(s: &Settings, ds: &Dataset, regions: &RegionsFile, out: &Path) -> Result<CropsFile, CliError> {
    let by_id = records_by_id(ds);
    let cfg = &s.file.pipeline;
    let mut images = regions
        .images
        .par_iter()
        .map(|ir| {
            let rec = by_id
                .get(ir.image_id.as_str())
                .ok_or_else(|| CliError::Data(format!("regions for unknown image {}", ir.image_id)))?;
            Ok(ImageCrops {
                image_id: ir.image_id.clone(),
                crops: refine_image(&ir.regions, rec, cfg)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let file = CropsFile {
        meta: Some(s.meta("refine-gt")),
        images,
    };
    write_json(out, &file)?;
    Ok(file)
}

pub fn oracle_detect(s: &Settings, crops: &CropsFile, out: &Path) -> Result<RegionDetectionsFile, CliError> {
    let oracle = s.oracle();
    let mut images = crops
        .images
        .par_iter()
        .map(|ic| {
            Ok(ImageRegionDetections {
                image_id: ic.image_id.clone(),
                regions: oracle_image(&ic.crops, &oracle)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut meta = s.meta("oracle-detect");
    meta.oracle = Some(oracle);
    let file = RegionDetectionsFile {
        meta: Some(meta),
        images,
    };
    write_json(out, &file)?;
    Ok(file)
}

pub fn merge(
    s: &Settings,
    rd: &RegionDetectionsFile,
    out: &Path,
    visdrone_dir: Option<&Path>,
) -> Result<DetectionFile, CliError> {
    let cfg = &s.file.pipeline;
    let mut images = rd
        .images
        .par_iter()
        .map(|im| {
            // region detections are always re-clamped to the detector frame
            let regions: Vec<RegionDetections> = im
                .regions
                .iter()
                .map(|r| RegionDetections::ingest(r.region.clone(), r.detections.clone()))
                .collect();
            merge_image(&im.image_id, &regions, cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let dets = DetectionFile { images };
    write_json(
        out,
        &MergedFile {
            meta: s.meta("merge"),
            images: dets.images.clone(),
        },
    )?;
    if let Some(dir) = visdrone_dir {
        write_visdrone_results(dir, &dets)?;
    }
    Ok(dets)
}

#[derive(Debug, Clone, Default)]
pub struct EvalOutputs {
    pub json: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub pr_csv: Option<PathBuf>,
    pub voc_iou: Option<f64>,
    pub voc_merge_classes: bool,
}

pub fn evaluate(
    s: &Settings,
    ds: &Dataset,
    detections: &Path,
    classes: &ClassMap,
    outs: &EvalOutputs,
) -> Result<(EvalReport, String), CliError> {
    let dets = parse_detections(detections)?;
    evaluate_set(s, ds, &dets, classes, outs)
}

pub fn evaluate_set(
    s: &Settings,
    ds: &Dataset,
    dets: &focusdet::evalkit::DetectionSet,
    classes: &ClassMap,
    outs: &EvalOutputs,
) -> Result<(EvalReport, String), CliError> {
    let gts = ds.ground_truth();
    let mut report = coco_eval(dets, &gts, s.file.pipeline.max_dets)?;
    if let Some(t) = outs.voc_iou {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::Usage(format!("--voc-iou must be in [0, 1], got {t}")));
        }
        report.voc = Some(VocScore {
            iou_threshold: t,
            ap: voc_ap_at(dets, &gts, t, outs.voc_merge_classes)?,
        });
    }
    let mut names = classes.names();
    for c in &gts.categories {
        names.entry(*c).or_insert_with(|| format!("class{c}"));
    }
    let table = report.to_table(&names);
    let meta = s.meta("eval");
    if let Some(p) = &outs.json {
        write_json(
            p,
            &ReportFile {
                meta: &meta,
                report: &report,
            },
        )?;
    }
    if let Some(p) = &outs.table {
        write_atomic(p, table.as_bytes())?;
    }
    if let Some(p) = &outs.pr_csv {
        write_atomic(p, report.pr_csv().as_bytes())?;
    }
    Ok((report, table))
}

pub fn scale_report(s: &Settings, ds: &Dataset, crops: &CropsFile, json: &Path, svg: Option<&Path>) -> Result<ScaleStats, CliError> {
    let all: Vec<RefinedCrop> = crops.images.iter().flat_map(|ic| ic.crops.iter().cloned()).collect();
    let raw: Vec<_> = ds.images.iter().flat_map(ImageRecord::objects).collect();
    let stats = scale_stats(&all, &raw);
    write_json(
        json,
        &ScaleFile {
            meta: &s.meta("scale"),
            stats: &stats,
        },
    )?;
    if let Some(p) = svg {
        write_atomic(p, area_svg(&stats).as_bytes())?;
    }
    Ok(stats)
}
