//! Python bindings for the `focusdet` core.
//!
//! Boxes are exposed as classes; richer structures (regions, crops, models,
//! reports, datasets) cross the boundary as plain dicts and lists with the
//! same layout as the JSON files the CLI writes.

use focusdet::boxgeom::{self, AffineMap};
use focusdet::evalkit::{coco_eval as coco_eval_rs, voc_ap_at, DEFAULT_MAX_DETS};
use focusdet::focal::{self, FocalRegion};
use focusdet::fuse::{self, FuseConfig, RegionDetections};
use focusdet::io::{Dataset, DetectionFile};
use focusdet::mixture::{self, EmConfig, FeatureGrid, FeatureVector, MixtureModel};
use focusdet::pipeline::{self, PipelineConfig, RegionMethod};
use focusdet::scenes::{self, OracleSpec, SceneSpec};
use focusdet::ImageSize;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Serializes through Python's `json` module into dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (s,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&s).map_err(err)
}

fn from_py_opt<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    obj.map_or_else(|| Ok(T::default()), from_py)
}

/// Axis-aligned box with corners `(x1, y1)` and `(x2, y2)`.
#[pyclass(name = "BBox", module = "pyfocusdet", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
struct PyBBox(boxgeom::BBox);

#[pymethods]
impl PyBBox {
    #[new]
    fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> PyResult<Self> {
        boxgeom::BBox::new(x1, y1, x2, y2).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> PyResult<Self> {
        boxgeom::BBox::from_xywh(x, y, w, h).map(Self).map_err(err)
    }

    #[getter]
    fn x1(&self) -> f64 {
        self.0.x1
    }
    #[getter]
    fn y1(&self) -> f64 {
        self.0.y1
    }
    #[getter]
    fn x2(&self) -> f64 {
        self.0.x2
    }
    #[getter]
    fn y2(&self) -> f64 {
        self.0.y2
    }

    fn area(&self) -> f64 {
        boxgeom::area(&self.0)
    }

    fn iou(&self, other: &PyBBox) -> f64 {
        boxgeom::iou(&self.0, &other.0)
    }

    fn intersect(&self, other: &PyBBox) -> Option<PyBBox> {
        boxgeom::intersect(&self.0, &other.0).map(PyBBox)
    }

    fn clip(&self, frame: &PyBBox) -> Option<PyBBox> {
        boxgeom::clip(&self.0, &frame.0).map(PyBBox)
    }

    /// `(scale_x, scale_y, offset_x, offset_y)` applied as `s * x + o`.
    fn apply_map(&self, map: (f64, f64, f64, f64)) -> PyResult<PyBBox> {
        let m = AffineMap::new(map.0, map.1, map.2, map.3).map_err(err)?;
        Ok(PyBBox(boxgeom::apply_map(&self.0, &m)))
    }

    fn to_tuple(&self) -> (f64, f64, f64, f64) {
        (self.0.x1, self.0.y1, self.0.x2, self.0.y2)
    }

    fn __repr__(&self) -> String {
        format!("BBox({}, {}, {}, {})", self.0.x1, self.0.y1, self.0.x2, self.0.y2)
    }
}

/// Detection: box, class id and confidence in `[0, 1]`.
#[pyclass(name = "ScoredBox", module = "pyfocusdet", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
struct PyScoredBox(focusdet::ScoredBox);

#[pymethods]
impl PyScoredBox {
    #[new]
    fn new(bbox: &PyBBox, class_id: u32, score: f64) -> PyResult<Self> {
        focusdet::ScoredBox::new(bbox.0, class_id, score).map(Self).map_err(err)
    }

    #[getter]
    fn bbox(&self) -> PyBBox {
        PyBBox(self.0.bbox)
    }
    #[getter]
    fn class_id(&self) -> u32 {
        self.0.class_id
    }
    #[getter]
    fn score(&self) -> f64 {
        self.0.score
    }

    fn __repr__(&self) -> String {
        let b = &self.0.bbox;
        format!(
            "ScoredBox(BBox({}, {}, {}, {}), class_id={}, score={})",
            b.x1, b.y1, b.x2, b.y2, self.0.class_id, self.0.score
        )
    }
}

fn raw(v: &[PyBBox]) -> Vec<boxgeom::BBox> {
    v.iter().map(|b| b.0).collect()
}

/// Number of focal regions for `n` ground-truth boxes.
#[pyfunction]
fn num_focal_regions(n: usize) -> PyResult<usize> {
    mixture::num_focal_regions(n).map_err(err)
}

#[pyfunction]
fn iou(a: &PyBBox, b: &PyBBox) -> f64 {
    boxgeom::iou(&a.0, &b.0)
}

/// Indices of the boxes kept by greedy NMS, highest score first.
#[pyfunction]
#[pyo3(signature = (boxes, iou_threshold = 0.5, per_class = true))]
fn nms(boxes: Vec<PyScoredBox>, iou_threshold: f64, per_class: bool) -> Vec<usize> {
    let b: Vec<focusdet::ScoredBox> = boxes.iter().map(|b| b.0).collect();
    fuse::nms_indices(&b, iou_threshold, per_class)
}

/// Grid-distance feature vectors, one list per box.
#[pyfunction]
#[pyo3(signature = (boxes, image_width, image_height, grid_rows = 4, grid_cols = 4))]
fn featurize(boxes: Vec<PyBBox>, image_width: f64, image_height: f64, grid_rows: usize, grid_cols: usize) -> PyResult<Vec<Vec<f64>>> {
    let grid = FeatureGrid::new(grid_rows, grid_cols, image_width, image_height).map_err(err)?;
    Ok(mixture::featurize(&raw(&boxes), &grid).into_iter().map(|f| f.0).collect())
}

/// Fits a diagonal Gaussian mixture; returns the model as a dict.
#[pyfunction]
#[pyo3(signature = (features, k, em = None))]
fn fit_em<'py>(py: Python<'py>, features: Vec<Vec<f64>>, k: usize, em: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: EmConfig = from_py_opt(em)?;
    let feats: Vec<FeatureVector> = features.into_iter().map(FeatureVector).collect();
    let model = mixture::fit_em(&feats, k, &cfg).map_err(err)?;
    to_py(py, &model)
}

/// `(probabilities, fallback)` for one feature vector under a model dict.
#[pyfunction]
fn posterior(model: &Bound<'_, PyAny>, x: Vec<f64>) -> PyResult<(Vec<f64>, bool)> {
    let m: MixtureModel = from_py(model)?;
    let p = mixture::posterior(&m, &FeatureVector(x)).map_err(err)?;
    Ok((p.probs, p.fallback))
}

/// Cluster labels for the boxes of one image.
#[pyfunction]
#[pyo3(signature = (boxes, image_width, image_height, grid_rows = 4, grid_cols = 4, em = None))]
fn cluster_boxes(
    boxes: Vec<PyBBox>,
    image_width: f64,
    image_height: f64,
    grid_rows: usize,
    grid_cols: usize,
    em: Option<&Bound<'_, PyAny>>,
) -> PyResult<Vec<usize>> {
    let cfg: EmConfig = from_py_opt(em)?;
    let grid = FeatureGrid::new(grid_rows, grid_cols, image_width, image_height).map_err(err)?;
    let (_, a) = mixture::cluster_boxes(&raw(&boxes), &grid, &cfg).map_err(err)?;
    Ok(a.labels)
}

/// Focal regions of one image as a list of dicts.
#[pyfunction]
#[pyo3(signature = (image_id, image_width, image_height, boxes, config = None))]
fn focus_regions<'py>(
    py: Python<'py>,
    image_id: &str,
    image_width: u32,
    image_height: u32,
    boxes: Vec<PyBBox>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: PipelineConfig = from_py_opt(config)?;
    cfg.validate().map_err(err)?;
    let (_, regions) = focal::focus_regions(
        image_id,
        ImageSize::new(image_width, image_height),
        &raw(&boxes),
        cfg.grid_rows,
        cfg.grid_cols,
        &cfg.em(),
        &cfg.region_params(),
    )
    .map_err(err)?;
    to_py(py, &regions)
}

/// Even 3x2 tiling of an image as a list of region dicts.
#[pyfunction]
#[pyo3(signature = (image_id, image_width, image_height, detector_width = 1000, detector_height = 600))]
fn eip_regions<'py>(
    py: Python<'py>,
    image_id: &str,
    image_width: u32,
    image_height: u32,
    detector_width: u32,
    detector_height: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let r = focal::eip_regions(
        image_id,
        ImageSize::new(image_width, image_height),
        ImageSize::new(detector_width, detector_height),
    )
    .map_err(err)?;
    to_py(py, &r)
}

/// Crop ground truth for one region dict; `annotations` is a list of
/// `(BBox, class_id)`.
#[pyfunction]
#[pyo3(signature = (region, annotations, keep_threshold = 0.3))]
fn refine_gt<'py>(
    py: Python<'py>,
    region: &Bound<'py, PyAny>,
    annotations: Vec<(PyBBox, u32)>,
    keep_threshold: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let r: FocalRegion = from_py(region)?;
    let anns: Vec<(boxgeom::BBox, u32)> = annotations.into_iter().map(|(b, c)| (b.0, c)).collect();
    to_py(py, &focal::refine_gt(&r, &anns, keep_threshold).map_err(err)?)
}

/// Remap, NMS and IBS over a list of `{"region", "detections"}` dicts.
#[pyfunction]
#[pyo3(signature = (region_detections, fuse = None))]
fn merge(region_detections: &Bound<'_, PyAny>, fuse: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<PyScoredBox>> {
    let rds: Vec<RegionDetections> = from_py(region_detections)?;
    let cfg: FuseConfig = from_py_opt(fuse)?;
    cfg.validate().map_err(err)?;
    let rds: Vec<RegionDetections> = rds
        .into_iter()
        .map(|r| RegionDetections::ingest(r.region, r.detections))
        .collect();
    let out = fuse::merge_pipeline(&rds, &cfg).map_err(err)?;
    Ok(out.into_iter().map(PyScoredBox).collect())
}

/// COCO metrics for a detection dict `{"images": [...]}` against a dataset
/// dict; adds VOC AP when `voc_iou` is given.
#[pyfunction]
#[pyo3(signature = (detections, dataset, max_dets = DEFAULT_MAX_DETS, voc_iou = None))]
fn coco_eval<'py>(
    py: Python<'py>,
    detections: &Bound<'py, PyAny>,
    dataset: &Bound<'py, PyAny>,
    max_dets: usize,
    voc_iou: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let dets: DetectionFile = from_py(detections)?;
    let ds: Dataset = from_py(dataset)?;
    let (set, gts) = (dets.to_set(), ds.ground_truth());
    let mut report = coco_eval_rs(&set, &gts, max_dets).map_err(err)?;
    if let Some(t) = voc_iou {
        report.voc = Some(focusdet::evalkit::VocScore {
            iou_threshold: t,
            ap: voc_ap_at(&set, &gts, t, false).map_err(err)?,
        });
    }
    to_py(py, &report)
}

/// Synthetic dataset dict of `count` scenes.
#[pyfunction]
#[pyo3(signature = (count, seed, scene = None))]
fn synth<'py>(py: Python<'py>, count: usize, seed: u64, scene: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let spec = SceneSpec {
        rng_seed: seed,
        ..from_py_opt(scene)?
    };
    let s = scenes::generate_corpus(&spec, count).map_err(err)?;
    to_py(py, &scenes::corpus_dataset(&s, spec.classes()))
}

/// Whole closed loop on a dataset dict; returns `(detections, report)`.
#[pyfunction]
#[pyo3(signature = (dataset, method = "focus", config = None, oracle = None))]
fn run_closed_loop<'py>(
    py: Python<'py>,
    dataset: &Bound<'py, PyAny>,
    method: &str,
    config: Option<&Bound<'py, PyAny>>,
    oracle: Option<&Bound<'py, PyAny>>,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let ds: Dataset = from_py(dataset)?;
    let method = match method {
        "focus" => RegionMethod::Focus,
        "even" => RegionMethod::Even,
        other => return Err(err(format!("unknown method {other:?}; use \"focus\" or \"even\""))),
    };
    let cfg: PipelineConfig = from_py_opt(config)?;
    let oracle: OracleSpec = from_py_opt(oracle)?;
    let out = py
        .detach(|| pipeline::run_closed_loop(&ds, method, &cfg, &oracle))
        .map_err(err)?;
    Ok((to_py(py, &out.detections)?, to_py(py, &out.report)?))
}

#[pymodule]
fn pyfocusdet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBBox>()?;
    m.add_class::<PyScoredBox>()?;
    m.add_function(wrap_pyfunction!(num_focal_regions, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(featurize, m)?)?;
    m.add_function(wrap_pyfunction!(fit_em, m)?)?;
    m.add_function(wrap_pyfunction!(posterior, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_boxes, m)?)?;
    m.add_function(wrap_pyfunction!(focus_regions, m)?)?;
    m.add_function(wrap_pyfunction!(eip_regions, m)?)?;
    m.add_function(wrap_pyfunction!(refine_gt, m)?)?;
    m.add_function(wrap_pyfunction!(merge, m)?)?;
    m.add_function(wrap_pyfunction!(coco_eval, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_closed_loop, m)?)?;
    Ok(())
}
