//! Seeded synthetic scenes and an oracle detector.
//!
//! Scenes stand in for annotated aerial images: objects gather around
//! Gaussian cluster centers, and each cluster draws a scale multiplier that
//! stretches both its box sizes and its spatial spread, the way camera
//! altitude does. The oracle "detects" a crop by perturbing its ground truth.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::boxgeom::{iou, BBox, ImageSize, ScoredBox};
use crate::error::{Error, Result};
use crate::focal::RefinedCrop;
use crate::fuse::RegionDetections;
use crate::io::{Annotation, Dataset, ImageRecord};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub image_size: ImageSize,
    pub n_clusters: usize,
    /// Inclusive `[min, max]` objects per cluster.
    pub boxes_per_cluster: [usize; 2],
    /// Std-dev of object centers around the cluster center, before the
    /// cluster's scale multiplier.
    pub cluster_spread: f64,
    /// Side-length range `[min, max]` per class; class ids are `1..=len`.
    pub box_size_range: Vec<[f64; 2]>,
    /// Range of the per-cluster scale multiplier.
    pub scale_range: [f64; 2],
    /// Minimum distance between cluster centers.
    pub min_cluster_separation: f64,
    /// Largest IoU allowed between two objects of the scene.
    pub max_box_iou: f64,
    pub rng_seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            image_size: ImageSize::new(1500, 1000),
            n_clusters: 4,
            boxes_per_cluster: [5, 12],
            cluster_spread: 40.0,
            box_size_range: vec![[10.0, 24.0], [16.0, 40.0], [24.0, 60.0]],
            scale_range: [0.6, 2.0],
            min_cluster_separation: 200.0,
            max_box_iou: 0.3,
            rng_seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn classes(&self) -> u32 {
        self.box_size_range.len() as u32
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleScene(m));
        if self.image_size.width == 0 || self.image_size.height == 0 {
            return bad("image size must be positive".into());
        }
        if self.n_clusters == 0 {
            return bad("n_clusters must be >= 1".into());
        }
        let [lo, hi] = self.boxes_per_cluster;
        if lo == 0 || lo > hi {
            return bad(format!("boxes_per_cluster {lo}..={hi} is empty or includes 0"));
        }
        if self.box_size_range.is_empty() {
            return bad("at least one class size range is required".into());
        }
        for &[a, b] in &self.box_size_range {
            if !(a >= 1.0 && a <= b && b.is_finite()) {
                return bad(format!("size range [{a}, {b}] is invalid"));
            }
        }
        let [s0, s1] = self.scale_range;
        if !(s0 > 0.0 && s0 <= s1 && s1.is_finite()) {
            return bad(format!("scale range [{s0}, {s1}] is invalid"));
        }
        if !(self.cluster_spread >= 0.0 && self.min_cluster_separation >= 0.0) {
            return bad("spread and separation must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.max_box_iou) {
            return bad(format!("max_box_iou {} is outside [0, 1]", self.max_box_iou));
        }
        Ok(())
    }
}

/// A generated image: annotations plus the cluster each object came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub image_id: String,
    pub image_size: ImageSize,
    pub annotations: Vec<Annotation>,
    pub labels: Vec<usize>,
}

impl Scene {
    pub fn boxes(&self) -> Vec<BBox> {
        self.annotations.iter().map(|a| a.bbox).collect()
    }

    pub fn to_record(&self) -> ImageRecord {
        ImageRecord {
            image_id: self.image_id.clone(),
            size: Some(self.image_size),
            annotations: self.annotations.clone(),
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 2000;

/// Generates one scene; identical specs give identical scenes.
pub fn generate_scene(image_id: &str, spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let (w, h) = (f64::from(spec.image_size.width), f64::from(spec.image_size.height));
    let max_side = spec
        .box_size_range
        .iter()
        .map(|r| r[1])
        .fold(0.0, f64::max);

    let mut centers: Vec<(f64, f64, f64)> = Vec::with_capacity(spec.n_clusters);
    for c in 0..spec.n_clusters {
        let scale = rng.random_range(spec.scale_range[0]..=spec.scale_range[1]);
        let pad = (max_side * scale * 0.5 + spec.cluster_spread * scale).min(0.5 * w.min(h));
        if max_side * scale > w || max_side * scale > h {
            return Err(Error::InfeasibleScene(format!(
                "boxes up to {:.0}px do not fit a {}x{} image",
                max_side * scale,
                spec.image_size.width,
                spec.image_size.height
            )));
        }
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let cx = rng.random_range(pad..=w - pad);
            let cy = rng.random_range(pad..=h - pad);
            let far = centers.iter().all(|&(ox, oy, _)| {
                ((cx - ox).powi(2) + (cy - oy).powi(2)).sqrt() >= spec.min_cluster_separation
            });
            if far {
                placed = Some((cx, cy, scale));
                break;
            }
        }
        match placed {
            Some(p) => centers.push(p),
            None => {
                return Err(Error::InfeasibleScene(format!(
                    "cannot place cluster {c} at least {} px from the others",
                    spec.min_cluster_separation
                )))
            }
        }
    }

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut annotations = Vec::new();
    let mut labels = Vec::new();
    for (c, &(cx, cy, scale)) in centers.iter().enumerate() {
        let n = rng.random_range(spec.boxes_per_cluster[0]..=spec.boxes_per_cluster[1]);
        for _ in 0..n {
            let class = rng.random_range(0..spec.box_size_range.len());
            let [lo, hi] = spec.box_size_range[class];
            let bw = (rng.random_range(lo..=hi) * scale).round().clamp(1.0, w);
            let bh = (rng.random_range(lo..=hi) * scale).round().clamp(1.0, h);
            let spread = spec.cluster_spread * scale;
            let mut placed = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let ox = cx + spread * unit.sample(&mut rng);
                let oy = cy + spread * unit.sample(&mut rng);
                let x1 = (ox - 0.5 * bw).round().clamp(0.0, w - bw);
                let y1 = (oy - 0.5 * bh).round().clamp(0.0, h - bh);
                let b = BBox::new(x1, y1, x1 + bw, y1 + bh)?;
                if annotations.iter().all(|a: &Annotation| iou(&a.bbox, &b) <= spec.max_box_iou) {
                    placed = Some(b);
                    break;
                }
            }
            let Some(bbox) = placed else {
                return Err(Error::InfeasibleScene(format!(
                    "cannot place an object in cluster {c} with IoU <= {} to the others",
                    spec.max_box_iou
                )));
            };
            annotations.push(Annotation {
                bbox,
                class_id: class as u32 + 1,
                truncation: 0,
                occlusion: 0,
                ignore: false,
            });
            labels.push(c);
        }
    }
    Ok(Scene {
        image_id: image_id.to_string(),
        image_size: spec.image_size,
        annotations,
        labels,
    })
}

/// `n` scenes named `synth_0000`, `synth_0001`, ...; scene `i` uses its own
/// seed derived from `spec.rng_seed` and `i`.
pub fn generate_corpus(spec: &SceneSpec, n: usize) -> Result<Vec<Scene>> {
    (0..n)
        .map(|i| {
            let seed = stream(spec.rng_seed, "scene", i as u64).random::<u64>();
            let s = SceneSpec {
                rng_seed: seed,
                ..spec.clone()
            };
            generate_scene(&format!("synth_{i:04}"), &s)
        })
        .collect()
}

pub fn corpus_dataset(scenes: &[Scene], classes: u32) -> Dataset {
    Dataset {
        images: scenes.iter().map(Scene::to_record).collect(),
        categories: (1..=classes).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    /// Std-dev of per-corner jitter, in image pixels.
    pub localization_noise: f64,
    /// Mean score of a reported object, truncated or not.
    pub score_mean_tp: f64,
    pub score_noise: f64,
    pub miss_rate: f64,
    /// Mean number of false positives per region (Poisson).
    pub false_positive_rate: f64,
    /// Chance that a truncated object is reported with a wrong class.
    pub class_flip_rate_truncated: f64,
    /// Class ids are `1..=classes`.
    pub classes: u32,
    pub rng_seed: u64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            localization_noise: 1.0,
            score_mean_tp: 0.8,
            score_noise: 0.05,
            miss_rate: 0.05,
            false_positive_rate: 0.5,
            class_flip_rate_truncated: 0.3,
            classes: 3,
            rng_seed: 0,
        }
    }
}

impl OracleSpec {
    /// No noise, misses, flips or false positives.
    pub fn perfect(classes: u32) -> Self {
        Self {
            localization_noise: 0.0,
            score_mean_tp: 0.9,
            score_noise: 0.0,
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            class_flip_rate_truncated: 0.0,
            classes,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("score_mean_tp", self.score_mean_tp),
            ("miss_rate", self.miss_rate),
            ("class_flip_rate_truncated", self.class_flip_rate_truncated),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        for (name, v) in [
            ("localization_noise", self.localization_noise),
            ("score_noise", self.score_noise),
            ("false_positive_rate", self.false_positive_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.classes == 0 {
            return Err(Error::Config("classes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Perturbed ground truth of a crop, as a detector on the resized crop
/// would report it.
pub fn oracle_detect(crop: &RefinedCrop, spec: &OracleSpec) -> Result<RegionDetections> {
    spec.validate()?;
    let region = &crop.region;
    let mut rng = stream(spec.rng_seed, &region.image_id, region.region_id as u64);
    let (sx, sy) = (region.to_detector.scale_x, region.to_detector.scale_y);
    let (cw, ch) = (region.rect.width(), region.rect.height());
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut dets = Vec::with_capacity(crop.gt.len());
    for g in &crop.gt {
        if rng.random::<f64>() < spec.miss_rate {
            continue;
        }
        let mut c = g.bbox.to_array();
        if spec.localization_noise > 0.0 {
            for v in &mut c {
                *v += spec.localization_noise * unit.sample(&mut rng);
            }
        }
        let (x1, x2) = (c[0].min(c[2]).clamp(0.0, cw), c[0].max(c[2]).clamp(0.0, cw));
        let (y1, y2) = (c[1].min(c[3]).clamp(0.0, ch), c[1].max(c[3]).clamp(0.0, ch));
        if x2 <= x1 || y2 <= y1 {
            continue;
        }
        let mut score = spec.score_mean_tp;
        if spec.score_noise > 0.0 {
            score += spec.score_noise * unit.sample(&mut rng);
        }
        let score = score.clamp(0.01, 1.0);
        let mut class_id = g.class_id;
        if g.kept_fraction < 1.0 && spec.classes > 1 && rng.random::<f64>() < spec.class_flip_rate_truncated {
            // uniform over the other classes
            let k = rng.random_range(1..spec.classes);
            class_id = (g.class_id.saturating_sub(1) + k) % spec.classes + 1;
        }
        dets.push(ScoredBox {
            bbox: BBox::new(x1 * sx, y1 * sy, x2 * sx, y2 * sy)?,
            class_id,
            score,
        });
    }

    if spec.false_positive_rate > 0.0 {
        let n = Poisson::new(spec.false_positive_rate)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(&mut rng) as usize;
        for _ in 0..n {
            let bw = rng.random_range(4.0..=48.0f64).min(cw);
            let bh = rng.random_range(4.0..=48.0f64).min(ch);
            let x1 = rng.random_range(0.0..=cw - bw);
            let y1 = rng.random_range(0.0..=ch - bh);
            dets.push(ScoredBox {
                bbox: BBox::new(x1 * sx, y1 * sy, (x1 + bw) * sx, (y1 + bh) * sy)?,
                class_id: rng.random_range(1..=spec.classes),
                score: rng.random_range(0.05..0.5),
            });
        }
    }
    Ok(RegionDetections::ingest(region.clone(), dets))
}

/// Population coefficient of variation; `None` for fewer than two values
/// or a zero mean.
pub fn coefficient_of_variation(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return None;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPair {
    pub cv_raw: Option<f64>,
    pub cv_cropped: Option<f64>,
}

/// Spread of box areas before and after crop-and-resize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    pub pooled: CvPair,
    pub per_class: BTreeMap<u32, CvPair>,
    pub raw_areas: Vec<(u32, f64)>,
    pub cropped_areas: Vec<(u32, f64)>,
}

/// Coefficient of variation of box areas: raw image-space annotations versus
/// crop ground truth mapped to detector resolution.
pub fn scale_stats(crops: &[RefinedCrop], raw: &[(BBox, u32)]) -> ScaleStats {
    let raw_areas: Vec<(u32, f64)> = raw.iter().map(|(b, c)| (*c, b.area())).collect();
    let cropped_areas: Vec<(u32, f64)> = crops
        .iter()
        .flat_map(|cr| {
            let s = cr.region.to_detector.scale_x * cr.region.to_detector.scale_y;
            cr.gt.iter().map(move |g| (g.class_id, g.bbox.area() * s))
        })
        .collect();
    let cv = |v: &[(u32, f64)], class: Option<u32>| {
        let a: Vec<f64> = v
            .iter()
            .filter(|(c, _)| class.is_none_or(|k| k == *c))
            .map(|(_, a)| *a)
            .collect();
        coefficient_of_variation(&a)
    };
    let mut classes: Vec<u32> = raw_areas.iter().map(|(c, _)| *c).collect();
    classes.sort_unstable();
    classes.dedup();
    let per_class = classes
        .into_iter()
        .map(|c| {
            (
                c,
                CvPair {
                    cv_raw: cv(&raw_areas, Some(c)),
                    cv_cropped: cv(&cropped_areas, Some(c)),
                },
            )
        })
        .collect();
    ScaleStats {
        pooled: CvPair {
            cv_raw: cv(&raw_areas, None),
            cv_cropped: cv(&cropped_areas, None),
        },
        per_class,
        raw_areas,
        cropped_areas,
    }
}

/// Fraction of items whose predicted label equals the true label under the
/// best one-to-one relabelling of predicted clusters.
pub fn label_agreement(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "label vectors differ in length");
    if predicted.is_empty() {
        return 1.0;
    }
    let kp = predicted.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; kt]; kp];
    for (&p, &t) in predicted.iter().zip(truth) {
        counts[p][t] += 1;
    }
    // exhaustive search over injective maps predicted -> true
    fn search(row: usize, counts: &[Vec<usize>], used: &mut [bool], acc: usize, best: &mut usize) {
        if row == counts.len() {
            *best = (*best).max(acc);
            return;
        }
        let remaining: usize = counts[row..].iter().map(|r| r.iter().max().copied().unwrap_or(0)).sum();
        if acc + remaining <= *best {
            return;
        }
        search(row + 1, counts, used, acc, best);
        for t in 0..used.len() {
            if !used[t] {
                used[t] = true;
                search(row + 1, counts, used, acc + counts[row][t], best);
                used[t] = false;
            }
        }
    }
    let mut best = 0;
    search(0, &counts, &mut vec![false; kt], 0, &mut best);
    best as f64 / predicted.len() as f64
}
