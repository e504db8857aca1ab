//! Detection scoring: the COCO AP family and VOC AP at a single IoU threshold.
//!
//! COCO matching follows `pycocotools`: per image and class, detections are
//! taken in descending score order and each matches the best still-free
//! ground truth at or above the IoU threshold. Ground truth flagged `ignore`
//! behaves like a COCO crowd region: overlap is measured against the
//! detection's own area, it can absorb any number of detections, and those
//! detections count neither as hits nor as false positives. Precision is
//! interpolated at 101 recall points.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{area, intersect, iou, BBox, ScoredBox};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_DETS: usize = 500;
pub const SMALL_AREA: f64 = 32.0 * 32.0;
pub const MEDIUM_AREA: f64 = 96.0 * 96.0;
const AREA_MAX: f64 = 1e10;
const RECALL_POINTS: usize = 101;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds() -> [f64; 10] {
    let mut t = [0.0; 10];
    for (i, v) in t.iter_mut().enumerate() {
        *v = 0.5 + i as f64 * (0.45 / 9.0);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub bbox: BBox,
    pub class_id: u32,
    #[serde(default)]
    pub ignore: bool,
}

/// Ground truth per image plus the dataset's category set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSet {
    pub images: BTreeMap<String, Vec<GtBox>>,
    pub categories: BTreeSet<u32>,
}

impl GroundTruthSet {
    /// Builds a set whose categories are the classes that occur in `images`.
    pub fn from_images(images: BTreeMap<String, Vec<GtBox>>) -> Self {
        let categories = images
            .values()
            .flatten()
            .filter(|g| !g.ignore)
            .map(|g| g.class_id)
            .collect();
        Self { images, categories }
    }
}

/// Detections per image id.
pub type DetectionSet = BTreeMap<String, Vec<ScoredBox>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    pub const ALL: [AreaRange; 4] = [AreaRange::All, AreaRange::Small, AreaRange::Medium, AreaRange::Large];

    /// Inclusive `[lo, hi]` area bounds.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            AreaRange::All => (0.0, AREA_MAX),
            AreaRange::Small => (0.0, SMALL_AREA),
            AreaRange::Medium => (SMALL_AREA, MEDIUM_AREA),
            AreaRange::Large => (MEDIUM_AREA, AREA_MAX),
        }
    }

    fn excludes(self, a: f64) -> bool {
        let (lo, hi) = self.bounds();
        a < lo || a > hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocScore {
    pub iou_threshold: f64,
    /// Percentage.
    pub ap: f64,
}

/// All metrics are percentages in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ap_small: f64,
    pub ap_medium: f64,
    pub ap_large: f64,
    pub per_class_ap50: BTreeMap<u32, f64>,
    /// Metrics with no eligible ground truth, reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
    /// Neither ground truth nor detections.
    #[serde(default)]
    pub empty: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voc: Option<VocScore>,
    /// Interpolated precision/recall points at IoU 0.5 per class.
    #[serde(skip)]
    pub pr_curves: BTreeMap<u32, Vec<(f64, f64)>>,
}

impl EvalReport {
    /// Aligned plain-text table: aggregate metrics, then one AP50 column per class.
    pub fn to_table(&self, class_names: &BTreeMap<u32, String>) -> String {
        let mut headers: Vec<String> = ["AP", "AP50", "AP75", "APs", "APm", "APl"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut values = vec![self.ap, self.ap50, self.ap75, self.ap_small, self.ap_medium, self.ap_large];
        if let Some(v) = &self.voc {
            headers.push(format!("VOC@{:.2}", v.iou_threshold));
            values.push(v.ap);
        }
        for (c, ap) in &self.per_class_ap50 {
            headers.push(class_names.get(c).cloned().unwrap_or_else(|| format!("class{c}")));
            values.push(*ap);
        }
        let cells: Vec<String> = values.iter().map(|v| format!("{v:.2}")).collect();
        let widths: Vec<usize> = headers.iter().zip(&cells).map(|(h, c)| h.len().max(c.len())).collect();
        let row = |items: &[String]| {
            items
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        format!("{}\n{}\n", row(&headers), row(&cells))
    }

    /// `class_id,recall,precision` rows at IoU 0.5.
    pub fn pr_csv(&self) -> String {
        let mut out = String::from("class_id,recall,precision\n");
        for (c, pts) in &self.pr_curves {
            for (r, p) in pts {
                out.push_str(&format!("{c},{r},{p}\n"));
            }
        }
        out
    }
}

fn check_classes(dets: &DetectionSet, gts: &GroundTruthSet) -> Result<()> {
    for (img, ds) in dets {
        if !gts.images.contains_key(img) {
            return Err(Error::Parse {
                path: img.clone(),
                line: 0,
                reason: "detections for an image with no ground-truth entry".into(),
            });
        }
        if let Some(d) = ds.iter().find(|d| !gts.categories.contains(&d.class_id)) {
            return Err(Error::UnknownClass {
                image_id: img.clone(),
                class_id: d.class_id,
            });
        }
    }
    for (img, gs) in &gts.images {
        if let Some(g) = gs.iter().find(|g| !g.ignore && !gts.categories.contains(&g.class_id)) {
            return Err(Error::UnknownClass {
                image_id: img.clone(),
                class_id: g.class_id,
            });
        }
    }
    Ok(())
}

/// Overlap of detection `d` with ground truth `g`; ignore regions use the
/// detection's area as denominator.
fn match_iou(d: &BBox, g: &GtBox) -> f64 {
    if g.ignore {
        let da = area(d);
        if da <= 0.0 {
            return 0.0;
        }
        intersect(d, &g.bbox).map_or(0.0, |i| area(&i) / da)
    } else {
        iou(d, &g.bbox)
    }
}

/// Ignore regions labelled with a class outside the category set (VisDrone's
/// "ignored regions") apply to every class.
fn applies_to(g: &GtBox, class_id: u32, categories: &BTreeSet<u32>) -> bool {
    g.class_id == class_id || (g.ignore && !categories.contains(&g.class_id))
}

/// Matching outcome for one (image, class, area range).
struct ImageEval {
    scores: Vec<f64>,
    /// `[threshold][det]`
    matched: Vec<Vec<bool>>,
    ignored: Vec<Vec<bool>>,
    num_gt: usize,
}

fn evaluate_image(
    dets: &[ScoredBox],
    gts: &[GtBox],
    categories: &BTreeSet<u32>,
    class_id: u32,
    range: AreaRange,
    max_dets: usize,
    thresholds: &[f64],
) -> ImageEval {
    let mut gt: Vec<(GtBox, bool)> = gts
        .iter()
        .filter(|g| applies_to(g, class_id, categories))
        .map(|g| (*g, g.ignore || range.excludes(area(&g.bbox))))
        .collect();
    // stable: non-ignored first
    gt.sort_by_key(|(_, ig)| *ig);

    let mut dt: Vec<ScoredBox> = dets.iter().filter(|d| d.class_id == class_id).copied().collect();
    dt.sort_by(|a, b| b.score.total_cmp(&a.score));
    dt.truncate(max_dets);

    let ious: Vec<Vec<f64>> = dt
        .iter()
        .map(|d| gt.iter().map(|(g, _)| match_iou(&d.bbox, g)).collect())
        .collect();

    let mut matched = vec![vec![false; dt.len()]; thresholds.len()];
    let mut ignored = vec![vec![false; dt.len()]; thresholds.len()];
    for (ti, &t) in thresholds.iter().enumerate() {
        let mut gt_taken = vec![false; gt.len()];
        for di in 0..dt.len() {
            let mut best = t.min(1.0 - 1e-10);
            let mut m: Option<usize> = None;
            for gi in 0..gt.len() {
                let (g, g_ig) = &gt[gi];
                if gt_taken[gi] && !g.ignore {
                    continue;
                }
                if let Some(mi) = m {
                    if !gt[mi].1 && *g_ig {
                        break;
                    }
                }
                if ious[di][gi] < best {
                    continue;
                }
                best = ious[di][gi];
                m = Some(gi);
            }
            match m {
                Some(gi) => {
                    matched[ti][di] = true;
                    ignored[ti][di] = gt[gi].1;
                    gt_taken[gi] = true;
                }
                None => ignored[ti][di] = range.excludes(area(&dt[di].bbox)),
            }
        }
    }
    ImageEval {
        scores: dt.iter().map(|d| d.score).collect(),
        matched,
        ignored,
        num_gt: gt.iter().filter(|(_, ig)| !ig).count(),
    }
}

/// Interpolated precision at 101 recall points, plus the (recall, precision)
/// curve. `None` when there is no eligible ground truth.
fn accumulate(evals: &[ImageEval], ti: usize, max_dets: usize) -> Option<(Vec<f64>, Vec<(f64, f64)>)> {
    let num_gt: usize = evals.iter().map(|e| e.num_gt).sum();
    if num_gt == 0 {
        return None;
    }
    let mut rows: Vec<(f64, bool, bool)> = Vec::new();
    for e in evals {
        for d in 0..e.scores.len().min(max_dets) {
            rows.push((e.scores[d], e.matched[ti][d], e.ignored[ti][d]));
        }
    }
    // stable sort on descending score keeps image order among ties
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    for (_, m, ig) in rows {
        if ig {
            continue;
        }
        if m {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        recall.push(tp / num_gt as f64);
        precision.push(tp / (tp + fp));
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let q: Vec<f64> = (0..RECALL_POINTS)
        .map(|r| {
            let target = r as f64 / (RECALL_POINTS - 1) as f64;
            let idx = recall.partition_point(|&rc| rc < target);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .collect();
    Some((q, recall.into_iter().zip(precision).collect()))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// COCO-style evaluation.
pub fn coco_eval(dets: &DetectionSet, gts: &GroundTruthSet, max_dets: usize) -> Result<EvalReport> {
    if max_dets == 0 {
        return Err(Error::Config("max_dets must be >= 1".into()));
    }
    check_classes(dets, gts)?;
    let thresholds = coco_iou_thresholds();
    let none: Vec<ScoredBox> = Vec::new();
    let classes: Vec<u32> = gts.categories.iter().copied().collect();

    // ap[(class, range)] = per-threshold AP (None when no eligible GT)
    let cells: Vec<((u32, AreaRange), Vec<Option<f64>>, Option<Vec<(f64, f64)>>)> = classes
        .par_iter()
        .flat_map_iter(|&c| AreaRange::ALL.into_iter().map(move |r| (c, r)))
        .map(|(c, r)| {
            let evals: Vec<ImageEval> = gts
                .images
                .iter()
                .map(|(img, g)| {
                    let d = dets.get(img).unwrap_or(&none);
                    evaluate_image(d, g, &gts.categories, c, r, max_dets, &thresholds)
                })
                .collect();
            let mut curve = None;
            let aps = (0..thresholds.len())
                .map(|ti| {
                    accumulate(&evals, ti, max_dets).map(|(q, pts)| {
                        if ti == 0 && r == AreaRange::All {
                            curve = Some(pts);
                        }
                        mean(&q).unwrap_or(0.0)
                    })
                })
                .collect();
            ((c, r), aps, curve)
        })
        .collect();

    let collect = |range: AreaRange, ti: Option<usize>| -> Vec<f64> {
        cells
            .iter()
            .filter(|((_, r), _, _)| *r == range)
            .flat_map(|(_, aps, _)| match ti {
                Some(t) => vec![aps[t]],
                None => aps.clone(),
            })
            .flatten()
            .collect()
    };

    let mut undefined = Vec::new();
    let mut metric = |name: &str, v: Vec<f64>| match mean(&v) {
        Some(m) => 100.0 * m,
        None => {
            undefined.push(name.to_string());
            0.0
        }
    };
    let ap = metric("ap", collect(AreaRange::All, None));
    let ap50 = metric("ap50", collect(AreaRange::All, Some(0)));
    let ap75 = metric("ap75", collect(AreaRange::All, Some(5)));
    let ap_small = metric("ap_small", collect(AreaRange::Small, None));
    let ap_medium = metric("ap_medium", collect(AreaRange::Medium, None));
    let ap_large = metric("ap_large", collect(AreaRange::Large, None));

    let mut per_class_ap50 = BTreeMap::new();
    let mut pr_curves = BTreeMap::new();
    for ((c, r), aps, curve) in &cells {
        if *r != AreaRange::All {
            continue;
        }
        if let Some(v) = aps[0] {
            per_class_ap50.insert(*c, 100.0 * v);
        }
        if let Some(pts) = curve {
            pr_curves.insert(*c, pts.clone());
        }
    }
    let any_gt = gts.images.values().flatten().any(|g| !g.ignore);
    let any_det = dets.values().any(|d| !d.is_empty());
    Ok(EvalReport {
        ap,
        ap50,
        ap75,
        ap_small,
        ap_medium,
        ap_large,
        per_class_ap50,
        undefined,
        empty: !any_gt && !any_det,
        voc: None,
        pr_curves,
    })
}

/// All-point interpolated VOC AP (percentage) at `iou_threshold`.
///
/// With `merge_classes` every class is folded into one category; otherwise
/// the result is the mean over classes that have ground truth.
pub fn voc_ap_at(dets: &DetectionSet, gts: &GroundTruthSet, iou_threshold: f64, merge_classes: bool) -> Result<f64> {
    check_classes(dets, gts)?;
    let none: Vec<ScoredBox> = Vec::new();
    let class_of = |c: u32| if merge_classes { 0 } else { c };
    let classes: BTreeSet<u32> = gts.categories.iter().map(|&c| class_of(c)).collect();
    let mut aps = Vec::new();
    for &c in &classes {
        let mut rows: Vec<(f64, &str, BBox)> = Vec::new();
        let mut gt_by_img: BTreeMap<&str, Vec<GtBox>> = BTreeMap::new();
        let mut npos = 0usize;
        for (img, gs) in &gts.images {
            let g: Vec<GtBox> = gs
                .iter()
                .filter(|g| {
                    class_of(g.class_id) == c || (g.ignore && !gts.categories.contains(&g.class_id))
                })
                .copied()
                .collect();
            npos += g.iter().filter(|g| !g.ignore).count();
            gt_by_img.insert(img, g);
            for d in dets.get(img).unwrap_or(&none) {
                if class_of(d.class_id) == c {
                    rows.push((d.score, img, d.bbox));
                }
            }
        }
        if npos == 0 {
            continue;
        }
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut taken: BTreeMap<&str, Vec<bool>> =
            gt_by_img.iter().map(|(k, v)| (*k, vec![false; v.len()])).collect();
        let (mut tp, mut fp) = (0.0, 0.0);
        let mut rec = Vec::new();
        let mut prec = Vec::new();
        for (_, img, b) in rows {
            let g = &gt_by_img[img];
            let mut best = f64::NEG_INFINITY;
            let mut arg = None;
            for (gi, gt) in g.iter().enumerate() {
                let o = iou(&b, &gt.bbox);
                if o > best {
                    best = o;
                    arg = Some(gi);
                }
            }
            match arg {
                Some(gi) if best >= iou_threshold => {
                    if g[gi].ignore {
                        continue;
                    }
                    let t = taken.get_mut(img).expect("image present");
                    if t[gi] {
                        fp += 1.0;
                    } else {
                        t[gi] = true;
                        tp += 1.0;
                    }
                }
                _ => fp += 1.0,
            }
            rec.push(tp / npos as f64);
            prec.push(tp / (tp + fp));
        }
        aps.push(all_point_ap(&rec, &prec));
    }
    Ok(100.0 * mean(&aps).unwrap_or(0.0))
}

/// Area under the precision envelope of a (recall, precision) sequence.
fn all_point_ap(rec: &[f64], prec: &[f64]) -> f64 {
    let mut mrec = Vec::with_capacity(rec.len() + 2);
    mrec.push(0.0);
    mrec.extend_from_slice(rec);
    mrec.push(1.0);
    let mut mpre = Vec::with_capacity(prec.len() + 2);
    mpre.push(0.0);
    mpre.extend_from_slice(prec);
    mpre.push(0.0);
    for i in (0..mpre.len() - 1).rev() {
        mpre[i] = mpre[i].max(mpre[i + 1]);
    }
    (1..mrec.len())
        .filter(|&i| mrec[i] != mrec[i - 1])
        .map(|i| (mrec[i] - mrec[i - 1]) * mpre[i])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn gt(b: BBox, c: u32) -> GtBox {
        GtBox {
            bbox: b,
            class_id: c,
            ignore: false,
        }
    }

    fn det(b: BBox, c: u32, s: f64) -> ScoredBox {
        ScoredBox::new(b, c, s).unwrap()
    }

    fn one_image(g: Vec<GtBox>, d: Vec<ScoredBox>) -> (DetectionSet, GroundTruthSet) {
        let gts = GroundTruthSet::from_images([("a".to_string(), g)].into());
        (BTreeMap::from([("a".to_string(), d)]), gts)
    }

    #[test]
    fn perfect_detection() {
        let b = bx(10., 10., 50., 50.);
        let (d, g) = one_image(vec![gt(b, 1)], vec![det(b, 1, 0.9)]);
        let r = coco_eval(&d, &g, 100).unwrap();
        assert_eq!(r.ap, 100.0);
        assert_eq!(r.ap50, 100.0);
        assert_eq!(r.ap_medium, 100.0);
        assert_eq!(r.undefined, vec!["ap_small".to_string(), "ap_large".to_string()]);
        assert_eq!(voc_ap_at(&d, &g, 0.7, true).unwrap(), 100.0);
    }

    #[test]
    fn threshold_semantics() {
        // 80 wide, shifted by 20: overlap 600 over union 1000
        let g0 = bx(0., 0., 80., 10.);
        let d0 = bx(20., 0., 100., 10.);
        assert!((iou(&g0, &d0) - 0.6).abs() < 1e-12);
        let (d, g) = one_image(vec![gt(g0, 1)], vec![det(d0, 1, 0.9)]);
        let r = coco_eval(&d, &g, 100).unwrap();
        assert_eq!(r.ap50, 100.0);
        assert_eq!(r.ap75, 0.0);

        // IoU 2/3: thresholds 0.50..0.65 hit, 0.70..0.95 miss
        let d1 = bx(16., 0., 96., 10.);
        let (d, g) = one_image(vec![gt(g0, 1)], vec![det(d1, 1, 0.9)]);
        let r = coco_eval(&d, &g, 100).unwrap();
        assert!((r.ap - 40.0).abs() < 1e-9);
    }

    #[test]
    fn no_detections() {
        let (d, g) = one_image(vec![gt(bx(0., 0., 10., 10.), 1)], vec![]);
        assert_eq!(voc_ap_at(&d, &g, 0.7, true).unwrap(), 0.0);
        assert_eq!(coco_eval(&d, &g, 100).unwrap().ap, 0.0);
    }

    #[test]
    fn empty_everything() {
        let g = GroundTruthSet::from_images([("a".to_string(), vec![])].into());
        let r = coco_eval(&BTreeMap::new(), &g, 100).unwrap();
        assert!(r.empty);
        assert_eq!(r.ap, 0.0);
    }

    #[test]
    fn unknown_class_is_an_error() {
        let (d, g) = one_image(vec![gt(bx(0., 0., 10., 10.), 1)], vec![det(bx(0., 0., 10., 10.), 9, 0.5)]);
        assert!(matches!(coco_eval(&d, &g, 100), Err(Error::UnknownClass { class_id: 9, .. })));
        assert!(voc_ap_at(&d, &g, 0.7, false).is_err());
    }

    #[test]
    fn ignore_region_absorbs_detections() {
        let target = bx(0., 0., 20., 20.);
        let region = GtBox {
            bbox: bx(100., 100., 300., 300.),
            class_id: 1,
            ignore: true,
        };
        let dets = vec![
            det(bx(120., 120., 130., 130.), 1, 0.95),
            det(bx(150., 150., 160., 170.), 1, 0.94),
            det(target, 1, 0.5),
        ];
        let (d, g) = one_image(vec![gt(target, 1), region], dets);
        let r = coco_eval(&d, &g, 100).unwrap();
        assert_eq!(r.ap, 100.0);
    }

    #[test]
    fn duplicate_and_false_positive_monotonicity() {
        let b = bx(0., 0., 40., 40.);
        let c = bx(100., 100., 130., 140.);
        let base = vec![det(b, 1, 0.9), det(c, 1, 0.6), det(bx(300., 300., 320., 320.), 1, 0.7)];
        let (d, g) = one_image(vec![gt(b, 1), gt(c, 1)], base.clone());
        let r0 = coco_eval(&d, &g, 100).unwrap();

        let mut dup = base.clone();
        dup.push(det(b, 1, 0.8));
        let (d1, _) = one_image(vec![], dup);
        let r1 = coco_eval(&d1, &g, 100).unwrap();
        assert!(r1.ap <= r0.ap && r1.ap50 <= r0.ap50);

        let (d2, _) = one_image(vec![], base[..2].to_vec());
        let r2 = coco_eval(&d2, &g, 100).unwrap();
        assert!(r2.ap >= r0.ap && r2.ap50 >= r0.ap50);
        assert!(r0.ap50 >= r0.ap75 && r0.ap50 >= r0.ap);
    }

    #[test]
    fn max_dets_truncates_per_image() {
        let b = bx(0., 0., 40., 40.);
        let fp = det(bx(200., 200., 240., 240.), 1, 0.9);
        let (d, g) = one_image(vec![gt(b, 1)], vec![fp, det(b, 1, 0.5)]);
        assert_eq!(coco_eval(&d, &g, 1).unwrap().ap50, 0.0);
        assert!(coco_eval(&d, &g, 2).unwrap().ap50 > 0.0);
    }

    #[test]
    fn voc_all_point_interpolation() {
        // TP, FP, TP over 2 GT: recall .5 @ p 1, recall 1 @ p 2/3
        let a = bx(0., 0., 10., 10.);
        let b = bx(50., 50., 60., 60.);
        let (d, g) = one_image(
            vec![gt(a, 1), gt(b, 1)],
            vec![det(a, 1, 0.9), det(bx(200., 0., 210., 10.), 1, 0.8), det(b, 1, 0.7)],
        );
        let ap = voc_ap_at(&d, &g, 0.7, false).unwrap();
        assert!((ap - 100.0 * (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn table_and_csv() {
        let b = bx(10., 10., 50., 50.);
        let (d, g) = one_image(vec![gt(b, 4)], vec![det(b, 4, 0.9)]);
        let r = coco_eval(&d, &g, 100).unwrap();
        let names = BTreeMap::from([(4, "car".to_string())]);
        let t = r.to_table(&names);
        assert!(t.lines().next().unwrap().trim_end().ends_with("car"));
        assert!(t.contains("100.00"));
        assert!(r.pr_csv().starts_with("class_id,recall,precision\n4,1,"));
    }
}
