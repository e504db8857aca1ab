//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use focusdet::evalkit::{DetectionSet, GroundTruthSet, GtBox};
use focusdet::{BBox, ScoredBox};
use rand::Rng;

/// Integer box as a set of unit pixels `[x1, x2) x [y1, y2)`.
pub fn pixels(b: &BBox) -> BTreeSet<(i64, i64)> {
    let mut s = BTreeSet::new();
    for x in b.x1 as i64..b.x2 as i64 {
        for y in b.y1 as i64..b.y2 as i64 {
            s.insert((x, y));
        }
    }
    s
}

/// Bounding rectangle of a pixel set, `None` if empty.
pub fn pixel_rect(s: &BTreeSet<(i64, i64)>) -> Option<BBox> {
    if s.is_empty() {
        return None;
    }
    let x1 = s.iter().map(|p| p.0).min().unwrap();
    let x2 = s.iter().map(|p| p.0).max().unwrap() + 1;
    let y1 = s.iter().map(|p| p.1).min().unwrap();
    let y2 = s.iter().map(|p| p.1).max().unwrap() + 1;
    Some(BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64).unwrap())
}

pub fn pixel_iou(a: &BBox, b: &BBox) -> f64 {
    let (pa, pb) = (pixels(a), pixels(b));
    let inter = pa.intersection(&pb).count();
    let union = pa.union(&pb).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Pixel counts of `a`, `b` and their overlap, plus the overlap's bounding
/// rectangle, by visiting every pixel of `a`.
pub fn pixel_overlap(a: &BBox, b: &BBox) -> (usize, usize, usize, Option<BBox>) {
    let inside = |r: &BBox, x: i64, y: i64| (x as f64) >= r.x1 && ((x + 1) as f64) <= r.x2 && (y as f64) >= r.y1 && ((y + 1) as f64) <= r.y2;
    let (mut n, mut inter) = (0usize, 0usize);
    let (mut x1, mut y1, mut x2, mut y2) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for x in a.x1 as i64..a.x2 as i64 {
        for y in a.y1 as i64..a.y2 as i64 {
            n += 1;
            if inside(b, x, y) {
                inter += 1;
                x1 = x1.min(x);
                y1 = y1.min(y);
                x2 = x2.max(x + 1);
                y2 = y2.max(y + 1);
            }
        }
    }
    let mut nb = 0usize;
    for _ in b.x1 as i64..b.x2 as i64 {
        for _ in b.y1 as i64..b.y2 as i64 {
            nb += 1;
        }
    }
    let rect = (inter > 0).then(|| BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64).unwrap());
    (n, nb, inter, rect)
}

pub fn random_int_box<R: Rng>(rng: &mut R, extent: i64, max_side: i64) -> BBox {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let x = rng.random_range(0..extent);
    let y = rng.random_range(0..extent);
    BBox::from_xywh(x as f64, y as f64, w as f64, h as f64).unwrap()
}

/// Textbook NMS: repeatedly take the best remaining box and discard every
/// remaining box overlapping it above the threshold.
pub fn nms_reference(boxes: &[ScoredBox], thr: f64, per_class: bool) -> Vec<usize> {
    let n = boxes.len();
    let mut iou = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            iou[i][j] = focusdet::boxgeom::iou(&boxes[i].bbox, &boxes[j].bbox);
        }
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for p in 1..remaining.len() {
            let (i, b) = (remaining[p], remaining[best]);
            if boxes[i].score > boxes[b].score {
                best = p;
            }
        }
        let k = remaining.remove(best);
        kept.push(k);
        remaining.retain(|&i| {
            let same = !per_class || boxes[i].class_id == boxes[k].class_id;
            !(same && iou[k][i] > thr)
        });
    }
    kept
}

const AREA_BOUNDS: [(f64, f64); 4] = [
    (0.0, 1e10),
    (0.0, 1024.0),
    (1024.0, 9216.0),
    (9216.0, 1e10),
];

fn overlap(d: &BBox, g: &GtBox) -> f64 {
    let ix = (d.x2.min(g.bbox.x2) - d.x1.max(g.bbox.x1)).max(0.0);
    let iy = (d.y2.min(g.bbox.y2) - d.y1.max(g.bbox.y1)).max(0.0);
    let inter = ix * iy;
    let da = (d.x2 - d.x1) * (d.y2 - d.y1);
    let ga = (g.bbox.x2 - g.bbox.x1) * (g.bbox.y2 - g.bbox.y1);
    let denom = if g.ignore { da } else { da + ga - inter };
    if denom <= 0.0 {
        0.0
    } else {
        inter / denom
    }
}

/// Per-class, per-range, per-threshold AP as fractions; `None` for cells
/// without eligible ground truth.
fn coco_cell(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    class: u32,
    (lo, hi): (f64, f64),
    thr: f64,
    max_dets: usize,
) -> Option<f64> {
    let mut pool: Vec<(f64, bool)> = Vec::new(); // (score, is_tp) for non-ignored dets
    let mut npos = 0usize;
    let empty = Vec::new();
    for (img, all_g) in &gts.images {
        let g: Vec<&GtBox> = all_g
            .iter()
            .filter(|g| g.class_id == class || (g.ignore && !gts.categories.contains(&g.class_id)))
            .collect();
        let out_of_range = |a: f64| a < lo || a > hi;
        let g_ignored: Vec<bool> = g.iter().map(|g| g.ignore || out_of_range(g.bbox.area())).collect();
        npos += g_ignored.iter().filter(|i| !**i).count();

        let mut d: Vec<&ScoredBox> = dets.get(img).unwrap_or(&empty).iter().filter(|d| d.class_id == class).collect();
        d.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        d.truncate(max_dets);

        let mut used = vec![false; g.len()];
        for det in d {
            // first pass: eligible GT; second pass: ignored GT
            let mut chosen: Option<usize> = None;
            for want_ignored in [false, true] {
                let mut best = thr.min(1.0 - 1e-10);
                for gi in 0..g.len() {
                    if g_ignored[gi] != want_ignored || (used[gi] && !g[gi].ignore) {
                        continue;
                    }
                    let o = overlap(&det.bbox, g[gi]);
                    if o >= best {
                        best = o;
                        chosen = Some(gi);
                    }
                }
                if chosen.is_some() {
                    break;
                }
            }
            match chosen {
                Some(gi) => {
                    used[gi] = true;
                    if !g_ignored[gi] {
                        pool.push((det.score, true));
                    }
                }
                None => {
                    if !out_of_range(det.bbox.area()) {
                        pool.push((det.score, false));
                    }
                }
            }
        }
    }
    if npos == 0 {
        return None;
    }
    // images were visited in id order; a stable sort keeps it among ties
    pool.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, hit) in pool {
        if hit {
            tp += 1
        } else {
            fp += 1
        }
        points.push((tp as f64 / npos as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut total = 0.0;
    for r in 0..=100 {
        let target = r as f64 / 100.0;
        let p = points
            .iter()
            .filter(|(rc, _)| *rc >= target)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        total += p;
    }
    Some(total / 101.0)
}

/// Reference `(ap, ap50, ap75, ap_small, ap_medium, ap_large)` in percent;
/// undefined metrics are 0.
pub fn coco_reference(dets: &DetectionSet, gts: &GroundTruthSet, max_dets: usize) -> [f64; 6] {
    let thresholds: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
    let avg = |range: usize, ts: &[f64]| {
        let mut v = Vec::new();
        for &c in &gts.categories {
            for &t in ts {
                if let Some(a) = coco_cell(dets, gts, c, AREA_BOUNDS[range], t, max_dets) {
                    v.push(a);
                }
            }
        }
        if v.is_empty() {
            0.0
        } else {
            100.0 * v.iter().sum::<f64>() / v.len() as f64
        }
    };
    [
        avg(0, &thresholds),
        avg(0, &[0.5]),
        avg(0, &[0.75]),
        avg(1, &thresholds),
        avg(2, &thresholds),
        avg(3, &thresholds),
    ]
}

/// Reference VOC AP in percent: all-point interpolation, greedy matching to
/// the highest-IoU ground truth, ignored ground truth neither helps nor hurts.
pub fn voc_reference(dets: &DetectionSet, gts: &GroundTruthSet, thr: f64) -> f64 {
    let mut aps = Vec::new();
    let empty = Vec::new();
    for &c in &gts.categories {
        let mut npos = 0;
        let mut rows: Vec<(f64, String, BBox)> = Vec::new();
        let mut per_img: BTreeMap<String, Vec<GtBox>> = BTreeMap::new();
        for (img, g) in &gts.images {
            let g: Vec<GtBox> = g
                .iter()
                .filter(|g| g.class_id == c || (g.ignore && !gts.categories.contains(&g.class_id)))
                .copied()
                .collect();
            npos += g.iter().filter(|g| !g.ignore).count();
            per_img.insert(img.clone(), g);
            for d in dets.get(img).unwrap_or(&empty) {
                if d.class_id == c {
                    rows.push((d.score, img.clone(), d.bbox));
                }
            }
        }
        if npos == 0 {
            continue;
        }
        rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut used: BTreeMap<String, Vec<bool>> = per_img.iter().map(|(k, v)| (k.clone(), vec![false; v.len()])).collect();
        let mut points = Vec::new();
        let (mut tp, mut fp) = (0usize, 0usize);
        for (_, img, b) in rows {
            let g = &per_img[&img];
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in g.iter().enumerate() {
                let o = focusdet::boxgeom::iou(&b, &gt.bbox);
                if best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((gi, o));
                }
            }
            match best {
                Some((gi, o)) if o >= thr => {
                    if g[gi].ignore {
                        continue;
                    }
                    let u = &mut used.get_mut(&img).unwrap()[gi];
                    if *u {
                        fp += 1;
                    } else {
                        *u = true;
                        tp += 1;
                    }
                }
                _ => fp += 1,
            }
            points.push((tp as f64 / npos as f64, tp as f64 / (tp + fp) as f64));
        }
        // area under the "max precision at recall >= r" step function
        let mut ap = 0.0;
        let mut prev_r = 0.0;
        for i in 0..points.len() {
            let r = points[i].0;
            if r > prev_r {
                let p = points[i..].iter().map(|q| q.1).fold(0.0, f64::max);
                ap += (r - prev_r) * p;
                prev_r = r;
            }
        }
        aps.push(ap);
    }
    if aps.is_empty() {
        0.0
    } else {
        100.0 * aps.iter().sum::<f64>() / aps.len() as f64
    }
}

/// Small random evaluation problem: integer boxes, repeated scores,
/// class-specific and class-agnostic ignore regions, near-duplicate
/// detections.
pub fn micro_dataset<R: Rng>(rng: &mut R) -> (DetectionSet, GroundTruthSet) {
    let n_images = rng.random_range(1..=4);
    let n_classes = rng.random_range(1..=3u32);
    let mut images = BTreeMap::new();
    let mut dets = DetectionSet::new();
    for i in 0..n_images {
        let id = format!("img{i}");
        let mut g = Vec::new();
        for _ in 0..rng.random_range(0..=6) {
            g.push(GtBox {
                bbox: random_int_box(rng, 150, 120),
                class_id: rng.random_range(1..=n_classes),
                ignore: false,
            });
        }
        if rng.random_bool(0.3) {
            let agnostic = rng.random_bool(0.5);
            g.push(GtBox {
                bbox: random_int_box(rng, 150, 80),
                class_id: if agnostic { 0 } else { rng.random_range(1..=n_classes) },
                ignore: true,
            });
        }
        let mut d = Vec::new();
        for gt in g.iter().filter(|g| !g.ignore) {
            for _ in 0..rng.random_range(0..=2) {
                let j = |r: &mut R| r.random_range(-8..=8) as f64;
                let b = &gt.bbox;
                let (x1, y1) = (b.x1 + j(rng), b.y1 + j(rng));
                let (x2, y2) = ((b.x2 + j(rng)).max(x1 + 1.0), (b.y2 + j(rng)).max(y1 + 1.0));
                let class_id = if rng.random_bool(0.85) { gt.class_id } else { rng.random_range(1..=n_classes) };
                d.push(ScoredBox::new(BBox::new(x1, y1, x2, y2).unwrap(), class_id, random_score(rng)).unwrap());
            }
        }
        for _ in 0..rng.random_range(0..=4) {
            d.push(ScoredBox::new(random_int_box(rng, 150, 100), rng.random_range(1..=n_classes), random_score(rng)).unwrap());
        }
        images.insert(id.clone(), g);
        dets.insert(id, d);
    }
    let mut gts = GroundTruthSet::from_images(images);
    gts.categories = (1..=n_classes).collect();
    (dets, gts)
}

fn random_score<R: Rng>(rng: &mut R) -> f64 {
    if rng.random_bool(0.3) {
        // coarse grid to force score ties
        rng.random_range(1..=10) as f64 / 10.0
    } else {
        rng.random_range(0.0..1.0)
    }
}
