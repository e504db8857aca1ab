//! Box clustering with a Gaussian mixture.
//!
//! Each ground-truth box becomes a vector of offsets from a fixed grid of
//! image points to the box center. A diagonal-covariance mixture is fit to
//! those vectors by expectation maximization and every box is assigned to the
//! component with the largest posterior.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boxgeom::BBox;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Below this every `weight * density` is zero in `f64`.
const LN_MIN_POSITIVE: f64 = -708.396_418_532_264_1;

/// Number of clusters for an image with `n_gt` boxes: `floor(log2 n_gt) + 2`,
/// never more than `n_gt`.
pub fn num_focal_regions(n_gt: usize) -> Result<usize> {
    if n_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let log2 = (usize::BITS - 1 - n_gt.leading_zeros()) as usize;
    Ok((log2 + 2).min(n_gt))
}

/// Evenly sampled reference points over an image.
///
/// Point `(r, c)` sits at `((c + 0.5) / cols * width, (r + 0.5) / rows * height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrid {
    pub rows: usize,
    pub cols: usize,
    pub image_width: f64,
    pub image_height: f64,
}

impl FeatureGrid {
    pub const DEFAULT_ROWS: usize = 4;
    pub const DEFAULT_COLS: usize = 4;

    pub fn new(rows: usize, cols: usize, image_width: f64, image_height: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!("grid must be at least 1x1, got {rows}x{cols}")));
        }
        if !(image_width > 0.0 && image_height > 0.0 && image_width.is_finite() && image_height.is_finite()) {
            return Err(Error::Config(format!(
                "grid image size must be positive, got {image_width}x{image_height}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            image_width,
            image_height,
        })
    }

    /// Feature length `2 * rows * cols`.
    pub fn dim(&self) -> usize {
        2 * self.rows * self.cols
    }

    /// Grid points in row-major order.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (0..self.cols).map(move |c| {
                (
                    (c as f64 + 0.5) / self.cols as f64 * self.image_width,
                    (r as f64 + 0.5) / self.rows as f64 * self.image_height,
                )
            })
        })
    }
}

/// Concatenated `(dx, dy)` offsets from every grid point to a box center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// One feature vector per box; pair `k` is `(cx - gx_k, cy - gy_k)`.
pub fn featurize(boxes: &[BBox], grid: &FeatureGrid) -> Vec<FeatureVector> {
    let points: Vec<(f64, f64)> = grid.points().collect();
    boxes
        .iter()
        .map(|b| {
            let (cx, cy) = b.center();
            let mut v = Vec::with_capacity(2 * points.len());
            for &(gx, gy) in &points {
                v.push(cx - gx);
                v.push(cy - gy);
            }
            FeatureVector(v)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Absolute change in total log-likelihood that ends a run.
    pub tolerance: f64,
    /// Lower bound on every per-dimension variance.
    pub covariance_floor: f64,
    pub rng_seed: u64,
    pub restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-4,
            covariance_floor: 1.0,
            rng_seed: 0,
            restarts: 3,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be > 0".into()));
        }
        if !(self.covariance_floor > 0.0) {
            return Err(Error::Config("covariance_floor must be > 0".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gaussian mixture with diagonal covariances.
///
/// JSON layout:
/// `{"weights": [..k], "means": [[..M]; k], "variances": [[..M]; k],
///   "log_likelihood": f64 | absent, "grid": {rows, cols, image_width, image_height} | absent}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    /// Training log-likelihood of the fit that produced the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<FeatureGrid>,
}

impl MixtureModel {
    /// Builds a model, normalizing `weights` to sum to one.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::Mixture(format!(
                "component count mismatch: {} weights, {} means, {} variances",
                k,
                means.len(),
                variances.len()
            )));
        }
        let dim = means[0].len();
        for (m, v) in means.iter().zip(&variances) {
            if m.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: m.len() });
            }
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
            }
            if v.iter().any(|&s| !(s > 0.0 && s.is_finite())) || m.iter().any(|x| !x.is_finite()) {
                return Err(Error::Mixture("means must be finite and variances positive".into()));
            }
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Mixture("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Mixture("weights sum to zero".into()));
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            means,
            variances,
            log_likelihood: None,
            grid: None,
        })
    }

    pub fn with_grid(mut self, grid: FeatureGrid) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// `ln N(x | mu_j, diag(var_j))`.
    pub fn component_log_density(&self, j: usize, x: &[f64]) -> f64 {
        diag_log_density(x, &self.means[j], &self.variances[j])
    }
}

fn diag_log_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&xi, &mi), &vi) in x.iter().zip(mean).zip(var) {
        let d = xi - mi;
        acc += LN_2PI + vi.ln() + d * d / vi;
    }
    -0.5 * acc
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Trace of one EM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmRun {
    /// Total log-likelihood at the initial parameters and after every M-step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: MixtureModel,
    pub runs: Vec<EmRun>,
    /// Index into `runs` of the run that produced `model`.
    pub best_run: usize,
}

/// Fits a `k`-component mixture by EM, keeping the best of `cfg.restarts` runs.
pub fn fit_em(features: &[FeatureVector], k: usize, cfg: &EmConfig) -> Result<MixtureModel> {
    fit_em_traced(features, k, cfg).map(|f| f.model)
}

/// [`fit_em`] that also returns the log-likelihood trace of every restart.
pub fn fit_em_traced(features: &[FeatureVector], k: usize, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::Mixture("k must be >= 1".into()));
    }
    if features.len() < k {
        return Err(Error::Mixture(format!(
            "{} components requested for {} samples",
            k,
            features.len()
        )));
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(Error::Mixture("zero-length features".into()));
    }
    for f in features {
        if f.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: f.len() });
        }
        if f.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Mixture("non-finite feature value".into()));
        }
    }
    let data: Vec<&[f64]> = features.iter().map(FeatureVector::as_slice).collect();
    let global_var = global_variance(&data, cfg.covariance_floor);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<(MixtureModel, usize)> = None;
    let mut runs = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let means = kmeanspp_seeds(&data, k, &mut rng);
        let state = EmState {
            weights: vec![1.0 / k as f64; k],
            means,
            variances: vec![global_var.clone(); k],
        };
        let (state, run) = run_em(&data, state, cfg);
        let ll = *run.log_likelihood.last().expect("trace is never empty");
        runs.push(run);
        let better = match &best {
            None => true,
            Some((m, _)) => m.log_likelihood.is_none_or(|best| ll > best),
        };
        if better {
            let model = MixtureModel {
                weights: state.weights,
                means: state.means,
                variances: state.variances,
                log_likelihood: Some(ll),
                grid: None,
            };
            best = Some((model, r));
        }
    }
    let (model, best_run) = best.expect("restarts >= 1");
    Ok(EmFit {
        model,
        runs,
        best_run,
    })
}

struct EmState {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

fn global_variance(data: &[&[f64]], floor: f64) -> Vec<f64> {
    let n = data.len() as f64;
    let dim = data[0].len();
    let mut mean = vec![0.0; dim];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for x in data {
        for ((s, v), m) in var.iter_mut().zip(x.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.into_iter().map(|s| (s / n).max(floor)).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance to the nearest chosen center.
fn kmeanspp_seeds(data: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data[idx].to_vec();
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x, &c));
        }
        centers.push(c);
    }
    centers
}

/// E-step: fills `resp` with responsibilities, returns total log-likelihood.
fn e_step(data: &[&[f64]], s: &EmState, resp: &mut [Vec<f64>]) -> f64 {
    let k = s.weights.len();
    let log_w: Vec<f64> = s.weights.iter().map(|w| w.ln()).collect();
    let mut total = 0.0;
    let mut buf = vec![0.0; k];
    for (x, r) in data.iter().zip(resp.iter_mut()) {
        for j in 0..k {
            buf[j] = log_w[j] + diag_log_density(x, &s.means[j], &s.variances[j]);
        }
        let lse = log_sum_exp(&buf);
        total += lse;
        for j in 0..k {
            r[j] = (buf[j] - lse).exp();
        }
    }
    total
}

fn m_step(data: &[&[f64]], s: &mut EmState, resp: &[Vec<f64>], floor: f64) {
    let n = data.len() as f64;
    let dim = data[0].len();
    for j in 0..s.weights.len() {
        let nj: f64 = resp.iter().map(|r| r[j]).sum();
        s.weights[j] = nj / n;
        // An empty component keeps its previous location and spread.
        if nj <= f64::MIN_POSITIVE * 1e10 {
            continue;
        }
        let mut mean = vec![0.0; dim];
        for (x, r) in data.iter().zip(resp) {
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += r[j] * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nj);
        let mut var = vec![0.0; dim];
        for (x, r) in data.iter().zip(resp) {
            for ((s2, v), m) in var.iter_mut().zip(x.iter()).zip(&mean) {
                *s2 += r[j] * (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|v| *v = (*v / nj).max(floor));
        s.means[j] = mean;
        s.variances[j] = var;
    }
    let total: f64 = s.weights.iter().sum();
    s.weights.iter_mut().for_each(|w| *w /= total);
}

fn run_em(data: &[&[f64]], mut state: EmState, cfg: &EmConfig) -> (EmState, EmRun) {
    let k = state.weights.len();
    let mut resp = vec![vec![0.0; k]; data.len()];
    let mut ll = e_step(data, &state, &mut resp);
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        m_step(data, &mut state, &resp, cfg.covariance_floor);
        let next = e_step(data, &state, &mut resp);
        trace.push(next);
        let delta = (next - ll).abs();
        ll = next;
        if delta < cfg.tolerance {
            converged = true;
            break;
        }
    }
    (
        state,
        EmRun {
            log_likelihood: trace,
            converged,
        },
    )
}

/// Cluster membership probabilities for one feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub probs: Vec<f64>,
    /// Every weighted component density underflowed; `probs` is one-hot on
    /// the nearest mean (Euclidean).
    pub fallback: bool,
}

impl Posterior {
    /// Most probable component; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// `phi_i N(x | mu_i, Sigma_i) / sum_j phi_j N(x | mu_j, Sigma_j)`.
pub fn posterior(model: &MixtureModel, x: &FeatureVector) -> Result<Posterior> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    let k = model.num_components();
    let logs: Vec<f64> = (0..k)
        .map(|j| model.weights[j].ln() + model.component_log_density(j, x.as_slice()))
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || max < LN_MIN_POSITIVE {
        let mut nearest = 0;
        let mut best = f64::INFINITY;
        for (j, m) in model.means.iter().enumerate() {
            let d = sq_dist(x.as_slice(), m);
            if d < best {
                best = d;
                nearest = j;
            }
        }
        let mut probs = vec![0.0; k];
        probs[nearest] = 1.0;
        return Ok(Posterior {
            probs,
            fallback: true,
        });
    }
    let lse = log_sum_exp(&logs);
    let mut probs: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(Posterior {
        probs,
        fallback: false,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    /// How many boxes went through the nearest-mean fallback.
    pub fallbacks: usize,
}

/// Posterior argmax per feature vector.
pub fn assign_clusters(model: &MixtureModel, features: &[FeatureVector]) -> Result<Assignment> {
    let mut labels = Vec::with_capacity(features.len());
    let mut fallbacks = 0;
    for x in features {
        let p = posterior(model, x)?;
        fallbacks += usize::from(p.fallback);
        labels.push(p.argmax());
    }
    Ok(Assignment { labels, fallbacks })
}

/// Featurize, fit with `num_focal_regions(boxes.len())` components, assign.
///
/// Returns the fitted model (tagged with its grid) and one label per box.
pub fn cluster_boxes(
    boxes: &[BBox],
    grid: &FeatureGrid,
    cfg: &EmConfig,
) -> Result<(MixtureModel, Assignment)> {
    let k = num_focal_regions(boxes.len())?;
    let features = featurize(boxes, grid);
    let model = fit_em(&features, k, cfg)?.with_grid(*grid);
    let assignment = assign_clusters(&model, &features)?;
    Ok((model, assignment))
}
