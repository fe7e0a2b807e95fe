//! Gaussian mixtures fitted by expectation-maximization.
//!
//! Two component families are provided: full-covariance bivariate Gaussians
//! (stay locations in a planar frame) and diagonal Gaussians of any dimension
//! (stay feature vectors). Both M-steps are the exact maximizers under a
//! lower bound on the covariance eigenvalues, so the log-likelihood trace is
//! non-decreasing.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{log_sum_exp, rng_from};

const TAG_EM_INIT: u64 = 0x454d;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GmmError {
    #[error("{components} components requested for {points} points")]
    TooFewPoints { components: usize, points: usize },
    #[error("need at least one component")]
    NoComponents,
    #[error("point has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite value in input")]
    NonFinite,
}

pub trait Component: Clone {
    fn dim(&self) -> usize;
    fn mean(&self) -> &[f64];
    fn log_pdf(&self, x: &[f64]) -> f64;
    /// Maximum-likelihood estimate from weighted points; `None` when the total
    /// weight is negligible.
    fn estimate(points: &[Vec<f64>], weights: &[f64], var_floor: f64) -> Option<Self>;
    /// Free parameters of one component in `dim` dimensions.
    fn parameter_count(dim: usize) -> usize;
    /// Dimension supported by the family, if fixed.
    fn fixed_dim() -> Option<usize> {
        None
    }
}

/// Bivariate Gaussian with full covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    /// Row-major `[[sxx, sxy], [sxy, syy]]`.
    pub cov: [[f64; 2]; 2],
}

/// Eigen-decomposition of a symmetric 2x2 matrix: eigenvalues (descending)
/// and the unit eigenvector of the first.
fn sym_eigen2(m: &[[f64; 2]; 2]) -> ([f64; 2], [f64; 2]) {
    let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
    let half_tr = 0.5 * (a + c);
    let r = libm::hypot(0.5 * (a - c), b);
    let l1 = half_tr + r;
    let l2 = half_tr - r;
    let v = if b.abs() > 1e-300 {
        let (x, y) = (l1 - c, b);
        let n = libm::hypot(x, y);
        [x / n, y / n]
    } else if a >= c {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    ([l1, l2], v)
}

/// Raises every eigenvalue of `m` to at least `floor`, keeping eigenvectors.
/// Matrices already above the floor are returned unchanged.
pub fn floor_eigenvalues(m: [[f64; 2]; 2], floor: f64) -> [[f64; 2]; 2] {
    let ([l1, l2], v) = sym_eigen2(&m);
    if l2 >= floor {
        return m;
    }
    let (l1, l2) = (l1.max(floor), l2.max(floor));
    let w = [-v[1], v[0]];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = l1 * v[i] * v[j] + l2 * w[i] * w[j];
        }
    }
    out[1][0] = out[0][1];
    out
}

impl Gaussian2 {
    pub fn eigenvalues(&self) -> [f64; 2] {
        sym_eigen2(&self.cov).0
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky(&self) -> [[f64; 2]; 2] {
        let l11 = libm::sqrt(self.cov[0][0]);
        let l21 = self.cov[0][1] / l11;
        let l22 = libm::sqrt((self.cov[1][1] - l21 * l21).max(0.0));
        [[l11, 0.0], [l21, l22]]
    }

    /// Maps a standard-normal pair to a draw from this Gaussian.
    pub fn transform_standard(&self, z: [f64; 2]) -> [f64; 2] {
        let l = self.cholesky();
        [
            self.mean[0] + l[0][0] * z[0],
            self.mean[1] + l[1][0] * z[0] + l[1][1] * z[1],
        ]
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        libm::exp(self.log_pdf(x))
    }
}

impl Component for Gaussian2 {
    fn dim(&self) -> usize {
        2
    }

    fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        let [[a, b], [_, c]] = self.cov;
        let det = a * c - b * b;
        let dx = x[0] - self.mean[0];
        let dy = x[1] - self.mean[1];
        let q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        -libm::log(2.0 * PI) - 0.5 * libm::log(det) - 0.5 * q
    }

    fn estimate(points: &[Vec<f64>], weights: &[f64], var_floor: f64) -> Option<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 1e-12) {
            return None;
        }
        let mut mean = [0.0; 2];
        for (p, w) in points.iter().zip(weights) {
            mean[0] += w * p[0];
            mean[1] += w * p[1];
        }
        mean[0] /= total;
        mean[1] /= total;
        let mut cov = [[0.0; 2]; 2];
        for (p, w) in points.iter().zip(weights) {
            let dx = p[0] - mean[0];
            let dy = p[1] - mean[1];
            cov[0][0] += w * dx * dx;
            cov[0][1] += w * dx * dy;
            cov[1][1] += w * dy * dy;
        }
        cov[0][0] /= total;
        cov[0][1] /= total;
        cov[1][1] /= total;
        cov[1][0] = cov[0][1];
        Some(Gaussian2 {
            mean,
            cov: floor_eigenvalues(cov, var_floor),
        })
    }

    fn parameter_count(_dim: usize) -> usize {
        5
    }

    fn fixed_dim() -> Option<usize> {
        Some(2)
    }
}

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Component for DiagGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.var)
            .zip(x)
            .map(|((m, v), xi)| -0.5 * libm::log(2.0 * PI * v) - 0.5 * (xi - m) * (xi - m) / v)
            .sum()
    }

    fn estimate(points: &[Vec<f64>], weights: &[f64], var_floor: f64) -> Option<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 1e-12) {
            return None;
        }
        let d = points[0].len();
        let mut mean = vec![0.0; d];
        for (p, w) in points.iter().zip(weights) {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += w * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut var = vec![0.0; d];
        for (p, w) in points.iter().zip(weights) {
            for ((v, x), m) in var.iter_mut().zip(p).zip(&mean) {
                *v += w * (x - m) * (x - m);
            }
        }
        var.iter_mut().for_each(|v| *v = (*v / total).max(var_floor));
        Some(DiagGaussian { mean, var })
    }

    fn parameter_count(dim: usize) -> usize {
        2 * dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture<C> {
    pub weights: Vec<f64>,
    pub components: Vec<C>,
}

impl<C: Component> Mixture<C> {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `ln w_k + ln N(x; component k)` for every component.
    pub fn joint_log(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| libm::log(*w) + c.log_pdf(x))
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.joint_log(x))
    }

    /// Posterior component probabilities, computed in log space.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let j = self.joint_log(x);
        let lse = log_sum_exp(&j);
        j.iter().map(|v| libm::exp(v - lse)).collect()
    }

    pub fn log_likelihood(&self, points: &[Vec<f64>]) -> f64 {
        points.iter().map(|p| self.log_density(p)).sum()
    }

    /// Index of the component with the highest posterior for `x`.
    pub fn assign(&self, x: &[f64]) -> usize {
        let j = self.joint_log(x);
        (0..j.len()).fold(0, |best, k| if j[k] > j[best] { k } else { best })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub components: usize,
    pub max_iter: usize,
    /// Stop when the log-likelihood gain of an iteration falls below this.
    pub tol: f64,
    pub var_floor: f64,
    pub seed: u64,
}

impl EmOptions {
    pub fn new(components: usize, var_floor: f64, seed: u64) -> Self {
        EmOptions {
            components,
            max_iter: 200,
            tol: 1e-6,
            var_floor,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit<C> {
    pub mixture: Mixture<C>,
    /// Log-likelihood of the initial model followed by one entry per EM
    /// iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl<C> EmFit<C> {
    pub fn log_likelihood(&self) -> f64 {
        *self.trace.last().unwrap_or(&f64::NEG_INFINITY)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: indices of `k` initial centers.
fn kmeans_pp<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let mut centers = vec![rng.random_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[centers[0]])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    centers
}

fn validate(points: &[Vec<f64>], expected: Option<usize>) -> Result<usize, GmmError> {
    let d = expected.unwrap_or_else(|| points.first().map_or(0, |p| p.len()));
    for p in points {
        if p.len() != d {
            return Err(GmmError::Dimension {
                expected: d,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(GmmError::NonFinite);
        }
    }
    Ok(d)
}

/// Fits a mixture by EM from a seeded k-means++ hard initialization.
///
/// When all points coincide the result is a single floored component
/// whatever the requested count.
pub fn fit_em<C: Component>(points: &[Vec<f64>], opts: &EmOptions) -> Result<EmFit<C>, GmmError> {
    if opts.components == 0 {
        return Err(GmmError::NoComponents);
    }
    if opts.components > points.len() {
        return Err(GmmError::TooFewPoints {
            components: opts.components,
            points: points.len(),
        });
    }
    validate(points, C::fixed_dim())?;
    let n = points.len();
    let all_ones = vec![1.0; n];
    let global = C::estimate(points, &all_ones, opts.var_floor).expect("non-empty input");

    if points.iter().all(|p| p == &points[0]) || opts.components == 1 {
        let mixture = Mixture {
            weights: vec![1.0],
            components: vec![global],
        };
        let ll = mixture.log_likelihood(points);
        return Ok(EmFit {
            mixture,
            trace: vec![ll],
            converged: true,
        });
    }

    let m = opts.components;
    let mut rng = rng_from(opts.seed, TAG_EM_INIT);
    let centers = kmeans_pp(points, m, &mut rng);
    let mut resp = vec![vec![0.0; m]; n];
    for (i, p) in points.iter().enumerate() {
        let nearest = (0..m)
            .min_by(|&a, &b| sq_dist(p, &points[centers[a]]).total_cmp(&sq_dist(p, &points[centers[b]])))
            .unwrap();
        resp[i][nearest] = 1.0;
    }
    let mut mixture = Mixture {
        weights: vec![1.0 / m as f64; m],
        components: vec![global.clone(); m],
    };
    m_step(points, &resp, opts.var_floor, &mut mixture);

    let mut ll = e_step(points, &mixture, &mut resp);
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..opts.max_iter {
        m_step(points, &resp, opts.var_floor, &mut mixture);
        let next = e_step(points, &mixture, &mut resp);
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(EmFit {
        mixture,
        trace,
        converged,
    })
}

fn e_step<C: Component>(points: &[Vec<f64>], mixture: &Mixture<C>, resp: &mut [Vec<f64>]) -> f64 {
    let mut ll = 0.0;
    for (p, r) in points.iter().zip(resp.iter_mut()) {
        let j = mixture.joint_log(p);
        let lse = log_sum_exp(&j);
        ll += lse;
        for (rk, jk) in r.iter_mut().zip(&j) {
            *rk = libm::exp(jk - lse);
        }
    }
    ll
}

fn m_step<C: Component>(points: &[Vec<f64>], resp: &[Vec<f64>], var_floor: f64, mixture: &mut Mixture<C>) {
    let n = points.len() as f64;
    let mut col = vec![0.0; points.len()];
    for k in 0..mixture.len() {
        for (c, r) in col.iter_mut().zip(resp) {
            *c = r[k];
        }
        let nk: f64 = col.iter().sum();
        mixture.weights[k] = nk / n;
        if let Some(c) = C::estimate(points, &col, var_floor) {
            mixture.components[k] = c;
        }
    }
}

/// Bayesian information criterion `-2 ln L + p ln n`.
pub fn bic<C: Component>(fit: &EmFit<C>, n: usize, dim: usize) -> f64 {
    let m = fit.mixture.len();
    let p = (m - 1) + m * C::parameter_count(dim);
    -2.0 * fit.log_likelihood() + p as f64 * libm::log(n as f64)
}

/// Fits every component count in `1..=max_components` (capped at the number
/// of points) and keeps the lowest-BIC fit.
pub fn fit_em_bic<C: Component>(
    points: &[Vec<f64>],
    max_components: usize,
    opts: &EmOptions,
) -> Result<EmFit<C>, GmmError> {
    let dim = validate(points, C::fixed_dim())?;
    let upper = max_components.min(points.len()).max(1);
    let mut best: Option<(f64, EmFit<C>)> = None;
    for m in 1..=upper {
        let fit = fit_em::<C>(points, &EmOptions { components: m, ..*opts })?;
        let score = bic(&fit, points.len(), dim);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, fit));
        }
    }
    Ok(best.expect("at least one candidate").1)
}
