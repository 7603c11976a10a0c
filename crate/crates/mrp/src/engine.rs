//! The projection test statistic, its variance estimator, the test
//! decision, population functionals and power formulas.
//!
//! The statistic is an unbiased U-statistic of pairwise curve integrals:
//! within-group pair means plus the cross-group pair mean, all computed in
//! coefficient space against one Gram matrix. Its variance is estimated by
//! the leave-out trace functionals (within-group terms use leave-two-out
//! means, the cross term leave-one-out means), combined as
//! `2/(n(n-1)) itr11 + 2/(m(m-1)) itr22 + 4/(nm) itr12`. The standardized
//! statistic is asymptotically N(0,1) under the null and the test rejects
//! one-sided when it exceeds `z_alpha`.
//!
//! Summation orders are fixed, so results are bit-reproducible regardless
//! of thread count, and the statistic is exactly symmetric in its two
//! panels (cross-group summands are grouped by unordered index pair before
//! accumulation).

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::shared_basis;
use crate::error::{MrpError, Result};
use crate::kernel::{kernel_gram, quad_trace_lhs, sym_frob_dot, KernelGram, ProjectionKernel};
use crate::panel::{CurvePanel, DiscretePanel};
use crate::quad::{integrate2_diag, uniform_spans};
use crate::stats::{normal_cdf, z_alpha};

/// Everything the test produces, in one record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MrpTestResult {
    pub mrp_hat: f64,
    #[serde(rename = "itr11")]
    pub itr11_hat: f64,
    #[serde(rename = "itr22")]
    pub itr22_hat: f64,
    #[serde(rename = "itr12")]
    pub itr12_hat: f64,
    pub sigma2_hat: f64,
    pub q_stat: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "L")]
    pub basis_len: usize,
}

/// Which leave-out trace functional to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItrComponent {
    /// Within the first group (leave-two-out means over X).
    WithinX,
    /// Within the second group (leave-two-out means over Y).
    WithinY,
    /// Between groups (leave-one-out means on each side).
    Between,
}

/// Options for running the test from raw panels.
#[derive(Debug, Clone)]
pub struct TestOptions {
    pub kernel: ProjectionKernel,
    pub alpha: f64,
    pub spline_order: usize,
    pub knot_rate: f64,
    pub quad_order: usize,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            kernel: ProjectionKernel::OrnsteinUhlenbeck { a: 1.0 },
            alpha: 0.05,
            spline_order: 4,
            knot_rate: 0.5,
            quad_order: 16,
        }
    }
}

/// A `p`-dimensional mean function `t -> (mu_1(t), ..., mu_p(t))`.
#[derive(Clone)]
pub struct MeanFunction {
    p: usize,
    f: Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for MeanFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MeanFunction(p = {})", self.p)
    }
}

impl MeanFunction {
    /// Build from an evaluator `(dimension k, t) -> value`, `k` zero-based.
    pub fn from_fn(p: usize, f: impl Fn(usize, f64) -> f64 + Send + Sync + 'static) -> Self {
        MeanFunction { p, f: Arc::new(f) }
    }

    pub fn zero(p: usize) -> Self {
        MeanFunction::from_fn(p, |_, _| 0.0)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn eval(&self, k: usize, t: f64) -> f64 {
        (self.f)(k, t)
    }
}

// ---------------------------------------------------------------------------
// cached pairwise products

/// Per-group cache of the `L x L` coefficient cross-products every pairwise
/// term reads: `diag[j] = X_j^T X_j`, `psum[j] = S^T X_j` with
/// `S = Σ_i X_i`, and the upper triangle `X_i^T X_j` for `i < j`.
struct GroupCache {
    diag: Vec<DMatrix<f64>>,
    psum: Vec<DMatrix<f64>>,
    upper: Vec<DMatrix<f64>>,
    n: usize,
}

impl GroupCache {
    fn build(samples: &[DMatrix<f64>]) -> Self {
        let n = samples.len();
        let mut sum = samples[0].clone();
        for s in &samples[1..] {
            sum += s;
        }
        let diag: Vec<_> = samples.iter().map(|x| x.tr_mul(x)).collect();
        let psum: Vec<_> = samples.iter().map(|x| sum.tr_mul(x)).collect();
        let pair_list: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        let upper: Vec<DMatrix<f64>> = pair_list
            .par_iter()
            .map(|&(i, j)| samples[i].tr_mul(&samples[j]))
            .collect();
        GroupCache {
            diag,
            psum,
            upper,
            n,
        }
    }

    fn upper_idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// `X_k^T X_j` materialized (transposing the cached triangle when
    /// needed).
    fn m_of(&self, k: usize, j: usize) -> DMatrix<f64> {
        if k < j {
            self.upper[self.upper_idx(k, j)].clone()
        } else {
            self.upper[self.upper_idx(j, k)].transpose()
        }
    }
}

/// Cross-group cache: `cross[k][j] = Y_k^T X_j`, `sx_y[k] = S_X^T Y_k`,
/// `sy_x[j] = S_Y^T X_j`.
struct CrossCache {
    cross: Vec<Vec<DMatrix<f64>>>,
    sx_y: Vec<DMatrix<f64>>,
    sy_x: Vec<DMatrix<f64>>,
}

impl CrossCache {
    fn build(xs: &[DMatrix<f64>], ys: &[DMatrix<f64>]) -> Self {
        let sum_of = |ss: &[DMatrix<f64>]| {
            let mut s = ss[0].clone();
            for x in &ss[1..] {
                s += x;
            }
            s
        };
        let sx = sum_of(xs);
        let sy = sum_of(ys);
        let cross: Vec<Vec<DMatrix<f64>>> = ys
            .par_iter()
            .map(|yk| xs.iter().map(|xj| yk.tr_mul(xj)).collect())
            .collect();
        let sx_y: Vec<_> = ys.iter().map(|yk| sx.tr_mul(yk)).collect();
        let sy_x: Vec<_> = xs.iter().map(|xj| sy.tr_mul(xj)).collect();
        CrossCache { cross, sx_y, sy_x }
    }
}

/// Within-group U-statistic mean `(1/(n(n-1))) Σ_{i≠j} <X_i, X_j>_W`,
/// summed row-major over ordered pairs.
fn within_mean(cache: &GroupCache, gram: &KernelGram) -> f64 {
    let n = cache.n;
    let vals: Vec<f64> = cache
        .upper
        .par_iter()
        .map(|m| sym_frob_dot(gram.matrix(), m))
        .collect();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                acc += vals[cache.upper_idx(a, b)];
            }
        }
    }
    acc / (n as f64 * (n as f64 - 1.0))
}

/// Cross-group mean `(1/(nm)) Σ_{i,j} <X_i, Y_j>_W`.
///
/// Summands are grouped by unordered index pair `{min(i,j), max(i,j)}`
/// before accumulation, which makes the whole statistic exactly symmetric
/// under swapping the two panels while staying deterministic.
fn cross_mean(cross: &CrossCache, gram: &KernelGram, n: usize, m: usize) -> f64 {
    let w = gram.matrix();
    let vals: Vec<Vec<f64>> = cross
        .cross
        .par_iter()
        .map(|row| row.iter().map(|mat| sym_frob_dot(w, mat)).collect())
        .collect();
    // vals[k][j] = <X_j, Y_k>_W
    let a = |i: usize, j: usize| vals[j][i];
    let top = n.max(m);
    let mut acc = 0.0;
    for u in 0..top {
        if u < n && u < m {
            acc += a(u, u);
        }
        for v in (u + 1)..top {
            let first = (u < n && v < m).then(|| a(u, v));
            let second = (v < n && u < m).then(|| a(v, u));
            match (first, second) {
                (Some(x), Some(y)) => acc += x + y,
                (Some(x), None) | (None, Some(x)) => acc += x,
                (None, None) => {}
            }
        }
    }
    acc / (n as f64 * m as f64)
}

fn check_panels(px: &CurvePanel, py: &CurvePanel, gram: &KernelGram) -> Result<()> {
    if px.basis.signature() != py.basis.signature() {
        return Err(MrpError::BasisMismatch(
            "panels were reconstructed against different bases".into(),
        ));
    }
    if px.basis.signature() != gram.basis_signature {
        return Err(MrpError::BasisMismatch(
            "Gram matrix was built for a different basis".into(),
        ));
    }
    if px.p() != py.p() {
        return Err(MrpError::DimensionMismatch(format!(
            "panels have p = {} and p = {}",
            px.p(),
            py.p()
        )));
    }
    Ok(())
}

/// The unbiased projection-distance estimate between two reconstructed
/// panels.
pub fn mrp_hat(px: &CurvePanel, py: &CurvePanel, gram: &KernelGram) -> Result<f64> {
    check_panels(px, py, gram)?;
    let (n, m) = (px.n(), py.n());
    if n < 2 || m < 2 {
        return Err(MrpError::InsufficientSamples(format!(
            "need n >= 2 and m >= 2 samples, got n = {n}, m = {m}"
        )));
    }
    let cx = GroupCache::build(&px.coeffs);
    let cy = GroupCache::build(&py.coeffs);
    let cross = CrossCache::build(&px.coeffs, &py.coeffs);
    Ok(mrp_from_caches(&cx, &cy, &cross, gram, n, m))
}

fn mrp_from_caches(
    cx: &GroupCache,
    cy: &GroupCache,
    cross: &CrossCache,
    gram: &KernelGram,
    n: usize,
    m: usize,
) -> f64 {
    within_mean(cx, gram) + within_mean(cy, gram) - 2.0 * cross_mean(cross, gram, n, m)
}

/// Leave-two-out within-group trace sum
/// `(1/(n(n-1))) Σ_{j≠k} tr(W (C^T B) W (D^T A))` with
/// `A = X_j - mean_(j,k)`, `B = X_j`, `C = X_k - mean_(j,k)`, `D = X_k`.
fn itr_within(cache: &GroupCache, gram: &KernelGram) -> f64 {
    let n = cache.n;
    let beta = 1.0 / (n as f64 - 2.0);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| (0..n).filter(move |&k| k != j).map(move |k| (j, k)))
        .collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let mkj = cache.m_of(k, j);
            let l = mkj.nrows();
            let mut e = DMatrix::zeros(l, l);
            let mut f = DMatrix::zeros(l, l);
            let pj = &cache.psum[j];
            let pk = &cache.psum[k];
            let mjj = &cache.diag[j];
            let mkk = &cache.diag[k];
            for c in 0..l {
                for r in 0..l {
                    let m_rc = mkj[(r, c)];
                    e[(r, c)] = (1.0 + beta) * m_rc - beta * (pj[(r, c)] - mjj[(r, c)]);
                    f[(r, c)] = (1.0 + beta) * m_rc - beta * (pk[(c, r)] - mkk[(r, c)]);
                }
            }
            quad_trace_lhs(&e, &f, gram)
        })
        .collect();
    vals.iter().sum::<f64>() / (n as f64 * (n as f64 - 1.0))
}

/// Leave-one-out cross trace sum
/// `(1/(nm)) Σ_{j,k} tr(W (C^T B) W (D^T A))` with
/// `A = X_j - mean_(j)`, `B = X_j`, `C = Y_k - mean_(k)`, `D = Y_k`.
fn itr_between(cross: &CrossCache, gram: &KernelGram, n: usize, m: usize) -> f64 {
    let bn = 1.0 / (n as f64 - 1.0);
    let bm = 1.0 / (m as f64 - 1.0);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| (0..m).map(move |k| (j, k)))
        .collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let ckj = &cross.cross[k][j];
            let l = ckj.nrows();
            let py_j = &cross.sy_x[j];
            let px_k = &cross.sx_y[k];
            let mut e = DMatrix::zeros(l, l);
            let mut f = DMatrix::zeros(l, l);
            for c in 0..l {
                for r in 0..l {
                    let c_rc = ckj[(r, c)];
                    e[(r, c)] = (1.0 + bm) * c_rc - bm * py_j[(r, c)];
                    f[(r, c)] = (1.0 + bn) * c_rc - bn * px_k[(c, r)];
                }
            }
            quad_trace_lhs(&e, &f, gram)
        })
        .collect();
    vals.iter().sum::<f64>() / (n as f64 * m as f64)
}

/// One leave-out trace functional.
pub fn itr_hat(
    px: &CurvePanel,
    py: &CurvePanel,
    gram: &KernelGram,
    which: ItrComponent,
) -> Result<f64> {
    check_panels(px, py, gram)?;
    let (n, m) = (px.n(), py.n());
    match which {
        ItrComponent::WithinX => {
            if n < 4 {
                return Err(MrpError::InsufficientSamples(format!(
                    "within-group trace needs n >= 4, got {n}"
                )));
            }
            Ok(itr_within(&GroupCache::build(&px.coeffs), gram))
        }
        ItrComponent::WithinY => {
            if m < 4 {
                return Err(MrpError::InsufficientSamples(format!(
                    "within-group trace needs m >= 4, got {m}"
                )));
            }
            Ok(itr_within(&GroupCache::build(&py.coeffs), gram))
        }
        ItrComponent::Between => {
            if n < 2 || m < 2 {
                return Err(MrpError::InsufficientSamples(format!(
                    "cross trace needs n >= 2 and m >= 2, got n = {n}, m = {m}"
                )));
            }
            Ok(itr_between(
                &CrossCache::build(&px.coeffs, &py.coeffs),
                gram,
                n,
                m,
            ))
        }
    }
}

/// Variance estimate `2/(n(n-1)) itr11 + 2/(m(m-1)) itr22 + 4/(nm) itr12`.
///
/// A non-positive value is a finite-sample pathology of the
/// ratio-consistent estimator and is reported as an error rather than
/// clamped: clamping would fabricate a p-value.
pub fn sigma2_hat(itr11: f64, itr22: f64, itr12: f64, n: usize, m: usize) -> Result<f64> {
    if n < 2 || m < 2 {
        return Err(MrpError::InsufficientSamples(format!(
            "variance needs n >= 2 and m >= 2, got n = {n}, m = {m}"
        )));
    }
    let (nf, mf) = (n as f64, m as f64);
    let s2 = 2.0 / (nf * (nf - 1.0)) * itr11 + 2.0 / (mf * (mf - 1.0)) * itr22
        + 4.0 / (nf * mf) * itr12;
    if s2 <= 0.0 {
        return Err(MrpError::DegenerateVariance(s2));
    }
    Ok(s2)
}

/// Run the full test on already-reconstructed panels sharing a basis and
/// Gram matrix.
pub fn test_curve_panels(
    px: &CurvePanel,
    py: &CurvePanel,
    gram: &KernelGram,
    alpha: f64,
) -> Result<MrpTestResult> {
    check_panels(px, py, gram)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MrpError::InvalidConfig(format!(
            "alpha = {alpha} outside (0, 1)"
        )));
    }
    let (n, m) = (px.n(), py.n());
    if n < 4 || m < 4 {
        return Err(MrpError::InsufficientSamples(format!(
            "test needs n >= 4 and m >= 4, got n = {n}, m = {m}"
        )));
    }
    let cx = GroupCache::build(&px.coeffs);
    let cy = GroupCache::build(&py.coeffs);
    let cross = CrossCache::build(&px.coeffs, &py.coeffs);

    let mrp = mrp_from_caches(&cx, &cy, &cross, gram, n, m);
    let itr11 = itr_within(&cx, gram);
    let itr22 = itr_within(&cy, gram);
    let itr12 = itr_between(&cross, gram, n, m);
    let s2 = sigma2_hat(itr11, itr22, itr12, n, m)?;
    let q = mrp / s2.sqrt();
    let p_value = 1.0 - normal_cdf(q);
    let reject = q > z_alpha(alpha);
    Ok(MrpTestResult {
        mrp_hat: mrp,
        itr11_hat: itr11,
        itr22_hat: itr22,
        itr12_hat: itr12,
        sigma2_hat: s2,
        q_stat: q,
        p_value,
        alpha,
        reject,
        n,
        m,
        p: px.p(),
        basis_len: px.basis_len(),
    })
}

/// Run the full test from raw panels: build one shared basis sized by the
/// smallest cell of either group, reconstruct both panels, build the Gram
/// matrix, and test.
pub fn run_test(
    px: &DiscretePanel,
    py: &DiscretePanel,
    opts: &TestOptions,
) -> Result<MrpTestResult> {
    if px.dim_labels != py.dim_labels {
        return Err(MrpError::DimensionMismatch(format!(
            "group {} observes {} dims, group {} observes {} dims (or labels differ)",
            px.group_label,
            px.dim_labels.len(),
            py.group_label,
            py.dim_labels.len()
        )));
    }
    let basis = shared_basis(&[px, py], opts.knot_rate, opts.spline_order)?;
    let rx = crate::bspline::reconstruct_panel_with_basis(px, basis.clone())?;
    let ry = crate::bspline::reconstruct_panel_with_basis(py, basis.clone())?;
    let gram = kernel_gram(&basis, &opts.kernel, opts.quad_order)?;
    test_curve_panels(&rx, &ry, &gram, opts.alpha)
}

/// Population projection distance
/// `∬ (mu1(s) - mu2(s))^T (mu1(t) - mu2(t)) v(s, t) ds dt`.
pub fn mrp_population(
    mu1: &MeanFunction,
    mu2: &MeanFunction,
    kernel: &ProjectionKernel,
    quad_order: usize,
) -> Result<f64> {
    if mu1.p() != mu2.p() {
        return Err(MrpError::DimensionMismatch(format!(
            "mean functions have p = {} and p = {}",
            mu1.p(),
            mu2.p()
        )));
    }
    if quad_order < 2 {
        return Err(MrpError::InvalidConfig(format!(
            "quad_order = {quad_order} must be >= 2"
        )));
    }
    let p = mu1.p();
    let f = |s: f64, t: f64| -> f64 {
        let mut dot = 0.0;
        for k in 0..p {
            dot += (mu1.eval(k, s) - mu2.eval(k, s)) * (mu1.eval(k, t) - mu2.eval(k, t));
        }
        dot * kernel.value_unchecked(s, t)
    };
    Ok(integrate2_diag(f, &uniform_spans(8), quad_order))
}

/// Location shift of the limiting normal under local alternatives:
/// `(n+m) tau (1-tau) mrp / sqrt(2 itr_tau)` with `tau = n/(n+m)`.
pub fn delta_shift(mrp: f64, itr_tau: f64, n: usize, m: usize) -> Result<f64> {
    if itr_tau.is_nan() || itr_tau <= 0.0 {
        return Err(MrpError::Domain(format!("itr_tau = {itr_tau} must be > 0")));
    }
    let (nf, mf) = (n as f64, m as f64);
    let tau = nf / (nf + mf);
    Ok((nf + mf) * tau * (1.0 - tau) * mrp / (2.0 * itr_tau).sqrt())
}

/// Asymptotic power `Phi(-z_alpha + delta)` under local alternatives.
pub fn power_estimate(delta: f64, alpha: f64) -> f64 {
    normal_cdf(-z_alpha(alpha) + delta)
}

/// Shift under fixed alternatives:
/// `sqrt((n+m) tau (1-tau)) mrp / sqrt(4 imd_tau)`.
pub fn delta_shift_fixed(mrp: f64, imd_tau: f64, n: usize, m: usize) -> Result<f64> {
    if imd_tau.is_nan() || imd_tau <= 0.0 {
        return Err(MrpError::Domain(format!("imd_tau = {imd_tau} must be > 0")));
    }
    let (nf, mf) = (n as f64, m as f64);
    let tau = nf / (nf + mf);
    Ok(((nf + mf) * tau * (1.0 - tau)).sqrt() * mrp / (4.0 * imd_tau).sqrt())
}

/// Asymptotic power `Phi(delta2)` under fixed alternatives.
pub fn power_estimate_fixed(delta2: f64) -> f64 {
    normal_cdf(delta2)
}
