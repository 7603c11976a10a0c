//! Independent verification oracles.
//!
//! Nothing here shares a code path with the engine's Gram-matrix
//! reductions: the Monte Carlo oracle samples the projection definition
//! directly (random direction, random Gaussian process path), and the
//! dense oracles re-evaluate every statistic by raw trapezoid quadrature
//! on curve values. Population trace functionals for the known simulation
//! covariances close the loop on the variance estimator.
//!
//! Oracles are for verification, not speed, and carry cost guards.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use std::sync::Arc;

use crate::engine::MeanFunction;
use crate::error::{MrpError, Result};
use crate::kernel::ProjectionKernel;
use crate::panel::CurvePanel;
use crate::quad::{quad4_pair, trapezoid_rule, uniform_spans, PiecewiseRule};
use crate::stats::stream_rng;

/// Distribution of the random direction's coordinates (iid, mean 0,
/// variance 1; the closed form is free of this choice).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaLaw {
    StandardNormal,
    Rademacher,
}

/// Monte Carlo oracle configuration.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub num_alpha_draws: usize,
    pub num_gamma_draws: usize,
    /// Uniform grid size for discretizing the projection process path.
    pub grid_size: usize,
    pub alpha_law: AlphaLaw,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            num_alpha_draws: 200,
            num_gamma_draws: 10,
            grid_size: 64,
            alpha_law: AlphaLaw::StandardNormal,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 16 {
            return Err(MrpError::InvalidConfig(format!(
                "oracle grid_size = {} must be >= 16",
                self.grid_size
            )));
        }
        if self.num_alpha_draws * self.num_gamma_draws < 100 {
            return Err(MrpError::InvalidConfig(format!(
                "oracle needs >= 100 draws, got {} x {}",
                self.num_alpha_draws, self.num_gamma_draws
            )));
        }
        Ok(())
    }
}

/// Lower-triangular square root of the process covariance on the grid,
/// with diagonal jitter escalating 1e-10 -> 1e-8 -> 1e-6 before giving up
/// (the Wiener and OU matrices are near-singular on fine grids).
fn path_factor(kernel: &ProjectionKernel, grid: &[f64]) -> Result<DMatrix<f64>> {
    let g = grid.len();
    let cov = DMatrix::from_fn(g, g, |i, j| kernel.value_unchecked(grid[i], grid[j]));
    for jitter in [1e-10, 1e-8, 1e-6] {
        let jittered = &cov + DMatrix::from_diagonal_element(g, g, jitter);
        if let Some(chol) = jittered.cholesky() {
            return Ok(chol.l());
        }
    }
    Err(MrpError::Factorization(format!(
        "covariance of {} not factorizable on {g} grid points even with jitter 1e-6",
        kernel.describe()
    )))
}

/// Monte Carlo estimate of the projection distance straight from its
/// definition: draw a direction with iid mean-0 variance-1 coordinates and
/// a zero-mean Gaussian path with covariance `v`, average the squared
/// projection of the mean difference. Returns `(estimate, standard_error)`.
pub fn mc_mrp(
    mu1: &MeanFunction,
    mu2: &MeanFunction,
    kernel: &ProjectionKernel,
    cfg: &OracleConfig,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    if mu1.p() != mu2.p() {
        return Err(MrpError::DimensionMismatch(format!(
            "mean functions have p = {} and p = {}",
            mu1.p(),
            mu2.p()
        )));
    }
    let p = mu1.p();
    let g = cfg.grid_size;
    let (grid, w) = trapezoid_rule(g);
    let factor = path_factor(kernel, &grid)?;
    // weighted mean-difference table: wd[t][k] = w_t * (mu1 - mu2)_k(t)
    let wd: Vec<Vec<f64>> = (0..g)
        .map(|t| {
            (0..p)
                .map(|k| w[t] * (mu1.eval(k, grid[t]) - mu2.eval(k, grid[t])))
                .collect()
        })
        .collect();

    let draws = cfg.num_alpha_draws * cfg.num_gamma_draws;
    let samples: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = stream_rng(cfg.seed, &[0xa1fa, d as u64]);
            let alpha: Vec<f64> = match cfg.alpha_law {
                AlphaLaw::StandardNormal => (0..p)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect(),
                AlphaLaw::Rademacher => (0..p)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect(),
            };
            let z: Vec<f64> = (0..g)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            // gamma = L z; projection = sum_t gamma_t * w_t * alpha^T d(t)
            let mut proj = 0.0;
            for t in 0..g {
                let mut gamma_t = 0.0;
                for u in 0..=t {
                    gamma_t += factor[(t, u)] * z[u];
                }
                let dir: f64 = (0..p).map(|k| alpha[k] * wd[t][k]).sum();
                proj += gamma_t * dir;
            }
            proj * proj
        })
        .collect();

    let mean = samples.iter().sum::<f64>() / draws as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
        / (draws as f64 - 1.0)
        / draws as f64;
    Ok((mean, var.sqrt()))
}

/// Curve values of every sample on a dense grid: one `p x g` matrix per
/// sample.
fn eval_on_grid(panel: &CurvePanel, grid: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let design = panel.basis.design_matrix(grid)?; // g x L
    Ok(panel
        .coeffs
        .iter()
        .map(|c| c * design.transpose())
        .collect())
}

/// Pairwise curve integral by 2-D trapezoid rule on raw values.
fn dense_pair_integral(xi: &DMatrix<f64>, xj: &DMatrix<f64>, v: &DMatrix<f64>, w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, wa) in w.iter().enumerate() {
        for (b, wb) in w.iter().enumerate() {
            let dot = xi.column(a).dot(&xj.column(b));
            acc += wa * wb * dot * v[(a, b)];
        }
    }
    acc
}

/// The three-term statistic re-derived by dense 2-D trapezoid quadrature,
/// bypassing the Gram reduction entirely.
pub fn dense_mrp_hat(
    px: &CurvePanel,
    py: &CurvePanel,
    kernel: &ProjectionKernel,
    grid_size: usize,
) -> Result<f64> {
    let (grid, w) = trapezoid_rule(grid_size);
    let xs = eval_on_grid(px, &grid)?;
    let ys = eval_on_grid(py, &grid)?;
    let v = DMatrix::from_fn(grid_size, grid_size, |a, b| {
        kernel.value_unchecked(grid[a], grid[b])
    });
    let (n, m) = (xs.len(), ys.len());
    let mut t1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                t1 += dense_pair_integral(&xs[i], &xs[j], &v, &w);
            }
        }
    }
    let mut t2 = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                t2 += dense_pair_integral(&ys[i], &ys[j], &v, &w);
            }
        }
    }
    let mut t3 = 0.0;
    for xi in &xs {
        for yj in &ys {
            t3 += dense_pair_integral(xi, yj, &v, &w);
        }
    }
    Ok(t1 / (n as f64 * (n as f64 - 1.0)) + t2 / (m as f64 * (m as f64 - 1.0))
        - 2.0 * t3 / (n as f64 * m as f64))
}

pub use crate::engine::ItrComponent;

/// Raw trapezoid evaluation of the quadruple-integral trace displays, with
/// leave-out means taken in function space on the dense grid.
///
/// Cost is `O(grid^4)` per pair; `grid_size` is capped at 64.
pub fn dense_itr_hat(
    px: &CurvePanel,
    py: &CurvePanel,
    kernel: &ProjectionKernel,
    grid_size: usize,
    which: ItrComponent,
) -> Result<f64> {
    if grid_size > 64 {
        return Err(MrpError::CostGuard(format!(
            "dense quadruple quadrature limited to grid_size <= 64, got {grid_size}"
        )));
    }
    let (grid, w) = trapezoid_rule(grid_size);
    let xs = eval_on_grid(px, &grid)?;
    let ys = eval_on_grid(py, &grid)?;
    let v = DMatrix::from_fn(grid_size, grid_size, |a, b| {
        kernel.value_unchecked(grid[a], grid[b])
    });

    let sum_of = |vals: &[DMatrix<f64>]| {
        let mut s = vals[0].clone();
        for x in &vals[1..] {
            s += x;
        }
        s
    };

    // Quadruple trapezoid sum of (B(s1).C(t)) (D(t1).A(s)) v(s,t) v(s1,t1)
    // over axes (s = i, t = j, s1 = k, t1 = l).
    let quad_sum =
        |a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>| -> f64 {
            let g = grid_size;
            let bc = DMatrix::from_fn(g, g, |s1, t| b.column(s1).dot(&c.column(t)));
            let da = DMatrix::from_fn(g, g, |t1, s| d.column(t1).dot(&a.column(s)));
            let mut acc = 0.0;
            for i in 0..g {
                for j in 0..g {
                    let vij = v[(i, j)] * w[i] * w[j];
                    let mut inner = 0.0;
                    for k in 0..g {
                        let bckj = bc[(k, j)] * w[k];
                        let mut row = 0.0;
                        for l in 0..g {
                            row += w[l] * da[(l, i)] * v[(k, l)];
                        }
                        inner += bckj * row;
                    }
                    acc += vij * inner;
                }
            }
            acc
        };

    let within = |vals: &[DMatrix<f64>]| -> f64 {
        let n = vals.len();
        let s = sum_of(vals);
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                if j == k {
                    continue;
                }
                let mean = (&s - &vals[j] - &vals[k]) / (n as f64 - 2.0);
                let a = &vals[j] - &mean;
                let c = &vals[k] - &mean;
                acc += quad_sum(&a, &vals[j], &c, &vals[k]);
            }
        }
        acc / (n as f64 * (n as f64 - 1.0))
    };

    match which {
        ItrComponent::WithinX => Ok(within(&xs)),
        ItrComponent::WithinY => Ok(within(&ys)),
        ItrComponent::Between => {
            let (n, m) = (xs.len(), ys.len());
            let sx = sum_of(&xs);
            let sy = sum_of(&ys);
            let mut acc = 0.0;
            for xj in &xs {
                for yk in &ys {
                    let xbar = (&sx - xj) / (n as f64 - 1.0);
                    let ybar = (&sy - yk) / (m as f64 - 1.0);
                    let a = xj - xbar;
                    let c = yk - ybar;
                    acc += quad_sum(&a, xj, &c, yk);
                }
            }
            Ok(acc / (n as f64 * m as f64))
        }
    }
}

// ---------------------------------------------------------------------------
// population functionals for closed-form covariance models

/// A `p x p` covariance field whose entries depend on the dimension pair
/// only through the circular offset:
/// `G[k1][k2](s, t) = Σ_r rho_r[(k2 - k1) mod p] * field_r(s, t)`.
///
/// Every simulation model's covariance has this shape, which is what makes
/// the quadruple-integral trace functionals computable at high `p`: the
/// dimension sums collapse to circular correlations of the channel
/// coefficient vectors.
/// One circulant channel: coefficients by circular offset and the shared
/// scalar field.
type Channel = (Vec<f64>, Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

#[derive(Clone)]
pub struct CirculantCovariance {
    p: usize,
    channels: Vec<Channel>,
}

impl std::fmt::Debug for CirculantCovariance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "CirculantCovariance(p = {}, {} channels)",
            self.p,
            self.channels.len()
        )
    }
}

impl CirculantCovariance {
    pub fn new(p: usize) -> Self {
        CirculantCovariance {
            p,
            channels: Vec::new(),
        }
    }

    /// Add a channel: `rho` indexed by circular offset (length `p`) and a
    /// scalar field.
    pub fn with_channel(
        mut self,
        rho: Vec<f64>,
        field: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if rho.len() != self.p {
            return Err(MrpError::ShapeMismatch(format!(
                "channel rho has length {}, p = {}",
                rho.len(),
                self.p
            )));
        }
        self.channels.push((rho, Arc::new(field)));
        Ok(self)
    }

    /// iid-across-dimensions model `G = field * I_p`.
    pub fn diagonal(p: usize, field: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        let mut rho = vec![0.0; p];
        rho[0] = 1.0;
        CirculantCovariance::new(p)
            .with_channel(rho, field)
            .expect("rho length matches p")
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Entry `G[k1][k2](s, t)`, zero-based dimensions.
    pub fn entry(&self, k1: usize, k2: usize, s: f64, t: f64) -> f64 {
        let d = (k2 + self.p - k1) % self.p;
        self.channels.iter().map(|(rho, f)| rho[d] * f(s, t)).sum()
    }
}

fn default_rule(quad_order: usize) -> Result<PiecewiseRule> {
    if !(2..=32).contains(&quad_order) {
        return Err(MrpError::InvalidConfig(format!(
            "population quadrature order {quad_order} outside [2, 32]"
        )));
    }
    Ok(PiecewiseRule::new(&uniform_spans(16), quad_order))
}

/// Population quadruple-integral trace functional
/// `∬∬ tr(G(s, s1) H(t, t1)) v(s, t) v(s1, t1)`.
pub fn population_itr(
    g: &CirculantCovariance,
    h: &CirculantCovariance,
    kernel: &ProjectionKernel,
    quad_order: usize,
) -> Result<f64> {
    if g.p() != h.p() {
        return Err(MrpError::DimensionMismatch(format!(
            "covariances have p = {} and p = {}",
            g.p(),
            h.p()
        )));
    }
    if g.channels.len() * h.channels.len() > 64 {
        return Err(MrpError::CostGuard(format!(
            "{} x {} covariance channels exceed the trace budget",
            g.channels.len(),
            h.channels.len()
        )));
    }
    let rule = default_rule(quad_order)?;
    let p = g.p();
    let mut total = 0.0;
    for (rho_g, fg) in &g.channels {
        for (rho_h, fh) in &h.channels {
            // trace over dimensions: p * sum_d rho_g[d] rho_h[-d mod p]
            let weight: f64 =
                (0..p).map(|d| rho_g[d] * rho_h[(p - d) % p]).sum::<f64>() * p as f64;
            if weight == 0.0 {
                continue;
            }
            let fg = fg.clone();
            let fh = fh.clone();
            total += weight
                * quad4_pair(
                    move |s, s1| fg(s, s1),
                    move |t, t1| fh(t, t1),
                    |s, t| kernel.value_unchecked(s, t),
                    &rule,
                );
        }
    }
    Ok(total)
}

/// Population mean-difference functional
/// `∬∬ (mu1 - mu2)(t)^T G(s, s1) (mu1 - mu2)(t1) v(s, t) v(s1, t1)`.
pub fn population_imd(
    g: &CirculantCovariance,
    mu1: &MeanFunction,
    mu2: &MeanFunction,
    kernel: &ProjectionKernel,
    quad_order: usize,
) -> Result<f64> {
    let p = g.p();
    if mu1.p() != p || mu2.p() != p {
        return Err(MrpError::DimensionMismatch(format!(
            "covariance has p = {p}, means have p = {} and {}",
            mu1.p(),
            mu2.p()
        )));
    }
    let rule = default_rule(quad_order)?;
    let mm = rule.len();
    if p * mm > 2_000_000 {
        return Err(MrpError::CostGuard(format!(
            "p = {p} x {mm} quadrature nodes exceed the budget"
        )));
    }
    let x = &rule.nodes;
    let w = &rule.weights;
    let v = DMatrix::from_fn(mm, mm, |i, j| kernel.value_unchecked(x[i], x[j]));
    // u[i][k] = sum_j V[i][j] w_j delta_k(x_j)
    let delta = DMatrix::from_fn(mm, p, |j, k| (mu1.eval(k, x[j]) - mu2.eval(k, x[j])) * w[j]);
    let u = &v * delta; // mm x p
    let mut total = 0.0;
    for (rho, field) in &g.channels {
        let fmat = DMatrix::from_fn(mm, mm, |i, k| field(x[i], x[k]) * w[i] * w[k]);
        let y = &fmat * &u; // mm x p
        for (d, &rho_d) in rho.iter().enumerate() {
            if rho_d == 0.0 {
                continue;
            }
            let mut s = 0.0;
            for k1 in 0..p {
                let k2 = (k1 + d) % p;
                s += u.column(k1).dot(&y.column(k2));
            }
            total += rho_d * s;
        }
    }
    Ok(total)
}

/// Deterministic smooth mean function used by the verification entry
/// points and examples: a seeded mix of linear and sine components per
/// dimension.
pub fn seeded_smooth_mean(p: usize, seed: u64, idx: u64) -> MeanFunction {
    let mut rng = stream_rng(seed, &[0x0cac, idx]);
    let coefs: Vec<(f64, f64, f64)> = (0..p)
        .map(|_| {
            (
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 3.0,
            )
        })
        .collect();
    MeanFunction::from_fn(p, move |k, t| {
        let (a, b, w) = coefs[k];
        a * t + b * (w * t + k as f64).sin()
    })
}

/// Deterministic pair of smooth reconstructed panels on a shared small
/// basis, for the dense-oracle comparisons. The coefficient rows vary
/// slowly so the trapezoid oracles are well-conditioned.
pub fn seeded_smooth_panels(n: usize, p: usize, seed: u64) -> (CurvePanel, CurvePanel) {
    let basis = Arc::new(crate::bspline::build_basis(4, 2));
    let make = |tag: u64| {
        let mut rng = stream_rng(seed, &[0xfade, tag]);
        CurvePanel {
            basis: basis.clone(),
            coeffs: (0..n)
                .map(|_| {
                    let base: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    let slope: f64 = rng.random::<f64>() - 0.5;
                    DMatrix::from_fn(p, basis.len(), |r, c| {
                        base + slope * c as f64 / 6.0
                            + 0.2 * ((r + c) as f64).sin()
                            + 0.1 * (rng.random::<f64>() - 0.5)
                    })
                })
                .collect(),
        }
    };
    (make(1), make(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::build_basis;
    use crate::engine::{mrp_hat, mrp_population};
    use crate::kernel::kernel_gram;
    use approx::assert_relative_eq;

    // Smooth fixed-seed bundles (L = 6; slowly varying coefficient rows)
    // keep the trapezoid oracle well-conditioned at its default grids.
    fn random_curve_panel(n: usize, p: usize, seed: u64) -> CurvePanel {
        let basis = Arc::new(build_basis(4, 2));
        let mut rng = stream_rng(seed, &[5]);
        CurvePanel {
            basis: basis.clone(),
            coeffs: (0..n)
                .map(|_| {
                    let base: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    let slope: f64 = rng.random::<f64>() - 0.5;
                    DMatrix::from_fn(p, basis.len(), |r, c| {
                        base + slope * c as f64 / 6.0
                            + 0.2 * ((r + c) as f64).sin()
                            + 0.1 * (rng.random::<f64>() - 0.5)
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn mc_mrp_zero_difference_is_zero_within_error() {
        let mu = MeanFunction::from_fn(2, |k, t| (t + k as f64).cos());
        let k = ProjectionKernel::ou(1.0).unwrap();
        let (est, se) = mc_mrp(&mu, &mu, &k, &OracleConfig::default()).unwrap();
        assert!(est.abs() <= 3.0 * se.max(1e-12), "est = {est}, se = {se}");
    }

    #[test]
    fn mc_mrp_matches_analytic_constant_difference() {
        // one-dimensional unit difference, Wiener: distance = 1/3
        let mu1 = MeanFunction::from_fn(1, |_, _| 1.0);
        let mu2 = MeanFunction::zero(1);
        let cfg = OracleConfig {
            num_alpha_draws: 400,
            num_gamma_draws: 10,
            seed: 3,
            ..OracleConfig::default()
        };
        let (est, se) = mc_mrp(&mu1, &mu2, &ProjectionKernel::wiener(), &cfg).unwrap();
        assert!((est - 1.0 / 3.0).abs() <= 3.0 * se, "est = {est}, se = {se}");
    }

    #[test]
    fn mc_mrp_matches_closed_form_at_p3() {
        let mu1 = MeanFunction::from_fn(3, |k, t| (2.0 * t + k as f64).sin() + 0.3);
        let mu2 = MeanFunction::from_fn(3, |k, t| 0.2 * t * (k + 1) as f64);
        let k = ProjectionKernel::ou(1.0).unwrap();
        let closed = mrp_population(&mu1, &mu2, &k, 16).unwrap();
        let cfg = OracleConfig {
            num_alpha_draws: 500,
            num_gamma_draws: 10,
            seed: 11,
            ..OracleConfig::default()
        };
        let (est, se) = mc_mrp(&mu1, &mu2, &k, &cfg).unwrap();
        assert!(
            (est - closed).abs() <= 3.0 * se,
            "est = {est}, closed = {closed}, se = {se}"
        );
    }

    #[test]
    fn mc_mrp_is_insensitive_to_alpha_law() {
        let mu1 = MeanFunction::from_fn(2, |k, t| t + k as f64 * 0.5);
        let mu2 = MeanFunction::zero(2);
        let k = ProjectionKernel::wiener();
        let base = OracleConfig {
            num_alpha_draws: 400,
            num_gamma_draws: 10,
            seed: 21,
            ..OracleConfig::default()
        };
        let (e1, s1) = mc_mrp(&mu1, &mu2, &k, &base).unwrap();
        let rad = OracleConfig {
            alpha_law: AlphaLaw::Rademacher,
            seed: 22,
            ..base
        };
        let (e2, s2) = mc_mrp(&mu1, &mu2, &k, &rad).unwrap();
        let tol = 3.0 * (s1 * s1 + s2 * s2).sqrt();
        assert!((e1 - e2).abs() <= tol, "normal {e1} vs rademacher {e2}");
    }

    #[test]
    fn dense_mrp_agrees_with_gram_reduction() {
        let px = random_curve_panel(6, 3, 31);
        let py = random_curve_panel(6, 3, 32);
        let k = ProjectionKernel::ou(1.0).unwrap();
        let gram = kernel_gram(&px.basis, &k, 16).unwrap();
        let fast = mrp_hat(&px, &py, &gram).unwrap();
        let dense = dense_mrp_hat(&px, &py, &k, 200).unwrap();
        assert_relative_eq!(fast, dense, max_relative = 1e-3);
    }

    #[test]
    fn dense_mrp_zero_and_constant_panels() {
        let basis = Arc::new(build_basis(4, 4));
        let zero = CurvePanel {
            basis: basis.clone(),
            coeffs: vec![DMatrix::zeros(1, basis.len()); 3],
        };
        assert_eq!(
            dense_mrp_hat(&zero, &zero, &ProjectionKernel::wiener(), 50).unwrap(),
            0.0
        );
        // unit curves vs zero curves under min(s,t): distance 1/3
        let ones = CurvePanel {
            basis: basis.clone(),
            coeffs: vec![DMatrix::from_element(1, basis.len(), 1.0); 3],
        };
        let v = dense_mrp_hat(&ones, &zero, &ProjectionKernel::wiener(), 200).unwrap();
        assert_relative_eq!(v, 1.0 / 3.0, max_relative = 1e-4);
    }

    #[test]
    fn dense_itr_agrees_with_gram_reduction() {
        let px = random_curve_panel(6, 2, 33);
        let py = random_curve_panel(6, 2, 34);
        let k = ProjectionKernel::ou(1.0).unwrap();
        let gram = kernel_gram(&px.basis, &k, 16).unwrap();
        for which in [
            ItrComponent::WithinX,
            ItrComponent::WithinY,
            ItrComponent::Between,
        ] {
            let fast = crate::engine::itr_hat(&px, &py, &gram, which).unwrap();
            let dense = dense_itr_hat(&px, &py, &k, 40, which).unwrap();
            assert_relative_eq!(fast, dense, max_relative = 1e-3);
        }
    }

    #[test]
    fn dense_itr_identical_curves_vanish_and_kernel_scales_quadratically() {
        let basis = Arc::new(build_basis(4, 3));
        let same = CurvePanel {
            basis: basis.clone(),
            coeffs: vec![DMatrix::from_element(2, basis.len(), 1.5); 5],
        };
        let other = random_curve_panel(5, 2, 35);
        let k = ProjectionKernel::wiener();
        let v = dense_itr_hat(&same, &other, &k, 30, ItrComponent::WithinX).unwrap();
        assert!(v.abs() < 1e-12, "got {v}");

        let k2 = ProjectionKernel::scaled(k.clone(), 2.0).unwrap();
        let a = dense_itr_hat(&other, &same, &k, 30, ItrComponent::WithinX).unwrap();
        let b = dense_itr_hat(&other, &same, &k2, 30, ItrComponent::WithinX).unwrap();
        assert_relative_eq!(4.0 * a, b, max_relative = 1e-12);

        assert!(dense_itr_hat(&same, &other, &k, 65, ItrComponent::WithinX).is_err());
    }

    #[test]
    fn population_itr_identity_constant_field() {
        // G = H = I_p with constant field 1, Wiener: the trace contributes
        // p and the integrals factor to (1/3)^2.
        let g = CirculantCovariance::diagonal(2, |_, _| 1.0);
        let v = population_itr(&g, &g, &ProjectionKernel::wiener(), 10).unwrap();
        assert_relative_eq!(v, 2.0 / 9.0, max_relative = 2e-4);
    }

    #[test]
    fn population_itr_is_symmetric_in_its_arguments() {
        let g = CirculantCovariance::new(3)
            .with_channel(vec![1.0, 0.3, 0.3], |s: f64, t: f64| s.min(t))
            .unwrap();
        let h = CirculantCovariance::diagonal(3, |s, t| (-(s - t).abs()).exp());
        let k = ProjectionKernel::ou(1.0).unwrap();
        let gh = population_itr(&g, &h, &k, 8).unwrap();
        let hg = population_itr(&h, &g, &k, 8).unwrap();
        assert_relative_eq!(gh, hg, max_relative = 1e-10);
    }

    #[test]
    fn population_itr_matches_entrywise_brute_quadrature() {
        // Same node set, but the brute loop sums tr{G H} v v over all node
        // quadruples without the channel/trace collapse.
        let p = 3;
        let g = CirculantCovariance::new(p)
            .with_channel(vec![0.34, 0.15, 0.15], |s: f64, t: f64| {
                s.min(t) * (-0.5 * (s * s + t * t)).exp()
            })
            .unwrap();
        let kernel = ProjectionKernel::wiener();
        let fast = population_itr(&g, &g, &kernel, 4).unwrap();

        let rule = PiecewiseRule::new(&uniform_spans(16), 4);
        let mm = rule.len();
        let x = &rule.nodes;
        let w = &rule.weights;
        let mut brute = 0.0;
        for i in 0..mm {
            for j in 0..mm {
                let vij = kernel.value_unchecked(x[i], x[j]) * w[i] * w[j];
                for k in 0..mm {
                    let mut tr_sum = 0.0;
                    for l in 0..mm {
                        let mut tr = 0.0;
                        for k1 in 0..p {
                            for k2 in 0..p {
                                tr += g.entry(k1, k2, x[i], x[k]) * g.entry(k2, k1, x[j], x[l]);
                            }
                        }
                        tr_sum += tr * kernel.value_unchecked(x[k], x[l]) * w[l];
                    }
                    brute += vij * tr_sum * w[k];
                }
            }
        }
        assert_relative_eq!(fast, brute, max_relative = 1e-10);
    }

    #[test]
    fn population_imd_zero_difference_and_brute_check() {
        let g = CirculantCovariance::diagonal(2, |s: f64, t: f64| s.min(t));
        let k = ProjectionKernel::wiener();
        let mu = MeanFunction::from_fn(2, |d, t| t * (d + 1) as f64);
        assert_eq!(population_imd(&g, &mu, &mu, &k, 8).unwrap(), 0.0);

        let mu2 = MeanFunction::zero(2);
        let fast = population_imd(&g, &mu, &mu2, &k, 4).unwrap();

        let rule = PiecewiseRule::new(&uniform_spans(16), 4);
        let mm = rule.len();
        let (x, w) = (&rule.nodes, &rule.weights);
        let mut brute = 0.0;
        for i in 0..mm {
            for j in 0..mm {
                let vij = k.value_unchecked(x[i], x[j]) * w[i] * w[j];
                for kk in 0..mm {
                    for l in 0..mm {
                        let mut quad = 0.0;
                        for k1 in 0..2 {
                            for k2 in 0..2 {
                                quad += mu.eval(k1, x[j])
                                    * g.entry(k1, k2, x[i], x[kk])
                                    * mu.eval(k2, x[l]);
                            }
                        }
                        brute += vij * quad * k.value_unchecked(x[kk], x[l]) * w[kk] * w[l];
                    }
                }
            }
        }
        assert_relative_eq!(fast, brute, max_relative = 1e-10);
    }
}
