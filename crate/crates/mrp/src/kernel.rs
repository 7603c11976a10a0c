//! Projection-process covariances and their basis Gram matrix.
//!
//! The projection process has a covariance `v(s, t)` on `[0, 1]^2`; any
//! positive semi-definite choice is admissible. The two built-in families
//! are the Ornstein–Uhlenbeck covariance `exp(-a|s-t|) / a` and the Wiener
//! covariance `min(s, t)`, both implemented with proportionality constant 1
//! (the test decision is invariant to kernel scale).
//!
//! All curve integrals reduce to traces against the Gram matrix
//! `W[l][m] = ∬ B_l(s) B_m(t) v(s, t) ds dt`, computed once per basis and
//! kernel by piecewise Gauss–Legendre quadrature over knot-span cells with
//! the diagonal cells split into triangles (both kernels are non-smooth
//! only on `s = t`).

use nalgebra::DMatrix;

use crate::bspline::SplineBasis;
use crate::error::{MrpError, Result};
use crate::quad::gauss_legendre;

/// Covariance function of the projection process.
#[derive(Debug, Clone)]
pub enum ProjectionKernel {
    /// `v(s, t) = exp(-a |s - t|) / a`, a > 0.
    OrnsteinUhlenbeck { a: f64 },
    /// `v(s, t) = min(s, t)`.
    Wiener,
    /// `v(s, t) = c * base(s, t)`, c > 0.
    Scaled {
        base: Box<ProjectionKernel>,
        c: f64,
    },
    /// Bilinear interpolation of a symmetric table on a grid covering
    /// `[0, 1]`.
    Tabulated {
        grid: Vec<f64>,
        values: DMatrix<f64>,
    },
}

impl ProjectionKernel {
    pub fn ou(a: f64) -> Result<Self> {
        if a.is_nan() || a <= 0.0 || !a.is_finite() {
            return Err(MrpError::InvalidConfig(format!("OU rate a = {a} must be > 0")));
        }
        Ok(ProjectionKernel::OrnsteinUhlenbeck { a })
    }

    pub fn wiener() -> Self {
        ProjectionKernel::Wiener
    }

    pub fn scaled(base: ProjectionKernel, c: f64) -> Result<Self> {
        if c.is_nan() || c <= 0.0 || !c.is_finite() {
            return Err(MrpError::InvalidConfig(format!("kernel scale c = {c} must be > 0")));
        }
        Ok(ProjectionKernel::Scaled {
            base: Box::new(base),
            c,
        })
    }

    pub fn tabulated(grid: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        let m = grid.len();
        if m < 2 || grid[0] != 0.0 || grid[m - 1] != 1.0 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MrpError::InvalidConfig(
                "tabulated kernel grid must increase strictly from 0 to 1".into(),
            ));
        }
        if values.nrows() != m || values.ncols() != m {
            return Err(MrpError::ShapeMismatch(format!(
                "tabulated kernel matrix is {}x{}, grid has {m} points",
                values.nrows(),
                values.ncols()
            )));
        }
        let scale = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
        for i in 0..m {
            for j in 0..i {
                if (values[(i, j)] - values[(j, i)]).abs() > 1e-12 * scale {
                    return Err(MrpError::InvalidConfig(format!(
                        "tabulated kernel not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(ProjectionKernel::Tabulated { grid, values })
    }

    /// Evaluate `v(s, t)`; errors outside `[0, 1]^2`.
    pub fn value(&self, s: f64, t: f64) -> Result<f64> {
        for x in [s, t] {
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                return Err(MrpError::Domain(format!("kernel argument {x} outside [0, 1]")));
            }
        }
        Ok(self.value_unchecked(s, t))
    }

    /// Evaluation without the domain check, for quadrature loops whose
    /// nodes are in `[0, 1]` by construction.
    pub fn value_unchecked(&self, s: f64, t: f64) -> f64 {
        match self {
            ProjectionKernel::OrnsteinUhlenbeck { a } => (-a * (s - t).abs()).exp() / a,
            ProjectionKernel::Wiener => s.min(t),
            ProjectionKernel::Scaled { base, c } => c * base.value_unchecked(s, t),
            ProjectionKernel::Tabulated { grid, values } => {
                let locate = |x: f64| -> (usize, f64) {
                    let m = grid.len();
                    let i = grid.partition_point(|&g| g <= x).clamp(1, m - 1) - 1;
                    (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
                };
                let (i, fs) = locate(s);
                let (j, ft) = locate(t);
                let v00 = values[(i, j)];
                let v10 = values[(i + 1, j)];
                let v01 = values[(i, j + 1)];
                let v11 = values[(i + 1, j + 1)];
                v00 * (1.0 - fs) * (1.0 - ft)
                    + v10 * fs * (1.0 - ft)
                    + v01 * (1.0 - fs) * ft
                    + v11 * fs * ft
            }
        }
    }

    /// Short human-readable form for reports.
    pub fn describe(&self) -> String {
        match self {
            ProjectionKernel::OrnsteinUhlenbeck { a } => format!("ou(a={a})"),
            ProjectionKernel::Wiener => "wiener".into(),
            ProjectionKernel::Scaled { base, c } => format!("scaled({}, c={c})", base.describe()),
            ProjectionKernel::Tabulated { grid, .. } => format!("tabulated({} pts)", grid.len()),
        }
    }

    /// Sample `v` on a grid and report the largest symmetry defect; the
    /// kernel contract requires `v(s, t) = v(t, s)`.
    pub fn max_asymmetry_on(&self, probes: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &s in probes {
            for &t in probes {
                worst = worst.max((self.value_unchecked(s, t) - self.value_unchecked(t, s)).abs());
            }
        }
        worst
    }
}

/// Precomputed Gram matrix of a basis against a kernel.
#[derive(Debug, Clone)]
pub struct KernelGram {
    w: DMatrix<f64>,
    pub quad_order: usize,
    pub basis_signature: u64,
    pub kernel_desc: String,
}

impl KernelGram {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn basis_len(&self) -> usize {
        self.w.nrows()
    }

    /// `(lambda_min, lambda_max)` of `W`; the kernel PSD contract demands
    /// `lambda_min >= -1e-10 * lambda_max` up to roundoff.
    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = self.w.clone().symmetric_eigen();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &l in eig.eigenvalues.iter() {
            lo = lo.min(l);
            hi = hi.max(l);
        }
        (lo, hi)
    }
}

/// `W[l][m] = ∬ B_l(s) B_m(t) v(s, t) ds dt` by piecewise Gauss–Legendre
/// quadrature with the diagonal knot-span cells split along `s = t`.
pub fn kernel_gram(
    basis: &SplineBasis,
    kernel: &ProjectionKernel,
    quad_order: usize,
) -> Result<KernelGram> {
    if quad_order < 2 {
        return Err(MrpError::InvalidConfig(format!(
            "quad_order = {quad_order} must be >= 2"
        )));
    }
    let l = basis.len();
    let spans = basis.span_boundaries();
    let nc = spans.len() - 1;
    let (gx, gw) = gauss_legendre(quad_order);
    let ux: Vec<f64> = gx.iter().map(|&x| 0.5 * (x + 1.0)).collect();
    let uw: Vec<f64> = gw.iter().map(|&w| 0.5 * w).collect();

    let mut w = DMatrix::zeros(l, l);
    let add_node = |wmat: &mut DMatrix<f64>, s: f64, t: f64, weight: f64| -> Result<()> {
        let v = kernel.value_unchecked(s, t);
        let (os, bs) = basis.evaluate_active(s)?;
        let (ot, bt) = basis.evaluate_active(t)?;
        for (i, &bsi) in bs.iter().enumerate() {
            let row = os + i;
            let c = weight * v * bsi;
            for (j, &btj) in bt.iter().enumerate() {
                wmat[(row, ot + j)] += c * btj;
            }
        }
        Ok(())
    };

    for ci in 0..nc {
        let (a, b) = (spans[ci], spans[ci + 1]);
        for cj in 0..nc {
            let (c, d) = (spans[cj], spans[cj + 1]);
            if ci != cj {
                let (ha, ma) = (0.5 * (b - a), 0.5 * (a + b));
                let (hc, mc) = (0.5 * (d - c), 0.5 * (c + d));
                for i in 0..quad_order {
                    let s = ma + ha * gx[i];
                    for j in 0..quad_order {
                        let t = mc + hc * gx[j];
                        add_node(&mut w, s, t, ha * hc * gw[i] * gw[j])?;
                    }
                }
            } else {
                let h = b - a;
                for i in 0..quad_order {
                    let u = ux[i];
                    for j in 0..quad_order {
                        let v = ux[j];
                        let weight = h * h * uw[i] * uw[j] * u;
                        // lower triangle t <= s, upper triangle mirrored
                        add_node(&mut w, a + h * u, a + h * u * v, weight)?;
                        add_node(&mut w, a + h * u * v, a + h * u, weight)?;
                    }
                }
            }
        }
    }

    // Enforce bitwise symmetry so downstream traces can rely on it.
    let wt = w.transpose();
    let w = (w + wt).scale(0.5);

    Ok(KernelGram {
        w,
        quad_order,
        basis_signature: basis.signature(),
        kernel_desc: kernel.describe(),
    })
}

/// Frobenius pairing `Σ_lm W[l][m] M[l][m]` accumulated over symmetric
/// index pairs, so that `sym_frob_dot(W, M) == sym_frob_dot(W, M^T)`
/// bit-for-bit whenever `W` is bitwise symmetric.
pub(crate) fn sym_frob_dot(w: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let l = w.nrows();
    let mut acc = 0.0;
    for i in 0..l {
        acc += w[(i, i)] * m[(i, i)];
        for j in (i + 1)..l {
            acc += w[(i, j)] * (m[(i, j)] + m[(j, i)]);
        }
    }
    acc
}

fn check_bundle(c: &DMatrix<f64>, gram: &KernelGram, name: &str) -> Result<()> {
    if c.ncols() != gram.basis_len() {
        return Err(MrpError::ShapeMismatch(format!(
            "{name} has {} columns, Gram matrix is {}x{}",
            c.ncols(),
            gram.basis_len(),
            gram.basis_len()
        )));
    }
    Ok(())
}

/// `∬ X_i(s)^T X_j(t) v(s, t) ds dt` for basis-expanded curve bundles:
/// `trace(W c_j^T c_i)`, O(p L^2).
///
/// Exactly symmetric in its two bundles.
pub fn pair_integral(ci: &DMatrix<f64>, cj: &DMatrix<f64>, gram: &KernelGram) -> Result<f64> {
    check_bundle(ci, gram, "first bundle")?;
    check_bundle(cj, gram, "second bundle")?;
    if ci.nrows() != cj.nrows() {
        return Err(MrpError::ShapeMismatch(format!(
            "bundles have {} and {} dimensions",
            ci.nrows(),
            cj.nrows()
        )));
    }
    let m = ci.tr_mul(cj); // c_i^T c_j, L x L
    Ok(sym_frob_dot(&gram.w, &m))
}

/// `trace(A B^T)` without forming the product.
fn trace_prod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let (r, c) = (a.nrows(), a.ncols());
    let mut acc = 0.0;
    for i in 0..r {
        for j in 0..c {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// The quadruple-integral trace
/// `∬∬ tr{A(s) B(s1)^T C(t) D(t1)^T} v(s, t) v(s1, t1) ds dt ds1 dt1`
/// for basis-expanded bundles: `trace(W (C^T B) W (D^T A))`, O(p L^2 + L^3).
pub fn quad_trace(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    gram: &KernelGram,
) -> Result<f64> {
    for (m, name) in [(a, "A"), (b, "B"), (c, "C"), (d, "D")] {
        check_bundle(m, gram, name)?;
        if m.nrows() != a.nrows() {
            return Err(MrpError::ShapeMismatch(format!(
                "{name} has {} dimensions, A has {}",
                m.nrows(),
                a.nrows()
            )));
        }
    }
    let e = c.tr_mul(b); // C^T B
    let f = d.tr_mul(a); // D^T A
    let we = &gram.w * e;
    let wf = &gram.w * f;
    Ok(trace_prod(&we, &wf))
}

/// Internal form of [`quad_trace`] on premultiplied `E = C^T B` and
/// `F = D^T A`; used by the engine's cached pair loops.
pub(crate) fn quad_trace_lhs(e: &DMatrix<f64>, f: &DMatrix<f64>, gram: &KernelGram) -> f64 {
    let we = &gram.w * e;
    let wf = &gram.w * f;
    trace_prod(&we, &wf)
}
