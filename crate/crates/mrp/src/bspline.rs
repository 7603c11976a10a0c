//! B-spline bases and least-squares curve reconstruction.
//!
//! A [`SplineBasis`] is a clamped B-spline basis on `[0, 1]` with uniform
//! interior knots. The number of interior knots follows the rate rule
//! `K = floor(N^r)` for `N` observation points and a rate `r` in `(0, 1]`,
//! and each curve is reconstructed by ordinary least squares on its own
//! grid. All cells of a reconstructed panel share one basis so that the
//! downstream pairwise integrals reduce to a single Gram matrix.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{MrpError, Result};
use crate::panel::{validate_panel, CurvePanel, DiscreteCurve, DiscretePanel};

/// Clamped B-spline basis on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    order: usize,
    /// Full knot vector: `order` copies of 0, the interior knots, `order`
    /// copies of 1.
    knots: Vec<f64>,
}

impl SplineBasis {
    /// Build a basis from explicit interior knots (strictly increasing,
    /// inside `(0, 1)`).
    pub fn new(order: usize, interior_knots: &[f64]) -> Result<Self> {
        if order < 1 {
            return Err(MrpError::InvalidConfig("spline order must be >= 1".into()));
        }
        if interior_knots
            .iter()
            .any(|&t| !t.is_finite() || t <= 0.0 || t >= 1.0)
            || interior_knots.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(MrpError::InvalidConfig(
                "interior knots must be strictly increasing inside (0, 1)".into(),
            ));
        }
        let mut knots = Vec::with_capacity(2 * order + interior_knots.len());
        knots.extend(std::iter::repeat_n(0.0, order));
        knots.extend_from_slice(interior_knots);
        knots.extend(std::iter::repeat_n(1.0, order));
        Ok(SplineBasis { order, knots })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions `L = interior knots + order`.
    pub fn len(&self) -> usize {
        self.knots.len() - self.order
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.order..self.knots.len() - self.order]
    }

    /// Boundaries of the knot spans: `0, τ_1, ..., τ_K, 1`.
    pub fn span_boundaries(&self) -> Vec<f64> {
        let mut spans = Vec::with_capacity(self.interior_knots().len() + 2);
        spans.push(0.0);
        spans.extend_from_slice(self.interior_knots());
        spans.push(1.0);
        spans
    }

    /// Structural fingerprint used to assert that two panels (or a panel
    /// and a Gram matrix) really share one basis.
    pub fn signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        mix(self.order as u64);
        for &k in &self.knots {
            mix(k.to_bits());
        }
        h
    }

    fn find_span(&self, t: f64) -> usize {
        let l = self.len();
        let degree = self.order - 1;
        if t >= self.knots[l] {
            return l - 1;
        }
        let mut lo = degree;
        let mut hi = l;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// The `order` basis values that are nonzero at `t`, plus the index of
    /// the first one. Cox–de Boor triangular recurrence.
    pub fn evaluate_active(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        if !t.is_finite() || !(0.0..=1.0).contains(&t) {
            return Err(MrpError::Domain(format!("t = {t} outside [0, 1]")));
        }
        let degree = self.order - 1;
        let span = self.find_span(t);
        let mut vals = vec![0.0; self.order];
        vals[0] = 1.0;
        let mut left = vec![0.0; self.order];
        let mut right = vec![0.0; self.order];
        for j in 1..=degree {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            vals[j] = saved;
        }
        Ok((span - degree, vals))
    }

    /// Full length-`L` basis vector at `t`. The entries sum to 1.
    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        let (offset, active) = self.evaluate_active(t)?;
        let mut out = vec![0.0; self.len()];
        out[offset..offset + active.len()].copy_from_slice(&active);
        Ok(out)
    }

    /// Design matrix with one row of basis values per grid point.
    pub fn design_matrix(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let mut a = DMatrix::zeros(grid.len(), self.len());
        for (row, &t) in grid.iter().enumerate() {
            let (offset, active) = self.evaluate_active(t)?;
            for (j, &b) in active.iter().enumerate() {
                a[(row, offset + j)] = b;
            }
        }
        Ok(a)
    }
}

/// Knot-count rule `K = max(1, floor(N^r))`.
///
/// The tiny additive guard keeps exact powers (e.g. `100^0.5`) from
/// flooring down on platforms where `powf` rounds below the integer.
pub fn knot_count(n: usize, r: f64) -> Result<usize> {
    if r.is_nan() || r <= 0.0 || r > 1.0 {
        return Err(MrpError::Domain(format!("knot rate r = {r} outside (0, 1]")));
    }
    if n < 2 {
        return Err(MrpError::Domain(format!("need N >= 2 observations, got {n}")));
    }
    let k = ((n as f64).powf(r) + 1e-9).floor() as usize;
    Ok(k.max(1))
}

/// Basis with `k` uniform interior knots at `j / (k + 1)`.
pub fn build_basis(order: usize, k: usize) -> SplineBasis {
    let interior: Vec<f64> = (1..=k).map(|j| j as f64 / (k + 1) as f64).collect();
    SplineBasis::new(order, &interior).expect("uniform interior knots are valid")
}

/// Full-length basis vector at `t` (free-function form of
/// [`SplineBasis::evaluate`]).
pub fn evaluate_basis(basis: &SplineBasis, t: f64) -> Result<Vec<f64>> {
    basis.evaluate(t)
}

/// Precomputed least-squares factorization for one observation grid,
/// reusable across all curves sharing that grid.
struct FittedDesign {
    svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    tol: f64,
    rank: usize,
}

impl FittedDesign {
    fn new(basis: &SplineBasis, grid: &[f64]) -> Result<Self> {
        let l = basis.len();
        if grid.len() < l {
            return Err(MrpError::Underdetermined {
                at: String::new(),
                points: grid.len(),
                basis_len: l,
            });
        }
        let a = basis.design_matrix(grid)?;
        let svd = nalgebra::SVD::new(a, true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
        let tol = smax * f64::EPSILON * grid.len().max(l) as f64;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        Ok(FittedDesign { svd, tol, rank })
    }

    fn solve(&self, values: &[f64], basis_len: usize) -> Result<DVector<f64>> {
        if self.rank < basis_len {
            return Err(MrpError::RankDeficient {
                at: String::new(),
                rank: self.rank,
                basis_len,
            });
        }
        let b = DVector::from_column_slice(values);
        self.svd
            .solve(&b, self.tol)
            .map_err(|e| MrpError::InvalidConfig(format!("svd solve failed: {e}")))
    }
}

/// Ordinary least-squares coefficients of one curve in the given basis.
///
/// Errors with `Underdetermined` when the curve has fewer points than basis
/// functions and `RankDeficient` when the design loses rank (for instance
/// when all points cluster in a few knot spans).
pub fn fit_curve(curve: &DiscreteCurve, basis: &SplineBasis) -> Result<Vec<f64>> {
    if curve.values.len() != curve.grid.len() {
        return Err(MrpError::InvalidPanel(format!(
            "curve has {} grid points but {} values",
            curve.grid.len(),
            curve.values.len()
        )));
    }
    let design = FittedDesign::new(basis, &curve.grid)?;
    Ok(design.solve(&curve.values, basis.len())?.as_slice().to_vec())
}

fn grid_key(grid: &[f64]) -> Vec<u64> {
    grid.iter().map(|t| t.to_bits()).collect()
}

fn locate(e: MrpError, sample: &str, dim: &str) -> MrpError {
    let at = format!(" for sample {sample}, dim {dim}");
    match e {
        MrpError::Underdetermined { points, basis_len, .. } => MrpError::Underdetermined {
            at,
            points,
            basis_len,
        },
        MrpError::RankDeficient { rank, basis_len, .. } => MrpError::RankDeficient {
            at,
            rank,
            basis_len,
        },
        other => other,
    }
}

/// Reconstruct every cell of a panel against one shared basis.
///
/// Factorizations are cached per distinct grid, so synchronized panels pay
/// for a single decomposition. Cells are fitted in parallel; assembly is
/// index-ordered and deterministic regardless of scheduling.
pub fn reconstruct_panel_with_basis(
    panel: &DiscretePanel,
    basis: Arc<SplineBasis>,
) -> Result<CurvePanel> {
    if let Some(v) = validate_panel(panel).first() {
        return Err(MrpError::InvalidPanel(format!(
            "group {} {v}",
            panel.group_label
        )));
    }
    let (n, p, l) = (panel.n(), panel.p(), basis.len());

    let mut designs: HashMap<Vec<u64>, FittedDesign> = HashMap::new();
    for (i, row) in panel.curves.iter().enumerate() {
        for (k, curve) in row.iter().enumerate() {
            if let std::collections::hash_map::Entry::Vacant(slot) =
                designs.entry(grid_key(&curve.grid))
            {
                let design = FittedDesign::new(&basis, &curve.grid)
                    .map_err(|e| locate(e, &panel.sample_ids[i], &panel.dim_labels[k]))?;
                slot.insert(design);
            }
        }
    }

    let coeffs: Result<Vec<DMatrix<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut c = DMatrix::zeros(p, l);
            for k in 0..p {
                let curve = &panel.curves[i][k];
                let design = &designs[&grid_key(&curve.grid)];
                let coef = design
                    .solve(&curve.values, l)
                    .map_err(|e| locate(e, &panel.sample_ids[i], &panel.dim_labels[k]))?;
                c.row_mut(k).copy_from_slice(coef.as_slice());
            }
            Ok(c)
        })
        .collect();

    Ok(CurvePanel {
        basis,
        coeffs: coeffs?,
    })
}

/// Reconstruct a panel with a basis sized by its own smallest cell:
/// `K = knot_count(min N, r)`.
pub fn reconstruct_panel(panel: &DiscretePanel, r: f64, order: usize) -> Result<CurvePanel> {
    let basis = shared_basis(&[panel], r, order)?;
    reconstruct_panel_with_basis(panel, basis)
}

/// One basis for a collection of panels, sized by the smallest observation
/// count over every cell of every panel.
pub fn shared_basis(panels: &[&DiscretePanel], r: f64, order: usize) -> Result<Arc<SplineBasis>> {
    if order < 2 {
        return Err(MrpError::InvalidConfig(
            "reconstruction requires spline order >= 2".into(),
        ));
    }
    let min_n = panels
        .iter()
        .map(|p| p.min_points())
        .min()
        .unwrap_or(0);
    let k = knot_count(min_n, r)?;
    Ok(Arc::new(build_basis(order, k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn knot_count_rule() {
        assert_eq!(knot_count(365, 0.5).unwrap(), 19);
        assert_eq!(knot_count(2, 1.0).unwrap(), 2);
        assert_eq!(knot_count(100, 0.5).unwrap(), 10);
        assert_eq!(knot_count(2, 0.5).unwrap(), 1);
        assert!(knot_count(100, 0.0).is_err());
        assert!(knot_count(100, 1.5).is_err());
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(build_basis(4, 0).len(), 4); // cubic Bernstein
        assert_eq!(build_basis(4, 6).len(), 10);
        assert_eq!(build_basis(2, 1).len(), 3);
        assert_eq!(build_basis(1, 0).len(), 1); // single constant function
    }

    #[test]
    fn clamped_endpoint_values() {
        let basis = build_basis(4, 5);
        let at0 = basis.evaluate(0.0).unwrap();
        assert_relative_eq!(at0[0], 1.0, epsilon = 1e-15);
        assert!(at0[1..].iter().all(|&b| b == 0.0));
        let at1 = basis.evaluate(1.0).unwrap();
        assert_relative_eq!(at1[basis.len() - 1], 1.0, epsilon = 1e-15);
        assert!(at1[..basis.len() - 1].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn linear_hats_at_quarter() {
        let basis = build_basis(2, 1);
        let v = basis.evaluate(0.25).unwrap();
        assert_relative_eq!(v[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(v[1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(v[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn partition_of_unity_on_random_points() {
        let basis = build_basis(4, 9);
        let mut rng = crate::stats::stream_rng(11, &[0]);
        for _ in 0..1000 {
            let t: f64 = rng.random();
            let sum: f64 = basis.evaluate(t).unwrap().iter().sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
        }
        assert!(basis.evaluate(1.0 + 1e-12).is_err());
        assert!(basis.evaluate(-0.1).is_err());
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn constant_curve_gives_unit_coefficients() {
        let basis = build_basis(4, 6);
        let g = grid(40);
        let curve = DiscreteCurve::new(g, vec![1.0; 40]);
        let coef = fit_curve(&curve, &basis).unwrap();
        for c in coef {
            assert_relative_eq!(c, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn line_is_reproduced_at_grid_points() {
        let basis = build_basis(2, 3);
        let g = grid(25);
        let curve = DiscreteCurve::new(g.clone(), g.clone());
        let coef = fit_curve(&curve, &basis).unwrap();
        for &t in &g {
            let b = basis.evaluate(t).unwrap();
            let fitted: f64 = b.iter().zip(&coef).map(|(b, c)| b * c).sum();
            assert_relative_eq!(fitted, t, epsilon = 1e-9);
        }
    }

    #[test]
    fn spline_space_member_is_reproduced() {
        let basis = build_basis(4, 5);
        let truth: Vec<f64> = (0..basis.len()).map(|l| (l as f64 * 0.7).sin()).collect();
        let g = grid(60);
        let values: Vec<f64> = g
            .iter()
            .map(|&t| {
                basis
                    .evaluate(t)
                    .unwrap()
                    .iter()
                    .zip(&truth)
                    .map(|(b, c)| b * c)
                    .sum()
            })
            .collect();
        let coef = fit_curve(&DiscreteCurve::new(g.clone(), values.clone()), &basis).unwrap();
        for (j, &t) in g.iter().enumerate() {
            let b = basis.evaluate(t).unwrap();
            let fitted: f64 = b.iter().zip(&coef).map(|(b, c)| b * c).sum();
            assert_relative_eq!(fitted, values[j], epsilon = 1e-9);
        }
    }

    #[test]
    fn underdetermined_and_rank_deficient_fits_error() {
        let basis = build_basis(4, 6); // L = 10
        let g = grid(5);
        let err = fit_curve(&DiscreteCurve::new(g, vec![0.0; 5]), &basis).unwrap_err();
        assert!(matches!(err, MrpError::Underdetermined { .. }), "{err}");

        // 12 points, all inside the first knot span: only 4 active columns.
        let clustered: Vec<f64> = (0..12).map(|i| 0.01 + 0.008 * i as f64).collect();
        let err = fit_curve(&DiscreteCurve::new(clustered, vec![0.0; 12]), &basis).unwrap_err();
        assert!(matches!(err, MrpError::RankDeficient { .. }), "{err}");
    }

    #[test]
    fn perturbing_coefficients_never_reduces_rss() {
        let basis = build_basis(4, 4);
        let g = grid(50);
        let mut rng = crate::stats::stream_rng(5, &[1]);
        let values: Vec<f64> = g
            .iter()
            .map(|&t| (6.0 * t).sin() + 0.1 * rng.random::<f64>())
            .collect();
        let curve = DiscreteCurve::new(g.clone(), values.clone());
        let coef = fit_curve(&curve, &basis).unwrap();
        let rss = |c: &[f64]| -> f64 {
            g.iter()
                .zip(&values)
                .map(|(&t, &y)| {
                    let b = basis.evaluate(t).unwrap();
                    let f: f64 = b.iter().zip(c).map(|(b, c)| b * c).sum();
                    (y - f) * (y - f)
                })
                .sum()
        };
        let base = rss(&coef);
        for l in 0..coef.len() {
            for delta in [-1e-3, 1e-3] {
                let mut pert = coef.clone();
                pert[l] += delta;
                assert!(rss(&pert) >= base, "perturbing coefficient {l} reduced RSS");
            }
        }
    }

    #[test]
    fn reconstruction_error_decreases_with_n() {
        let truth = |t: f64| (2.0 * std::f64::consts::PI * t).sin() + 0.5 * t;
        let probes: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let mut maes = Vec::new();
        for (si, n) in [50usize, 200, 800].into_iter().enumerate() {
            let mut total = 0.0;
            let reps = 5;
            for rep in 0..reps {
                let mut rng = crate::stats::stream_rng(42, &[si as u64, rep]);
                let g = grid(n);
                let values: Vec<f64> = g
                    .iter()
                    .map(|&t| truth(t) + 0.2 * rng.random::<f64>() - 0.1)
                    .collect();
                let k = knot_count(n, 0.5).unwrap();
                let basis = build_basis(4, k);
                let coef = fit_curve(&DiscreteCurve::new(g, values), &basis).unwrap();
                let mae: f64 = probes
                    .iter()
                    .map(|&t| {
                        let b = basis.evaluate(t).unwrap();
                        let f: f64 = b.iter().zip(&coef).map(|(b, c)| b * c).sum();
                        (f - truth(t)).abs()
                    })
                    .sum::<f64>()
                    / probes.len() as f64;
                total += mae;
            }
            maes.push(total / 5.0);
        }
        assert!(maes[0] > maes[1] && maes[1] > maes[2], "maes = {maes:?}");
    }

    #[test]
    fn reconstruct_panel_shares_basis_and_shapes() {
        let g: Arc<[f64]> = grid(365).into();
        let values = vec![vec![vec![0.0; 365]; 2]; 3];
        let panel = DiscretePanel::synchronized("X", g, values);
        let cp = reconstruct_panel(&panel, 0.5, 4).unwrap();
        assert_eq!(cp.basis_len(), 23); // 19 interior knots + order 4
        assert_eq!((cp.n(), cp.p()), (3, 2));
        for c in &cp.coeffs {
            assert!(c.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn reconstruct_panel_names_failing_cell() {
        let g: Arc<[f64]> = grid(100).into();
        let short: Arc<[f64]> = grid(4).into();
        let mut panel = DiscretePanel::synchronized("X", g, vec![vec![vec![0.0; 100]; 2]; 2]);
        panel.curves[1][0] = DiscreteCurve::new(short, vec![0.0; 4]);
        let err = reconstruct_panel(&panel, 0.5, 4).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("000002") && msg.contains("000001"), "{msg}");
    }
}
