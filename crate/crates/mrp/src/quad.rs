//! Quadrature primitives.
//!
//! Everything here is deterministic. The projection-process covariances are
//! smooth except on the diagonal `s = t` (`|s-t|` and `min(s,t)` kinks), so
//! the 2-D integrators split every cell that crosses the diagonal into its
//! two triangles and integrate each through a collapsed-square (Duffy) map,
//! which restores spectral accuracy of Gauss–Legendre rules.

use nalgebra::DMatrix;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre polynomial with the usual cosine initial
/// guess; accurate to machine precision for the orders used here.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1, "quadrature order must be at least 1");
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let n = q as f64;
    for i in 0..q.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence up to degree q, plus derivative.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=q {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if q == 1 { x } else { p1 };
            pp = n * (x * p - p0) / (x * x - 1.0);
            let dx = p / pp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    if q % 2 == 1 {
        nodes[q / 2] = 0.0;
    }
    (nodes, weights)
}

/// `k + 1` span boundaries splitting `[0, 1]` uniformly into `k` pieces.
pub fn uniform_spans(k: usize) -> Vec<f64> {
    assert!(k >= 1);
    (0..=k).map(|j| j as f64 / k as f64).collect()
}

/// A 1-D piecewise Gauss–Legendre rule: `q` nodes per span.
#[derive(Debug, Clone)]
pub struct PiecewiseRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PiecewiseRule {
    pub fn new(spans: &[f64], q: usize) -> Self {
        let (gx, gw) = gauss_legendre(q);
        let mut nodes = Vec::with_capacity(q * (spans.len() - 1));
        let mut weights = Vec::with_capacity(q * (spans.len() - 1));
        for w in spans.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for i in 0..q {
                nodes.push(mid + half * gx[i]);
                weights.push(half * gw[i]);
            }
        }
        PiecewiseRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate a smooth 1-D function.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Composite trapezoid nodes and weights on `grid_size` equispaced points
/// covering `[0, 1]`. Used by the dense oracles.
pub fn trapezoid_rule(grid_size: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(grid_size >= 2);
    let h = 1.0 / (grid_size as f64 - 1.0);
    let nodes: Vec<f64> = (0..grid_size).map(|i| i as f64 * h).collect();
    let mut weights = vec![h; grid_size];
    weights[0] = 0.5 * h;
    weights[grid_size - 1] = 0.5 * h;
    (nodes, weights)
}

/// Trapezoid integral of sampled values on an arbitrary increasing grid.
pub fn trapezoid_on_grid(grid: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(grid.len(), values.len());
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
    }
    acc
}

/// Integrate `f(s, t)` over `[0,1]^2` where `f` may have a kink along the
/// diagonal `s = t` but is smooth elsewhere within each span rectangle.
///
/// Off-diagonal cells use a tensor Gauss–Legendre rule; diagonal cells are
/// split into their two triangles, each mapped to the unit square.
pub fn integrate2_diag(f: impl Fn(f64, f64) -> f64, spans: &[f64], q: usize) -> f64 {
    let (gx, gw) = gauss_legendre(q);
    // Nodes mapped to [0,1] for the Duffy variables.
    let ux: Vec<f64> = gx.iter().map(|&x| 0.5 * (x + 1.0)).collect();
    let uw: Vec<f64> = gw.iter().map(|&w| 0.5 * w).collect();
    let nc = spans.len() - 1;
    let mut total = 0.0;
    for ci in 0..nc {
        let (a, b) = (spans[ci], spans[ci + 1]);
        let ha = 0.5 * (b - a);
        let ma = 0.5 * (a + b);
        for cj in 0..nc {
            let (c, d) = (spans[cj], spans[cj + 1]);
            if ci != cj {
                let hc = 0.5 * (d - c);
                let mc = 0.5 * (c + d);
                let mut cell = 0.0;
                for i in 0..q {
                    let s = ma + ha * gx[i];
                    for j in 0..q {
                        let t = mc + hc * gx[j];
                        cell += gw[i] * gw[j] * f(s, t);
                    }
                }
                total += ha * hc * cell;
            } else {
                // Two triangles around the diagonal; (u, v) in [0,1]^2 with
                // jacobian h^2 * u each.
                let h = b - a;
                let mut cell = 0.0;
                for i in 0..q {
                    let u = ux[i];
                    for j in 0..q {
                        let v = ux[j];
                        let lower = f(a + h * u, a + h * u * v);
                        let upper = f(a + h * u * v, a + h * u);
                        cell += uw[i] * uw[j] * u * (lower + upper);
                    }
                }
                total += h * h * cell;
            }
        }
    }
    total
}

/// `∬∬ f(s, s1) g(t, t1) v(s, t) v(s1, t1) ds dt ds1 dt1` on `[0,1]^4`.
///
/// Reduced to dense matrix products over a shared 1-D piecewise rule:
/// with `V[i][j] = v(x_i, x_j)` and weight-scaled copies, the quadruple sum
/// factors as an elementwise contraction of `f` against `V diag(w) g diag(w) V`.
/// Cost is `O(M^3)` for `M` total nodes instead of `O(M^4)`.
pub fn quad4_pair(
    f: impl Fn(f64, f64) -> f64,
    g: impl Fn(f64, f64) -> f64,
    v: impl Fn(f64, f64) -> f64,
    rule: &PiecewiseRule,
) -> f64 {
    let m = rule.len();
    let x = &rule.nodes;
    let w = &rule.weights;
    let vm = DMatrix::from_fn(m, m, |i, j| v(x[i], x[j]));
    let gm = DMatrix::from_fn(m, m, |j, l| g(x[j], x[l]) * w[j] * w[l]);
    // B = V (w∘g∘w) V^T; V is symmetric for every covariance used here but
    // the transpose is kept for generality.
    let b = &vm * gm * vm.transpose();
    let mut total = 0.0;
    for i in 0..m {
        for k in 0..m {
            total += w[i] * w[k] * f(x[i], x[k]) * b[(i, k)];
        }
    }
    total
}

/// Same contraction as [`quad4_pair`] but with the `f` field replaced by a
/// pair of 1-D profiles: `∬∬ a(s) b(s1) g(t, t1) v(s, t) v(s1, t1)`.
pub fn quad4_profiles(
    a: impl Fn(f64) -> f64,
    b: impl Fn(f64) -> f64,
    g: impl Fn(f64, f64) -> f64,
    v: impl Fn(f64, f64) -> f64,
    rule: &PiecewiseRule,
) -> f64 {
    quad4_pair(|s, s1| a(s) * b(s1), g, v, rule)
}
