//! Curve reconstruction: the knot-count rule, least-squares fitting, and
//! the error decay as observation counts grow.

use mrp::panel::DiscreteCurve;
use mrp::stats::stream_rng;
use mrp::{build_basis, knot_count};
use rand::Rng;

fn main() {
    let truth = |t: f64| (2.0 * std::f64::consts::PI * t).sin() + 0.5 * t;
    println!("knot rule K = floor(N^r), r = 0.5:");
    for n in [50usize, 200, 800] {
        let k = knot_count(n, 0.5).unwrap();
        println!("  N = {n:4} -> K = {k:2}, basis size L = {}", k + 4);
    }
    println!();
    println!("mean absolute error at 200 probe points, noisy samples of a fixed curve:");
    for n in [50usize, 200, 800] {
        let mut rng = stream_rng(3, &[n as u64]);
        let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let values: Vec<f64> = grid
            .iter()
            .map(|&t| truth(t) + 0.2 * (rng.random::<f64>() - 0.5))
            .collect();
        let basis = build_basis(4, knot_count(n, 0.5).unwrap());
        let coef = mrp::bspline::fit_curve(&DiscreteCurve::new(grid, values), &basis).unwrap();
        let mae: f64 = (0..200)
            .map(|i| {
                let t = i as f64 / 199.0;
                let b = basis.evaluate(t).unwrap();
                let fit: f64 = b.iter().zip(&coef).map(|(b, c)| b * c).sum();
                (fit - truth(t)).abs()
            })
            .sum::<f64>()
            / 200.0;
        println!("  N = {n:4} -> MAE = {mae:.5}");
    }
}
