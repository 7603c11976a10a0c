//! Null-distribution diagnostics: QQ pairs of the standardized statistic
//! against standard normal quantiles, plus a Kolmogorov-Smirnov check.

use mrp::run_qq;
use mrp::sim::SimConfig;
use mrp::stats::{ks_test_std_normal, ols_slope};

fn main() {
    let cfg = SimConfig {
        n: 20,
        m: 20,
        p: 50,
        percent_equal: 100,
        replications: 150,
        grid_size: 60,
        seed: 5,
        ..SimConfig::default()
    };
    let pairs = run_qq(&cfg).unwrap();
    let theo: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let emp: Vec<f64> = pairs.iter().map(|p| p.1).collect();

    let (d, p_value) = ks_test_std_normal(&emp);
    println!(
        "{} null statistics: KS distance = {:.4}, p = {:.3}, QQ slope = {:.3}",
        emp.len(),
        d,
        p_value,
        ols_slope(&theo, &emp)
    );
    println!("theoretical,empirical");
    for (t, e) in pairs.iter().step_by(15) {
        println!("{t:.4},{e:.4}");
    }
}
