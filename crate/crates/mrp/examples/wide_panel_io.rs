//! Ingestion walkthrough at real-data scale: a synthetic 360-dimensional
//! panel pair round-trips through the long CSV format and the full test,
//! with timings per stage.

use mrp::panel::DiscretePanel;
use mrp::stats::stream_rng;
use mrp::{load_long_csv, run_test, save_long_csv, TestOptions};
use rand::Rng;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let (n, p, points) = (6, 360, 50);
    let grid: Arc<[f64]> = (0..points)
        .map(|j| j as f64 / (points - 1) as f64)
        .collect::<Vec<_>>()
        .into();
    let make = |label: &str, tag: u64, shift: f64| {
        let values = (0..n)
            .map(|i| {
                let mut rng = stream_rng(42, &[tag, i as u64]);
                (0..p)
                    .map(|k| {
                        grid.iter()
                            .map(|&t| {
                                (2.0 * t + k as f64 / 60.0).sin()
                                    + 0.3 * rng.random::<f64>()
                                    + shift * t
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut panel = DiscretePanel::synchronized(label, grid.clone(), values);
        panel.group_label = label.into();
        panel
    };
    let px = make("X", 1, 0.0);
    let py = make("Y", 2, 0.25);

    let path = std::env::temp_dir().join("mrp_wide_panel.csv");
    let t0 = Instant::now();
    save_long_csv(&px, &py, &path).unwrap();
    let bytes = std::fs::metadata(&path).unwrap().len();
    println!(
        "wrote {} rows ({:.1} MB) in {:.2?}",
        2 * n * p * points,
        bytes as f64 / 1e6,
        t0.elapsed()
    );

    let t1 = Instant::now();
    let (lx, ly) = load_long_csv(&path).unwrap();
    println!(
        "loaded n = {}, m = {}, p = {} in {:.2?}",
        lx.n(),
        ly.n(),
        lx.p(),
        t1.elapsed()
    );

    let t2 = Instant::now();
    let result = run_test(&lx, &ly, &TestOptions::default()).unwrap();
    println!(
        "reconstructed and tested in {:.2?}: standardized = {:.2}, p-value = {:.2e}, reject = {}",
        t2.elapsed(),
        result.q_stat,
        result.p_value,
        result.reject
    );
    std::fs::remove_file(&path).ok();
}
