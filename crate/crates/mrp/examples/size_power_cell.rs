//! One empirical size/power cell: generate panels per replication,
//! reconstruct, test, and report the rejection rate.
//!
//! Pass `--full` to run a 400-replication cell at the reference sizes
//! (takes a few seconds); the default is a small fast cell.

use mrp::sim::{DependenceCase, SimConfig, SimFamily};
use mrp::{run_size_power, ExperimentReport};

fn main() {
    let full = std::env::args().any(|a| a == "--full");
    let cfg = if full {
        SimConfig {
            family: SimFamily::Sim1,
            dependence: DependenceCase::CaseI,
            n: 25,
            m: 25,
            p: 20,
            percent_equal: 90,
            replications: 400,
            seed: 1,
            ..SimConfig::default()
        }
    } else {
        SimConfig {
            n: 12,
            m: 12,
            p: 8,
            grid_size: 50,
            percent_equal: 75,
            replications: 60,
            seed: 1,
            ..SimConfig::default()
        }
    };
    let report = run_size_power(&cfg).unwrap();
    println!(
        "rejection rate = {:.4} ± {:.4}  ({} replications in {} ms)",
        report.rejection_rate,
        report.mc_standard_error,
        cfg.replications,
        report.wall_time_ms
    );
    println!("{}", ExperimentReport::csv_header());
    println!("{}", report.to_csv_row());
}
