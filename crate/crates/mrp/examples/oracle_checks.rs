//! Verification walkthrough: sample the projection distance straight from
//! its definition and compare with the closed form, then re-derive the
//! statistic and trace functionals by dense quadrature and compare with
//! the Gram-matrix reductions.

use mrp::engine::itr_hat;
use mrp::oracle::{
    dense_itr_hat, dense_mrp_hat, mc_mrp, seeded_smooth_mean, seeded_smooth_panels, OracleConfig,
};
use mrp::{kernel_gram, mrp_hat, mrp_population, ItrComponent, ProjectionKernel};

fn main() {
    let kernel = ProjectionKernel::ou(1.0).unwrap();

    let mu1 = seeded_smooth_mean(3, 11, 0);
    let mu2 = seeded_smooth_mean(3, 11, 1);
    let closed = mrp_population(&mu1, &mu2, &kernel, 16).unwrap();
    let cfg = OracleConfig {
        num_alpha_draws: 500,
        num_gamma_draws: 10,
        seed: 11,
        ..OracleConfig::default()
    };
    let (mc, se) = mc_mrp(&mu1, &mu2, &kernel, &cfg).unwrap();
    println!("projection distance: closed form {closed:.6}, Monte Carlo {mc:.6} ± {se:.6}");

    let (px, py) = seeded_smooth_panels(6, 3, 11);
    let gram = kernel_gram(&px.basis, &kernel, 16).unwrap();
    let fast = mrp_hat(&px, &py, &gram).unwrap();
    let dense = dense_mrp_hat(&px, &py, &kernel, 200).unwrap();
    println!(
        "statistic: Gram reduction {fast:.8}, dense trapezoid {dense:.8} (rel {:.1e})",
        (fast - dense).abs() / dense.abs()
    );

    for which in [ItrComponent::WithinX, ItrComponent::WithinY, ItrComponent::Between] {
        let fast = itr_hat(&px, &py, &gram, which).unwrap();
        let dense = dense_itr_hat(&px, &py, &kernel, 40, which).unwrap();
        println!(
            "trace functional {which:?}: reduction {fast:.6}, dense {dense:.6} (rel {:.1e})",
            (fast - dense).abs() / dense.abs()
        );
    }
}
