//! Two-sample mean testing for high-dimensional functional data.
//!
//! This crate tests whether two samples of `p`-dimensional random curves on
//! `[0,1]` share the same mean function. The test statistic projects the
//! curves twice, once over the `p` coordinates with a random direction and
//! once over time with a random process, which collapses the comparison to
//! a scalar distance with a closed form. The statistic is a U-statistic of
//! pairwise curve integrals, its variance is estimated by leave-out trace
//! functionals, and the standardized statistic is asymptotically standard
//! normal under the null, so no permutation or bootstrap calibration is
//! needed.
//!
//! Pipeline:
//!
//! 1. [`panel`]: raw discretized curves ([`DiscretePanel`]), validation and
//!    long-CSV ingestion.
//! 2. [`bspline`]: B-spline reconstruction of each curve
//!    ([`CurvePanel`]), with the knot-count rule `K = floor(N^r)`.
//! 3. [`kernel`]: projection-process covariances `v(s,t)` and their basis
//!    Gram matrix `W`, which reduces every curve integral to a small matrix
//!    trace.
//! 4. [`engine`]: the projection statistic, variance estimator, test
//!    decision, population functionals and power formulas.
//! 5. [`oracle`]: independent Monte Carlo and dense-quadrature checks of
//!    all closed forms and reductions.
//! 6. [`sim`]: data generators and the empirical size/power/QQ experiment
//!    runner.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod bspline;
pub mod engine;
pub mod error;
pub mod kernel;
pub mod oracle;
pub mod panel;
pub mod quad;
pub mod sim;
pub mod stats;

pub use bspline::{build_basis, knot_count, reconstruct_panel, SplineBasis};
pub use engine::{
    delta_shift, delta_shift_fixed, mrp_hat, mrp_population, power_estimate, power_estimate_fixed,
    run_test, sigma2_hat, ItrComponent, MeanFunction, MrpTestResult, TestOptions,
};
pub use error::{MrpError, Result};
pub use kernel::{kernel_gram, pair_integral, quad_trace, KernelGram, ProjectionKernel};
pub use panel::{load_long_csv, save_long_csv, validate_panel, CurvePanel, DiscreteCurve, DiscretePanel};
pub use sim::{run_qq, run_size_power, DependenceCase, ExperimentReport, SimConfig, SimFamily};
