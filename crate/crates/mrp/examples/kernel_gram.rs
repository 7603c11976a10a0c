//! Projection kernels and their basis Gram matrix: values, positive
//! semi-definiteness, and quadrature convergence.

use mrp::{build_basis, kernel_gram, ProjectionKernel};

fn main() {
    let ou = ProjectionKernel::ou(1.0).unwrap();
    let wiener = ProjectionKernel::wiener();
    println!("kernel values at (0.3, 0.7):");
    println!("  ou(a=1) = {:.6}", ou.value(0.3, 0.7).unwrap());
    println!("  wiener  = {:.6}", wiener.value(0.3, 0.7).unwrap());

    let basis = build_basis(4, 10); // L = 14
    for kernel in [&ou, &wiener] {
        let gram = kernel_gram(&basis, kernel, 16).unwrap();
        let gram2 = kernel_gram(&basis, kernel, 32).unwrap();
        let drift = (gram.matrix() - gram2.matrix())
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let (lo, hi) = gram.eigen_range();
        println!(
            "{}: L = {}, eigenvalues in [{lo:.2e}, {hi:.2e}], max drift when doubling quadrature = {drift:.1e}",
            kernel.describe(),
            gram.basis_len()
        );
    }

    // a single constant basis function integrates the kernel itself
    let constant = build_basis(1, 0);
    let w = kernel_gram(&constant, &wiener, 8).unwrap();
    println!(
        "double integral of min(s,t) over the unit square = {:.6} (analytic 1/3)",
        w.matrix()[(0, 0)]
    );
}
