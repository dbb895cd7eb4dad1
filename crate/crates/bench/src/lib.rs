//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use strip_spectra::assembly::{apply_dirichlet, assemble_mass, assemble_stiffness};
use strip_spectra::{Mesh, Profile, ReducedSystem, Resolution, SymSparse};

/// Hat-capped strip of length `n` at `J = j`.
pub fn hat_mesh(n: f64, j: usize) -> Mesh {
    Mesh::build(&Profile::hat(1.0).expect("valid eps"), &Resolution::new(j).params(n, 0)).expect("valid mesh")
}

/// Reduced Dirichlet system of [`hat_mesh`].
pub fn hat_system(n: f64, j: usize) -> ReducedSystem {
    let mesh = hat_mesh(n, j);
    let a = assemble_stiffness(&mesh).expect("stiffness");
    let m = assemble_mass(&mesh).expect("mass");
    apply_dirichlet(&a, &m, &mesh, true).expect("reduced system")
}

/// `A - pi^2 M`, the matrix the eigensolver factorizes.
pub fn shifted(sys: &ReducedSystem) -> SymSparse {
    sys.a.linear_combination(1.0, &sys.m, -PI * PI)
}
