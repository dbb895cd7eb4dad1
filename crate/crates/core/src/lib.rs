//! Finite-element spectral asymptotics for Dirichlet Laplacians on long
//! strip domains with a curved left cap.
//!
//! The domain is `{0 < y < 1, -phi(y) < x < N}`. The crate builds a
//! structured P1 mesh of it, assembles stiffness and mass matrices, computes
//! the lowest eigenpairs, solves the half-infinite scattering problem for the
//! phase `a(phi)` and the constant `b`, and checks the large-`N` expansion
//! of the eigenvalues against computed data.

pub mod assembly;
pub mod error;
pub mod features;
pub mod mesh;
pub mod profile;
pub mod quad;
pub mod report;
pub mod scattering;
pub mod sparse;
pub mod spectra;

pub use assembly::{ReducedSystem, SymSparse};
pub use error::{Error, Result};
pub use features::{Figure2Config, Figure2Report, Localization, MaxPoint, NodalCurve};
pub use mesh::{Mesh, MeshParams, MeshQuality, NodeTag, Resolution, RightEnd};
pub use quad::Extrapolation;
pub use scattering::{PhaseEstimate, ScatterField};
pub use profile::{Profile, ProfileKind, ProfileSpec};
pub use sparse::{EigenOptions, EigenPair, Factorization};
pub use spectra::{EigenField, EigenLadder, ExpansionReport};
