//! Numerics for deforming Gabor frames with quadratic Hamiltonian flows.
//!
//! The crate is split along the objects involved:
//!
//! * [`symplectic`]: the standard symplectic form, quadratic Hamiltonians and
//!   their linear flows `S_t = exp(tJM)`.
//! * [`lattice`]: finite separated point sets, ellipsoids, point
//!   classification, safe thickening radii and the point-set deformation.
//! * [`flow`]: the smooth cutoff of an ellipsoid, the truncated Hamiltonian
//!   and RK4 integration of its flow.
//! * [`quantum`]: the periodized one-dimensional grid, states and the
//!   Heisenberg-Weyl operators `T(z)`.
//! * [`metaplectic`]: Weyl quantization of quadratic Hamiltonians and the
//!   propagator `exp(-itH/ħ)` lifting `S_t`.
//! * [`frame`]: Gabor systems, frame operators, frame bounds and the window
//!   deformation experiments.
//!
//! Phase-space points are ordered `(x_1..x_n, p_1..p_n)` and
//! `J = [[0, I], [-I, 0]]` throughout, so Hamilton's equations read
//! `ż = J∇H(z)`.

pub mod error;
mod fft;
pub mod flow;
pub mod format;
pub mod frame;
pub mod lattice;
pub mod metaplectic;
pub mod quantum;
pub mod symplectic;

pub use error::{Error, Result};
pub use flow::{BumpSpec, FepsReport, TruncatedHamiltonian};
pub use frame::{
    BoundsDomain, DeformationReport, FrameBounds, GaborSystem, ProbeSpace, ReportSummary,
};
pub use lattice::{Classification, Deformation, Ellipsoid, PhaseBox, PointSet, Projection};
pub use metaplectic::{HamiltonianSpectrum, ProbeSet, Propagator, QuantizedHamiltonian};
pub use quantum::{GridSpec, State};
pub use symplectic::{PhasePoint, QuadraticHamiltonian, SymplecticMatrix, SymplecticPath};

/// Complex scalar used by all quantum-side code.
pub use faer::c64;

/// Sets the worker count for dense linear algebra and row-parallel loops.
///
/// Only the first call can size the row pool; later calls still update the
/// linear-algebra setting.
pub fn set_threads(k: usize) {
    let k = k.max(1);
    faer::set_global_parallelism(if k == 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(k)
    });
    if rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .is_err()
    {
        log::debug!("row pool already initialized");
    }
}
