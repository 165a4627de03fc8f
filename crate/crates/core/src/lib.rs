//! Simulation of a cavity-QED source of polarization-entangled photon pairs.
//!
//! A V-type three-level atom crosses two cavities, each supporting two
//! circularly polarized modes. Starting from one sigma+ and one sigma- photon
//! in cavity 1, two pi Rabi half-oscillations move one photon into cavity 2
//! and leave the cavities in the Bell state psi+.
//!
//! * [`fock_space`]: truncated basis, ladder operators, named states.
//! * [`model`]: parameters, coupling profiles, Hamiltonian and decay channels.
//! * [`coherent`]: closed-system integration, analytic oracles, calibration.
//! * [`mcwf`]: quantum-jump trajectories and parallel ensembles.
//! * [`lindblad`]: dense master-equation oracle.
//! * [`analysis`]: success probability, fidelity, CHSH and event statistics.

pub mod analysis;
pub mod coherent;
pub mod error;
pub mod fock_space;
pub mod lindblad;
pub mod mcwf;
pub mod model;
mod rk4;

pub use error::{Error, Result};
pub use fock_space::{Basis, BasisState, NamedState, StateVector};
pub use model::ModelParams;

/// Library version, recorded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
