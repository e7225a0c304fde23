//! Stochastic Liouville simulation of excitation energy transport across a
//! chromophore network, with temporally and spatially correlated classical
//! noise. The bundled instance is the seven-site FMO monomer.
//!
//! The density matrix lives on an (n+2)-dimensional basis: index 0 is the
//! shared electronic ground state, indices 1..=n are the single-excitation
//! site states, and index n+1 is the trap. Sites are numbered 1..=n
//! throughout the public API, matching the chromophore labels, so the
//! density-matrix index of site j is simply j.
//!
//! Internal units: energies in cm^-1, times in fs, distances in Angstrom
//! (except the inverse-square spatial correlation model, which works in nm;
//! see [`noise::SpatialModel::InverseSquare`]).

pub mod constants;
pub mod dynamics;
pub mod ensemble;
pub mod model;
pub mod noise;
pub mod rates;

pub use dynamics::{propagate, RateParams, SystemState, TrajectoryResult};
pub use ensemble::{fit_survival, observables, run_ensemble, EnsembleSetup, EnsembleStatistics};
pub use model::{diagonalize, dominant_overlaps, ExcitonBasis, Geometry, SiteHamiltonian};
pub use noise::{
    build_correlation_matrix, cholesky, find_max_beta, sample_field, CorrelationMatrix,
    NoiseConfig, NoiseGenerator, NoiseSource, SpatialModel,
};
pub use rates::{gamma, lorentzian_spectrum, optimal_tau_c, OptimalTauC, RateTable};
