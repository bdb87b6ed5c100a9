//! Exact master-equation simulation of collective spontaneous emission by
//! `N` two-level atoms in free space.
//!
//! Natural units are used throughout: lengths in `1/k`, rates in `Γ` and
//! times in `1/Γ`.
//!
//! Basis convention: a basis index `b ∈ [0, 2^N)` encodes atom `j` as bit
//! `j`, with bit value 1 meaning the excited state `|e⟩` and 0 the ground
//! state `|g⟩`. Every module uses this convention.

pub mod coupling;
pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod geometry;
pub mod manybody;
pub mod photodetection;
pub mod runner;
pub mod spectrum;

#[cfg(test)]
mod testutil;

pub use num_complex::Complex64;

pub use coupling::{build_couplings, greens_tensor, CouplingMatrices, KernelKind};
pub use dynamics::{
    integrate, liouvillian_rhs, steady_state, DriveParameters, IntegratorSettings,
    ObservableSeries, Observer,
};
pub use entanglement::{
    aggregate_metrics, concurrence_4x4, concurrence_matrix, ConcurrenceMatrix, PairMetrics,
};
pub use error::{Error, Result};
pub use geometry::{build_chain, sample_cloud, AtomicConfiguration};
pub use manybody::{
    apply_local, excitation_populations, make_initial_state, partial_trace_pair, DensityMatrix,
    InitialState, LocalOperator, OperatorKind, Side,
};
pub use photodetection::{g2_equal_time, windowed_g2, DetectionGeometry, G2Sample};
pub use spectrum::{
    entanglement_peak_time, sector_effective_hamiltonian, sector_spectrum, subradiant_lifetime,
    SectorSpectrum,
};

/// Largest atom number accepted by the dense many-body routines.
pub const MAX_ATOMS: usize = 12;
