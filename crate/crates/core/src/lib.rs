//! Simulation toolkit for reading out many-body correlations of an LC-ladder
//! with a Josephson-junction impurity through a weakly coupled classical probe.
//!
//! The pipeline runs in four stages:
//!
//! * [`circuit`]: normal modes of the ladder and the cubic impurity coupling
//!   tensor under the rotating-wave constraint `n + m = l`.
//! * [`dynamics`]: golden-rule rate equations for the mode populations under
//!   drive and loss, and the non-equilibrium steady state.
//! * [`states`]: coherent, Fock and multi-mode squeezed trial states with
//!   closed-form quadratures and normal/anomalous correlators, plus a
//!   truncated Fock-space brute-force oracle.
//! * [`probe`] and [`extraction`]: the classical probe readout (coupler,
//!   flux-tuned junction, damped readout) and the inversion of its Fourier
//!   components back into mode-space correlators.
//!
//! Frequencies are angular (rad/s) and energies are in joules throughout.
//! Mode and site indices are 1-based.

pub mod circuit;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod extraction;
pub mod io;
pub mod probe;
pub mod states;

pub use circuit::{
    build_coupling_tensor, build_mode_basis, phase_observable_coefficients, CouplingTensor, Dispersion,
    FnDenominator, LadderConfig, ModeBasis,
};
pub use dynamics::{
    downconversion_rhs, evolve, steady_state, PopulationTrajectory, RateModel, SteadyState, Tolerances,
};
pub use error::{Error, Result};
pub use extraction::{
    assemble_and_solve, degeneracy_groups, extract_quadratures, plan_measurements, DegeneracyTable,
    Measurement, MeasurementPlan, PlanOptions, Recovery, Unknown,
};
pub use probe::{
    beta, junction_current, power_spectrum, predicted_fourier_components, simulate_readout, Damping,
    FourierComponent, Peak, PhiExt, ProbeConfig, Readout, ReadoutOptions, Spectrum, TimeSeries, Window,
};
pub use states::{
    alphas_from_populations, correlations, fock_space_oracle, squeezing_measure, Amplitude, CorrelationSet,
    SqueezePair, SqueezingMeasure, TrialState,
};

pub use num_complex::Complex64;
