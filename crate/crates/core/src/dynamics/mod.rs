//! Time evolution under the collective master equation.
//!
//! The Hamiltonian in the frame rotating at the drive frequency is
//!
//! ```text
//! H = −Δ Σ_j σ_j⁺σ_j⁻ + ½ Σ_j (Ω e^{ik·r_j} σ_j⁺ + h.c.) + Σ_{j≠m} Δ^{jm} σ_j⁺σ_m⁻
//! ```
//!
//! and the dissipator is `½ Σ_{j,m} Γ^{jm} (2σ_j⁻ρσ_m⁺ − {σ_m⁺σ_j⁻, ρ})`.

mod dopri;
pub mod liouvillian;
mod series;
mod steady;

use std::time::Instant;

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use dopri::{StepStats, Tolerances};
pub use liouvillian::{ExcitationClasses, Liouvillian, PackedLayout};
pub use series::{FnObserver, ObservableSeries, Observer, PopulationObserver};
pub(crate) use series::{fmt_cell, fmt_number};
pub use steady::{steady_state, DENSE_STEADY_STATE_MAX_ATOMS, STEADY_STATE_RESIDUAL_TOL};

use crate::coupling::CouplingMatrices;
use crate::error::{Error, Result};
use crate::geometry::AtomicConfiguration;
use crate::manybody::{DensityMatrix, HERMITICITY_TOL, TRACE_TOL};
use dopri::{Dopri5, StepError};

/// Undriven runs stop evolving the highest excitation manifolds once every
/// element involving them is below this; they are only fed from above, so
/// they can no longer matter.
pub const DEPLETED: f64 = 1e-20;

/// Trajectories abort when the smallest eigenvalue drops below this.
pub const POSITIVITY_ABORT: f64 = -1e-6;

/// Classical plane-wave drive (rates in units of `Γ`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParameters {
    pub rabi: f64,
    pub detuning: f64,
    pub wavevector_direction: Vector3<f64>,
}

impl DriveParameters {
    /// Resonant drive along `x̂`.
    pub fn resonant(rabi: f64) -> Self {
        Self {
            rabi,
            detuning: 0.0,
            wavevector_direction: Vector3::x(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.wavevector_direction.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("drive direction must be a unit vector, |k̂| = {norm}")));
        }
        if !self.rabi.is_finite() || !self.detuning.is_finite() {
            return Err(Error::invalid("drive parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    /// Local errors in each excitation block of `ρ` are measured against
    /// `abs_tol + rel_tol · max|ρ_block|`, so weakly populated manifolds
    /// keep their relative accuracy.
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest allowed step, units of `1/Γ`.
    pub max_step: f64,
    /// Strictly increasing, starting at 0.
    pub output_times: Vec<f64>,
    /// Check trace, Hermiticity and positivity at every output time.
    #[serde(default = "default_true")]
    pub check_invariants: bool,
    /// Stop evolving excitation manifolds once they are depleted (see
    /// [`DEPLETED`]); undriven runs only.
    #[serde(default = "default_true")]
    pub drop_depleted: bool,
}

fn default_true() -> bool {
    true
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-20,
            max_step: 1.0,
            output_times: vec![0.0],
            check_invariants: true,
            drop_depleted: true,
        }
    }
}

impl IntegratorSettings {
    pub fn with_times(output_times: Vec<f64>) -> Self {
        Self {
            output_times,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::invalid("integrator tolerances must be positive"));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::invalid("max_step must be positive"));
        }
        match self.output_times.first() {
            Some(&t0) if t0 == 0.0 => {}
            _ => return Err(Error::invalid("output times must start at 0")),
        }
        if self.output_times.windows(2).any(|w| !(w[1] > w[0])) || self.output_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("output times must be finite and strictly increasing"));
        }
        Ok(())
    }
}

/// `0` followed by `samples` log-spaced times from `t_first` to `t_end`.
pub fn log_grid(t_first: f64, t_end: f64, samples: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    if samples == 0 {
        return out;
    }
    if samples == 1 {
        out.push(t_end);
        return out;
    }
    let (l0, l1) = (t_first.ln(), t_end.ln());
    out.extend((0..samples).map(|i| (l0 + (l1 - l0) * i as f64 / (samples - 1) as f64).exp()));
    // exp(ln t) need not round-trip
    out[1] = t_first;
    out[samples] = t_end;
    out.dedup();
    out
}

/// `samples + 1` evenly spaced times from 0 to `t_end`.
pub fn linear_grid(t_end: f64, samples: usize) -> Vec<f64> {
    (0..=samples).map(|i| t_end * i as f64 / samples.max(1) as f64).collect()
}

/// Worst invariant deviations seen at the output times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantReport {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub min_purity: f64,
    pub max_purity: f64,
}

impl Default for InvariantReport {
    fn default() -> Self {
        Self {
            max_trace_error: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
            min_purity: f64::INFINITY,
            max_purity: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub series: ObservableSeries,
    pub final_state: DensityMatrix,
    pub steps: StepStats,
    pub invariants: InvariantReport,
    pub wall_time_secs: f64,
}

/// Right-hand side `dρ/dt` for a dense state. The drive is omitted when
/// `drive` is `None`.
pub fn liouvillian_rhs(
    state: &DensityMatrix,
    couplings: &CouplingMatrices,
    drive: Option<&DriveParameters>,
    config: &AtomicConfiguration,
) -> Result<DMatrix<Complex64>> {
    if state.n_atoms() != couplings.n_atoms() {
        return Err(Error::invalid(format!(
            "state has {} atoms, couplings {}",
            state.n_atoms(),
            couplings.n_atoms()
        )));
    }
    if let Some(d) = drive {
        d.validate()?;
    }
    Liouvillian::new(couplings, drive, config)?.apply_dense(state.matrix())
}

fn check_state(state: &DensityMatrix, t: f64, report: &mut InvariantReport) -> Result<()> {
    let trace_err = (state.trace() - Complex64::from(1.0)).norm();
    let herm_err = state.hermiticity_error();
    let min_eig = state.min_eigenvalue();
    let purity = state.purity();
    report.max_trace_error = report.max_trace_error.max(trace_err);
    report.max_hermiticity_error = report.max_hermiticity_error.max(herm_err);
    report.min_eigenvalue = report.min_eigenvalue.min(min_eig);
    report.min_purity = report.min_purity.min(purity);
    report.max_purity = report.max_purity.max(purity);
    let fail = |reason: String| Err(Error::Integration { time: t, reason });
    if !(trace_err <= TRACE_TOL) {
        return fail(format!("trace drifted by {trace_err:e}"));
    }
    if !(herm_err <= HERMITICITY_TOL) {
        return fail(format!("Hermiticity error {herm_err:e}"));
    }
    if !(min_eig >= POSITIVITY_ABORT) {
        return fail(format!("negative eigenvalue {min_eig:e}"));
    }
    Ok(())
}

/// Integrates from `initial` with an adaptive Dormand–Prince 5(4) pair,
/// calling every observer at each output time.
pub fn integrate(
    initial: &DensityMatrix,
    couplings: &CouplingMatrices,
    drive: Option<&DriveParameters>,
    config: &AtomicConfiguration,
    settings: &IntegratorSettings,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    settings.validate()?;
    initial.validate()?;
    if let Some(d) = drive {
        d.validate()?;
    }
    if initial.n_atoms() != couplings.n_atoms() {
        return Err(Error::invalid("initial state and couplings differ in atom number"));
    }
    let started = Instant::now();
    let generator = Liouvillian::new(couplings, drive, config)?;
    let layout = generator.layout_for(initial.matrix());
    generator.validate_layout(&layout)?;
    let classes = generator.classes();
    let n = initial.n_atoms();

    let mut columns = Vec::new();
    for obs in observers.iter() {
        columns.extend(obs.columns());
    }
    let mut series = ObservableSeries::new(columns);
    let mut report = InvariantReport::default();

    let tol = Tolerances {
        rel: settings.rel_tol,
        abs: settings.abs_tol,
    };
    let mut layout = layout;
    let mut y = layout.pack(classes, initial.matrix());
    let mut t_now = 0.0;
    let mut h_next = None;
    let mut steps = StepStats::default();
    let mut current = initial.clone();
    let mut pending = settings.output_times.iter().copied().peekable();

    while pending.peek().is_some() {
        let rhs = |y: &[Complex64], dy: &mut [Complex64]| generator.apply_hermitian(&layout, y, dy);
        let groups = layout
            .blocks()
            .iter()
            .map(|b| b.offset..b.offset + b.rows * b.cols)
            .collect();
        let mut solver = Dopri5::new(rhs, std::mem::take(&mut y), tol, settings.max_step, h_next)
            .with_groups(groups)
            .starting_at(t_now);
        let mut truncate_to = None;
        while let Some(t) = pending.next() {
            solver.advance_to(t).map_err(|e| match e {
                StepError::Underflow { t, h } => Error::Integration {
                    time: t,
                    reason: format!("step size underflow (h = {h:e})"),
                },
                StepError::NonFinite { t } => Error::Integration {
                    time: t,
                    reason: "state became non-finite".into(),
                },
            })?;
            current = DensityMatrix::from_matrix_unchecked(n, layout.unpack(classes, solver.state()));
            if settings.check_invariants {
                check_state(&current, t, &mut report)?;
            }
            let mut row = Vec::with_capacity(series.columns().len());
            for obs in observers.iter_mut() {
                row.extend(obs.observe(t, &current)?);
            }
            series.push(t, row)?;
            if settings.drop_depleted && !generator.is_driven() {
                let n_max = layout.depleted_from(solver.state(), DEPLETED);
                if n_max < layout.top() {
                    truncate_to = Some(n_max);
                    break;
                }
            }
        }
        let stats = solver.stats();
        steps.accepted += stats.accepted;
        steps.rejected += stats.rejected;
        steps.rhs_evaluations += stats.rhs_evaluations;
        t_now = solver.time();
        h_next = Some(solver.step_size());
        y = solver.state().to_vec();
        if let Some(n_max) = truncate_to {
            let reduced = layout.below(n_max);
            log::debug!("t = {t_now}: dropping manifolds with {n_max} or more excitations");
            y = layout.restrict(&reduced, &y);
            layout = reduced;
        }
    }

    log::debug!(
        "integrated {n} atoms to t = {}: {:?}",
        t_now,
        steps
    );
    Ok(Trajectory {
        series,
        final_state: current,
        steps,
        invariants: report,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
