use crate::dynamics::Observer;
use crate::entanglement::{aggregate_metrics, concurrence_matrix, ConcurrenceMatrix};
use crate::error::Result;
use crate::geometry::AtomicConfiguration;
use crate::manybody::{excitation_populations, DensityMatrix};
use crate::photodetection::{far_field_moments, DetectionGeometry};

/// Two output times closer than this (relative) are the same instant.
const SNAPSHOT_MATCH: f64 = 1e-9;

/// Column names written by [`StandardObserver`], after `t`.
pub fn standard_columns(n_atoms: usize) -> Vec<String> {
    let mut cols: Vec<String> = (0..=n_atoms).map(|n| format!("P{n}")).collect();
    for c in ["C_avg", "C_min", "N_ent", "intensity", "G2", "g2", "trace", "purity"] {
        cols.push(c.to_string());
    }
    cols
}

/// Populations, pair-concurrence metrics and photon statistics at every
/// output time; full concurrence matrices are kept at the snapshot times.
pub struct StandardObserver<'a> {
    config: &'a AtomicConfiguration,
    detection: DetectionGeometry,
    threshold: f64,
    snapshot_times: Vec<f64>,
    snapshots: Vec<(f64, ConcurrenceMatrix)>,
}

impl<'a> StandardObserver<'a> {
    pub fn new(
        config: &'a AtomicConfiguration,
        detection: DetectionGeometry,
        threshold: f64,
        snapshot_times: &[f64],
    ) -> Self {
        Self {
            config,
            detection,
            threshold,
            snapshot_times: snapshot_times.to_vec(),
            snapshots: Vec::new(),
        }
    }

    pub fn into_snapshots(self) -> Vec<(f64, ConcurrenceMatrix)> {
        self.snapshots
    }
}

impl Observer for StandardObserver<'_> {
    fn columns(&self) -> Vec<String> {
        standard_columns(self.config.n_atoms())
    }

    fn observe(&mut self, t: f64, state: &DensityMatrix) -> Result<Vec<f64>> {
        let mut row = excitation_populations(state);
        let (c_avg, c_min, n_ent) = if state.n_atoms() >= 2 {
            let conc = concurrence_matrix(state)?;
            let m = aggregate_metrics(&conc, self.threshold);
            if self
                .snapshot_times
                .iter()
                .any(|&s| (s - t).abs() <= SNAPSHOT_MATCH * t.abs().max(1.0))
            {
                self.snapshots.push((t, conc));
            }
            (m.c_avg, m.c_min, m.n_ent as f64)
        } else {
            (0.0, 0.0, 1.0)
        };
        let moments = far_field_moments(state, self.config, &self.detection)?;
        row.extend([
            c_avg,
            c_min,
            n_ent,
            moments.intensity,
            moments.correlation,
            moments.g2().unwrap_or(f64::NAN),
            state.trace().re,
            state.purity(),
        ]);
        Ok(row)
    }
}
