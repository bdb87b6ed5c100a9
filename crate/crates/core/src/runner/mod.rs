//! Single runs, disorder ensembles and their on-disk outputs.
//!
//! Layout of a run directory:
//!
//! ```text
//! series.csv            t, P0..PN, C_avg, C_min, N_ent, intensity, G2, g2, trace, purity, g2_dt<δt>...
//! snapshots/C_t<t>.csv  pair concurrence matrix at a snapshot time
//! spectrum.csv          n, index, re, im, rate, lifetime
//! positions.txt         x y z ex ey ez per atom
//! couplings.csv         Δ and Γ matrices, each after a `# name` line
//! config.resolved.toml  the configuration actually used
//! schema.json           column descriptions of the CSV files
//! manifest.json         seed, kernel, version, step counts, wall time
//! ```
//!
//! An ensemble directory holds one `seed_<s>/` run directory per
//! realization, `summary.csv` with per-time mean, min and max of every
//! column, and `ensemble.json` listing failed realizations.

pub mod config;
mod observers;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    CouplingConfig, DetectionConfig, DriveConfig, ExperimentConfig, GeometryConfig, GeometryKind,
    GridKind, IntegratorConfig, ObservablesConfig,
};
pub use observers::{standard_columns, StandardObserver};

use crate::coupling::{build_couplings, CouplingMatrices, KernelKind};
use crate::dynamics::{fmt_cell, fmt_number};
use crate::dynamics::{integrate, InvariantReport, ObservableSeries, StepStats};
use crate::entanglement::ConcurrenceMatrix;
use crate::error::{Error, Result};
use crate::geometry::AtomicConfiguration;
use crate::manybody::{make_initial_state, SteadyStateContext};
use crate::photodetection::{windowed_g2, G2Sample};
use crate::spectrum::{sector_spectrum, subradiant_lifetime, write_spectra_csv, SectorSpectrum};

/// Everything one realization produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub kernel: KernelKind,
    pub atoms: AtomicConfiguration,
    pub couplings: CouplingMatrices,
    pub series: ObservableSeries,
    pub snapshots: Vec<(f64, ConcurrenceMatrix)>,
    pub spectra: Vec<SectorSpectrum>,
    pub steps: StepStats,
    pub invariants: InvariantReport,
    pub wall_time_secs: f64,
}

/// Name of the windowed `g²` column for detector resolution `window`.
pub fn windowed_column(window: f64) -> String {
    format!("g2_dt{window}")
}

/// Geometry, couplings, initial state, integration with the standard
/// observables, windowed `g²` and sector spectra.
pub fn run_single(config: &ExperimentConfig, seed: u64, kernel: KernelKind) -> Result<RunOutput> {
    config.validate()?;
    let started = std::time::Instant::now();
    let atoms = config.geometry.build(seed)?;
    let couplings = build_couplings(&atoms, kernel)?;
    let n = atoms.n_atoms();
    let drive = config.drive.as_ref().map(|d| d.parameters()).transpose()?;
    let context = drive.as_ref().map(|d| SteadyStateContext {
        couplings: &couplings,
        drive: d,
        config: &atoms,
    });
    let initial = make_initial_state(&config.initial_state, n, context)?;
    let evolve_drive = config
        .drive
        .as_ref()
        .filter(|d| d.keep_on)
        .and(drive.as_ref());

    let mut observer = StandardObserver::new(
        &atoms,
        config.detection.geometry()?,
        config.observables.entanglement_threshold,
        &config.observables.snapshot_times,
    );
    let trajectory = integrate(
        &initial,
        &couplings,
        evolve_drive,
        &atoms,
        &config.integrator_settings(),
        &mut [&mut observer],
    )?;
    let snapshots = observer.into_snapshots();
    let mut series = trajectory.series;
    add_windowed_columns(&mut series, &config.detection.windows)?;

    let spectra = config
        .observables
        .spectrum_sectors
        .iter()
        .map(|&k| sector_spectrum(&couplings, k))
        .collect::<Result<Vec<_>>>()?;

    log::info!(
        "{} ({kernel}, seed {seed}): {} steps, {:.2} s",
        atoms.label(),
        trajectory.steps.accepted,
        started.elapsed().as_secs_f64()
    );
    Ok(RunOutput {
        seed,
        kernel,
        atoms,
        couplings,
        series,
        snapshots,
        spectra,
        steps: trajectory.steps,
        invariants: trajectory.invariants,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

fn add_windowed_columns(series: &mut ObservableSeries, windows: &[f64]) -> Result<()> {
    if windows.is_empty() {
        return Ok(());
    }
    let column = |name: &str| {
        series
            .column(name)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::invalid(format!("series has no {name} column")))
    };
    let samples: Vec<G2Sample> = column("intensity")?
        .into_iter()
        .zip(column("G2")?)
        .map(|(intensity, correlation)| G2Sample {
            intensity,
            correlation,
        })
        .collect();
    let times = series.times().to_vec();
    for &w in windows {
        let values = windowed_g2(&times, &samples, w)?
            .into_iter()
            .map(|g| g.unwrap_or(f64::NAN))
            .collect();
        series.add_column(windowed_column(w), values)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    label: &'a str,
    n_atoms: usize,
    kernel: String,
    seed: u64,
    cloud_radius_kr: Option<f64>,
    optical_thickness_b0: Option<f64>,
    output_times: usize,
    t_end: f64,
    steps: StepStats,
    invariants: InvariantReport,
    subradiant_lifetimes: Vec<(usize, f64)>,
    wall_time_secs: f64,
}

fn column_description(name: &str) -> String {
    let known = match name {
        "t" => "time in units of 1/Gamma",
        "C_avg" => "mean pair concurrence",
        "C_min" => "minimum pair concurrence",
        "N_ent" => "size of the largest set of pairwise entangled atoms",
        "intensity" => "far-field intensity <E-E+> along the detection direction",
        "G2" => "far-field correlator <E-E-E+E+>",
        "g2" => "equal-time g2 = G2/intensity^2, empty when the intensity vanishes",
        "trace" => "Tr rho",
        "purity" => "Tr rho^2",
        _ => "",
    };
    if !known.is_empty() {
        return known.to_string();
    }
    if let Some(n) = name.strip_prefix('P') {
        return format!("population of the {n}-excitation manifold");
    }
    if let Some(w) = name.strip_prefix("g2_dt") {
        return format!("g2 from intensity and G2 averaged over a window of {w}/Gamma, empty when undefined");
    }
    String::new()
}

fn schema(series_columns: &[String]) -> serde_json::Value {
    let mut series = vec![serde_json::json!({"name": "t", "description": column_description("t")})];
    series.extend(
        series_columns
            .iter()
            .map(|c| serde_json::json!({"name": c, "description": column_description(c)})),
    );
    serde_json::json!({
        "series.csv": series,
        "snapshots/C_t<t>.csv": "N x N symmetric pair concurrence matrix, header c0..c{N-1}, zero diagonal",
        "spectrum.csv": [
            {"name": "n", "description": "excitation number of the sector"},
            {"name": "index", "description": "mode index, slowest decay first"},
            {"name": "re", "description": "eigenvalue real part (frequency shift, units of Gamma)"},
            {"name": "im", "description": "eigenvalue imaginary part (minus half the decay rate)"},
            {"name": "rate", "description": "decay rate in units of Gamma"},
            {"name": "lifetime", "description": "1/rate"},
        ],
        "summary.csv": "t, count, then <column>_mean, <column>_min, <column>_max for every series column; NaN-valued samples are skipped",
    })
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn write_matrix_csv(path: &Path, conc: &ConcurrenceMatrix) -> Result<()> {
    let n = conc.n_atoms();
    let mut w = csv::Writer::from_writer(create_writer(path)?);
    w.write_record((0..n).map(|j| format!("c{j}")))?;
    for j in 0..n {
        w.write_record((0..n).map(|m| fmt_number(conc.get(j, m))))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every artifact of `run` into `dir`.
pub fn write_run(run: &RunOutput, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    run.series.write_csv(create_writer(&dir.join("series.csv"))?)?;
    write_spectra_csv(&run.spectra, create_writer(&dir.join("spectrum.csv"))?)?;
    run.couplings.write_csv(create_writer(&dir.join("couplings.csv"))?)?;
    fs::write(dir.join("positions.txt"), run.atoms.to_table())?;
    if !run.snapshots.is_empty() {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        for (t, conc) in &run.snapshots {
            write_matrix_csv(&snap_dir.join(format!("C_t{t}.csv")), conc)?;
        }
    }

    let mut resolved = config.clone();
    resolved.coupling.kernel = run.kernel;
    resolved.coupling.compare_kernels = false;
    if resolved.geometry.kind == GeometryKind::Cloud {
        resolved.geometry.seeds = vec![run.seed];
    }
    resolved.output_dir = dir.to_path_buf();
    fs::write(dir.join("config.resolved.toml"), resolved.to_toml_string()?)?;

    write_json(&dir.join("schema.json"), &schema(run.series.columns()))?;
    let cloud = config.cloud_parameters();
    let manifest = Manifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        label: run.atoms.label(),
        n_atoms: run.atoms.n_atoms(),
        kernel: run.kernel.to_string(),
        seed: run.seed,
        cloud_radius_kr: cloud.map(|c| c.0),
        optical_thickness_b0: cloud.map(|c| c.1),
        output_times: run.series.len(),
        t_end: run.series.times().last().copied().unwrap_or(0.0),
        steps: run.steps,
        invariants: run.invariants,
        subradiant_lifetimes: run
            .spectra
            .iter()
            .filter_map(|s| subradiant_lifetime(s).ok().map(|tau| (s.n_excitations, tau)))
            .collect(),
        wall_time_secs: run.wall_time_secs,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Per-time statistics of every column over the successful realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    pub count: usize,
    /// `mean[c][i]` for column `c` at time index `i`; NaN samples are
    /// skipped, and a time with no finite sample gives NaN.
    pub mean: Vec<Vec<f64>>,
    pub min: Vec<Vec<f64>>,
    pub max: Vec<Vec<f64>>,
}

impl EnsembleSummary {
    pub fn from_series(runs: &[&ObservableSeries]) -> Result<Self> {
        let first = runs.first().ok_or_else(|| Error::invalid("no realizations to summarize"))?;
        for r in runs {
            if r.times() != first.times() || r.columns() != first.columns() {
                return Err(Error::invalid("realizations have different grids or columns"));
            }
        }
        let n_t = first.len();
        let mut mean = Vec::new();
        let mut min = Vec::new();
        let mut max = Vec::new();
        for name in first.columns() {
            let cols: Vec<&[f64]> = runs.iter().map(|r| r.column(name).unwrap_or(&[])).collect();
            let (mut mu, mut lo, mut hi) = (vec![f64::NAN; n_t], vec![f64::NAN; n_t], vec![f64::NAN; n_t]);
            for i in 0..n_t {
                let vals: Vec<f64> = cols.iter().map(|c| c[i]).filter(|v| !v.is_nan()).collect();
                if vals.is_empty() {
                    continue;
                }
                mu[i] = vals.iter().sum::<f64>() / vals.len() as f64;
                lo[i] = vals.iter().copied().fold(f64::INFINITY, f64::min);
                hi[i] = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            mean.push(mu);
            min.push(lo);
            max.push(hi);
        }
        Ok(Self {
            times: first.times().to_vec(),
            columns: first.columns().to_vec(),
            count: runs.len(),
            mean,
            min,
            max,
        })
    }

    pub fn column_mean(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().position(|c| c == name).map(|i| self.mean[i].as_slice())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "count".to_string()];
        for c in &self.columns {
            header.extend([format!("{c}_mean"), format!("{c}_min"), format!("{c}_max")]);
        }
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut rec = vec![format!("{t}"), self.count.to_string()];
            for c in 0..self.columns.len() {
                rec.extend([
                    fmt_cell(self.mean[c][i]),
                    fmt_cell(self.min[c][i]),
                    fmt_cell(self.max[c][i]),
                ]);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct EnsembleOutput {
    pub kernel: KernelKind,
    /// In seed-list order.
    pub runs: Vec<(u64, Result<RunOutput>)>,
    /// `None` when every realization failed.
    pub summary: Option<EnsembleSummary>,
}

impl EnsembleOutput {
    pub fn successes(&self) -> impl Iterator<Item = &RunOutput> {
        self.runs.iter().filter_map(|(_, r)| r.as_ref().ok())
    }
}

/// Runs every seed of the configuration in parallel.
pub fn run_ensemble(config: &ExperimentConfig, kernel: KernelKind) -> Result<EnsembleOutput> {
    config.validate()?;
    let seeds = config.realization_seeds();
    let runs: Vec<(u64, Result<RunOutput>)> = seeds
        .par_iter()
        .map(|&seed| (seed, run_single(config, seed, kernel)))
        .collect();
    for (seed, r) in &runs {
        if let Err(e) = r {
            log::warn!("realization with seed {seed} failed: {e}");
        }
    }
    let ok: Vec<&ObservableSeries> = runs.iter().filter_map(|(_, r)| r.as_ref().ok().map(|o| &o.series)).collect();
    let summary = if ok.is_empty() {
        None
    } else {
        Some(EnsembleSummary::from_series(&ok)?)
    };
    Ok(EnsembleOutput {
        kernel,
        runs,
        summary,
    })
}

#[derive(Serialize)]
struct EnsembleManifest {
    kernel: String,
    seeds: Vec<u64>,
    succeeded: Vec<u64>,
    failed: Vec<(u64, String)>,
}

pub fn write_ensemble(out: &EnsembleOutput, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (seed, r) in &out.runs {
        if let Ok(run) = r {
            write_run(run, config, &dir.join(format!("seed_{seed}")))?;
        }
    }
    if let Some(summary) = &out.summary {
        summary.write_csv(create_writer(&dir.join("summary.csv"))?)?;
    }
    let manifest = EnsembleManifest {
        kernel: out.kernel.to_string(),
        seeds: out.runs.iter().map(|(s, _)| *s).collect(),
        succeeded: out.runs.iter().filter(|(_, r)| r.is_ok()).map(|(s, _)| *s).collect(),
        failed: out
            .runs
            .iter()
            .filter_map(|(s, r)| r.as_ref().err().map(|e| (*s, e.to_string())))
            .collect(),
    };
    write_json(&dir.join("ensemble.json"), &manifest)
}

/// Kernels to run and the directory each one writes to.
pub fn kernel_targets(config: &ExperimentConfig) -> Vec<(KernelKind, PathBuf)> {
    if config.coupling.compare_kernels {
        [KernelKind::Scalar, KernelKind::Vectorial]
            .into_iter()
            .map(|k| (k, config.output_dir.join(k.to_string())))
            .collect()
    } else {
        vec![(config.coupling.kernel, config.output_dir.clone())]
    }
}

/// `run` verb: the first seed only, for each configured kernel.
pub fn execute_run(config: &ExperimentConfig) -> Result<Vec<RunOutput>> {
    let seed = config.realization_seeds()[0];
    let mut outputs = Vec::new();
    for (kernel, dir) in kernel_targets(config) {
        let run = run_single(config, seed, kernel)?;
        write_run(&run, config, &dir)?;
        outputs.push(run);
    }
    Ok(outputs)
}

/// `ensemble` verb. Fails only when every realization of a kernel fails.
pub fn execute_ensemble(config: &ExperimentConfig) -> Result<Vec<EnsembleOutput>> {
    let mut outputs = Vec::new();
    for (kernel, dir) in kernel_targets(config) {
        let mut out = run_ensemble(config, kernel)?;
        write_ensemble(&out, config, &dir)?;
        if out.summary.is_none() {
            let first = out.runs.drain(..).find_map(|(_, r)| r.err());
            return Err(first.unwrap_or_else(|| Error::invalid("empty ensemble")));
        }
        outputs.push(out);
    }
    Ok(outputs)
}

/// `spectrum` verb: sector spectra of the first realization, without
/// dynamics.
pub fn execute_spectrum(config: &ExperimentConfig) -> Result<Vec<(KernelKind, Vec<SectorSpectrum>)>> {
    config.validate()?;
    let seed = config.realization_seeds()[0];
    let atoms = config.geometry.build(seed)?;
    let mut out = Vec::new();
    for (kernel, dir) in kernel_targets(config) {
        let couplings = build_couplings(&atoms, kernel)?;
        let spectra = config
            .observables
            .spectrum_sectors
            .iter()
            .map(|&k| sector_spectrum(&couplings, k))
            .collect::<Result<Vec<_>>>()?;
        fs::create_dir_all(&dir)?;
        write_spectra_csv(&spectra, create_writer(&dir.join("spectrum.csv"))?)?;
        out.push((kernel, spectra));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(overrides: &[&str]) -> ExperimentConfig {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        ExperimentConfig::from_toml_str("", &o).unwrap()
    }

    #[test]
    fn single_atom_intensity_is_exponential() {
        let c = small(&[
            "geometry.n_atoms=1",
            "initial_state.kind=inverted",
            "integrator.t_end=5.0",
            "integrator.samples=20",
            "observables.spectrum_sectors=[1]",
        ]);
        let run = run_single(&c, 1, KernelKind::Vectorial).unwrap();
        let intensity = run.series.column("intensity").unwrap();
        for (t, i) in run.series.times().iter().zip(intensity) {
            assert!((i - (-t).exp()).abs() < 1e-8, "t = {t}: {i}");
        }
        // a single emitter never gives two photons
        assert!(run.series.column("g2").unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn summary_of_identical_runs() {
        let c = small(&["geometry.n_atoms=3", "integrator.t_end=2.0", "integrator.samples=5"]);
        let run = run_single(&c, 1, KernelKind::Vectorial).unwrap();
        let s = EnsembleSummary::from_series(&[&run.series, &run.series]).unwrap();
        let p1 = run.series.column("P1").unwrap();
        assert_eq!(s.column_mean("P1").unwrap(), p1);
        assert_eq!(s.count, 2);
    }

    #[test]
    fn summary_envelope_and_nan_handling() {
        let mut a = ObservableSeries::new(vec!["x".into()]);
        let mut b = ObservableSeries::new(vec!["x".into()]);
        a.push(0.0, vec![1.0]).unwrap();
        a.push(1.0, vec![f64::NAN]).unwrap();
        b.push(0.0, vec![3.0]).unwrap();
        b.push(1.0, vec![f64::NAN]).unwrap();
        let s = EnsembleSummary::from_series(&[&a, &b]).unwrap();
        assert_eq!((s.mean[0][0], s.min[0][0], s.max[0][0]), (2.0, 1.0, 3.0));
        assert!(s.mean[0][1].is_nan());
        let mut text = Vec::new();
        s.write_csv(&mut text).unwrap();
        assert_eq!(String::from_utf8(text).unwrap(), "t,count,x_mean,x_min,x_max\n0,2,2,1,3\n1,2,,,\n");

        let mut c = ObservableSeries::new(vec!["y".into()]);
        c.push(0.0, vec![0.0]).unwrap();
        c.push(1.0, vec![0.0]).unwrap();
        assert!(EnsembleSummary::from_series(&[&a, &c]).is_err());
        assert!(EnsembleSummary::from_series(&[]).is_err());
    }

    #[test]
    fn windowed_columns_are_named_by_resolution() {
        let c = small(&[
            "geometry.n_atoms=3",
            "integrator.grid=linear",
            "integrator.t_end=4.0",
            "integrator.linear_samples=40",
            "detection.windows=[1.0, 0.5]",
        ]);
        let run = run_single(&c, 1, KernelKind::Vectorial).unwrap();
        let cols = run.series.columns();
        assert_eq!(&cols[cols.len() - 2..], ["g2_dt1", "g2_dt0.5"]);
    }

    #[test]
    fn column_descriptions_cover_standard_columns() {
        for c in standard_columns(4).iter().chain([windowed_column(10.0)].iter()) {
            assert!(!column_description(c).is_empty(), "{c}");
        }
    }
}
