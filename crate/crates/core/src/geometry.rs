//! Atomic configurations: regular chains and disordered spherical clouds.
//!
//! Positions are dimensionless (units of `1/k`).

use std::fmt::Write as _;

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-12;

/// Maximum number of draws per atom before cloud sampling gives up.
pub const MAX_DRAWS_PER_ATOM: usize = 100_000;

/// Default exclusion radius for disordered clouds.
pub const DEFAULT_MIN_DISTANCE: f64 = 0.05;

/// Positions, polarizations and a free-form label for `N` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicConfiguration {
    positions: Vec<Vector3<f64>>,
    polarizations: Vec<Vector3<Complex64>>,
    pub label: String,
}

impl AtomicConfiguration {
    /// Validates the invariants: at least one atom, unit polarizations and
    /// no coincident atoms.
    pub fn new(
        positions: Vec<Vector3<f64>>,
        polarizations: Vec<Vector3<Complex64>>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("configuration needs at least one atom"));
        }
        if positions.len() != polarizations.len() {
            return Err(Error::invalid(format!(
                "{} positions but {} polarizations",
                positions.len(),
                polarizations.len()
            )));
        }
        for (j, p) in positions.iter().enumerate() {
            if !p.iter().all(|x| x.is_finite()) {
                return Err(Error::invalid(format!("atom {j} has a non-finite position")));
            }
        }
        for (j, e) in polarizations.iter().enumerate() {
            let norm = complex_norm(e);
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid(format!(
                    "polarization of atom {j} has norm {norm}, expected 1"
                )));
            }
        }
        for j in 0..positions.len() {
            for m in 0..j {
                if (positions[j] - positions[m]).norm() <= 0.0 {
                    return Err(Error::domain(format!("atoms {m} and {j} coincide")));
                }
            }
        }
        Ok(Self {
            positions,
            polarizations,
            label: label.into(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn polarizations(&self) -> &[Vector3<Complex64>] {
        &self.polarizations
    }

    pub fn distance(&self, j: usize, m: usize) -> f64 {
        (self.positions[j] - self.positions[m]).norm()
    }

    pub fn min_pair_distance(&self) -> Option<f64> {
        let n = self.n_atoms();
        (0..n)
            .flat_map(|j| (0..j).map(move |m| (j, m)))
            .map(|(j, m)| self.distance(j, m))
            .reduce(f64::min)
    }

    pub fn max_pair_distance(&self) -> Option<f64> {
        let n = self.n_atoms();
        (0..n)
            .flat_map(|j| (0..j).map(move |m| (j, m)))
            .map(|(j, m)| self.distance(j, m))
            .reduce(f64::max)
    }

    /// Same positions with every polarization replaced by `polarization`.
    pub fn with_polarization(&self, polarization: Vector3<Complex64>) -> Result<Self> {
        Self::new(
            self.positions.clone(),
            vec![polarization; self.n_atoms()],
            self.label.clone(),
        )
    }

    /// Plain-text table, one row per atom: `x y z εx εy εz`.
    ///
    /// Real polarization components are written as plain numbers, complex
    /// ones as `re+imi`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.label);
        let _ = writeln!(out, "# x y z ex ey ez");
        for (p, e) in self.positions.iter().zip(&self.polarizations) {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                p.x,
                p.y,
                p.z,
                fmt_complex(e.x),
                fmt_complex(e.y),
                fmt_complex(e.z)
            );
        }
        out
    }

    /// Inverse of [`to_table`](Self::to_table).
    pub fn from_table(text: &str) -> Result<Self> {
        let mut label = String::new();
        let mut positions = Vec::new();
        let mut polarizations = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if lineno == 0 {
                    label = comment.trim().to_string();
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(Error::invalid(format!(
                    "line {}: expected 6 columns, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let real = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))
            };
            let cplx = |s: &str| {
                parse_complex(s).ok_or_else(|| {
                    Error::invalid(format!("line {}: bad complex value {s:?}", lineno + 1))
                })
            };
            positions.push(Vector3::new(real(fields[0])?, real(fields[1])?, real(fields[2])?));
            polarizations.push(Vector3::new(
                cplx(fields[3])?,
                cplx(fields[4])?,
                cplx(fields[5])?,
            ));
        }
        Self::new(positions, polarizations, label)
    }
}

fn complex_norm(v: &Vector3<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn fmt_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im.is_sign_negative() {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

fn parse_complex(s: &str) -> Option<Complex64> {
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    // split at the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))?;
    let re = body[..split].parse::<f64>().ok()?;
    let im = body[split..].parse::<f64>().ok()?;
    Some(Complex64::new(re, im))
}

fn real_unit(v: Vector3<f64>, what: &str) -> Result<Vector3<f64>> {
    let norm = v.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("{what} must be a unit vector, |v| = {norm}")));
    }
    Ok(v)
}

/// Regular chain: atom `j` at `j · spacing_kd · axis`, all with the same
/// polarization.
///
/// A polarization that is not perpendicular to the chain only triggers a
/// warning.
pub fn build_chain(
    n_atoms: usize,
    spacing_kd: f64,
    axis: Vector3<f64>,
    polarization: Vector3<f64>,
) -> Result<AtomicConfiguration> {
    if n_atoms == 0 {
        return Err(Error::invalid("n_atoms must be positive"));
    }
    if !(spacing_kd > 0.0) || !spacing_kd.is_finite() {
        return Err(Error::invalid(format!("spacing must be positive, got {spacing_kd}")));
    }
    let axis = real_unit(axis, "chain axis")?;
    let polarization = real_unit(polarization, "polarization")?;
    if axis.dot(&polarization).abs() > 1e-9 {
        log::warn!("chain polarization is not perpendicular to the chain axis");
    }
    let positions = (0..n_atoms)
        .map(|j| axis * (j as f64 * spacing_kd))
        .collect();
    let pol = polarization.map(|x| Complex64::new(x, 0.0));
    AtomicConfiguration::new(
        positions,
        vec![pol; n_atoms],
        format!("chain N={n_atoms} kd={spacing_kd}"),
    )
}

/// Cloud radius `kR = sqrt(2N / b0)` for a given resonant optical thickness.
pub fn cloud_radius(n_atoms: usize, b0: f64) -> f64 {
    (2.0 * n_atoms as f64 / b0).sqrt()
}

/// Resonant optical thickness `b0 = 2N / (kR)²`.
pub fn optical_thickness(n_atoms: usize, radius: f64) -> f64 {
    2.0 * n_atoms as f64 / (radius * radius)
}

/// Homogeneous spherical cloud of radius `kR = sqrt(2N/b0)`.
///
/// Sampling procedure, fully determined by `rng_seed` (ChaCha8):
/// atoms are drawn one after another; each draw takes `u, v, w` uniform in
/// `[0, 1)` and places the atom at radius `R·u^{1/3}`, polar cosine
/// `2v − 1` and azimuth `2πw`. A draw closer than `min_distance` to an
/// already placed atom is rejected and redrawn, up to
/// [`MAX_DRAWS_PER_ATOM`] times. Polarizations are all `ẑ`.
pub fn sample_cloud(
    n_atoms: usize,
    b0: f64,
    rng_seed: u64,
    min_distance: f64,
) -> Result<AtomicConfiguration> {
    if n_atoms == 0 {
        return Err(Error::invalid("n_atoms must be positive"));
    }
    if !(b0 > 0.0) || !b0.is_finite() {
        return Err(Error::invalid(format!("b0 must be positive, got {b0}")));
    }
    let radius = cloud_radius(n_atoms, b0);
    if !(min_distance >= 0.0) || min_distance >= radius {
        return Err(Error::invalid(format!(
            "min_distance {min_distance} must lie in [0, kR = {radius})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut positions: Vec<Vector3<f64>> = Vec::with_capacity(n_atoms);
    for j in 0..n_atoms {
        let mut placed = false;
        for _ in 0..MAX_DRAWS_PER_ATOM {
            let candidate = draw_in_ball(&mut rng, radius);
            let clear = positions.iter().all(|p| {
                let d = (p - candidate).norm();
                d > 0.0 && d >= min_distance
            });
            if clear {
                positions.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Sampling(format!(
                "could not place atom {j} of {n_atoms} with min_distance {min_distance} \
                 in a ball of radius {radius} after {MAX_DRAWS_PER_ATOM} draws"
            )));
        }
    }
    let z = Vector3::new(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
    AtomicConfiguration::new(
        positions,
        vec![z; n_atoms],
        format!("cloud N={n_atoms} b0={b0} kR={radius} seed={rng_seed}"),
    )
}

fn draw_in_ball<R: Rng>(rng: &mut R, radius: f64) -> Vector3<f64> {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let w: f64 = rng.random();
    let r = radius * u.cbrt();
    let cos_theta = 2.0 * v - 1.0;
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi = std::f64::consts::TAU * w;
    Vector3::new(
        r * sin_theta * phi.cos(),
        r * sin_theta * phi.sin(),
        r * cos_theta,
    )
}
