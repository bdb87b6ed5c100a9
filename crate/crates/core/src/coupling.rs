//! Dipole-dipole couplings through the free-space Green's tensor.
//!
//! With `Γ = 1` and `k = 1` the Green's tensor between two point dipoles at
//! separation `r` is
//!
//! ```text
//! G(r) = (3/4) e^{ir}/r³ [ (r² + ir − 1) 1₃ − (r² + 3ir − 3) r̂ r̂ᵀ ]
//! ```
//!
//! and the self term is `G_jj = (i/2) 1₃`. The dissipative and coherent
//! couplings are `Γ^{jm} = ε̂_j*·2Im{G_jm}·ε̂_m` and
//! `Δ^{jm} = −ε̂_j*·Re{G_jm}·ε̂_m`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::dynamics::fmt_number;
use crate::geometry::AtomicConfiguration;

/// Tolerated negative eigenvalue of the dissipative matrix.
pub const PSD_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Full Green's tensor, polarization and near-field terms included.
    Vectorial,
    /// `Γ^{jm} = sin(r)/r`, `Δ^{jm} = −cos(r)/(2r)`.
    Scalar,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Vectorial => "vectorial",
            KernelKind::Scalar => "scalar",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vectorial" => Ok(KernelKind::Vectorial),
            "scalar" => Ok(KernelKind::Scalar),
            other => Err(Error::invalid(format!("unknown kernel kind {other:?}"))),
        }
    }
}

/// Self-interaction term `G_jj = (i/2) 1₃`.
pub fn greens_self_term() -> Matrix3<Complex64> {
    Matrix3::identity() * Complex64::new(0.0, 0.5)
}

/// Free-space dyadic Green's tensor at `separation` (units of `1/k`).
pub fn greens_tensor(separation: Vector3<f64>) -> Result<Matrix3<Complex64>> {
    let r = separation.norm();
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!(
            "Green's tensor needs a finite nonzero separation, got |r| = {r}"
        )));
    }
    let i = Complex64::i();
    let phase = Complex64::from_polar(0.75 / (r * r * r), r);
    let transverse = phase * (Complex64::from(r * r) + i * r - 1.0);
    let longitudinal = phase * (Complex64::from(r * r) + i * (3.0 * r) - 3.0);
    let unit = separation / r;
    let outer = unit * unit.transpose();
    Ok(Matrix3::identity() * transverse - outer.map(|x| longitudinal * x))
}

/// Coherent (`delta`) and dissipative (`gamma`) coupling matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    delta: DMatrix<f64>,
    gamma: DMatrix<f64>,
    kernel_kind: KernelKind,
}

impl CouplingMatrices {
    /// Wraps explicitly given matrices after checking symmetry, the unit
    /// diagonal of `gamma`, the zero diagonal of `delta` and positive
    /// semidefiniteness of `gamma`.
    pub fn from_parts(
        delta: DMatrix<f64>,
        gamma: DMatrix<f64>,
        kernel_kind: KernelKind,
    ) -> Result<Self> {
        let n = gamma.nrows();
        if n == 0 || !gamma.is_square() || delta.shape() != gamma.shape() {
            return Err(Error::invalid(format!(
                "coupling matrices must be square and equal-sized, got {:?} and {:?}",
                delta.shape(),
                gamma.shape()
            )));
        }
        for j in 0..n {
            if (gamma[(j, j)] - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::invalid(format!("gamma[{j}][{j}] = {} ≠ 1", gamma[(j, j)])));
            }
            if delta[(j, j)].abs() > SYMMETRY_TOL {
                return Err(Error::invalid(format!("delta[{j}][{j}] = {} ≠ 0", delta[(j, j)])));
            }
            for m in 0..j {
                if (gamma[(j, m)] - gamma[(m, j)]).abs() > SYMMETRY_TOL
                    || (delta[(j, m)] - delta[(m, j)]).abs() > SYMMETRY_TOL
                {
                    return Err(Error::invalid(format!("couplings not symmetric at ({j}, {m})")));
                }
                if gamma[(j, m)].abs() > 1.0 + SYMMETRY_TOL {
                    return Err(Error::invalid(format!(
                        "|gamma[{j}][{m}]| = {} exceeds 1",
                        gamma[(j, m)].abs()
                    )));
                }
            }
        }
        if gamma.iter().chain(delta.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite coupling"));
        }
        let min_eig = gamma.clone().symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL {
            return Err(Error::Invariant(format!(
                "dissipative matrix is not positive semidefinite (min eigenvalue {min_eig})"
            )));
        }
        Ok(Self {
            delta,
            gamma,
            kernel_kind,
        })
    }

    /// Independent atoms: `gamma = 1`, `delta = 0`.
    pub fn independent(n_atoms: usize) -> Self {
        Self {
            delta: DMatrix::zeros(n_atoms, n_atoms),
            gamma: DMatrix::identity(n_atoms, n_atoms),
            kernel_kind: KernelKind::Scalar,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn delta(&self) -> &DMatrix<f64> {
        &self.delta
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn kernel_kind(&self) -> KernelKind {
        self.kernel_kind
    }

    /// Copy with every off-diagonal coupling removed.
    pub fn without_interactions(&self) -> Self {
        Self {
            kernel_kind: self.kernel_kind,
            ..Self::independent(self.n_atoms())
        }
    }

    /// Writes `delta` then `gamma` as CSV blocks separated by a header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for (name, m) in [("delta", &self.delta), ("gamma", &self.gamma)] {
            writeln!(out, "# {name} ({})", self.kernel_kind)?;
            write_matrix_csv(&mut out, m)?;
        }
        Ok(())
    }
}

pub(crate) fn write_matrix_csv<W: Write>(out: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&x| fmt_number(x)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

fn pair_coupling(
    kind: KernelKind,
    separation: Vector3<f64>,
    e_j: &Vector3<Complex64>,
    e_m: &Vector3<Complex64>,
) -> Result<(f64, f64)> {
    match kind {
        KernelKind::Scalar => {
            let r = separation.norm();
            if !(r > 0.0) {
                return Err(Error::domain("coincident atoms"));
            }
            Ok((-r.cos() / (2.0 * r), r.sin() / r))
        }
        KernelKind::Vectorial => {
            let g = greens_tensor(separation)?;
            let re = g.map(|z| Complex64::from(z.re));
            let im = g.map(|z| Complex64::from(z.im));
            let project = |m: &Matrix3<Complex64>| -> Complex64 {
                e_j.iter()
                    .enumerate()
                    .map(|(a, ea)| {
                        ea.conj()
                            * e_m
                                .iter()
                                .enumerate()
                                .map(|(b, eb)| m[(a, b)] * eb)
                                .sum::<Complex64>()
                    })
                    .sum()
            };
            let delta = -project(&re);
            let gamma = project(&im) * 2.0;
            if delta.im.abs() > 1e-12 || gamma.im.abs() > 1e-12 {
                return Err(Error::domain(
                    "polarizations produce complex couplings, which are not supported",
                ));
            }
            Ok((delta.re, gamma.re))
        }
    }
}

/// Assembles the `N×N` coupling matrices for a configuration.
pub fn build_couplings(config: &AtomicConfiguration, kind: KernelKind) -> Result<CouplingMatrices> {
    let n = config.n_atoms();
    let mut delta = DMatrix::zeros(n, n);
    let mut gamma = DMatrix::identity(n, n);
    let pos = config.positions();
    let pol = config.polarizations();
    for j in 0..n {
        for m in (j + 1)..n {
            let (d, g) = pair_coupling(kind, pos[j] - pos[m], &pol[j], &pol[m])?;
            let (d2, g2) = pair_coupling(kind, pos[m] - pos[j], &pol[m], &pol[j])?;
            // ε_m*·G·ε_j differs from ε_j*·G·ε_m only by roundoff for real ε
            let (d, g) = (0.5 * (d + d2), 0.5 * (g + g2));
            delta[(j, m)] = d;
            delta[(m, j)] = d;
            gamma[(j, m)] = g;
            gamma[(m, j)] = g;
        }
    }
    CouplingMatrices::from_parts(delta, gamma, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_chain, sample_cloud};
    use std::f64::consts::PI;

    /// Laurent series of `(3/4) e^{ir} P(r) / r³` for a quadratic `P`.
    fn series_component(r: f64, p: [Complex64; 3], terms: usize) -> Complex64 {
        let i = Complex64::i();
        let mut exp_coeffs = vec![Complex64::from(1.0)];
        for k in 1..terms {
            let prev = exp_coeffs[k - 1];
            exp_coeffs.push(prev * i / k as f64);
        }
        let mut sum = Complex64::from(0.0);
        for n in 0..terms {
            let mut c = Complex64::from(0.0);
            for (deg, pc) in p.iter().enumerate() {
                if n >= deg {
                    c += pc * exp_coeffs[n - deg];
                }
            }
            sum += c * r.powi(n as i32 - 3);
        }
        sum * 0.75
    }

    #[test]
    fn self_term_gives_unit_rate() {
        let g = greens_self_term();
        assert_eq!(g.map(|z| 2.0 * z.im), Matrix3::identity());
    }

    #[test]
    fn far_field_decays() {
        let g = greens_tensor(Vector3::new(1e7, 0.0, 0.0)).unwrap();
        assert!(g.map(|z| z.norm()).max() < 1e-6);
    }

    #[test]
    fn zero_separation_is_domain_error() {
        assert!(matches!(greens_tensor(Vector3::zeros()), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_form_matches_series_at_small_kr() {
        // r along x, ε = ẑ: only the transverse part (r² + ir − 1) survives
        let r = 0.1;
        let g = greens_tensor(Vector3::new(r, 0.0, 0.0)).unwrap();
        let i = Complex64::i();
        let transverse = series_component(r, [(-1.0).into(), i, 1.0.into()], 40);
        let longitudinal_part = series_component(r, [(-3.0).into(), i * 3.0, 1.0.into()], 40);
        let gamma_closed = 2.0 * g[(2, 2)].im;
        let delta_closed = -g[(2, 2)].re;
        assert!((gamma_closed - 2.0 * transverse.im).abs() < 1e-12);
        assert!((delta_closed + transverse.re).abs() < 1e-9 * transverse.re.abs());
        // xx component: transverse − longitudinal
        let xx = transverse - longitudinal_part;
        assert!((g[(0, 0)] - xx).norm() < 1e-9 * xx.norm());
    }

    #[test]
    fn single_atom_couplings() {
        let c = build_chain(1, 1.0, Vector3::x(), Vector3::z()).unwrap();
        for kind in [KernelKind::Scalar, KernelKind::Vectorial] {
            let m = build_couplings(&c, kind).unwrap();
            assert_eq!(m.gamma()[(0, 0)], 1.0);
            assert_eq!(m.delta()[(0, 0)], 0.0);
        }
    }

    #[test]
    fn scalar_pair_at_pi() {
        let c = build_chain(2, PI, Vector3::x(), Vector3::z()).unwrap();
        let m = build_couplings(&c, KernelKind::Scalar).unwrap();
        assert!(m.gamma()[(0, 1)].abs() < 1e-15);
        assert!((m.delta()[(0, 1)] - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn vectorial_close_pair_is_nearly_collective() {
        let c = build_chain(2, 0.1, Vector3::x(), Vector3::z()).unwrap();
        let m = build_couplings(&c, KernelKind::Vectorial).unwrap();
        let g12 = m.gamma()[(0, 1)];
        assert!(g12 > 0.99 && g12 < 1.0, "Γ12 = {g12}");
        // eigenrates of the 2×2 dissipative matrix are 1 ± Γ12
        let eig = m.gamma().clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        assert!((lo - (1.0 - g12)).abs() < 1e-12 && (hi - (1.0 + g12)).abs() < 1e-12);
    }

    #[test]
    fn vectorial_near_field_limits() {
        // Γ → 1 continuously, |Δ| diverges like (kr)⁻³
        let mut prev_scaled: Option<f64> = None;
        for &r in &[1e-2, 1e-3, 1e-4] {
            let c = build_chain(2, r, Vector3::x(), Vector3::z()).unwrap();
            let m = build_couplings(&c, KernelKind::Vectorial).unwrap();
            assert!((m.gamma()[(0, 1)] - 1.0).abs() < r);
            let scaled = m.delta()[(0, 1)].abs() * r.powi(3);
            assert!((scaled - 0.75).abs() < 1e-2, "|Δ| r³ = {scaled}");
            if let Some(p) = prev_scaled {
                assert!((scaled - p).abs() < 1e-2);
            }
            prev_scaled = Some(scaled);
        }
    }

    #[test]
    fn couplings_symmetric_and_psd_for_clouds() {
        for seed in 0..20 {
            let c = sample_cloud(8, 13.2, seed, 0.05).unwrap();
            for kind in [KernelKind::Scalar, KernelKind::Vectorial] {
                let m = build_couplings(&c, kind).unwrap();
                assert_eq!(m.gamma(), &m.gamma().transpose());
                assert_eq!(m.delta(), &m.delta().transpose());
                let eig = m.gamma().clone().symmetric_eigenvalues();
                assert!(eig.min() > -1e-10);
                assert!(eig.max() < 8.0 + 1e-10);
            }
        }
    }

    #[test]
    fn from_parts_rejects_bad_matrices() {
        let d = DMatrix::zeros(2, 2);
        let mut g = DMatrix::identity(2, 2);
        g[(0, 1)] = 0.5;
        assert!(CouplingMatrices::from_parts(d.clone(), g.clone(), KernelKind::Scalar).is_err());
        g[(1, 0)] = 0.5;
        assert!(CouplingMatrices::from_parts(d.clone(), g.clone(), KernelKind::Scalar).is_ok());
        g[(0, 1)] = 1.5;
        g[(1, 0)] = 1.5;
        assert!(CouplingMatrices::from_parts(d, g, KernelKind::Scalar).is_err());
    }

    #[test]
    fn complex_polarization_supported_when_identical() {
        let s = 0.5f64.sqrt();
        let circ = Vector3::new(Complex64::new(s, 0.0), Complex64::new(0.0, s), 0.0.into());
        let c = build_chain(3, 1.0, Vector3::z(), Vector3::x())
            .unwrap()
            .with_polarization(circ)
            .unwrap();
        let m = build_couplings(&c, KernelKind::Vectorial).unwrap();
        assert!(m.gamma()[(0, 1)].abs() <= 1.0);
    }

    #[test]
    fn csv_dump() {
        let c = build_chain(3, 1.0, Vector3::x(), Vector3::z()).unwrap();
        let m = build_couplings(&c, KernelKind::Scalar).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert!(text.starts_with("# delta (scalar)"));
    }
}
