//! Non-Hermitian effective Hamiltonian in fixed-excitation sectors.
//!
//! Without drive the master equation does not couple different excitation
//! numbers through the coherent part, and the no-jump evolution inside the
//! `n`-excitation sector is generated by
//!
//! ```text
//! H_eff = Σ_{j,m} (Δ^{jm} − (i/2) Γ^{jm}) σ_j⁺ σ_m⁻
//! ```
//!
//! whose eigenvalues `λ` have `−2 Im λ` equal to the decay rates of the
//! collective modes.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coupling::CouplingMatrices;
use crate::dynamics::{fmt_number, ObservableSeries};
use crate::error::{Error, Result};

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 100_000;

/// Positive imaginary parts up to this size are attributed to round-off.
pub const GROWTH_TOL: f64 = 1e-10;

/// `n`-excitation bitmasks of `N` atoms in increasing order.
pub fn sector_basis(n_atoms: usize, n: usize) -> Vec<usize> {
    (0..1usize << n_atoms).filter(|b| b.count_ones() as usize == n).collect()
}

/// `H_eff` restricted to the `n`-excitation sector, in the basis of
/// [`sector_basis`].
pub fn sector_effective_hamiltonian(couplings: &CouplingMatrices, n: usize) -> Result<DMatrix<Complex64>> {
    let n_atoms = couplings.n_atoms();
    if n == 0 || n > n_atoms {
        return Err(Error::invalid(format!("sector n = {n} outside [1, {n_atoms}]")));
    }
    if n_atoms > crate::MAX_ATOMS {
        return Err(Error::invalid(format!("{n_atoms} atoms exceeds the supported maximum")));
    }
    let basis = sector_basis(n_atoms, n);
    let mut index = vec![usize::MAX; 1 << n_atoms];
    for (i, &b) in basis.iter().enumerate() {
        index[b] = i;
    }
    let gamma = couplings.gamma();
    let delta = couplings.delta();
    let dim = basis.len();
    let mut h = DMatrix::zeros(dim, dim);
    for (col, &s) in basis.iter().enumerate() {
        for m in (0..n_atoms).filter(|m| s >> m & 1 == 1) {
            h[(col, col)] += Complex64::new(0.0, -0.5 * gamma[(m, m)]);
            for j in (0..n_atoms).filter(|j| s >> j & 1 == 0) {
                let row = index[s & !(1 << m) | 1 << j];
                h[(row, col)] += Complex64::new(delta[(j, m)], -0.5 * gamma[(j, m)]);
            }
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorSpectrum {
    pub n_atoms: usize,
    pub n_excitations: usize,
    /// Sorted by decay rate, slowest first. Real part is the shift and
    /// `−2 Im` the rate, in units of `Γ`.
    pub eigenvalues: Vec<Complex64>,
}

impl SectorSpectrum {
    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().map(|z| -2.0 * z.im)
    }
}

pub fn sector_spectrum(couplings: &CouplingMatrices, n: usize) -> Result<SectorSpectrum> {
    let h = sector_effective_hamiltonian(couplings, n)?;
    let dim = h.nrows();
    let mut eigenvalues: Vec<Complex64> = if dim == 1 {
        vec![h[(0, 0)]]
    } else {
        nalgebra::Schur::try_new(h, SCHUR_EPS, SCHUR_MAX_ITER)
            .and_then(|s| s.eigenvalues())
            .ok_or_else(|| Error::NonConvergence(format!("eigenvalues of the n = {n} sector did not converge")))?
            .iter()
            .copied()
            .collect()
    };
    if let Some(z) = eigenvalues.iter().find(|z| z.im > GROWTH_TOL) {
        return Err(Error::Invariant(format!("growing mode {z} in sector n = {n}")));
    }
    eigenvalues.sort_by(|a, b| b.im.total_cmp(&a.im).then(a.re.total_cmp(&b.re)));
    Ok(SectorSpectrum {
        n_atoms: couplings.n_atoms(),
        n_excitations: n,
        eigenvalues,
    })
}

/// `1/Γ_min` with `Γ_min` the smallest decay rate in the sector.
pub fn subradiant_lifetime(spectrum: &SectorSpectrum) -> Result<f64> {
    let rate = spectrum
        .rates()
        .reduce(f64::min)
        .ok_or_else(|| Error::invalid("empty spectrum"))?;
    if !(rate > 0.0) {
        return Err(Error::domain(format!(
            "sector n = {} has a non-decaying mode (rate {rate:e})",
            spectrum.n_excitations
        )));
    }
    Ok(1.0 / rate)
}

/// Writes `n,index,re,im,rate,lifetime` rows for every eigenvalue.
pub fn write_spectra_csv<W: Write>(spectra: &[SectorSpectrum], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "index", "re", "im", "rate", "lifetime"])?;
    for s in spectra {
        for (i, z) in s.eigenvalues.iter().enumerate() {
            let rate = -2.0 * z.im;
            w.write_record([
                s.n_excitations.to_string(),
                i.to_string(),
                fmt_number(z.re),
                fmt_number(z.im),
                fmt_number(rate),
                fmt_number(1.0 / rate),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Time of the global maximum of `values` (first occurrence), refined by a
/// parabola through the maximum and its two neighbours.
pub fn peak_time(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::invalid("peak search needs equally long, nonempty series"));
    }
    let mut best = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && v > 0.0 && best.is_none_or(|b: usize| v > values[b]) {
            best = Some(i);
        }
    }
    let i = best.ok_or_else(|| Error::NoPeak("no strictly positive value".into()))?;
    if i == 0 || i + 1 == values.len() || !values[i - 1].is_finite() || !values[i + 1].is_finite() {
        return Ok(times[i]);
    }
    let (t0, t1, t2) = (times[i - 1], times[i], times[i + 1]);
    let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
    // vertex of the interpolating parabola
    let num = (t1 - t0).powi(2) * (y1 - y2) - (t1 - t2).powi(2) * (y1 - y0);
    let den = (t1 - t0) * (y1 - y2) - (t1 - t2) * (y1 - y0);
    if den == 0.0 {
        return Ok(t1);
    }
    let t = t1 - 0.5 * num / den;
    Ok(t.clamp(t0, t2))
}

/// `τ_ent`: peak time of the `C_min` column.
pub fn entanglement_peak_time(series: &ObservableSeries) -> Result<f64> {
    let c_min = series
        .column("C_min")
        .ok_or_else(|| Error::invalid("series has no C_min column"))?;
    peak_time(series.times(), c_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{build_couplings, KernelKind};
    use crate::geometry::build_chain;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use std::f64::consts::FRAC_PI_2;

    fn chain(n: usize, kd: f64, kind: KernelKind) -> CouplingMatrices {
        let config = build_chain(n, kd, Vector3::x(), Vector3::z()).unwrap();
        build_couplings(&config, kind).unwrap()
    }

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn single_excitation_sector_is_the_coupling_matrix() {
        let c = chain(4, 0.9, KernelKind::Vectorial);
        let h = sector_effective_hamiltonian(&c, 1).unwrap();
        for j in 0..4 {
            for m in 0..4 {
                let expected = Complex64::new(c.delta()[(j, m)], -0.5 * c.gamma()[(j, m)]);
                assert_abs_diff_eq!((h[(j, m)] - expected).norm(), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn two_atom_scalar_rates() {
        for kd in [0.1, 0.5, 2.0] {
            let s = sector_spectrum(&chain(2, kd, KernelKind::Scalar), 1).unwrap();
            let sinc = kd.sin() / kd;
            let rates: Vec<f64> = s.rates().collect();
            assert_abs_diff_eq!(rates[0], 1.0 - sinc, epsilon = 1e-12);
            assert_abs_diff_eq!(rates[1], 1.0 + sinc, epsilon = 1e-12);
        }
        let tau = subradiant_lifetime(&sector_spectrum(&chain(2, 0.1, KernelKind::Scalar), 1).unwrap()).unwrap();
        assert_abs_diff_eq!(tau, 1.0 / (1.0 - 0.1f64.sin() / 0.1), epsilon = 1e-6);
        assert!((tau - 600.0).abs() < 2.0);
    }

    #[test]
    fn fully_excited_sector() {
        let s = sector_spectrum(&chain(2, 0.1, KernelKind::Vectorial), 2).unwrap();
        assert_eq!(s.eigenvalues.len(), 1);
        assert_abs_diff_eq!((s.eigenvalues[0] - Complex64::new(0.0, -1.0)).norm(), 0.0, epsilon = 1e-15);
        let s = sector_spectrum(&chain(5, 0.7, KernelKind::Vectorial), 5).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0].im, -2.5, epsilon = 1e-12);
    }

    #[test]
    fn independent_atoms() {
        let c = CouplingMatrices::independent(6);
        for n in 1..=6 {
            let s = sector_spectrum(&c, n).unwrap();
            assert_eq!(s.eigenvalues.len(), binom(6, n));
            assert_abs_diff_eq!(subradiant_lifetime(&s).unwrap(), 1.0 / n as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn sector_traces() {
        // every excited atom contributes −i/2 on the diagonal
        let c = chain(6, FRAC_PI_2, KernelKind::Vectorial);
        for n in 1..=6 {
            let s = sector_spectrum(&c, n).unwrap();
            let sum: Complex64 = s.eigenvalues.iter().sum();
            let expected = -0.5 * (n * binom(6, n)) as f64;
            assert_abs_diff_eq!(sum.im, expected, epsilon = 1e-9);
            assert_abs_diff_eq!(sum.re, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn eigenvalues_match_hermitian_part_bounds() {
        // rates lie within the spectrum of the dissipative part restricted to the sector
        let c = chain(5, 1.3, KernelKind::Vectorial);
        let s = sector_spectrum(&c, 2).unwrap();
        for r in s.rates() {
            assert!(r >= -1e-10 && r <= 2.0 * 5.0);
        }
    }

    #[test]
    fn chain_lifetime_grows_with_n() {
        let mut prev = 0.0;
        for n in 2..=10 {
            let tau = subradiant_lifetime(&sector_spectrum(&chain(n, FRAC_PI_2, KernelKind::Vectorial), 1).unwrap()).unwrap();
            assert!(tau > prev, "N = {n}: {tau} <= {prev}");
            prev = tau;
        }
    }

    #[test]
    fn sector_bounds() {
        let c = chain(3, 1.0, KernelKind::Scalar);
        assert!(sector_effective_hamiltonian(&c, 0).is_err());
        assert!(sector_effective_hamiltonian(&c, 4).is_err());
        assert_eq!(sector_basis(4, 2), vec![3, 5, 6, 9, 10, 12]);
    }

    #[test]
    fn triangular_peak() {
        let times: Vec<f64> = (0..15).map(f64::from).collect();
        let values: Vec<f64> = times.iter().map(|t| (3.0 - (t - 7.0).abs()).max(0.0)).collect();
        assert_abs_diff_eq!(peak_time(&times, &values).unwrap(), 7.0, epsilon = 1e-12);
    }

    #[test]
    fn parabolic_refinement_on_uneven_grid() {
        let times = [0.0, 1.0, 2.5, 3.0, 5.0];
        let values: Vec<f64> = times.iter().map(|t| 10.0 - (t - 2.2f64).powi(2)).collect();
        assert_abs_diff_eq!(peak_time(&times, &values).unwrap(), 2.2, epsilon = 1e-12);
    }

    #[test]
    fn monotone_and_degenerate_series() {
        let times = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(peak_time(&times, &[4.0, 3.0, 2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(peak_time(&times, &[1.0, 2.0, 2.0, 1.0]).unwrap(), 1.5);
        assert!(matches!(peak_time(&times, &[0.0; 4]), Err(Error::NoPeak(_))));
        let mut s = ObservableSeries::new(vec!["C_min".into()]);
        for &t in &times {
            s.push(t, vec![0.0]).unwrap();
        }
        assert!(matches!(entanglement_peak_time(&s), Err(Error::NoPeak(_))));
    }

    #[test]
    fn spectrum_csv() {
        let s = sector_spectrum(&CouplingMatrices::independent(2), 1).unwrap();
        let mut buf = Vec::new();
        write_spectra_csv(&[s], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("n,index,re,im,rate,lifetime"));
        assert_eq!(text.lines().count(), 3);
    }
}
