//! Far-field intensity and equal-time photon correlations.
//!
//! The positive-frequency field radiated along `n̂` is taken as
//! `E⁺ = Σ_j e^{−i n̂·r_j} σ_j⁻` (the overall prefactor cancels in `g²`), so
//!
//! ```text
//! I = ⟨E⁻E⁺⟩,   G2 = ⟨E⁻E⁻E⁺E⁺⟩,   g² = G2 / I².
//! ```

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::AtomicConfiguration;
use crate::manybody::DensityMatrix;

/// Intensities at or below this leave `g²` undefined.
pub const MIN_INTENSITY: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionGeometry {
    direction: Vector3<f64>,
}

impl DetectionGeometry {
    pub fn new(direction: Vector3<f64>) -> Result<Self> {
        let norm = direction.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("detection direction must be a unit vector, |n̂| = {norm}")));
        }
        Ok(Self { direction })
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.direction
    }
}

impl Default for DetectionGeometry {
    fn default() -> Self {
        Self {
            direction: Vector3::x(),
        }
    }
}

/// Intensity and two-photon correlator at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct G2Sample {
    pub intensity: f64,
    pub correlation: f64,
}

impl G2Sample {
    /// `G2 / I²`, or `None` when the intensity vanishes.
    pub fn g2(&self) -> Option<f64> {
        (self.intensity > MIN_INTENSITY).then(|| self.correlation / (self.intensity * self.intensity))
    }
}

/// `I` and `G2` evaluated directly on the matrix elements of `ρ`:
///
/// ```text
/// I  = Σ_a Σ_{k,k'∉a} c_k c̄_k' ρ[a+k, a+k']
/// G2 = Σ_a Σ_{{k,l},{k',l'}⊂ā} 4 c_k c_l c̄_k' c̄_l' ρ[a+k+l, a+k'+l']
/// ```
///
/// with `c_j = e^{−i n̂·r_j}`.
pub fn far_field_moments(
    state: &DensityMatrix,
    config: &AtomicConfiguration,
    geometry: &DetectionGeometry,
) -> Result<G2Sample> {
    let n = state.n_atoms();
    if config.n_atoms() != n {
        return Err(Error::invalid(format!(
            "state has {n} atoms but the configuration {}",
            config.n_atoms()
        )));
    }
    let phase: Vec<Complex64> = config
        .positions()
        .iter()
        .map(|r| Complex64::from_polar(1.0, -geometry.direction.dot(r)))
        .collect();
    let rho = state.matrix();
    let dim = state.dim();

    let mut intensity = Complex64::from(0.0);
    let mut correlation = Complex64::from(0.0);
    let mut singles: Vec<(usize, Complex64)> = Vec::with_capacity(n);
    let mut pairs: Vec<(usize, Complex64)> = Vec::with_capacity(n * n / 2);
    for a in 0..dim {
        singles.clear();
        pairs.clear();
        for k in (0..n).filter(|k| a >> k & 1 == 0) {
            singles.push((a | 1 << k, phase[k]));
            for l in (k + 1..n).filter(|l| a >> l & 1 == 0) {
                pairs.push((a | 1 << k | 1 << l, phase[k] * phase[l] * 2.0));
            }
        }
        intensity += quadratic_form(rho, &singles);
        correlation += quadratic_form(rho, &pairs);
    }
    Ok(G2Sample {
        intensity: intensity.re,
        correlation: correlation.re.max(0.0),
    })
}

/// `Σ_{(b,w),(b',w')} w w̄' ρ[b, b']`.
fn quadratic_form(rho: &nalgebra::DMatrix<Complex64>, terms: &[(usize, Complex64)]) -> Complex64 {
    let mut acc = Complex64::from(0.0);
    for &(b, w) in terms {
        let mut row = Complex64::from(0.0);
        for &(b2, w2) in terms {
            row += rho[(b, b2)] * w2.conj();
        }
        acc += w * row;
    }
    acc
}

/// Equal-time `g²(t,t)`; `None` when the radiated intensity vanishes.
pub fn g2_equal_time(
    state: &DensityMatrix,
    config: &AtomicConfiguration,
    geometry: &DetectionGeometry,
) -> Result<Option<f64>> {
    Ok(far_field_moments(state, config, geometry)?.g2())
}

/// Detector-resolution averaged `g̃²_δt(t) = Ḡ2(t) / Ī(t)²`, where
/// `X̄(t) = (1/δt) ∫_{t−δt/2}^{t+δt/2} X`.
///
/// The integrals use the trapezoidal rule on the samples, with linear
/// interpolation at the window edges. Near the first sample the window is
/// clipped and the average taken over the clipped length; windows reaching
/// past the last sample give `None`.
pub fn windowed_g2(times: &[f64], samples: &[G2Sample], window: f64) -> Result<Vec<Option<f64>>> {
    if times.len() != samples.len() {
        return Err(Error::invalid("times and samples differ in length"));
    }
    if times.len() < 2 {
        return Err(Error::invalid("windowed g² needs at least two samples"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("sample times must be strictly increasing"));
    }
    if !(window > 0.0) || !window.is_finite() {
        return Err(Error::invalid(format!("window must be positive, got {window}")));
    }
    let span = times[times.len() - 1] - times[0];
    if window > span {
        return Err(Error::invalid(format!("window {window} exceeds the series span {span}")));
    }
    let intensity: Vec<f64> = samples.iter().map(|s| s.intensity).collect();
    let correlation: Vec<f64> = samples.iter().map(|s| s.correlation).collect();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    Ok(times
        .iter()
        .map(|&t| {
            let lo = (t - 0.5 * window).max(t0);
            let hi = t + 0.5 * window;
            if hi > t1 * (1.0 + 1e-12) {
                return None;
            }
            let hi = hi.min(t1);
            let len = hi - lo;
            let i_bar = integrate_linear(times, &intensity, lo, hi) / len;
            let g_bar = integrate_linear(times, &correlation, lo, hi) / len;
            (i_bar > MIN_INTENSITY).then(|| g_bar / (i_bar * i_bar))
        })
        .collect())
}

fn interpolate(times: &[f64], values: &[f64], t: f64, i: usize) -> f64 {
    // t lies in [times[i], times[i + 1]]
    let (ta, tb) = (times[i], times[i + 1]);
    let w = (t - ta) / (tb - ta);
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// `∫_lo^hi` of the piecewise-linear interpolant through the samples.
fn integrate_linear(times: &[f64], values: &[f64], lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..times.len() - 1 {
        let (ta, tb) = (times[i], times[i + 1]);
        let a = ta.max(lo);
        let b = tb.min(hi);
        if b <= a {
            continue;
        }
        let va = interpolate(times, values, a, i);
        let vb = interpolate(times, values, b, i);
        total += 0.5 * (va + vb) * (b - a);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_chain, sample_cloud};
    use crate::manybody::{make_initial_state, InitialState};
    use crate::testutil::{random_density, sigma_minus, CMat};
    use approx::assert_abs_diff_eq;

    fn cloud(n: usize) -> AtomicConfiguration {
        sample_cloud(n, 2.0, 3, 0.1).unwrap()
    }

    /// Brute force with the field operator built as a dense matrix.
    fn dense_moments(state: &DensityMatrix, config: &AtomicConfiguration, dir: Vector3<f64>) -> (f64, f64) {
        let n = state.n_atoms();
        let d = state.dim();
        let mut e = CMat::zeros(d, d);
        for (j, r) in config.positions().iter().enumerate() {
            e += sigma_minus(n, j) * Complex64::from_polar(1.0, -dir.dot(r));
        }
        let rho = state.matrix();
        let i = (e.adjoint() * &e * rho).trace().re;
        let ee = &e * &e;
        let g = (ee.adjoint() * &ee * rho).trace().re;
        (i, g)
    }

    /// Combinatorial value for a diagonal product state with excitation
    /// probability `p` per atom: `I = Np`, `G2 = 2·N(N−1)p²`.
    fn product_g2(n: usize) -> f64 {
        2.0 * (n as f64 - 1.0) / n as f64
    }

    #[test]
    fn matches_dense_field_operator() {
        for n in [2, 3, 5] {
            let config = cloud(n);
            let dir = Vector3::new(0.3, -0.4, 0.5).normalize();
            let geom = DetectionGeometry::new(dir).unwrap();
            for seed in 0..3 {
                let rho = random_density(n, seed);
                let s = far_field_moments(&rho, &config, &geom).unwrap();
                let (i, g) = dense_moments(&rho, &config, dir);
                assert_abs_diff_eq!(s.intensity, i, epsilon = 1e-12);
                assert_abs_diff_eq!(s.correlation, g, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mixture_gives_two_minus_two_over_n() {
        for n in 2..=8 {
            let config = build_chain(n, std::f64::consts::FRAC_PI_2, Vector3::x(), Vector3::z()).unwrap();
            let rho = make_initial_state(&InitialState::Mixture, n, None).unwrap();
            let g2 = g2_equal_time(&rho, &config, &DetectionGeometry::default()).unwrap().unwrap();
            assert_abs_diff_eq!(g2, product_g2(n), epsilon = 1e-12);
        }
        let n = 7;
        let config = build_chain(n, 1.0, Vector3::x(), Vector3::z()).unwrap();
        let rho = make_initial_state(&InitialState::Mixture, n, None).unwrap();
        let g2 = g2_equal_time(&rho, &config, &DetectionGeometry::default()).unwrap().unwrap();
        assert_abs_diff_eq!(g2, 12.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_products_are_independent_of_p() {
        for n in 2..=8 {
            let config = cloud(n);
            for p in [0.1f64, 0.5, 1.0] {
                let pops: Vec<f64> = (0..1usize << n)
                    .map(|b| {
                        let k = b.count_ones() as i32;
                        p.powi(k) * (1.0 - p).powi(n as i32 - k)
                    })
                    .collect();
                let rho = DensityMatrix::from_diagonal(&pops).unwrap();
                let s = far_field_moments(&rho, &config, &DetectionGeometry::default()).unwrap();
                assert_abs_diff_eq!(s.intensity, n as f64 * p, epsilon = 1e-12);
                assert_abs_diff_eq!(s.g2().unwrap(), product_g2(n), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn single_excitation_states_have_zero_g2() {
        let config = cloud(4);
        let kind = InitialState::DickeEpsilon { epsilon: 0.4, phases: vec![0.1, 1.0, 2.0, -0.5] };
        let rho = make_initial_state(&kind, 4, None).unwrap();
        let g2 = g2_equal_time(&rho, &config, &DetectionGeometry::default()).unwrap();
        assert_eq!(g2, Some(0.0));
    }

    #[test]
    fn ground_state_is_undefined() {
        let config = cloud(3);
        let rho = DensityMatrix::ground(3).unwrap();
        assert_eq!(g2_equal_time(&rho, &config, &DetectionGeometry::default()).unwrap(), None);
    }

    #[test]
    fn direction_must_be_unit() {
        assert!(DetectionGeometry::new(Vector3::new(1.0, 1.0, 0.0)).is_err());
        assert!(DetectionGeometry::new(Vector3::z()).is_ok());
    }

    fn sample(i: f64, g: f64) -> G2Sample {
        G2Sample { intensity: i, correlation: g }
    }

    #[test]
    fn window_of_constants() {
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.37).collect();
        let samples = vec![sample(0.5, 0.2); times.len()];
        for w in [0.1, 1.0, 10.0] {
            let out = windowed_g2(&times, &samples, w).unwrap();
            for (t, v) in times.iter().zip(out) {
                if t + 0.5 * w <= times[times.len() - 1] {
                    assert_abs_diff_eq!(v.unwrap(), 0.8, epsilon = 1e-12);
                } else {
                    assert!(v.is_none());
                }
            }
        }
    }

    #[test]
    fn narrow_window_recovers_instantaneous_value() {
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
        let samples: Vec<G2Sample> = times
            .iter()
            .map(|t| sample((-t).exp(), 0.3 * (-1.5 * t).exp()))
            .collect();
        let out = windowed_g2(&times, &samples, 0.01).unwrap();
        // the first point sees a clipped, one-sided window
        assert!(out[times.len() - 1].is_none());
        let inner = 1..times.len() - 1;
        for (s, v) in samples[inner.clone()].iter().zip(&out[inner]) {
            let g = s.g2().unwrap();
            assert!((v.unwrap() - g).abs() < 1e-4 * g.max(1.0));
        }
    }

    #[test]
    fn linear_data_is_integrated_exactly() {
        // I(t) = 1 + t averaged over [1, 3] is 3, G2(t) = t averaged is 2
        let times = [0.0, 0.7, 1.5, 2.2, 4.0];
        let samples: Vec<G2Sample> = times.iter().map(|&t| sample(1.0 + t, t)).collect();
        let out = windowed_g2(&times, &samples, 2.0).unwrap();
        // t = 2.2 → window [1.2, 3.2]: Ī = 3.2, Ḡ = 2.2
        assert_abs_diff_eq!(out[3].unwrap(), 2.2 / (3.2 * 3.2), epsilon = 1e-12);
        // t = 0 → window clipped to [0, 1]: Ī = 1.5, Ḡ = 0.5
        assert_abs_diff_eq!(out[0].unwrap(), 0.5 / 2.25, epsilon = 1e-12);
        // t = 4 → window ends past the last sample
        assert!(out[4].is_none());
    }

    #[test]
    fn window_errors() {
        let times = [0.0, 1.0, 2.0];
        let samples = vec![sample(1.0, 1.0); 3];
        assert!(windowed_g2(&times, &samples, 3.0).is_err());
        assert!(windowed_g2(&times, &samples, 0.0).is_err());
        assert!(windowed_g2(&times, &samples[..2], 1.0).is_err());
        assert!(windowed_g2(&[0.0, 0.0, 1.0], &samples, 0.5).is_err());
    }

    #[test]
    fn vanishing_window_intensity_is_missing() {
        let times = [0.0, 1.0, 2.0, 3.0];
        let samples = vec![sample(0.0, 0.0); 4];
        assert!(windowed_g2(&times, &samples, 1.0).unwrap().iter().all(Option::is_none));
    }
}
