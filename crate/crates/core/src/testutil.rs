//! Dense reference constructions used only by unit tests.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

use crate::coupling::CouplingMatrices;
use crate::dynamics::DriveParameters;
use crate::geometry::AtomicConfiguration;
use crate::manybody::DensityMatrix;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `I ⊗ … ⊗ o ⊗ … ⊗ I` with atom `j` as bit `j` (highest bit leftmost),
/// local basis `(g, e)`.
pub fn kron_local(n: usize, atom: usize, o: [[Complex64; 2]; 2]) -> CMat {
    let mut full = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for j in (0..n).rev() {
        let factor = if j == atom {
            DMatrix::from_fn(2, 2, |r, k| o[r][k])
        } else {
            DMatrix::identity(2, 2)
        };
        full = full.kronecker(&factor);
    }
    full
}

pub fn sigma_minus(n: usize, atom: usize) -> CMat {
    kron_local(n, atom, [[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]])
}

pub fn sigma_plus(n: usize, atom: usize) -> CMat {
    sigma_minus(n, atom).adjoint()
}

pub fn random_density(n: usize, seed: u64) -> DensityMatrix {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = 1 << n;
    let a = DMatrix::from_fn(d, d, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::from_matrix(m / tr).unwrap()
}

pub fn random_operator(n: usize, seed: u64) -> CMat {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = 1 << n;
    DMatrix::from_fn(d, d, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

/// Hamiltonian and jump-rate matrix assembled from Kronecker products.
pub fn dense_hamiltonian(
    couplings: &CouplingMatrices,
    drive: Option<&DriveParameters>,
    config: &AtomicConfiguration,
) -> CMat {
    let n = couplings.n_atoms();
    let d = 1 << n;
    let mut h = DMatrix::zeros(d, d);
    for j in 0..n {
        let sp = sigma_plus(n, j);
        let sm = sigma_minus(n, j);
        if let Some(dr) = drive {
            let ee = &sp * &sm;
            h -= ee * c(dr.detuning, 0.0);
            let phase = dr.wavevector_direction.dot(&config.positions()[j]);
            let om = Complex64::from_polar(dr.rabi, phase);
            h += (&sp * om + &sm * om.conj()) * c(0.5, 0.0);
        }
        for m in 0..n {
            if m != j {
                h += &sp * sigma_minus(n, m) * c(couplings.delta()[(j, m)], 0.0);
            }
        }
    }
    h
}

/// `L(ρ) = −i[H, ρ] + Σ_{jm} Γ^{jm}(σ_j⁻ρσ_m⁺ − ½{σ_m⁺σ_j⁻, ρ})` by brute force.
pub fn dense_lindblad(h: &CMat, couplings: &CouplingMatrices, rho: &CMat) -> CMat {
    let n = couplings.n_atoms();
    let mi = c(0.0, -1.0);
    let mut out = (h * rho - rho * h) * mi;
    for j in 0..n {
        let sm_j = sigma_minus(n, j);
        for m in 0..n {
            let g = couplings.gamma()[(j, m)];
            if g == 0.0 {
                continue;
            }
            let sp_m = sigma_plus(n, m);
            let pm = &sp_m * &sm_j;
            out += (&sm_j * rho * &sp_m - (&pm * rho + rho * &pm) * c(0.5, 0.0)) * c(g, 0.0);
        }
    }
    out
}

/// Superoperator acting on column-stacked `vec(ρ)`.
pub fn dense_superoperator(h: &CMat, couplings: &CouplingMatrices) -> CMat {
    let d = h.nrows();
    let mut s = DMatrix::zeros(d * d, d * d);
    for col in 0..d * d {
        let mut e = DMatrix::zeros(d, d);
        e[(col % d, col / d)] = c(1.0, 0.0);
        let l = dense_lindblad(h, couplings, &e);
        for row in 0..d * d {
            s[(row, col)] = l[(row % d, row / d)];
        }
    }
    s
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
}
