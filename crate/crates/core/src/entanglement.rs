//! Pairwise Wootters concurrence and the aggregate entanglement metrics.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manybody::{partial_trace_pair, DensityMatrix};

/// Concurrences at or below this count as zero.
pub const DEFAULT_ENTANGLEMENT_THRESHOLD: f64 = 1e-10;

/// Tolerance on Hermiticity, trace and positivity of a two-qubit input.
const INPUT_TOL: f64 = 1e-6;

/// `σ_y ⊗ σ_y` in the `(gg, ge, eg, ee)` basis: anti-diagonal `(−1, 1, 1, −1)`.
fn spin_flip_operator() -> Matrix4<Complex64> {
    const SIGN: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
    Matrix4::from_fn(|r, c| if r + c == 3 { Complex64::from(SIGN[r]) } else { Complex64::from(0.0) })
}

/// Wootters concurrence `C = max(0, λ₁ − λ₂ − λ₃ − λ₄)` of a two-qubit state.
///
/// The `λ` are the square roots of the eigenvalues of `ρ ρ̃`, with
/// `ρ̃ = (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`. They are obtained as the singular values of
/// `τ = Wᵀ (σ_y⊗σ_y) W` for `ρ = W W†`, since `ρ ρ̃` is similar to `τ τ†`.
/// This keeps full precision for nearly pure states, where taking square
/// roots of the eigenvalues of `ρ ρ̃` would amplify round-off to `~1e-8`.
pub fn concurrence_4x4(rho: &Matrix4<Complex64>) -> Result<f64> {
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("non-finite two-qubit state"));
    }
    let herm = (rho - rho.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if herm > INPUT_TOL {
        return Err(Error::invalid(format!("two-qubit state is not Hermitian (error {herm:e})")));
    }
    let trace = rho.trace();
    if (trace - Complex64::from(1.0)).norm() > INPUT_TOL {
        return Err(Error::invalid(format!("two-qubit state has trace {trace}")));
    }
    let hermitian = (rho + rho.adjoint()) * Complex64::from(0.5);
    let eig = hermitian.symmetric_eigen();
    if eig.eigenvalues.min() < -INPUT_TOL {
        return Err(Error::invalid(format!(
            "two-qubit state has eigenvalue {:e}",
            eig.eigenvalues.min()
        )));
    }
    let sqrt_p = eig.eigenvalues.map(|p| Complex64::from(p.max(0.0).sqrt()));
    let w = eig.eigenvectors * Matrix4::from_diagonal(&sqrt_p);
    let tau = w.transpose() * spin_flip_operator() * w;
    let mut lambda: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    Ok((lambda[0] - lambda[1] - lambda[2] - lambda[3]).clamp(0.0, 1.0))
}

/// Symmetric matrix of pair concurrences with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcurrenceMatrix {
    values: DMatrix<f64>,
}

impl ConcurrenceMatrix {
    pub fn n_atoms(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, j: usize, m: usize) -> f64 {
        self.values[(j, m)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::invalid("concurrence matrix must be square"));
        }
        let n = values.nrows();
        for j in 0..n {
            for m in 0..n {
                let v = values[(j, m)];
                if !(0.0..=1.0).contains(&v) || v != values[(m, j)] || (j == m && v != 0.0) {
                    return Err(Error::invalid(format!("bad concurrence entry ({j}, {m}) = {v}")));
                }
            }
        }
        Ok(Self { values })
    }
}

/// Concurrence of every pair of atoms.
pub fn concurrence_matrix(state: &DensityMatrix) -> Result<ConcurrenceMatrix> {
    let n = state.n_atoms();
    let mut values = DMatrix::zeros(n, n);
    for j in 0..n {
        for m in j + 1..n {
            let c = concurrence_4x4(&partial_trace_pair(state, j, m)?)?;
            values[(j, m)] = c;
            values[(m, j)] = c;
        }
    }
    Ok(ConcurrenceMatrix { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMetrics {
    /// Mean over all `N(N−1)` ordered pairs.
    pub c_avg: f64,
    /// Minimum over all pairs.
    pub c_min: f64,
    /// Size of the largest set of atoms that are pairwise entangled.
    pub n_ent: usize,
}

/// `C_avg`, `C_min` and `N_ent`; a pair counts as entangled when its
/// concurrence exceeds `threshold`. A single atom gives `(0, 0, 1)`.
pub fn aggregate_metrics(conc: &ConcurrenceMatrix, threshold: f64) -> PairMetrics {
    let n = conc.n_atoms();
    if n < 2 {
        return PairMetrics {
            c_avg: 0.0,
            c_min: 0.0,
            n_ent: n,
        };
    }
    let mut sum = 0.0;
    let mut c_min = f64::INFINITY;
    let mut adjacency = vec![0u32; n];
    for j in 0..n {
        for m in j + 1..n {
            let c = conc.get(j, m);
            sum += c;
            c_min = c_min.min(c);
            if c > threshold {
                adjacency[j] |= 1 << m;
                adjacency[m] |= 1 << j;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    PairMetrics {
        c_avg: sum / pairs,
        c_min,
        n_ent: max_clique(&adjacency),
    }
}

/// Largest clique by exhaustive search over vertex subsets, which is cheap
/// for the atom numbers handled here.
fn max_clique(adjacency: &[u32]) -> usize {
    let n = adjacency.len();
    let mut best = n.min(1);
    for mask in 1u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let clique = (0..n)
            .filter(|j| mask >> j & 1 == 1)
            .all(|j| adjacency[j] & mask == mask & !(1 << j));
        if clique {
            best = size;
        }
    }
    best
}
