//! Many-body algebra on the `2^N` dimensional Hilbert space.
//!
//! Operators are applied through bit arithmetic on basis indices and are
//! never materialized as `2^N × 2^N` matrices. Basis index `b` holds atom
//! `j` in bit `j`; a set bit means the atom is excited.

use nalgebra::{DMatrix, DVector, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingMatrices;
use crate::dynamics::{self, DriveParameters};
use crate::error::{Error, Result};
use crate::geometry::AtomicConfiguration;
use crate::MAX_ATOMS;

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub(crate) fn atoms_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::invalid(format!("dimension {dim} is not a power of two")));
    }
    let n = dim.trailing_zeros() as usize;
    if n > MAX_ATOMS {
        return Err(Error::invalid(format!("{n} atoms exceeds the supported maximum {MAX_ATOMS}")));
    }
    Ok(n)
}

/// Dense `2^N × 2^N` density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_atoms: usize,
    data: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Wraps a matrix after checking Hermiticity, unit trace and positivity.
    pub fn from_matrix(data: DMatrix<Complex64>) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::invalid("density matrix must be square"));
        }
        let n_atoms = atoms_for_dim(data.nrows())?;
        let rho = Self { n_atoms, data };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(n_atoms: usize, data: DMatrix<Complex64>) -> Self {
        debug_assert_eq!(data.nrows(), 1 << n_atoms);
        Self { n_atoms, data }
    }

    /// `|ψ⟩⟨ψ|` for a normalized state vector.
    pub fn from_pure(psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("state vector has norm {norm}")));
        }
        let n_atoms = atoms_for_dim(psi.len())?;
        Ok(Self {
            n_atoms,
            data: psi * psi.adjoint(),
        })
    }

    /// Diagonal state with the given basis populations.
    pub fn from_diagonal(populations: &[f64]) -> Result<Self> {
        let n_atoms = atoms_for_dim(populations.len())?;
        let diag = DVector::from_iterator(
            populations.len(),
            populations.iter().map(|&p| Complex64::from(p)),
        );
        let rho = Self {
            n_atoms,
            data: DMatrix::from_diagonal(&diag),
        };
        rho.validate()?;
        Ok(rho)
    }

    /// All atoms in `|g⟩`.
    pub fn ground(n_atoms: usize) -> Result<Self> {
        let dim = 1usize << check_atoms(n_atoms)?;
        let mut data = DMatrix::zeros(dim, dim);
        data[(0, 0)] = ONE;
        Ok(Self { n_atoms, data })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    /// `Tr[ρ²]`.
    pub fn purity(&self) -> f64 {
        // Tr[ρ²] = Σ |ρ_ab|² for Hermitian ρ
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `max |ρ − ρ†|` elementwise.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in a..d {
                worst = worst.max((self.data[(a, b)] - self.data[(b, a)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    ///
    /// When every coherence between different excitation numbers is exactly
    /// zero the spectrum is computed block by block.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let block_diagonal = (0..d).all(|a| {
            (0..d).all(|b| {
                a.count_ones() == b.count_ones() || self.data[(a, b)] == ZERO
            })
        });
        let hermitian = |m: DMatrix<Complex64>| (&m + m.adjoint()) * Complex64::from(0.5);
        if !block_diagonal {
            return hermitian(self.data.clone()).symmetric_eigenvalues().min();
        }
        let mut worst = f64::INFINITY;
        for n in 0..=self.n_atoms {
            let states: Vec<usize> = (0..d).filter(|b| b.count_ones() as usize == n).collect();
            let block = DMatrix::from_fn(states.len(), states.len(), |i, j| {
                self.data[(states[i], states[j])]
            });
            worst = worst.min(hermitian(block).symmetric_eigenvalues().min());
        }
        worst
    }

    /// Checks Hermiticity (1e-10), unit trace (1e-8) and positivity (−1e-8).
    pub fn validate(&self) -> Result<()> {
        self.validate_with(HERMITICITY_TOL, TRACE_TOL, POSITIVITY_TOL)
    }

    pub fn validate_with(&self, herm_tol: f64, trace_tol: f64, pos_tol: f64) -> Result<()> {
        let herm = self.hermiticity_error();
        if !(herm <= herm_tol) {
            return Err(Error::Invariant(format!("density matrix not Hermitian (error {herm:e})")));
        }
        let tr = self.trace();
        if !((tr - ONE).norm() <= trace_tol) {
            return Err(Error::Invariant(format!("density matrix trace is {tr}")));
        }
        let min_eig = self.min_eigenvalue();
        if !(min_eig >= -pos_tol) {
            return Err(Error::Invariant(format!(
                "density matrix has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(())
    }

    /// Relabels atoms: atom `j` of the result is atom `perm[j]` of `self`.
    pub fn permute_atoms(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_atoms;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("not a permutation of the atoms"));
        }
        let map = |b: usize| -> usize {
            (0..n).fold(0, |acc, j| acc | (((b >> perm[j]) & 1) << j))
        };
        let d = self.dim();
        let mut data = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                data[(map(a), map(b))] = self.data[(a, b)];
            }
        }
        Ok(Self { n_atoms: n, data })
    }
}

fn check_atoms(n_atoms: usize) -> Result<usize> {
    if n_atoms == 0 || n_atoms > MAX_ATOMS {
        return Err(Error::invalid(format!(
            "atom number must lie in [1, {MAX_ATOMS}], got {n_atoms}"
        )));
    }
    Ok(n_atoms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    SigmaPlus,
    SigmaMinus,
    /// `σ_y = i(σ⁻ − σ⁺)`.
    SigmaY,
    ProjectorE,
    ProjectorG,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 5] = [
        OperatorKind::SigmaPlus,
        OperatorKind::SigmaMinus,
        OperatorKind::SigmaY,
        OperatorKind::ProjectorE,
        OperatorKind::ProjectorG,
    ];

    /// Single-atom matrix in the `(|g⟩, |e⟩)` basis.
    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        let i = Complex64::i();
        match self {
            OperatorKind::SigmaPlus => [[ZERO, ZERO], [ONE, ZERO]],
            OperatorKind::SigmaMinus => [[ZERO, ONE], [ZERO, ZERO]],
            OperatorKind::SigmaY => [[ZERO, i], [-i, ZERO]],
            OperatorKind::ProjectorE => [[ZERO, ZERO], [ZERO, ONE]],
            OperatorKind::ProjectorG => [[ONE, ZERO], [ZERO, ZERO]],
        }
    }
}

/// Single-atom operator acting on atom `atom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalOperator {
    pub atom: usize,
    pub kind: OperatorKind,
}

impl LocalOperator {
    pub fn new(atom: usize, kind: OperatorKind) -> Self {
        Self { atom, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Returns `O·M` (`Side::Left`) or `M·O` (`Side::Right`) for a local
/// operator `O`, in `O(4^N)` operations.
pub fn apply_local(op: LocalOperator, side: Side, m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if !m.is_square() {
        return Err(Error::invalid("operand must be square"));
    }
    let n = atoms_for_dim(m.nrows())?;
    if op.atom >= n {
        return Err(Error::invalid(format!(
            "atom index {} out of range for {n} atoms",
            op.atom
        )));
    }
    let o = op.kind.matrix();
    let bit = 1usize << op.atom;
    let d = m.nrows();
    let out = match side {
        Side::Left => DMatrix::from_fn(d, d, |a, b| {
            let x = (a & bit != 0) as usize;
            o[x][0] * m[(a & !bit, b)] + o[x][1] * m[(a | bit, b)]
        }),
        Side::Right => DMatrix::from_fn(d, d, |a, b| {
            let y = (b & bit != 0) as usize;
            m[(a, b & !bit)] * o[0][y] + m[(a, b | bit)] * o[1][y]
        }),
    };
    Ok(out)
}

/// Populations `P_0..P_N` of the fixed-excitation-number manifolds.
pub fn excitation_populations(state: &DensityMatrix) -> Vec<f64> {
    let mut p = vec![0.0; state.n_atoms + 1];
    for b in 0..state.dim() {
        p[b.count_ones() as usize] += state.data[(b, b)].re;
    }
    p
}

/// Reduced state of atoms `j` and `m`, indexed `2·b_j + b_m`, i.e. in the
/// order `(gg, ge, eg, ee)`.
pub fn partial_trace_pair(state: &DensityMatrix, j: usize, m: usize) -> Result<Matrix4<Complex64>> {
    let n = state.n_atoms;
    if j >= n || m >= n {
        return Err(Error::invalid(format!("pair ({j}, {m}) out of range for {n} atoms")));
    }
    if j == m {
        return Err(Error::domain("partial trace needs two distinct atoms"));
    }
    let (bj, bm) = (1usize << j, 1usize << m);
    let embed = |rest: usize, x: usize| -> usize {
        rest | if x & 2 != 0 { bj } else { 0 } | if x & 1 != 0 { bm } else { 0 }
    };
    let mut out = Matrix4::zeros();
    for rest in 0..state.dim() {
        if rest & (bj | bm) != 0 {
            continue;
        }
        for x in 0..4 {
            let a = embed(rest, x);
            for y in 0..4 {
                out[(x, y)] += state.data[(a, embed(rest, y))];
            }
        }
    }
    Ok(out)
}

/// Initial states for the decay dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Every atom in `(|g⟩⟨g| + |e⟩⟨e|)/2`.
    Mixture,
    /// `|e…e⟩`.
    Inverted,
    /// `⊗_j (|g⟩ + |e⟩)/√2`.
    CoherentProduct,
    /// Steady state of the driven master equation.
    WeakDriveSteady,
    /// `(1−ε)|g…g⟩⟨g…g| + ε|D_N⟩⟨D_N|`, with the single-excitation state
    /// `|D_N⟩ = N^{-1/2} Σ_j e^{iφ_j}|e_j⟩`. Empty `phases` means all zero.
    DickeEpsilon {
        epsilon: f64,
        #[serde(default)]
        phases: Vec<f64>,
    },
}

/// What the weak-drive steady state needs beyond the atom number.
#[derive(Debug, Clone, Copy)]
pub struct SteadyStateContext<'a> {
    pub couplings: &'a CouplingMatrices,
    pub drive: &'a DriveParameters,
    pub config: &'a AtomicConfiguration,
}

/// Normalized single-excitation state `N^{-1/2} Σ_j e^{iφ_j}|e_j⟩`.
pub fn dicke_state_vector(n_atoms: usize, phases: &[f64]) -> Result<DVector<Complex64>> {
    check_atoms(n_atoms)?;
    if !phases.is_empty() && phases.len() != n_atoms {
        return Err(Error::invalid(format!(
            "{} phases given for {n_atoms} atoms",
            phases.len()
        )));
    }
    let amp = 1.0 / (n_atoms as f64).sqrt();
    let mut psi = DVector::zeros(1 << n_atoms);
    for j in 0..n_atoms {
        let phi = phases.get(j).copied().unwrap_or(0.0);
        psi[1 << j] = Complex64::from_polar(amp, phi);
    }
    Ok(psi)
}

pub fn make_initial_state(
    kind: &InitialState,
    n_atoms: usize,
    context: Option<SteadyStateContext<'_>>,
) -> Result<DensityMatrix> {
    let n = check_atoms(n_atoms)?;
    let dim = 1usize << n;
    match kind {
        InitialState::Mixture => {
            let p = 1.0 / dim as f64;
            DensityMatrix::from_diagonal(&vec![p; dim])
        }
        InitialState::Inverted => {
            let mut psi = DVector::zeros(dim);
            psi[dim - 1] = ONE;
            DensityMatrix::from_pure(&psi)
        }
        InitialState::CoherentProduct => {
            let amp = Complex64::from((1.0 / dim as f64).sqrt());
            DensityMatrix::from_pure(&DVector::from_element(dim, amp))
        }
        InitialState::DickeEpsilon { epsilon, phases } => {
            if !(0.0..=1.0).contains(epsilon) {
                return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
            }
            let psi = dicke_state_vector(n, phases)?;
            let mut data = psi.clone() * psi.adjoint() * Complex64::from(*epsilon);
            data[(0, 0)] += Complex64::from(1.0 - epsilon);
            Ok(DensityMatrix::from_matrix_unchecked(n, data))
        }
        InitialState::WeakDriveSteady => {
            let ctx = context.ok_or_else(|| {
                Error::invalid("weak-drive steady state needs couplings, drive and configuration")
            })?;
            if ctx.config.n_atoms() != n || ctx.couplings.n_atoms() != n {
                return Err(Error::invalid("context atom number does not match"));
            }
            dynamics::steady_state(ctx.couplings, ctx.drive, ctx.config)
        }
    }
}
