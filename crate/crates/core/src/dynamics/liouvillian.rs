//! Master-equation right-hand side on excitation-number blocks.
//!
//! The generator is written as
//!
//! ```text
//! dρ/dt = −i(H_eff ρ − ρ H_eff†) + Σ_{j,m} Γ^{jm} σ_j⁻ ρ σ_m⁺
//! H_eff = H − (i/2) Σ_{j,m} Γ^{jm} σ_j⁺ σ_m⁻
//! ```
//!
//! Without a drive, `H_eff` conserves the excitation number and the jump
//! term lowers both sides by one, so the difference `n_left − n_right` of a
//! block is conserved. A [`PackedLayout`] stores only the blocks whose
//! difference is present in the initial state.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::DriveParameters;
use crate::coupling::CouplingMatrices;
use crate::error::{Error, Result};
use crate::geometry::AtomicConfiguration;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Basis states grouped by excitation number, in increasing integer order.
#[derive(Debug, Clone)]
pub struct ExcitationClasses {
    n_atoms: usize,
    states: Vec<Vec<u32>>,
    position: Vec<u32>,
}

impl ExcitationClasses {
    pub fn new(n_atoms: usize) -> Self {
        let dim = 1usize << n_atoms;
        let mut states = vec![Vec::new(); n_atoms + 1];
        let mut position = vec![0u32; dim];
        for b in 0..dim {
            let class = &mut states[b.count_ones() as usize];
            position[b] = class.len() as u32;
            class.push(b as u32);
        }
        Self {
            n_atoms,
            states,
            position,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Basis states with exactly `n` excitations.
    pub fn states(&self, n: usize) -> &[u32] {
        &self.states[n]
    }

    /// Index of basis state `b` within its class.
    pub fn position(&self, b: usize) -> usize {
        self.position[b] as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub n_left: usize,
    pub n_right: usize,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Which excitation-number blocks of `ρ` are stored, and where.
#[derive(Debug, Clone)]
pub struct PackedLayout {
    n_atoms: usize,
    blocks: Vec<Block>,
    index: Vec<Option<usize>>,
    len: usize,
}

impl PackedLayout {
    /// Blocks whose difference `n_left − n_right` is in `differences`.
    pub fn for_differences(classes: &ExcitationClasses, differences: &[i64]) -> Self {
        let n = classes.n_atoms();
        let mut blocks = Vec::new();
        let mut index = vec![None; (n + 1) * (n + 1)];
        let mut offset = 0;
        for nl in 0..=n {
            for nr in 0..=n {
                if !differences.contains(&(nl as i64 - nr as i64)) {
                    continue;
                }
                let rows = classes.states(nl).len();
                let cols = classes.states(nr).len();
                index[nl * (n + 1) + nr] = Some(blocks.len());
                blocks.push(Block {
                    n_left: nl,
                    n_right: nr,
                    offset,
                    rows,
                    cols,
                });
                offset += rows * cols;
            }
        }
        Self {
            n_atoms: n,
            blocks,
            index,
            len: offset,
        }
    }

    /// Every block; required whenever a drive is on.
    pub fn full(classes: &ExcitationClasses) -> Self {
        let n = classes.n_atoms() as i64;
        let all: Vec<i64> = (-n..=n).collect();
        Self::for_differences(classes, &all)
    }

    /// Smallest layout holding `m` that is closed under undriven dynamics.
    pub fn for_matrix(classes: &ExcitationClasses, m: &DMatrix<Complex64>) -> Self {
        let n = classes.n_atoms() as i64;
        let mut present = vec![false; (2 * n + 1) as usize];
        for b in 0..m.ncols() {
            for a in 0..m.nrows() {
                if m[(a, b)] != ZERO {
                    let d = a.count_ones() as i64 - b.count_ones() as i64;
                    present[(d + n) as usize] = true;
                }
            }
        }
        let diffs: Vec<i64> = (-n..=n).filter(|d| present[(d + n) as usize]).collect();
        Self::for_differences(classes, &diffs)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// The blocks with both excitation numbers below `n_max`.
    pub fn below(&self, n_max: usize) -> Self {
        let n = self.n_atoms;
        let mut blocks = Vec::new();
        let mut index = vec![None; (n + 1) * (n + 1)];
        let mut offset = 0;
        for blk in self.blocks.iter().filter(|b| b.n_left < n_max && b.n_right < n_max) {
            index[blk.n_left * (n + 1) + blk.n_right] = Some(blocks.len());
            blocks.push(Block { offset, ..*blk });
            offset += blk.rows * blk.cols;
        }
        Self {
            n_atoms: n,
            blocks,
            index,
            len: offset,
        }
    }

    /// Copies the blocks of `packed` (stored in `self`) that `target` keeps.
    pub fn restrict(&self, target: &PackedLayout, packed: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; target.len];
        for blk in &target.blocks {
            if let Some(src) = self.block(blk.n_left, blk.n_right) {
                let size = blk.rows * blk.cols;
                out[blk.offset..blk.offset + size].copy_from_slice(&packed[src.offset..src.offset + size]);
            }
        }
        out
    }

    /// Smallest `n_max` such that every stored element with an excitation
    /// number `≥ n_max` on either side is below `tol` in magnitude.
    pub fn depleted_from(&self, packed: &[Complex64], tol: f64) -> usize {
        let mut largest = vec![0.0f64; self.n_atoms + 1];
        for blk in &self.blocks {
            let top = blk.n_left.max(blk.n_right);
            let size = blk.rows * blk.cols;
            for z in &packed[blk.offset..blk.offset + size] {
                largest[top] = largest[top].max(z.norm());
            }
        }
        let mut n_max = self.n_atoms + 1;
        while n_max > 0 && largest[n_max - 1] < tol {
            n_max -= 1;
        }
        n_max
    }

    /// One more than the largest excitation number stored.
    pub fn top(&self) -> usize {
        self.blocks.iter().map(|b| b.n_left.max(b.n_right) + 1).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, n_left: usize, n_right: usize) -> Option<&Block> {
        if n_left > self.n_atoms || n_right > self.n_atoms {
            return None;
        }
        self.index[n_left * (self.n_atoms + 1) + n_right].map(|i| &self.blocks[i])
    }

    /// Packs the stored blocks of `m`, row-major within each block.
    pub fn pack(&self, classes: &ExcitationClasses, m: &DMatrix<Complex64>) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.len];
        for blk in &self.blocks {
            let rows = classes.states(blk.n_left);
            let cols = classes.states(blk.n_right);
            for (ia, &a) in rows.iter().enumerate() {
                let base = blk.offset + ia * blk.cols;
                for (ib, &b) in cols.iter().enumerate() {
                    out[base + ib] = m[(a as usize, b as usize)];
                }
            }
        }
        out
    }

    /// Dense matrix with the packed blocks filled in and zeros elsewhere.
    pub fn unpack(&self, classes: &ExcitationClasses, packed: &[Complex64]) -> DMatrix<Complex64> {
        let dim = 1usize << self.n_atoms;
        let mut m = DMatrix::zeros(dim, dim);
        for blk in &self.blocks {
            let rows = classes.states(blk.n_left);
            let cols = classes.states(blk.n_right);
            for (ia, &a) in rows.iter().enumerate() {
                let base = blk.offset + ia * blk.cols;
                for (ib, &b) in cols.iter().enumerate() {
                    m[(a as usize, b as usize)] = packed[base + ib];
                }
            }
        }
        m
    }

    /// True when `m` has no weight outside the stored blocks.
    pub fn contains(&self, m: &DMatrix<Complex64>) -> bool {
        (0..m.ncols()).all(|b| {
            (0..m.nrows()).all(|a| {
                m[(a, b)] == ZERO
                    || self
                        .block(a.count_ones() as usize, b.count_ones() as usize)
                        .is_some()
            })
        })
    }
}

/// Sparse per-class adjacency: `entries[ptr[i]..ptr[i+1]]` belong to state `i`.
#[derive(Debug, Clone, Default)]
struct Adjacency<T> {
    ptr: Vec<usize>,
    entries: Vec<(u32, T)>,
}

impl<T: Copy> Adjacency<T> {
    fn row(&self, i: usize) -> &[(u32, T)] {
        &self.entries[self.ptr[i]..self.ptr[i + 1]]
    }
}

/// Precomputed generator for a fixed set of couplings and optional drive.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    classes: ExcitationClasses,
    /// `−i·D(a)` per basis state, `D(a) = −Δ n_a − (i/2) Σ_{j∈a} Γ^{jj}`.
    diag: Vec<Complex64>,
    /// Per class: `(a' = a − e_j + e_m, −i·(Δ^{jm} − iΓ^{jm}/2))` for `j ∈ a`, `m ∉ a`.
    hops: Vec<Adjacency<Complex64>>,
    /// Per class `n < N`: `(a + e_j, j)` for `j ∉ a`.
    ups: Vec<Adjacency<u8>>,
    /// Per class `n > 0`: `(a − e_j, j)` for `j ∈ a`.
    downs: Vec<Adjacency<u8>>,
    gamma: Vec<f64>,
    /// `Ω e^{i k̂·r_j}` per atom.
    rabi: Option<Vec<Complex64>>,
}

impl Liouvillian {
    pub fn new(
        couplings: &CouplingMatrices,
        drive: Option<&DriveParameters>,
        config: &AtomicConfiguration,
    ) -> Result<Self> {
        let n = couplings.n_atoms();
        if config.n_atoms() != n {
            return Err(Error::invalid(format!(
                "couplings describe {n} atoms but the configuration has {}",
                config.n_atoms()
            )));
        }
        if n > crate::MAX_ATOMS {
            return Err(Error::invalid(format!("{n} atoms exceeds the supported maximum")));
        }
        let classes = ExcitationClasses::new(n);
        let gamma_m = couplings.gamma();
        let delta_m = couplings.delta();
        let detuning = drive.map_or(0.0, |d| d.detuning);
        let dim = 1usize << n;

        let diag = (0..dim)
            .map(|a| {
                let excited = a.count_ones() as f64;
                let width: f64 = (0..n).filter(|j| a >> j & 1 == 1).map(|j| gamma_m[(j, j)]).sum();
                let d = Complex64::new(-detuning * excited, -0.5 * width);
                -I * d
            })
            .collect();

        let mut hops = Vec::with_capacity(n + 1);
        let mut ups = Vec::with_capacity(n + 1);
        let mut downs = Vec::with_capacity(n + 1);
        for class in 0..=n {
            let mut hop = Adjacency { ptr: vec![0], entries: Vec::new() };
            let mut up = Adjacency { ptr: vec![0], entries: Vec::new() };
            let mut down = Adjacency { ptr: vec![0], entries: Vec::new() };
            for &a in classes.states(class) {
                let a = a as usize;
                for j in 0..n {
                    let bj = 1usize << j;
                    if a & bj != 0 {
                        down.entries.push((classes.position(a ^ bj) as u32, j as u8));
                        for m in 0..n {
                            let bm = 1usize << m;
                            if a & bm != 0 {
                                continue;
                            }
                            let k = Complex64::new(delta_m[(j, m)], -0.5 * gamma_m[(j, m)]);
                            if k != ZERO {
                                hop.entries.push((classes.position(a ^ bj ^ bm) as u32, -I * k));
                            }
                        }
                    } else {
                        up.entries.push((classes.position(a | bj) as u32, j as u8));
                    }
                }
                hop.ptr.push(hop.entries.len());
                up.ptr.push(up.entries.len());
                down.ptr.push(down.entries.len());
            }
            hops.push(hop);
            ups.push(up);
            downs.push(down);
        }

        let gamma = (0..n * n).map(|k| gamma_m[(k / n, k % n)]).collect();
        let rabi = drive.map(|d| {
            config
                .positions()
                .iter()
                .map(|r| Complex64::from_polar(d.rabi, d.wavevector_direction.dot(r)))
                .collect()
        });

        Ok(Self {
            classes,
            diag,
            hops,
            ups,
            downs,
            gamma,
            rabi,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.classes.n_atoms()
    }

    pub fn classes(&self) -> &ExcitationClasses {
        &self.classes
    }

    pub fn is_driven(&self) -> bool {
        self.rabi.is_some()
    }

    /// Layout to integrate `m` in: all blocks when driven, otherwise only
    /// the difference sectors present in `m`.
    pub fn layout_for(&self, m: &DMatrix<Complex64>) -> PackedLayout {
        if self.is_driven() {
            PackedLayout::full(&self.classes)
        } else {
            PackedLayout::for_matrix(&self.classes, m)
        }
    }

    fn check_layout(&self, layout: &PackedLayout) -> Result<()> {
        if layout.n_atoms != self.n_atoms() {
            return Err(Error::invalid("layout atom number does not match the generator"));
        }
        if self.is_driven() && layout.blocks.len() != (self.n_atoms() + 1).pow(2) {
            return Err(Error::invalid("a driven generator needs the full block layout"));
        }
        Ok(())
    }

    #[inline]
    fn element(&self, layout: &PackedLayout, blk: &Block, ia: usize, ib: usize, y: &[Complex64]) -> Complex64 {
        let (nl, nr) = (blk.n_left, blk.n_right);
        let a = self.classes.states(nl)[ia] as usize;
        let b = self.classes.states(nr)[ib] as usize;
        let row = blk.offset + ia * blk.cols;

        let mut acc = (self.diag[a] + self.diag[b].conj()) * y[row + ib];
        for &(ia2, h) in self.hops[nl].row(ia) {
            acc += h * y[blk.offset + ia2 as usize * blk.cols + ib];
        }
        for &(ib2, h) in self.hops[nr].row(ib) {
            acc += h.conj() * y[row + ib2 as usize];
        }

        if let Some(up) = layout.block(nl + 1, nr + 1) {
            let n = self.n_atoms();
            let right = self.ups[nr].row(ib);
            for &(ia2, j) in self.ups[nl].row(ia) {
                let src = up.offset + ia2 as usize * up.cols;
                let g = &self.gamma[j as usize * n..(j as usize + 1) * n];
                let mut s = ZERO;
                for &(ib2, m) in right {
                    s += y[src + ib2 as usize] * g[m as usize];
                }
                acc += s;
            }
        }

        if let Some(rabi) = &self.rabi {
            let half_i = Complex64::new(0.0, 0.5);
            let mut left = ZERO;
            if let Some(src) = layout.block(nl.wrapping_sub(1), nr) {
                for &(ia2, j) in self.downs[nl].row(ia) {
                    left += rabi[j as usize] * y[src.offset + ia2 as usize * src.cols + ib];
                }
            }
            if let Some(src) = layout.block(nl + 1, nr) {
                for &(ia2, j) in self.ups[nl].row(ia) {
                    left += rabi[j as usize].conj() * y[src.offset + ia2 as usize * src.cols + ib];
                }
            }
            let mut right = ZERO;
            if let Some(src) = layout.block(nl, nr + 1) {
                let base = src.offset + ia * src.cols;
                for &(ib2, j) in self.ups[nr].row(ib) {
                    right += rabi[j as usize] * y[base + ib2 as usize];
                }
            }
            if let Some(src) = layout.block(nl, nr.wrapping_sub(1)) {
                let base = src.offset + ia * src.cols;
                for &(ib2, j) in self.downs[nr].row(ib) {
                    right += rabi[j as usize].conj() * y[base + ib2 as usize];
                }
            }
            acc += half_i * (right - left);
        }
        acc
    }

    /// `dy = L(y)` for a Hermitian `y`; only the upper half is evaluated
    /// and the rest mirrored, so the result is exactly Hermitian.
    pub fn apply_hermitian(&self, layout: &PackedLayout, y: &[Complex64], dy: &mut [Complex64]) {
        debug_assert_eq!(y.len(), layout.len());
        debug_assert_eq!(dy.len(), layout.len());
        for blk in layout.blocks() {
            if blk.n_left > blk.n_right {
                continue;
            }
            let diagonal = blk.n_left == blk.n_right;
            let mirror = if diagonal {
                *blk
            } else {
                *layout
                    .block(blk.n_right, blk.n_left)
                    .expect("layouts are symmetric in the block difference")
            };
            for ia in 0..blk.rows {
                let start = if diagonal { ia } else { 0 };
                for ib in start..blk.cols {
                    let mut v = self.element(layout, blk, ia, ib, y);
                    if diagonal && ia == ib {
                        v.im = 0.0;
                    }
                    dy[blk.offset + ia * blk.cols + ib] = v;
                    dy[mirror.offset + ib * mirror.cols + ia] = v.conj();
                }
            }
        }
    }

    /// `dy = L(y)` for an arbitrary operator `y`.
    pub fn apply_general(&self, layout: &PackedLayout, y: &[Complex64], dy: &mut [Complex64]) {
        for blk in layout.blocks() {
            for ia in 0..blk.rows {
                for ib in 0..blk.cols {
                    dy[blk.offset + ia * blk.cols + ib] = self.element(layout, blk, ia, ib, y);
                }
            }
        }
    }

    /// Dense convenience wrapper over [`apply_general`](Self::apply_general).
    pub fn apply_dense(&self, m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let dim = 1usize << self.n_atoms();
        if m.shape() != (dim, dim) {
            return Err(Error::invalid(format!(
                "operand has shape {:?}, expected ({dim}, {dim})",
                m.shape()
            )));
        }
        let layout = PackedLayout::full(&self.classes);
        self.check_layout(&layout)?;
        let y = layout.pack(&self.classes, m);
        let mut dy = vec![ZERO; y.len()];
        self.apply_general(&layout, &y, &mut dy);
        Ok(layout.unpack(&self.classes, &dy))
    }

    pub(crate) fn validate_layout(&self, layout: &PackedLayout) -> Result<()> {
        self.check_layout(layout)
    }
}
