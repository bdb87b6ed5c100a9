//! Stationary state of the driven system.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::dopri::{Dopri5, Tolerances};
use super::liouvillian::{Liouvillian, PackedLayout};
use super::DriveParameters;
use crate::coupling::CouplingMatrices;
use crate::error::{Error, Result};
use crate::geometry::AtomicConfiguration;
use crate::manybody::DensityMatrix;

/// Largest `N` solved through the dense `4^N × 4^N` superoperator.
pub const DENSE_STEADY_STATE_MAX_ATOMS: usize = 5;

/// Largest element of `L(ρ)` accepted for a stationary state.
pub const STEADY_STATE_RESIDUAL_TOL: f64 = 1e-10;

const RELAX_CHUNK: f64 = 10.0;
const RELAX_MAX_TIME: f64 = 1e5;

fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

fn finish(generator: &Liouvillian, layout: &PackedLayout, packed: &[Complex64]) -> Result<DensityMatrix> {
    let n = generator.n_atoms();
    let m = layout.unpack(generator.classes(), packed);
    let mut m = (&m + m.adjoint()) * Complex64::from(0.5);
    let tr = m.trace();
    m /= tr;
    let state = DensityMatrix::from_matrix_unchecked(n, m);
    let y = layout.pack(generator.classes(), state.matrix());
    let mut dy = vec![Complex64::from(0.0); y.len()];
    generator.apply_general(layout, &y, &mut dy);
    let residual = max_abs(&dy);
    if residual > STEADY_STATE_RESIDUAL_TOL {
        return Err(Error::NonConvergence(format!(
            "steady-state residual {residual:e} exceeds {STEADY_STATE_RESIDUAL_TOL:e}"
        )));
    }
    state.validate()?;
    Ok(state)
}

fn dense_solve(generator: &Liouvillian, layout: &PackedLayout) -> Result<DensityMatrix> {
    let classes = generator.classes();
    let len = layout.len();
    let dim = 1usize << generator.n_atoms();
    let mut superop = DMatrix::<Complex64>::zeros(len, len);
    let mut e = vec![Complex64::from(0.0); len];
    let mut col = vec![Complex64::from(0.0); len];
    for c in 0..len {
        e[c] = Complex64::from(1.0);
        generator.apply_general(layout, &e, &mut col);
        superop.column_mut(c).copy_from_slice(&col);
        e[c] = Complex64::from(0.0);
    }

    // swap the equation for ρ_00 for the trace condition
    let mut unit = DMatrix::<Complex64>::zeros(dim, dim);
    unit[(0, 0)] = Complex64::from(1.0);
    let r0 = layout
        .pack(classes, &unit)
        .iter()
        .position(|z| z.re == 1.0)
        .expect("ground-state element is packed");
    let trace_row = layout.pack(classes, &DMatrix::identity(dim, dim));
    for (c, v) in trace_row.iter().enumerate() {
        superop[(r0, c)] = *v;
    }
    let mut rhs = nalgebra::DVector::<Complex64>::zeros(len);
    rhs[r0] = Complex64::from(1.0);
    let sol = superop
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NonConvergence("steady-state linear system is singular".into()))?;
    finish(generator, layout, sol.as_slice())
}

fn relax(generator: &Liouvillian, layout: &PackedLayout) -> Result<DensityMatrix> {
    let n = generator.n_atoms();
    let classes = generator.classes();
    let y0 = layout.pack(classes, DensityMatrix::ground(n)?.matrix());
    let rhs = |y: &[Complex64], dy: &mut [Complex64]| generator.apply_hermitian(layout, y, dy);
    let tol = Tolerances { rel: 1e-10, abs: 1e-13 };
    let mut solver = Dopri5::new(rhs, y0, tol, 1.0, None);
    let mut dy = vec![Complex64::from(0.0); layout.len()];
    let mut t = 0.0;
    while t < RELAX_MAX_TIME {
        t += RELAX_CHUNK;
        solver.advance_to(t).map_err(|e| Error::Integration {
            time: t - RELAX_CHUNK,
            reason: format!("relaxation to the steady state failed: {e:?}"),
        })?;
        generator.apply_hermitian(layout, solver.state(), &mut dy);
        let residual = max_abs(&dy);
        log::trace!("relaxation t = {t}: residual {residual:e}");
        if residual < STEADY_STATE_RESIDUAL_TOL {
            return finish(generator, layout, solver.state());
        }
    }
    Err(Error::NonConvergence(format!(
        "no steady state reached by t = {RELAX_MAX_TIME}"
    )))
}

/// Stationary `ρ` with `L(ρ) = 0` and unit trace under a continuous drive.
///
/// Small systems solve the linear problem directly; larger ones relax from
/// the ground state until the residual falls below
/// [`STEADY_STATE_RESIDUAL_TOL`].
pub fn steady_state(
    couplings: &CouplingMatrices,
    drive: &DriveParameters,
    config: &AtomicConfiguration,
) -> Result<DensityMatrix> {
    drive.validate()?;
    if !(drive.rabi > 0.0) {
        return Err(Error::invalid("the steady state needs a nonzero Rabi frequency"));
    }
    let generator = Liouvillian::new(couplings, Some(drive), config)?;
    let layout = PackedLayout::full(generator.classes());
    if generator.n_atoms() <= DENSE_STEADY_STATE_MAX_ATOMS {
        dense_solve(&generator, &layout)
    } else {
        relax(&generator, &layout)
    }
}
