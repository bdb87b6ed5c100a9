//! Dormand–Prince 5(4) embedded Runge–Kutta pair on complex vectors.

use std::ops::Range;

use num_complex::Complex64;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

#[derive(Debug)]
pub enum StepError {
    Underflow { t: f64, h: f64 },
    NonFinite { t: f64 },
}

/// Autonomous system `y' = f(y)`; the state is carried between calls so
/// that output times can be hit exactly by successive [`advance_to`]s.
///
/// [`advance_to`]: Dopri5::advance_to
pub struct Dopri5<F> {
    rhs: F,
    tol: Tolerances,
    max_step: f64,
    t: f64,
    h: f64,
    y: Vec<Complex64>,
    k: [Vec<Complex64>; 7],
    y_stage: Vec<Complex64>,
    y_next: Vec<Complex64>,
    /// Ranges sharing one error scale; empty means per component.
    groups: Vec<Range<usize>>,
    group_scale: Vec<f64>,
    initial_guess: bool,
    stats: StepStats,
}

impl<F: FnMut(&[Complex64], &mut [Complex64])> Dopri5<F> {
    pub fn new(mut rhs: F, y0: Vec<Complex64>, tol: Tolerances, max_step: f64, initial_step: Option<f64>) -> Self {
        let len = y0.len();
        let zeros = || vec![Complex64::new(0.0, 0.0); len];
        let mut k = [zeros(), zeros(), zeros(), zeros(), zeros(), zeros(), zeros()];
        rhs(&y0, &mut k[0]);
        let mut solver = Self {
            rhs,
            tol,
            max_step,
            t: 0.0,
            h: 0.0,
            y: y0,
            k,
            y_stage: zeros(),
            y_next: zeros(),
            groups: Vec::new(),
            group_scale: Vec::new(),
            initial_guess: initial_step.is_none(),
            stats: StepStats {
                rhs_evaluations: 1,
                ..StepStats::default()
            },
        };
        solver.h = match initial_step {
            Some(h) => h.min(max_step),
            None => solver.guess_initial_step(),
        };
        solver
    }

    /// Measures errors in each range relative to the largest magnitude in
    /// that range instead of component by component. The ranges must
    /// cover the state.
    pub fn with_groups(mut self, groups: Vec<Range<usize>>) -> Self {
        debug_assert_eq!(groups.iter().map(|g| g.len()).sum::<usize>(), self.y.len());
        self.group_scale = vec![0.0; groups.len()];
        self.groups = groups;
        if self.initial_guess {
            self.h = self.guess_initial_step().min(self.max_step);
        }
        self
    }

    /// Moves the clock without touching the state.
    pub fn starting_at(mut self, t0: f64) -> Self {
        self.t = t0;
        self
    }

    /// Step size proposed for the next step.
    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[Complex64] {
        &self.y
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    fn scale(&self, a: Complex64, b: Complex64) -> (f64, f64) {
        let sre = self.tol.abs + self.tol.rel * a.re.abs().max(b.re.abs());
        let sim = self.tol.abs + self.tol.rel * a.im.abs().max(b.im.abs());
        (sre, sim)
    }

    fn update_group_scales(&mut self, with_next: bool) {
        for (g, range) in self.groups.iter().enumerate() {
            let mut m = 0.0f64;
            for i in range.clone() {
                m = m.max(self.y[i].norm());
                if with_next {
                    m = m.max(self.y_next[i].norm());
                }
            }
            self.group_scale[g] = self.tol.abs + self.tol.rel * m;
        }
    }

    /// `Σ (|e_re|/s)² + (|e_im|/s)²` with the group or component scales.
    fn scaled_sum(&self, e: impl Fn(usize) -> Complex64, with_next: bool) -> f64 {
        let mut sum = 0.0;
        if self.groups.is_empty() {
            for i in 0..self.y.len() {
                let next = if with_next { self.y_next[i] } else { self.y[i] };
                let (sre, sim) = self.scale(self.y[i], next);
                let x = e(i);
                sum += (x.re / sre).powi(2) + (x.im / sim).powi(2);
            }
        } else {
            for (range, &s) in self.groups.iter().zip(&self.group_scale) {
                for i in range.clone() {
                    sum += e(i).norm_sqr() / (s * s);
                }
            }
        }
        sum
    }

    fn rms_scaled(&mut self, v: &[Complex64]) -> f64 {
        self.update_group_scales(false);
        let sum = self.scaled_sum(|i| v[i], false);
        (sum / (2 * v.len().max(1)) as f64).sqrt()
    }

    /// Starting step from the norms of `y` and `f(y)` and one trial Euler step.
    fn guess_initial_step(&mut self) -> f64 {
        let y = self.y.clone();
        let f = self.k[0].clone();
        let d0 = self.rms_scaled(&y);
        let d1 = self.rms_scaled(&f);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(self.max_step);
        for i in 0..self.y.len() {
            self.y_stage[i] = self.y[i] + self.k[0][i] * h0;
        }
        (self.rhs)(&self.y_stage, &mut self.k[1]);
        self.stats.rhs_evaluations += 1;
        let diff: Vec<Complex64> = self.k[1].iter().zip(&self.k[0]).map(|(a, b)| a - b).collect();
        let d2 = self.rms_scaled(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.max_step)
    }

    fn stage(&mut self, h: f64, coeffs: &[(usize, f64)], out: usize) {
        let len = self.y.len();
        for i in 0..len {
            let mut acc = self.y[i];
            for &(s, c) in coeffs {
                acc += self.k[s][i] * (h * c);
            }
            self.y_stage[i] = acc;
        }
        (self.rhs)(&self.y_stage, &mut self.k[out]);
        self.stats.rhs_evaluations += 1;
    }

    /// One attempted step of size `h`; returns the scaled error norm.
    fn try_step(&mut self, h: f64) -> f64 {
        self.stage(h, &[(0, A21)], 1);
        self.stage(h, &[(0, A31), (1, A32)], 2);
        self.stage(h, &[(0, A41), (1, A42), (2, A43)], 3);
        self.stage(h, &[(0, A51), (1, A52), (2, A53), (3, A54)], 4);
        self.stage(h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], 5);
        let len = self.y.len();
        for i in 0..len {
            self.y_next[i] = self.y[i]
                + (self.k[0][i] * A71
                    + self.k[2][i] * A73
                    + self.k[3][i] * A74
                    + self.k[4][i] * A75
                    + self.k[5][i] * A76)
                    * h;
        }
        (self.rhs)(&self.y_next, &mut self.k[6]);
        self.stats.rhs_evaluations += 1;

        self.update_group_scales(true);
        let k = &self.k;
        let sum = self.scaled_sum(
            |i| (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * h,
            true,
        );
        (sum / (2 * len.max(1)) as f64).sqrt()
    }

    /// Integrates until exactly `t_target`.
    pub fn advance_to(&mut self, t_target: f64) -> Result<(), StepError> {
        while self.t < t_target {
            let remaining = t_target - self.t;
            if remaining <= 1e-13 * self.t.abs().max(1.0) {
                self.t = t_target;
                break;
            }
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h.min(self.max_step) };
            if h <= 1e-14 * self.t.abs().max(1.0) {
                return Err(StepError::Underflow { t: self.t, h });
            }
            let err = self.try_step(h);
            if !err.is_finite() {
                if self.y_next.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                    self.stats.rejected += 1;
                    self.h = h * MIN_FACTOR;
                    continue;
                }
                return Err(StepError::NonFinite { t: self.t });
            }
            if err <= 1.0 {
                self.t = if last { t_target } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.y_next);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                // a step shortened to land on the target says little about the natural step
                let proposal = h * factor;
                self.h = if last { self.h.max(proposal) } else { proposal }.min(self.max_step);
            } else {
                self.stats.rejected += 1;
                self.h = h * (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
            }
        }
        Ok(())
    }
}
