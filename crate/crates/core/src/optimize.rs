//! Limited-memory quasi-Newton minimization with Armijo backtracking.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// A differentiable functional of a flat unknown vector. Infeasible points
/// report `+∞`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Returns the value and writes the gradient into `grad`.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("objective is not finite at the starting point ({0})")]
    InfeasibleStart(f64),
    #[error("invalid option {name} = {value}")]
    InvalidOption { name: &'static str, value: f64 },
    #[error("expected {expected} unknowns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Stop when the masked gradient max-norm drops below `grad_tol` times its
    /// initial value.
    pub grad_tol: f64,
    /// Absolute floor for the stopping threshold.
    pub abs_grad_tol: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub armijo_c: f64,
    /// Backtracking factor.
    pub shrink: f64,
    /// Reserved for randomized restarts; the solver itself is deterministic.
    pub seed: Option<u64>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            grad_tol: 1e-8,
            abs_grad_tol: 0.0,
            memory: 10,
            armijo_c: 1e-4,
            shrink: 0.5,
            seed: None,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |name, value| Err(OptimizeError::InvalidOption { name, value });
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol", self.grad_tol);
        }
        if !(self.abs_grad_tol >= 0.0) {
            return bad("abs_grad_tol", self.abs_grad_tol);
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c", self.armijo_c);
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink", self.shrink);
        }
        if self.memory == 0 {
            return bad("memory", 0.0);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    /// No step satisfying the sufficient-decrease condition was found; the
    /// best iterate is returned.
    LineSearchFailed,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max_iterations",
            Status::LineSearchFailed => "line_search_failed",
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    /// Masked gradient max-norm.
    pub grad_norm: f64,
    /// Accepted step length along the search direction (0 for the start).
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimization {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: Status,
    pub trace: Vec<TraceRow>,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn apply_mask(v: &mut [f64], mask: Option<&[bool]>) {
    if let Some(mask) = mask {
        for (x, &m) in v.iter_mut().zip(mask) {
            if m {
                *x = 0.0;
            }
        }
    }
}

const WOLFE_CURVATURE: f64 = 0.9;
const APPROX_WOLFE: f64 = 0.8;

/// Minimizes `objective` from `x0`. Coordinates with `mask[i] == true` are
/// held fixed.
pub fn minimize(
    objective: &dyn Objective,
    x0: &[f64],
    mask: Option<&[bool]>,
    opts: &MinimizeOptions,
) -> Result<Minimization, OptimizeError> {
    opts.validate()?;
    let n = objective.dim();
    if x0.len() != n {
        return Err(OptimizeError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    if let Some(mask) = mask {
        if mask.len() != n {
            return Err(OptimizeError::DimensionMismatch {
                expected: n,
                got: mask.len(),
            });
        }
    }

    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective.value_and_gradient(&x, &mut g);
    if !f.is_finite() {
        return Err(OptimizeError::InfeasibleStart(f));
    }
    apply_mask(&mut g, mask);
    let g0 = max_norm(&g);
    let threshold = (opts.grad_tol * g0).max(opts.abs_grad_tol);
    let mut trace = vec![TraceRow {
        iter: 0,
        energy: f,
        grad_norm: g0,
        step: 0.0,
    }];
    if g0 <= threshold {
        return Ok(Minimization {
            x,
            value: f,
            grad_norm: g0,
            iterations: 0,
            status: Status::Converged,
            trace,
        });
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut status = Status::MaxIterations;
    let mut iterations = 0;

    for iter in 1..=opts.max_iters {
        iterations = iter;
        // two-loop recursion
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (slot, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[slot] = a;
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / dot(&g, &g).sqrt(),
        };
        d.iter_mut().for_each(|di| *di *= gamma);
        for (slot, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &d);
            let a = alpha_buf[slot];
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        apply_mask(&mut d, mask);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            pairs.clear();
            let scale = 1.0 / dot(&g, &g).sqrt();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -scale * gi);
            slope = dot(&g, &d);
        }

        // backtracking
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            x_new.iter_mut().zip(x.iter().zip(&d)).for_each(|(xn, (xi, di))| *xn = xi + t * di);
            let f_new = objective.value_and_gradient(&x_new, &mut g_new);
            if f_new < f && f_new <= f + opts.armijo_c * t * slope {
                accepted = Some(f_new);
                break;
            }
            // Near the minimizer the decrease drops below the rounding noise of
            // `f`; accept a non-increasing step whose directional derivative
            // satisfies the approximate Wolfe bounds instead.
            if f_new.is_finite() && f_new <= f {
                apply_mask(&mut g_new, mask);
                let slope_new = dot(&g_new, &d);
                if slope_new >= WOLFE_CURVATURE * slope && slope_new <= -APPROX_WOLFE * slope {
                    accepted = Some(f_new);
                    break;
                }
            }
            t *= opts.shrink;
        }
        let Some(f_new) = accepted else {
            status = Status::LineSearchFailed;
            iterations = iter - 1;
            break;
        };
        apply_mask(&mut g_new, mask);

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        let gn = max_norm(&g);
        trace.push(TraceRow {
            iter,
            energy: f,
            grad_norm: gn,
            step: t,
        });
        if gn <= threshold {
            status = Status::Converged;
            break;
        }
    }

    let grad_norm = trace.last().map_or(g0, |r| r.grad_norm);
    Ok(Minimization {
        x,
        value: f,
        grad_norm,
        iterations,
        status,
        trace,
    })
}

/// Result of [`fd_gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// Worst relative error over the probed directions.
    pub max_rel_error: f64,
    pub directions: usize,
    /// Directions skipped because a probe point was infeasible.
    pub skipped: usize,
}

/// Compares central-difference directional derivatives with the analytic
/// gradient along `count` seeded random unit directions (zero on masked
/// coordinates).
pub fn fd_gradient_check(
    objective: &dyn Objective,
    x: &[f64],
    mask: Option<&[bool]>,
    count: usize,
    step: f64,
    seed: u64,
) -> GradientCheck {
    let n = objective.dim();
    let mut grad = vec![0.0; n];
    objective.value_and_gradient(x, &mut grad);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = vec![0.0; n];
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for _ in 0..count {
        let mut dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        apply_mask(&mut dir, mask);
        let norm = dot(&dir, &dir).sqrt();
        if norm == 0.0 {
            skipped += 1;
            continue;
        }
        dir.iter_mut().for_each(|v| *v /= norm);
        let mut eval = |t: f64| {
            probe.iter_mut().zip(x.iter().zip(&dir)).for_each(|(p, (xi, di))| *p = xi + t * di);
            objective.value(&probe)
        };
        let (fp, fm) = (eval(step), eval(-step));
        if !(fp.is_finite() && fm.is_finite()) {
            skipped += 1;
            continue;
        }
        let fd = (fp - fm) / (2.0 * step);
        let analytic = dot(&grad, &dir);
        let scale = fd.abs().max(analytic.abs());
        if scale > 0.0 {
            worst = worst.max((fd - analytic).abs() / scale);
        }
    }
    GradientCheck {
        max_rel_error: worst,
        directions: count,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `½ xᵀAx − bᵀx` with a tridiagonal SPD matrix.
    struct Quadratic {
        diag: Vec<f64>,
        off: f64,
        b: Vec<f64>,
    }

    impl Quadratic {
        fn apply(&self, x: &[f64]) -> Vec<f64> {
            let n = x.len();
            (0..n)
                .map(|i| {
                    let mut v = self.diag[i] * x[i];
                    if i > 0 {
                        v += self.off * x[i - 1];
                    }
                    if i + 1 < n {
                        v += self.off * x[i + 1];
                    }
                    v
                })
                .collect()
        }
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.b.len()
        }
        fn value(&self, x: &[f64]) -> f64 {
            0.5 * dot(x, &self.apply(x)) - dot(&self.b, x)
        }
        fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let ax = self.apply(x);
            for i in 0..x.len() {
                grad[i] = ax[i] - self.b[i];
            }
            0.5 * dot(x, &ax) - dot(&self.b, x)
        }
    }

    #[test]
    fn bowl_is_solved_quickly() {
        let a: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let bowl = Quadratic {
            diag: vec![1.0; 6],
            off: 0.0,
            b: a.clone(),
        };
        let r = minimize(&bowl, &[0.0; 6], None, &MinimizeOptions::default()).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert!(r.iterations <= 6 + 5);
        for (x, a) in r.x.iter().zip(&a) {
            assert!((x - a).abs() < 1e-8);
        }
    }

    #[test]
    fn masked_coordinates_do_not_move() {
        let q = Quadratic {
            diag: vec![3.0; 8],
            off: -1.0,
            b: (0..8).map(|i| (i as f64).sin()).collect(),
        };
        let x0: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
        let mask: Vec<bool> = (0..8).map(|i| i == 0 || i == 7).collect();
        let r = minimize(&q, &x0, Some(&mask), &MinimizeOptions::default()).unwrap();
        assert_eq!(r.x[0].to_bits(), x0[0].to_bits());
        assert_eq!(r.x[7].to_bits(), x0[7].to_bits());
        for w in r.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy);
        }
    }

    #[test]
    fn infeasible_start_is_an_error() {
        struct Wall;
        impl Objective for Wall {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, _: &[f64]) -> f64 {
                f64::INFINITY
            }
            fn value_and_gradient(&self, _: &[f64], g: &mut [f64]) -> f64 {
                g[0] = 0.0;
                f64::INFINITY
            }
        }
        assert!(matches!(
            minimize(&Wall, &[0.0], None, &MinimizeOptions::default()),
            Err(OptimizeError::InfeasibleStart(_))
        ));
    }

    #[test]
    fn gradient_check_on_quadratic_and_linear() {
        let q = Quadratic {
            diag: vec![2.0; 5],
            off: 0.5,
            b: vec![1.0, -1.0, 0.5, 0.0, 2.0],
        };
        let x = [0.3, -0.2, 0.1, 0.7, -0.4];
        assert!(fd_gradient_check(&q, &x, None, 10, 1e-3, 1).max_rel_error < 1e-10);
        let linear = Quadratic {
            diag: vec![0.0; 5],
            off: 0.0,
            b: vec![1.0, -1.0, 0.5, 0.0, 2.0],
        };
        assert!(fd_gradient_check(&linear, &x, None, 10, 0.5, 2).max_rel_error < 1e-12);
    }

    #[test]
    fn options_are_validated() {
        let opts = MinimizeOptions {
            armijo_c: 1.5,
            ..MinimizeOptions::default()
        };
        assert!(opts.validate().is_err());
    }
}
