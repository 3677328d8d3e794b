//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! The objective may refuse a point (returns `None`); the line search treats
//! such trials like an infinite energy and shrinks the step.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub armijo: f64,
    /// Stop when the max-norm of the gradient drops to this value.
    pub gradient_tol: f64,
    pub max_iterations: usize,
    /// Largest coordinate change allowed for the first trial of a line search.
    pub max_step: f64,
    pub max_backtracks: usize,
    /// Give up after this many consecutive iterations without a new lowest
    /// gradient norm.
    pub patience: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            armijo: 1e-4,
            gradient_tol: 1e-6,
            max_iterations: 2000,
            max_step: 0.05,
            max_backtracks: 60,
            patience: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// No admissible decrease was found along the search direction.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
    /// Objective value at every accepted iterate, starting with the initial point.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes from `x0`, which must be accepted by `f`.
///
/// Returns `None` if `f` rejects the starting point.
pub fn minimize<F>(f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Option<LbfgsResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    minimize_preconditioned(f, x0, opts, None)
}

/// As [`minimize`], with `precond` applying an SPD initial inverse-Hessian
/// model (scaled by the usual `s.y / y.H0.y` factor).
pub fn minimize_preconditioned<F>(
    mut f: F,
    x0: Vec<f64>,
    opts: &LbfgsOptions,
    precond: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
) -> Option<LbfgsResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let (mut value, mut grad) = f(&x0)?;
    let mut x = x0;
    let mut history = vec![value];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;
    let mut best_grad = max_abs(&grad);
    let mut since_best = 0;

    while iterations < opts.max_iterations {
        if max_abs(&grad) <= opts.gradient_tol {
            status = LbfgsStatus::Converged;
            break;
        }
        let mut dir = two_loop(&grad, &pairs, precond);
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }

        let mut step = (opts.max_step / max_abs(&dir)).min(1.0);
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            if let Some((tv, tg)) = f(&trial) {
                let armijo = tv <= value + opts.armijo * step * slope;
                // Near the minimum energy differences drown in round-off, while
                // directional derivatives stay accurate: accept a step that does
                // not overshoot (approximate Armijo) if the value is unchanged
                // up to a few ulps.
                let noise = 1e-14 * value.abs().max(1.0);
                let approx =
                    tv <= value + noise && dot(&tg, &dir) <= (1.0 - 2.0 * opts.armijo) * -slope;
                if armijo || approx {
                    accepted = Some((trial, tv, tg));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, v_new, g_new)) = accepted else {
            status = LbfgsStatus::Stalled;
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        value = v_new;
        grad = g_new;
        history.push(value);
        iterations += 1;
        let gnorm = max_abs(&grad);
        if gnorm < best_grad {
            best_grad = gnorm;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.patience {
                status = LbfgsStatus::Stalled;
                break;
            }
        }
    }
    if status == LbfgsStatus::MaxIterations && max_abs(&grad) <= opts.gradient_tol {
        status = LbfgsStatus::Converged;
    }
    Some(LbfgsResult {
        gradient_norm: max_abs(&grad),
        x,
        value,
        iterations,
        status,
        history,
    })
}

fn two_loop(
    grad: &[f64],
    pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    precond: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let model = |v: &[f64]| match precond {
        Some(m) => m(v),
        None => v.to_vec(),
    };
    q = model(&q);
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, &model(y));
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}
