//! BFGS minimizer with Armijo backtracking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    /// Stop once the sup-norm of the gradient is at most this.
    pub gtol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { gtol: 1e-6, max_iter: 500, c1: 1e-4, max_backtracks: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration cap was reached before the gradient test.
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

impl BfgsResult {
    pub fn grad_norm(&self) -> f64 {
        sup_norm(&self.grad)
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Minimize `f`, which returns the value and gradient. An error from `f`
/// at a trial point rejects that step; an error at `x0` is returned.
/// Reaching `max_iter` returns the last iterate with `converged = false`;
/// a line search that finds no acceptable step is a `NotConverged` error.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = f(x0)?;
    if !fx.is_finite() || g0.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidConfig(format!("objective is not finite at the start point {x0:?}")));
    }
    let mut g = DVector::from_vec(g0);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut trace = vec![TracePoint { iteration: 0, x: x0.to_vec(), value: fx, grad_norm: g.amax() }];

    for iter in 1..=opts.max_iter {
        if g.amax() <= opts.gtol {
            return Ok(finish(x, fx, g, iter - 1, true, trace));
        }
        let mut d = -(&h_inv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            // lost descent; restart from steepest descent
            h_inv = DMatrix::identity(n, n);
            d = -g.clone();
            slope = g.dot(&d);
        }
        // round-off allowance so that steps near the optimum, where the
        // decrease is below the precision of f, are still taken
        let noise = 8.0 * f64::EPSILON * fx.abs().max(1.0);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial = &x + alpha * &d;
            if let Ok((ft, gt)) = f(trial.as_slice()) {
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= fx + opts.c1 * alpha * slope + noise {
                    accepted = Some((trial, ft, DVector::from_vec(gt)));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            return Err(Error::NotConverged { iterations: iter, grad_norm: g.amax() });
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                h_inv *= sy / y.dot(&y);
                first = false;
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - rho * &s * y.transpose();
            let right = &i - rho * &y * s.transpose();
            h_inv = left * h_inv * right + rho * &s * s.transpose();
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(TracePoint { iteration: iter, x: x.as_slice().to_vec(), value: fx, grad_norm: g.amax() });
    }
    let converged = g.amax() <= opts.gtol;
    Ok(finish(x, fx, g, opts.max_iter, converged, trace))
}

fn finish(
    x: DVector<f64>,
    value: f64,
    g: DVector<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<TracePoint>,
) -> BfgsResult {
    BfgsResult {
        x: x.as_slice().to_vec(),
        value,
        grad: g.as_slice().to_vec(),
        iterations,
        converged,
        trace,
    }
}
