//! Surrogate accuracy (percentage reduction from the total sum of squares)
//! and integrated squared errors between densities.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collocation::GridSpec;
use crate::error::{Error, Result};
use crate::io::fmt_sig;
use crate::nn::{Order, SurrogateModel};
use crate::ode::{Integrator, Param, ParamVector, RhsKind, Trajectory};

const STATES: [&str; 3] = ["S", "I", "R"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub tss: f64,
    pub sse: f64,
    pub p: f64,
}

/// `p = (TSS - SSE) / TSS * 100` with TSS taken about the reference mean.
pub fn accuracy(reference: &[f64], predicted: &[f64]) -> Result<Accuracy> {
    if reference.len() != predicted.len() {
        return Err(Error::ShapeMismatch { expected: reference.len(), got: predicted.len() });
    }
    let m = reference.iter().sum::<f64>() / reference.len() as f64;
    let tss: f64 = reference.iter().map(|x| (x - m) * (x - m)).sum();
    if !(tss > 0.0) {
        return Err(Error::ZeroTss);
    }
    let sse: f64 = reference.iter().zip(predicted).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(Accuracy { tss, sse, p: percentage(tss, sse) })
}

pub fn percentage(tss: f64, sse: f64) -> f64 {
    (tss - sse) / tss * 100.0
}

/// A quantity whose surrogate accuracy is measured over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    State(usize),
    /// `d state / d c_j`
    First { state: usize, param: usize },
    /// `d^2 state / d c_j d c_l` with `j <= l`.
    Second { state: usize, j: usize, l: usize },
}

impl Quantity {
    pub fn label(&self, params: &[Param]) -> String {
        match *self {
            Quantity::State(d) => STATES[d].to_string(),
            Quantity::First { state, param } => format!("d{}/d{}", STATES[state], params[param].suffix()),
            Quantity::Second { state, j, l } if j == l => {
                format!("d2{}/d{}^2", STATES[state], params[j].suffix())
            }
            Quantity::Second { state, j, l } => {
                format!("d2{}/d{}d{}", STATES[state], params[j].suffix(), params[l].suffix())
            }
        }
    }

    /// States, then first derivatives (param-major), then the distinct
    /// second derivatives (pair-major).
    pub fn all(n_params: usize) -> Vec<Quantity> {
        let mut out: Vec<Quantity> = (0..3).map(Quantity::State).collect();
        for param in 0..n_params {
            out.extend((0..3).map(|state| Quantity::First { state, param }));
        }
        for j in 0..n_params {
            for l in j..n_params {
                out.extend((0..3).map(|state| Quantity::Second { state, j, l }));
            }
        }
        out
    }
}

/// Second derivatives of the states over time, by central differences of
/// the integrated first-order sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondDerivatives {
    pub n_params: usize,
    /// `values[(j * k + l) * 3 + state][time]`, symmetric in `(j, l)`.
    values: Vec<Vec<f64>>,
    /// Same layout, before symmetrization.
    raw: Vec<Vec<f64>>,
}

impl SecondDerivatives {
    pub fn series(&self, state: usize, j: usize, l: usize) -> &[f64] {
        &self.values[(j * self.n_params + l) * 3 + state]
    }

    /// Difference of `d state / d c_j` along `c_l`, unsymmetrized.
    pub fn raw_series(&self, state: usize, j: usize, l: usize) -> &[f64] {
        &self.raw[(j * self.n_params + l) * 3 + state]
    }
}

pub fn second_derivative_reference(
    c_ref: &[f64],
    grid: &GridSpec,
    times: &[f64],
    eps: f64,
) -> Result<SecondDerivatives> {
    let k = c_ref.len();
    if k != grid.params.len() {
        return Err(Error::ShapeMismatch { expected: grid.params.len(), got: k });
    }
    for (v, a) in c_ref.iter().zip(&grid.params) {
        if v - 2.0 * eps < a.axis.min || v + 2.0 * eps > a.axis.max {
            return Err(Error::OutOfBox);
        }
    }
    let sens = |c: &[f64]| -> Result<Trajectory> {
        let pv = ParamVector::from_free(c, grid.fixed_i0())?;
        Integrator::default().integrate(RhsKind::Extended, &pv, grid.population, times)
    };
    let mut raw = vec![vec![0.0; times.len()]; k * k * 3];
    for l in 0..k {
        let mut cp = c_ref.to_vec();
        cp[l] += eps;
        let mut cm = c_ref.to_vec();
        cm[l] -= eps;
        let (tp, tm) = (sens(&cp)?, sens(&cm)?);
        for j in 0..k {
            for state in 0..3 {
                let col = 3 + 3 * j + state;
                for n in 0..times.len() {
                    raw[(j * k + l) * 3 + state][n] = (tp.row(n)[col] - tm.row(n)[col]) / (2.0 * eps);
                }
            }
        }
    }
    let mut values = raw.clone();
    for j in 0..k {
        for l in 0..k {
            for state in 0..3 {
                let (a, b) = ((j * k + l) * 3 + state, (l * k + j) * 3 + state);
                for n in 0..times.len() {
                    values[a][n] = 0.5 * (raw[a][n] + raw[b][n]);
                }
            }
        }
    }
    Ok(SecondDerivatives { n_params: k, values, raw })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub quantity: String,
    #[serde(flatten)]
    pub accuracy: Accuracy,
}

/// Finite-difference step of the second-derivative reference.
pub const SECOND_DERIVATIVE_EPS: f64 = 1e-3;

/// Accuracy of every quantity in `quantities` at `c_ref` over `times`.
pub fn accuracy_table(
    model: &SurrogateModel,
    c_ref: &[f64],
    times: &[f64],
    quantities: &[Quantity],
) -> Result<Vec<AccuracyRow>> {
    let grid = &model.grid;
    let params = grid.free_params();
    let pv = ParamVector::from_free(c_ref, grid.fixed_i0())?;
    let exact = Integrator::default().integrate(RhsKind::Extended, &pv, grid.population, times)?;
    let needs_second = quantities.iter().any(|q| matches!(q, Quantity::Second { .. }));
    let order = if needs_second {
        Order::Hess
    } else if quantities.iter().any(|q| matches!(q, Quantity::First { .. })) {
        Order::Grad
    } else {
        Order::Value
    };
    let second = if needs_second {
        Some(second_derivative_reference(c_ref, grid, times, SECOND_DERIVATIVE_EPS)?)
    } else {
        None
    };
    let preds = times
        .iter()
        .map(|&t| model.predict(t, c_ref, order))
        .collect::<Result<Vec<_>>>()?;
    let k = params.len();
    quantities
        .iter()
        .map(|q| {
            let (reference, predicted): (Vec<f64>, Vec<f64>) = match *q {
                Quantity::State(d) => (exact.column(d), preds.iter().map(|p| p[d].value).collect()),
                Quantity::First { state, param } => (
                    exact.column(3 + 3 * param + state),
                    preds.iter().map(|p| p[state].grad[param]).collect(),
                ),
                Quantity::Second { state, j, l } => (
                    second.as_ref().expect("computed above").series(state, j, l).to_vec(),
                    preds.iter().map(|p| p[state].hess[j * k + l]).collect(),
                ),
            };
            Ok(AccuracyRow { quantity: q.label(&params), accuracy: accuracy(&reference, &predicted)? })
        })
        .collect()
}

pub fn write_accuracy_csv(path: &Path, rows: &[AccuracyRow], config_hash: &str) -> Result<()> {
    let mut s = format!("# config_hash={config_hash}\nquantity,tss,sse,p\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.quantity,
            fmt_sig(r.accuracy.tss, 12),
            fmt_sig(r.accuracy.sse, 12),
            fmt_sig(r.accuracy.p, 10)
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Equally spaced evaluation points for integrated squared errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

pub const MIN_GRID_POINTS: usize = 512;

impl EvalGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < MIN_GRID_POINTS {
            return Err(Error::GridTooCoarse(n));
        }
        if !(lo < hi) {
            return Err(Error::InvalidConfig(format!("empty evaluation range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, n })
    }

    /// `mean +- 6 sd`.
    pub fn around(mean: f64, sd: f64, n: usize) -> Result<Self> {
        Self::new(mean - 6.0 * sd, mean + 6.0 * sd, n)
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        (0..self.n).map(move |j| self.lo + j as f64 * h)
    }
}

/// Riemann-sum integrated squared difference of two densities.
pub fn ise(a: impl Fn(f64) -> f64, b: impl Fn(f64) -> f64, grid: &EvalGrid) -> f64 {
    grid.points().map(|x| (a(x) - b(x)).powi(2)).sum::<f64>() * grid.step()
}

pub fn mise(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Plot-ready density series: `phi,<column>...`.
pub fn write_density_csv(
    path: &Path,
    grid: &EvalGrid,
    columns: &[(&str, &dyn Fn(f64) -> f64)],
    config_hash: &str,
) -> Result<()> {
    let mut s = format!("# config_hash={config_hash}\nphi");
    for (name, _) in columns {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for x in grid.points() {
        s.push_str(&fmt_sig(x, 12));
        for (_, f) in columns {
            s.push(',');
            s.push_str(&fmt_sig(f(x), 12));
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn normal_pdf(mean: f64, variance: f64) -> impl Fn(f64) -> f64 {
    move |x| (-0.5 * (x - mean).powi(2) / variance).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}
