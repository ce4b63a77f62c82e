//! Regularized training losses: scaled MSE plus weighted ODE-residual and
//! constraint penalties on the unscaled network outputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collocation::{Method, Table, TargetScaler};
use crate::error::{Error, Result};
use crate::nn::mlp::{Mlp, Tape};
use crate::ode::{rhs_into, rhs_vjp, Param, ParamVector};

/// Examples per parallel work unit; fixed so that the reduction order (and
/// hence the result) does not depend on the thread count.
const CHUNK: usize = 50;

/// Penalty weights. `residual` has one entry per target, `constraint` one
/// per conservation residual.
#[derive(Debug, Clone, Copy)]
pub struct Penalty<'a> {
    pub residual: &'a [f64],
    pub constraint: &'a [f64],
    pub units: ResidualUnits,
}

/// Units in which the ODE and conservation residuals are penalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualUnits {
    /// Residuals of the unscaled outputs, in people per day (people for the
    /// conservation terms).
    #[default]
    Original,
    /// Each residual divided by its target's standard deviation; a
    /// conservation residual is divided by the mean deviation of its block.
    Standardized,
}

/// Everything the loss needs besides the weights being trained.
#[derive(Debug, Clone)]
pub struct LossContext<'a> {
    pub scaler: &'a TargetScaler,
    pub penalty: Penalty<'a>,
    pub blocks: Vec<Param>,
    pub fixed_i0: bool,
    pub population: f64,
    resid_div: Vec<f64>,
    cons_div: Vec<f64>,
}

impl<'a> LossContext<'a> {
    pub fn new(
        method: Method,
        free_params: &[Param],
        population: f64,
        scaler: &'a TargetScaler,
        penalty: Penalty<'a>,
    ) -> Result<Self> {
        let blocks = match method {
            Method::I => Vec::new(),
            Method::II => free_params.to_vec(),
        };
        let n_targets = 3 * (blocks.len() + 1);
        if scaler.len() != n_targets {
            return Err(Error::ShapeMismatch { expected: n_targets, got: scaler.len() });
        }
        if penalty.residual.len() != n_targets {
            return Err(Error::ShapeMismatch { expected: n_targets, got: penalty.residual.len() });
        }
        if penalty.constraint.len() != blocks.len() + 1 {
            return Err(Error::ShapeMismatch { expected: blocks.len() + 1, got: penalty.constraint.len() });
        }
        if penalty.residual.iter().chain(penalty.constraint).any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidConfig("penalty weights must be non-negative".into()));
        }
        let (resid_div, cons_div) = match penalty.units {
            ResidualUnits::Original => (vec![1.0; n_targets], vec![1.0; blocks.len() + 1]),
            ResidualUnits::Standardized => {
                let sd: Vec<f64> = (0..n_targets).map(|k| scaler.sd(k)).collect();
                let cons = sd.chunks(3).map(|b| b.iter().sum::<f64>() / 3.0).collect();
                (sd, cons)
            }
        };
        Ok(Self {
            scaler,
            penalty,
            blocks,
            fixed_i0: !free_params.contains(&Param::I0),
            population,
            resid_div,
            cons_div,
        })
    }

    pub fn n_targets(&self) -> usize {
        self.scaler.len()
    }

    fn check_nets(&self, nets: &[Mlp]) -> Result<()> {
        if nets.len() != self.n_targets() {
            return Err(Error::ShapeMismatch { expected: self.n_targets(), got: nets.len() });
        }
        Ok(())
    }

    /// Loss of one example; when `grads` is given, the weight gradient is
    /// accumulated into it (one buffer per net).
    pub(crate) fn example(
        &self,
        nets: &[Mlp],
        input: &[f64],
        target: &[f64],
        scratch: &mut Scratch,
        grads: Option<&mut [Vec<f64>]>,
    ) -> f64 {
        let d = self.n_targets();
        let c = ParamVector::from_free(&input[1..], self.fixed_i0).expect("feature width checked");
        for (k, net) in nets.iter().enumerate() {
            let (y, dy) = net.forward_tangent(input, 0, &mut scratch.tapes[k]);
            scratch.f[k] = y;
            scratch.df[k] = dy;
            scratch.x[k] = self.scaler.invert(k, y);
        }
        rhs_into(&scratch.x, &self.blocks, &c, self.population, &mut scratch.rhs);

        let mut loss = 0.0;
        for k in 0..d {
            let e = target[k] - scratch.f[k];
            loss += e * e;
            let l = self.penalty.residual[k];
            let r = (self.scaler.sd(k) * scratch.df[k] - scratch.rhs[k]) / self.resid_div[k];
            scratch.resid[k] = r;
            loss += l * l * r * r;
        }
        for (j, l) in self.penalty.constraint.iter().enumerate() {
            let b = &scratch.x[3 * j..3 * j + 3];
            let q = (b[0] + b[1] + b[2] - if j == 0 { self.population } else { 0.0 }) / self.cons_div[j];
            scratch.cons[j] = q;
            loss += l * l * q * q;
        }

        if let Some(grads) = grads {
            // adjoint of x through the rhs: d/dx of sum_k -2 l_k^2 r_k f_k(x)
            for k in 0..d {
                let l = self.penalty.residual[k];
                scratch.adj[k] = -2.0 * l * l * scratch.resid[k] / self.resid_div[k];
            }
            rhs_vjp(&scratch.x, &self.blocks, &c, self.population, &scratch.adj, &mut scratch.x_bar);
            for (j, l) in self.penalty.constraint.iter().enumerate() {
                let g = 2.0 * l * l * scratch.cons[j] / self.cons_div[j];
                scratch.x_bar[3 * j..3 * j + 3].iter_mut().for_each(|v| *v += g);
            }
            for (k, net) in nets.iter().enumerate() {
                let s = self.scaler.sd(k);
                let l = self.penalty.residual[k];
                let y_bar = -2.0 * (target[k] - scratch.f[k]) + s * scratch.x_bar[k];
                let dy_bar = 2.0 * l * l * scratch.resid[k] * s / self.resid_div[k];
                net.backward_tangent(&mut scratch.tapes[k], y_bar, dy_bar, &mut grads[k]);
            }
        }
        loss
    }

    /// Mean loss over the rows `idx`.
    pub fn loss(&self, nets: &[Mlp], features: &Table, targets: &Table, idx: &[usize]) -> Result<f64> {
        self.check_nets(nets)?;
        self.check_tables(features, targets, nets)?;
        if idx.is_empty() {
            return Ok(f64::NAN);
        }
        let total: f64 = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut scratch = Scratch::new(nets);
                chunk
                    .iter()
                    .map(|&r| self.example(nets, features.row(r), targets.row(r), &mut scratch, None))
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        Ok(total / idx.len() as f64)
    }

    /// Mean loss over the rows `idx` with its gradient for every net.
    pub fn loss_and_grad(
        &self,
        nets: &[Mlp],
        features: &Table,
        targets: &Table,
        idx: &[usize],
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        self.check_nets(nets)?;
        self.check_tables(features, targets, nets)?;
        let parts: Vec<(f64, Vec<Vec<f64>>)> = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut scratch = Scratch::new(nets);
                let mut grads: Vec<Vec<f64>> = nets.iter().map(|n| vec![0.0; n.n_params()]).collect();
                let loss = chunk
                    .iter()
                    .map(|&r| self.example(nets, features.row(r), targets.row(r), &mut scratch, Some(&mut grads)))
                    .sum::<f64>();
                (loss, grads)
            })
            .collect();
        let mut total = 0.0;
        let mut grads: Vec<Vec<f64>> = nets.iter().map(|n| vec![0.0; n.n_params()]).collect();
        for (l, g) in parts {
            total += l;
            for (acc, part) in grads.iter_mut().zip(g) {
                acc.iter_mut().zip(part).for_each(|(a, p)| *a += p);
            }
        }
        let n = idx.len().max(1) as f64;
        grads.iter_mut().flatten().for_each(|g| *g /= n);
        Ok((total / n, grads))
    }

    fn check_tables(&self, features: &Table, targets: &Table, nets: &[Mlp]) -> Result<()> {
        let n_in = nets[0].n_inputs();
        if features.cols() != n_in {
            return Err(Error::ShapeMismatch { expected: n_in, got: features.cols() });
        }
        if targets.cols() != self.n_targets() {
            return Err(Error::ShapeMismatch { expected: self.n_targets(), got: targets.cols() });
        }
        if features.rows() != targets.rows() {
            return Err(Error::ShapeMismatch { expected: features.rows(), got: targets.rows() });
        }
        Ok(())
    }
}

pub(crate) struct Scratch {
    tapes: Vec<Tape>,
    f: Vec<f64>,
    df: Vec<f64>,
    x: Vec<f64>,
    rhs: Vec<f64>,
    resid: Vec<f64>,
    cons: Vec<f64>,
    adj: Vec<f64>,
    x_bar: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(nets: &[Mlp]) -> Self {
        let d = nets.len();
        Self {
            tapes: nets.iter().map(Mlp::tape).collect(),
            f: vec![0.0; d],
            df: vec![0.0; d],
            x: vec![0.0; d],
            rhs: vec![0.0; d],
            resid: vec![0.0; d],
            cons: vec![0.0; d / 3],
            adj: vec![0.0; d],
            x_bar: vec![0.0; d],
        }
    }
}
