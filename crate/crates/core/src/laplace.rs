//! Log-posterior assembly, MAP search and the Gaussian (Laplace) posterior.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bfgs::{minimize, BfgsOptions, TracePoint};
use crate::error::{Error, Result};
use crate::nn::{Order, StateJet, SurrogateModel};
use crate::ode::{Integrator, Param, ParamVector, RhsKind};

/// Smallest intensity accepted by the Poisson likelihood.
pub const MIN_INTENSITY: f64 = 1e-8;

/// Independent Gaussian priors, one per free parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl PriorSpec {
    /// `N(0, 1e4)` on every coordinate.
    pub fn vague(n: usize) -> Self {
        Self { mean: vec![0.0; n], variance: vec![1e4; n] }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.variance.len() {
            return Err(Error::ShapeMismatch { expected: self.mean.len(), got: self.variance.len() });
        }
        if self.variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("prior variances must be positive".into()));
        }
        Ok(())
    }

    /// Log density up to a constant.
    pub fn log_density(&self, c: &[f64]) -> f64 {
        c.iter()
            .zip(self.mean.iter().zip(&self.variance))
            .map(|(x, (m, v))| -0.5 * (x - m) * (x - m) / v)
            .sum()
    }

    pub fn log_prior(&self, c: &[f64]) -> Derivs {
        let k = c.len();
        let mut hess = vec![0.0; k * k];
        for j in 0..k {
            hess[j * k + j] = -1.0 / self.variance[j];
        }
        Derivs {
            value: self.log_density(c),
            grad: c
                .iter()
                .zip(self.mean.iter().zip(&self.variance))
                .map(|(x, (m, v))| -(x - m) / v)
                .collect(),
            hess,
        }
    }
}

/// Scalar with gradient and row-major Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivs {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Derivs {
    fn zero(k: usize) -> Self {
        Self { value: 0.0, grad: vec![0.0; k], hess: vec![0.0; k * k] }
    }

    fn add(&mut self, other: &Derivs) {
        self.value += other.value;
        self.grad.iter_mut().zip(&other.grad).for_each(|(a, b)| *a += b);
        self.hess.iter_mut().zip(&other.hess).for_each(|(a, b)| *a += b);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationModel {
    /// Poisson with mean `exp(c_gamma) I(t)`.
    DailyRemovals,
    /// Poisson with mean `I(t)`.
    Prevalence,
}

impl ObservationModel {
    pub fn as_str(self) -> &'static str {
        match self {
            ObservationModel::DailyRemovals => "daily-removals",
            ObservationModel::Prevalence => "prevalence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub times: Vec<f64>,
    pub counts: Vec<u64>,
    pub model: ObservationModel,
}

impl ObservationSeries {
    pub fn new(times: Vec<f64>, counts: Vec<u64>, model: ObservationModel) -> Result<Self> {
        let s = Self { times, counts, model };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.counts.len() {
            return Err(Error::ShapeMismatch { expected: self.times.len(), got: self.counts.len() });
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) || self.times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::NonMonotoneTimes);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A source of the infectious curve `I(t, c)` and its parameter derivatives.
pub trait InfectedCurve {
    fn n_params(&self) -> usize;

    fn free_params(&self) -> Vec<Param>;

    fn infected(&self, t: f64, c: &[f64], order: Order) -> Result<StateJet>;

    /// All observation times at once; the default calls [`Self::infected`]
    /// per time.
    fn infected_series(&self, times: &[f64], c: &[f64], order: Order) -> Result<Vec<StateJet>> {
        times.iter().map(|&t| self.infected(t, c, order)).collect()
    }
}

impl InfectedCurve for SurrogateModel {
    fn n_params(&self) -> usize {
        SurrogateModel::n_params(self)
    }

    fn free_params(&self) -> Vec<Param> {
        self.grid.free_params()
    }

    fn infected(&self, t: f64, c: &[f64], order: Order) -> Result<StateJet> {
        self.predict_state(1, t, c, order)
    }
}

/// `I(t, c)` from the sensitivity-augmented integration. Second derivatives
/// are central differences of the integrated sensitivities.
#[derive(Debug, Clone, Copy)]
pub struct ExactCurve {
    pub population: f64,
    pub fixed_i0: bool,
    pub integrator: Integrator,
    pub fd_step: f64,
}

impl ExactCurve {
    pub fn new(population: f64, fixed_i0: bool) -> Self {
        Self { population, fixed_i0, integrator: Integrator::default(), fd_step: 1e-4 }
    }

    fn sensitivities(&self, times: &[f64], c: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        let pv = ParamVector::from_free(c, self.fixed_i0)?;
        let tr = self.integrator.integrate(RhsKind::Extended, &pv, self.population, times)?;
        let k = c.len();
        Ok((0..tr.len())
            .map(|n| {
                let row = tr.row(n);
                (row[1], (0..k).map(|j| row[3 + 3 * j + 1]).collect())
            })
            .collect())
    }
}

impl InfectedCurve for ExactCurve {
    fn n_params(&self) -> usize {
        if self.fixed_i0 {
            2
        } else {
            3
        }
    }

    fn free_params(&self) -> Vec<Param> {
        if self.fixed_i0 {
            crate::ode::FIXED_I0_PARAMS.to_vec()
        } else {
            crate::ode::ALL_PARAMS.to_vec()
        }
    }

    fn infected(&self, t: f64, c: &[f64], order: Order) -> Result<StateJet> {
        Ok(self.infected_series(&[t], c, order)?.remove(0))
    }

    fn infected_series(&self, times: &[f64], c: &[f64], order: Order) -> Result<Vec<StateJet>> {
        let k = c.len();
        if order == Order::Value {
            let pv = ParamVector::from_free(c, self.fixed_i0)?;
            let tr = self.integrator.integrate(RhsKind::Plain, &pv, self.population, times)?;
            return Ok((0..tr.len())
                .map(|n| StateJet { value: tr.row(n)[1], grad: Vec::new(), hess: Vec::new() })
                .collect());
        }
        let base = self.sensitivities(times, c)?;
        let mut hess = vec![vec![0.0; k * k]; times.len()];
        if order == Order::Hess {
            let h = self.fd_step;
            for l in 0..k {
                let mut cp = c.to_vec();
                cp[l] += h;
                let mut cm = c.to_vec();
                cm[l] -= h;
                let (gp, gm) = (self.sensitivities(times, &cp)?, self.sensitivities(times, &cm)?);
                for n in 0..times.len() {
                    for j in 0..k {
                        hess[n][j * k + l] = (gp[n].1[j] - gm[n].1[j]) / (2.0 * h);
                    }
                }
            }
            for hn in &mut hess {
                for j in 0..k {
                    for l in j + 1..k {
                        let m = 0.5 * (hn[j * k + l] + hn[l * k + j]);
                        hn[j * k + l] = m;
                        hn[l * k + j] = m;
                    }
                }
            }
        }
        Ok(base
            .into_iter()
            .zip(hess)
            .map(|((value, grad), h)| StateJet {
                value,
                grad,
                hess: if order == Order::Hess { h } else { Vec::new() },
            })
            .collect())
    }
}

/// Poisson log-likelihood (constants in `c` dropped) with derivatives
/// assembled by the chain rule from the curve's derivatives.
pub fn log_likelihood<C: InfectedCurve + ?Sized>(
    c: &[f64],
    obs: &ObservationSeries,
    curve: &C,
    order: Order,
) -> Result<Derivs> {
    let k = c.len();
    if k != curve.n_params() {
        return Err(Error::ShapeMismatch { expected: curve.n_params(), got: k });
    }
    let gamma_idx = curve.free_params().iter().position(|p| *p == Param::Gamma);
    let jets = curve.infected_series(&obs.times, c, order)?;
    let mut out = Derivs::zero(k);
    for ((&t, &y), jet) in obs.times.iter().zip(&obs.counts).zip(jets) {
        if !(jet.value > MIN_INTENSITY) {
            return Err(Error::NonPositiveIntensity { time: t, value: jet.value });
        }
        let y = y as f64;
        // Poisson mean mu and its derivatives
        let (mu, dmu, ddmu) = match obs.model {
            ObservationModel::Prevalence => (jet.value, jet.grad, jet.hess),
            ObservationModel::DailyRemovals => {
                let gi = gamma_idx.expect("daily-removals model needs c_gamma");
                let eg = c[gi].exp();
                let mu = eg * jet.value;
                let mut dmu = jet.grad.iter().map(|g| eg * g).collect::<Vec<_>>();
                let mut ddmu = jet.hess.iter().map(|h| eg * h).collect::<Vec<_>>();
                if order >= Order::Hess {
                    for j in 0..k {
                        ddmu[j * k + gi] += eg * jet.grad[j];
                        ddmu[gi * k + j] += eg * jet.grad[j];
                    }
                    ddmu[gi * k + gi] += mu;
                }
                if order >= Order::Grad {
                    dmu[gi] += mu;
                }
                (mu, dmu, ddmu)
            }
        };
        out.value += y * mu.ln() - mu;
        if order >= Order::Grad {
            let w = y / mu - 1.0;
            for j in 0..k {
                out.grad[j] += w * dmu[j];
            }
            if order == Order::Hess {
                let w2 = y / (mu * mu);
                for j in 0..k {
                    for l in 0..k {
                        out.hess[j * k + l] += w * ddmu[j * k + l] - w2 * dmu[j] * dmu[l];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `g(c) = ln p(c) + ln p(y | c)` up to a constant.
pub fn log_posterior<C: InfectedCurve + ?Sized>(
    c: &[f64],
    obs: &ObservationSeries,
    prior: &PriorSpec,
    curve: &C,
    order: Order,
) -> Result<Derivs> {
    let mut g = prior.log_prior(c);
    if !obs.is_empty() {
        g.add(&log_likelihood(c, obs, curve, order)?);
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMode {
    /// Second derivatives of the curve itself.
    #[default]
    Analytic,
    /// Central differences of the analytic gradient.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceOptions {
    #[serde(default)]
    pub bfgs: BfgsOptions,
    #[serde(default)]
    pub hessian: HessianMode,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

fn default_fd_step() -> f64 {
    1e-4
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self { bfgs: BfgsOptions::default(), hessian: HessianMode::Analytic, fd_step: default_fd_step() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub names: Vec<String>,
    pub map: Vec<f64>,
    /// Row-major covariance.
    pub covariance: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub log_posterior: f64,
    pub seconds: f64,
    pub trace: Vec<TracePoint>,
}

impl GaussianPosterior {
    pub fn dim(&self) -> usize {
        self.map.len()
    }

    pub fn variance(&self, j: usize) -> f64 {
        self.covariance[j * self.dim() + j]
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.variance(j)).collect()
    }

    /// Marginal density of coordinate `j`.
    pub fn marginal_density(&self, j: usize, x: f64) -> f64 {
        let v = self.variance(j);
        let z = x - self.map[j];
        (-0.5 * z * z / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }

    pub fn report(&self) -> PosteriorReport {
        PosteriorReport {
            map: self.map.clone(),
            covariance: self.covariance.chunks(self.dim().max(1)).map(<[f64]>::to_vec).collect(),
            marginals: self
                .names
                .iter()
                .enumerate()
                .map(|(j, name)| Marginal { name: name.clone(), mean: self.map[j], variance: self.variance(j) })
                .collect(),
            iterations: self.iterations,
            grad_norm: self.grad_norm,
            converged: self.converged,
            log_posterior: self.log_posterior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub map: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub marginals: Vec<Marginal>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub log_posterior: f64,
}

/// Hessian of `g` at `c` by the configured mechanism, symmetrized.
pub fn posterior_hessian<C: InfectedCurve + ?Sized>(
    c: &[f64],
    obs: &ObservationSeries,
    prior: &PriorSpec,
    curve: &C,
    opts: &LaplaceOptions,
) -> Result<Vec<f64>> {
    let k = c.len();
    let mut h = match opts.hessian {
        HessianMode::Analytic => log_posterior(c, obs, prior, curve, Order::Hess)?.hess,
        HessianMode::FiniteDifference => {
            let mut h = vec![0.0; k * k];
            for l in 0..k {
                let mut cp = c.to_vec();
                cp[l] += opts.fd_step;
                let mut cm = c.to_vec();
                cm[l] -= opts.fd_step;
                let gp = log_posterior(&cp, obs, prior, curve, Order::Grad)?.grad;
                let gm = log_posterior(&cm, obs, prior, curve, Order::Grad)?.grad;
                for j in 0..k {
                    h[j * k + l] = (gp[j] - gm[j]) / (2.0 * opts.fd_step);
                }
            }
            h
        }
    };
    for j in 0..k {
        for l in j + 1..k {
            let m = 0.5 * (h[j * k + l] + h[l * k + j]);
            h[j * k + l] = m;
            h[l * k + j] = m;
        }
    }
    Ok(h)
}

/// Covariance `(-H)^{-1}` of a negative-definite Hessian.
pub fn covariance_from_hessian(hess: &[f64], k: usize) -> Result<Vec<f64>> {
    let neg = DMatrix::from_row_slice(k, k, hess).map(|v| -v);
    let eig = SymmetricEigen::new(neg);
    if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::HessianNotNegativeDefinite {
            eigenvalues: eig.eigenvalues.iter().map(|l| -l).collect(),
        });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let cov = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    let mut out = vec![0.0; k * k];
    for j in 0..k {
        for l in 0..k {
            out[j * k + l] = 0.5 * (cov[(j, l)] + cov[(l, j)]);
        }
    }
    Ok(out)
}

/// MAP by BFGS on `-g`, then the Laplace covariance at the MAP.
pub fn maximize_g<C: InfectedCurve + ?Sized>(
    obs: &ObservationSeries,
    prior: &PriorSpec,
    curve: &C,
    start: &[f64],
    opts: &LaplaceOptions,
) -> Result<GaussianPosterior> {
    let started = Instant::now();
    prior.validate()?;
    obs.validate()?;
    let k = curve.n_params();
    if start.len() != k || prior.len() != k {
        return Err(Error::ShapeMismatch { expected: k, got: start.len().max(prior.len()) });
    }
    let names = curve.free_params().iter().map(|p| p.name().to_string()).collect();

    if obs.is_empty() {
        // no data: the posterior is the prior
        let mut covariance = vec![0.0; k * k];
        for j in 0..k {
            covariance[j * k + j] = prior.variance[j];
        }
        return Ok(GaussianPosterior {
            names,
            map: prior.mean.clone(),
            covariance,
            converged: true,
            iterations: 0,
            grad_norm: 0.0,
            log_posterior: 0.0,
            seconds: started.elapsed().as_secs_f64(),
            trace: Vec::new(),
        });
    }

    let objective = |c: &[f64]| {
        let g = log_posterior(c, obs, prior, curve, Order::Grad)?;
        Ok((-g.value, g.grad.iter().map(|v| -v).collect()))
    };
    let result = minimize(objective, start, &opts.bfgs)?;
    if !result.converged {
        log::warn!(
            "BFGS stopped at the iteration cap ({}) with |grad g|_inf = {:.3e}",
            result.iterations,
            result.grad_norm()
        );
    }
    let hess = posterior_hessian(&result.x, obs, prior, curve, opts)?;
    let covariance = covariance_from_hessian(&hess, k)?;
    Ok(GaussianPosterior {
        names,
        grad_norm: result.grad_norm(),
        map: result.x,
        covariance,
        converged: result.converged,
        iterations: result.iterations,
        log_posterior: -result.value,
        seconds: started.elapsed().as_secs_f64(),
        trace: result.trace,
    })
}

/// Poisson log-likelihood of the integrated trajectory, constants in `c`
/// dropped. Used by the Monte Carlo MLE search and the MH benchmark.
pub fn exact_log_likelihood(
    c: &ParamVector,
    obs: &ObservationSeries,
    population: f64,
    integrator: &Integrator,
) -> Result<f64> {
    if obs.is_empty() {
        return Ok(0.0);
    }
    let tr = integrator.integrate(RhsKind::Plain, c, population, &obs.times)?;
    let scale = match obs.model {
        ObservationModel::Prevalence => 1.0,
        ObservationModel::DailyRemovals => c.c_gamma.exp(),
    };
    let mut ll = 0.0;
    for (n, &y) in obs.counts.iter().enumerate() {
        let mu = scale * tr.row(n)[1];
        if !(mu > MIN_INTENSITY) {
            return Err(Error::NonPositiveIntensity { time: obs.times[n], value: mu });
        }
        ll += y as f64 * mu.ln() - mu;
    }
    Ok(ll)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMle {
    pub best: Vec<f64>,
    pub log_likelihood: f64,
    /// Every draw with its log-likelihood (`-inf` where integration failed).
    pub draws: Vec<(Vec<f64>, f64)>,
}

/// Uniform random search for the likelihood maximizer over a box, using the
/// integrated (not surrogate) trajectory.
pub fn monte_carlo_mle(
    obs: &ObservationSeries,
    population: f64,
    ranges: &[(f64, f64)],
    fixed_i0: bool,
    n_samples: usize,
    seed: u64,
) -> Result<McMle> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("monte_carlo_mle needs at least one draw".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| ranges.iter().map(|&(lo, hi)| if lo < hi { rng.random_range(lo..hi) } else { lo }).collect())
        .collect();
    let integrator = Integrator::default();
    let lls: Vec<f64> = points
        .par_iter()
        .map(|c| {
            ParamVector::from_free(c, fixed_i0)
                .and_then(|pv| exact_log_likelihood(&pv, obs, population, &integrator))
                .unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let mut best = 0;
    for (j, ll) in lls.iter().enumerate() {
        if *ll > lls[best] {
            best = j;
        }
    }
    Ok(McMle {
        best: points[best].clone(),
        log_likelihood: lls[best],
        draws: points.into_iter().zip(lls).collect(),
    })
}
