//! Random-walk Metropolis-Hastings over the integrated likelihood, and
//! Gaussian kernel density estimates of its marginals.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_sig;
use crate::laplace::{exact_log_likelihood, ObservationSeries, PriorSpec};
use crate::ode::{Integrator, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhConfig {
    pub n_iter: usize,
    /// Keep every `thin`-th state.
    pub thin: usize,
    pub proposal_variance: Vec<f64>,
    pub initial: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub burn_in: usize,
}

impl MhConfig {
    /// 200,000 iterations thinned by 1,000 with proposal variance 0.05.
    pub fn standard(initial: Vec<f64>, seed: u64) -> Self {
        Self {
            n_iter: 200_000,
            thin: 1_000,
            proposal_variance: vec![0.05; initial.len()],
            initial,
            seed,
            burn_in: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.n_iter == 0 || !self.n_iter.is_multiple_of(self.thin) {
            return Err(Error::InvalidConfig(format!(
                "thinning interval {} must divide n_iter {}",
                self.thin, self.n_iter
            )));
        }
        if self.proposal_variance.len() != self.initial.len() {
            return Err(Error::ShapeMismatch { expected: self.initial.len(), got: self.proposal_variance.len() });
        }
        if self.proposal_variance.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("proposal variances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub names: Vec<String>,
    /// Retained states, in chain order.
    pub draws: Vec<Vec<f64>>,
    /// Iteration number of each retained state.
    pub iterations: Vec<usize>,
    pub log_post: Vec<f64>,
    /// Whether the proposal at each retained iteration was accepted.
    pub accepted: Vec<bool>,
    pub acceptance_rate: f64,
    pub rejected_failures: usize,
    pub seconds: f64,
}

/// The Metropolis rule: accept when `ln u < ln(ratio)`.
#[inline]
pub fn metropolis_accept(log_ratio: f64, u: f64) -> bool {
    log_ratio >= 0.0 || u.ln() < log_ratio
}

/// Random-walk MH against an arbitrary log target. A target error at a
/// proposal rejects that proposal.
pub fn rw_mh_target<F>(mut log_target: F, names: Vec<String>, config: &MhConfig) -> Result<PosteriorSample>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    config.validate()?;
    let started = Instant::now();
    let k = config.initial.len();
    let sd: Vec<f64> = config.proposal_variance.iter().map(|v| v.sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = config.initial.clone();
    let mut current_lp = log_target(&current)?;
    if !current_lp.is_finite() {
        return Err(Error::InvalidConfig(format!("log target is not finite at the initial point {current:?}")));
    }
    let n_keep = config.n_iter / config.thin;
    let mut sample = PosteriorSample {
        names,
        draws: Vec::with_capacity(n_keep),
        iterations: Vec::with_capacity(n_keep),
        log_post: Vec::with_capacity(n_keep),
        accepted: Vec::with_capacity(n_keep),
        acceptance_rate: 0.0,
        rejected_failures: 0,
        seconds: 0.0,
    };
    let mut n_accepted = 0usize;
    let mut proposal = vec![0.0; k];
    for iter in 1..=config.burn_in + config.n_iter {
        for j in 0..k {
            let z: f64 = StandardNormal.sample(&mut rng);
            proposal[j] = current[j] + sd[j] * z;
        }
        let u: f64 = rng.random();
        let accepted = match log_target(&proposal) {
            Ok(lp) if lp.is_finite() => {
                if metropolis_accept(lp - current_lp, u) {
                    current.copy_from_slice(&proposal);
                    current_lp = lp;
                    true
                } else {
                    false
                }
            }
            Ok(_) => false,
            Err(e) => {
                log::debug!("proposal {proposal:?} rejected: {e}");
                sample.rejected_failures += 1;
                false
            }
        };
        if iter <= config.burn_in {
            continue;
        }
        let i = iter - config.burn_in;
        n_accepted += accepted as usize;
        if i.is_multiple_of(config.thin) {
            sample.draws.push(current.clone());
            sample.iterations.push(i);
            sample.log_post.push(current_lp);
            sample.accepted.push(accepted);
        }
    }
    sample.acceptance_rate = n_accepted as f64 / config.n_iter as f64;
    sample.seconds = started.elapsed().as_secs_f64();
    Ok(sample)
}

/// Random-walk MH with the Poisson likelihood of the integrated trajectory.
pub fn rw_mh(
    obs: &ObservationSeries,
    prior: &PriorSpec,
    population: f64,
    fixed_i0: bool,
    config: &MhConfig,
) -> Result<PosteriorSample> {
    prior.validate()?;
    if prior.len() != config.initial.len() {
        return Err(Error::ShapeMismatch { expected: config.initial.len(), got: prior.len() });
    }
    let integrator = Integrator::default();
    let names = ParamVector::from_free(&config.initial, fixed_i0)?
        .free_params()
        .iter()
        .map(|p| p.name().to_string())
        .collect();
    rw_mh_target(
        |c| {
            let pv = ParamVector::from_free(c, fixed_i0)?;
            Ok(prior.log_density(c) + exact_log_likelihood(&pv, obs, population, &integrator)?)
        },
        names,
        config,
    )
}

impl PosteriorSample {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn marginal(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    /// Highest-log-posterior retained draw.
    pub fn sample_map(&self) -> Vec<f64> {
        let best = (0..self.log_post.len())
            .max_by(|&a, &b| self.log_post[a].total_cmp(&self.log_post[b]))
            .expect("non-empty sample");
        self.draws[best].clone()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| mean(&self.marginal(j))).collect()
    }

    /// Unbiased sample variances.
    pub fn variances(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| variance(&self.marginal(j))).collect()
    }

    pub fn summary(&self) -> Result<MhSummary> {
        let kde_modes = (0..self.dim())
            .map(|j| Kde::new(&self.marginal(j), None).map(|k| k.mode()))
            .collect::<Result<Vec<_>>>()?;
        Ok(MhSummary {
            names: self.names.clone(),
            n_draws: self.draws.len(),
            acceptance_rate: self.acceptance_rate,
            sample_map: self.sample_map(),
            kde_mode: kde_modes,
            mean: self.means(),
            variance: self.variances(),
            rejected_failures: self.rejected_failures,
        })
    }

    /// `iter,<params>,log_post,accepted`, preceded by a `# config_hash=`
    /// comment when a hash is given.
    pub fn write_csv(&self, path: &Path, config_hash: Option<&str>) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        if let Some(h) = config_hash {
            writeln!(f, "# config_hash={h}")?;
        }
        writeln!(f, "iter,{},log_post,accepted", self.names.join(","))?;
        for (n, d) in self.draws.iter().enumerate() {
            let vals: Vec<String> = d.iter().map(|v| fmt_sig(*v, 17)).collect();
            writeln!(
                f,
                "{},{},{},{}",
                self.iterations[n],
                vals.join(","),
                fmt_sig(self.log_post[n], 17),
                self.accepted[n] as u8
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhSummary {
    pub names: Vec<String>,
    pub n_draws: usize,
    pub acceptance_rate: f64,
    pub sample_map: Vec<f64>,
    pub kde_mode: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub rejected_failures: usize,
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    points: Vec<f64>,
    bandwidth: f64,
}

impl Kde {
    /// `bandwidth = None` uses Silverman's rule
    /// `0.9 min(sd, IQR/1.34) n^(-1/5)`.
    pub fn new(draws: &[f64], bandwidth: Option<f64>) -> Result<Self> {
        if draws.len() < 2 {
            return Err(Error::DegenerateSample);
        }
        let bandwidth = match bandwidth {
            Some(h) if h > 0.0 => h,
            Some(_) => return Err(Error::InvalidConfig("bandwidth must be positive".into())),
            None => silverman(draws)?,
        };
        Ok(Self { points: draws.to_vec(), bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.points.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        norm * self.points.iter().map(|p| (-0.5 * ((x - p) / h).powi(2)).exp()).sum::<f64>()
    }

    /// Location of the highest density on a fine grid over the sample range.
    pub fn mode(&self) -> f64 {
        let lo = self.points.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * self.bandwidth;
        let hi = self.points.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * self.bandwidth;
        let n = 2048;
        (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .map(|x| (x, self.density(x)))
            .fold((lo, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0
    }
}

fn silverman(draws: &[f64]) -> Result<f64> {
    let sd = variance(draws).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample);
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (draws.len() as f64).powf(-0.2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::ObservationModel;

    #[test]
    fn equal_densities_always_accept() {
        for u in [0.0, 1e-300, 0.5, 0.999_999] {
            assert!(metropolis_accept(0.0, u));
        }
    }

    #[test]
    fn ratio_e_minus_one() {
        let p = (-1.0f64).exp();
        assert!(metropolis_accept(-1.0, p * 0.999));
        assert!(!metropolis_accept(-1.0, p * 1.001));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let hits = (0..n).filter(|_| metropolis_accept(-1.0, rng.random())).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn log_space_handles_huge_counts() {
        // counts near 1e6 give log-likelihoods of order 1e7
        let obs = ObservationSeries::new(vec![10.0], vec![1_000_000], ObservationModel::Prevalence).unwrap();
        let pv = ParamVector::new(5.0, -2.0, 1.5);
        let ll = exact_log_likelihood(&pv, &obs, 1e7, &Integrator::default()).unwrap();
        assert!(ll.is_finite() && ll.abs() > 1e6);
        assert!(metropolis_accept(ll - (ll - 50.0), 0.3));
    }

    #[test]
    fn conjugate_gaussian_smoke_test() {
        // prior N(0, 4), one observation 1.0 with noise variance 1
        let (m0, v0, y, vy) = (0.0, 4.0, 1.0, 1.0);
        let v_post = 1.0 / (1.0 / v0 + 1.0 / vy);
        let m_post = v_post * (m0 / v0 + y / vy);
        let config = MhConfig {
            n_iter: 50_000,
            thin: 1,
            proposal_variance: vec![2.0],
            initial: vec![0.0],
            seed: 17,
            burn_in: 1_000,
        };
        let s = rw_mh_target(
            |c| Ok(-0.5 * (c[0] - m0).powi(2) / v0 - 0.5 * (y - c[0]).powi(2) / vy),
            vec!["x".into()],
            &config,
        )
        .unwrap();
        let x = s.marginal(0);
        // batch-means standard error for the autocorrelated chain
        let batches: Vec<f64> = x.chunks(1_000).map(mean).collect();
        let se = (variance(&batches) / batches.len() as f64).sqrt();
        assert!((mean(&x) - m_post).abs() < 3.0 * se, "{} vs {m_post} (se {se})", mean(&x));
        let var_batches: Vec<f64> = x.chunks(1_000).map(variance).collect();
        let se_v = (variance(&var_batches) / var_batches.len() as f64).sqrt();
        assert!((variance(&x) - v_post).abs() < 3.0 * se_v, "{} vs {v_post}", variance(&x));
    }

    #[test]
    fn deterministic_and_exact_thinning() {
        let config = MhConfig { n_iter: 3_000, thin: 100, proposal_variance: vec![0.5, 0.5], initial: vec![0.0, 0.0], seed: 2, burn_in: 0 };
        let target = |c: &[f64]| Ok(-0.5 * (c[0] * c[0] + c[1] * c[1]));
        let a = rw_mh_target(target, vec!["a".into(), "b".into()], &config).unwrap();
        let b = rw_mh_target(target, vec!["a".into(), "b".into()], &config).unwrap();
        assert_eq!(a.draws.len(), 30);
        assert_eq!(a.draws, b.draws);
        assert!((0.0..=1.0).contains(&a.acceptance_rate));
        let bad = MhConfig { thin: 7, ..config };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn failing_proposals_are_rejected() {
        let config = MhConfig { n_iter: 500, thin: 1, proposal_variance: vec![1.0], initial: vec![0.5], seed: 4, burn_in: 0 };
        let s = rw_mh_target(
            |c| if c[0] < 0.0 { Err(Error::NonFiniteState { time: 0.0 }) } else { Ok(-c[0]) },
            vec!["x".into()],
            &config,
        )
        .unwrap();
        assert!(s.rejected_failures > 0);
        assert!(s.draws.iter().all(|d| d[0] >= 0.0));
    }

    #[test]
    fn kde_two_points() {
        let k = Kde::new(&[-1.0, 1.0], Some(1.0)).unwrap();
        let want = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((k.density(0.0) - want).abs() < 1e-15);
        assert_eq!(k.density(0.7), k.density(-0.7));
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let k = Kde::new(&x, None).unwrap();
        let (m, s) = (mean(&x), variance(&x).sqrt());
        let (lo, hi, n) = (m - 8.0 * s, m + 8.0 * s, 4001);
        let dx = (hi - lo) / (n - 1) as f64;
        let total: f64 = (0..n).map(|j| k.density(lo + j as f64 * dx)).sum::<f64>() * dx;
        assert!((total - 1.0).abs() < 1e-3, "{total}");
        assert!(matches!(Kde::new(&[2.0, 2.0, 2.0], None), Err(Error::DegenerateSample)));
        assert!(matches!(Kde::new(&[2.0], None), Err(Error::DegenerateSample)));
    }
}
