use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collocation::{GridSpec, Method, TrainingSet};
use crate::error::{Error, Result};
use crate::nn::loss::{LossContext, Penalty, ResidualUnits};
use crate::nn::mlp::Mlp;
use crate::nn::model::{DomainPolicy, SurrogateModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }
}

/// Training hyperparameters. `lambda_residual` weights the ODE residual of
/// each target; `lambda_constraint` weights the conservation residuals
/// (`S+I+R-P`, then one per sensitivity block for Method II).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_residual: Vec<f64>,
    pub lambda_constraint: Vec<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub residual_units: ResidualUnits,
    pub seed: u64,
}

impl LossConfig {
    /// Settings of the simulated study.
    pub fn simulated(method: Method, n_blocks: usize) -> Self {
        let (lambda_residual, lambda_constraint) = match method {
            Method::I => (vec![0.5; 3], vec![0.5]),
            Method::II => {
                let mut r = vec![0.5; 3];
                r.extend(std::iter::repeat_n(0.001, 3 * n_blocks));
                let mut c = vec![0.5];
                c.extend(std::iter::repeat_n(0.001, n_blocks));
                (r, c)
            }
        };
        Self::base(lambda_residual, lambda_constraint)
    }

    /// Settings of the influenza fit.
    pub fn influenza(method: Method, n_blocks: usize) -> Self {
        match method {
            Method::I => Self::base(vec![0.5; 3], vec![0.5]),
            Method::II => Self::base(vec![0.1; 3 * (n_blocks + 1)], vec![0.1; n_blocks + 1]),
        }
    }

    /// Defaults for a grid: influenza-style weights when the R0 filter is
    /// on, simulated-study weights otherwise.
    pub fn for_grid(spec: &GridSpec) -> Self {
        let n_blocks = spec.params.len();
        if spec.r0_filter {
            Self::influenza(spec.method, n_blocks)
        } else {
            Self::simulated(spec.method, n_blocks)
        }
    }

    fn base(lambda_residual: Vec<f64>, lambda_constraint: Vec<f64>) -> Self {
        Self {
            lambda_residual,
            lambda_constraint,
            batch_size: 400,
            epochs: 2500,
            hidden: vec![10, 10],
            optimizer: AdamConfig::default(),
            residual_units: ResidualUnits::Original,
            seed: 1,
        }
    }

    pub fn penalty(&self) -> Penalty<'_> {
        Penalty { residual: &self.lambda_residual, constraint: &self.lambda_constraint, units: self.residual_units }
    }

    pub fn widths(&self, n_inputs: usize) -> Vec<usize> {
        let mut w = vec![n_inputs];
        w.extend(&self.hidden);
        w.push(1);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch size and epoch count must be positive".into()));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("bad optimizer settings {o:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(cfg: AdamConfig, nets: &[Mlp]) -> Self {
        let zeros = || nets.iter().map(|n| vec![0.0; n.n_params()]).collect();
        Self { cfg, m: zeros(), v: zeros(), step: 0 }
    }

    fn update(&mut self, nets: &mut [Mlp], grads: &[Vec<f64>]) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        for (k, net) in nets.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((p, g), m), v) in net.params_mut().iter_mut().zip(&grads[k]).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *p -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
            }
        }
    }
}

/// Fresh networks for a grid, Glorot-initialized from `config.seed`, with
/// inputs mapped onto `[-1, 1]` over the grid box.
pub fn init_nets(spec: &GridSpec, config: &LossConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Mlp>> {
    let widths = config.widths(spec.n_inputs());
    let axes = spec.input_axes();
    (0..spec.target_names().len())
        .map(|_| Mlp::glorot(&widths, rng)?.with_input_axes(&axes))
        .collect()
}

pub fn train(set: &TrainingSet, config: &LossConfig) -> Result<SurrogateModel> {
    train_with_progress(set, config, |_| {})
}

/// Mini-batch Adam on the regularized loss. `progress` sees every epoch's
/// losses as they are produced.
pub fn train_with_progress(
    set: &TrainingSet,
    config: &LossConfig,
    mut progress: impl FnMut(&EpochLoss),
) -> Result<SurrogateModel> {
    config.validate()?;
    if set.split.train.is_empty() {
        return Err(Error::InvalidConfig("empty training partition".into()));
    }
    let started = Instant::now();
    let spec = &set.spec;
    let ctx = LossContext::new(spec.method, &spec.free_params(), spec.population, &set.scaler, config.penalty())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut nets = init_nets(spec, config, &mut rng)?;
    let mut adam = Adam::new(config.optimizer, &nets);
    let mut order = set.split.train.clone();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = ctx.loss_and_grad(&nets, &set.features, &set.targets, batch)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            sum += loss * batch.len() as f64;
            adam.update(&mut nets, &grads);
        }
        let val_loss = ctx.loss(&nets, &set.features, &set.targets, &set.split.validation)?;
        let record = EpochLoss { epoch, train_loss: sum / order.len() as f64, val_loss };
        if !record.train_loss.is_finite() || !(val_loss.is_finite() || set.split.validation.is_empty()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log::debug!("epoch {epoch}: train {:.6e} val {:.6e}", record.train_loss, val_loss);
        progress(&record);
        history.push(record);
    }

    Ok(SurrogateModel {
        grid: spec.clone(),
        config: config.clone(),
        nets,
        scaler: set.scaler.clone(),
        history,
        domain: DomainPolicy::default(),
        train_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::{Axis, ParamAxis};
    use crate::ode::{Integrator, Param};

    fn small_spec(method: Method) -> GridSpec {
        GridSpec {
            time: Axis::new(1.0, 10.0, 5),
            params: vec![
                ParamAxis { param: Param::Gamma, axis: Axis::new(-1.0, -0.5, 3) },
                ParamAxis { param: Param::Beta, axis: Axis::new(0.4, 0.8, 3) },
            ],
            population: 763.0,
            method,
            r0_filter: false,
        }
    }

    fn quick_config(set: &TrainingSet, epochs: usize) -> LossConfig {
        let mut c = LossConfig::for_grid(&set.spec);
        c.epochs = epochs;
        c.batch_size = 8;
        c.hidden = vec![5, 5];
        c
    }

    #[test]
    fn default_penalty_shapes() {
        let c = LossConfig::simulated(Method::II, 3);
        assert_eq!(c.lambda_residual.len(), 12);
        assert_eq!(c.lambda_residual[3], 0.001);
        assert_eq!(c.lambda_constraint, vec![0.5, 0.001, 0.001, 0.001]);
        let f = LossConfig::influenza(Method::II, 3);
        assert!(f.lambda_residual.iter().chain(&f.lambda_constraint).all(|l| *l == 0.1));
        assert_eq!(LossConfig::simulated(Method::I, 3).lambda_constraint, vec![0.5]);
    }

    #[test]
    fn same_seed_gives_identical_weights() {
        let set = TrainingSet::build(&small_spec(Method::II), 2, &Integrator::default()).unwrap();
        let cfg = quick_config(&set, 3);
        let a = train(&set, &cfg).unwrap();
        let b = train(&set, &cfg).unwrap();
        assert_eq!(a.nets, b.nets);
        assert_eq!(a.history, b.history);
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(train(&set, &other).unwrap().nets, a.nets);
    }

    #[test]
    fn validation_loss_falls_early_without_penalties() {
        let mut spec = small_spec(Method::I);
        spec.params[1].axis = Axis::new(0.4, 0.45, 3);
        spec.time = Axis::new(1.0, 2.0, 6);
        let set = TrainingSet::build(&spec, 4, &Integrator::default()).unwrap();
        let mut cfg = quick_config(&set, 10);
        cfg.lambda_residual = vec![0.0; 3];
        cfg.lambda_constraint = vec![0.0];
        let model = train(&set, &cfg).unwrap();
        let v: Vec<f64> = model.history.iter().map(|h| h.val_loss).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    }

    #[test]
    fn divergence_is_reported() {
        let set = TrainingSet::build(&small_spec(Method::I), 2, &Integrator::default()).unwrap();
        let mut cfg = quick_config(&set, 3);
        cfg.lambda_residual = vec![1e200; 3];
        assert!(matches!(train(&set, &cfg), Err(Error::NonFiniteLoss { epoch: 1 })));
    }
}
