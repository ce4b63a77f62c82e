use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::collocation::{GridSpec, Method, TargetScaler};
use crate::error::{Error, Result};
use crate::io::{read_csv_table, read_json, write_csv_table, write_json};
use crate::nn::mlp::{Mlp, MlpFile};
use crate::nn::train::{EpochLoss, LossConfig};

/// What to do when a query falls outside the collocation box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainPolicy {
    Strict,
    #[default]
    Warn,
    Allow,
}

/// Requested derivative order of a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Grad,
    Hess,
}

impl FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "value" => Ok(Order::Value),
            "grad" => Ok(Order::Grad),
            "hess" => Ok(Order::Hess),
            _ => Err(Error::InvalidConfig(format!("unknown prediction order `{s}`"))),
        }
    }
}

/// One unscaled state with derivatives over the free parameters. `grad`
/// and `hess` (row-major) are empty unless requested.
#[derive(Debug, Clone, PartialEq)]
pub struct StateJet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

#[derive(Debug)]
pub struct SurrogateModel {
    pub grid: GridSpec,
    pub config: LossConfig,
    /// One network per target, in target-column order.
    pub nets: Vec<Mlp>,
    pub scaler: TargetScaler,
    pub history: Vec<EpochLoss>,
    pub domain: DomainPolicy,
    pub train_seconds: f64,
}

static WARNED: AtomicBool = AtomicBool::new(false);

impl SurrogateModel {
    pub fn method(&self) -> Method {
        self.grid.method
    }

    pub fn n_params(&self) -> usize {
        self.grid.params.len()
    }

    fn input(&self, t: f64, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.n_params() {
            return Err(Error::ShapeMismatch { expected: self.n_params(), got: c.len() });
        }
        let mut x = Vec::with_capacity(c.len() + 1);
        x.push(t);
        x.extend_from_slice(c);
        if !self.grid.contains(&x) {
            match self.domain {
                DomainPolicy::Strict => return Err(Error::OutOfDomain { point: x }),
                DomainPolicy::Warn => {
                    if !WARNED.swap(true, Ordering::Relaxed) {
                        log::warn!("surrogate queried outside its training box at {x:?}");
                    }
                }
                DomainPolicy::Allow => {}
            }
        }
        Ok(x)
    }

    /// Every target column, unscaled.
    pub fn predict_targets(&self, t: f64, c: &[f64]) -> Result<Vec<f64>> {
        let x = self.input(t, c)?;
        self.nets
            .iter()
            .enumerate()
            .map(|(k, n)| Ok(self.scaler.invert(k, n.forward(&x)?)))
            .collect()
    }

    /// State `d` (0 = S, 1 = I, 2 = R) at `(t, c)`.
    pub fn predict_state(&self, d: usize, t: f64, c: &[f64], order: Order) -> Result<StateJet> {
        if d >= 3 {
            return Err(Error::ShapeMismatch { expected: 3, got: d });
        }
        let x = self.input(t, c)?;
        let k = self.n_params();
        let s = self.scaler.sd(d);
        match (self.method(), order) {
            (_, Order::Value) => Ok(StateJet {
                value: self.scaler.invert(d, self.nets[d].forward(&x)?),
                grad: Vec::new(),
                hess: Vec::new(),
            }),
            (Method::I, _) => {
                let jet = self.nets[d].jet(&x)?;
                let grad = jet.grad[1..].iter().map(|g| s * g).collect();
                let hess = if order == Order::Hess {
                    (0..k * k).map(|ij| s * jet.hess_at(1 + ij / k, 1 + ij % k)).collect()
                } else {
                    Vec::new()
                };
                Ok(StateJet { value: self.scaler.invert(d, jet.value), grad, hess })
            }
            (Method::II, _) => {
                let value = self.scaler.invert(d, self.nets[d].forward(&x)?);
                let cols: Vec<usize> = (0..k).map(|j| 3 + 3 * j + d).collect();
                let mut grad = Vec::with_capacity(k);
                let mut hess = vec![0.0; if order == Order::Hess { k * k } else { 0 }];
                for (j, &col) in cols.iter().enumerate() {
                    if order == Order::Hess {
                        let jet = self.nets[col].jet(&x)?;
                        grad.push(self.scaler.invert(col, jet.value));
                        let sc = self.scaler.sd(col);
                        for l in 0..k {
                            hess[j * k + l] = sc * jet.grad[1 + l];
                        }
                    } else {
                        grad.push(self.scaler.invert(col, self.nets[col].forward(&x)?));
                    }
                }
                for j in 0..hess.len().min(k * k) / k.max(1) {
                    for l in j + 1..k {
                        let m = 0.5 * (hess[j * k + l] + hess[l * k + j]);
                        hess[j * k + l] = m;
                        hess[l * k + j] = m;
                    }
                }
                Ok(StateJet { value, grad, hess })
            }
        }
    }

    /// `(S, I, R)` with the requested derivatives.
    pub fn predict(&self, t: f64, c: &[f64], order: Order) -> Result<Vec<StateJet>> {
        (0..3).map(|d| self.predict_state(d, t, c, order)).collect()
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            method: self.method(),
            activation: "tanh".into(),
            widths: self.config.widths(self.grid.n_inputs()),
            grid: self.grid.clone(),
            config: self.config.clone(),
            seed: self.config.seed,
            scaler: self.scaler.clone(),
            nets: self.nets.iter().map(Mlp::to_file).collect(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.activation != "tanh" {
            return Err(Error::Parse(format!("unsupported activation `{}`", file.activation)));
        }
        let nets = file.nets.iter().map(Mlp::from_file).collect::<Result<Vec<_>>>()?;
        let expected = file.grid.target_names().len();
        if nets.len() != expected || file.scaler.len() != expected {
            return Err(Error::ShapeMismatch { expected, got: nets.len() });
        }
        if file.grid.method != file.method {
            return Err(Error::ConfigMismatch("model method disagrees with its grid".into()));
        }
        Ok(Self {
            grid: file.grid,
            config: file.config,
            nets,
            scaler: file.scaler,
            history: Vec::new(),
            domain: DomainPolicy::default(),
            train_seconds: 0.0,
        })
    }

    /// Writes `model.json` and `loss_history.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("model.json"), &self.to_file())?;
        let rows: Vec<Vec<f64>> = self
            .history
            .iter()
            .map(|h| vec![h.epoch as f64, h.train_loss, h.val_loss])
            .collect();
        write_csv_table(
            fs::File::create(dir.join("loss_history.csv"))?,
            &["epoch", "train_loss", "val_loss"],
            &rows,
            17,
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut model = Self::from_file(read_json(&dir.join("model.json"))?)?;
        let hist = dir.join("loss_history.csv");
        if hist.exists() {
            let (_, rows) = read_csv_table(&hist)?;
            model.history = rows
                .into_iter()
                .map(|r| EpochLoss { epoch: r[0] as usize, train_loss: r[1], val_loss: r[2] })
                .collect();
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub method: Method,
    pub activation: String,
    pub widths: Vec<usize>,
    pub grid: GridSpec,
    pub config: LossConfig,
    pub seed: u64,
    pub scaler: TargetScaler,
    pub nets: Vec<MlpFile>,
}
