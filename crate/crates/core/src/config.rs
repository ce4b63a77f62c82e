//! Experiment configuration shared by every workbench command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collocation::{GridSpec, Method};
use crate::datasets::{SimSpec, INFLUENZA_POPULATION};
use crate::error::{Error, Result};
use crate::io::read_json;
use crate::laplace::{LaplaceOptions, ObservationModel, PriorSpec};
use crate::mh::MhConfig;
use crate::nn::LossConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DataSource {
    /// Replicates drawn from `sim`.
    Simulated { sim: SimSpec },
    /// The built-in influenza counts.
    Influenza,
    /// A `t,y` CSV with a JSON sidecar.
    File { path: PathBuf },
}

/// Uniform search box for the approximate-MLE start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleSearch {
    pub ranges: Vec<(f64, f64)>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkbenchConfig {
    pub name: String,
    pub grid: GridSpec,
    pub loss: LossConfig,
    pub prior: PriorSpec,
    pub mh: MhConfig,
    pub data: DataSource,
    pub observation_model: ObservationModel,
    #[serde(default)]
    pub laplace: LaplaceOptions,
    pub mle: MleSearch,
    /// Explicit BFGS start; the approximate MLE is used when absent.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl WorkbenchConfig {
    /// The 200-replicate simulated study.
    pub fn simulated(method: Method) -> Self {
        let grid = GridSpec::simulated(method);
        let sim = SimSpec::standard(2024);
        let truth = sim.c_star.free_values();
        Self {
            name: "simulated".into(),
            loss: LossConfig::for_grid(&grid),
            prior: PriorSpec::vague(3),
            mh: MhConfig::standard(truth.clone(), 11),
            data: DataSource::Simulated { sim },
            observation_model: ObservationModel::DailyRemovals,
            laplace: LaplaceOptions::default(),
            mle: MleSearch {
                ranges: grid.params.iter().map(|a| (a.axis.min, a.axis.max)).collect(),
                n_samples: 2_000,
            },
            start: Some(truth),
            grid,
            output_dir: "out/simulated".into(),
            seed: 1,
        }
    }

    /// Influenza fit; `fixed_i0` pins `I(0) = 1`.
    pub fn influenza(method: Method, fixed_i0: bool) -> Self {
        let grid = if fixed_i0 {
            GridSpec::influenza_fixed_i0(method, INFLUENZA_POPULATION)
        } else {
            GridSpec::influenza(method, INFLUENZA_POPULATION)
        };
        let k = grid.params.len();
        let mut ranges = vec![(-3.0, 3.0), (-3.0, 0.5), (-1.0, 2.0)];
        if fixed_i0 {
            ranges.remove(0);
        }
        let initial = if fixed_i0 { vec![-0.73, 0.52] } else { vec![-0.574, -0.704, 0.593] };
        Self {
            name: if fixed_i0 { "influenza-fixed-i0".into() } else { "influenza".into() },
            loss: LossConfig::for_grid(&grid),
            prior: PriorSpec::vague(k),
            mh: MhConfig::standard(initial, 11),
            data: DataSource::Influenza,
            observation_model: ObservationModel::Prevalence,
            laplace: LaplaceOptions::default(),
            mle: MleSearch { ranges, n_samples: 20_000 },
            start: None,
            grid,
            output_dir: format!("out/{}", if fixed_i0 { "influenza-fixed-i0" } else { "influenza" }).into(),
            seed: 1,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.loss.validate()?;
        self.prior.validate()?;
        self.mh.validate()?;
        let k = self.grid.params.len();
        let check = |what: &str, n: usize| {
            if n == k {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{what} has {n} entries, grid has {k} parameters")))
            }
        };
        check("prior", self.prior.len())?;
        check("mh.initial", self.mh.initial.len())?;
        check("mle.ranges", self.mle.ranges.len())?;
        if let Some(s) = &self.start {
            check("start", s.len())?;
        }
        let n_targets = self.grid.target_names().len();
        if self.loss.lambda_residual.len() != n_targets {
            return Err(Error::InvalidConfig(format!(
                "lambda_residual needs {n_targets} entries for method {}",
                self.grid.method
            )));
        }
        if self.loss.lambda_constraint.len() != n_targets / 3 {
            return Err(Error::InvalidConfig(format!("lambda_constraint needs {} entries", n_targets / 3)));
        }
        if let DataSource::File { path } = &self.data {
            if !path.exists() {
                return Err(Error::MissingArtifact(path.display().to_string()));
            }
        }
        if let DataSource::Simulated { sim } = &self.data {
            sim.validate()?;
        }
        Ok(())
    }

    /// Short SHA-256 digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn population(&self) -> f64 {
        self.grid.population
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for cfg in [
            WorkbenchConfig::simulated(Method::I),
            WorkbenchConfig::simulated(Method::II),
            WorkbenchConfig::influenza(Method::I, false),
            WorkbenchConfig::influenza(Method::II, false),
            WorkbenchConfig::influenza(Method::II, true),
        ] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn json_round_trip_and_hash() {
        let cfg = WorkbenchConfig::influenza(Method::II, false);
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: WorkbenchConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let mut cfg = WorkbenchConfig::influenza(Method::II, true);
        cfg.loss.lambda_residual.push(0.1);
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }
}
