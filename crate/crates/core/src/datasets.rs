//! The boarding-school influenza counts and simulated Poisson replicates.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_sig, read_csv_table, read_json, write_json};
use crate::laplace::{ObservationModel, ObservationSeries};
use crate::ode::{Integrator, ParamVector, RhsKind};

/// Assumed school population.
pub const INFLUENZA_POPULATION: f64 = 763.0;

const INFLUENZA_COUNTS: [u64; 14] = [3, 8, 28, 75, 221, 291, 255, 235, 190, 126, 70, 28, 12, 5];

/// Daily counts of confined boys on days 1 to 14, as a prevalence series.
pub fn influenza_data() -> ObservationSeries {
    ObservationSeries {
        times: (1..=14).map(f64::from).collect(),
        counts: INFLUENZA_COUNTS.to_vec(),
        model: ObservationModel::Prevalence,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub c_star: ParamVector,
    pub population: f64,
    pub times: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl SimSpec {
    pub fn standard(seed: u64) -> Self {
        Self {
            c_star: ParamVector::simulated_truth(),
            population: 10_000.0,
            times: (1..=50).map(f64::from).collect(),
            replicates: 200,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicate count must be at least 1".into()));
        }
        if self.times.is_empty() {
            return Err(Error::InvalidConfig("no observation times".into()));
        }
        Ok(())
    }

    /// Poisson means `exp(c_gamma) I(t)` at the observation times.
    pub fn means(&self) -> Result<Vec<f64>> {
        let tr = Integrator::default().integrate(RhsKind::Plain, &self.c_star, self.population, &self.times)?;
        let rate = self.c_star.c_gamma.exp();
        Ok((0..tr.len()).map(|n| rate * tr.row(n)[1]).collect())
    }
}

/// One integration at `c_star`, then independent Poisson draws per
/// replicate; replicate `r` uses seed `seed + r`.
pub fn simulate_datasets(spec: &SimSpec) -> Result<Vec<ObservationSeries>> {
    spec.validate()?;
    let means = spec.means()?;
    let dists = means
        .iter()
        .map(|&m| Poisson::new(m).map_err(|e| Error::InvalidConfig(format!("Poisson mean {m}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(r as u64));
            ObservationSeries {
                times: spec.times.clone(),
                counts: dists.iter().map(|d| d.sample(&mut rng) as u64).collect(),
                model: ObservationModel::DailyRemovals,
            }
        })
        .collect())
}

/// JSON sidecar describing an observation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub model: ObservationModel,
    #[serde(rename = "P")]
    pub population: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` as `t,y` CSV and the sidecar next to it.
pub fn save_dataset(path: &Path, series: &ObservationSeries, meta: &DatasetMeta) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut s = String::from("t,y\n");
    for (t, y) in series.times.iter().zip(&series.counts) {
        s.push_str(&format!("{},{y}\n", fmt_sig(*t, 17)));
    }
    fs::write(path, s)?;
    write_json(&sidecar(path), meta)
}

pub fn load_dataset(path: &Path) -> Result<(ObservationSeries, DatasetMeta)> {
    let meta: DatasetMeta = read_json(&sidecar(path))?;
    let (header, rows) = read_csv_table(path)?;
    if header != ["t", "y"] {
        return Err(Error::Parse(format!("{}: expected header t,y", path.display())));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut counts = Vec::with_capacity(rows.len());
    for r in rows {
        if r.len() != 2 || r[1] < 0.0 || r[1].fract() != 0.0 {
            return Err(Error::Parse(format!("{}: bad row {r:?}", path.display())));
        }
        times.push(r[0]);
        counts.push(r[1] as u64);
    }
    let series = ObservationSeries::new(times, counts, meta.model)?;
    Ok((series, meta))
}

/// `replicate_000.csv`, `replicate_001.csv`, ...
pub fn replicate_path(dir: &Path, r: usize) -> PathBuf {
    dir.join(format!("replicate_{r:03}.csv"))
}
