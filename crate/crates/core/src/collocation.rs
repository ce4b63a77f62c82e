//! Collocation grids over `(t, c)`, numerically solved training targets,
//! z-score target scaling, the R0 filter and the train/validation/test split.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_csv_table, read_json, write_csv_table, write_json};
use crate::ode::{state_names, Integrator, Param, ParamVector, RhsKind, Trajectory};

/// Surrogate variant: states only (I) or states plus first-order
/// sensitivities as explicit outputs (II).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    I,
    II,
}

impl Method {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Method::I),
            2 => Ok(Method::II),
            _ => Err(Error::InvalidConfig(format!("method must be 1 or 2, got {n}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::I => "I",
            Method::II => "II",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    /// Equally spaced points with both end points hit exactly.
    pub fn points(&self) -> Vec<f64> {
        let n = self.count;
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    self.max
                } else {
                    self.min + (self.max - self.min) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.count < 2 || !(self.min < self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::EmptyDimension(name.to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamAxis {
    pub param: Param,
    #[serde(flatten)]
    pub axis: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub time: Axis,
    /// One axis per free parameter, in the canonical parameter order.
    pub params: Vec<ParamAxis>,
    pub population: f64,
    pub method: Method,
    #[serde(default)]
    pub r0_filter: bool,
}

impl GridSpec {
    /// Grid of the simulated study: 50 days x 16^3 parameter points.
    pub fn simulated(method: Method) -> Self {
        Self {
            time: Axis::new(1.0, 50.0, 50),
            params: vec![
                ParamAxis { param: Param::I0, axis: Axis::new(6f64.ln(), 8f64.ln(), 16) },
                ParamAxis { param: Param::Gamma, axis: Axis::new((1.0f64 / 8.0).ln(), (1.0f64 / 6.0).ln(), 16) },
                ParamAxis { param: Param::Beta, axis: Axis::new(-0.3, -0.2, 16) },
            ],
            population: 10_000.0,
            method,
            r0_filter: false,
        }
    }

    /// Grid of the boarding-school influenza fit: 14 x 31 x 11 x 6, R0 filter on.
    pub fn influenza(method: Method, population: f64) -> Self {
        Self {
            time: Axis::new(1.0, 14.0, 14),
            params: vec![
                ParamAxis { param: Param::I0, axis: Axis::new(0.1f64.ln(), 3f64.ln(), 31) },
                ParamAxis { param: Param::Gamma, axis: Axis::new((1.0f64 / 3.0).ln(), 0.0, 11) },
                ParamAxis { param: Param::Beta, axis: Axis::new(0.4, 0.8, 6) },
            ],
            population,
            method,
            r0_filter: true,
        }
    }

    /// Influenza grid with `I(0) = 1` pinned: only `(c_gamma, c_beta)` vary.
    pub fn influenza_fixed_i0(method: Method, population: f64) -> Self {
        let mut g = Self::influenza(method, population);
        g.params.retain(|a| a.param != Param::I0);
        g
    }

    /// The same box with every count halved (rounded up, at least 2).
    pub fn halved(&self) -> Self {
        let half = |a: Axis| Axis::new(a.min, a.max, a.count.div_ceil(2).max(2));
        let mut g = self.clone();
        g.time = half(g.time);
        for p in &mut g.params {
            p.axis = half(p.axis);
        }
        g
    }

    pub fn fixed_i0(&self) -> bool {
        !self.params.iter().any(|a| a.param == Param::I0)
    }

    pub fn free_params(&self) -> Vec<Param> {
        self.params.iter().map(|a| a.param).collect()
    }

    pub fn n_inputs(&self) -> usize {
        1 + self.params.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = vec!["t".to_string()];
        names.extend(self.params.iter().map(|a| a.param.name().to_string()));
        names
    }

    pub fn target_names(&self) -> Vec<String> {
        match self.method {
            Method::I => state_names(&[]),
            Method::II => state_names(&self.free_params()),
        }
    }

    /// Axis for each input column, `t` first.
    pub fn input_axes(&self) -> Vec<Axis> {
        let mut axes = vec![self.time];
        axes.extend(self.params.iter().map(|a| a.axis));
        axes
    }

    pub fn contains(&self, input: &[f64]) -> bool {
        input.len() == self.n_inputs() && self.input_axes().iter().zip(input).all(|(a, v)| a.contains(*v))
    }

    pub fn validate(&self) -> Result<()> {
        self.time.validate("t")?;
        for a in &self.params {
            a.axis.validate(a.param.name())?;
        }
        let expected: &[Param] = if self.fixed_i0() {
            &crate::ode::FIXED_I0_PARAMS
        } else {
            &crate::ode::ALL_PARAMS
        };
        if self.free_params() != expected {
            return Err(Error::InvalidConfig(format!(
                "grid parameters must be {expected:?}, got {:?}",
                self.free_params()
            )));
        }
        if !(self.population > 0.0) {
            return Err(Error::InvalidConfig("population must be positive".into()));
        }
        Ok(())
    }

    pub fn param_vector(&self, values: &[f64]) -> Result<ParamVector> {
        ParamVector::from_free(values, self.fixed_i0())
    }
}

/// A dense numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub data: Vec<f64>,
}

impl Table {
    pub fn new(names: Vec<String>) -> Self {
        Self { names, data: Vec::new() }
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let c = self.cols();
        &self.data[k * c..(k + 1) * c]
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.cols());
        self.data.extend_from_slice(row);
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.cols()).copied()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        let rows: Vec<Vec<f64>> = (0..self.rows()).map(|k| self.row(k).to_vec()).collect();
        write_csv_table(fs::File::create(path)?, &header, &rows, 17)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (names, rows) = read_csv_table(path)?;
        let mut t = Table::new(names);
        for r in rows {
            if r.len() != t.cols() {
                return Err(Error::ShapeMismatch { expected: t.cols(), got: r.len() });
            }
            t.push(&r);
        }
        Ok(t)
    }
}

/// Cartesian product of the per-dimension grids. Rows are `(t, c_1..c_k)`,
/// parameters varying slowest-first and time fastest.
pub fn build_grid(spec: &GridSpec) -> Result<Table> {
    spec.validate()?;
    let times = spec.time.points();
    let axes: Vec<Vec<f64>> = spec.params.iter().map(|a| a.axis.points()).collect();
    let mut table = Table::new(spec.feature_names());
    let n_param_points: usize = axes.iter().map(Vec::len).product();
    table.data.reserve(n_param_points * times.len() * spec.n_inputs());
    let mut idx = vec![0usize; axes.len()];
    let mut row = vec![0.0; spec.n_inputs()];
    for _ in 0..n_param_points {
        for (j, (ax, &i)) in axes.iter().zip(&idx).enumerate() {
            row[j + 1] = ax[i];
        }
        for &t in &times {
            row[0] = t;
            table.push(&row);
        }
        for j in (0..idx.len()).rev() {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(table)
}

/// Keep only rows whose basic reproduction number `exp(c_beta - c_gamma)`
/// is at least one.
pub fn r0_filter(rows: &Table) -> Table {
    let g = rows.column_index(Param::Gamma.name()).expect("c_gamma column");
    let b = rows.column_index(Param::Beta.name()).expect("c_beta column");
    let mut out = Table::new(rows.names.clone());
    for k in 0..rows.rows() {
        let r = rows.row(k);
        if (r[b] - r[g]).exp() >= 1.0 {
            out.push(r);
        }
    }
    out
}

fn param_key(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

fn rhs_kind(method: Method) -> RhsKind {
    match method {
        Method::I => RhsKind::Plain,
        Method::II => RhsKind::Extended,
    }
}

fn target_table_names(spec: &GridSpec) -> Vec<String> {
    spec.target_names()
}

/// Numerically solved targets for every feature row. One integration is run
/// per distinct parameter vector and sampled at every grid time.
pub fn generate_targets(rows: &Table, spec: &GridSpec, integrator: &Integrator) -> Result<Table> {
    let n_in = spec.n_inputs();
    if rows.cols() != n_in {
        return Err(Error::ShapeMismatch { expected: n_in, got: rows.cols() });
    }
    let mut times: Vec<f64> = rows.column(0).collect();
    times.sort_by(|a, b| a.total_cmp(b));
    times.dedup_by(|a, b| a.to_bits() == b.to_bits());

    let mut order: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for k in 0..rows.rows() {
        let c = &rows.row(k)[1..];
        order.entry(param_key(c)).or_insert_with(|| {
            distinct.push(c.to_vec());
            distinct.len() - 1
        });
    }

    let kind = rhs_kind(spec.method);
    let trajectories: Vec<Trajectory> = distinct
        .par_iter()
        .map(|c| solve(spec, kind, c, &times, integrator))
        .collect::<Result<_>>()?;

    let mut out = Table::new(target_table_names(spec));
    for k in 0..rows.rows() {
        let r = rows.row(k);
        let tr = &trajectories[order[&param_key(&r[1..])]];
        let ti = times
            .binary_search_by(|t| t.total_cmp(&r[0]))
            .expect("row time is on the time grid");
        out.push(tr.row(ti));
    }
    Ok(out)
}

/// Reference path for [`generate_targets`]: one integration per row.
pub fn generate_targets_per_row(rows: &Table, spec: &GridSpec, integrator: &Integrator) -> Result<Table> {
    let kind = rhs_kind(spec.method);
    let mut out = Table::new(target_table_names(spec));
    for k in 0..rows.rows() {
        let r = rows.row(k);
        let tr = solve(spec, kind, &r[1..], &[r[0]], integrator)?;
        out.push(tr.row(0));
    }
    Ok(out)
}

fn solve(spec: &GridSpec, kind: RhsKind, c: &[f64], times: &[f64], integrator: &Integrator) -> Result<Trajectory> {
    let pv = spec.param_vector(c)?;
    integrator
        .integrate(kind, &pv, spec.population, times)
        .map_err(|e| Error::IntegrationAt { params: c.to_vec(), source: Box::new(e) })
}

/// Per-column z-score standardization. Standard deviations use the
/// population convention (divide by `n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub columns: Vec<ScalerColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerColumn {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

impl TargetScaler {
    pub fn fit(raw: &Table) -> Result<Self> {
        let n = raw.rows() as f64;
        let columns = (0..raw.cols())
            .map(|j| {
                let mean = raw.column(j).sum::<f64>() / n;
                let var = raw.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let sd = var.sqrt();
                // a spread at round-off level of the mean is a constant column
                if !(sd > 1e-12 * mean.abs().max(f64::MIN_POSITIVE)) || !sd.is_finite() {
                    return Err(Error::DegenerateColumn(raw.names[j].clone()));
                }
                Ok(ScalerColumn { name: raw.names[j].clone(), mean, sd })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { columns })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    #[inline]
    pub fn apply(&self, col: usize, x: f64) -> f64 {
        let c = &self.columns[col];
        (x - c.mean) / c.sd
    }

    #[inline]
    pub fn invert(&self, col: usize, f: f64) -> f64 {
        let c = &self.columns[col];
        c.sd * f + c.mean
    }

    #[inline]
    pub fn sd(&self, col: usize) -> f64 {
        self.columns[col].sd
    }

    pub fn apply_table(&self, raw: &Table) -> Table {
        let cols = raw.cols();
        let data = raw.data.iter().enumerate().map(|(k, v)| self.apply(k % cols, *v)).collect();
        Table { names: raw.names.clone(), data }
    }

    pub fn invert_table(&self, scaled: &Table) -> Table {
        let cols = scaled.cols();
        let data = scaled.data.iter().enumerate().map(|(k, v)| self.invert(k % cols, *v)).collect();
        Table { names: scaled.names.clone(), data }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle; 20% test, then 20% of the remainder validation, the
/// rest training.
pub fn split(n_rows: usize, seed: u64) -> Result<Split> {
    if n_rows < 10 {
        return Err(Error::InvalidConfig(format!("need at least 10 rows to split, got {n_rows}")));
    }
    let mut idx: Vec<usize> = (0..n_rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_test = (0.2 * n_rows as f64).round() as usize;
    let n_val = (0.2 * (n_rows - n_test) as f64).round() as usize;
    let test = idx[..n_test].to_vec();
    let validation = idx[n_test..n_test + n_val].to_vec();
    let train = idx[n_test + n_val..].to_vec();
    Ok(Split { seed, train, validation, test })
}

/// Features, scaled targets, the fitted scaler and the split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub spec: GridSpec,
    pub features: Table,
    pub targets: Table,
    pub scaler: TargetScaler,
    pub split: Split,
    /// Rows removed by the R0 filter (0 when the filter is off).
    pub filtered_out: usize,
}

impl TrainingSet {
    /// Full pipeline: grid, optional R0 filter, targets, scaler (fitted on
    /// all rows), split.
    pub fn build(spec: &GridSpec, seed: u64, integrator: &Integrator) -> Result<Self> {
        let grid = build_grid(spec)?;
        let features = if spec.r0_filter { r0_filter(&grid) } else { grid.clone() };
        let filtered_out = grid.rows() - features.rows();
        let raw = generate_targets(&features, spec, integrator)?;
        let scaler = TargetScaler::fit(&raw)?;
        let targets = scaler.apply_table(&raw);
        let split = split(features.rows(), seed)?;
        Ok(Self { spec: spec.clone(), features, targets, scaler, split, filtered_out })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.features.write_csv(&dir.join("features.csv"))?;
        self.targets.write_csv(&dir.join("targets.csv"))?;
        write_json(&dir.join("scaler.json"), &self.scaler.columns)?;
        write_json(&dir.join("split.json"), &self.split)?;
        write_json(
            &dir.join("grid.json"),
            &GridFile { spec: self.spec.clone(), filtered_out: self.filtered_out },
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let grid: GridFile = read_json(&dir.join("grid.json"))?;
        let features = Table::read_csv(&dir.join("features.csv"))?;
        let targets = Table::read_csv(&dir.join("targets.csv"))?;
        let columns: Vec<ScalerColumn> = read_json(&dir.join("scaler.json"))?;
        let split: Split = read_json(&dir.join("split.json"))?;
        if features.rows() != targets.rows() {
            return Err(Error::ShapeMismatch { expected: features.rows(), got: targets.rows() });
        }
        Ok(Self {
            spec: grid.spec,
            features,
            targets,
            scaler: TargetScaler { columns },
            split,
            filtered_out: grid.filtered_out,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    spec: GridSpec,
    filtered_out: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_spec() -> GridSpec {
        GridSpec {
            time: Axis::new(1.0, 2.0, 2),
            params: vec![
                ParamAxis { param: Param::I0, axis: Axis::new(1.0, 2.0, 2) },
                ParamAxis { param: Param::Gamma, axis: Axis::new(-2.0, -1.5, 2) },
                ParamAxis { param: Param::Beta, axis: Axis::new(-0.3, -0.2, 2) },
            ],
            population: 1000.0,
            method: Method::II,
            r0_filter: false,
        }
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(build_grid(&GridSpec::simulated(Method::I)).unwrap().rows(), 204_800);
        let flu = build_grid(&GridSpec::influenza(Method::I, 763.0)).unwrap();
        assert_eq!(flu.rows(), 28_644);
        let toy = build_grid(&toy_spec()).unwrap();
        assert_eq!(toy.rows(), 16);
        let mut seen: Vec<Vec<u64>> = (0..16).map(|k| param_key(toy.row(k))).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 16);
    }

    #[test]
    fn grid_covers_bounds_exactly() {
        let spec = GridSpec::simulated(Method::II);
        let g = build_grid(&spec).unwrap();
        for (j, ax) in spec.input_axes().iter().enumerate() {
            let min = g.column(j).fold(f64::INFINITY, f64::min);
            let max = g.column(j).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(min, ax.min);
            assert_eq!(max, ax.max);
        }
    }

    #[test]
    fn degenerate_axis_rejected() {
        let mut s = toy_spec();
        s.params[1].axis.count = 1;
        assert!(matches!(build_grid(&s), Err(Error::EmptyDimension(_))));
        let mut s = toy_spec();
        s.time = Axis::new(2.0, 2.0, 3);
        assert!(matches!(build_grid(&s), Err(Error::EmptyDimension(_))));
    }

    #[test]
    fn r0_filter_examples() {
        let mut t = Table::new(vec!["t".into(), "c_I0".into(), "c_gamma".into(), "c_beta".into()]);
        t.push(&[1.0, 0.0, 0.0, -1.0]);
        t.push(&[1.0, 0.0, 0.0, 0.4]);
        let kept = r0_filter(&t);
        assert_eq!(kept.rows(), 1);
        assert_eq!(kept.row(0)[3], 0.4);
    }

    #[test]
    fn r0_filter_on_influenza_grid_keeps_everything() {
        // c_gamma <= 0 and c_beta >= 0.4 on this grid, so R0 > 1 throughout
        let g = build_grid(&GridSpec::influenza(Method::I, 763.0)).unwrap();
        assert_eq!(r0_filter(&g).rows(), g.rows());
    }

    #[test]
    fn target_widths_and_definition() {
        let c = ParamVector::simulated_truth();
        let mut rows = Table::new(vec!["t".into(), "c_I0".into(), "c_gamma".into(), "c_beta".into()]);
        rows.push(&[1.0, c.c_i0, c.c_gamma, c.c_beta]);
        rows.push(&[3.0, c.c_i0, c.c_gamma, c.c_beta]);
        let mut spec = GridSpec::simulated(Method::I);
        let it = Integrator::default();
        let t1 = generate_targets(&rows, &spec, &it).unwrap();
        assert_eq!(t1.cols(), 3);
        let direct = it.integrate(RhsKind::Plain, &c, 10_000.0, &[1.0]).unwrap();
        assert_eq!(t1.row(0), direct.row(0));
        spec.method = Method::II;
        assert_eq!(generate_targets(&rows, &spec, &it).unwrap().cols(), 12);
    }

    #[test]
    fn cached_targets_match_per_row_bitwise() {
        let mut spec = toy_spec();
        spec.time = Axis::new(1.0, 9.0, 7); // off-lattice spacing
        let rows = build_grid(&spec).unwrap();
        let it = Integrator::default();
        let cached = generate_targets(&rows, &spec, &it).unwrap();
        let direct = generate_targets_per_row(&rows, &spec, &it).unwrap();
        assert_eq!(cached.data.len(), direct.data.len());
        assert!(cached.data.iter().zip(&direct.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn scaler_examples() {
        let mut t = Table::new(vec!["x".into()]);
        for v in [1.0, 2.0, 3.0] {
            t.push(&[v]);
        }
        let s = TargetScaler::fit(&t).unwrap();
        assert_eq!(s.columns[0].mean, 2.0);
        assert!((s.columns[0].sd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);

        let mut c = Table::new(vec!["k".into()]);
        for _ in 0..5 {
            c.push(&[4.2]);
        }
        assert!(matches!(TargetScaler::fit(&c), Err(Error::DegenerateColumn(_))));
    }

    #[test]
    fn scaled_columns_are_standardized() {
        let spec = toy_spec();
        let set = TrainingSet::build(&spec, 3, &Integrator::default());
        // 16 rows is enough to split
        let set = set.unwrap();
        for j in 0..set.targets.cols() {
            let n = set.targets.rows() as f64;
            let mean = set.targets.column(j).sum::<f64>() / n;
            let var = set.targets.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() <= 1e-9, "col {j} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn split_examples() {
        let s = split(100, 7).unwrap();
        assert_eq!((s.test.len(), s.validation.len(), s.train.len()), (20, 16, 64));
        assert_eq!(split(100, 7).unwrap(), s);
        assert_ne!(split(100, 8).unwrap(), s);
        let big = split(204_800, 1).unwrap();
        assert_eq!(big.train.len(), 131_072);
        assert!(split(9, 1).is_err());
    }

    #[test]
    fn training_set_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let set = TrainingSet::build(&toy_spec(), 11, &Integrator::default()).unwrap();
        set.save(dir.path()).unwrap();
        let back = TrainingSet::load(dir.path()).unwrap();
        assert_eq!(back, set);
    }

    proptest! {
        #[test]
        fn scaler_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 3..40), probe in -1e7f64..1e7) {
            let mut t = Table::new(vec!["x".into()]);
            for v in &values { t.push(&[*v]); }
            if let Ok(s) = TargetScaler::fit(&t) {
                let back = s.invert(0, s.apply(0, probe));
                prop_assert!((back - probe).abs() <= 1e-12 * probe.abs().max(s.columns[0].sd).max(s.columns[0].mean.abs()));
            }
        }

        #[test]
        fn split_is_a_partition(n in 10usize..500, seed in any::<u64>()) {
            let s = split(n, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
