//! The workbench subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sirnet::collocation::{Method, TrainingSet};
use sirnet::config::{DataSource, WorkbenchConfig};
use sirnet::datasets::{influenza_data, load_dataset, replicate_path, save_dataset, simulate_datasets, DatasetMeta};
use sirnet::io::{fmt_sig, read_csv_table, read_json, write_json};
use sirnet::laplace::{maximize_g, monte_carlo_mle, GaussianPosterior, ObservationSeries, PosteriorReport};
use sirnet::metrics::{accuracy_table, ise, mise, normal_pdf, write_accuracy_csv, write_density_csv, EvalGrid, Quantity};
use sirnet::mh::{mean, rw_mh, variance, Kde, MhSummary};
use sirnet::nn::{train_with_progress, SurrogateModel};
use sirnet::ode::Integrator;
use sirnet::{Error, Result};

use crate::layout::{check_manifest, method_number, write_manifest, Layout, Manifest};

type Density<'a> = Box<dyn Fn(f64) -> f64 + 'a>;

/// Everything a command needs: the effective config, its hash and where
/// outputs go.
pub struct Ctx {
    pub cfg: WorkbenchConfig,
    pub hash: String,
    pub method: Method,
    pub layout: Layout,
}

impl Ctx {
    fn manifest(&self, command: &str, method: Option<Method>, files: Vec<String>) -> Manifest {
        Manifest { command: command.into(), config_hash: self.hash.clone(), method, files }
    }
}

/// One observation series with a file-safe identifier.
pub struct Dataset {
    pub id: String,
    pub series: ObservationSeries,
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into())
}

fn check_dataset_meta(ctx: &Ctx, path: &Path, meta: &DatasetMeta) -> Result<()> {
    if let Some(h) = &meta.config_hash {
        if *h != ctx.hash {
            return Err(Error::ConfigMismatch(format!(
                "{} was produced under config {h}, current config is {}",
                path.display(),
                ctx.hash
            )));
        }
    }
    if meta.population != ctx.cfg.population() {
        return Err(Error::ConfigMismatch(format!(
            "{} has population {}, the grid uses {}",
            path.display(),
            meta.population,
            ctx.cfg.population()
        )));
    }
    Ok(())
}

/// The observation series a command operates on: an explicit file, or the
/// configured data source.
pub fn datasets(ctx: &Ctx, data: Option<&Path>) -> Result<Vec<Dataset>> {
    if let Some(path) = data {
        let (series, meta) = load_dataset(path)?;
        check_dataset_meta(ctx, path, &meta)?;
        return Ok(vec![Dataset { id: file_stem(path), series }]);
    }
    match &ctx.cfg.data {
        DataSource::Influenza => Ok(vec![Dataset { id: "influenza".into(), series: influenza_data() }]),
        DataSource::File { path } => {
            let (series, meta) = load_dataset(path)?;
            check_dataset_meta(ctx, path, &meta)?;
            Ok(vec![Dataset { id: file_stem(path), series }])
        }
        DataSource::Simulated { sim } => {
            let dir = ctx.layout.data();
            check_manifest(&dir, &ctx.hash)?;
            (0..sim.replicates)
                .map(|r| {
                    let path = replicate_path(&dir, r);
                    let (series, meta) = load_dataset(&path)?;
                    check_dataset_meta(ctx, &path, &meta)?;
                    Ok(Dataset { id: file_stem(&path), series })
                })
                .collect()
        }
    }
}

fn relative(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).display().to_string()
}

pub fn simulate(ctx: &Ctx) -> Result<()> {
    let started = Instant::now();
    let dir = ctx.layout.data();
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    match &ctx.cfg.data {
        DataSource::Simulated { sim } => {
            let data = simulate_datasets(sim)?;
            for (r, series) in data.iter().enumerate() {
                let path = replicate_path(&dir, r);
                let meta = DatasetMeta {
                    model: series.model,
                    population: sim.population,
                    seed: Some(sim.seed.wrapping_add(r as u64)),
                    c_star: Some(sim.c_star.free_values()),
                    config_hash: Some(ctx.hash.clone()),
                };
                save_dataset(&path, series, &meta)?;
                files.push(relative(&dir, &path));
            }
            println!("simulate: {} replicates written to {}", data.len(), dir.display());
        }
        DataSource::Influenza => {
            let path = dir.join("influenza.csv");
            let series = influenza_data();
            let meta = DatasetMeta {
                model: series.model,
                population: ctx.cfg.population(),
                seed: None,
                c_star: None,
                config_hash: Some(ctx.hash.clone()),
            };
            save_dataset(&path, &series, &meta)?;
            files.push(relative(&dir, &path));
            println!("simulate: influenza counts written to {}", path.display());
        }
        DataSource::File { path } => {
            return Err(Error::InvalidConfig(format!(
                "data source is the file {}; there is nothing to simulate",
                path.display()
            )))
        }
    }
    write_manifest(&dir, &ctx.manifest("simulate", None, files), started.elapsed().as_secs_f64())
}

const GRID_FILES: [&str; 5] = ["features.csv", "targets.csv", "scaler.json", "split.json", "grid.json"];

fn build_training_set(ctx: &Ctx) -> Result<TrainingSet> {
    TrainingSet::build(&ctx.cfg.grid, ctx.cfg.seed, &Integrator::default())
}

pub fn grid(ctx: &Ctx) -> Result<()> {
    let started = Instant::now();
    let set = build_training_set(ctx)?;
    let dir = ctx.layout.grid(ctx.method);
    set.save(&dir)?;
    println!(
        "grid: method {}, {} rows ({} removed by the R0 filter), {} targets; train/validation/test = {}/{}/{}",
        ctx.method,
        set.features.rows(),
        set.filtered_out,
        set.targets.cols(),
        set.split.train.len(),
        set.split.validation.len(),
        set.split.test.len()
    );
    let files = GRID_FILES.iter().map(|s| s.to_string()).collect();
    write_manifest(&dir, &ctx.manifest("grid", Some(ctx.method), files), started.elapsed().as_secs_f64())
}

pub fn train(ctx: &Ctx) -> Result<()> {
    let started = Instant::now();
    let grid_dir = ctx.layout.grid(ctx.method);
    let set = match check_manifest(&grid_dir, &ctx.hash) {
        Ok(_) => TrainingSet::load(&grid_dir)?,
        Err(Error::MissingArtifact(_)) => {
            log::info!("no training set at {}; building it", grid_dir.display());
            build_training_set(ctx)?
        }
        Err(e) => return Err(e),
    };
    let every = (ctx.cfg.loss.epochs / 20).max(1);
    let model = train_with_progress(&set, &ctx.cfg.loss, |e| {
        if e.epoch % every == 0 || e.epoch == 1 {
            log::info!("epoch {}: train {:.6e} validation {:.6e}", e.epoch, e.train_loss, e.val_loss);
        }
    })?;
    let dir = ctx.layout.model(ctx.method);
    model.save(&dir)?;
    if let Some(last) = model.history.last() {
        println!(
            "train: method {}, {} epochs in {:.1}s, final train loss {:.4e}, validation loss {:.4e}",
            ctx.method, last.epoch, model.train_seconds, last.train_loss, last.val_loss
        );
    }
    let files = vec!["model.json".into(), "loss_history.csv".into()];
    write_manifest(&dir, &ctx.manifest("train", Some(ctx.method), files), started.elapsed().as_secs_f64())
}

/// Per-dataset output of `infer`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferOutput {
    pub config_hash: String,
    pub dataset: String,
    pub method: Method,
    pub start: Vec<f64>,
    pub start_source: String,
    pub posterior: PosteriorReport,
}

fn load_model(ctx: &Ctx, dir: &Path) -> Result<SurrogateModel> {
    check_manifest(dir, &ctx.hash)?;
    let model = SurrogateModel::load(dir)?;
    if model.method() != ctx.method {
        return Err(Error::ConfigMismatch(format!(
            "method {} requested but {} holds a method {} model",
            ctx.method,
            dir.display(),
            model.method()
        )));
    }
    if model.grid != ctx.cfg.grid {
        return Err(Error::ConfigMismatch(format!("{} was trained on a different grid", dir.display())));
    }
    Ok(model)
}

fn infer_one(ctx: &Ctx, model: &SurrogateModel, index: usize, d: &Dataset) -> Result<InferOutput> {
    let cfg = &ctx.cfg;
    let (start, start_source) = match &cfg.start {
        Some(s) => (s.clone(), "config"),
        None => {
            let mle = monte_carlo_mle(
                &d.series,
                cfg.population(),
                &cfg.mle.ranges,
                cfg.grid.fixed_i0(),
                cfg.mle.n_samples,
                cfg.seed.wrapping_add(index as u64),
            )?;
            (mle.best, "monte-carlo-mle")
        }
    };
    let post: GaussianPosterior = maximize_g(&d.series, &cfg.prior, model, &start, &cfg.laplace)?;
    Ok(InferOutput {
        config_hash: ctx.hash.clone(),
        dataset: d.id.clone(),
        method: ctx.method,
        start,
        start_source: start_source.into(),
        posterior: post.report(),
    })
}

pub fn infer(ctx: &Ctx, model_dir: Option<&Path>, data: Option<&Path>) -> Result<()> {
    let started = Instant::now();
    let model_dir = model_dir.map(Path::to_path_buf).unwrap_or_else(|| ctx.layout.model(ctx.method));
    let model = load_model(ctx, &model_dir)?;
    let sets = datasets(ctx, data)?;
    let dir = ctx.layout.posterior(ctx.method);
    fs::create_dir_all(&dir)?;
    let results: Vec<(String, Result<InferOutput>)> = sets
        .par_iter()
        .enumerate()
        .map(|(i, d)| (d.id.clone(), infer_one(ctx, &model, i, d)))
        .collect();

    let mut files = Vec::new();
    let mut summary = format!("# config_hash={}\ndataset,param,mean,variance,converged\n", ctx.hash);
    let mut failures = format!("# config_hash={}\ndataset,error\n", ctx.hash);
    let mut n_failed = 0;
    for (id, res) in &results {
        match res {
            Ok(out) => {
                let name = format!("posterior_{id}.json");
                write_json(&dir.join(&name), out)?;
                files.push(name);
                for m in &out.posterior.marginals {
                    summary.push_str(&format!(
                        "{id},{},{},{},{}\n",
                        m.name,
                        fmt_sig(m.mean, 12),
                        fmt_sig(m.variance, 12),
                        out.posterior.converged
                    ));
                }
            }
            Err(e) => {
                n_failed += 1;
                log::warn!("dataset {id}: {e}");
                failures.push_str(&format!("{id},\"{}\"\n", e.to_string().replace('"', "'")));
            }
        }
    }
    fs::write(dir.join("summary.csv"), summary)?;
    fs::write(dir.join("failures.csv"), failures)?;
    files.push("summary.csv".into());
    files.push("failures.csv".into());
    let seconds = started.elapsed().as_secs_f64();
    write_manifest(&dir, &ctx.manifest("infer", Some(ctx.method), files), seconds)?;

    if let [(_, Ok(out))] = results.as_slice() {
        for m in &out.posterior.marginals {
            println!("infer: {} mean {:.6} variance {:.6e}", m.name, m.mean, m.variance);
        }
    }
    println!(
        "infer: method {}, {} of {} datasets in {seconds:.2}s",
        ctx.method,
        results.len() - n_failed,
        results.len()
    );
    if n_failed == results.len() {
        if let Some((_, Err(e))) = results.into_iter().next() {
            return Err(e);
        }
    }
    Ok(())
}

/// Per-dataset summary written by `mh`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MhOutput {
    pub config_hash: String,
    pub dataset: String,
    pub summary: MhSummary,
}

pub fn mh(ctx: &Ctx, data: Option<&Path>, replicates: Option<usize>) -> Result<()> {
    let started = Instant::now();
    let mut sets = datasets(ctx, data)?;
    if let Some(k) = replicates {
        sets.truncate(k);
    }
    let dir = ctx.layout.mh();
    fs::create_dir_all(&dir)?;
    let cfg = &ctx.cfg;
    let results: Vec<Result<(String, MhOutput)>> = sets
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut mh_cfg = cfg.mh.clone();
            mh_cfg.seed = mh_cfg.seed.wrapping_add(i as u64);
            let sample = rw_mh(&d.series, &cfg.prior, cfg.population(), cfg.grid.fixed_i0(), &mh_cfg)?;
            let chain = format!("chain_{}.csv", d.id);
            sample.write_csv(&dir.join(&chain), Some(&ctx.hash))?;
            let out = MhOutput { config_hash: ctx.hash.clone(), dataset: d.id.clone(), summary: sample.summary()? };
            write_json(&dir.join(format!("summary_{}.json", d.id)), &out)?;
            Ok((chain, out))
        })
        .collect();
    let mut files = Vec::new();
    for r in results {
        let (chain, out) = r?;
        if sets.len() == 1 {
            let s = &out.summary;
            for (j, name) in s.names.iter().enumerate() {
                println!(
                    "mh: {name} sample MAP {:.6} KDE mode {:.6} mean {:.6} variance {:.6e}",
                    s.sample_map[j], s.kde_mode[j], s.mean[j], s.variance[j]
                );
            }
            println!("mh: acceptance rate {:.4}, {} draws", s.acceptance_rate, s.n_draws);
        }
        files.push(chain);
        files.push(format!("summary_{}.json", out.dataset));
    }
    let seconds = started.elapsed().as_secs_f64();
    println!("mh: {} datasets in {seconds:.1}s", sets.len());
    write_manifest(&dir, &ctx.manifest("mh", None, files), seconds)
}

fn reference_point(ctx: &Ctx, posterior_dir: &Path) -> Result<Vec<f64>> {
    if let DataSource::Simulated { sim } = &ctx.cfg.data {
        return Ok(sim.c_star.free_values());
    }
    let first = datasets(ctx, None)?.into_iter().next().map(|d| d.id);
    if let Some(id) = first {
        let path = posterior_dir.join(format!("posterior_{id}.json"));
        if path.exists() {
            let out: InferOutput = read_json(&path)?;
            return Ok(out.posterior.map);
        }
    }
    Ok(ctx.cfg.mh.initial.clone())
}

fn eval_accuracy(ctx: &Ctx, m: Method, times: &[f64], files: &mut Vec<String>) -> Result<()> {
    let dir = ctx.layout.model(m);
    check_manifest(&dir, &ctx.hash)?;
    let model = SurrogateModel::load(&dir)?;
    let post_dir = ctx.layout.posterior(m);
    if post_dir.exists() {
        check_manifest(&post_dir, &ctx.hash)?;
    }
    let c = reference_point(ctx, &post_dir)?;
    let k = model.n_params();
    let rows = match accuracy_table(&model, &c, times, &Quantity::all(k)) {
        Ok(rows) => rows,
        Err(Error::OutOfBox) => {
            log::warn!("reference point too close to the grid boundary for second derivatives; skipping them");
            let firsts: Vec<Quantity> =
                Quantity::all(k).into_iter().filter(|q| !matches!(q, Quantity::Second { .. })).collect();
            accuracy_table(&model, &c, times, &firsts)?
        }
        Err(e) => return Err(e),
    };
    let name = format!("accuracy-m{}.csv", method_number(m));
    write_accuracy_csv(&ctx.layout.eval().join(&name), &rows, &ctx.hash)?;
    files.push(name);
    println!("eval: method {m} accuracy at c = {c:?}");
    for r in &rows {
        println!("  {:24} p = {}", r.quantity, fmt_sig(r.accuracy.p, 8));
    }
    Ok(())
}

struct Chain {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn read_chain(path: &Path) -> Result<Chain> {
    let (header, rows) = read_csv_table(path)?;
    let k = header.len().saturating_sub(3);
    if header.len() < 4 || header[0] != "iter" {
        return Err(Error::Parse(format!("{}: not a chain file", path.display())));
    }
    let columns = (1..=k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    Ok(Chain { names: header[1..=k].to_vec(), columns })
}

pub fn eval(ctx: &Ctx) -> Result<()> {
    let started = Instant::now();
    let dir = ctx.layout.eval();
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let times = datasets(ctx, None)?
        .into_iter()
        .next()
        .map(|d| d.series.times)
        .ok_or_else(|| Error::MissingArtifact("no datasets".into()))?;

    let methods = [Method::I, Method::II];
    let mut any_model = false;
    for m in methods {
        if ctx.layout.model(m).exists() {
            eval_accuracy(ctx, m, &times, &mut files)?;
            any_model = true;
        }
    }

    let mh_dir = ctx.layout.mh();
    let posterior_dirs: Vec<(Method, PathBuf)> = methods
        .iter()
        .map(|&m| (m, ctx.layout.posterior(m)))
        .filter(|(_, d)| d.exists())
        .collect();
    for (_, d) in &posterior_dirs {
        check_manifest(d, &ctx.hash)?;
    }
    let mut ise_rows = format!("# config_hash={}\ndataset,param,method,ise\n", ctx.hash);
    let mut per_method: Vec<Vec<Vec<f64>>> = vec![Vec::new(); methods.len()];
    let mut names: Vec<String> = Vec::new();
    if mh_dir.exists() {
        let manifest = check_manifest(&mh_dir, &ctx.hash)?;
        for chain_file in manifest.files.iter().filter(|f| f.starts_with("chain_")) {
            let id = chain_file.trim_start_matches("chain_").trim_end_matches(".csv");
            let chain = read_chain(&mh_dir.join(chain_file))?;
            names.clone_from(&chain.names);
            let posts: Vec<(Method, GaussianPosterior)> = posterior_dirs
                .iter()
                .filter_map(|(m, d)| {
                    let p = d.join(format!("posterior_{id}.json"));
                    p.exists().then(|| read_json::<InferOutput>(&p).map(|o| (*m, gaussian(&o.posterior))))
                })
                .collect::<Result<_>>()?;
            for (j, draws) in chain.columns.iter().enumerate() {
                let kde = Kde::new(draws, None)?;
                let grid = EvalGrid::around(mean(draws), variance(draws).sqrt(), 512)?;
                let h_mh = |x: f64| kde.density(x);
                let mut cols: Vec<(String, Density)> = Vec::new();
                for (m, post) in &posts {
                    let f = normal_pdf(post.map[j], post.variance(j));
                    let v = ise(&f, h_mh, &grid);
                    ise_rows.push_str(&format!("{id},{},{},{}\n", chain.names[j], m, fmt_sig(v, 12)));
                    let slot = &mut per_method[method_number(*m) as usize - 1];
                    if slot.len() <= j {
                        slot.resize(j + 1, Vec::new());
                    }
                    slot[j].push(v);
                    cols.push((format!("h_method{}", method_number(*m)), Box::new(f)));
                }
                cols.push(("h_mh".into(), Box::new(h_mh)));
                let refs: Vec<(&str, &dyn Fn(f64) -> f64)> = cols.iter().map(|(n, f)| (n.as_str(), f.as_ref())).collect();
                let name = format!("density_{id}_{}.csv", chain.names[j]);
                write_density_csv(&dir.join(&name), &grid, &refs, &ctx.hash)?;
                files.push(name);
            }
        }
        fs::write(dir.join("ise.csv"), ise_rows)?;
        files.push("ise.csv".into());
        let mut mise_rows = format!("# config_hash={}\nparam,method,mise,datasets\n", ctx.hash);
        for (mi, m) in methods.iter().enumerate() {
            for (j, vals) in per_method[mi].iter().enumerate() {
                if vals.is_empty() {
                    continue;
                }
                let v = mise(vals);
                println!("eval: method {m} {} MISE {} over {} datasets", names[j], fmt_sig(v, 6), vals.len());
                mise_rows.push_str(&format!("{},{m},{},{}\n", names[j], fmt_sig(v, 12), vals.len()));
            }
        }
        fs::write(dir.join("mise.csv"), mise_rows)?;
        files.push("mise.csv".into());
    } else if !any_model {
        return Err(Error::MissingArtifact("nothing to evaluate: no models and no MH chains".into()));
    }
    write_manifest(&dir, &ctx.manifest("eval", None, files), started.elapsed().as_secs_f64())
}

fn gaussian(report: &PosteriorReport) -> GaussianPosterior {
    GaussianPosterior {
        names: report.marginals.iter().map(|m| m.name.clone()).collect(),
        map: report.map.clone(),
        covariance: report.covariance.concat(),
        converged: report.converged,
        iterations: report.iterations,
        grad_norm: report.grad_norm,
        log_posterior: report.log_posterior,
        seconds: 0.0,
        trace: Vec::new(),
    }
}

/// `--seed` replaces every seed in the configuration.
pub fn apply_seed(cfg: &mut WorkbenchConfig, seed: u64) {
    cfg.seed = seed;
    cfg.loss.seed = seed;
    cfg.mh.seed = seed;
    if let DataSource::Simulated { sim } = &mut cfg.data {
        sim.seed = seed;
    }
}

/// Switches the grid to `method`, resetting the penalty weights to that
/// method's defaults when it differs from the configured one.
pub fn apply_method(cfg: &mut WorkbenchConfig, method: Method) {
    if cfg.grid.method == method {
        return;
    }
    cfg.grid.method = method;
    let defaults = sirnet::nn::LossConfig::for_grid(&cfg.grid);
    cfg.loss.lambda_residual = defaults.lambda_residual;
    cfg.loss.lambda_constraint = defaults.lambda_constraint;
}
