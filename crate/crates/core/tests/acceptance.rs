//! Acceptance criteria 1 to 11. Every test writes one
//! `criterion N: PASS|FAIL ...` line straight to stdout (not captured by the
//! harness) and then asserts the criterion at its stated tolerance.
//!
//! Criteria 4 (full profile) and 11 take hours and are `#[ignore]`d; run
//! them with `cargo test --release -p sirnet-core --test acceptance -- --ignored`.

use std::io::Write;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sirnet::collocation::{GridSpec, Method, TrainingSet};
use sirnet::config::WorkbenchConfig;
use sirnet::datasets::{influenza_data, simulate_datasets, SimSpec, INFLUENZA_POPULATION};
use sirnet::laplace::{maximize_g, monte_carlo_mle, GaussianPosterior, LaplaceOptions, ObservationSeries, PriorSpec};
use sirnet::metrics::{accuracy, accuracy_table, ise, mise, normal_pdf, EvalGrid, Quantity};
use sirnet::mh::{rw_mh, Kde, MhConfig, PosteriorSample};
use sirnet::nn::{init_nets, train, LossConfig, LossContext, SurrogateModel};
use sirnet::ode::{Integrator, ParamVector, RhsKind, ALL_PARAMS};

/// Serializes the expensive work so reported runtimes are not inflated by
/// concurrently running tests.
static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" }).unwrap();
    out.flush().unwrap();
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn ratio_ok(value: f64, target: f64) -> bool {
    (0.5 * target..=2.0 * target).contains(&value)
}

fn is_spd(cov: &[f64], k: usize) -> bool {
    let sym = (0..k).all(|j| (0..k).all(|l| cov[j * k + l] == cov[l * k + j]));
    let m = nalgebra::DMatrix::from_row_slice(k, k, cov);
    sym && m.cholesky().is_some()
}

fn times(n: u32) -> Vec<f64> {
    (1..=n).map(f64::from).collect()
}

#[test]
fn criterion_01_sensitivities_match_finite_differences() {
    let started = Instant::now();
    let p = 10_000.0;
    let t = times(50);
    let integ = Integrator::default();
    let c = ParamVector::simulated_truth();
    let ext = integ.integrate(RhsKind::Extended, &c, p, &t).unwrap();
    let h = 1e-4;
    let mut worst = 0.0f64;
    for (j, &param) in ALL_PARAMS.iter().enumerate() {
        let mut cp = c;
        cp.set(param, c.get(param) + h);
        let mut cm = c;
        cm.set(param, c.get(param) - h);
        let plus = integ.integrate(RhsKind::Plain, &cp, p, &t).unwrap();
        let minus = integ.integrate(RhsKind::Plain, &cm, p, &t).unwrap();
        for n in 0..t.len() {
            for d in 0..3 {
                let fd = (plus.row(n)[d] - minus.row(n)[d]) / (2.0 * h);
                let sens = ext.row(n)[3 + 3 * j + d];
                worst = worst.max((sens - fd).abs() / fd.abs().max(1e-6 * p));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst <= 1e-3 && secs < 10.0;
    report(1, pass, &format!("max relative error {worst:.2e} (<= 1e-3), {secs:.2}s (< 10s)"));
    assert!(pass);
}

#[test]
fn criterion_02_conservation() {
    let integ = Integrator::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut runs = 0;
    for spec in [GridSpec::simulated(Method::II), GridSpec::influenza(Method::II, INFLUENZA_POPULATION)] {
        let p = spec.population;
        let t: Vec<f64> = spec.time.points();
        for _ in 0..100 {
            let free: Vec<f64> = spec.params.iter().map(|a| rng.random_range(a.axis.min..=a.axis.max)).collect();
            let pv = spec.param_vector(&free).unwrap();
            for kind in [RhsKind::Plain, RhsKind::Extended] {
                let tr = integ.integrate(kind, &pv, p, &t).unwrap();
                for n in 0..tr.len() {
                    let r = tr.row(n);
                    worst = worst.max((r[0] + r[1] + r[2] - p).abs() / p);
                }
                runs += 1;
            }
        }
    }
    let pass = worst <= 1e-6;
    report(2, pass, &format!("max |S+I+R-P|/P = {worst:.2e} over {runs} trajectories (<= 1e-6)"));
    assert!(pass);
}

/// Central differences of the full loss against the analytic weight
/// gradient for a 3-hidden-unit network per target.
fn nested_gradient_error(method: Method) -> f64 {
    let mut spec = GridSpec::simulated(method);
    for a in spec.params.iter_mut() {
        a.axis.count = 2;
    }
    spec.time.count = 4;
    let set = TrainingSet::build(&spec, 1, &Integrator::default()).unwrap();
    let mut cfg = LossConfig::simulated(method, 3);
    cfg.hidden = vec![3];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let nets = init_nets(&spec, &cfg, &mut rng).unwrap();
    let ctx = LossContext::new(method, &spec.free_params(), spec.population, &set.scaler, cfg.penalty()).unwrap();
    let idx: Vec<usize> = (0..set.features.rows()).collect();
    let (loss, grads) = ctx.loss_and_grad(&nets, &set.features, &set.targets, &idx).unwrap();
    // components smaller than the central difference's own round-off
    // (about eps * loss / h) are compared at that absolute level
    let h = 1e-5;
    let noise = 1e-9 * loss.abs().max(1.0);
    let mut worst = 0.0f64;
    for k in 0..nets.len() {
        for p in 0..nets[k].n_params() {
            let mut plus = nets.clone();
            plus[k].params_mut()[p] += h;
            let mut minus = nets.clone();
            minus[k].params_mut()[p] -= h;
            let fd = (ctx.loss(&plus, &set.features, &set.targets, &idx).unwrap()
                - ctx.loss(&minus, &set.features, &set.targets, &idx).unwrap())
                / (2.0 * h);
            let g = grads[k][p];
            worst = worst.max((fd - g).abs() / (fd.abs().max(g.abs()) + noise / 1e-4));
        }
    }
    worst
}

#[test]
fn criterion_03_nested_gradient() {
    let started = Instant::now();
    let e1 = nested_gradient_error(Method::I);
    let e2 = nested_gradient_error(Method::II);
    let secs = started.elapsed().as_secs_f64();
    let pass = e1 <= 1e-4 && e2 <= 1e-4 && secs < 5.0;
    report(3, pass, &format!("J1 rel err {e1:.2e}, J2 rel err {e2:.2e} (<= 1e-4), {secs:.2}s (< 5s)"));
    assert!(pass);
}

fn accuracy_at_truth(model: &SurrogateModel) -> Vec<(String, f64)> {
    let c = ParamVector::simulated_truth().free_values();
    let qs: Vec<Quantity> = Quantity::all(3).into_iter().filter(|q| !matches!(q, Quantity::Second { .. })).collect();
    accuracy_table(model, &c, &times(50), &qs)
        .unwrap()
        .into_iter()
        .map(|r| (r.quantity, r.accuracy.p))
        .collect()
}

fn format_p(rows: &[(String, f64)]) -> String {
    rows.iter().map(|(q, p)| format!("{q}={p:.3}")).collect::<Vec<_>>().join(" ")
}

#[test]
fn criterion_04_surrogate_accuracy_ci_profile() {
    let _g = heavy();
    let spec = GridSpec::simulated(Method::II).halved();
    let mut cfg = LossConfig::for_grid(&spec);
    cfg.epochs = 500;
    let started = Instant::now();
    let set = TrainingSet::build(&spec, 1, &Integrator::default()).unwrap();
    let model = train(&set, &cfg).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let rows = accuracy_at_truth(&model);
    let states_ok = rows[..3].iter().all(|(_, p)| *p >= 95.0);
    let pass = states_ok && secs <= 600.0;
    report(
        4,
        pass,
        &format!("CI profile (halved grid, 500 epochs, {secs:.0}s <= 600s): states need p >= 95: {}", format_p(&rows)),
    );
    assert!(pass);
}

#[test]
#[ignore = "full Method II training takes about two hours"]
fn criterion_04_surrogate_accuracy_full() {
    let _g = heavy();
    let spec = GridSpec::simulated(Method::II);
    let cfg = LossConfig::for_grid(&spec);
    let started = Instant::now();
    let set = TrainingSet::build(&spec, 1, &Integrator::default()).unwrap();
    let model = train(&set, &cfg).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let rows = accuracy_at_truth(&model);
    let pass = rows.iter().all(|(_, p)| *p >= 99.0);
    report(4, pass, &format!("full profile ({secs:.0}s): states and first derivatives need p >= 99: {}", format_p(&rows)));
    assert!(pass);
}

struct FluModels {
    method_i: SurrogateModel,
    method_ii: SurrogateModel,
    fixed_ii: SurrogateModel,
}

fn train_flu(method: Method, fixed_i0: bool) -> SurrogateModel {
    let cfg = WorkbenchConfig::influenza(method, fixed_i0);
    let set = TrainingSet::build(&cfg.grid, cfg.seed, &Integrator::default()).unwrap();
    let model = train(&set, &cfg.loss).unwrap();
    let last = model.history.last().unwrap();
    eprintln!(
        "trained influenza method {method} (fixed I0: {fixed_i0}) in {:.0}s, final losses {:.4e} / {:.4e}",
        model.train_seconds, last.train_loss, last.val_loss
    );
    model
}

fn flu_models() -> &'static FluModels {
    static MODELS: OnceLock<FluModels> = OnceLock::new();
    MODELS.get_or_init(|| {
        let _g = heavy();
        FluModels {
            method_i: train_flu(Method::I, false),
            method_ii: train_flu(Method::II, false),
            fixed_ii: train_flu(Method::II, true),
        }
    })
}

/// Laplace fit of the influenza data, started from the approximate MLE as
/// the workbench does.
fn flu_laplace(model: &SurrogateModel, fixed_i0: bool) -> Fit {
    let cfg = WorkbenchConfig::influenza(model.method(), fixed_i0);
    let data = influenza_data();
    let start = monte_carlo_mle(&data, cfg.population(), &cfg.mle.ranges, fixed_i0, cfg.mle.n_samples, cfg.seed)
        .map_err(|e| e.to_string())?
        .best;
    maximize_g(&data, &cfg.prior, model, &start, &cfg.laplace).map_err(|e| e.to_string())
}

type Fit = Result<GaussianPosterior, String>;

struct FluPosteriors {
    method_i: Fit,
    method_ii: Fit,
    fixed_ii: Fit,
}

fn flu_posteriors() -> &'static FluPosteriors {
    static POSTS: OnceLock<FluPosteriors> = OnceLock::new();
    POSTS.get_or_init(|| {
        let m = flu_models();
        FluPosteriors {
            method_i: flu_laplace(&m.method_i, false),
            method_ii: flu_laplace(&m.method_ii, false),
            fixed_ii: flu_laplace(&m.fixed_ii, true),
        }
    })
}

fn check_flu(post: &Fit, means: [f64; 3], vars: [f64; 3]) -> (bool, String) {
    let post = match post {
        Ok(p) => p,
        Err(e) => return (false, format!("error: {e}")),
    };
    let v = post.variances();
    let ok = (0..3).all(|j| within(post.map[j], means[j], 0.05) && ratio_ok(v[j], vars[j]));
    let detail = (0..3)
        .map(|j| format!("{} {:.4} var {:.4e}", post.names[j], post.map[j], v[j]))
        .collect::<Vec<_>>()
        .join(", ");
    (ok, format!("{detail} (converged: {})", post.converged))
}

#[test]
fn criterion_05_influenza_laplace() {
    let posts = flu_posteriors();
    let vars = [0.0619, 5.5937e-4, 8.0506e-4];
    let (ok2, d2) = check_flu(&posts.method_ii, [-0.853, -0.729, 0.621], vars);
    let (ok1, d1) = check_flu(&posts.method_i, [-0.837, -0.730, 0.619], vars);
    let pass = ok1 && ok2;
    report(5, pass, &format!("method II: {d2}; method I: {d1}"));
    assert!(pass);
}

fn flu_mh(fixed_i0: bool) -> &'static PosteriorSample {
    static FULL: OnceLock<PosteriorSample> = OnceLock::new();
    static FIXED: OnceLock<PosteriorSample> = OnceLock::new();
    let cell = if fixed_i0 { &FIXED } else { &FULL };
    cell.get_or_init(|| {
        let _g = heavy();
        let cfg = WorkbenchConfig::influenza(Method::II, fixed_i0);
        rw_mh(&influenza_data(), &cfg.prior, cfg.population(), fixed_i0, &cfg.mh).unwrap()
    })
}

#[test]
fn criterion_06_influenza_mh() {
    let sample = flu_mh(false);
    let map = sample.sample_map();
    let v = sample.variances();
    let target = [-0.944, -0.730, 0.630];
    let vars = [0.0633, 5.5121e-4, 7.9948e-4];
    let pass = (0..3).all(|j| within(map[j], target[j], 0.05) && ratio_ok(v[j], vars[j]));
    let kde_modes: Vec<f64> = (0..3).map(|j| Kde::new(&sample.marginal(j), None).unwrap().mode()).collect();
    report(
        6,
        pass,
        &format!(
            "sample MAP {:.4?}, variances [{}], KDE modes {:.4?}, acceptance {:.3}, {:.0}s",
            map,
            v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", "),
            kde_modes,
            sample.acceptance_rate,
            sample.seconds
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_fixed_i0() {
    let sample = flu_mh(true);
    let mh_mean = sample.means()[sample.names.iter().position(|n| n == "c_beta").unwrap()];
    let (pass, laplace) = match &flu_posteriors().fixed_ii {
        Ok(post) => {
            let beta = post.names.iter().position(|n| n == "c_beta").unwrap();
            let ok = within(post.map[beta], 0.527, 0.05) && ratio_ok(post.variance(beta), 8.6412e-5);
            let detail = format!(
                "Laplace c_beta {:.4} var {:.4e} (converged: {})",
                post.map[beta],
                post.variance(beta),
                post.converged
            );
            (ok, detail)
        }
        Err(e) => (false, format!("Laplace error: {e}")),
    };
    let pass = pass && within(mh_mean, 0.5238, 0.05);
    report(7, pass, &format!("{laplace}; MH c_beta mean {mh_mean:.4}"));
    assert!(pass);
}

#[test]
fn criterion_08_start_point_robustness() {
    let model = &flu_models().method_ii;
    let cfg = WorkbenchConfig::influenza(Method::II, false);
    let data = influenza_data();
    let starts = [vec![-0.574, -0.704, 0.593], vec![2.9f64.ln(), (1.0 / 2.9f64).ln(), 0.41]];
    let fits: Result<Vec<(Vec<f64>, bool)>, _> = starts
        .iter()
        .map(|s| maximize_g(&data, &cfg.prior, model, s, &cfg.laplace).map(|p| (p.map, p.converged)))
        .collect();
    let fits = match fits {
        Ok(f) => f,
        Err(e) => {
            report(8, false, &format!("error: {e}"));
            panic!("start-point fit failed: {e}");
        }
    };
    let (a, b) = (&fits[0].0, &fits[1].0);
    let gap = (0..3).map(|j| (a[j] - b[j]).abs()).fold(0.0, f64::max);
    let pass = gap <= 1e-3;
    report(
        8,
        pass,
        &format!(
            "MAPs {a:.5?} and {b:.5?}, max gap {gap:.2e} (<= 1e-3); converged: {} / {}",
            fits[0].1, fits[1].1
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_covariance_spd_and_prior_only() {
    let posts = flu_posteriors();
    let mut spd = true;
    let mut failed = 0;
    for fit in [&posts.method_i, &posts.method_ii, &posts.fixed_ii] {
        match fit {
            Ok(p) => spd &= is_spd(&p.covariance, p.dim()),
            Err(_) => failed += 1,
        }
    }
    let prior = PriorSpec { mean: vec![0.3, -1.0, 0.5], variance: vec![2.0, 0.5, 9.0] };
    let empty = ObservationSeries { times: vec![], counts: vec![], model: influenza_data().model };
    let model = &flu_models().method_ii;
    let post = maximize_g(&empty, &prior, model, &[0.0, -0.5, 0.6], &LaplaceOptions::default()).unwrap();
    let mut expected = vec![0.0; 9];
    for j in 0..3 {
        expected[j * 4] = prior.variance[j];
    }
    let prior_exact = post.map == prior.mean && post.covariance == expected;
    spd &= is_spd(&post.covariance, 3);
    let pass = spd && prior_exact;
    report(9, pass, &format!(
            "all reported covariances SPD: {spd} ({failed} influenza fits returned errors); prior-only returns the prior exactly: {prior_exact}"
        ));
    assert!(pass);
}

#[test]
fn criterion_10_metric_oracles() {
    let closed = (1.0 - (-0.25f64).exp()) / std::f64::consts::PI.sqrt();
    let grid = EvalGrid::new(-8.0, 9.0, 4096).unwrap();
    let v = ise(normal_pdf(0.0, 1.0), normal_pdf(1.0, 1.0), &grid);
    let reference: Vec<f64> = (0..50).map(|t| (t as f64 * 0.3).sin() * 100.0 + 5.0).collect();
    let m = reference.iter().sum::<f64>() / reference.len() as f64;
    let perfect = accuracy(&reference, &reference).unwrap().p;
    let mean_pred = accuracy(&reference, &vec![m; reference.len()]).unwrap().p;
    let pass = (v - closed).abs() <= 1e-3 && perfect == 100.0 && mean_pred.abs() < 1e-12;
    report(10, pass, &format!("ISE {v:.6} vs closed form {closed:.6}; p(perfect) = {perfect}; p(mean) = {mean_pred:.1e}"));
    assert!(pass);
}

#[test]
#[ignore = "full simulated study: hours of training and MH sampling"]
fn criterion_11_simulated_study() {
    let _g = heavy();
    let cfg = WorkbenchConfig::simulated(Method::II);
    let set = TrainingSet::build(&cfg.grid, cfg.seed, &Integrator::default()).unwrap();
    let model = train(&set, &cfg.loss).unwrap();
    let sim = SimSpec::standard(2024);
    let data = simulate_datasets(&sim).unwrap();
    let start = sim.c_star.free_values();

    let laplace_started = Instant::now();
    let posts: Vec<GaussianPosterior> = data
        .iter()
        .map(|d| maximize_g(d, &cfg.prior, &model, &start, &cfg.laplace).unwrap())
        .collect();
    let laplace_secs = laplace_started.elapsed().as_secs_f64();

    let mh_started = Instant::now();
    let samples: Vec<PosteriorSample> = data
        .iter()
        .enumerate()
        .map(|(r, d)| {
            let mh = MhConfig { seed: cfg.mh.seed + r as u64, ..cfg.mh.clone() };
            rw_mh(d, &cfg.prior, sim.population, false, &mh).unwrap()
        })
        .collect();
    let mh_secs = mh_started.elapsed().as_secs_f64();

    let table = [0.0393, 2.59, 0.307];
    let mut values = [0.0; 3];
    for (j, v) in values.iter_mut().enumerate() {
        let per: Vec<f64> = posts
            .iter()
            .zip(&samples)
            .map(|(p, s)| {
                let draws = s.marginal(j);
                let kde = Kde::new(&draws, None).unwrap();
                let m = draws.iter().sum::<f64>() / draws.len() as f64;
                let sd = s.variances()[j].sqrt();
                let grid = EvalGrid::around(m, sd, 512).unwrap();
                ise(normal_pdf(p.map[j], p.variance(j)), |x| kde.density(x), &grid)
            })
            .collect();
        *v = mise(&per);
    }
    let magnitude_ok = values.iter().zip(table).all(|(v, t)| (0.1 * t..=10.0 * t).contains(v));
    let pass = magnitude_ok && laplace_secs < mh_secs;
    report(
        11,
        pass,
        &format!("MISE {values:.4?} vs {table:?} (within 10x); Laplace sweep {laplace_secs:.0}s, MH sweep {mh_secs:.0}s"),
    );
    assert!(pass);
}
