//! SIR dynamics on log-scale parameters, the first-order sensitivity
//! extension, algebraic constraints, and a fixed-step RK4 integrator.
//!
//! Extended states are stored flat: `(S, I, R)` followed by one
//! `(dS/dc_j, dI/dc_j, dR/dc_j)` block per free parameter `c_j`, in the
//! order returned by [`ParamVector::free_params`].

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_sig;

/// A log-scale SIR parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    I0,
    Gamma,
    Beta,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::I0 => "c_I0",
            Param::Gamma => "c_gamma",
            Param::Beta => "c_beta",
        }
    }

    /// Short suffix used in column names (`dS_dcgamma`).
    pub fn suffix(self) -> &'static str {
        match self {
            Param::I0 => "cI0",
            Param::Gamma => "cgamma",
            Param::Beta => "cbeta",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const ALL_PARAMS: [Param; 3] = [Param::I0, Param::Gamma, Param::Beta];
pub const FIXED_I0_PARAMS: [Param; 2] = [Param::Gamma, Param::Beta];

/// The parameter triple `c = (ln I(0), ln gamma, ln beta)`.
///
/// With `fixed_i0` set, `c_i0` is pinned to 0 (one initial infective) and
/// excluded from inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub c_i0: f64,
    pub c_gamma: f64,
    pub c_beta: f64,
    #[serde(default)]
    pub fixed_i0: bool,
}

impl ParamVector {
    pub fn new(c_i0: f64, c_gamma: f64, c_beta: f64) -> Self {
        Self { c_i0, c_gamma, c_beta, fixed_i0: false }
    }

    pub fn with_fixed_i0(c_gamma: f64, c_beta: f64) -> Self {
        Self { c_i0: 0.0, c_gamma, c_beta, fixed_i0: true }
    }

    /// Data-generating values of the simulated study: `(ln 7, ln 1/7, -0.25)`.
    pub fn simulated_truth() -> Self {
        Self::new(7f64.ln(), (1.0f64 / 7.0).ln(), -0.25)
    }

    pub fn free_params(&self) -> &'static [Param] {
        if self.fixed_i0 {
            &FIXED_I0_PARAMS
        } else {
            &ALL_PARAMS
        }
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::I0 => self.c_i0,
            Param::Gamma => self.c_gamma,
            Param::Beta => self.c_beta,
        }
    }

    pub fn set(&mut self, p: Param, value: f64) {
        match p {
            Param::I0 => self.c_i0 = value,
            Param::Gamma => self.c_gamma = value,
            Param::Beta => self.c_beta = value,
        }
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.free_params().iter().map(|&p| self.get(p)).collect()
    }

    pub fn from_free(values: &[f64], fixed_i0: bool) -> Result<Self> {
        let mut c = if fixed_i0 {
            Self::with_fixed_i0(0.0, 0.0)
        } else {
            Self::new(0.0, 0.0, 0.0)
        };
        let params = c.free_params();
        if values.len() != params.len() {
            return Err(Error::ShapeMismatch { expected: params.len(), got: values.len() });
        }
        for (&p, &v) in params.iter().zip(values) {
            c.set(p, v);
        }
        Ok(c)
    }

    pub fn is_finite(&self) -> bool {
        self.c_i0.is_finite() && self.c_gamma.is_finite() && self.c_beta.is_finite()
    }

    /// Basic reproduction number `exp(c_beta - c_gamma)`.
    pub fn r0(&self) -> f64 {
        (self.c_beta - self.c_gamma).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl SirState {
    pub fn new(s: f64, i: f64, r: f64) -> Self {
        Self { s, i, r }
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.s, self.i, self.r]
    }
}

/// `(S, I, R)` plus the sensitivity blocks for each free parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub values: Vec<f64>,
}

impl ExtendedState {
    pub fn sir(&self) -> SirState {
        SirState::new(self.values[0], self.values[1], self.values[2])
    }

    pub fn n_blocks(&self) -> usize {
        self.values.len() / 3 - 1
    }

    /// `(dS/dc_j, dI/dc_j, dR/dc_j)` for the `block`-th free parameter.
    pub fn sensitivity(&self, block: usize) -> [f64; 3] {
        let o = 3 + 3 * block;
        [self.values[o], self.values[o + 1], self.values[o + 2]]
    }
}

/// Dimension of the state vector with `n_blocks` sensitivity blocks.
pub fn state_dim(n_blocks: usize) -> usize {
    3 * (n_blocks + 1)
}

/// Column labels for a state vector with the given sensitivity blocks.
pub fn state_names(blocks: &[Param]) -> Vec<String> {
    let mut names: Vec<String> = ["S", "I", "R"].iter().map(|s| s.to_string()).collect();
    for p in blocks {
        for x in ["S", "I", "R"] {
            names.push(format!("d{}_d{}", x, p.suffix()));
        }
    }
    names
}

pub fn initial_state(c: &ParamVector, population: f64) -> Result<SirState> {
    let i0 = c.c_i0.exp();
    if i0 >= population {
        return Err(Error::PopulationTooSmall { initial_infectious: i0, population });
    }
    Ok(SirState::new(population - i0, i0, 0.0))
}

pub fn initial_extended_state(c: &ParamVector, population: f64) -> Result<ExtendedState> {
    let s0 = initial_state(c, population)?;
    let blocks = c.free_params();
    let mut values = vec![0.0; state_dim(blocks.len())];
    values[..3].copy_from_slice(&s0.as_array());
    for (k, p) in blocks.iter().enumerate() {
        if *p == Param::I0 {
            let i0 = c.c_i0.exp();
            values[3 + 3 * k] = -i0;
            values[3 + 3 * k + 1] = i0;
        }
    }
    Ok(ExtendedState { values })
}

pub fn sir_rhs(s: &SirState, c: &ParamVector, population: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    rhs_into(&s.as_array(), &[], c, population, &mut out);
    out
}

pub fn sir_extended_rhs(s: &ExtendedState, c: &ParamVector, population: f64) -> Vec<f64> {
    let blocks = &c.free_params()[..s.n_blocks()];
    let mut out = vec![0.0; s.values.len()];
    rhs_into(&s.values, blocks, c, population, &mut out);
    out
}

/// Right-hand side of the (possibly extended) system.
///
/// `x` holds `(S, I, R)` followed by one sensitivity block per entry of
/// `blocks`. With `blocks` empty this is the plain SIR system. Each
/// sensitivity block is formed with the chain rule, so the `I`-block for
/// `c_gamma` picks up `dI/dc_gamma` (not `dI/dc_I0`).
pub fn rhs_into(x: &[f64], blocks: &[Param], c: &ParamVector, population: f64, out: &mut [f64]) {
    let beta_p = c.c_beta.exp() / population;
    let gamma = c.c_gamma.exp();
    let (s, i) = (x[0], x[1]);
    let infection = beta_p * s * i;
    let removal = gamma * i;
    out[0] = -infection;
    out[1] = infection - removal;
    out[2] = removal;
    for (k, p) in blocks.iter().enumerate() {
        let o = 3 + 3 * k;
        let (ds, di) = (x[o], x[o + 1]);
        let mut q = beta_p * (i * ds + s * di);
        let mut extra_removal = 0.0;
        match p {
            Param::Beta => q += infection,
            Param::Gamma => extra_removal = removal,
            Param::I0 => {}
        }
        let r_rate = gamma * di + extra_removal;
        out[o] = -q;
        out[o + 1] = q - r_rate;
        out[o + 2] = r_rate;
    }
}

/// Vector-Jacobian product of [`rhs_into`] with respect to the state:
/// writes `d(adj . f)/dx` into `grad`.
pub fn rhs_vjp(
    x: &[f64],
    blocks: &[Param],
    c: &ParamVector,
    population: f64,
    adj: &[f64],
    grad: &mut [f64],
) {
    let beta_p = c.c_beta.exp() / population;
    let gamma = c.c_gamma.exp();
    let (s, i) = (x[0], x[1]);
    grad.iter_mut().for_each(|g| *g = 0.0);

    // base block: f0 = -b s i, f1 = b s i - g i, f2 = g i
    let a_inf = adj[1] - adj[0];
    grad[0] += a_inf * beta_p * i;
    grad[1] += a_inf * beta_p * s + (adj[2] - adj[1]) * gamma;

    for (k, p) in blocks.iter().enumerate() {
        let o = 3 + 3 * k;
        let (ds, di) = (x[o], x[o + 1]);
        // q enters as (-1, +1, 0); r_rate as (0, -1, +1)
        let a_q = adj[o + 1] - adj[o];
        let a_r = adj[o + 2] - adj[o + 1];
        // q = b (i ds + s di) [+ b s i]
        grad[1] += a_q * beta_p * ds;
        grad[0] += a_q * beta_p * di;
        grad[o] += a_q * beta_p * i;
        grad[o + 1] += a_q * beta_p * s;
        // r_rate = g di [+ g i]
        grad[o + 1] += a_r * gamma;
        match p {
            Param::Beta => {
                grad[0] += a_q * beta_p * i;
                grad[1] += a_q * beta_p * s;
            }
            Param::Gamma => grad[1] += a_r * gamma,
            Param::I0 => {}
        }
    }
}

/// `(S+I+R-P, sum of each sensitivity block)`; one entry per block after the
/// first.
pub fn constraint_residuals(x: &[f64], population: f64) -> Vec<f64> {
    x.chunks_exact(3)
        .enumerate()
        .map(|(k, b)| {
            let sum = b[0] + b[1] + b[2];
            if k == 0 {
                sum - population
            } else {
                sum
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhsKind {
    Plain,
    Extended,
}

/// Time-indexed states sampled from one integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub blocks: Vec<Param>,
    /// Row-major, `times.len() * dim()`.
    pub values: Vec<f64>,
    pub params: ParamVector,
    pub population: f64,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        state_dim(self.blocks.len())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.values[k * d..(k + 1) * d]
    }

    /// The series of component `d` across all output times.
    pub fn column(&self, d: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.row(k)[d]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(state_names(&self.blocks));
        writeln!(w, "{}", header.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let mut fields = vec![fmt_sig(*t, 12)];
            fields.extend(self.row(k).iter().map(|v| fmt_sig(*v, 12)));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Fixed-step classic RK4 anchored at `t = 0`.
///
/// The integrator advances on the lattice `k * step` and reaches an output
/// time off the lattice with one short step from the preceding lattice
/// point, so the value reported at a given time never depends on which
/// other times were requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub step: f64,
}

impl Default for Integrator {
    fn default() -> Self {
        Self { step: 0.01 }
    }
}

impl Integrator {
    pub fn new(step: f64) -> Self {
        Self { step }
    }

    pub fn integrate(
        &self,
        kind: RhsKind,
        c: &ParamVector,
        population: f64,
        times: &[f64],
    ) -> Result<Trajectory> {
        match kind {
            RhsKind::Plain => {
                let s0 = initial_state(c, population)?;
                self.run(&s0.as_array(), &[], c, population, times)
            }
            RhsKind::Extended => {
                let x0 = initial_extended_state(c, population)?;
                self.run(&x0.values, c.free_params(), c, population, times)
            }
        }
    }

    /// Integrate from an arbitrary initial vector at `t = 0`.
    pub fn run(
        &self,
        x0: &[f64],
        blocks: &[Param],
        c: &ParamVector,
        population: f64,
        times: &[f64],
    ) -> Result<Trajectory> {
        check_times(times)?;
        let dim = state_dim(blocks.len());
        if x0.len() != dim {
            return Err(Error::ShapeMismatch { expected: dim, got: x0.len() });
        }
        let values = match dim {
            3 => self.sample::<3>(x0, blocks, c, population, times)?,
            9 => self.sample::<9>(x0, blocks, c, population, times)?,
            12 => self.sample::<12>(x0, blocks, c, population, times)?,
            _ => unreachable!("state dimension is 3, 9 or 12"),
        };
        Ok(Trajectory {
            times: times.to_vec(),
            blocks: blocks.to_vec(),
            values,
            params: *c,
            population,
        })
    }

    fn sample<const N: usize>(
        &self,
        x0: &[f64],
        blocks: &[Param],
        c: &ParamVector,
        population: f64,
        times: &[f64],
    ) -> Result<Vec<f64>> {
        let f = |x: &[f64; N], out: &mut [f64; N]| rhs_into(x, blocks, c, population, out);
        let h = self.step;
        let mut x = [0.0; N];
        x.copy_from_slice(x0);
        let mut k_done: u64 = 0;
        let mut out = Vec::with_capacity(times.len() * N);
        for &t in times {
            let ratio = t / h;
            let nearest = ratio.round();
            let (k_target, remainder) = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
                (nearest as u64, 0.0)
            } else {
                let k = ratio.floor() as u64;
                (k, t - k as f64 * h)
            };
            while k_done < k_target {
                x = rk4_step(&f, &x, h);
                k_done += 1;
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteState { time: k_done as f64 * h });
                }
            }
            let y = if remainder > 0.0 { rk4_step(&f, &x, remainder) } else { x };
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { time: t });
            }
            out.extend_from_slice(&y);
        }
        Ok(out)
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite())
        || times.first().is_some_and(|&t| t < 0.0)
        || times.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::NonMonotoneTimes);
    }
    Ok(())
}

#[inline]
fn rk4_step<const N: usize, F>(f: &F, x: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(&[f64; N], &mut [f64; N]),
{
    let mut k1 = [0.0; N];
    let mut k2 = [0.0; N];
    let mut k3 = [0.0; N];
    let mut k4 = [0.0; N];
    let mut tmp = [0.0; N];
    f(x, &mut k1);
    for d in 0..N {
        tmp[d] = x[d] + 0.5 * h * k1[d];
    }
    f(&tmp, &mut k2);
    for d in 0..N {
        tmp[d] = x[d] + 0.5 * h * k2[d];
    }
    f(&tmp, &mut k3);
    for d in 0..N {
        tmp[d] = x[d] + h * k3[d];
    }
    f(&tmp, &mut k4);
    let mut next = [0.0; N];
    for d in 0..N {
        next[d] = x[d] + h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
    }
    next
}

/// Convenience wrapper with the default step.
pub fn integrate(
    kind: RhsKind,
    c: &ParamVector,
    population: f64,
    times: &[f64],
) -> Result<Trajectory> {
    Integrator::default().integrate(kind, c, population, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const P: f64 = 10_000.0;

    fn days(n: usize) -> Vec<f64> {
        (1..=n).map(|d| d as f64).collect()
    }

    #[test]
    fn initial_state_examples() {
        let s = initial_state(&ParamVector::new(7f64.ln(), 0.0, 0.0), P).unwrap();
        assert_relative_eq!(s.s, 9993.0, epsilon = 1e-9);
        assert_relative_eq!(s.i, 7.0, epsilon = 1e-12);
        assert_eq!(s.r, 0.0);

        let s = initial_state(&ParamVector::new(0.0, 0.0, 0.0), 100.0).unwrap();
        assert_eq!(s.as_array(), [99.0, 1.0, 0.0]);

        let err = initial_state(&ParamVector::new(200f64.ln(), 0.0, 0.0), 100.0);
        assert!(matches!(err, Err(Error::PopulationTooSmall { .. })));
    }

    #[test]
    fn initial_sensitivities() {
        let x = initial_extended_state(&ParamVector::new(7f64.ln(), 0.1, 0.2), P).unwrap();
        let sens = &x.values[3..];
        let expected = [-7.0, 7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for (a, b) in sens.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }

        let x = initial_extended_state(&ParamVector::new(0.0, 0.0, 0.0), 100.0).unwrap();
        assert_eq!(&x.values[3..6], &[-1.0, 1.0, 0.0]);

        let x = initial_extended_state(&ParamVector::with_fixed_i0(-0.7, 0.6), 763.0).unwrap();
        assert_eq!(x.values.len(), 9);
        assert!(x.values[3..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rhs_at_truth() {
        let c = ParamVector::simulated_truth();
        let f = sir_rhs(&SirState::new(9993.0, 7.0, 0.0), &c, P);
        assert!((f[0] + 5.4478).abs() < 5e-5, "{f:?}");
        assert!((f[1] - 4.4478).abs() < 5e-5);
        assert!((f[2] - 1.0).abs() < 5e-5);
        assert_eq!(sir_rhs(&SirState::new(P, 0.0, 0.0), &c, P), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn extended_rhs_at_truth() {
        let c = ParamVector::simulated_truth();
        let x = initial_extended_state(&c, P).unwrap();
        let f = sir_extended_rhs(&x, &c, P);
        // dR/dc_gamma rate = e^{c_gamma} (I + dI/dc_gamma) = 1
        assert_relative_eq!(f[8], 1.0, epsilon = 1e-12);
        // dS/dc_beta rate = -(e^{c_beta}/P) S I
        assert!((f[9] + 5.4478).abs() < 5e-5);

        let zero = ExtendedState { values: vec![P, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0] };
        assert!(sir_extended_rhs(&zero, &c, P).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constraint_examples() {
        let zeros = [P, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(constraint_residuals(&zeros, P), vec![0.0; 4]);
        let mut one = zeros;
        one[1] = 1.0;
        assert_eq!(constraint_residuals(&one, P), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let c = ParamVector::new(1.9, -1.8, -0.27);
        let x: Vec<f64> = vec![8000.0, 900.0, 1100.0, -3.0, 5.0, -2.0, 40.0, -60.0, 20.0, -500.0, 300.0, 200.0];
        let adj: Vec<f64> = (0..12).map(|k| 0.3 * k as f64 - 1.1).collect();
        let mut grad = vec![0.0; 12];
        rhs_vjp(&x, &ALL_PARAMS, &c, P, &adj, &mut grad);
        let phi = |x: &[f64]| {
            let mut out = vec![0.0; 12];
            rhs_into(x, &ALL_PARAMS, &c, P, &mut out);
            out.iter().zip(&adj).map(|(a, b)| a * b).sum::<f64>()
        };
        for d in 0..12 {
            let eps = 1e-3;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[d] += eps;
            xm[d] -= eps;
            let fd = (phi(&xp) - phi(&xm)) / (2.0 * eps);
            assert!((fd - grad[d]).abs() <= 1e-7 * (1.0 + fd.abs()), "d={d} fd={fd} an={}", grad[d]);
        }
    }

    #[test]
    fn s_is_monotone_and_mass_conserved() {
        let c = ParamVector::simulated_truth();
        let tr = integrate(RhsKind::Plain, &c, P, &days(50)).unwrap();
        let s = tr.column(0);
        assert!(s.windows(2).all(|w| w[1] < w[0]));
        for k in 0..tr.len() {
            let row = tr.row(k);
            assert!((row[0] + row[1] + row[2] - P).abs() <= 1e-6 * P);
        }
    }

    #[test]
    fn output_at_zero_is_initial_condition() {
        let c = ParamVector::simulated_truth();
        let tr = integrate(RhsKind::Extended, &c, P, &[0.0, 1.0]).unwrap();
        assert_eq!(tr.row(0), initial_extended_state(&c, P).unwrap().values.as_slice());
    }

    #[test]
    fn bad_times_rejected() {
        let c = ParamVector::simulated_truth();
        assert!(matches!(integrate(RhsKind::Plain, &c, P, &[2.0, 1.0]), Err(Error::NonMonotoneTimes)));
        assert!(matches!(integrate(RhsKind::Plain, &c, P, &[1.0, 1.0]), Err(Error::NonMonotoneTimes)));
        assert!(matches!(integrate(RhsKind::Plain, &c, P, &[-1.0]), Err(Error::NonMonotoneTimes)));
    }

    #[test]
    fn blow_up_is_reported() {
        let c = ParamVector::new(0.0, 0.0, 700.0);
        let err = integrate(RhsKind::Plain, &c, P, &[5.0]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { .. }), "{err}");
    }

    #[test]
    fn zero_infection_is_fixed_point() {
        let c = ParamVector::simulated_truth();
        let tr = Integrator::default().run(&[P, 0.0, 0.0], &[], &c, P, &days(20)).unwrap();
        for k in 0..tr.len() {
            assert_eq!(tr.row(k), &[P, 0.0, 0.0]);
        }
    }

    #[test]
    fn off_lattice_times_do_not_depend_on_neighbours() {
        let c = ParamVector::simulated_truth();
        let a = integrate(RhsKind::Plain, &c, P, &[1.0, 2.0416666, 7.3]).unwrap();
        let b = integrate(RhsKind::Plain, &c, P, &[7.3]).unwrap();
        assert_eq!(a.row(2), b.row(0));
    }

    #[test]
    fn csv_header_and_rows() {
        let c = ParamVector::simulated_truth();
        let tr = integrate(RhsKind::Extended, &c, P, &[1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,S,I,R,dS_dcI0,dI_dcI0,dR_dcI0,dS_dcgamma,dI_dcgamma,dR_dcgamma,dS_dcbeta,dI_dcbeta,dR_dcbeta"
        );
        assert_eq!(lines.count(), 2);
    }
}
