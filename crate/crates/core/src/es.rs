//! Bounded extremum seeking: each parameter is dithered at its own
//! frequency with the cost entering only through the dither phase,
//!
//! `dv_i/dt = sqrt(α ω_i) cos(ω_i t + k C)`,
//!
//! integrated with explicit Euler. On average the parameters follow
//! `dv/dt ≈ -(kα/2) ∇C`, so the cost falls at `(kα/2)|∇C|²`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::math;
use crate::params::LatentVector;
use crate::rng;

/// Dither ratios `r_i = 1 + 0.75 (i - 1) / max(n - 1, 1)`, spread over `[1, 1.75]`.
pub fn frequency_ratios(n: usize) -> Vec<f64> {
    let denom = n.saturating_sub(1).max(1) as f64;
    (0..n).map(|i| 1.0 + 0.75 * i as f64 / denom).collect()
}

/// Dither frequencies `ω_i = r_i ω`.
pub fn make_frequencies(n: usize, omega_base: f64) -> Vec<f64> {
    frequency_ratios(n).into_iter().map(|r| r * omega_base).collect()
}

/// True when no ratio of two of the frequencies is an integer (within
/// `1e-9` relative) and all are distinct.
pub fn frequencies_independent(omegas: &[f64]) -> bool {
    for (i, &a) in omegas.iter().enumerate() {
        for &b in &omegas[i + 1..] {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            let q = hi / lo;
            if (q - libm::round(q)).abs() <= 1e-9 * q {
                return false;
            }
        }
    }
    true
}

/// Hyperparameters of the ES law.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EsConfig {
    /// Dither amplitude `α`.
    pub alpha: f64,
    /// Feedback gain `k`.
    pub k: f64,
    /// Base dither frequency `ω` (rad per unit time).
    pub omega_base: f64,
    /// One ratio per controlled parameter, each in `[1, 1.75]`.
    pub ratios: Vec<f64>,
    /// Euler step.
    pub dt: f64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig::latent_default(8)
    }
}

impl EsConfig {
    /// Config with the standard ratio spread for `n` parameters.
    pub fn new(n: usize, alpha: f64, k: f64, omega_base: f64, dt: f64) -> Result<Self> {
        let cfg = EsConfig { alpha, k, omega_base, ratios: frequency_ratios(n), dt };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults for tuning an `n`-dimensional latent vector against costs
    /// normalised to 1 at the start: one base dither period spans 50 steps
    /// of unit time.
    pub fn latent_default(n: usize) -> Self {
        let omega_base = 2.0 * PI / 50.0;
        EsConfig { alpha: 0.01, k: 3.0, omega_base, ratios: frequency_ratios(n), dt: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.ratios.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.ratios.iter().map(|r| r * self.omega_base).collect()
    }

    pub fn omega_max(&self) -> f64 {
        self.ratios.iter().fold(0.0f64, |m, &r| m.max(r)) * self.omega_base
    }

    /// Largest possible per-step change of any parameter.
    pub fn max_increment(&self) -> f64 {
        self.dt * math::sqrt(self.alpha * self.omega_max())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        if self.ratios.is_empty() {
            return bad("es: at least one dither frequency is required".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("es.alpha must be non-negative and finite, got {}", self.alpha));
        }
        if !self.k.is_finite() {
            return bad(format!("es.k must be finite, got {}", self.k));
        }
        if !(self.omega_base > 0.0 && self.omega_base.is_finite()) {
            return bad(format!("es.omega_base must be positive, got {}", self.omega_base));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("es.dt must be positive, got {}", self.dt));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r >= 1.0 && **r <= 1.75)) {
            return bad(format!("es.ratios must lie in [1, 1.75], got {r}"));
        }
        if !frequencies_independent(&self.ratios) {
            return bad("es.ratios must be distinct with no integer multiples".into());
        }
        if self.omega_max() * self.dt >= PI / 10.0 {
            return bad(format!(
                "es: fastest dither under-resolved, omega_max*dt = {} must be below pi/10",
                self.omega_max() * self.dt
            ));
        }
        Ok(())
    }
}

/// One recorded step: the cost measured at time `t` with parameters `v`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EsRecord {
    pub t: f64,
    pub cost: f64,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsState {
    step: u64,
    t: f64,
    v: LatentVector,
    last_cost: f64,
    history: Vec<EsRecord>,
    record_history: bool,
}

impl EsState {
    pub fn new(v0: LatentVector) -> Self {
        EsState { step: 0, t: 0.0, v: v0, last_cost: f64::NAN, history: Vec::new(), record_history: true }
    }

    /// State that does not keep a history (for long runs where only the
    /// caller's own records matter).
    pub fn without_history(v0: LatentVector) -> Self {
        EsState { record_history: false, ..EsState::new(v0) }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn v(&self) -> &LatentVector {
        &self.v
    }

    pub fn last_cost(&self) -> f64 {
        self.last_cost
    }

    pub fn history(&self) -> &[EsRecord] {
        &self.history
    }

    pub fn into_history(self) -> Vec<EsRecord> {
        self.history
    }
}

/// Advances the state by one Euler step of the ES law for a cost measured
/// at the current time and parameters.
pub fn es_step(state: &mut EsState, cost: f64, cfg: &EsConfig) -> Result<()> {
    if !cost.is_finite() {
        return Err(Error::MeasurementFault { t: state.t, cost });
    }
    if state.v.len() != cfg.dim() {
        return Err(Error::LengthMismatch { expected: cfg.dim(), found: state.v.len() });
    }
    if state.record_history {
        state.history.push(EsRecord { t: state.t, cost, v: state.v.0.clone() });
    }
    let phase = cfg.k * cost;
    for (vi, &r) in state.v.0.iter_mut().zip(&cfg.ratios) {
        let w = r * cfg.omega_base;
        *vi += cfg.dt * math::sqrt(cfg.alpha * w) * math::cos(w * state.t + phase);
    }
    state.last_cost = cost;
    state.step += 1;
    // t = step * dt exactly, without accumulated rounding
    state.t = state.step as f64 * cfg.dt;
    Ok(())
}

/// Scale that maps the first cost of a run to 1; costs that are zero or
/// non-finite leave the scale at 1.
pub fn cost_scale(initial_cost: f64) -> f64 {
    if initial_cost.is_finite() && initial_cost > 0.0 {
        1.0 / initial_cost
    } else {
        1.0
    }
}

/// Record of an ES run. Costs in `records` are raw (unnormalised).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<EsRecord>,
    /// Factor applied to raw costs before they reach the ES law.
    pub cost_scale: f64,
    pub final_v: Vec<f64>,
}

impl Trajectory {
    pub fn costs(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.cost)
    }

    /// Mean raw cost over the last `fraction` of the steps.
    pub fn tail_mean_cost(&self, fraction: f64) -> f64 {
        tail_mean(&self.costs().collect::<Vec<_>>(), fraction)
    }
}

/// Mean of the last `fraction` of `xs` (at least one element).
pub fn tail_mean(xs: &[f64], fraction: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let n = ((xs.len() as f64 * fraction) as usize).clamp(1, xs.len());
    xs[xs.len() - n..].iter().sum::<f64>() / n as f64
}

/// Runs the ES loop against a cost of the parameters alone.
pub fn run_static<F>(mut cost_fn: F, cfg: &EsConfig, v0: &[f64], steps: usize) -> Result<Trajectory>
where
    F: FnMut(&[f64]) -> f64,
{
    run_tracking(|v, _| cost_fn(v), cfg, v0, steps)
}

/// Runs the ES loop against a time-varying cost `C(v, t)`.
pub fn run_tracking<F>(mut cost_fn: F, cfg: &EsConfig, v0: &[f64], steps: usize) -> Result<Trajectory>
where
    F: FnMut(&[f64], f64) -> f64,
{
    cfg.validate()?;
    let mut state = EsState::without_history(LatentVector(v0.to_vec()));
    let mut records = Vec::with_capacity(steps);
    let mut scale = 1.0;
    for i in 0..steps {
        let t = state.t();
        let raw = cost_fn(state.v().as_slice(), t);
        if i == 0 {
            scale = cost_scale(raw);
        }
        records.push(EsRecord { t, cost: raw, v: state.v().0.clone() });
        es_step(&mut state, raw * scale, cfg)?;
    }
    Ok(Trajectory { records, cost_scale: scale, final_v: state.v().0.clone() })
}

/// `|v(t) - v*(t)|` along a trajectory.
pub fn tracking_errors<G>(traj: &Trajectory, mut optimum: G) -> Vec<f64>
where
    G: FnMut(f64) -> Vec<f64>,
{
    traj.records
        .iter()
        .map(|r| {
            let star = optimum(r.t);
            math::sqrt(r.v.iter().zip(&star).map(|(a, b)| (a - b) * (a - b)).sum())
        })
        .collect()
}

/// Inner products `∫₀ᵀ cos(ω_i τ) f(τ) cos(ω_j τ) dτ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityTable {
    pub horizon: f64,
    /// Row-major `n x n` table.
    pub products: Vec<f64>,
    pub n: usize,
    /// `½ ∫₀ᵀ f`, the limit of every diagonal entry.
    pub half_integral: f64,
}

impl OrthogonalityTable {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.products[i * self.n + j]
    }

    pub fn max_cross(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    m = m.max(self.get(i, j).abs());
                }
            }
        }
        m
    }

    /// Largest `|self term - ½∫f|` relative to `½∫f`.
    pub fn max_self_deviation(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.get(i, i) - self.half_integral).abs() / self.half_integral.abs())
            .fold(0.0, f64::max)
    }
}

/// Integrates all dither cross products against `f` with composite Simpson.
/// The horizon must span at least 50 periods of the slowest dither.
pub fn orthogonality_check<F>(omega_base: f64, ratios: &[f64], f: F, horizon: f64) -> Result<OrthogonalityTable>
where
    F: Fn(f64) -> f64,
{
    if ratios.is_empty() || !(omega_base > 0.0) {
        return Err(Error::InvalidConfig("orthogonality check needs frequencies".into()));
    }
    let w_min = ratios.iter().fold(f64::INFINITY, |m, &r| m.min(r)) * omega_base;
    let w_max = ratios.iter().fold(0.0f64, |m, &r| m.max(r)) * omega_base;
    if horizon < 50.0 * 2.0 * PI / w_min * (1.0 - 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "orthogonality horizon {horizon} is shorter than 50 periods of the slowest dither"
        )));
    }
    // 64 nodes per period of the fastest product term
    let mut m = libm::ceil(64.0 * 2.0 * w_max * horizon / (2.0 * PI)) as usize;
    m += m % 2;
    let h = horizon / m as f64;
    let n = ratios.len();
    let omegas: Vec<f64> = ratios.iter().map(|r| r * omega_base).collect();
    let mut products = vec![0.0; n * n];
    let mut f_int = 0.0;
    let mut cosines = vec![0.0; n];
    for s in 0..=m {
        let tau = s as f64 * h;
        let wgt = if s == 0 || s == m {
            1.0
        } else if s % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let fv = f(tau);
        f_int += wgt * fv;
        for (c, w) in cosines.iter_mut().zip(&omegas) {
            *c = math::cos(w * tau);
        }
        for i in 0..n {
            let a = wgt * fv * cosines[i];
            for j in i..n {
                products[i * n + j] += a * cosines[j];
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            products[i * n + j] *= h / 3.0;
            products[j * n + i] = products[i * n + j];
        }
    }
    Ok(OrthogonalityTable { horizon, products, n, half_integral: 0.5 * f_int * h / 3.0 })
}

/// Empirical versus predicted rate of change of the period-averaged cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentSample {
    /// Mid-time of the averaging window pair.
    pub t: f64,
    /// `(⟨C⟩_{next} - ⟨C⟩_{this}) / T`.
    pub empirical: f64,
    /// `-(kα/2) |∇C|²` at the window-averaged parameters (in units of the
    /// normalised cost seen by the law).
    pub predicted: f64,
}

/// Runs ES on `cost` and compares the slope of the cost averaged over
/// consecutive windows of `window` time with the averaged-dynamics
/// prediction built from `grad`.
pub fn averaged_descent<F, G>(cost: F, grad: G, cfg: &EsConfig, v0: &[f64], window: f64, windows: usize) -> Result<Vec<DescentSample>>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let per = libm::round(window / cfg.dt) as usize;
    if per == 0 {
        return Err(Error::InvalidConfig("averaging window shorter than one step".into()));
    }
    let traj = run_static(&cost, cfg, v0, per * (windows + 1))?;
    let scale = traj.cost_scale;
    let mean_cost = |w: usize| traj.records[w * per..(w + 1) * per].iter().map(|r| r.cost * scale).sum::<f64>() / per as f64;
    let mean_v = |w: usize| {
        let mut acc = vec![0.0; v0.len()];
        for r in &traj.records[w * per..(w + 1) * per] {
            for (a, b) in acc.iter_mut().zip(&r.v) {
                *a += b;
            }
        }
        acc.iter_mut().for_each(|a| *a /= per as f64);
        acc
    };
    let span = per as f64 * cfg.dt;
    let mut out = Vec::with_capacity(windows);
    for w in 0..windows {
        let g2_a: f64 = grad(&mean_v(w)).iter().map(|g| g * g).sum();
        let g2_b: f64 = grad(&mean_v(w + 1)).iter().map(|g| g * g).sum();
        out.push(DescentSample {
            t: (w as f64 + 1.0) * span,
            empirical: (mean_cost(w + 1) - mean_cost(w)) / span,
            predicted: -0.5 * cfg.k * cfg.alpha * scale * scale * 0.5 * (g2_a + g2_b),
        });
    }
    Ok(out)
}

/// Percentile bootstrap interval for the mean of `xs`.
pub fn bootstrap_mean_ci(xs: &[f64], level: f64, resamples: usize, seed: u64) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut r = rng::stream(seed, 0xb007);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..xs.len()).map(|_| xs[r.gen_range(0..xs.len())]).sum::<f64>() / xs.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = ((1.0 - level) / 2.0 * resamples as f64) as usize;
    let hi = (((1.0 + level) / 2.0 * resamples as f64) as usize).min(resamples - 1);
    (means[lo], means[hi])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_follow_the_ratio_formula() {
        assert_eq!(make_frequencies(1, 3.0), vec![3.0]);
        assert_eq!(make_frequencies(4, 10.0), vec![10.0, 12.5, 15.0, 17.5]);
        for n in 1..=1000 {
            assert!(frequencies_independent(&make_frequencies(n, 1.0)), "n = {n}");
        }
        assert!(!frequencies_independent(&[1.0, 2.0]));
        assert!(!frequencies_independent(&[1.5, 1.5]));
    }

    #[test]
    fn config_rejects_coarse_steps() {
        assert!(EsConfig::new(4, 0.1, 1.0, 10.0, 0.01).is_ok());
        assert!(EsConfig::new(4, 0.1, 1.0, 10.0, 0.02).is_err());
        assert!(EsConfig::latent_default(8).validate().is_ok());
        let mut c = EsConfig::latent_default(3);
        c.ratios[1] = 2.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_phase_step_matches_formula() {
        let cfg = EsConfig::new(3, 0.2, 0.0, 5.0, 0.01).unwrap();
        let mut s = EsState::new(LatentVector::zeros(3));
        es_step(&mut s, 123.0, &cfg).unwrap();
        for (i, w) in cfg.frequencies().iter().enumerate() {
            assert!((s.v().0[i] - 0.01 * libm::sqrt(0.2 * w)).abs() < 1e-15);
        }
        assert_eq!(s.t(), 0.01);
        assert_eq!(s.history().len(), 1);
    }

    #[test]
    fn constant_cost_follows_closed_form_integral() {
        let cfg = EsConfig::new(3, 0.3, 1.7, 4.0, 0.001).unwrap();
        let c = 0.4;
        let mut s = EsState::without_history(LatentVector::zeros(3));
        for _ in 0..5000 {
            es_step(&mut s, c, &cfg).unwrap();
        }
        let t = s.t();
        for (i, w) in cfg.frequencies().iter().enumerate() {
            let exact = libm::sqrt(cfg.alpha * w) / w * (libm::sin(w * t + cfg.k * c) - libm::sin(cfg.k * c));
            // Euler error is O(dt)
            assert!((s.v().0[i] - exact).abs() < 5.0 * cfg.dt, "{} vs {exact}", s.v().0[i]);
        }
    }

    #[test]
    fn non_finite_cost_is_a_measurement_fault() {
        let cfg = EsConfig::latent_default(2);
        let mut s = EsState::new(LatentVector::zeros(2));
        assert!(matches!(es_step(&mut s, f64::NAN, &cfg), Err(Error::MeasurementFault { .. })));
        assert_eq!(s.steps(), 0);
        assert!(s.history().is_empty());
    }

    #[test]
    fn zero_alpha_never_moves() {
        let mut cfg = EsConfig::latent_default(4);
        cfg.alpha = 0.0;
        let traj = run_static(|v| v.iter().map(|x| x * x).sum(), &cfg, &[0.3, -0.2, 0.1, 0.0], 500).unwrap();
        assert_eq!(traj.final_v, vec![0.3, -0.2, 0.1, 0.0]);
    }

    #[test]
    fn self_terms_are_half_the_integral() {
        let ratios = frequency_ratios(5);
        let table = orthogonality_check(20.0, &ratios, |_| 1.0, 50.0 * 2.0 * PI / 20.0).unwrap();
        assert!(table.max_self_deviation() < 0.02);
        assert!(orthogonality_check(20.0, &ratios, |_| 1.0, 1.0).is_err());
    }

    #[test]
    fn bootstrap_interval_brackets_the_mean() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let (lo, hi) = bootstrap_mean_ci(&xs, 0.95, 2000, 1);
        assert!(lo < 24.5 && 24.5 < hi);
        assert!(hi - lo < 15.0);
    }
}
