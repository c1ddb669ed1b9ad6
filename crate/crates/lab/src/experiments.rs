//! Experiment drivers shared by the command line and the acceptance suite.
//! Every randomized driver takes a master seed; trajectory or path `i`
//! always uses stream `i`, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::Serialize;

use rotor_core::averaging::{average_p2, EffectiveDynamics};
use rotor_core::control::{self, ControlReport};
use rotor_core::lyapunov::{self, Lyapunov, LyapunovParams, Region, ScanReport, Worst};
use rotor_core::observables::{
    batch_estimate, dwell_times, find_modes, heat_flux, ks_statistic, linear_fit, normal_cdf, drift_path_slope,
    drift_summary, DriftWindow, DwellStats, Histogram, Moments,
};
use rotor_core::sde::{bath_initial, simulate, IntegratorSpec, RngSpec, SmallModel};
use rotor_core::{Model, State};

use crate::config::{ExperimentConfig, HistConfig, IntegratorConfig};
use crate::LabError;

fn compute<E: std::fmt::Display>(e: E) -> LabError {
    LabError::Compute(e.to_string())
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<Model, LabError> {
    Model::new(cfg.model.to_params()?).map_err(|e| LabError::Config(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateJson {
    pub q: [f64; 3],
    pub p: [f64; 3],
}

impl From<&State> for StateJson {
    fn from(x: &State) -> Self {
        StateJson { q: x.q, p: x.p }
    }
}

/// Stationary samples from independent chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainPlan {
    pub chains: u64,
    /// Sampled time summed over chains (burn-in excluded).
    pub total_time: f64,
    pub burn_in: f64,
    pub sample_dt: f64,
}

/// Run `plan.chains` chains from bath-distributed starts with `p2 = 0` and
/// return the states recorded every `sample_dt` after the burn-in, chain by
/// chain in index order.
pub fn run_chains(model: &Model, integ: &IntegratorConfig, plan: &ChainPlan, seed: u64) -> Result<Vec<Vec<State>>, LabError> {
    if plan.chains == 0 || !(plan.total_time > 0.0) || !(plan.sample_dt > 0.0) {
        return Err(LabError::Config("chains, total_time and sample_dt must be positive".into()));
    }
    let base = integ.spec()?;
    let stride = ((plan.sample_dt / base.h).round() as u64).max(1);
    let per_chain = plan.total_time / plan.chains as f64;
    let rng = RngSpec::new(seed);
    (0..plan.chains)
        .into_par_iter()
        .map(|i| {
            let mut noise = rng.stream(i);
            let mut x = bath_initial(model, 0.0, &mut noise);
            if plan.burn_in > 0.0 {
                let burn = IntegratorSpec::new(base.scheme, base.h, plan.burn_in, u64::MAX).map_err(compute)?;
                x = simulate(x, model, &burn, &mut noise, &mut |_: f64, _: &State| {}).map_err(compute)?;
            }
            let spec = IntegratorSpec::new(base.scheme, base.h, per_chain, stride).map_err(compute)?;
            let mut out = Vec::with_capacity((per_chain / plan.sample_dt) as usize + 1);
            simulate(x, model, &spec, &mut noise, &mut |t: f64, y: &State| {
                if t > 0.0 {
                    out.push(*y);
                }
            })
            .map_err(compute)?;
            Ok(out)
        })
        .collect()
}

/// KS distance of a sample to `N(mean, var)`.
pub fn ks_gaussian(values: &[f64], mean: f64, var: f64) -> f64 {
    let mut v = values.to_vec();
    let sd = var.sqrt();
    ks_statistic(&mut v, |x| normal_cdf((x - mean) / sd))
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub temperature: f64,
    pub total_time: f64,
    pub samples: usize,
    /// KS distance of each momentum marginal to `N(0, T)`.
    pub ks: [f64; 3],
    pub ks_max: f64,
    pub flux: [f64; 2],
    pub flux_stderr: [f64; 2],
    pub flux_sigmas: f64,
    pub pass: bool,
}

pub fn equilibrium_check(cfg: &ExperimentConfig, seed: u64) -> Result<EquilibriumReport, LabError> {
    let model = build_model(cfg)?;
    let n = model.num();
    if n.temp[0] != n.temp[1] || n.tau != [0.0, 0.0] {
        return Err(LabError::Config("equilibrium-check needs T1 = T3 and zero torques".into()));
    }
    let e = &cfg.equilibrium;
    let plan = ChainPlan { chains: e.chains, total_time: e.total_time, burn_in: e.burn_in, sample_dt: e.sample_dt };
    let chains = run_chains(&model, &cfg.integrator, &plan, seed)?;
    let states: Vec<State> = chains.into_iter().flatten().collect();
    let t = n.temp[0];
    let mut ks = [0.0; 3];
    for (i, k) in ks.iter_mut().enumerate() {
        let v: Vec<f64> = states.iter().map(|x| x.p[i]).collect();
        *k = ks_gaussian(&v, 0.0, t);
    }
    let flux = heat_flux(&model, &states, e.n_batches);
    let pass = ks.iter().all(|&k| k < e.ks_max)
        && (0..2).all(|b| flux.j[b].abs() < e.flux_sigmas * flux.stderr[b]);
    Ok(EquilibriumReport {
        temperature: t,
        total_time: e.total_time,
        samples: states.len(),
        ks,
        ks_max: e.ks_max,
        flux: flux.j,
        flux_stderr: flux.stderr,
        flux_sigmas: e.flux_sigmas,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginalStats {
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_stderr: f64,
    /// KS distance to the Gaussian with the sample mean and variance.
    pub ks_fitted: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeJson {
    pub location: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DwellJson {
    pub centres: [f64; 2],
    pub band: f64,
    pub mean: [f64; 2],
    pub count: [u64; 2],
    pub occupation: [f64; 2],
    pub exits: [u64; 2],
    /// Occupation over exits: the holding-time MLE, censored time included.
    pub mle_mean: [f64; 2],
    pub switches: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistReport {
    pub samples: usize,
    pub marginals: [MarginalStats; 3],
    /// Modes of the smoothed `p2` density, highest first.
    pub p2_modes: Vec<ModeJson>,
    pub dwell: Option<DwellJson>,
    #[serde(skip)]
    pub histograms: [Histogram; 3],
}

fn marginal(values: &[f64], n_batches: usize) -> MarginalStats {
    let mut m = Moments::default();
    values.iter().for_each(|&v| m.push(v));
    let mean_est = batch_estimate(values, n_batches, |b| b.iter().sum::<f64>() / b.len() as f64);
    let kurt = batch_estimate(values, n_batches, |b| {
        let mut bm = Moments::default();
        b.iter().for_each(|&v| bm.push(v));
        bm.excess_kurtosis()
    });
    MarginalStats {
        mean: m.mean,
        mean_stderr: mean_est.stderr,
        variance: m.variance(),
        excess_kurtosis: m.excess_kurtosis(),
        kurtosis_stderr: kurt.stderr,
        ks_fitted: ks_gaussian(values, m.mean, m.variance()),
    }
}

/// Momentum marginals, `p2` modes and, when centres are given, the
/// dwell times of `p2` near each centre.
pub fn histograms(model: &Model, integ: &IntegratorConfig, h: &HistConfig, seed: u64) -> Result<HistReport, LabError> {
    if h.bins == 0 || !(h.hi > h.lo) {
        return Err(LabError::Config("hist: need bins > 0 and hi > lo".into()));
    }
    let plan = ChainPlan { chains: h.chains, total_time: h.total_time, burn_in: h.burn_in, sample_dt: h.sample_dt };
    let chains = run_chains(model, integ, &plan, seed)?;
    let mut hists = [Histogram::new(h.lo, h.hi, h.bins), Histogram::new(h.lo, h.hi, h.bins), Histogram::new(h.lo, h.hi, h.bins)];
    let mut series: [Vec<f64>; 3] = Default::default();
    for c in &chains {
        for x in c {
            for i in 0..3 {
                hists[i].record(x.p[i]);
                series[i].push(x.p[i]);
            }
        }
    }
    let marginals = [marginal(&series[0], h.n_batches), marginal(&series[1], h.n_batches), marginal(&series[2], h.n_batches)];
    let modes = find_modes(&hists[1], h.smooth_bins, h.min_rel)
        .into_iter()
        .map(|m| ModeJson { location: m.location, height: m.height })
        .collect();
    // Sojourns are measured per chain and pooled.
    let dwell = h.centres.map(|centres| {
        let mut total = DwellStats { mean: [0.0; 2], count: [0; 2], occupation: [0.0; 2], exits: [0; 2], switches: 0 };
        let mut sums = [0.0; 2];
        for c in &chains {
            let p2: Vec<f64> = c.iter().map(|x| x.p[1]).collect();
            let d = dwell_times(&p2, h.sample_dt, centres, h.band);
            for r in 0..2 {
                if d.count[r] > 0 {
                    sums[r] += d.mean[r] * d.count[r] as f64;
                }
                total.count[r] += d.count[r];
                total.occupation[r] += d.occupation[r];
                total.exits[r] += d.exits[r];
            }
            total.switches += d.switches;
        }
        let mean = [0, 1].map(|r| if total.count[r] > 0 { sums[r] / total.count[r] as f64 } else { f64::NAN });
        DwellJson {
            centres,
            band: h.band,
            mean,
            count: total.count,
            occupation: total.occupation,
            exits: total.exits,
            mle_mean: total.mle_mean(),
            switches: total.switches,
        }
    });
    Ok(HistReport { samples: series[0].len(), marginals, p2_modes: modes, dwell, histograms: hists })
}

#[derive(Debug, Clone, Serialize)]
pub struct FluxReport {
    pub total_time: f64,
    pub samples: usize,
    pub flux: [f64; 2],
    pub flux_stderr: [f64; 2],
}

pub fn flux(cfg: &ExperimentConfig, seed: u64) -> Result<FluxReport, LabError> {
    let model = build_model(cfg)?;
    let f = &cfg.flux;
    let plan = ChainPlan { chains: f.chains, total_time: f.total_time, burn_in: f.burn_in, sample_dt: f.sample_dt };
    let states: Vec<State> = run_chains(&model, &cfg.integrator, &plan, seed)?.into_iter().flatten().collect();
    let st = heat_flux(&model, &states, f.n_batches);
    Ok(FluxReport { total_time: f.total_time, samples: states.len(), flux: st.j, flux_stderr: st.stderr })
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftPoint {
    pub omega: f64,
    pub window: f64,
    pub paths: u64,
    pub slope: f64,
    pub stderr: f64,
    /// `-alpha / omega^3`.
    pub predicted: f64,
    pub rel_error: f64,
    pub mean_shift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub alpha: f64,
    pub points: Vec<DriftPoint>,
    /// Slope of `log |drift|` against `log omega`.
    pub exponent: f64,
    pub exponent_stderr: f64,
    pub rel_tol: f64,
    pub exponent_tol: f64,
    pub pass: bool,
}

/// Conditional drift of `p2` started at each `omega`, compared with the
/// averaged prediction `-alpha / omega^3`.
pub fn drift_scan(cfg: &ExperimentConfig, seed: u64) -> Result<DriftReport, LabError> {
    use num_traits::ToPrimitive;
    let model = build_model(cfg)?;
    let d = &cfg.drift;
    if d.omegas.is_empty() || d.paths < 2 {
        return Err(LabError::Config("drift: need at least one omega and two paths".into()));
    }
    let alpha = model.params().alpha().to_f64().unwrap_or(f64::NAN);
    let mut points = Vec::new();
    for (k, &omega) in d.omegas.iter().enumerate() {
        let w = DriftWindow { h: cfg.integrator.h, ..DriftWindow::for_omega(omega) };
        let rng = RngSpec::new(seed);
        let offset = (k as u64) << 40;
        let paths: Vec<(f64, f64)> = (0..d.paths)
            .into_par_iter()
            .map(|i| drift_path_slope(&model, &w, &rng, offset + i).map_err(compute))
            .collect::<Result<_, _>>()?;
        let est = drift_summary(&w, &paths).map_err(compute)?;
        let predicted = -alpha / omega.powi(3);
        points.push(DriftPoint {
            omega,
            window: w.window,
            paths: d.paths,
            slope: est.mean_slope,
            stderr: est.stderr,
            predicted,
            rel_error: (est.mean_slope - predicted).abs() / predicted.abs(),
            mean_shift: est.mean_shift,
        });
    }
    let (exponent, exponent_stderr) = if points.len() >= 2 && points.iter().all(|p| p.slope < 0.0) {
        let lx: Vec<f64> = points.iter().map(|p| p.omega.ln()).collect();
        let ly: Vec<f64> = points.iter().map(|p| (-p.slope).ln()).collect();
        let fit = linear_fit(&lx, &ly);
        (fit.slope, fit.slope_stderr)
    } else {
        (f64::NAN, f64::NAN)
    };
    let pass = points.iter().all(|p| p.rel_error <= d.rel_tol)
        && (points.len() < 2 || (exponent + 3.0).abs() <= d.exponent_tol);
    Ok(DriftReport { alpha, points, exponent, exponent_stderr, rel_tol: d.rel_tol, exponent_tol: d.exponent_tol, pass })
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallModelReport {
    pub paths: u64,
    pub mc_mean: f64,
    pub mc_second: f64,
    pub mc_second_stderr: f64,
    pub exact_mean: f64,
    pub exact_second: f64,
    /// `(mc - exact) / stderr` for the second moment.
    pub z: f64,
    pub pass: bool,
}

pub fn small_model(cfg: &ExperimentConfig, seed: u64) -> Result<SmallModelReport, LabError> {
    let s = &cfg.small_model;
    let m = SmallModel { omega: s.omega, gamma: s.gamma, temp: s.temp, kappa: s.kappa, p0: s.p0 };
    if !(s.h > 0.0 && s.t > 0.0 && s.paths >= 2) {
        return Err(LabError::Config("small_model: need h, t > 0 and at least two paths".into()));
    }
    let rng = RngSpec::new(seed);
    let finals: Vec<f64> = (0..s.paths).into_par_iter().map(|i| m.sample(s.t, s.h, &mut rng.stream(i))).collect();
    let (mut first, mut second) = (Moments::default(), Moments::default());
    for &p in &finals {
        first.push(p);
        second.push(p * p);
    }
    let exact = m.moments(s.t);
    let se = second.stderr();
    let z = (second.mean - exact.second) / se;
    Ok(SmallModelReport {
        paths: s.paths,
        mc_mean: first.mean,
        mc_second: second.mean,
        mc_second_stderr: se,
        exact_mean: exact.mean,
        exact_second: exact.second,
        z,
        pass: z.abs() < 3.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstJson {
    pub index: usize,
    pub state: StateJson,
    /// The quantity times `exp(-beta H)`.
    pub scaled: f64,
    pub log_scale: f64,
}

impl From<&Worst> for WorstJson {
    fn from(w: &Worst) -> Self {
        WorstJson { index: w.index, state: (&w.state).into(), scaled: w.value, log_scale: w.log_scale }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionMargin {
    pub count: usize,
    pub worst: Option<WorstJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovConstants {
    pub beta: f64,
    pub a: f64,
    pub k: u32,
    pub r: f64,
    pub m: f64,
    pub c4: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub c1: f64,
    pub c2: f64,
    /// Largest `V / ((1 + p2^2) e^{beta H})` over the scan samples.
    pub max_ratio: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// Largest `(1 + p2^2) / (2 + log V)` and the bound it must respect.
    pub max_log_ratio: f64,
    pub log_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub constants: LyapunovConstants,
    pub samples: usize,
    pub pass: bool,
    /// Worst `LV + phi(V)` outside `K` (scaled).
    pub worst_outside_k: Option<WorstJson>,
    /// Worst `LV` inside `K` (scaled).
    pub worst_inside_k: Option<WorstJson>,
    pub margins_by_region: Vec<(String, RegionMargin)>,
    pub c4_max: f64,
    pub sandwich: SandwichReport,
}

pub fn lyapunov_params(cfg: &ExperimentConfig) -> LyapunovParams {
    let l = &cfg.lyapunov;
    LyapunovParams { beta: l.beta, a: l.a, k: l.k, r: l.r, m: l.m, c4: l.c4.unwrap_or(0.0), truncation: l.truncation }
}

/// Constants (searched when `c4` is unset), then a full scan with
/// sandwich checks. Returns the constants used with the report.
pub fn lyapunov_scan(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(LyapunovParams, EffectiveDynamics, LyapunovReport), LabError> {
    let model = build_model(cfg)?;
    let eff = average_p2(&model).map_err(compute)?;
    let l = &cfg.lyapunov;
    let rng = RngSpec::new(seed);
    let mut params = lyapunov_params(cfg);
    params.validate(&model).map_err(|e| LabError::Config(e.to_string()))?;
    if l.c4.is_none() {
        let or_value = |g: &Vec<f64>, v: f64| if g.is_empty() { vec![v] } else { g.clone() };
        let (a_grid, r_grid, m_grid) = (or_value(&l.a_grid, l.a), or_value(&l.r_grid, l.r), or_value(&l.m_grid, l.m));
        let grid = lyapunov::SearchGrid { a: &a_grid, r: &r_grid, m: &m_grid };
        // Pilot streams live above the scan streams.
        let pilot = RngSpec::new(seed ^ 0x5eed_0f_9170);
        let (p, _) = lyapunov::search_constants(&model, &eff, params, grid, l.pilot, &pilot)
            .map_err(|e| LabError::Config(e.to_string()))?;
        params = p;
    }
    let lyp = Lyapunov::new(&model, &eff, params).map_err(|e| LabError::Config(e.to_string()))?;
    let samples = scan_samples(&params, l.samples, &rng);
    let report = scan_report(&lyp, &samples);
    Ok((params, eff, report))
}

/// Stratified scan samples in chunks of 1000, chunk `c` on stream `c`.
pub fn scan_samples(params: &LyapunovParams, n: usize, rng: &RngSpec) -> Vec<State> {
    const CHUNK: usize = 1000;
    (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let len = CHUNK.min(n - c * CHUNK);
            let mut noise = rng.stream(c as u64);
            (0..len).map(move |j| lyapunov::sample_stratum(lyapunov::STRATA[(c * CHUNK + j) % lyapunov::STRATA.len()], params, &mut noise)).collect::<Vec<_>>()
        })
        .collect()
}

pub fn scan_report(lyp: &Lyapunov<'_>, samples: &[State]) -> LyapunovReport {
    const CHUNK: usize = 1000;
    let parts: Vec<ScanReport> = samples
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, s)| lyapunov::drift_scan(lyp, s, c * CHUNK))
        .collect();
    let mut scan = ScanReport::default();
    for p in &parts {
        scan.merge(p);
    }
    let p = lyp.params;
    let sandwich = sandwich(lyp, samples);
    let names = [(Region::Omega1, "omega1"), (Region::Omega2, "omega2"), (Region::Omega3, "omega3")];
    LyapunovReport {
        constants: LyapunovConstants { beta: p.beta, a: p.a, k: p.k, r: p.r, m: p.m, c4: p.c4 },
        samples: samples.len(),
        pass: scan.pass && sandwich.lower_ok && sandwich.upper_ok && sandwich.max_log_ratio <= sandwich.log_bound,
        worst_outside_k: scan.outside_k.worst.as_ref().map(Into::into),
        worst_inside_k: scan.inside_k.worst.as_ref().map(Into::into),
        margins_by_region: names
            .iter()
            .map(|(r, n)| {
                let g = &scan.by_region[*r as usize];
                (n.to_string(), RegionMargin { count: g.count, worst: g.worst.as_ref().map(Into::into) })
            })
            .collect(),
        c4_max: scan.c4_max,
        sandwich,
    }
}

/// `1 + e^{bH} <= V <= c2 (1 + p2^2) e^{bH}`, with `c2` fitted on the first
/// tenth of the samples (times 2) and then checked on all of them, and
/// `1 + p2^2 <= c (2 + log V)` with `c = 2/b + max(0, 1 - 2 H_min) / 2`.
pub fn sandwich(lyp: &Lyapunov<'_>, samples: &[State]) -> SandwichReport {
    let beta = lyp.params.beta;
    let ratio = |x: &State| lyp.v_eval(x).scaled / (1.0 + x.p[1] * x.p[1]);
    let pilot = (samples.len() / 10).max(1).min(samples.len());
    let c2 = 2.0 * samples[..pilot].iter().map(ratio).fold(0.0, f64::max);
    let mut lower_ok = true;
    let mut max_ratio: f64 = 0.0;
    let mut max_log_ratio: f64 = 0.0;
    for x in samples {
        let v = lyp.v_eval(x);
        // V e^{-bH} >= e^{-bH} + 1 is the lower bound with c1 = 1.
        let floor = 1.0 + (-v.log_scale).exp();
        lower_ok &= v.scaled >= floor * (1.0 - 1e-15);
        max_ratio = max_ratio.max(ratio(x));
        max_log_ratio = max_log_ratio.max((1.0 + x.p[1] * x.p[1]) / (2.0 + v.ln()));
    }
    let log_bound = 2.0 / beta + (1.0 - 2.0 * lyp.h_min()).max(0.0) / 2.0;
    SandwichReport { c1: 1.0, c2, max_ratio, lower_ok, upper_ok: max_ratio <= c2, max_log_ratio, log_bound }
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanJson {
    pub segments: Vec<(f64, f64)>,
    pub theta: f64,
    pub delta: f64,
    pub a: f64,
    pub t_star: f64,
    pub k_minus: f64,
    pub k_plus: f64,
    pub k_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaRunJson {
    pub delta: f64,
    pub bridge_length: f64,
    pub error: f64,
    pub max_control: f64,
    pub final_state: StateJson,
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlJson {
    pub plan: PlanJson,
    pub reduced_final: (f64, f64),
    pub runs: Vec<DeltaRunJson>,
    pub eps: f64,
    pub delta0: Option<f64>,
    pub reached: bool,
}

impl ControlJson {
    pub fn new(r: &ControlReport, eps: f64) -> Self {
        ControlJson {
            plan: PlanJson {
                segments: r.plan.segments.iter().map(|s| (s.duration, s.g)).collect(),
                theta: r.plan.theta,
                delta: r.plan.delta,
                a: r.plan.a,
                t_star: r.t_star,
                k_minus: r.bounds.k_minus,
                k_plus: r.bounds.k_plus,
                k_star: r.bounds.k_star,
            },
            reduced_final: r.plan.replay(),
            runs: r
                .runs
                .iter()
                .map(|d| DeltaRunJson {
                    delta: d.delta,
                    bridge_length: d.bridge_length,
                    error: d.error,
                    max_control: d.max_control,
                    final_state: (&d.final_state).into(),
                })
                .collect(),
            eps,
            delta0: r.delta0,
            reached: r.reached,
        }
    }
}

pub fn state_from_array(a: &[f64; 6]) -> State {
    State::new([a[0], a[1], a[2]], [a[3], a[4], a[5]])
}

/// Verification for the configured endpoints, plus a trajectory sampled
/// every `output_dt` at the smallest `delta`: rows `t, q1, q2, q3, p1, p2,
/// p3, q2_reduced, p2_reduced`.
pub fn control_run(cfg: &ExperimentConfig) -> Result<(ControlReport, Vec<[f64; 9]>), LabError> {
    let params = cfg.model.to_params()?;
    let c = &cfg.control;
    let xi = state_from_array(&c.from);
    let xf = state_from_array(&c.to);
    let report = control::verify_controllability(&params, &xi, &xf, c.eps, &c.deltas, c.h).map_err(|e| match e {
        control::ControlError::NotConverging { .. } => LabError::Fail(e.to_string()),
        control::ControlError::BadInput(_) | control::ControlError::Unsupported(_) => LabError::Config(e.to_string()),
        _ => compute(e),
    })?;
    let smallest = c.deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let outer = control::synthesize_outer(&report.plan, &params, smallest, (&xi, &xf)).map_err(compute)?;
    let mut rows = vec![[0.0, xi.q[0], xi.q[1], xi.q[2], xi.p[0], xi.p[1], xi.p[2], xi.q[1], xi.p[1]]];
    let mut next = c.output_dt;
    control::integrate_controlled_with(&params, &outer, &xi, c.h, &mut |t, x| {
        if t >= next - 1e-12 {
            let (q2r, p2r, _) = report.plan.state_at(t);
            rows.push([t, x.q[0], x.q[1], x.q[2], x.p[0], x.p[1], x.p[2], q2r, p2r]);
            next += c.output_dt;
        }
    });
    Ok((report, rows))
}

/// One trajectory of the chain from `x0` (or a bath-distributed start).
pub fn simulate_path(cfg: &ExperimentConfig, seed: u64, x0: Option<State>) -> Result<Vec<(f64, State)>, LabError> {
    let model = build_model(cfg)?;
    let spec = cfg.integrator.spec()?;
    let mut noise = RngSpec::new(seed).stream(0);
    let start = x0.unwrap_or_else(|| bath_initial(&model, 0.0, &mut noise));
    let mut out = Vec::new();
    simulate(start, &model, &spec, &mut noise, &mut |t: f64, x: &State| out.push((t, *x))).map_err(compute)?;
    Ok(out)
}
