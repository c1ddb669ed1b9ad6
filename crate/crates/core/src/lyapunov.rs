//! The Lyapunov candidate
//!
//! ```text
//!   V = 1 + A rho(p) y^2 exp(beta y^2 / 2) + exp(beta H),   y = p2 + F
//! ```
//!
//! its generator `LV` by the chain rule, the region split and a sampled
//! check of `LV <= c3 1_K - phi(V)` with `phi(s) = c4 s / (2 + log s)`.
//!
//! All large quantities are carried as `exp(beta H)` times a scaled value,
//! which keeps the arithmetic finite at any energy.

use alloc::vec::Vec;

use crate::averaging::{ito, EffectiveDynamics};
use crate::fmath;
use crate::model::{Model, State};
use crate::phasepoly::{CompiledPoly, PhasePoly, PolyError, Var};
use crate::sde::NoiseStream;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LyapunovError {
    #[error("beta = {beta} must be positive and below 1/max(T1, T3) = {limit}")]
    BetaTooLarge { beta: f64, limit: f64 },
    #[error("invalid Lyapunov constant: {0}")]
    BadConstant(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovParams {
    pub beta: f64,
    pub a: f64,
    pub k: u32,
    pub r: f64,
    pub m: f64,
    pub c4: f64,
    /// Keep terms of `F` with degree at least this; `None` keeps all.
    pub truncation: Option<i32>,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        LyapunovParams { beta: 0.05, a: 10.0, k: 2, r: 10.0, m: 1200.0, c4: 1e-4, truncation: None }
    }
}

impl LyapunovParams {
    pub fn validate(&self, model: &Model) -> Result<(), LyapunovError> {
        let t = model.num().temp;
        let limit = 1.0 / t[0].max(t[1]);
        if !(self.beta > 0.0 && self.beta < limit) {
            return Err(LyapunovError::BetaTooLarge { beta: self.beta, limit });
        }
        if !(self.a > 0.0) {
            return Err(LyapunovError::BadConstant("A must be positive"));
        }
        if self.k < 1 {
            return Err(LyapunovError::BadConstant("k must be >= 1"));
        }
        if !(self.r > 0.0) {
            return Err(LyapunovError::BadConstant("R must be positive"));
        }
        if !(self.m > 0.0) {
            return Err(LyapunovError::BadConstant("M must be positive"));
        }
        if !(self.c4 >= 0.0) {
            return Err(LyapunovError::BadConstant("c4 must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    Omega1,
    Omega2,
    Omega3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegionLabel {
    pub region: Region,
    pub in_k: bool,
}

/// `(p1^2 + p3^2)^k + R`.
#[inline]
fn split_scale(p: &[f64; 3], k: u32, r: f64) -> f64 {
    fmath::powi(p[0] * p[0] + p[2] * p[2], k as i32) + r
}

pub fn region(x: &State, lyp: &LyapunovParams) -> RegionLabel {
    let d = split_scale(&x.p, lyp.k, lyp.r);
    let a = x.p[1].abs();
    let region = if a < d {
        Region::Omega1
    } else if a > 2.0 * d {
        Region::Omega3
    } else {
        Region::Omega2
    };
    let s = x.p[0] * x.p[0] + x.p[2] * x.p[2];
    RegionLabel { region, in_k: region != Region::Omega3 && s <= lyp.m }
}

/// Quintic smoothstep on `|s|` in `[1, 2]` and its first two derivatives.
#[inline]
pub fn chi(s: f64) -> (f64, f64, f64) {
    let a = s.abs();
    if a <= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    if a >= 2.0 {
        return (1.0, 0.0, 0.0);
    }
    let t = a - 1.0;
    let v = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let d1 = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    let d2 = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
    (v, d1.copysign(s), d2)
}

/// `rho(p)` with gradient `(d_p1, d_p2, d_p3)` and the diagonal second
/// derivatives in `p1, p3`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cutoff {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess_outer: [f64; 2],
}

pub fn cutoff(p: &[f64; 3], k: u32, r: f64) -> Cutoff {
    let ssum = p[0] * p[0] + p[2] * p[2];
    let d = split_scale(p, k, r);
    let s = p[1] / d;
    let (v, c1, c2) = chi(s);
    if c1 == 0.0 && c2 == 0.0 {
        return Cutoff { value: v, ..Cutoff::default() };
    }
    let kf = k as f64;
    let s_km1 = fmath::powi(ssum, k as i32 - 1);
    let s_km2 = if k >= 2 { fmath::powi(ssum, k as i32 - 2) } else { 0.0 };
    let mut grad = [0.0, c1 / d, 0.0];
    let mut hess = [0.0; 2];
    for (b, i) in [0usize, 2].into_iter().enumerate() {
        let db = 2.0 * kf * s_km1 * p[i];
        let dbb = 2.0 * kf * s_km1 + 4.0 * kf * (kf - 1.0) * s_km2 * p[i] * p[i];
        let ds = -p[1] * db / (d * d);
        let dds = -p[1] * (dbb / (d * d) - 2.0 * db * db / (d * d * d));
        grad[i] = c1 * ds;
        hess[b] = c2 * ds * ds + c1 * dds;
    }
    Cutoff { value: v, grad, hess_outer: hess }
}

/// A positive quantity `exp(log_scale) * scaled`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub log_scale: f64,
    pub scaled: f64,
}

impl Scaled {
    /// May overflow to infinity.
    pub fn value(&self) -> f64 {
        fmath::exp(self.log_scale) * self.scaled
    }

    /// `ln` of a positive value.
    pub fn ln(&self) -> f64 {
        self.log_scale + fmath::ln(self.scaled)
    }
}

/// `phi(s) = c4 s / (2 + log s)`.
pub fn phi(c4: f64, s: f64) -> f64 {
    c4 * s / (2.0 + fmath::ln(s))
}

/// `H_phi(u) = int_1^u ds / phi(s)`.
pub fn h_phi(c4: f64, u: f64) -> f64 {
    let l = fmath::ln(u);
    (2.0 * l + 0.5 * l * l) / c4
}

/// Inverse of [`h_phi`]: `exp(sqrt(2 c4 t + 4) - 2)`.
pub fn h_phi_inv(c4: f64, t: f64) -> f64 {
    fmath::exp(fmath::sqrt(2.0 * c4 * t + 4.0) - 2.0)
}

/// `V` and `LV` for one model and one set of constants.
#[derive(Debug, Clone)]
pub struct Lyapunov<'a> {
    model: &'a Model,
    pub params: LyapunovParams,
    f: CompiledPoly,
    ly: CompiledPoly,
    sigma: [CompiledPoly; 2],
    h_min: f64,
}

impl<'a> Lyapunov<'a> {
    pub fn new(model: &'a Model, eff: &EffectiveDynamics, params: LyapunovParams) -> Result<Self, LyapunovError> {
        params.validate(model)?;
        let f = match params.truncation {
            Some(t) => eff.f_truncated(t),
            None => eff.f.clone(),
        };
        let form = ito(&(&PhasePoly::momentum(Var::P2, 1) + &f), model);
        let p = model.params();
        let h_min = -(p.w.iter().map(|w| w.sup_bound()).sum::<f64>() + p.u.iter().map(|u| u.sup_bound()).sum::<f64>());
        Ok(Lyapunov {
            model,
            params,
            f: f.compile(),
            ly: form.drift.compile(),
            sigma: [f.partial(Var::P1).compile(), f.partial(Var::P3).compile()],
            h_min,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// Lower bound on the Hamiltonian from the potential sup norms.
    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn region(&self, x: &State) -> RegionLabel {
        region(x, &self.params)
    }

    /// `F(x)` with the selected truncation.
    pub fn f_value(&self, x: &State) -> f64 {
        self.f.eval(x)
    }

    pub fn p2_tilde(&self, x: &State) -> Result<f64, PolyError> {
        if x.p[1] == 0.0 && !self.f.is_empty() {
            return Err(PolyError::PoleAtZero);
        }
        Ok(x.p[1] + self.f.eval(x))
    }

    /// `exp(beta (y^2 - p2^2) / 2 - beta (H - p2^2 / 2))` without cancellation.
    #[inline]
    fn tilde_weight(&self, x: &State, fval: f64) -> f64 {
        let beta = self.params.beta;
        let rest = self.model.hamiltonian(x) - 0.5 * x.p[1] * x.p[1];
        fmath::exp(beta * (x.p[1] * fval + 0.5 * fval * fval - rest))
    }

    pub fn v_eval(&self, x: &State) -> Scaled {
        let beta = self.params.beta;
        let h = self.model.hamiltonian(x);
        let rho = cutoff(&x.p, self.params.k, self.params.r).value;
        let mut scaled = 1.0 + fmath::exp(-beta * h);
        if rho > 0.0 {
            let fval = self.f.eval(x);
            let y = x.p[1] + fval;
            scaled += self.params.a * rho * y * y * self.tilde_weight(x, fval);
        }
        Scaled { log_scale: beta * h, scaled }
    }

    /// `exp(-beta H) L exp(beta H)` in closed form.
    pub fn l_exp_beta_h_scaled(&self, x: &State) -> f64 {
        let n = self.model.num();
        let beta = self.params.beta;
        let p = [x.p[0], x.p[2]];
        (0..2)
            .map(|b| {
                -n.gamma[b] * beta * (1.0 - beta * n.temp[b]) * p[b] * p[b]
                    + beta * n.tau[b] * p[b]
                    + n.gamma[b] * beta * n.temp[b]
            })
            .sum()
    }

    /// The same from the chain rule `L e^{bH} = b e^{bH} (LH + b sum_b gamma_b T_b (dH/dp_b)^2)`
    /// with `LH` assembled from the numerical forces.
    pub fn l_exp_beta_h_chain(&self, x: &State) -> f64 {
        let n = self.model.num();
        let beta = self.params.beta;
        let phi = self.model.forces(&x.q);
        let (_, dp) = self.model.sde_drift(x);
        // dH/dq_i = -phi_i, dH/dp_i = p_i
        let mut lh = 0.0;
        for i in 0..3 {
            lh += x.p[i] * (-phi[i]) + dp[i] * x.p[i];
        }
        let mut second = 0.0;
        for (b, i) in [(0usize, 0usize), (1, 2)] {
            lh += n.gamma[b] * n.temp[b];
            second += n.gamma[b] * n.temp[b] * x.p[i] * x.p[i];
        }
        beta * (lh + beta * second)
    }

    /// `LV`, as `exp(beta H)` times a scaled value (which may be negative).
    pub fn lv_eval(&self, x: &State) -> Scaled {
        let beta = self.params.beta;
        let h = self.model.hamiltonian(x);
        let mut scaled = self.l_exp_beta_h_scaled(x);
        let cut = cutoff(&x.p, self.params.k, self.params.r);
        if cut.value > 0.0 || cut.grad != [0.0; 3] {
            scaled += self.params.a * self.l_rho_g_scaled(x, &cut);
        }
        Scaled { log_scale: beta * h, scaled }
    }

    fn l_rho_g_scaled(&self, x: &State, cut: &Cutoff) -> f64 {
        let beta = self.params.beta;
        let n = self.model.num();
        let fval = self.f.eval(x);
        let y = x.p[1] + fval;
        let w = self.tilde_weight(x, fval);
        let y2 = y * y;
        let g = y2 * w;
        let g1 = (2.0 * y + beta * y2 * y) * w;
        let g2 = (2.0 + 5.0 * beta * y2 + beta * beta * y2 * y2) * w;

        let (_, dp) = self.model.sde_drift(x);
        let mut l_rho = dp[1] * cut.grad[1];
        for (b, i) in [(0usize, 0usize), (1, 2)] {
            l_rho += dp[i] * cut.grad[i] + n.gamma[b] * n.temp[b] * cut.hess_outer[b];
        }
        let mut out = g * l_rho;
        if cut.value > 0.0 {
            out += cut.value * g1 * self.ly.eval(x);
        }
        for (b, i) in [(0usize, 0usize), (1, 2)] {
            let s = self.sigma[b].eval(x);
            out += n.gamma[b] * n.temp[b] * (2.0 * cut.grad[i] * g1 * s + cut.value * g2 * s * s);
        }
        out
    }

    /// `(LV + phi(V)) exp(-beta H)`.
    pub fn drift_margin_scaled(&self, x: &State) -> f64 {
        let v = self.v_eval(x);
        let lv = self.lv_eval(x);
        lv.scaled + self.params.c4 * v.scaled / (2.0 + v.ln())
    }
}

/// Sampling strata for the drift scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stratum {
    InsideK,
    Omega1OutsideK,
    Omega2OutsideK,
    Omega3SmallOuter,
    Omega3,
    /// `p1 = p3 = 0`, `|p2|` growing.
    RayMiddle,
    /// `p2 = p3 = 0`, `p1` growing.
    RayOuter,
}

pub const STRATA: [Stratum; 7] = [
    Stratum::InsideK,
    Stratum::Omega1OutsideK,
    Stratum::Omega2OutsideK,
    Stratum::Omega3SmallOuter,
    Stratum::Omega3,
    Stratum::RayMiddle,
    Stratum::RayOuter,
];

/// Draw a state from a stratum; angles are uniform.
pub fn sample_stratum(st: Stratum, lyp: &LyapunovParams, noise: &mut NoiseStream) -> State {
    let q = [noise.angle(), noise.angle(), noise.angle()];
    let mut u = || noise.uniform();
    let m = lyp.m;
    let sign = if u() < 0.5 { -1.0 } else { 1.0 };
    let outer = |s: f64, theta: f64| [fmath::sqrt(s) * fmath::cos(theta), fmath::sqrt(s) * fmath::sin(theta)];
    let scale = |s: f64| fmath::powi(s, lyp.k as i32) + lyp.r;
    let (s, p2) = match st {
        Stratum::InsideK => {
            let s = m * u();
            (s, 2.0 * scale(s) * u())
        }
        Stratum::Omega1OutsideK => {
            let s = m * fmath::exp(3.0 * u());
            (s, scale(s) * u())
        }
        Stratum::Omega2OutsideK => {
            let s = m * fmath::exp(3.0 * u());
            (s, scale(s) * (1.0 + u()))
        }
        Stratum::Omega3SmallOuter => {
            let s = m.min(50.0) * u() * u();
            (s, 2.0 * scale(s) * fmath::exp(u() * fmath::ln(50.0)).max(1.0 + 1e-12))
        }
        Stratum::Omega3 => {
            let s = m * fmath::exp(3.0 * u() - 1.5);
            (s, 2.0 * scale(s) * fmath::exp(u() * fmath::ln(10.0)).max(1.0 + 1e-12))
        }
        Stratum::RayMiddle => (0.0, 2.0 * lyp.r * fmath::exp(u() * fmath::ln(1000.0)).max(1.0 + 1e-12)),
        Stratum::RayOuter => {
            let s = m * fmath::exp(u() * fmath::ln(100.0));
            return State::new(q, [sign * fmath::sqrt(s), 0.0, 0.0]);
        }
    };
    let theta = u() * fmath::TAU;
    let pb = outer(s, theta);
    State::new(q, [pb[0], sign * p2, pb[1]])
}

/// `n` states cycling through all strata.
pub fn stratified_samples(lyp: &LyapunovParams, n: usize, noise: &mut NoiseStream) -> Vec<State> {
    (0..n).map(|i| sample_stratum(STRATA[i % STRATA.len()], lyp, noise)).collect()
}

/// Worst sample of a group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Worst {
    pub index: usize,
    pub state: State,
    /// The scaled quantity, `exp(-beta H)` times the physical one.
    pub value: f64,
    pub log_scale: f64,
}

/// Per-group summary: count and worst sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupStats {
    pub count: usize,
    pub worst: Option<Worst>,
}

impl GroupStats {
    fn offer(&mut self, w: Worst) {
        self.count += 1;
        let better = match &self.worst {
            None => true,
            Some(cur) => w.value > cur.value || (w.value == cur.value && w.index < cur.index),
        };
        if better {
            self.worst = Some(w);
        }
    }

    fn merge(&mut self, o: &GroupStats) {
        let n = self.count + o.count;
        if let Some(w) = o.worst {
            self.offer(w);
        }
        self.count = n;
    }
}

/// Result of a drift scan over samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanReport {
    pub pass: bool,
    /// Max of `(LV + phi(V)) e^{-beta H}` outside `K`.
    pub outside_k: GroupStats,
    /// Max of `LV e^{-beta H}` inside `K`.
    pub inside_k: GroupStats,
    /// `(LV + phi(V)) e^{-beta H}` by region, outside `K`.
    pub by_region: [GroupStats; 3],
    /// Largest `c4` admissible on these samples: `min -LV / (V / (2 + log V))`.
    pub c4_max: f64,
}

impl Default for ScanReport {
    fn default() -> Self {
        ScanReport {
            pass: true,
            outside_k: GroupStats::default(),
            inside_k: GroupStats::default(),
            by_region: [GroupStats::default(); 3],
            c4_max: f64::INFINITY,
        }
    }
}

impl ScanReport {
    /// Merge a report over later samples (indices already global).
    pub fn merge(&mut self, o: &ScanReport) {
        self.outside_k.merge(&o.outside_k);
        self.inside_k.merge(&o.inside_k);
        for r in 0..3 {
            self.by_region[r].merge(&o.by_region[r]);
        }
        self.c4_max = self.c4_max.min(o.c4_max);
        self.pass = self.outside_k.worst.is_none_or(|w| w.value <= 0.0);
    }
}

/// Scan `samples`, numbering them from `first_index`.
pub fn drift_scan(lyp: &Lyapunov<'_>, samples: &[State], first_index: usize) -> ScanReport {
    let mut rep = ScanReport::default();
    for (j, x) in samples.iter().enumerate() {
        let index = first_index + j;
        let label = lyp.region(x);
        let v = lyp.v_eval(x);
        let lv = lyp.lv_eval(x);
        if label.in_k {
            rep.inside_k.offer(Worst { index, state: *x, value: lv.scaled, log_scale: lv.log_scale });
            continue;
        }
        let phi_s = v.scaled / (2.0 + v.ln());
        let margin = lv.scaled + lyp.params.c4 * phi_s;
        let w = Worst { index, state: *x, value: margin, log_scale: lv.log_scale };
        rep.outside_k.offer(w);
        rep.by_region[label.region as usize].offer(w);
        rep.c4_max = rep.c4_max.min(-lv.scaled / phi_s);
    }
    rep.pass = rep.outside_k.worst.is_none_or(|w| w.value <= 0.0);
    rep
}

/// Candidate values for the searched constants.
#[derive(Debug, Clone, Copy)]
pub struct SearchGrid<'g> {
    pub a: &'g [f64],
    pub r: &'g [f64],
    pub m: &'g [f64],
}

/// Pick `(A, R, M)` from the grid maximizing the admissible `c4` on pilot
/// samples; returns the constants with `c4` set to half of it.
pub fn search_constants(
    model: &Model,
    eff: &EffectiveDynamics,
    base: LyapunovParams,
    grid: SearchGrid<'_>,
    n_pilot: usize,
    noise_seed: &crate::sde::RngSpec,
) -> Result<(LyapunovParams, ScanReport), LyapunovError> {
    let mut best: Option<(LyapunovParams, ScanReport)> = None;
    let mut stream = 0u64;
    for &a in grid.a {
        for &r in grid.r {
            for &m in grid.m {
                let trial = LyapunovParams { a, r, m, c4: 0.0, ..base };
                let lyp = Lyapunov::new(model, eff, trial)?;
                let mut noise = noise_seed.stream(stream);
                stream += 1;
                let samples = stratified_samples(&trial, n_pilot, &mut noise);
                let rep = drift_scan(&lyp, &samples, 0);
                if best.as_ref().is_none_or(|(_, b)| rep.c4_max > b.c4_max) {
                    best = Some((trial, rep));
                }
            }
        }
    }
    let (mut p, rep) = best.ok_or(LyapunovError::BadConstant("empty search grid"))?;
    p.c4 = if rep.c4_max > 0.0 { 0.5 * rep.c4_max } else { 0.0 };
    Ok((p, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::average_p2;
    use crate::model::ChainParams;
    use crate::phasepoly::int;
    use crate::sde::RngSpec;

    fn setup() -> (Model, EffectiveDynamics) {
        let m = Model::new(ChainParams::benchmark(int(1), int(10), int(0))).unwrap();
        let eff = average_p2(&m).unwrap();
        (m, eff)
    }

    #[test]
    fn regions() {
        let lyp = LyapunovParams::default();
        let at = |p: [f64; 3]| region(&State::new([0.0; 3], p), &lyp);
        assert_eq!(at([0.0; 3]), RegionLabel { region: Region::Omega1, in_k: true });
        let d = (0.01f64 + 10.0).powi(2);
        assert_eq!(at([0.1, 10.0 * d, 0.0]).region, Region::Omega3);
        let p1 = 1.5f64;
        let edge = (p1 * p1).powi(2) + 10.0;
        assert_eq!(at([p1, edge, 0.0]).region, Region::Omega2);
        assert_eq!(at([p1, -edge, 0.0]).region, Region::Omega2);
        assert_eq!(at([p1, 2.0 * edge, 0.0]).region, Region::Omega2);
        assert_eq!(at([p1, 2.0 * edge + 1e-9, 0.0]).region, Region::Omega3);
        assert!(!at([40.0, 0.0, 0.0]).in_k);
    }

    #[test]
    fn chi_is_c2() {
        for &s in &[1.0, 2.0, -1.0, -2.0] {
            let (a, b, c) = chi(s * (1.0 - 1e-9));
            let (a2, b2, c2) = chi(s * (1.0 + 1e-9));
            assert!((a - a2).abs() < 1e-7 && (b - b2).abs() < 1e-6 && (c - c2).abs() < 1e-6);
        }
        let h = 1e-5;
        for &s in &[1.3, -1.7, 1.5] {
            let (_, d1, d2) = chi(s);
            assert!(((chi(s + h).0 - chi(s - h).0) / (2.0 * h) - d1).abs() < 1e-8);
            assert!(((chi(s + h).1 - chi(s - h).1) / (2.0 * h) - d2).abs() < 1e-7);
        }
    }

    #[test]
    fn cutoff_derivatives() {
        for k in [1u32, 2, 3] {
            let p = [0.7, -1.9 * (0.49f64 + 0.09).powi(k as i32) - 1.9 * 2.0, 0.3];
            let c = cutoff(&p, k, 2.0);
            assert!(c.value > 0.0 && c.value < 1.0);
            let h = 1e-6;
            for i in 0..3 {
                let mut a = p;
                let mut b = p;
                a[i] += h;
                b[i] -= h;
                let fd = (cutoff(&a, k, 2.0).value - cutoff(&b, k, 2.0).value) / (2.0 * h);
                assert!((fd - c.grad[i]).abs() < 1e-6, "k {k} i {i}: {fd} vs {}", c.grad[i]);
            }
            for (b, i) in [(0usize, 0usize), (1, 2)] {
                let mut hi = p;
                let mut lo = p;
                hi[i] += 1e-4;
                lo[i] -= 1e-4;
                let fd = (cutoff(&hi, k, 2.0).value - 2.0 * c.value + cutoff(&lo, k, 2.0).value) / 1e-8;
                assert!((fd - c.hess_outer[b]).abs() < 1e-4, "k {k} b {b}: {fd} vs {}", c.hess_outer[b]);
            }
        }
    }

    #[test]
    fn v_in_omega1() {
        let (m, eff) = setup();
        let lyp = Lyapunov::new(&m, &eff, LyapunovParams::default()).unwrap();
        let x = State::new([0.3, 1.0, 2.0], [1.0, 3.0, -2.0]);
        let v = lyp.v_eval(&x);
        let h = m.hamiltonian(&x);
        assert!((v.value() - (1.0 + (0.05 * h).exp())).abs() < 1e-12);
    }

    #[test]
    fn exp_beta_h_forms_agree() {
        let (m, eff) = setup();
        let lyp = Lyapunov::new(&m, &eff, LyapunovParams::default()).unwrap();
        let mut noise = RngSpec::new(4).stream(0);
        for _ in 0..1000 {
            let x = State::new(
                [noise.angle(), noise.angle(), noise.angle()],
                [10.0 * noise.normal(), 10.0 * noise.normal(), 10.0 * noise.normal()],
            );
            let a = lyp.l_exp_beta_h_scaled(&x);
            let b = lyp.l_exp_beta_h_chain(&x);
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} {b}");
        }
    }

    #[test]
    fn stationary_point_value() {
        let m = Model::new(ChainParams::equilibrium(int(2))).unwrap();
        let eff = average_p2(&m).unwrap();
        let lyp = Lyapunov::new(&m, &eff, LyapunovParams { beta: 0.1, ..LyapunovParams::default() }).unwrap();
        let lv = lyp.lv_eval(&State::default());
        assert!((lv.value() - 2.0 * 0.1 * 2.0 * (-0.2f64).exp()).abs() < 1e-12);
    }

    /// `exp(-beta H(x)) LV(x)` by central differences of `V`.
    fn lv_fd(lyp: &Lyapunov<'_>, x: &State, eps: f64) -> f64 {
        let m = lyp.model();
        let base = lyp.params.beta * m.hamiltonian(x);
        let v = |y: &State| {
            let s = lyp.v_eval(y);
            (s.log_scale - base).exp() * s.scaled
        };
        let shifted = |c: usize, d: f64| {
            let mut y = *x;
            if c < 3 {
                y.q[c] += d;
            } else {
                y.p[c - 3] += d;
            }
            y
        };
        let d1 = |c: usize| (v(&shifted(c, eps)) - v(&shifted(c, -eps))) / (2.0 * eps);
        let d2 = |c: usize| (v(&shifted(c, eps)) - 2.0 * v(x) + v(&shifted(c, -eps))) / (eps * eps);
        let (dq, dp) = m.sde_drift(x);
        let n = m.num();
        let mut out = 0.0;
        for i in 0..3 {
            out += dq[i] * d1(i) + dp[i] * d1(3 + i);
        }
        out + n.gamma[0] * n.temp[0] * d2(3) + n.gamma[1] * n.temp[1] * d2(5)
    }

    #[test]
    fn lv_matches_finite_differences() {
        // Moderate momenta only: for large p2, LV is a tiny fraction of V and
        // plain double differences drown in rounding.
        let m = Model::new(ChainParams::benchmark(int(1), int(1), int(2))).unwrap();
        let eff = average_p2(&m).unwrap();
        let params = LyapunovParams { r: 2.0, k: 1, ..LyapunovParams::default() };
        let lyp = Lyapunov::new(&m, &eff, params).unwrap();
        let mut noise = RngSpec::new(8).stream(0);
        let mut regions = [0; 3];
        for i in 0..300 {
            let mut x = sample_stratum(STRATA[i % 5], &LyapunovParams { m: 4.0, ..params }, &mut noise);
            x.p[1] = x.p[1].clamp(-12.0, 12.0);
            regions[lyp.region(&x).region as usize] += 1;
            let a = lyp.lv_eval(&x).scaled;
            let fd = (4.0 * lv_fd(&lyp, &x, 5e-4) - lv_fd(&lyp, &x, 1e-3)) / 3.0;
            let tol = 1e-3 * (a.abs() + (-lyp.v_eval(&x).log_scale).exp());
            assert!((a - fd).abs() < tol, "{x:?}: {a} vs {fd}");
        }
        assert!(regions.iter().all(|&c| c > 10), "{regions:?}");
    }

    #[test]
    fn h_phi_inverse() {
        for &c4 in &[0.01, 0.5, 3.0] {
            for &t in &[0.0, 0.3, 10.0, 1e4] {
                let u = h_phi_inv(c4, t);
                assert!((h_phi(c4, u) - t).abs() < 1e-9 * (1.0 + t));
            }
            // Trapezoid quadrature of 1/phi from 1 to 5.
            let n = 200_000;
            let dx = 4.0 / n as f64;
            let mut q = 0.0;
            for i in 0..=n {
                let s = 1.0 + i as f64 * dx;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                q += w * dx / phi(c4, s);
            }
            assert!((q - h_phi(c4, 5.0)).abs() < 1e-8 * q);
        }
    }

    #[test]
    fn beta_limit() {
        let (m, eff) = setup();
        let bad = LyapunovParams { beta: 0.2, ..LyapunovParams::default() };
        assert!(matches!(Lyapunov::new(&m, &eff, bad), Err(LyapunovError::BetaTooLarge { .. })));
    }
}
