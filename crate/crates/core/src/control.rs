//! Deterministic control of the chain with the bath noises replaced by
//! forces `f1, f3` on the outer momenta:
//!
//! ```text
//! q_i' = p_i,   p2' = -sum_b w_b(q2 - q_b),   p_b' = f_b(t)
//! ```
//!
//! The middle rotor is steered with a piecewise-constant force `g(t)`; the
//! outer rotors are then placed so that the bonds exert `g` on it, except on
//! short bridging windows of total length `delta` where the boundary data and
//! the jumps of `g` are interpolated.
//!
//! `ForceBounds` describe the force actually felt by `p2`, i.e. the range of
//! `-(w1(s1) + w3(s3))` over independent `s1, s3`. For even `W_b` this is the
//! same interval as the range of `w1 + w3`.

use alloc::vec::Vec;

use crate::fmath::{self, TAU};
use crate::model::{ChainParams, State, TrigPotential};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("both interaction forces vanish; the middle rotor cannot be steered")]
    DegenerateForce,
    #[error("unsupported configuration: {0}")]
    Unsupported(&'static str),
    #[error("force {g} at t = {t} is outside the achievable range [-{max}, {max}]")]
    Unachievable { t: f64, g: f64, max: f64 },
    #[error("invalid input: {0}")]
    BadInput(&'static str),
    #[error("final error does not decrease with delta: {errors:?}")]
    NotConverging { errors: Vec<(f64, f64)> },
}

pub type Result<T> = core::result::Result<T, ControlError>;

/// Extreme values of the total interaction force on `p2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceBounds {
    pub k_minus: f64,
    pub k_plus: f64,
    pub k_star: f64,
}

/// `(min, max)` of `W'` over the circle.
fn derivative_range(w: &TrigPotential) -> (f64, f64) {
    if w.is_zero() {
        return (0.0, 0.0);
    }
    let kmax = w.harmonics().iter().map(|h| h.k).max().unwrap_or(1) as usize;
    let n = 512 * kmax;
    let step = TAU / n as f64;
    let vals: Vec<f64> = (0..n).map(|i| w.force(i as f64 * step)).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let (a, b, c) = (vals[(i + n - 1) % n], vals[i], vals[(i + 1) % n]);
        let s = i as f64 * step;
        if b <= a && b <= c {
            lo = lo.min(golden(|x| w.force(x), s - step, s + step));
        }
        if b >= a && b >= c {
            hi = hi.max(-golden(|x| -w.force(x), s - step, s + step));
        }
    }
    (lo, hi)
}

/// Minimum value of a unimodal `f` on `[a, b]`.
fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (fmath::sqrt(5.0) - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    f1.min(f2)
}

pub fn force_bounds(params: &ChainParams) -> Result<ForceBounds> {
    let r1 = derivative_range(&params.w[0]);
    let r3 = derivative_range(&params.w[1]);
    let k_plus = -(r1.0 + r3.0);
    let k_minus = -(r1.1 + r3.1);
    if k_plus == 0.0 && k_minus == 0.0 {
        return Err(ControlError::DegenerateForce);
    }
    Ok(ForceBounds { k_minus, k_plus, k_star: k_plus.abs().min(k_minus.abs()) })
}

/// One piece of constant force on the middle rotor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub g: f64,
}

/// Piecewise-constant steering of `(q2, p2)` with `u2 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePlan {
    pub segments: Vec<Segment>,
    pub theta: f64,
    pub delta: f64,
    pub a: f64,
    pub start: (f64, f64),
    pub target: (f64, f64),
}

impl PiecewisePlan {
    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Switching times, including 0 and the final time.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let mut t = 0.0;
        out.push(t);
        for s in &self.segments {
            t += s.duration;
            out.push(t);
        }
        out
    }

    /// Index of the segment active at `t` (right-continuous).
    fn segment_index(&self, t: f64) -> usize {
        let mut end = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            end += s.duration;
            if t < end {
                return i;
            }
        }
        self.segments.len().saturating_sub(1)
    }

    pub fn g_at(&self, t: f64) -> f64 {
        self.segments.get(self.segment_index(t)).map_or(0.0, |s| s.g)
    }

    /// Exact `(q2, p2, g)` at time `t`; `q2` is not reduced mod 2pi.
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        let (mut q, mut p) = self.start;
        let mut t0 = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            let last = i + 1 == self.segments.len();
            if t < t0 + s.duration || last {
                let d = t - t0;
                return (q + p * d + 0.5 * s.g * d * d, p + s.g * d, s.g);
            }
            q += p * s.duration + 0.5 * s.g * s.duration * s.duration;
            p += s.g * s.duration;
            t0 += s.duration;
        }
        (q + p * (t - t0), p, 0.0)
    }

    /// Final `(q2, p2)` by exact piecewise-quadratic integration.
    pub fn replay(&self) -> (f64, f64) {
        let (mut q, mut p) = self.start;
        for s in &self.segments {
            q += p * s.duration + 0.5 * s.g * s.duration * s.duration;
            p += s.g * s.duration;
        }
        (q, p)
    }
}

/// Distance between two angles on the circle.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = fmath::wrap_angle(a - b);
    d.min(TAU - d)
}

pub fn plan_middle(
    params: &ChainParams,
    from: (f64, f64),
    to: (f64, f64),
    bounds: &ForceBounds,
) -> Result<PiecewisePlan> {
    if !params.u[1].is_zero() {
        return Err(ControlError::Unsupported("pinning U2 must vanish"));
    }
    if ![from.0, from.1, to.0, to.1].iter().all(|v| v.is_finite()) {
        return Err(ControlError::BadInput("non-finite endpoint"));
    }
    if !(bounds.k_minus < 0.0 && bounds.k_plus > 0.0) {
        return Err(ControlError::DegenerateForce);
    }
    let dp = to.1 - from.1;
    let push = if dp >= 0.0 { bounds.k_plus } else { bounds.k_minus };
    let theta = dp / push;
    let q_theta = from.0 + from.1 * theta + 0.5 * push * theta * theta;

    let delta = fmath::sqrt(TAU / bounds.k_star) * (1.0 + 1e-9);
    let a = fmath::wrap_angle(to.0 - q_theta - 2.0 * delta * to.1) / (delta * delta);

    let mut segments = Vec::with_capacity(3);
    if theta > 0.0 {
        segments.push(Segment { duration: theta, g: push });
    }
    segments.push(Segment { duration: delta, g: a });
    segments.push(Segment { duration: delta, g: -a });
    Ok(PiecewisePlan { segments, theta, delta, a, start: from, target: to })
}

/// Coefficients of the quintic matching value, slope and curvature at both
/// ends of `[0, len]`.
pub fn quintic_hermite(len: f64, y0: [f64; 3], y1: [f64; 3]) -> [f64; 6] {
    let (l, l2) = (len, len * len);
    let dy = y1[0] - y0[0];
    let (v0, v1, a0, a1) = (y0[1], y1[1], y0[2], y1[2]);
    [
        y0[0],
        v0,
        0.5 * a0,
        (20.0 * dy - (8.0 * v1 + 12.0 * v0) * l - (3.0 * a0 - a1) * l2) / (2.0 * l2 * l),
        (-30.0 * dy + (14.0 * v1 + 16.0 * v0) * l + (3.0 * a0 - 2.0 * a1) * l2) / (2.0 * l2 * l2),
        (12.0 * dy - 6.0 * (v1 + v0) * l - (a0 - a1) * l2) / (2.0 * l2 * l2 * l),
    ]
}

/// Value, first and second derivative of a polynomial at `x`.
fn poly_eval(c: &[f64; 6], x: f64) -> [f64; 3] {
    let mut v = [0.0; 3];
    for i in (0..6).rev() {
        v[2] = v[2] * x + 2.0 * v[1];
        v[1] = v[1] * x + v[0];
        v[0] = v[0] * x + c[i];
    }
    v
}

/// Interpolating window: on `[t0, t1]` bond `b` follows `coef[b]` in `t - t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bridge {
    pub t0: f64,
    pub t1: f64,
    pub coef: [[f64; 6]; 2],
}

/// Closed-form inversion data for one single-harmonic bond:
/// `W_b'(s) = amp sin(k s + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BondShape {
    k: f64,
    amp: f64,
    phase: f64,
}

fn bond_shape(w: &TrigPotential) -> Result<BondShape> {
    if w.is_zero() {
        return Ok(BondShape { k: 1.0, amp: 0.0, phase: 0.0 });
    }
    let live: Vec<_> = w.harmonics().iter().filter(|h| !(num_traits::Zero::is_zero(&h.cos) && num_traits::Zero::is_zero(&h.sin))).collect();
    if live.len() != 1 {
        return Err(ControlError::Unsupported("outer synthesis needs single-harmonic W_b"));
    }
    use num_traits::ToPrimitive;
    let h = live[0];
    let (c, s) = (h.cos.to_f64().unwrap_or(f64::NAN), h.sin.to_f64().unwrap_or(f64::NAN));
    let k = h.k as f64;
    Ok(BondShape { k, amp: k * fmath::sqrt(c * c + s * s), phase: fmath::atan2(s, -c) })
}

/// Prescribed outer-rotor angles realizing a middle-rotor plan.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterTrajectories {
    pub plan: PiecewisePlan,
    pub bridges: Vec<Bridge>,
    shapes: [BondShape; 2],
    /// Per-bond lift `2 pi m_b` added to the closed-form angles.
    lift: [f64; 2],
}

impl OuterTrajectories {
    fn total_amp(&self) -> f64 {
        self.shapes[0].amp + self.shapes[1].amp
    }

    /// Bond offset `s_b = q2 - q_b*` that makes the bond forces sum to `g`.
    fn offset(&self, b: usize, g: f64) -> f64 {
        let sh = self.shapes[b];
        if sh.amp == 0.0 {
            return 0.0;
        }
        let r = (g / self.total_amp()).clamp(-1.0, 1.0);
        (-fmath::asin(r) - sh.phase) / sh.k
    }

    /// Closed-form `q_b*(t)` with its first two derivatives (no bridges).
    pub fn closed_form(&self, b: usize, t: f64) -> [f64; 3] {
        let (q2, p2, g) = self.plan.state_at(t);
        [q2 - self.offset(b, g) + self.lift[b], p2, g]
    }

    /// Same, but using the segment that ends at `t`.
    fn closed_form_left(&self, b: usize, t: f64) -> [f64; 3] {
        let i = self.plan.segment_index(t);
        let starts = self.plan.switch_times();
        if i > 0 && t <= starts[i] {
            let g = self.plan.segments[i - 1].g;
            let (q2, p2, _) = self.plan.state_at(t);
            return [q2 - self.offset(b, g) + self.lift[b], p2, g];
        }
        self.closed_form(b, t)
    }

    pub fn bridge_at(&self, t: f64) -> Option<&Bridge> {
        self.bridges.iter().find(|br| t >= br.t0 && t <= br.t1)
    }

    /// `(q_b, q_b', q_b'')` of the prescribed trajectory; `b` is 0 or 1.
    pub fn position(&self, b: usize, t: f64) -> [f64; 3] {
        match self.bridge_at(t) {
            Some(br) => poly_eval(&br.coef[b], t - br.t0),
            None => self.closed_form(b, t),
        }
    }

    /// The control `f_b = q_b''`.
    pub fn control(&self, b: usize, t: f64) -> f64 {
        self.position(b, t)[2]
    }

    pub fn bridge_length(&self) -> f64 {
        self.bridges.iter().map(|b| b.t1 - b.t0).sum()
    }

    /// Sorted times where the prescribed motion may be non-smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = self.plan.switch_times();
        for br in &self.bridges {
            out.push(br.t0);
            out.push(br.t1);
        }
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        out
    }

    /// Force exerted on `p2` when the middle rotor sits at `q2`.
    pub fn bond_force(&self, params: &ChainParams, q2: f64, t: f64) -> f64 {
        -(params.w[0].force(q2 - self.position(0, t)[0]) + params.w[1].force(q2 - self.position(1, t)[0]))
    }
}

pub fn synthesize_outer(
    plan: &PiecewisePlan,
    params: &ChainParams,
    delta: f64,
    boundary: (&State, &State),
) -> Result<OuterTrajectories> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ControlError::BadInput("delta must be positive"));
    }
    let shapes = [bond_shape(&params.w[0])?, bond_shape(&params.w[1])?];
    let total = shapes[0].amp + shapes[1].amp;
    if total == 0.0 {
        return Err(ControlError::DegenerateForce);
    }
    let mut t = 0.0;
    for s in &plan.segments {
        if s.g.abs() > total * (1.0 + 1e-9) {
            return Err(ControlError::Unachievable { t, g: s.g, max: total });
        }
        t += s.duration;
    }
    let end = plan.total_time();

    // Bridge windows: one at each end, one centred on every interior switch;
    // overlapping windows are merged.
    let switches = plan.switch_times();
    let n = switches.len();
    let len = (delta / n as f64).min(end);
    let mut windows: Vec<(f64, f64)> = Vec::with_capacity(n);
    windows.push((0.0, len));
    for &s in &switches[1..n - 1] {
        windows.push(((s - 0.5 * len).max(0.0), (s + 0.5 * len).min(end)));
    }
    windows.push(((end - len).max(0.0), end));
    windows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for w in windows {
        match merged.last_mut() {
            Some(last) if w.0 <= last.1 => last.1 = last.1.max(w.1),
            _ => merged.push(w),
        }
    }

    let mut out = OuterTrajectories { plan: plan.clone(), bridges: Vec::new(), shapes, lift: [0.0; 2] };
    let (xi, xf) = boundary;
    let slot = [0usize, 2];
    // Choose lifts so the first bridge travels less than half a turn beyond
    // its free motion.
    let first_end = merged[0].1;
    for b in 0..2 {
        let free = xi.q[slot[b]] + xi.p[slot[b]] * first_end;
        let there = out.closed_form(b, first_end)[0];
        out.lift[b] = TAU * fmath::floor((free - there) / TAU + 0.5);
    }
    for &(t0, t1) in &merged {
        let mut coef = [[0.0; 6]; 2];
        for b in 0..2 {
            let left = if t0 == 0.0 { [xi.q[slot[b]], xi.p[slot[b]], 0.0] } else { out.closed_form_left(b, t0) };
            let right = if t1 >= end {
                let q = xf.q[slot[b]];
                let near = left[0] + left[1] * (t1 - t0);
                [q + TAU * fmath::floor((near - q) / TAU + 0.5), xf.p[slot[b]], 0.0]
            } else {
                out.closed_form(b, t1)
            };
            coef[b] = quintic_hermite(t1 - t0, left, right);
        }
        out.bridges.push(Bridge { t0, t1, coef });
    }
    Ok(out)
}

/// Result of integrating the controlled system for one `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRun {
    pub delta: f64,
    pub bridge_length: f64,
    pub error: f64,
    pub final_state: State,
    pub max_control: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlReport {
    pub bounds: ForceBounds,
    pub plan: PiecewisePlan,
    pub t_star: f64,
    pub runs: Vec<DeltaRun>,
    /// Largest tested `delta` from which every smaller one reaches `eps`.
    pub delta0: Option<f64>,
    pub reached: bool,
}

/// Distance in the phase space with angles on the circle.
pub fn state_distance(a: &State, b: &State) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let dq = angle_distance(a.q[i], b.q[i]);
        let dp = a.p[i] - b.p[i];
        s += dq * dq + dp * dp;
    }
    fmath::sqrt(s)
}

/// Integrate the controlled system from `x0` over `[0, T]` with the
/// classical fourth-order Runge-Kutta method, restarting at every
/// breakpoint. Returns the final state and `max |f_b|` seen.
pub fn integrate_controlled(params: &ChainParams, outer: &OuterTrajectories, x0: &State, h: f64) -> (State, f64) {
    integrate_controlled_with(params, outer, x0, h, &mut |_, _| {})
}

/// As [`integrate_controlled`], calling `obs(t, x)` after every step.
pub fn integrate_controlled_with(
    params: &ChainParams,
    outer: &OuterTrajectories,
    x0: &State,
    h: f64,
    obs: &mut dyn FnMut(f64, &State),
) -> (State, f64) {
    let rhs = |t: f64, y: &[f64; 6]| -> ([f64; 6], f64) {
        let f1 = outer.control(0, t);
        let f3 = outer.control(1, t);
        let p2dot = -(params.w[0].force(y[1] - y[0]) + params.w[1].force(y[1] - y[2]));
        ([y[3], y[4], y[5], f1, p2dot, f3], f1.abs().max(f3.abs()))
    };
    let mut y = [x0.q[0], x0.q[1], x0.q[2], x0.p[0], x0.p[1], x0.p[2]];
    let mut fmax: f64 = 0.0;
    let cuts = outer.breakpoints();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let n = fmath::ceil((b - a) / h).max(1.0) as usize;
        let dt = (b - a) / n as f64;
        // Evaluate strictly inside the piece so one-sided data is used.
        let eps = 1e-12 * (1.0 + b.abs());
        let clampt = |t: f64| t.clamp(a + eps, b - eps);
        for i in 0..n {
            let t = a + i as f64 * dt;
            let (k1, m1) = rhs(clampt(t), &y);
            let y2 = core::array::from_fn(|j| y[j] + 0.5 * dt * k1[j]);
            let (k2, m2) = rhs(clampt(t + 0.5 * dt), &y2);
            let y3 = core::array::from_fn(|j| y[j] + 0.5 * dt * k2[j]);
            let (k3, _) = rhs(clampt(t + 0.5 * dt), &y3);
            let y4 = core::array::from_fn(|j| y[j] + dt * k3[j]);
            let (k4, m4) = rhs(clampt(t + dt), &y4);
            for j in 0..6 {
                y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            fmax = fmax.max(m1).max(m2).max(m4);
            obs(a + (i + 1) as f64 * dt, &State::new([y[0], y[1], y[2]], [y[3], y[4], y[5]]));
        }
    }
    (State::new([y[0], y[1], y[2]], [y[3], y[4], y[5]]), fmax)
}

/// Plan, synthesize and replay for each `delta`, largest first.
///
/// The final error must be non-increasing along the list (up to `1e-9`,
/// the integrator floor at the default step).
pub fn verify_controllability(
    params: &ChainParams,
    xi: &State,
    xf: &State,
    eps: f64,
    deltas: &[f64],
    h: f64,
) -> Result<ControlReport> {
    if deltas.is_empty() || !(h > 0.0) {
        return Err(ControlError::BadInput("need at least one delta and a positive step"));
    }
    let bounds = force_bounds(params)?;
    let plan = plan_middle(params, (xi.q[1], xi.p[1]), (xf.q[1], xf.p[1]), &bounds)?;
    let mut ds: Vec<f64> = deltas.to_vec();
    ds.sort_by(|a, b| b.total_cmp(a));
    let mut runs = Vec::with_capacity(ds.len());
    for &delta in &ds {
        let outer = synthesize_outer(&plan, params, delta, (xi, xf))?;
        let (x, fmax) = integrate_controlled(params, &outer, xi, h);
        runs.push(DeltaRun {
            delta,
            bridge_length: outer.bridge_length(),
            error: state_distance(&x, xf),
            final_state: x,
            max_control: fmax,
        });
    }
    if runs.windows(2).any(|w| w[1].error > w[0].error + 1e-9) {
        return Err(ControlError::NotConverging { errors: runs.iter().map(|r| (r.delta, r.error)).collect() });
    }
    let mut delta0 = None;
    for r in runs.iter().rev() {
        if r.error < eps {
            delta0 = Some(r.delta);
        } else {
            break;
        }
    }
    let reached = runs.last().is_some_and(|r| r.error < eps);
    Ok(ControlReport { bounds, t_star: plan.total_time(), plan, runs, delta0, reached })
}
