//! Time integration of the chain with reproducible noise.
//!
//! Two schemes are offered. Euler-Maruyama is the baseline. The default is a
//! Strang splitting `O(h/2) B(h/2) A(h) B(h/2) O(h/2)`: `O` is the exact
//! Ornstein-Uhlenbeck flow of `dp_b = (tau_b - gamma_b p_b) dt + noise`,
//! `B` a kick by the conservative forces and `A` free rotation. Inside a
//! trajectory the trailing `O(h/2)` of one step and the leading one of the
//! next are fused into a single exact `O(h)`, so a step costs two normal
//! draws; the law of the recorded states is that of repeated single steps.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::fmath;
use crate::model::{Model, State};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SdeError {
    #[error("state became non-finite at step {step}; the time step is probably too large")]
    NonFinite { step: u64 },
    #[error("invalid integrator spec: {0}")]
    BadSpec(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    EulerMaruyama,
    #[default]
    Splitting,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    pub scheme: Scheme,
    pub h: f64,
    pub total_time: f64,
    /// Record every `record_stride` steps.
    pub record_stride: u64,
}

impl IntegratorSpec {
    pub fn new(scheme: Scheme, h: f64, total_time: f64, record_stride: u64) -> Result<Self, SdeError> {
        let spec = IntegratorSpec { scheme, h, total_time, record_stride };
        spec.validate()?;
        Ok(spec)
    }

    /// Splitting, `h = 1e-3`, every step recorded.
    pub fn standard(total_time: f64) -> Self {
        IntegratorSpec { scheme: Scheme::Splitting, h: 1e-3, total_time, record_stride: 1 }
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(SdeError::BadSpec("h must be positive"));
        }
        if !(self.total_time >= 0.0 && self.total_time.is_finite()) {
            return Err(SdeError::BadSpec("total time must be non-negative"));
        }
        if self.record_stride == 0 {
            return Err(SdeError::BadSpec("record stride must be >= 1"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> u64 {
        let n = self.total_time / self.h;
        (n + 0.5) as u64
    }

    /// Time between recorded states.
    pub fn record_dt(&self) -> f64 {
        self.h * self.record_stride as f64
    }
}

/// Master seed; trajectory `i` draws from ChaCha stream `i` of that seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub master_seed: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64) -> Self {
        RngSpec { master_seed }
    }

    pub fn stream(&self, index: u64) -> NoiseStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index);
        NoiseStream { rng }
    }
}

/// Independent source of standard normals and uniforms.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// `(B1 increment, B3 increment)` in that order.
    #[inline]
    pub fn pair(&mut self) -> [f64; 2] {
        let a = self.normal();
        [a, self.normal()]
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn angle(&mut self) -> f64 {
        self.uniform() * fmath::TAU
    }
}

/// Exact OU transition `p -> decay p + shift + sd xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OuCoef {
    decay: f64,
    shift: f64,
    sd: f64,
}

impl OuCoef {
    fn new(gamma: f64, temp: f64, tau: f64, dt: f64) -> Self {
        let decay = fmath::exp(-gamma * dt);
        let one_minus = -fmath::expm1(-gamma * dt);
        let one_minus_sq = -fmath::expm1(-2.0 * gamma * dt);
        OuCoef { decay, shift: one_minus * tau / gamma, sd: fmath::sqrt(temp * one_minus_sq) }
    }

    #[inline]
    fn apply(&self, p: f64, xi: f64) -> f64 {
        self.decay * p + self.shift + self.sd * xi
    }
}

/// Precomputed step constants for one model and time step.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    model: &'a Model,
    h: f64,
    sqrt_h: f64,
    half: [OuCoef; 2],
    full: [OuCoef; 2],
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a Model, h: f64) -> Self {
        let n = model.num();
        let ou = |b: usize, dt: f64| OuCoef::new(n.gamma[b], n.temp[b], n.tau[b], dt);
        Stepper {
            model,
            h,
            sqrt_h: fmath::sqrt(h),
            half: [ou(0, 0.5 * h), ou(1, 0.5 * h)],
            full: [ou(0, h), ou(1, h)],
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// One Euler-Maruyama step.
    #[inline]
    pub fn em_step(&self, x: &mut State, xi: [f64; 2]) {
        let (dq, dp) = self.model.sde_drift(x);
        let amp = self.model.num().amp;
        for i in 0..3 {
            x.q[i] = fmath::wrap_angle(x.q[i] + self.h * dq[i]);
            x.p[i] += self.h * dp[i];
        }
        x.p[0] += amp[0] * self.sqrt_h * xi[0];
        x.p[2] += amp[1] * self.sqrt_h * xi[1];
    }

    /// One splitting step; `xi_in` drives the leading OU half step and
    /// `xi_out` the trailing one.
    #[inline]
    pub fn split_step(&self, x: &mut State, xi_in: [f64; 2], xi_out: [f64; 2]) {
        self.ou(x, false, xi_in);
        let f = self.model.forces(&x.q);
        self.verlet(x, f);
        self.ou(x, false, xi_out);
    }

    #[inline]
    fn ou(&self, x: &mut State, full: bool, xi: [f64; 2]) {
        let c = if full { &self.full } else { &self.half };
        x.p[0] = c[0].apply(x.p[0], xi[0]);
        x.p[2] = c[1].apply(x.p[2], xi[1]);
    }

    /// Kick-drift-kick; `f` are the forces at the current angles. Returns the
    /// forces at the new angles.
    #[inline]
    fn verlet(&self, x: &mut State, f: [f64; 3]) -> [f64; 3] {
        let hh = 0.5 * self.h;
        for i in 0..3 {
            x.p[i] += hh * f[i];
            x.q[i] = fmath::wrap_angle(x.q[i] + self.h * x.p[i]);
        }
        let g = self.model.forces(&x.q);
        for i in 0..3 {
            x.p[i] += hh * g[i];
        }
        g
    }
}

/// One step of the chosen scheme, drawing its noise from `noise`
/// (two normals for Euler-Maruyama, four for a stand-alone splitting step).
pub fn step(x: &State, model: &Model, spec: &IntegratorSpec, noise: &mut NoiseStream) -> Result<State, SdeError> {
    let st = Stepper::new(model, spec.h);
    let mut y = *x;
    match spec.scheme {
        Scheme::EulerMaruyama => st.em_step(&mut y, noise.pair()),
        Scheme::Splitting => {
            let a = noise.pair();
            st.split_step(&mut y, a, noise.pair())
        }
    }
    if y.is_finite() {
        Ok(y)
    } else {
        Err(SdeError::NonFinite { step: 1 })
    }
}

/// Receives the recorded states of a trajectory.
pub trait Observer {
    fn observe(&mut self, t: f64, x: &State);
}

impl<F: FnMut(f64, &State)> Observer for F {
    fn observe(&mut self, t: f64, x: &State) {
        self(t, x)
    }
}

/// Keeps every recorded state.
#[derive(Debug, Clone, Default)]
pub struct Recorder {
    pub times: alloc::vec::Vec<f64>,
    pub states: alloc::vec::Vec<State>,
}

impl Observer for Recorder {
    fn observe(&mut self, t: f64, x: &State) {
        self.times.push(t);
        self.states.push(*x);
    }
}

/// Integrate from `x0`, reporting `t = 0` and every `record_stride`-th
/// step. Returns the final state.
pub fn simulate<O: Observer + ?Sized>(
    x0: State,
    model: &Model,
    spec: &IntegratorSpec,
    noise: &mut NoiseStream,
    obs: &mut O,
) -> Result<State, SdeError> {
    spec.validate()?;
    let st = Stepper::new(model, spec.h);
    let mut x = x0.wrapped();
    obs.observe(0.0, &x);
    let n = spec.n_steps();
    let stride = spec.record_stride;
    match spec.scheme {
        Scheme::EulerMaruyama => {
            for k in 1..=n {
                st.em_step(&mut x, noise.pair());
                if !x.is_finite() {
                    return Err(SdeError::NonFinite { step: k });
                }
                if k % stride == 0 {
                    obs.observe(k as f64 * spec.h, &x);
                }
            }
        }
        Scheme::Splitting => {
            let mut f = model.forces(&x.q);
            let mut open = false;
            for k in 1..=n {
                if !open {
                    st.ou(&mut x, false, noise.pair());
                }
                f = st.verlet(&mut x, f);
                let record = k % stride == 0;
                if record || k == n {
                    st.ou(&mut x, false, noise.pair());
                    open = false;
                } else {
                    st.ou(&mut x, true, noise.pair());
                    open = true;
                }
                if !(x.p[0].is_finite() && x.p[1].is_finite() && x.p[2].is_finite()) {
                    return Err(SdeError::NonFinite { step: k });
                }
                if record {
                    obs.observe(k as f64 * spec.h, &x);
                }
            }
        }
    }
    Ok(x)
}

/// Angles uniform, outer momenta from their bath Gaussians, `p2` given.
pub fn bath_initial(model: &Model, p2: f64, noise: &mut NoiseStream) -> State {
    let t = model.num().temp;
    let q = [noise.angle(), noise.angle(), noise.angle()];
    let z = noise.pair();
    State::new(q, [fmath::sqrt(t[0]) * z[0], p2, fmath::sqrt(t[1]) * z[1]])
}

/// Run `n_traj` independent trajectories sequentially, trajectory `i` on
/// stream `i`; results come back in index order.
pub fn ensemble<O, S, M>(
    model: &Model,
    spec: &IntegratorSpec,
    rng: &RngSpec,
    n_traj: u64,
    mut x0: S,
    mut make_obs: M,
) -> Result<alloc::vec::Vec<(O, State)>, SdeError>
where
    O: Observer,
    S: FnMut(u64, &mut NoiseStream) -> State,
    M: FnMut(u64) -> O,
{
    (0..n_traj)
        .map(|i| run_one(model, spec, rng, i, &mut x0, &mut make_obs))
        .collect()
}

/// Trajectory `i` of an ensemble.
pub fn run_one<O, S, M>(
    model: &Model,
    spec: &IntegratorSpec,
    rng: &RngSpec,
    i: u64,
    x0: &mut S,
    make_obs: &mut M,
) -> Result<(O, State), SdeError>
where
    O: Observer,
    S: FnMut(u64, &mut NoiseStream) -> State,
    M: FnMut(u64) -> O,
{
    let mut noise = rng.stream(i);
    let start = x0(i, &mut noise);
    let mut obs = make_obs(i);
    let end = simulate(start, model, spec, &mut noise, &mut obs)?;
    Ok((obs, end))
}

/// Linear forced OU `dp = kappa sin(omega t) dt - gamma p dt + sqrt(2 gamma T) dB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallModel {
    pub omega: f64,
    pub gamma: f64,
    pub temp: f64,
    pub kappa: f64,
    pub p0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallMoments {
    pub mean: f64,
    pub variance: f64,
    pub second: f64,
}

impl SmallModel {
    /// Exact mean and second moment at time `t`.
    pub fn moments(&self, t: f64) -> SmallMoments {
        let SmallModel { omega, gamma, temp, kappa, p0 } = *self;
        let den = gamma * gamma + omega * omega;
        let (s, c) = fmath::sin_cos(omega * t);
        let periodic = kappa * (gamma * s - omega * c) / den;
        let start = -kappa * omega / den;
        let mean = periodic + (p0 - start) * fmath::exp(-gamma * t);
        let variance = -fmath::expm1(-2.0 * gamma * t) * temp;
        SmallMoments { mean, variance, second: mean * mean + variance }
    }

    /// One path to time `t` by exact OU half steps around a midpoint kick.
    pub fn sample(&self, t: f64, h: f64, noise: &mut NoiseStream) -> f64 {
        let n = (t / h + 0.5) as u64;
        let half = OuCoef::new(self.gamma, self.temp, 0.0, 0.5 * h);
        let mut p = self.p0;
        for k in 0..n {
            p = half.apply(p, noise.normal());
            p += h * self.kappa * fmath::sin(self.omega * (k as f64 + 0.5) * h);
            p = half.apply(p, noise.normal());
        }
        p
    }
}
