//! The rotor chain: potentials, parameters, Hamiltonian, forces and the
//! generator of the diffusion.
//!
//! Rotor indices run 1, 2, 3; the outer rotors b = 1, 3 are stored at array
//! slots 0 and 1 of the per-bath arrays (`gamma`, `temp`, `tau`, `w`).

use alloc::vec::Vec;

use num_traits::{ToPrimitive, Zero};

use crate::fmath;
use crate::phasepoly::{int, PhasePoly, Rational, Var};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("coupling rate gamma{0} must be positive")]
    NonPositiveGamma(u8),
    #[error("temperature T{0} must be positive")]
    NonPositiveTemperature(u8),
    #[error("harmonic index k must be >= 1 (potentials have zero mean)")]
    ZeroHarmonic,
    #[error("both interaction potentials vanish; the middle rotor is decoupled")]
    DegenerateCoupling,
}

/// One harmonic `a cos(k s) + b sin(k s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Harmonic {
    pub k: u32,
    pub cos: Rational,
    pub sin: Rational,
}

/// A zero-mean trigonometric polynomial on the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPotential {
    harmonics: Vec<Harmonic>,
    numeric: Vec<(f64, f64, f64)>,
}

impl TrigPotential {
    pub fn new(harmonics: Vec<Harmonic>) -> Result<Self, ModelError> {
        if harmonics.iter().any(|h| h.k == 0) {
            return Err(ModelError::ZeroHarmonic);
        }
        let numeric = harmonics
            .iter()
            .map(|h| (h.k as f64, h.cos.to_f64().unwrap_or(f64::NAN), h.sin.to_f64().unwrap_or(f64::NAN)))
            .collect();
        Ok(TrigPotential { harmonics, numeric })
    }

    pub fn zero() -> Self {
        TrigPotential { harmonics: Vec::new(), numeric: Vec::new() }
    }

    /// `-kappa cos(s)`, whose force is `kappa sin(s)`.
    pub fn neg_cos(kappa: Rational) -> Self {
        TrigPotential::new(alloc::vec![Harmonic { k: 1, cos: -kappa, sin: Rational::zero() }])
            .expect("k = 1")
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    pub fn is_zero(&self) -> bool {
        self.harmonics.iter().all(|h| h.cos.is_zero() && h.sin.is_zero())
    }

    pub fn scaled(&self, r: &Rational) -> Self {
        TrigPotential::new(
            self.harmonics
                .iter()
                .map(|h| Harmonic { k: h.k, cos: &h.cos * r, sin: &h.sin * r })
                .collect(),
        )
        .expect("same harmonics")
    }

    /// The derivative `W'` as a trigonometric polynomial.
    pub fn derivative(&self) -> Self {
        TrigPotential::new(
            self.harmonics
                .iter()
                .map(|h| {
                    let k = int(h.k as i64);
                    Harmonic { k: h.k, cos: &h.sin * &k, sin: -(&h.cos * &k) }
                })
                .collect(),
        )
        .expect("same harmonics")
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        self.numeric
            .iter()
            .map(|&(k, a, b)| {
                let (sn, cs) = fmath::sin_cos(k * s);
                a * cs + b * sn
            })
            .sum()
    }

    /// `W'(s)`.
    #[inline]
    pub fn force(&self, s: f64) -> f64 {
        self.numeric
            .iter()
            .map(|&(k, a, b)| {
                if b == 0.0 {
                    -k * a * fmath::sin(k * s)
                } else if a == 0.0 {
                    k * b * fmath::cos(k * s)
                } else {
                    let (sn, cs) = fmath::sin_cos(k * s);
                    k * (b * cs - a * sn)
                }
            })
            .sum()
    }

    /// `W''(s)`.
    #[inline]
    pub fn force_prime(&self, s: f64) -> f64 {
        self.numeric
            .iter()
            .map(|&(k, a, b)| {
                let (sn, cs) = fmath::sin_cos(k * s);
                -k * k * (a * cs + b * sn)
            })
            .sum()
    }

    /// Symbolic `W(wave . q)`.
    pub fn poly(&self, wave: [i32; 3]) -> PhasePoly {
        let mut out = PhasePoly::zero();
        for h in &self.harmonics {
            let k = h.k as i32;
            let kw = [k * wave[0], k * wave[1], k * wave[2]];
            out += &PhasePoly::cos_wave(kw, h.cos.clone());
            out += &PhasePoly::sin_wave(kw, h.sin.clone());
        }
        out
    }

    /// Exact mean of `W^2` over the circle.
    pub fn mean_square(&self) -> Rational {
        let sq = &self.poly([1, 0, 0]) * &self.poly([1, 0, 0]);
        sq.coeff(&crate::phasepoly::Monomial::ONE).map(|c| c.re.clone()).unwrap_or_else(Rational::zero)
    }

    /// Largest `|a| + |b|` summed over harmonics, a bound on `|W|`.
    pub fn sup_bound(&self) -> f64 {
        self.numeric.iter().map(|&(_, a, b)| fmath::sqrt(a * a + b * b)).sum()
    }

    /// Bound on `|W'|`.
    pub fn force_bound(&self) -> f64 {
        self.numeric.iter().map(|&(k, a, b)| k * fmath::sqrt(a * a + b * b)).sum()
    }
}

/// Physical parameters of the chain, kept as exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub gamma: [Rational; 2],
    pub temp: [Rational; 2],
    pub tau: [Rational; 2],
    /// Interaction potentials `W1(q2 - q1)`, `W3(q2 - q3)`.
    pub w: [TrigPotential; 2],
    /// Pinning potentials `U1, U2, U3`.
    pub u: [TrigPotential; 3],
}

impl ChainParams {
    /// `U = 0`, `W1 = W3 = -cos`, `gamma1 = gamma3 = 1`, `tau1 = 0`.
    pub fn benchmark(t1: Rational, t3: Rational, tau3: Rational) -> Self {
        ChainParams {
            gamma: [int(1), int(1)],
            temp: [t1, t3],
            tau: [int(0), tau3],
            w: [TrigPotential::neg_cos(int(1)), TrigPotential::neg_cos(int(1))],
            u: [TrigPotential::zero(), TrigPotential::zero(), TrigPotential::zero()],
        }
    }

    /// Equal temperatures, no torques: the Gibbs measure is invariant.
    pub fn equilibrium(t: Rational) -> Self {
        ChainParams::benchmark(t.clone(), t, int(0))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, b) in [1u8, 3].into_iter().enumerate() {
            if self.gamma[i] <= Rational::zero() {
                return Err(ModelError::NonPositiveGamma(b));
            }
            if self.temp[i] <= Rational::zero() {
                return Err(ModelError::NonPositiveTemperature(b));
            }
        }
        if self.w.iter().all(TrigPotential::is_zero) {
            return Err(ModelError::DegenerateCoupling);
        }
        Ok(())
    }

    /// `alpha = sum_b gamma_b <W_b^2>`, the coefficient of the slow drift.
    pub fn alpha(&self) -> Rational {
        &self.gamma[0] * self.w[0].mean_square() + &self.gamma[1] * self.w[1].mean_square()
    }
}

/// Float copies of the bath parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumParams {
    pub gamma: [f64; 2],
    pub temp: [f64; 2],
    pub tau: [f64; 2],
    /// Noise amplitudes `sqrt(2 gamma_b T_b)`.
    pub amp: [f64; 2],
}

/// A point `(q, p)` of phase space; angles live in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub q: [f64; 3],
    pub p: [f64; 3],
}

impl State {
    pub fn new(q: [f64; 3], p: [f64; 3]) -> Self {
        State { q, p }
    }

    /// Reduce every angle to `[0, 2pi)`.
    pub fn wrapped(mut self) -> Self {
        for q in &mut self.q {
            *q = fmath::wrap_angle(*q);
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }
}

/// Wave vectors of the bond arguments `q2 - q1` and `q2 - q3`.
pub const BOND_WAVES: [[i32; 3]; 2] = [[-1, 1, 0], [0, 1, -1]];
const SITE_WAVES: [[i32; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

/// Validated parameters together with their float and symbolic images.
#[derive(Debug, Clone)]
pub struct Model {
    params: ChainParams,
    num: NumParams,
    hamiltonian: PhasePoly,
    big_phi2: PhasePoly,
    forces: [PhasePoly; 3],
}

impl Model {
    pub fn new(params: ChainParams) -> Result<Self, ModelError> {
        params.validate()?;
        let f = |r: &Rational| r.to_f64().unwrap_or(f64::NAN);
        let gamma = [f(&params.gamma[0]), f(&params.gamma[1])];
        let temp = [f(&params.temp[0]), f(&params.temp[1])];
        let num = NumParams {
            gamma,
            temp,
            tau: [f(&params.tau[0]), f(&params.tau[1])],
            amp: [fmath::sqrt(2.0 * gamma[0] * temp[0]), fmath::sqrt(2.0 * gamma[1] * temp[1])],
        };

        let bond = |b: usize| params.w[b].poly(BOND_WAVES[b]);
        let site = |i: usize| params.u[i].poly(SITE_WAVES[i]);
        let big_phi = [&bond(0) + &site(0), &(&bond(0) + &bond(1)) + &site(1), &bond(1) + &site(2)];
        let forces = [
            -big_phi[0].partial(Var::Q1),
            -big_phi[1].partial(Var::Q2),
            -big_phi[2].partial(Var::Q3),
        ];
        let mut hamiltonian = &(&bond(0) + &bond(1)) + &(&(&site(0) + &site(1)) + &site(2));
        for v in [Var::P1, Var::P2, Var::P3] {
            hamiltonian += &PhasePoly::momentum(v, 2).scale(&crate::phasepoly::rat(1, 2));
        }
        Ok(Model { params, num, hamiltonian, big_phi2: big_phi[1].clone(), forces })
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn num(&self) -> &NumParams {
        &self.num
    }

    /// Symbolic Hamiltonian.
    pub fn hamiltonian_poly(&self) -> &PhasePoly {
        &self.hamiltonian
    }

    /// Symbolic `Phi2 = W1 + W3 + U2`.
    pub fn big_phi2(&self) -> &PhasePoly {
        &self.big_phi2
    }

    /// Symbolic force on rotor `i` (1-based).
    pub fn force_poly(&self, rotor: usize) -> &PhasePoly {
        &self.forces[rotor - 1]
    }

    pub fn hamiltonian(&self, x: &State) -> f64 {
        let p = &self.params;
        let kinetic = 0.5 * (x.p[0] * x.p[0] + x.p[1] * x.p[1] + x.p[2] * x.p[2]);
        kinetic
            + p.u[0].value(x.q[0])
            + p.u[1].value(x.q[1])
            + p.u[2].value(x.q[2])
            + p.w[0].value(x.q[1] - x.q[0])
            + p.w[1].value(x.q[1] - x.q[2])
    }

    /// Potential part of the Hamiltonian.
    pub fn potential(&self, x: &State) -> f64 {
        self.hamiltonian(x) - 0.5 * (x.p[0] * x.p[0] + x.p[1] * x.p[1] + x.p[2] * x.p[2])
    }

    /// `(phi1, phi2, phi3)`: minus the position gradient of the Hamiltonian.
    #[inline]
    pub fn forces(&self, q: &[f64; 3]) -> [f64; 3] {
        let p = &self.params;
        let w1 = p.w[0].force(q[1] - q[0]);
        let w3 = p.w[1].force(q[1] - q[2]);
        [w1 - p.u[0].force(q[0]), -w1 - w3 - p.u[1].force(q[1]), w3 - p.u[2].force(q[2])]
    }

    /// Drift of the SDE: `(dq, dp)`.
    pub fn sde_drift(&self, x: &State) -> ([f64; 3], [f64; 3]) {
        let phi = self.forces(&x.q);
        let n = &self.num;
        (
            x.p,
            [
                phi[0] + n.tau[0] - n.gamma[0] * x.p[0],
                phi[1],
                phi[2] + n.tau[1] - n.gamma[1] * x.p[2],
            ],
        )
    }

    /// Noise amplitudes on the p1 and p3 channels.
    pub fn diffusion_amplitudes(&self) -> [f64; 2] {
        self.num.amp
    }

    /// Exact generator `L f`, second-order bath terms included.
    pub fn generator_apply(&self, f: &PhasePoly) -> PhasePoly {
        let mut out = PhasePoly::zero();
        for (qv, pv) in [(Var::Q1, Var::P1), (Var::Q2, Var::P2), (Var::Q3, Var::P3)] {
            out += &(&PhasePoly::momentum(pv, 1) * &f.partial(qv));
        }
        out += &(&self.forces[1] * &f.partial(Var::P2));
        for (b, (pv, rotor)) in [(Var::P1, 0usize), (Var::P3, 2usize)].into_iter().enumerate() {
            out += &self.bath_part(b, pv, rotor, f);
        }
        out
    }

    /// `(phi_b + tau_b - gamma_b p_b) d_pb f + gamma_b T_b d_pb^2 f`.
    pub(crate) fn bath_part(&self, b: usize, pv: Var, rotor: usize, f: &PhasePoly) -> PhasePoly {
        let p = &self.params;
        let dp = f.partial(pv);
        let drift = &(&self.forces[rotor] + &PhasePoly::constant(p.tau[b].clone()))
            - &PhasePoly::momentum(pv, 1).scale(&p.gamma[b]);
        let mut out = &drift * &dp;
        out += &dp.partial(pv).scale(&(&p.gamma[b] * &p.temp[b]));
        out
    }
}
