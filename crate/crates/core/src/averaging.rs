//! Ito bookkeeping and the elimination of oscillating terms in the dynamics
//! of the middle momentum.
//!
//! The generator splits by its effect on the degree (power of `p2`):
//!
//! ```text
//!   d+ f = p2 df/dq2                                   (raises degree)
//!   d0 f = sum_b p_b df/dq_b + (phi_b + tau_b - gamma_b p_b) df/dp_b
//!          + gamma_b T_b d2f/dp_b2, with noise df/dp_b  (keeps degree)
//!   d- f = phi2 df/dp2                                 (lowers degree)
//! ```
//!
//! Repeatedly trading a drift term `f` for `<f> - d0 Qf - d- Qf` (and moving
//! `Qf` into the change of variable) pushes the oscillating part of the
//! drift of `p2 + F` to ever lower degree.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::ops::{Add, Neg, Sub};

use num_traits::Zero;

use crate::model::Model;
use crate::phasepoly::{int, Coeff, Monomial, PhasePoly, Rational, Var};

/// Drift plus one diffusion coefficient per bath. Diffusions are stored
/// without the factor `sqrt(2 gamma_b T_b)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItoForm {
    pub drift: PhasePoly,
    pub diff: [PhasePoly; 2],
}

impl ItoForm {
    pub fn zero() -> Self {
        ItoForm::default()
    }

    /// A pure drift term.
    pub fn drift_only(drift: PhasePoly) -> Self {
        ItoForm { drift, diff: [PhasePoly::zero(), PhasePoly::zero()] }
    }

    pub fn is_zero(&self) -> bool {
        self.drift.is_zero() && self.diff.iter().all(PhasePoly::is_zero)
    }

    /// Diffusion on bath 1 (b = 0) or bath 3 (b = 1).
    pub fn diff_b(&self, b: usize) -> &PhasePoly {
        &self.diff[b]
    }
}

impl Add for &ItoForm {
    type Output = ItoForm;
    fn add(self, o: &ItoForm) -> ItoForm {
        ItoForm {
            drift: &self.drift + &o.drift,
            diff: [&self.diff[0] + &o.diff[0], &self.diff[1] + &o.diff[1]],
        }
    }
}

impl Sub for &ItoForm {
    type Output = ItoForm;
    fn sub(self, o: &ItoForm) -> ItoForm {
        ItoForm {
            drift: &self.drift - &o.drift,
            diff: [&self.diff[0] - &o.diff[0], &self.diff[1] - &o.diff[1]],
        }
    }
}

impl Neg for &ItoForm {
    type Output = ItoForm;
    fn neg(self) -> ItoForm {
        ItoForm { drift: -&self.drift, diff: [-&self.diff[0], -&self.diff[1]] }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AveragingError {
    /// An averaged term is not in the range of the outer transport.
    #[error("mode (k1, k3) = ({k1}, {k3}) at p2-degree {l} is not divisible by k1 p1 + k3 p3")]
    NotDivisible { k1: i32, k3: i32, l: i32 },
    #[error("outer_absorb needs a q2-independent input")]
    NotAveraged,
    #[error("no convergence after {passes} passes; {} outstanding terms, leading degree {degree:?}", outstanding.len())]
    NonTermination { passes: usize, degree: Option<i32>, outstanding: PhasePoly },
    #[error("target degree {0} must be <= -4")]
    BadTarget(i32),
}

pub fn dplus(f: &PhasePoly) -> PhasePoly {
    &PhasePoly::momentum(Var::P2, 1) * &f.partial(Var::Q2)
}

pub fn dminus(f: &PhasePoly, model: &Model) -> PhasePoly {
    model.force_poly(2) * &f.partial(Var::P2)
}

/// Outer transport `sum_b p_b df/dq_b`.
pub fn transport(f: &PhasePoly) -> PhasePoly {
    &(&PhasePoly::momentum(Var::P1, 1) * &f.partial(Var::Q1))
        + &(&PhasePoly::momentum(Var::P3, 1) * &f.partial(Var::Q3))
}

pub fn dzero(f: &PhasePoly, model: &Model) -> ItoForm {
    let mut drift = transport(f);
    drift += &model.bath_part(0, Var::P1, 0, f);
    drift += &model.bath_part(1, Var::P3, 2, f);
    ItoForm { drift, diff: [f.partial(Var::P1), f.partial(Var::P3)] }
}

/// `d f = (d+ + d0 + d-) f`.
pub fn ito(f: &PhasePoly, model: &Model) -> ItoForm {
    let mut form = dzero(f, model);
    form.drift += &dplus(f);
    form.drift += &dminus(f, model);
    form
}

/// Result of one application of the averaging lemma
/// `f dt = <f> dt - d0 Qf - d- Qf + d Qf`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragingStep {
    pub mean: PhasePoly,
    /// `Qf`; a change of variable `g -> g - Qf` removes `f - <f>`.
    pub correction: PhasePoly,
    /// `-d0 Qf - d- Qf`.
    pub extra: ItoForm,
}

pub fn averaging_step(f: &PhasePoly, model: &Model) -> AveragingStep {
    let qf = f.q_transform();
    let mut extra = -&dzero(&qf, model);
    extra.drift -= &dminus(&qf, model);
    AveragingStep { mean: f.q2_average(), correction: qf, extra }
}

/// Result of [`outer_absorb`].
#[derive(Debug, Clone, PartialEq)]
pub struct Absorbed {
    /// `Psi` with `sum_b p_b dPsi/dq_b` equal to the absorbable input; the
    /// change of variable gains `-Psi`.
    pub absorbed: Option<PhasePoly>,
    /// Terms of mode `(k1, k3) = (0, 0)`: genuine averaged drift.
    pub genuine: PhasePoly,
    /// `-(d0 Psi - transport Psi) - d- Psi`.
    pub remainder: ItoForm,
}

/// Solve `sum_b p_b dPsi/dq_b = g` mode by mode for the part of a
/// q2-independent `g` that is not constant in the angles.
pub fn outer_absorb(g: &PhasePoly, model: &Model) -> Result<Absorbed, AveragingError> {
    if !g.oscillatory().is_zero() {
        return Err(AveragingError::NotAveraged);
    }
    let genuine = g.filter(|m| m.wave == [0, 0, 0]);
    let mut groups: BTreeMap<([i32; 3], i32), BTreeMap<(u32, u32), Coeff>> = BTreeMap::new();
    for (m, c) in g.terms() {
        if m.wave != [0, 0, 0] {
            groups.entry((m.wave, m.l)).or_default().insert((m.n1, m.n3), c.clone());
        }
    }
    if groups.is_empty() {
        return Ok(Absorbed { absorbed: None, genuine, remainder: ItoForm::zero() });
    }
    let mut psi_terms = Vec::new();
    for ((wave, l), poly) in groups {
        for ((n1, n3), c) in divide_by_transport(poly, wave[0], wave[2])
            .ok_or(AveragingError::NotDivisible { k1: wave[0], k3: wave[2], l })?
        {
            psi_terms.push((Monomial::new(n1, l, n3, wave), c));
        }
    }
    let psi = PhasePoly::from_terms(psi_terms);
    let d0 = dzero(&psi, model);
    let mut remainder = ItoForm {
        drift: -&(&d0.drift - &transport(&psi)),
        diff: [-&d0.diff[0], -&d0.diff[1]],
    };
    remainder.drift -= &dminus(&psi, model);
    Ok(Absorbed { absorbed: Some(psi), genuine, remainder })
}

/// Find `Psi(p1, p3)` with `i (k1 p1 + k3 p3) Psi = P`, or `None` when the
/// division leaves a remainder.
fn divide_by_transport(
    mut poly: BTreeMap<(u32, u32), Coeff>,
    k1: i32,
    k3: i32,
) -> Option<BTreeMap<(u32, u32), Coeff>> {
    let mut out = BTreeMap::new();
    if k1 == 0 {
        for ((n1, n3), c) in poly {
            if n3 == 0 {
                return None;
            }
            out.insert((n1, n3 - 1), c.div_imag(&int(k3 as i64)));
        }
        return Some(out);
    }
    let k1r = int(k1 as i64);
    let ratio = Rational::new(k3.into(), k1.into());
    // Eliminate the highest power of p1 first.
    while let Some((&(n1, n3), c)) = poly.iter().next_back() {
        if n1 == 0 {
            return None;
        }
        let c = c.clone();
        poly.remove(&(n1, n3));
        if k3 != 0 {
            let entry = poly.entry((n1 - 1, n3 + 1)).or_insert_with(Coeff::zero);
            *entry = &*entry + &(-&c.scale(&ratio));
            if entry.is_zero() {
                poly.remove(&(n1 - 1, n3 + 1));
            }
        }
        out.insert((n1 - 1, n3), c.div_imag(&k1r));
    }
    Some(out)
}

/// Effective dynamics of `p2~ = p2 + F`:
/// `d p2~ = a dt + sum_b sqrt(2 gamma_b T_b) sigma_b dB_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveDynamics {
    pub f: PhasePoly,
    pub a: PhasePoly,
    pub sigma: [PhasePoly; 2],
    /// Degree of `a` once its leading averaged part is removed.
    pub residual_drift_degree: Option<i32>,
    /// Degree of `sigma_b` once the degree -2 part is removed.
    pub residual_diff_degree: Option<i32>,
    /// `sum_b gamma_b <W_b^2>`.
    pub alpha: Rational,
    pub target_degree: i32,
    pub passes: usize,
}

impl EffectiveDynamics {
    /// Genuine averaged drift: the angle-independent part of `a` above the
    /// residual order.
    pub fn leading_drift(&self) -> PhasePoly {
        let t = self.target_degree;
        self.a.filter(|m| m.wave == [0, 0, 0] && m.l > t)
    }

    /// Coefficient of `p2^-3` in the drift (the constant mode).
    pub fn drift_coefficient_m3(&self) -> Rational {
        self.a.coeff(&Monomial::new(0, -3, 0, [0; 3])).map(|c| c.re.clone()).unwrap_or_else(Rational::zero)
    }

    /// Leading part of `sigma_b`.
    pub fn sigma_leading(&self, b: usize) -> PhasePoly {
        self.sigma[b].degree_part(-2)
    }

    /// `F` keeping only terms of degree `>= min_degree`.
    pub fn f_truncated(&self, min_degree: i32) -> PhasePoly {
        self.f.filter(|m| m.l >= min_degree)
    }
}

/// Options for [`average_p2_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AveragingOptions {
    /// Non-genuine drift terms of degree above this are eliminated.
    pub target_degree: i32,
    pub max_passes: usize,
}

impl Default for AveragingOptions {
    fn default() -> Self {
        AveragingOptions { target_degree: -4, max_passes: 20 }
    }
}

/// Effective dynamics to the default order (residual drift `O(p2^-4)`).
pub fn average_p2(model: &Model) -> Result<EffectiveDynamics, AveragingError> {
    average_p2_with(model, AveragingOptions::default())
}

pub fn average_p2_with(model: &Model, opts: AveragingOptions) -> Result<EffectiveDynamics, AveragingError> {
    if opts.target_degree > -4 {
        return Err(AveragingError::BadTarget(opts.target_degree));
    }
    eliminate(model, opts)
}

/// The elimination loop without the target restriction; also used to probe
/// shallow orders.
pub fn eliminate(model: &Model, opts: AveragingOptions) -> Result<EffectiveDynamics, AveragingError> {
    let t = opts.target_degree;
    let mut f = PhasePoly::zero();
    let mut form = ito(&PhasePoly::momentum(Var::P2, 1), model);
    let outstanding = |d: &PhasePoly| d.filter(|m| m.l > t && m.wave != [0, 0, 0]);
    let mut passes = 0;
    loop {
        let todo = outstanding(&form.drift);
        let Some(deg) = todo.degree() else { break };
        if passes == opts.max_passes {
            return Err(AveragingError::NonTermination { passes, degree: Some(deg), outstanding: todo });
        }
        passes += 1;
        let level = todo.degree_part(deg);

        let osc = level.oscillatory();
        if !osc.is_zero() {
            let step = averaging_step(&osc, model);
            f -= &step.correction;
            form.drift -= &osc;
            form = &form + &step.extra;
        }

        let avg = level.q2_average();
        if !avg.is_zero() {
            let abs = outer_absorb(&avg, model)?;
            if let Some(psi) = abs.absorbed {
                f -= &psi;
                form.drift -= &avg;
                form = &form + &abs.remainder;
            }
        }
    }

    let alpha = model.params().alpha();
    let lead = form.drift.filter(|m| m.wave == [0, 0, 0] && m.l > t);
    let residual_drift_degree = (&form.drift - &lead).degree();
    let residual_diff_degree = form
        .diff
        .iter()
        .filter_map(|s| s.filter(|m| m.l != -2).degree())
        .max();
    Ok(EffectiveDynamics {
        f,
        a: form.drift,
        sigma: form.diff,
        residual_drift_degree,
        residual_diff_degree,
        alpha,
        target_degree: t,
        passes,
    })
}
