//! JSON images of symbolic objects.

use rotor_core::averaging::EffectiveDynamics;
use rotor_core::{Coeff, Monomial, PhasePoly};
use serde::{Deserialize, Serialize};

use crate::config::Rat;

/// One term `c p1^n1 p2^l p3^n3 e^{i wave.q}` with `c = re + i im`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermJson {
    pub n1: u32,
    pub l: i32,
    pub n3: u32,
    pub wave: [i32; 3],
    pub re: Rat,
    pub im: Rat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyJson {
    pub terms: Vec<TermJson>,
    /// Human-readable rendering; ignored on input.
    #[serde(default)]
    pub text: String,
}

impl From<&PhasePoly> for PolyJson {
    fn from(p: &PhasePoly) -> Self {
        PolyJson {
            terms: p
                .terms()
                .map(|(m, c)| TermJson { n1: m.n1, l: m.l, n3: m.n3, wave: m.wave, re: Rat(c.re.clone()), im: Rat(c.im.clone()) })
                .collect(),
            text: p.to_string(),
        }
    }
}

impl From<&PolyJson> for PhasePoly {
    fn from(j: &PolyJson) -> Self {
        PhasePoly::from_terms(
            j.terms.iter().map(|t| (Monomial::new(t.n1, t.l, t.n3, t.wave), Coeff::new(t.re.0.clone(), t.im.0.clone()))),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveJson {
    /// `sum_b gamma_b <W_b^2>`.
    pub alpha: Rat,
    pub alpha_f64: f64,
    /// Coefficient of `p2^-3` in the drift.
    pub drift_m3: Rat,
    pub target_degree: i32,
    pub passes: usize,
    pub residual_drift_degree: Option<i32>,
    pub residual_diff_degree: Option<i32>,
    /// `F` in `p2~ = p2 + F`.
    pub f: PolyJson,
    /// Drift `a`.
    pub a: PolyJson,
    /// Diffusion coefficients, without the `sqrt(2 gamma_b T_b)` factor.
    pub sigma: [PolyJson; 2],
    pub leading_drift: PolyJson,
    pub sigma_leading: [PolyJson; 2],
}

impl From<&EffectiveDynamics> for EffectiveJson {
    fn from(e: &EffectiveDynamics) -> Self {
        use num_traits::ToPrimitive;
        EffectiveJson {
            alpha: Rat(e.alpha.clone()),
            alpha_f64: e.alpha.to_f64().unwrap_or(f64::NAN),
            drift_m3: Rat(e.drift_coefficient_m3()),
            target_degree: e.target_degree,
            passes: e.passes,
            residual_drift_degree: e.residual_drift_degree,
            residual_diff_degree: e.residual_diff_degree,
            f: (&e.f).into(),
            a: (&e.a).into(),
            sigma: [(&e.sigma[0]).into(), (&e.sigma[1]).into()],
            leading_drift: (&e.leading_drift()).into(),
            sigma_leading: [(&e.sigma_leading(0)).into(), (&e.sigma_leading(1)).into()],
        }
    }
}
