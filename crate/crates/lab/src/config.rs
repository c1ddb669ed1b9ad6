//! Experiment configuration: one JSON document, unknown keys rejected,
//! every default spelled out by `--print-config`.

use std::path::Path;

use rotor_core::model::Harmonic;
use rotor_core::phasepoly::{rat, rational_parts_i64};
use rotor_core::sde::{IntegratorSpec, Scheme};
use rotor_core::{ChainParams, Rational, TrigPotential};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::LabError;

/// A rational in JSON: an integer, `[num, den]`, or `"num/den"` for
/// values beyond 64 bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Rat(pub Rational);

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match rational_parts_i64(&self.0) {
            Some(pair) => [pair.0, pair.1].serialize(s),
            None => format!("{}/{}", self.0.numer(), self.0.denom()).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Pair([i64; 2]),
            Text(String),
        }
        use serde::de::Error;
        match Repr::deserialize(d)? {
            Repr::Int(n) => Ok(Rat(rat(n, 1))),
            Repr::Pair([_, 0]) => Err(D::Error::custom("zero denominator")),
            Repr::Pair([n, m]) => Ok(Rat(rat(n, m))),
            Repr::Text(t) => t.parse::<Rational>().map(Rat).map_err(|e| D::Error::custom(format!("bad rational {t:?}: {e}"))),
        }
    }
}

fn r(n: i64) -> Rat {
    Rat(rat(n, 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicJson {
    pub k: u32,
    #[serde(default = "zero_rat")]
    pub cos: Rat,
    #[serde(default = "zero_rat")]
    pub sin: Rat,
}

fn zero_rat() -> Rat {
    r(0)
}

fn potential_to_json(p: &TrigPotential) -> Vec<HarmonicJson> {
    p.harmonics()
        .iter()
        .map(|h| HarmonicJson { k: h.k, cos: Rat(h.cos.clone()), sin: Rat(h.sin.clone()) })
        .collect()
}

fn potential_from_json(v: &[HarmonicJson]) -> Result<TrigPotential, LabError> {
    TrigPotential::new(v.iter().map(|h| Harmonic { k: h.k, cos: h.cos.0.clone(), sin: h.sin.0.clone() }).collect())
        .map_err(|e| LabError::Config(e.to_string()))
}

/// Chain parameters; baths are listed as `[bath 1, bath 3]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub gamma: [Rat; 2],
    pub temp: [Rat; 2],
    pub tau: [Rat; 2],
    /// `W1`, `W3` as lists of harmonics `cos(k s)`, `sin(k s)`.
    pub w: [Vec<HarmonicJson>; 2],
    /// `U1`, `U2`, `U3`.
    pub u: [Vec<HarmonicJson>; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::from_params(&ChainParams::benchmark(rat(1, 1), rat(1, 1), rat(0, 1)))
    }
}

impl ModelConfig {
    pub fn from_params(p: &ChainParams) -> Self {
        ModelConfig {
            gamma: p.gamma.clone().map(Rat),
            temp: p.temp.clone().map(Rat),
            tau: p.tau.clone().map(Rat),
            w: [potential_to_json(&p.w[0]), potential_to_json(&p.w[1])],
            u: [potential_to_json(&p.u[0]), potential_to_json(&p.u[1]), potential_to_json(&p.u[2])],
        }
    }

    pub fn to_params(&self) -> Result<ChainParams, LabError> {
        let p = ChainParams {
            gamma: self.gamma.clone().map(|x| x.0),
            temp: self.temp.clone().map(|x| x.0),
            tau: self.tau.clone().map(|x| x.0),
            w: [potential_from_json(&self.w[0])?, potential_from_json(&self.w[1])?],
            u: [potential_from_json(&self.u[0])?, potential_from_json(&self.u[1])?, potential_from_json(&self.u[2])?],
        };
        p.validate().map_err(|e| LabError::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    EulerMaruyama,
    Splitting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: SchemeName,
    pub h: f64,
    pub total_time: f64,
    /// Record every this many steps.
    pub record_stride: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { scheme: SchemeName::Splitting, h: 1e-3, total_time: 1000.0, record_stride: 100 }
    }
}

impl IntegratorConfig {
    pub fn spec(&self) -> Result<IntegratorSpec, LabError> {
        let scheme = match self.scheme {
            SchemeName::EulerMaruyama => Scheme::EulerMaruyama,
            SchemeName::Splitting => Scheme::Splitting,
        };
        IntegratorSpec::new(scheme, self.h, self.total_time, self.record_stride)
            .map_err(|e| LabError::Config(format!("integrator: {e}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngConfig {
    /// Master seed; must agree with `--seed` when both are given.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub total_time: f64,
    /// Independent chains the total time is split over.
    pub chains: u64,
    pub burn_in: f64,
    pub sample_dt: f64,
    pub n_batches: usize,
    pub ks_max: f64,
    pub flux_sigmas: f64,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        EquilibriumConfig {
            total_time: 1e6,
            chains: 8,
            burn_in: 50.0,
            sample_dt: 0.5,
            n_batches: 40,
            ks_max: 0.01,
            flux_sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistConfig {
    pub total_time: f64,
    pub chains: u64,
    pub burn_in: f64,
    pub sample_dt: f64,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// Gaussian smoothing width (in bins) for mode detection.
    pub smooth_bins: f64,
    /// Minimum mode prominence relative to the highest peak.
    pub min_rel: f64,
    /// Expected mode positions for dwell-time analysis.
    pub centres: Option<[f64; 2]>,
    /// Hysteresis band as a fraction of the centre separation.
    pub band: f64,
    pub n_batches: usize,
}

impl Default for HistConfig {
    fn default() -> Self {
        HistConfig {
            total_time: 2e5,
            chains: 4,
            burn_in: 100.0,
            sample_dt: 0.1,
            lo: -40.0,
            hi: 40.0,
            bins: 400,
            smooth_bins: 2.0,
            min_rel: 0.05,
            centres: None,
            band: 0.2,
            n_batches: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub omegas: Vec<f64>,
    pub paths: u64,
    /// Maximum relative deviation of each slope from `-alpha / omega^3`.
    pub rel_tol: f64,
    /// Allowed deviation of the fitted log-log exponent from -3.
    pub exponent_tol: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig { omegas: vec![10.0, 20.0, 40.0], paths: 10_000, rel_tol: 0.25, exponent_tol: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallModelConfig {
    pub omega: f64,
    pub gamma: f64,
    pub temp: f64,
    pub kappa: f64,
    pub p0: f64,
    pub t: f64,
    pub h: f64,
    pub paths: u64,
}

impl Default for SmallModelConfig {
    fn default() -> Self {
        SmallModelConfig { omega: 20.0, gamma: 1.0, temp: 1.0, kappa: 1.0, p0: 0.0, t: 5.0, h: 1e-3, paths: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub beta: f64,
    pub a: f64,
    pub k: u32,
    pub r: f64,
    pub m: f64,
    /// `null` lets the search pick it.
    pub c4: Option<f64>,
    pub truncation: Option<i32>,
    pub samples: usize,
    /// Search `A`, `R` and `M` on these grids; an empty grid keeps the
    /// given value.
    pub a_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub m_grid: Vec<f64>,
    pub pilot: usize,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            beta: 0.05,
            a: 10.0,
            k: 2,
            r: 10.0,
            m: 1200.0,
            c4: None,
            truncation: None,
            samples: 100_000,
            a_grid: vec![1.0, 3.0, 10.0, 30.0, 100.0, 300.0],
            r_grid: vec![10.0, 40.0, 160.0, 640.0],
            m_grid: vec![400.0, 800.0, 1200.0, 2000.0],
            pilot: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub from: [f64; 6],
    pub to: [f64; 6],
    pub eps: f64,
    pub deltas: Vec<f64>,
    pub h: f64,
    /// Trajectory CSV sampling interval.
    pub output_dt: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            from: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            to: [1.0, 1.0, 1.0, 0.0, 5.0, 0.0],
            eps: 0.05,
            deltas: vec![0.4, 0.2, 0.1, 0.05, 0.025],
            h: 1e-5,
            output_dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluxConfig {
    pub total_time: f64,
    pub chains: u64,
    pub burn_in: f64,
    pub sample_dt: f64,
    pub n_batches: usize,
}

impl Default for FluxConfig {
    fn default() -> Self {
        FluxConfig { total_time: 1e5, chains: 4, burn_in: 100.0, sample_dt: 0.1, n_batches: 40 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub integrator: IntegratorConfig,
    pub rng: RngConfig,
    pub equilibrium: EquilibriumConfig,
    pub hist: HistConfig,
    pub drift: DriftConfig,
    pub small_model: SmallModelConfig,
    pub lyapunov: LyapunovConfig,
    pub control: ControlConfig,
    pub flux: FluxConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Settle the master seed from the flag and the file.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64, LabError> {
        match (flag, self.rng.seed) {
            (Some(a), Some(b)) if a != b => {
                Err(LabError::Usage(format!("--seed {a} disagrees with rng.seed = {b} in the config")))
            }
            (Some(a), _) => {
                self.rng.seed = Some(a);
                Ok(a)
            }
            (None, _) => Err(LabError::Usage("this command is randomized and requires --seed".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
        assert_eq!(back.model.to_params().unwrap(), ChainParams::benchmark(rat(1, 1), rat(1, 1), rat(0, 1)));
    }

    #[test]
    fn rationals_in_all_forms() {
        let v: Vec<Rat> = serde_json::from_str(r#"[3, [1, 2], "-7/4"]"#).unwrap();
        assert_eq!(v, vec![Rat(rat(3, 1)), Rat(rat(1, 2)), Rat(rat(-7, 4))]);
        assert!(serde_json::from_str::<Rat>("[1, 0]").is_err());
        assert_eq!(serde_json::to_string(&Rat(rat(6, 4))).unwrap(), "[3,2]");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"modle": {}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"drift": {"omega": [1]}}"#).is_err());
        let c = ExperimentConfig::from_json(r#"{"drift": {"paths": 5}}"#).unwrap();
        assert_eq!(c.drift.paths, 5);
        assert_eq!(c.drift.omegas, vec![10.0, 20.0, 40.0]);
    }

    #[test]
    fn invalid_model_rejected() {
        let mut c = ExperimentConfig::default();
        c.model.gamma[0] = r(0);
        assert!(matches!(c.model.to_params(), Err(LabError::Config(_))));
    }

    #[test]
    fn seed_resolution() {
        let mut c = ExperimentConfig::default();
        assert!(matches!(c.resolve_seed(None), Err(LabError::Usage(_))));
        assert_eq!(c.resolve_seed(Some(7)).unwrap(), 7);
        assert!(matches!(c.resolve_seed(Some(8)), Err(LabError::Usage(_))));
    }
}
