use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::solver::{FreezePartition, LipschitzConstants, PicardOptions, RateProfile, SolveMethod};
use crate::spectral::Basis;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub basis: Basis,
    /// Mode cutoff `K`.
    pub modes: usize,
    #[serde(default)]
    pub shift: f64,
    /// Explicit spectrum for the abstract basis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_dependence: Option<RateProfile>,
}

/// A named coefficient map with its scalar coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub form: String,
    pub coeff: f64,
    /// Extra parameter of the form (decay exponent, mode index, axis).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
}

impl FormSpec {
    pub fn new(form: &str, coeff: f64) -> Self {
        Self {
            form: form.to_owned(),
            coeff,
            param: None,
        }
    }

    pub fn with_param(mut self, param: f64) -> Self {
        self.param = Some(param);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Number of scalar Brownian motions `M`.
    pub dim: usize,
    #[serde(default)]
    pub diffusion: Vec<FormSpec>,
    #[serde(default)]
    pub local_diffusion: Vec<FormSpec>,
    #[serde(default)]
    pub additive: Vec<FormSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialValue {
    /// `u₀,k = amplitude / (1 + k)^decay` in mode order.
    Algebraic { amplitude: f64, decay: f64 },
    SingleMode { index: usize, amplitude: f64 },
    Coefficients { values: Vec<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredConstants {
    #[serde(default)]
    pub drift: LipschitzConstants,
    #[serde(default)]
    pub diffusion: LipschitzConstants,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SolveMethod,
    /// Trace-norm stopping level for local problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<f64>,
    #[serde(default = "default_freeze")]
    pub freeze: FreezePartition,
    /// Split the horizon with the empirical κ before gluing.
    #[serde(default)]
    pub split: bool,
}

fn default_freeze() -> FreezePartition {
    FreezePartition::Auto
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolveMethod::Picard(PicardOptions::default()),
            n_max: None,
            freeze: FreezePartition::Auto,
            split: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub random_probes: usize,
    pub kdiamond_paths: usize,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            random_probes: 16,
            kdiamond_paths: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub id: String,
    pub operator: OperatorConfig,
    #[serde(default)]
    pub drift: Vec<FormSpec>,
    #[serde(default)]
    pub local_drift: Vec<FormSpec>,
    pub noise: NoiseConfig,
    pub u0: InitialValue,
    pub p: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub declared: DeclaredConstants,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub constants: ConstantsConfig,
}

fn default_q() -> f64 {
    2.0
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidScenario(format!("{}: {msg}", self.id)));
        if self.version != SCHEMA_VERSION {
            return bad(&format!("unsupported schema version {}", self.version));
        }
        if self.operator.modes == 0 {
            return bad("modes must be positive");
        }
        if !(self.p >= 2.0) || !(self.q >= 2.0) {
            return bad("p and q must be at least 2");
        }
        if !(self.horizon > 0.0) || self.n_steps == 0 || self.n_paths == 0 {
            return bad("horizon, n_steps and n_paths must be positive");
        }
        if self.noise.dim == 0 {
            return bad("noise dimension must be positive");
        }
        if let Some(e) = &self.operator.eigenvalues {
            if e.len() != self.operator.modes {
                return bad("eigenvalue list length differs from modes");
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON (keys sorted).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("scenario serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn base(id: &str, operator: OperatorConfig, u0: InitialValue) -> Self {
        Self {
            version: SCHEMA_VERSION,
            id: id.to_owned(),
            operator,
            drift: Vec::new(),
            local_drift: Vec::new(),
            noise: NoiseConfig {
                dim: 1,
                diffusion: Vec::new(),
                local_diffusion: Vec::new(),
                additive: Vec::new(),
            },
            u0,
            p: 2.0,
            q: 2.0,
            horizon: 1.0,
            n_steps: 256,
            n_paths: 16,
            seed: 20240601,
            declared: DeclaredConstants::default(),
            solver: SolverConfig::default(),
            constants: ConstantsConfig::default(),
        }
    }

    /// Built-in scenario by id.
    pub fn builtin(id: &str) -> Result<Self> {
        let torus = |order, modes, shift| OperatorConfig {
            basis: Basis::FourierTorus { dim: 1, order },
            modes,
            shift,
            eigenvalues: None,
            time_dependence: None,
        };
        let sine = |modes| OperatorConfig {
            basis: Basis::SineInterval { order: 2 },
            modes,
            shift: 0.0,
            eigenvalues: None,
            time_dependence: None,
        };
        let abstract_op = |eigs: Vec<f64>| OperatorConfig {
            basis: Basis::Abstract,
            modes: eigs.len(),
            shift: 0.0,
            eigenvalues: Some(eigs),
            time_dependence: None,
        };
        let smooth = InitialValue::Algebraic { amplitude: 1.0, decay: 2.0 };
        let s = match id {
            "hilbert_sharp" => {
                let mut s = Self::base(id, abstract_op(vec![1.0, 2.0, 4.0, 8.0, 16.0]), smooth);
                s.n_steps = 256;
                s.n_paths = 10_000;
                s.noise.additive = vec![FormSpec::new("single_mode", 1.0).with_param(0.0)];
                s.constants = ConstantsConfig {
                    random_probes: 8,
                    kdiamond_paths: 10_000,
                };
                s
            }
            "heat_torus" => {
                let mut s = Self::base(id, torus(2, 33, 1.0), smooth);
                s.drift = vec![FormSpec::new("sin_u", 0.5), FormSpec::new("linear", -0.2)];
                s.noise.dim = 2;
                s.noise.diffusion = vec![FormSpec::new("mult_cos", 0.3)];
                s.n_steps = 1024;
                s.declared.drift = LipschitzConstants { l: 0.0, l_tilde: 0.7, growth: 0.7 };
                s.declared.diffusion = LipschitzConstants {
                    l: 0.0,
                    l_tilde: 0.3 * 2.0,
                    growth: 0.3 * 2.0,
                };
                s
            }
            "biharmonic_torus" => {
                let mut s = Self::base(id, torus(4, 17, 1.0), smooth);
                s.drift = vec![FormSpec::new("sin_u", 0.5)];
                s.noise.additive = vec![FormSpec::new("diagonal_decay", 0.5).with_param(0.5)];
                s.noise.dim = 17;
                s.declared.drift = LipschitzConstants { l: 0.0, l_tilde: 0.5, growth: 0.5 };
                s
            }
            "dirichlet_interval" => {
                let mut s = Self::base(id, sine(32), smooth);
                s.p = 4.0;
                s.drift = vec![FormSpec::new("sin_u", 0.5)];
                s.noise.additive = vec![FormSpec::new("single_mode", 0.5).with_param(0.0)];
                s.declared.drift = LipschitzConstants { l: 0.0, l_tilde: 0.5, growth: 0.5 };
                s
            }
            "timedep_drift" => {
                let mut op = torus(2, 17, 1.0);
                op.time_dependence = Some(RateProfile::Ramp { slope: 0.2, horizon: 1.0 });
                let mut s = Self::base(id, op, smooth);
                s.n_paths = 1;
                s.solver.method = SolveMethod::Forward;
                s
            }
            "local_quadratic" => {
                let mut s = Self::base(id, abstract_op(vec![1.0]), InitialValue::SingleMode { index: 0, amplitude: 2.0 });
                s.local_drift = vec![FormSpec::new("u_sq", 1.0)];
                s.n_steps = 10_000;
                s.n_paths = 1;
                s.solver.method = SolveMethod::Forward;
                s.solver.n_max = Some(1000.0);
                s
            }
            "local_lineargrowth" => {
                let mut s = Self::base(id, abstract_op(vec![1.0]), InitialValue::SingleMode { index: 0, amplitude: 2.0 });
                s.local_drift = vec![FormSpec::new("u_sin_u", 1.0)];
                s.n_steps = 10_000;
                s.n_paths = 1;
                s.solver.method = SolveMethod::Forward;
                s.solver.n_max = Some(1000.0);
                s
            }
            "contraction" => {
                let mut s = Self::base(id, sine(16), smooth);
                let b = 0.25 * std::f64::consts::SQRT_2;
                s.drift = vec![FormSpec::new("linear_a", 0.25)];
                s.noise.diffusion = vec![FormSpec::new("sqrt_a", b)];
                s.n_steps = 64;
                s.n_paths = 32;
                s.declared.drift = LipschitzConstants { l: 0.25, l_tilde: 0.0, growth: 0.25 };
                s.declared.diffusion = LipschitzConstants { l: b, l_tilde: 0.0, growth: b };
                s
            }
            "additive_holder" => {
                let mut s = Self::base(id, torus(2, 33, 1.0), InitialValue::Algebraic { amplitude: 0.0, decay: 2.0 });
                s.p = 8.0;
                s.noise.dim = 33;
                s.noise.additive = vec![FormSpec::new("diagonal_decay", 1.0).with_param(0.8)];
                s.n_steps = 1024;
                s.n_paths = 1000;
                s.solver.method = SolveMethod::Forward;
                s
            }
            "zero" => {
                let mut s = Self::base(id, sine(8), smooth);
                s.n_steps = 64;
                s.n_paths = 2;
                s
            }
            other => return Err(Error::InvalidScenario(format!("no built-in scenario `{other}`"))),
        };
        s.validate()?;
        Ok(s)
    }
}

pub const BUILTIN_IDS: [&str; 10] = [
    "hilbert_sharp",
    "heat_torus",
    "biharmonic_torus",
    "dirichlet_interval",
    "timedep_drift",
    "local_quadratic",
    "local_lineargrowth",
    "contraction",
    "additive_holder",
    "zero",
];
