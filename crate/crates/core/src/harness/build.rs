//! Scenario → `ProblemSpec`, with Nemytskii forms evaluated pseudo-spectrally.

use std::sync::Arc;

use num_complex::Complex64;

use super::scenario::{FormSpec, InitialValue, Scenario};
use crate::error::{Error, Result};
use crate::noise::NoiseOperator;
use crate::solver::{validate_constants, Diffusion, Drift, LipschitzConstants, OperatorFamily, ProblemSpec};
use crate::spectral::{Basis, PhysicalGrid, SpectralOperator, StateVector};

#[derive(Clone, Copy, Debug, PartialEq)]
enum DriftKind {
    Linear,
    LinearA,
    SinU,
    GradU(usize),
    USq,
    USinU,
}

impl DriftKind {
    fn parse(spec: &FormSpec, local: bool) -> Result<Self> {
        let kind = match spec.form.as_str() {
            "linear" => Self::Linear,
            "linear_a" => Self::LinearA,
            "sin_u" => Self::SinU,
            "grad_u" => Self::GradU(spec.param.unwrap_or(0.0) as usize),
            "u_sq" if local => Self::USq,
            "u_sin_u" if local => Self::USinU,
            other => return Err(Error::UnknownForm(other.to_owned())),
        };
        Ok(kind)
    }

    fn pointwise(self) -> bool {
        matches!(self, Self::SinU | Self::USq | Self::USinU)
    }
}

/// Sum of drift forms `Σ c_j f_j(u, ∂u)`.
pub struct NemytskiiDrift {
    parts: Vec<(DriftKind, f64)>,
    op: SpectralOperator,
    grid: Option<PhysicalGrid>,
    constants: LipschitzConstants,
    local: bool,
}

impl NemytskiiDrift {
    fn new(forms: &[FormSpec], op: &SpectralOperator, grid: Option<PhysicalGrid>, constants: LipschitzConstants, local: bool) -> Result<Self> {
        let parts = forms
            .iter()
            .map(|f| DriftKind::parse(f, local).map(|k| (k, f.coeff)))
            .collect::<Result<Vec<_>>>()?;
        if parts.iter().any(|(k, _)| matches!(k, DriftKind::GradU(_))) && matches!(op.basis(), Basis::Abstract) {
            return Err(Error::UnsupportedBasis("abstract (grad_u)".into()));
        }
        Ok(Self {
            parts,
            op: op.clone(),
            grid,
            constants,
            local,
        })
    }
}

impl Drift for NemytskiiDrift {
    fn eval(&self, _t: f64, x: &StateVector) -> StateVector {
        let mut out = StateVector::zeros(x.len());
        let mut pointwise: Option<Vec<f64>> = None;
        let grid = self.grid.as_ref().expect("grid built for every basis");
        let values = if self.parts.iter().any(|(k, _)| k.pointwise()) {
            Some(grid.to_real_values(x).expect("state length matches grid"))
        } else {
            None
        };
        for &(kind, c) in &self.parts {
            match kind {
                DriftKind::Linear => out.axpy(c, x),
                DriftKind::LinearA => {
                    let ax = self.op.frac_power_apply(1.0, x).expect("power in range");
                    out.axpy(c, &ax);
                }
                DriftKind::GradU(axis) => {
                    let d = grid.derivative_values(x, axis).expect("axis checked");
                    out.axpy(c, &grid.project_real(&d).expect("grid values"));
                }
                DriftKind::SinU | DriftKind::USq | DriftKind::USinU => {
                    let u = values.as_ref().expect("values computed");
                    let acc = pointwise.get_or_insert_with(|| vec![0.0; u.len()]);
                    for (a, &v) in acc.iter_mut().zip(u) {
                        *a += c * match kind {
                            DriftKind::SinU => v.sin(),
                            DriftKind::USq => v * v,
                            _ => v * v.sin(),
                        };
                    }
                }
            }
        }
        if let Some(acc) = pointwise {
            out = out.add(&grid.project_real(&acc).expect("grid values"));
        }
        out
    }

    fn constants(&self) -> LipschitzConstants {
        self.constants
    }

    fn constants_at(&self, radius: f64) -> LipschitzConstants {
        if !self.local {
            return self.constants;
        }
        // Sup-norm bound on the trace ball: ‖u‖_∞ ≤ Σ_k s_k |u_k| ≤ s_max √K ‖u‖.
        let s = (0..self.op.len()).map(|k| self.op.basis().sup_norm(k)).fold(0.0, f64::max);
        let r = radius * s * (self.op.len() as f64).sqrt();
        let mut l = 0.0;
        for &(kind, c) in &self.parts {
            l += c.abs()
                * match kind {
                    DriftKind::USq => 2.0 * r,
                    DriftKind::USinU => 1.0 + r,
                    _ => 1.0,
                };
        }
        LipschitzConstants { l: 0.0, l_tilde: l, growth: l }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum DiffusionKind {
    MultCos,
    SqrtA,
}

/// Multiplicative noise forms; column `i` is the coefficient of `dW_i`.
pub struct NemytskiiDiffusion {
    parts: Vec<(DiffusionKind, f64)>,
    op: SpectralOperator,
    grid: Option<PhysicalGrid>,
    weights: Vec<Vec<f64>>,
    dim: usize,
    constants: LipschitzConstants,
}

impl NemytskiiDiffusion {
    fn new(forms: &[FormSpec], op: &SpectralOperator, grid: Option<PhysicalGrid>, dim: usize, constants: LipschitzConstants) -> Result<Self> {
        let parts = forms
            .iter()
            .map(|f| {
                let k = match f.form.as_str() {
                    "mult_cos" => DiffusionKind::MultCos,
                    "sqrt_a" => DiffusionKind::SqrtA,
                    other => return Err(Error::UnknownForm(other.to_owned())),
                };
                Ok((k, f.coeff))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut weights = Vec::new();
        if parts.iter().any(|(k, _)| *k == DiffusionKind::MultCos) {
            let g = grid.as_ref().expect("grid built");
            if matches!(op.basis(), Basis::Abstract) {
                return Err(Error::UnsupportedBasis("abstract (mult_cos)".into()));
            }
            for i in 0..dim {
                let freq = (i + 1) as f64;
                weights.push((0..g.point_count()).map(|j| std::f64::consts::SQRT_2 * (freq * g.point(j)[0]).cos()).collect());
            }
        }
        Ok(Self {
            parts,
            op: op.clone(),
            grid,
            weights,
            dim,
            constants,
        })
    }
}

impl Diffusion for NemytskiiDiffusion {
    fn eval(&self, _t: f64, x: &StateVector) -> NoiseOperator {
        let mut out = NoiseOperator::zeros(x.len(), self.dim);
        for &(kind, c) in &self.parts {
            match kind {
                DiffusionKind::SqrtA => {
                    let col = self.op.frac_power_apply(0.5, x).expect("power in range");
                    for (k, v) in col.coeffs().iter().enumerate() {
                        out.set(k, 0, out.get(k, 0) + v * c);
                    }
                }
                DiffusionKind::MultCos => {
                    let grid = self.grid.as_ref().expect("grid built");
                    let u = grid.to_real_values(x).expect("state length matches grid");
                    for (i, w) in self.weights.iter().enumerate() {
                        let prod: Vec<f64> = u.iter().zip(w).map(|(a, b)| a * b).collect();
                        let col = grid.project_real(&prod).expect("grid values");
                        let col = self.op.frac_power_apply(-0.5, &col).expect("power in range");
                        for (k, v) in col.coeffs().iter().enumerate() {
                            out.set(k, i, out.get(k, i) + v * c);
                        }
                    }
                }
            }
        }
        out
    }

    fn noise_dim(&self) -> usize {
        self.dim
    }

    fn constants(&self) -> LipschitzConstants {
        self.constants
    }
}

/// Additive noise `b` as a `K × M` operator.
fn additive_operator(forms: &[FormSpec], op: &SpectralOperator, dim: usize) -> Result<Option<NoiseOperator>> {
    if forms.is_empty() {
        return Ok(None);
    }
    let mut b = NoiseOperator::zeros(op.len(), dim);
    for f in forms {
        match f.form.as_str() {
            "single_mode" => {
                let k = f.param.unwrap_or(0.0) as usize;
                if k >= op.len() {
                    return Err(Error::InvalidScenario(format!("single_mode index {k} beyond cutoff")));
                }
                b.set(k, 0, b.get(k, 0) + f.coeff);
            }
            "diagonal_decay" => {
                let beta = f.param.unwrap_or(1.0);
                for k in 0..op.len().min(dim) {
                    let v = f.coeff * op.mu(k).norm().powf(-beta);
                    b.set(k, k, b.get(k, k) + v);
                }
            }
            other => return Err(Error::UnknownForm(other.to_owned())),
        }
    }
    Ok(Some(b))
}

pub fn build_operator(scenario: &Scenario) -> Result<SpectralOperator> {
    let cfg = &scenario.operator;
    match (&cfg.basis, &cfg.eigenvalues) {
        (Basis::Abstract, Some(e)) => SpectralOperator::from_real(e, cfg.shift, Basis::Abstract),
        (Basis::Abstract, None) => Err(Error::InvalidScenario("abstract basis needs an eigenvalue list".into())),
        (basis, None) => SpectralOperator::laplacian(basis.clone(), cfg.modes, cfg.shift),
        (_, Some(_)) => Err(Error::InvalidScenario("eigenvalue lists are only allowed for the abstract basis".into())),
    }
}

fn initial_value(u0: &InitialValue, modes: usize) -> Result<StateVector> {
    match u0 {
        InitialValue::Algebraic { amplitude, decay } => Ok(StateVector::from_real(
            &(0..modes).map(|k| amplitude / (1.0 + k as f64).powf(*decay)).collect::<Vec<_>>(),
        )),
        InitialValue::SingleMode { index, amplitude } => {
            if *index >= modes {
                return Err(Error::InvalidScenario(format!("initial mode {index} beyond cutoff")));
            }
            let mut v = vec![Complex64::new(0.0, 0.0); modes];
            v[*index] = Complex64::new(*amplitude, 0.0);
            StateVector::new(v)
        }
        InitialValue::Coefficients { values } => {
            if values.len() != modes {
                return Err(Error::DimensionMismatch {
                    expected: modes,
                    found: values.len(),
                });
            }
            Ok(StateVector::from_real(values))
        }
    }
}

/// Builds the problem and checks the declared constants on random pairs.
pub fn build_problem(scenario: &Scenario) -> Result<ProblemSpec> {
    scenario.validate()?;
    let op = build_operator(scenario)?;
    let family = match &scenario.operator.time_dependence {
        None => OperatorFamily::Constant(op.clone()),
        Some(profile) => OperatorFamily::scaled(op.clone(), profile.clone())?,
    };
    let needs_grid = !(scenario.drift.is_empty() && scenario.local_drift.is_empty() && scenario.noise.diffusion.is_empty());
    let grid = || -> Result<Option<PhysicalGrid>> {
        if needs_grid {
            Ok(Some(PhysicalGrid::for_nemytskii(op.basis().clone(), op.len())?))
        } else {
            Ok(None)
        }
    };
    let u0 = initial_value(&scenario.u0, op.len())?;
    let mut spec = ProblemSpec::new(family, u0, scenario.horizon, scenario.p);
    spec.q = scenario.q;
    if !scenario.drift.is_empty() {
        let d = NemytskiiDrift::new(&scenario.drift, &op, grid()?, scenario.declared.drift, false)?;
        spec = spec.with_drift(Arc::new(d));
    }
    if !scenario.local_drift.is_empty() {
        let d = NemytskiiDrift::new(&scenario.local_drift, &op, grid()?, LipschitzConstants::default(), true)?;
        spec = spec.with_local_drift(Arc::new(d));
    }
    if !scenario.noise.diffusion.is_empty() {
        let d = NemytskiiDiffusion::new(&scenario.noise.diffusion, &op, grid()?, scenario.noise.dim, scenario.declared.diffusion)?;
        spec = spec.with_diffusion(Arc::new(d));
    }
    if !scenario.noise.local_diffusion.is_empty() {
        let d = NemytskiiDiffusion::new(&scenario.noise.local_diffusion, &op, grid()?, scenario.noise.dim, LipschitzConstants::default())?;
        spec = spec.with_local_diffusion(Arc::new(d));
    }
    spec.b = additive_operator(&scenario.noise.additive, &op, scenario.noise.dim)?;
    spec.noise_dim = scenario.noise.dim;
    let report = validate_constants(&spec, 100, scenario.seed);
    if !report.passed() {
        return Err(Error::InvalidScenario(format!(
            "{}: declared constants violated (drift {:e}/{:e}, diffusion {:e}/{:e})",
            scenario.id, report.drift_lipschitz, report.drift_growth, report.diffusion_lipschitz, report.diffusion_growth
        )));
    }
    Ok(spec)
}
