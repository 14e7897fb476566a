//! One exponential-integrator step and the discrete Picard map built from it.
//!
//! For a step `[t_n, t_{n+1}]` with argument `φ_n` and propagated state `V_n`
//!
//! ```text
//! V_{n+1} = e^{−μΔt} V_n + J(μ) (F(t_n, φ_n) + f) + Σ_i (B(t_n, φ_n) + b) e_i ⊙ Z_{·,i,n}
//! ```
//!
//! The forward recursion `φ = V` is the fixed point of the map `φ ↦ V`.

use num_complex::Complex64;

use super::problem::{OperatorFamily, ProblemSpec};
use crate::error::{Error, Result};
use crate::noise::{phi2, BrownianPath, OuStepper, ResidualDraws};
use crate::spectral::{SpectralOperator, StateVector, TraceNorm};

/// Freezing correction `(A(s_m) − A(t)) x` integrated exactly in time
/// with `μ(t)` linear inside each step and `x` held at the left endpoint.
#[derive(Clone, Debug)]
struct Freeze {
    family: OperatorFamily,
    mu_frozen: Vec<Complex64>,
    phi2: Vec<Complex64>,
}

pub(crate) struct Engine<'a> {
    spec: &'a ProblemSpec,
    op: SpectralOperator,
    ou: OuStepper,
    path: &'a BrownianPath,
    draws: &'a ResidualDraws,
    freeze: Option<Freeze>,
    trace: Option<TraceNorm>,
    pub(crate) radius: f64,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(spec: &'a ProblemSpec, op: SpectralOperator, path: &'a BrownianPath, draws: &'a ResidualDraws) -> Result<Self> {
        if path.noise_dim() != spec.noise_dim {
            return Err(Error::DimensionMismatch {
                expected: spec.noise_dim,
                found: path.noise_dim(),
            });
        }
        spec.u0.check_len(op.len())?;
        let ou = OuStepper::new(&op, path.grid().dt());
        let trace = if spec.has_local_parts() {
            Some(TraceNorm::new(&op, spec.trace_theta(), spec.p, Default::default())?)
        } else {
            None
        };
        Ok(Self {
            spec,
            op,
            ou,
            path,
            draws,
            freeze: None,
            trace,
            radius: f64::INFINITY,
        })
    }

    /// Engine for a piece of a time-dependent family frozen at `op = A(s_m)`.
    pub(crate) fn frozen(
        spec: &'a ProblemSpec,
        op: SpectralOperator,
        path: &'a BrownianPath,
        draws: &'a ResidualDraws,
    ) -> Result<Self> {
        let dt = path.grid().dt();
        let freeze = Freeze {
            family: spec.family.clone(),
            mu_frozen: op.shifted().to_vec(),
            phi2: op.shifted().iter().map(|&mu| phi2(mu, dt)).collect(),
        };
        let mut engine = Self::new(spec, op, path, draws)?;
        engine.freeze = Some(freeze);
        Ok(engine)
    }

    pub(crate) fn dt(&self) -> f64 {
        self.ou.dt()
    }

    fn clamp(&self, x: &StateVector) -> StateVector {
        match &self.trace {
            Some(t) if self.radius.is_finite() => {
                let r = t.norm(x);
                if r > self.radius {
                    x.scale(self.radius / r)
                } else {
                    x.clone()
                }
            }
            _ => x.clone(),
        }
    }

    /// `V_{n+1}` from the argument `φ_n` and the propagated state `V_n`.
    pub(crate) fn advance(&self, n: usize, arg: &StateVector, prev: &StateVector) -> StateVector {
        let spec = self.spec;
        let t = self.path.grid().time(n);
        let modes = self.op.len();
        let local_arg = if spec.has_local_parts() {
            Some(self.clamp(arg))
        } else {
            None
        };

        let mut drift = vec![Complex64::new(0.0, 0.0); modes];
        let mut any_drift = false;
        for part in [
            spec.drift.as_ref().map(|d| d.eval(t, arg)),
            spec.f.clone(),
            spec.local_drift.as_ref().zip(local_arg.as_ref()).map(|(d, x)| d.eval(t, x)),
        ]
        .into_iter()
        .flatten()
        {
            any_drift = true;
            for (a, b) in drift.iter_mut().zip(part.coeffs()) {
                *a += b;
            }
        }

        let mut noise = None::<crate::noise::NoiseOperator>;
        for part in [
            spec.diffusion.as_ref().map(|d| d.eval(t, arg)),
            spec.b.clone(),
            spec.local_diffusion.as_ref().zip(local_arg.as_ref()).map(|(d, x)| d.eval(t, x)),
        ]
        .into_iter()
        .flatten()
        {
            match &mut noise {
                Some(acc) => acc.add_assign(&part),
                None => noise = Some(part),
            }
        }

        let decay = self.ou.decay();
        let phi = self.ou.phi();
        let mut out: Vec<Complex64> = prev.coeffs().iter().zip(decay).map(|(v, d)| d * v).collect();
        if any_drift {
            for ((o, p), g) in out.iter_mut().zip(phi).zip(&drift) {
                *o += p * g;
            }
        }
        if let Some(fr) = &self.freeze {
            let dt = self.dt();
            let mu_t = fr.family.shifted_at(t);
            let beta = fr.family.slope_at(t);
            for k in 0..modes {
                let gap = fr.mu_frozen[k] - mu_t[k];
                let weight = gap * phi[k] - beta[k] * (phi[k] * dt - fr.phi2[k]);
                out[k] += weight * arg.coeffs()[k];
            }
        }
        if let Some(g) = noise {
            let dw = self.path.increments_at(n);
            let block = self.draws.block(n);
            for (k, o) in out.iter_mut().enumerate() {
                for (i, gk) in g.row(k).iter().enumerate() {
                    if gk.re == 0.0 && gk.im == 0.0 {
                        continue;
                    }
                    let base = (i * modes + k) * 2;
                    *o += gk * self.ou.increment(k, dw[i], block[base], block[base + 1]);
                }
            }
        }
        StateVector::from_vec_unchecked(out)
    }

    /// Forward recursion on `[j0, j1]` starting from `start`.
    pub(crate) fn forward(&self, j0: usize, j1: usize, start: StateVector) -> Vec<StateVector> {
        let mut states = Vec::with_capacity(j1 - j0 + 1);
        states.push(start);
        for n in j0..j1 {
            let prev = &states[n - j0];
            let next = self.advance(n, prev, prev);
            states.push(next);
        }
        states
    }

    /// The Picard map `φ ↦ L(φ)` on `[j0, j0 + φ.len() − 1]`.
    pub(crate) fn apply_map(&self, j0: usize, start: &StateVector, phi: &[StateVector]) -> Vec<StateVector> {
        let mut out = Vec::with_capacity(phi.len());
        out.push(start.clone());
        for (m, arg) in phi[..phi.len() - 1].iter().enumerate() {
            let next = self.advance(j0 + m, arg, &out[m]);
            out.push(next);
        }
        out
    }

    /// Free evolution `S(t − t_{j0}) start` built by the same step products.
    pub(crate) fn free_evolution(&self, len: usize, start: &StateVector) -> Vec<StateVector> {
        let mut out = Vec::with_capacity(len);
        out.push(start.clone());
        for m in 1..len {
            let v: Vec<Complex64> = out[m - 1].coeffs().iter().zip(self.ou.decay()).map(|(v, d)| d * v).collect();
            out.push(StateVector::from_vec_unchecked(v));
        }
        out
    }

    /// `‖d‖_{L^p(X₁)} + M ‖d‖_{L^p(X₀)}` over the given slice, `Δt`-weighted.
    pub(crate) fn weighted_norm(&self, d: &[StateVector], m_weight: f64) -> f64 {
        let p = self.spec.p;
        let dt = self.dt();
        let (mut s1, mut s0) = (0.0, 0.0);
        for x in d {
            s1 += self.op.norm_x1(x).powf(p);
            if m_weight > 0.0 {
                s0 += x.norm().powf(p);
            }
        }
        (dt * s1).powf(1.0 / p) + m_weight * (dt * s0).powf(1.0 / p)
    }
}

/// Picard iterates on one window.
pub(crate) struct WindowResult {
    pub states: Vec<StateVector>,
    pub iterations: usize,
    pub increments: Vec<f64>,
    pub converged: bool,
}

/// Iterates `φ^{m+1} = L(φ^m)` on `[j0, j1]` until
/// `|||φ^{m+1} − φ^m||| ≤ tol |||φ^1 − φ^0|||`, the norm taken over `(j0, j1]`.
pub(crate) fn picard_window(
    engine: &Engine<'_>,
    j0: usize,
    j1: usize,
    start: &StateVector,
    guess: Option<Vec<StateVector>>,
    tol: f64,
    max_iter: usize,
    m_weight: f64,
) -> WindowResult {
    let len = j1 - j0 + 1;
    let mut phi = guess.unwrap_or_else(|| engine.free_evolution(len, start));
    phi[0] = start.clone();
    let mut increments = Vec::new();
    let mut first = None;
    for m in 1..=max_iter {
        let next = engine.apply_map(j0, start, &phi);
        let diff: Vec<StateVector> = next[1..].iter().zip(&phi[1..]).map(|(a, b)| a.sub(b)).collect();
        let d = engine.weighted_norm(&diff, m_weight);
        let scale = engine.weighted_norm(&next[1..], m_weight);
        increments.push(d);
        phi = next;
        let d1 = *first.get_or_insert(d);
        let finite = phi.iter().all(StateVector::is_finite);
        if !finite {
            break;
        }
        if d == 0.0 || d <= tol * d1 && m > 1 || d <= 4.0 * f64::EPSILON * scale {
            return WindowResult {
                states: phi,
                iterations: m,
                increments,
                converged: true,
            };
        }
    }
    WindowResult {
        states: phi,
        iterations: increments.len(),
        increments,
        converged: false,
    }
}

pub(crate) fn ratios(increments: &[f64]) -> Vec<f64> {
    increments
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect()
}
