use num_complex::Complex64;

use super::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::spectral::{SpectralOperator, StateVector};

/// Finite-rank operator `ℝ^M → X`, stored as the `K × M` matrix of its columns `G e_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseOperator {
    modes: usize,
    dim: usize,
    entries: Vec<Complex64>,
}

impl NoiseOperator {
    pub fn zeros(modes: usize, dim: usize) -> Self {
        Self {
            modes,
            dim,
            entries: vec![Complex64::new(0.0, 0.0); modes * dim],
        }
    }

    pub fn from_columns(columns: &[StateVector]) -> Result<Self> {
        let modes = columns.first().map_or(0, StateVector::len);
        let dim = columns.len();
        let mut g = Self::zeros(modes, dim);
        for (i, col) in columns.iter().enumerate() {
            col.check_len(modes)?;
            for (k, v) in col.coeffs().iter().enumerate() {
                g.entries[k * dim + i] = *v;
            }
        }
        Ok(g)
    }

    /// Diagonal-type operator with `G e_i = c_i e_{i}` for `i < min(K, M)`.
    pub fn diagonal(modes: usize, values: &[f64]) -> Self {
        let mut g = Self::zeros(modes, values.len());
        for (i, &v) in values.iter().enumerate().take(modes) {
            g.set(i, i, Complex64::new(v, 0.0));
        }
        g
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, i: usize) -> Complex64 {
        self.entries[k * self.dim + i]
    }

    pub fn set(&mut self, k: usize, i: usize, value: Complex64) {
        self.entries[k * self.dim + i] = value;
    }

    /// Row `k`: the `k`-th coefficient of every column.
    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.entries[k * self.dim..(k + 1) * self.dim]
    }

    pub fn column(&self, i: usize) -> StateVector {
        StateVector::from_vec_unchecked((0..self.modes).map(|k| self.get(k, i)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.entries.len(), other.entries.len());
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect(),
            ..self.clone()
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|a| a * factor).collect(),
            ..self.clone()
        }
    }

    /// Hilbert–Schmidt norm into `X_α`: `(Σ_i ‖G e_i‖²_{X_α})^{1/2}`.
    pub fn hs_norm(&self, op: &SpectralOperator, alpha: f64) -> f64 {
        debug_assert_eq!(op.len(), self.modes);
        let mut sum = 0.0;
        for k in 0..self.modes {
            let w = op.mu(k).norm().powf(2.0 * alpha);
            sum += w * self.row(k).iter().map(Complex64::norm_sqr).sum::<f64>();
        }
        sum.sqrt()
    }

    /// `Σ_i G e_i · dw_i`
    pub fn apply(&self, dw: &[f64]) -> StateVector {
        StateVector::from_vec_unchecked(
            (0..self.modes)
                .map(|k| self.row(k).iter().zip(dw).map(|(g, w)| g * w).sum())
                .collect(),
        )
    }
}

/// Step operators for a stochastic integral, one per grid step, with the
/// latest increment each step is declared to depend on.
#[derive(Clone, Debug)]
pub struct AdaptedSteps {
    ops: Vec<NoiseOperator>,
}

impl AdaptedSteps {
    pub fn deterministic(ops: Vec<NoiseOperator>) -> Self {
        Self { ops }
    }

    /// `depends_through[n] = Some(j)` declares that step `n` uses `ΔW_0..=ΔW_j`;
    /// adaptedness requires `j < n`.
    pub fn with_dependence(ops: Vec<NoiseOperator>, depends_through: &[Option<usize>]) -> Result<Self> {
        if depends_through.len() != ops.len() {
            return Err(Error::DimensionMismatch {
                expected: ops.len(),
                found: depends_through.len(),
            });
        }
        for (step, dep) in depends_through.iter().enumerate() {
            if let Some(j) = *dep {
                if j >= step {
                    return Err(Error::AdaptednessViolation {
                        step,
                        depends_through: j,
                    });
                }
            }
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[NoiseOperator] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// `Σ_n G_n ΔW_n` with left-endpoint step operators.
pub fn ito_integral(steps: &[NoiseOperator], path: &BrownianPath) -> Result<StateVector> {
    let n = path.grid().n_steps();
    if steps.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: steps.len(),
        });
    }
    let modes = steps.first().map_or(0, NoiseOperator::modes);
    let mut acc = StateVector::zeros(modes);
    for (s, g) in steps.iter().enumerate() {
        if g.dim() != path.noise_dim() {
            return Err(Error::DimensionMismatch {
                expected: path.noise_dim(),
                found: g.dim(),
            });
        }
        if g.modes() != modes {
            return Err(Error::DimensionMismatch {
                expected: modes,
                found: g.modes(),
            });
        }
        acc.axpy(1.0, &g.apply(path.increments_at(s)));
    }
    Ok(acc)
}
