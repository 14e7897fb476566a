use serde::{Deserialize, Serialize};

use super::rng::{CounterRng, StreamTag};
use crate::error::{Error, Result};

/// Uniform grid `t_n = n T / N` on `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: horizon,
            });
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                value: 0.0,
            });
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.horizon * n as f64 / self.n_steps as f64
    }

    /// `log₂ N` when `N` is a power of two.
    pub fn dyadic_levels(&self) -> Option<u32> {
        self.n_steps
            .is_power_of_two()
            .then(|| self.n_steps.trailing_zeros())
    }

    /// Same horizon, `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            horizon: self.horizon,
            n_steps: self.n_steps * factor,
        }
    }
}

/// `M` independent scalar Brownian motions sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    noise_dim: usize,
    /// Row-major `n_steps × noise_dim`.
    increments: Vec<f64>,
    seed: u64,
    path_index: u64,
}

/// Brownian values at all grid points from normals `z` indexed by dyadic address.
///
/// Address 0 carries `W(T)`; address `2^j + i` is the midpoint of interval `i`
/// at level `j`. A grid with twice as many steps reuses every coarser address,
/// so refinements share the coarse path exactly.
fn bridge_values(z: &[f64], horizon: f64) -> Vec<f64> {
    let n = z.len();
    let mut w = vec![0.0; n + 1];
    w[n] = horizon.sqrt() * z[0];
    let levels = n.trailing_zeros();
    for j in 0..levels {
        let span = n >> j;
        let half = span / 2;
        let sd = (horizon / (1u64 << (j + 2)) as f64).sqrt();
        for i in 0..(1usize << j) {
            let left = i * span;
            let right = left + span;
            w[left + half] = 0.5 * (w[left] + w[right]) + sd * z[(1usize << j) + i];
        }
    }
    w
}

impl BrownianPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// Increments `ΔW_n` of all components.
    pub fn increments_at(&self, step: usize) -> &[f64] {
        &self.increments[step * self.noise_dim..(step + 1) * self.noise_dim]
    }

    pub fn increment(&self, step: usize, component: usize) -> f64 {
        self.increments[step * self.noise_dim + component]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W_i(t_n)` for `n = 0..=N`.
    pub fn values(&self, component: usize) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.grid.n_steps + 1);
        out.push(0.0);
        for s in 0..self.grid.n_steps {
            acc += self.increment(s, component);
            out.push(acc);
        }
        out
    }

    /// Copy with the increments from `step` on replaced by independent draws.
    pub fn with_resampled_future(&self, step: usize, seed: u64) -> Self {
        let other = sample_path(seed, self.path_index, self.grid, self.noise_dim);
        let mut increments = self.increments.clone();
        let from = step * self.noise_dim;
        increments[from..].copy_from_slice(&other.increments[from..]);
        Self {
            increments,
            ..self.clone()
        }
    }

    /// Path with all increments zero (deterministic runs).
    pub fn zero(grid: TimeGrid, noise_dim: usize) -> Self {
        Self {
            grid,
            noise_dim,
            increments: vec![0.0; grid.n_steps * noise_dim],
            seed: 0,
            path_index: 0,
        }
    }
}

/// Increments keyed by `(seed, path_index, component, address)`.
///
/// Power-of-two grids use the dyadic bridge, others sequential increments.
pub fn sample_path(seed: u64, path_index: u64, grid: TimeGrid, noise_dim: usize) -> BrownianPath {
    let rng = CounterRng::new(seed);
    let n = grid.n_steps;
    let mut increments = vec![0.0; n * noise_dim];
    let mut z = vec![0.0; n];
    let sqrt_dt = grid.dt().sqrt();
    for i in 0..noise_dim {
        rng.normals_into(path_index, i as u64, StreamTag::Increments, 0, &mut z);
        if grid.dyadic_levels().is_some() {
            let w = bridge_values(&z, grid.horizon);
            for s in 0..n {
                increments[s * noise_dim + i] = w[s + 1] - w[s];
            }
        } else {
            for s in 0..n {
                increments[s * noise_dim + i] = sqrt_dt * z[s];
            }
        }
    }
    BrownianPath {
        grid,
        noise_dim,
        increments,
        seed,
        path_index,
    }
}
