use serde::Serialize;

use crate::noise::TimeGrid;
use crate::spectral::{SpectralOperator, StateVector};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveFlags {
    pub converged: bool,
    pub iterations: usize,
    pub contraction_ratios: Vec<f64>,
    /// `|||φ^{m+1} − φ^m|||` per Picard iteration.
    pub picard_increments: Vec<f64>,
    /// Grid indices `0 = j_0 < j_1 < … = N` of the pieces used.
    pub kappa_partition: Vec<usize>,
    pub stopping_time: Option<f64>,
    pub stopping_step: Option<usize>,
    /// First grid times at which the trace norm reached each integer level.
    pub level_times: Vec<f64>,
    /// Largest relative oscillation of `A(t)` over a frozen piece.
    pub freeze_oscillation: Option<f64>,
}

/// Discrete trajectory `U(t_0), …, U(t_N)`, truncated at a stopping time.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionPath {
    pub grid: TimeGrid,
    pub states: Vec<StateVector>,
    pub flags: SolveFlags,
}

impl SolutionPath {
    pub fn new(grid: TimeGrid, states: Vec<StateVector>) -> Self {
        Self {
            grid,
            states,
            flags: SolveFlags::default(),
        }
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("solution path has at least one state")
    }

    pub fn is_stopped(&self) -> bool {
        self.flags.stopping_time.is_some()
    }

    /// `(Σ_{n ∈ range} Δt ‖U_n‖^p_{X_α})^{1/p}` over a left-endpoint range.
    pub fn lp_norm(&self, op: &SpectralOperator, alpha: f64, p: f64, range: std::ops::Range<usize>) -> f64 {
        let dt = self.grid.dt();
        let sum: f64 = self.states[range]
            .iter()
            .map(|u| op.norm_alpha(alpha, u).powf(p))
            .sum();
        (dt * sum).powf(1.0 / p)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.sub(b).norm())
            .fold(0.0, f64::max)
    }
}
