//! Finite-dimensional cylindrical Brownian motion, Itô integrals and exact
//! stochastic convolution steps.

mod brownian;
mod operator;
pub mod ou;
mod rng;

pub use brownian::{sample_path, BrownianPath, TimeGrid};
pub use operator::{ito_integral, AdaptedSteps, NoiseOperator};
pub use ou::{ou_step, phi1, phi2, stoch_convolution, OuStepper, ResidualDraws};
pub use rng::{CounterRng, StreamTag};
