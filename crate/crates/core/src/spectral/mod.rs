//! Diagonal sectorial operators and the scales of spaces they generate.

mod basis;
mod operator;
mod state;
pub mod trace;
pub mod transform;

pub use basis::{torus_modes, Basis, TorusMode, TrigKind};
pub use operator::SpectralOperator;
pub use state::StateVector;
pub use trace::{interp_norm_real, Quadrature, TraceNorm};
pub use transform::{grid_norm_lq, PhysicalGrid};
