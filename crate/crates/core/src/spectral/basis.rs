//! Eigenbasis descriptors for the diagonal operators.
//!
//! The periodic basis is real: a constant mode followed by `√2 cos(k·x)` and
//! `√2 sin(k·x)` pairs over a half lattice, ordered by `|k|` (ties broken
//! lexicographically). Real fields therefore have real coefficients, and the
//! normalized torus measure `dx / (2π)^d` makes the basis orthonormal.
//! The interval basis is `√(2/π) sin(kx)` on `(0, π)` with Lebesgue measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    /// Periodic box `[0, 2π)^dim`, operator `(-Δ)^{order/2}`.
    FourierTorus { dim: usize, order: u32 },
    /// Dirichlet interval `(0, π)`, operator `(-Δ)^{order/2}`.
    SineInterval { order: u32 },
    /// No physical realization; coefficients are the field.
    Abstract,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrigKind {
    Constant,
    Cos,
    Sin,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusMode {
    pub wavevector: Vec<i64>,
    pub kind: TrigKind,
}

impl TorusMode {
    pub fn norm_sq(&self) -> i64 {
        self.wavevector.iter().map(|k| k * k).sum()
    }
}

impl Basis {
    pub fn name(&self) -> String {
        match self {
            Basis::FourierTorus { dim, order } => format!("fourier_torus(d={dim}, 2m={order})"),
            Basis::SineInterval { order } => format!("sine_interval(2m={order})"),
            Basis::Abstract => "abstract".to_string(),
        }
    }

    pub fn order(&self) -> Option<u32> {
        match self {
            Basis::FourierTorus { order, .. } | Basis::SineInterval { order } => Some(*order),
            Basis::Abstract => None,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Basis::FourierTorus { dim, order } => {
                if *dim == 0 || *dim > 3 {
                    return Err(Error::InvalidParameter {
                        name: "dim",
                        value: *dim as f64,
                    });
                }
                check_order(*order)
            }
            Basis::SineInterval { order } => check_order(*order),
            Basis::Abstract => Ok(()),
        }
    }

    /// Unshifted eigenvalues `|k|^{2m}` of the first `count` modes.
    pub fn eigenvalues(&self, count: usize) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            Basis::FourierTorus { dim, order } => {
                let m = (*order / 2) as i32;
                Ok(torus_modes(*dim, count)
                    .iter()
                    .map(|mode| (mode.norm_sq() as f64).powi(m))
                    .collect())
            }
            Basis::SineInterval { order } => Ok((1..=count)
                .map(|k| (k as f64).powi(*order as i32))
                .collect()),
            Basis::Abstract => Err(Error::UnsupportedBasis(self.name())),
        }
    }

    /// Sup norm of the `index`-th basis function.
    pub fn sup_norm(&self, index: usize) -> f64 {
        match self {
            Basis::FourierTorus { .. } => {
                if index == 0 {
                    1.0
                } else {
                    std::f64::consts::SQRT_2
                }
            }
            Basis::SineInterval { .. } => (2.0 / std::f64::consts::PI).sqrt(),
            Basis::Abstract => 1.0,
        }
    }
}

fn check_order(order: u32) -> Result<()> {
    if order == 0 || order % 2 != 0 {
        return Err(Error::InvalidParameter {
            name: "order",
            value: order as f64,
        });
    }
    Ok(())
}

fn in_half_space(k: &[i64]) -> bool {
    k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

/// First `count` real Fourier modes on the `dim`-torus.
pub fn torus_modes(dim: usize, count: usize) -> Vec<TorusMode> {
    if count == 0 {
        return Vec::new();
    }
    let mut radius: i64 = 1;
    loop {
        let r2 = radius * radius;
        let mut lattice: Vec<Vec<i64>> = Vec::new();
        let side = (2 * radius + 1) as usize;
        let total = side.pow(dim as u32);
        for flat in 0..total {
            let mut rem = flat;
            let mut k = vec![0i64; dim];
            for c in k.iter_mut() {
                *c = (rem % side) as i64 - radius;
                rem /= side;
            }
            if in_half_space(&k) && k.iter().map(|c| c * c).sum::<i64>() <= r2 {
                lattice.push(k);
            }
        }
        if 2 * lattice.len() + 1 >= count {
            lattice.sort_by(|a, b| {
                let na: i64 = a.iter().map(|c| c * c).sum();
                let nb: i64 = b.iter().map(|c| c * c).sum();
                na.cmp(&nb).then_with(|| a.cmp(b))
            });
            let mut modes = Vec::with_capacity(count);
            modes.push(TorusMode {
                wavevector: vec![0; dim],
                kind: TrigKind::Constant,
            });
            for k in lattice {
                for kind in [TrigKind::Cos, TrigKind::Sin] {
                    if modes.len() == count {
                        return modes;
                    }
                    modes.push(TorusMode {
                        wavevector: k.clone(),
                        kind,
                    });
                }
            }
            return modes;
        }
        radius *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_torus_matches_symmetric_wavenumbers() {
        // 64 modes realize k = -32..31 as constant, 31 cos/sin pairs and cos(32x).
        let eig = Basis::FourierTorus { dim: 1, order: 2 }.eigenvalues(64).unwrap();
        let mut expected: Vec<f64> = (-32i64..32).map(|k| (k * k) as f64).collect();
        expected.sort_by(f64::total_cmp);
        let mut got = eig.clone();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, expected);
        assert!(eig.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn biharmonic_symbol() {
        let eig = Basis::FourierTorus { dim: 1, order: 4 }.eigenvalues(5).unwrap();
        assert_eq!(eig, vec![0.0, 1.0, 1.0, 16.0, 16.0]);
        let eig = Basis::SineInterval { order: 4 }.eigenvalues(3).unwrap();
        assert_eq!(eig, vec![1.0, 16.0, 81.0]);
    }

    #[test]
    fn two_dimensional_modes_are_ordered_by_radius() {
        let modes = torus_modes(2, 9);
        assert_eq!(modes[0].kind, TrigKind::Constant);
        let norms: Vec<i64> = modes.iter().map(TorusMode::norm_sq).collect();
        assert_eq!(norms, vec![0, 1, 1, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn odd_order_rejected() {
        assert!(Basis::SineInterval { order: 3 }.eigenvalues(4).is_err());
    }
}
