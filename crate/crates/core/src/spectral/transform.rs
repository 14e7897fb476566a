//! Coefficient ↔ grid transforms for the structured bases.
//!
//! Torus grids carry the normalized measure `dx/(2π)^d`; interval grids use
//! the points `jπ/N`, `j = 0..N`, with trapezoid weights `π/N`. Abstract
//! bases get the identity map so pointwise forms act on coefficients.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::basis::{torus_modes, Basis, TrigKind};
use super::state::StateVector;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone)]
enum Layout {
    Torus {
        dim: usize,
        /// Flat positions of `+k` and `−k` plus the trig kind, per mode.
        slots: Vec<(usize, usize, TrigKind)>,
        wavevectors: Vec<Vec<i64>>,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
    Sine {
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
    Identity,
}

/// Physical-space realization of a truncated eigenbasis.
#[derive(Clone)]
pub struct PhysicalGrid {
    basis: Basis,
    modes: usize,
    size: usize,
    layout: Layout,
}

impl std::fmt::Debug for PhysicalGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhysicalGrid")
            .field("basis", &self.basis)
            .field("modes", &self.modes)
            .field("size", &self.size)
            .finish()
    }
}

fn wrap(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

fn flat_index(k: &[i64], n: usize) -> usize {
    k.iter().rev().fold(0, |acc, &c| acc * n + wrap(c, n))
}

/// In-place d-dimensional transform on an `n^dim` array, axis 0 fastest.
fn fft_nd(data: &mut [Complex64], n: usize, dim: usize, fft: &Arc<dyn Fft<f64>>) {
    let mut line = vec![ZERO; n];
    let total = data.len();
    for axis in 0..dim {
        let stride = n.pow(axis as u32);
        for base in 0..total {
            if (base / stride) % n != 0 {
                continue;
            }
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            fft.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                data[base + i * stride] = *v;
            }
        }
    }
}

impl PhysicalGrid {
    pub fn new(basis: Basis, modes: usize, size: usize) -> Result<Self> {
        basis.validate()?;
        let mut planner = FftPlanner::<f64>::new();
        let layout = match &basis {
            Basis::FourierTorus { dim, .. } => {
                let dim = *dim;
                let tm = torus_modes(dim, modes);
                let kmax = tm
                    .iter()
                    .flat_map(|m| m.wavevector.iter().map(|c| c.unsigned_abs() as usize))
                    .max()
                    .unwrap_or(0);
                let required = if dim == 1 { 2 * modes } else { 4 * kmax.max(1) };
                if size < required {
                    return Err(Error::AliasedGrid {
                        grid_size: size,
                        required,
                    });
                }
                let slots = tm
                    .iter()
                    .map(|m| {
                        let neg: Vec<i64> = m.wavevector.iter().map(|c| -c).collect();
                        (flat_index(&m.wavevector, size), flat_index(&neg, size), m.kind)
                    })
                    .collect();
                Layout::Torus {
                    dim,
                    slots,
                    wavevectors: tm.into_iter().map(|m| m.wavevector).collect(),
                    forward: planner.plan_fft_forward(size),
                    inverse: planner.plan_fft_inverse(size),
                }
            }
            Basis::SineInterval { .. } => {
                let required = 2 * modes;
                if size < required {
                    return Err(Error::AliasedGrid {
                        grid_size: size,
                        required,
                    });
                }
                Layout::Sine {
                    forward: planner.plan_fft_forward(2 * size),
                    inverse: planner.plan_fft_inverse(2 * size),
                }
            }
            Basis::Abstract => Layout::Identity,
        };
        Ok(Self {
            basis,
            modes,
            size,
            layout,
        })
    }

    /// Padded grid used for pointwise nonlinearities: quadratic products of
    /// retained modes are resolved without aliasing.
    pub fn for_nemytskii(basis: Basis, modes: usize) -> Result<Self> {
        let size = match &basis {
            Basis::FourierTorus { dim: 1, .. } | Basis::SineInterval { .. } => 4 * modes,
            Basis::FourierTorus { dim, .. } => {
                let kmax = torus_modes(*dim, modes)
                    .iter()
                    .flat_map(|m| m.wavevector.iter().map(|c| c.unsigned_abs() as usize))
                    .max()
                    .unwrap_or(1);
                4 * kmax.max(1)
            }
            Basis::Abstract => modes,
        };
        Self::new(basis, modes, size)
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of stored grid values.
    pub fn point_count(&self) -> usize {
        match &self.layout {
            Layout::Torus { dim, .. } => self.size.pow(*dim as u32),
            Layout::Sine { .. } => self.size,
            Layout::Identity => self.modes,
        }
    }

    /// Coordinates of grid point `j`.
    pub fn point(&self, j: usize) -> Vec<f64> {
        match &self.layout {
            Layout::Torus { dim, .. } => {
                let mut rem = j;
                (0..*dim)
                    .map(|_| {
                        let i = rem % self.size;
                        rem /= self.size;
                        2.0 * PI * i as f64 / self.size as f64
                    })
                    .collect()
            }
            Layout::Sine { .. } => vec![PI * j as f64 / self.size as f64],
            Layout::Identity => vec![j as f64],
        }
    }

    fn quadrature_weight(&self) -> f64 {
        match &self.layout {
            Layout::Torus { dim, .. } => 1.0 / self.size.pow(*dim as u32) as f64,
            Layout::Sine { .. } => PI / self.size as f64,
            Layout::Identity => 1.0,
        }
    }

    /// Field values; `axis = Some(i)` gives `∂_i` of the field instead.
    fn synthesize(&self, x: &StateVector, axis: Option<usize>) -> Result<Vec<Complex64>> {
        x.check_len(self.modes)?;
        match &self.layout {
            Layout::Torus {
                dim,
                slots,
                wavevectors,
                inverse,
                ..
            } => {
                if let Some(ax) = axis {
                    if ax >= *dim {
                        return Err(Error::InvalidParameter {
                            name: "axis",
                            value: ax as f64,
                        });
                    }
                }
                let mut buf = vec![ZERO; self.point_count()];
                for (c, (&(pos, neg, kind), k)) in x.coeffs().iter().zip(slots.iter().zip(wavevectors)) {
                    let (hat_pos, hat_neg) = match kind {
                        TrigKind::Constant => (*c, ZERO),
                        TrigKind::Cos => (c / SQRT_2, c / SQRT_2),
                        TrigKind::Sin => (c * Complex64::new(0.0, -1.0) / SQRT_2, c * Complex64::new(0.0, 1.0) / SQRT_2),
                    };
                    let (hat_pos, hat_neg) = match axis {
                        Some(ax) => {
                            let ik = Complex64::new(0.0, k[ax] as f64);
                            (hat_pos * ik, -hat_neg * ik)
                        }
                        None => (hat_pos, hat_neg),
                    };
                    buf[pos] += hat_pos;
                    if kind != TrigKind::Constant {
                        buf[neg] += hat_neg;
                    }
                }
                fft_nd(&mut buf, self.size, *dim, inverse);
                Ok(buf)
            }
            Layout::Sine { inverse, .. } => {
                let n2 = 2 * self.size;
                let mut buf = vec![ZERO; n2];
                let scale = (2.0 / PI).sqrt();
                for (i, c) in x.coeffs().iter().enumerate() {
                    let k = i + 1;
                    match axis {
                        None => {
                            // sin θ = (e^{iθ} − e^{−iθ}) / 2i
                            let h = c * scale / Complex64::new(0.0, 2.0);
                            buf[k % n2] += h;
                            buf[(n2 - k) % n2] -= h;
                        }
                        Some(0) => {
                            let h = c * scale * k as f64 / 2.0;
                            buf[k % n2] += h;
                            buf[(n2 - k) % n2] += h;
                        }
                        Some(ax) => {
                            return Err(Error::InvalidParameter {
                                name: "axis",
                                value: ax as f64,
                            })
                        }
                    }
                }
                inverse.process(&mut buf);
                buf.truncate(self.size);
                Ok(buf)
            }
            Layout::Identity => match axis {
                None => Ok(x.coeffs().to_vec()),
                Some(_) => Err(Error::UnsupportedBasis(self.basis.name())),
            },
        }
    }

    pub fn to_values(&self, x: &StateVector) -> Result<Vec<Complex64>> {
        self.synthesize(x, None)
    }

    /// Real part of the field; exact for real coefficient vectors.
    pub fn to_real_values(&self, x: &StateVector) -> Result<Vec<f64>> {
        Ok(self.synthesize(x, None)?.into_iter().map(|v| v.re).collect())
    }

    pub fn derivative_values(&self, x: &StateVector, axis: usize) -> Result<Vec<f64>> {
        Ok(self
            .synthesize(x, Some(axis))?
            .into_iter()
            .map(|v| v.re)
            .collect())
    }

    /// Galerkin projection of grid values onto the retained modes.
    pub fn project(&self, values: &[Complex64]) -> Result<StateVector> {
        if values.len() != self.point_count() {
            return Err(Error::DimensionMismatch {
                expected: self.point_count(),
                found: values.len(),
            });
        }
        match &self.layout {
            Layout::Torus {
                dim, slots, forward, ..
            } => {
                let mut buf = values.to_vec();
                fft_nd(&mut buf, self.size, *dim, forward);
                let norm = 1.0 / buf.len() as f64;
                let coeffs = slots
                    .iter()
                    .map(|&(pos, neg, kind)| {
                        let (p, n) = (buf[pos] * norm, buf[neg] * norm);
                        match kind {
                            TrigKind::Constant => p,
                            TrigKind::Cos => (p + n) / SQRT_2,
                            TrigKind::Sin => (p - n) * Complex64::new(0.0, 1.0) / SQRT_2,
                        }
                    })
                    .collect();
                Ok(StateVector::from_vec_unchecked(coeffs))
            }
            Layout::Sine { forward, .. } => {
                let n = self.size;
                let mut buf = vec![ZERO; 2 * n];
                for j in 1..n {
                    buf[j] = values[j];
                    buf[2 * n - j] = -values[j];
                }
                forward.process(&mut buf);
                // Σ_j u_j sin(kπj/N) = (i/2)·FFT_k over the odd extension.
                let scale = (PI / 2.0).sqrt() * 2.0 / n as f64;
                let coeffs = (1..=self.modes)
                    .map(|k| buf[k] * Complex64::new(0.0, 0.5) * scale)
                    .collect();
                Ok(StateVector::from_vec_unchecked(coeffs))
            }
            Layout::Identity => Ok(StateVector::from_vec_unchecked(values.to_vec())),
        }
    }

    pub fn project_real(&self, values: &[f64]) -> Result<StateVector> {
        let values: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.project(&values)
    }

    /// Discrete `L^q` norm of grid values.
    pub fn lq_norm_values(&self, values: &[Complex64], q: f64) -> Result<f64> {
        if matches!(self.layout, Layout::Identity) {
            return Err(Error::UnsupportedBasis(self.basis.name()));
        }
        if !(q >= 1.0) {
            return Err(Error::InvalidParameter { name: "q", value: q });
        }
        let w = self.quadrature_weight();
        if q.is_infinite() {
            return Ok(values.iter().map(|v| v.norm()).fold(0.0, f64::max));
        }
        let sum: f64 = values.iter().map(|v| v.norm().powf(q)).sum();
        Ok((w * sum).powf(1.0 / q))
    }

    pub fn lq_norm(&self, x: &StateVector, q: f64) -> Result<f64> {
        let values = self.to_values(x)?;
        self.lq_norm_values(&values, q)
    }
}

/// `L^q` norm of the trigonometric interpolant of `x` on a grid of `grid_size` points per axis.
pub fn grid_norm_lq(x: &StateVector, q: f64, basis: &Basis, grid_size: usize) -> Result<f64> {
    if matches!(basis, Basis::Abstract) {
        return Err(Error::UnsupportedBasis(basis.name()));
    }
    PhysicalGrid::new(basis.clone(), x.len(), grid_size)?.lq_norm(x, q)
}
