//! Phase-space grids on the torus.
//!
//! Position lives on `[0, 2π)^d` with `n_x` points per axis and integer dual
//! modes `k ∈ {-n_x/2, …, n_x/2-1}^d`. Velocity is truncated to
//! `[-v_max, v_max]^d` with `n_v` points per axis; the dual frequencies sit on
//! the conjugate grid `η = m·π/v_max`, `m ∈ {-n_v/2, …, n_v/2-1}^d`, so that
//! `Δη·Δv·n_v = 2π` exactly and the semi-discrete Fourier pair round-trips to
//! machine precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Uniform torus × truncated-velocity grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub d: usize,
    pub n_x: usize,
    pub n_v: usize,
    pub v_max: f64,
}

impl TorusGrid {
    pub fn new(d: usize, n_x: usize, n_v: usize, v_max: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::Config(format!("dimension d={d} outside 1..=3")));
        }
        if !n_x.is_power_of_two() || n_x < 2 {
            return Err(Error::Config(format!("n_x={n_x} is not a power of two >= 2")));
        }
        if !n_v.is_power_of_two() || n_v < 2 {
            return Err(Error::Config(format!("n_v={n_v} is not a power of two >= 2")));
        }
        if !(v_max > 0.0) {
            return Err(Error::Config(format!("v_max={v_max} must be positive")));
        }
        Ok(Self { d, n_x, n_v, v_max })
    }

    /// Position spacing `2π/n_x`.
    pub fn dx(&self) -> f64 {
        TWO_PI / self.n_x as f64
    }

    /// Velocity spacing `2 v_max / n_v`.
    pub fn dv(&self) -> f64 {
        2.0 * self.v_max / self.n_v as f64
    }

    /// Dual velocity spacing `π / v_max`.
    pub fn deta(&self) -> f64 {
        std::f64::consts::PI / self.v_max
    }

    /// Largest resolved |η| per axis.
    pub fn eta_max(&self) -> f64 {
        (self.n_v / 2) as f64 * self.deta()
    }

    /// Largest resolved |k| per axis.
    pub fn k_max(&self) -> i64 {
        (self.n_x / 2) as i64
    }

    pub fn x_coord(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn v_coord(&self, j: usize) -> f64 {
        -self.v_max + j as f64 * self.dv()
    }

    /// Signed mode for FFT bin `i` on an axis of length `n` (natural DFT
    /// order: `0,1,…,n/2-1,-n/2,…,-1`).
    pub fn signed_mode(i: usize, n: usize) -> i64 {
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// FFT bin for a signed mode, or None if unresolved.
    pub fn bin_of_mode(m: i64, n: usize) -> Option<usize> {
        let half = (n / 2) as i64;
        if m >= -half && m < half {
            Some(m.rem_euclid(n as i64) as usize)
        } else {
            None
        }
    }

    /// Wavenumber of x-axis bin `i`.
    pub fn k_of_bin(&self, i: usize) -> i64 {
        Self::signed_mode(i, self.n_x)
    }

    /// Dual-velocity frequency of v-axis bin `j`.
    pub fn eta_of_bin(&self, j: usize) -> f64 {
        Self::signed_mode(j, self.n_v) as f64 * self.deta()
    }

    /// Full shape of a phase-space array: d position axes then d velocity axes.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.n_x; self.d];
        s.extend(std::iter::repeat(self.n_v).take(self.d));
        s
    }

    pub fn n_cells(&self) -> usize {
        self.n_x.pow(self.d as u32) * self.n_v.pow(self.d as u32)
    }

    /// Cell volume `Δx^d · Δv^d`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32) * self.dv().powi(self.d as i32)
    }

    /// All signed lattice vectors with `1 <= |k|_∞ <= k_cap`, excluding 0.
    pub fn lattice_modes(d: usize, k_cap: i64) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        let mut cur = vec![-k_cap; d];
        loop {
            if cur.iter().any(|&c| c != 0) {
                out.push(cur.clone());
            }
            let mut axis = 0;
            loop {
                cur[axis] += 1;
                if cur[axis] <= k_cap {
                    break;
                }
                cur[axis] = -k_cap;
                axis += 1;
                if axis == d {
                    return out;
                }
            }
        }
    }
}

/// `√(1 + |k|² + |η|²)` for a lattice vector paired with a frequency vector.
pub fn japanese_bracket(k: &[i64], eta: &[f64]) -> f64 {
    let k2: f64 = k.iter().map(|&c| (c * c) as f64).sum();
    let e2: f64 = eta.iter().map(|&c| c * c).sum();
    (1.0 + k2 + e2).sqrt()
}

/// Scalar shorthand for d=1.
pub fn japanese_bracket_1d(k: f64, eta: f64) -> f64 {
    (1.0 + k * k + eta * eta).sqrt()
}
