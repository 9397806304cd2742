//! The Gevrey weight `A_{k,η} = e^{z⟨k,η⟩^γ} ⟨k,η⟩^σ` and its parameter set.
//!
//! The exponent `z⟨k,kt⟩^γ` grows superlinearly along trajectories, so all
//! weight arithmetic is done in log space; `weight` exponentiates only on
//! demand and reports overflow instead of returning `inf`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::japanese_bracket;

/// Largest log-weight we are willing to exponentiate.
pub const LOG_WEIGHT_CAP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevreyParams {
    /// Analyticity radius `z >= 0`.
    pub z: f64,
    /// Gevrey index `γ ∈ (0, 1]`.
    pub gamma: f64,
    /// Regularity exponent `σ > 3`.
    pub sigma: f64,
    /// Mode-count exponent `α < 1/2` with `σ - α > d`.
    pub alpha: f64,
}

impl GevreyParams {
    pub fn new(z: f64, gamma: f64, sigma: f64, alpha: f64, d: usize) -> Result<Self> {
        let p = Self { z, gamma, sigma, alpha };
        p.validate(d)?;
        Ok(p)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.z >= 0.0) {
            return Err(Error::Config(format!("z={} must be >= 0", self.z)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma={} outside (0,1]", self.gamma)));
        }
        if !(self.sigma > 3.0) {
            return Err(Error::Config(format!("sigma={} must exceed 3", self.sigma)));
        }
        if !(self.alpha < 0.5) {
            return Err(Error::Config(format!("alpha={} must be < 1/2", self.alpha)));
        }
        if !(self.sigma - self.alpha > d as f64) {
            return Err(Error::Config(format!(
                "sigma - alpha = {} must exceed d = {d}",
                self.sigma - self.alpha
            )));
        }
        Ok(())
    }

    pub fn with_z(&self, z: f64) -> Self {
        Self { z, ..*self }
    }

    /// `log A_{k,η} = z⟨k,η⟩^γ + σ log⟨k,η⟩`.
    pub fn log_weight(&self, k: &[i64], eta: &[f64]) -> f64 {
        let br = japanese_bracket(k, eta);
        self.z * br.powf(self.gamma) + self.sigma * br.ln()
    }

    /// Same from a precomputed bracket value.
    pub fn log_weight_br(&self, bracket: f64) -> f64 {
        self.z * bracket.powf(self.gamma) + self.sigma * bracket.ln()
    }

    /// `A_{k,η}`, failing with a saturation flag when the exponent leaves the
    /// representable range (caller must shrink z or truncate the lattice).
    pub fn weight(&self, k: &[i64], eta: &[f64]) -> Result<f64> {
        let lw = self.log_weight(k, eta);
        if lw > LOG_WEIGHT_CAP {
            return Err(Error::WeightOverflow { log_weight: lw });
        }
        Ok(lw.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degenerate_weight_is_one() {
        // z = 0, σ = 0 gives A ≡ 1; σ=0 bypasses validation on purpose
        let p = GevreyParams { z: 0.0, gamma: 1.0, sigma: 0.0, alpha: 0.0 };
        for &(k, e) in &[(0i64, 0.0f64), (3, 4.0), (-7, 11.5)] {
            assert_abs_diff_eq!(p.weight(&[k], &[e]).unwrap(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn origin_weight_is_exp_z() {
        let p = GevreyParams { z: 0.7, gamma: 0.5, sigma: 4.0, alpha: 0.4 };
        assert_abs_diff_eq!(p.weight(&[0], &[0.0]).unwrap(), 0.7f64.exp(), epsilon = 1e-14);
    }

    #[test]
    fn overflow_saturates() {
        let p = GevreyParams { z: 10.0, gamma: 1.0, sigma: 4.0, alpha: 0.4 };
        match p.weight(&[64], &[1000.0]) {
            Err(Error::WeightOverflow { log_weight }) => assert!(log_weight > LOG_WEIGHT_CAP),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn monotone_in_every_argument() {
        let base = GevreyParams { z: 0.4, gamma: 0.7, sigma: 4.0, alpha: 0.3 };
        let w = |p: &GevreyParams, k: i64, e: f64| p.log_weight(&[k], &[e]);
        assert!(w(&base, 2, 3.0) < w(&base.with_z(0.5), 2, 3.0));
        let more_sigma = GevreyParams { sigma: 5.0, ..base };
        assert!(w(&base, 2, 3.0) < w(&more_sigma, 2, 3.0));
        assert!(w(&base, 2, 3.0) < w(&base, 3, 3.0));
        assert!(w(&base, 2, 3.0) < w(&base, 2, 4.0));
        assert!(w(&base, -2, 3.0) < w(&base, -3, 3.0));
    }

    #[test]
    fn eta_derivative_bounded_by_weight() {
        // |∂_η A_{k,η}| <= C·A_{k,η} with C independent of the lattice point,
        // checked by central finite differences over a sample of the lattice.
        let p = GevreyParams { z: 0.8, gamma: 0.6, sigma: 4.0, alpha: 0.3 };
        let h = 1e-5;
        let mut max_ratio: f64 = 0.0;
        for k in [1i64, 2, 5, 17, 40] {
            for eta in [0.0, 0.3, 1.0, 4.0, 9.5, 20.0, 45.0] {
                let la = p.log_weight(&[k], &[eta + h]);
                let lb = p.log_weight(&[k], &[eta - h]);
                // d(log A)/dη equals (∂_η A)/A
                let ratio = ((la - lb) / (2.0 * h)).abs();
                max_ratio = max_ratio.max(ratio);
            }
        }
        // analytic bound: |∂_η log A| <= zγ⟨⟩^{γ-1} + σ/⟨⟩ <= zγ + σ
        let bound = p.z * p.gamma + p.sigma;
        assert!(max_ratio <= bound + 1e-6, "ratio {max_ratio} vs bound {bound}");
    }
}
