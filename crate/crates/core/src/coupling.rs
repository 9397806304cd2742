//! The elliptic coupling `-ΔU + βU + h(U) = ρ` is parameterized by β and an
//! analytic nonlinearity `h(x) = Σ_{n>=2} a_n x^n` with radius R. The
//! majorant `h̃(x) = Σ |a_n| x^n` drives the smallness bookkeeping, so both
//! are evaluated with explicit series remainders.
//!
//! Named instances: `vp` (β=0, h=0), `screened` (β=1, h=0), and `vpme`
//! (β=1, `h(U) = e^U - 1 - U`, i.e. `a_n = 1/n!`, R = ∞).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Nonlinearity {
    /// h ≡ 0 (vp / screened couplings).
    Zero,
    /// `h(U) = e^U - 1 - U`; coefficients `1/n!` for n >= 2, entire.
    ExpMinusOneMinusU,
    /// Finite coefficient list `a_0, a_1, a_2, …` (a_0 = a_1 = 0 enforced).
    Coeffs(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub beta: f64,
    pub h: Nonlinearity,
    /// Analyticity radius of h (`f64::INFINITY` allowed).
    pub radius: f64,
}

impl CouplingSpec {
    pub fn vp() -> Self {
        Self { beta: 0.0, h: Nonlinearity::Zero, radius: f64::INFINITY }
    }

    pub fn screened() -> Self {
        Self { beta: 1.0, h: Nonlinearity::Zero, radius: f64::INFINITY }
    }

    pub fn vpme() -> Self {
        Self { beta: 1.0, h: Nonlinearity::ExpMinusOneMinusU, radius: f64::INFINITY }
    }

    pub fn from_coeffs(beta: f64, coeffs: Vec<f64>, radius: f64) -> Result<Self> {
        if beta < 0.0 {
            return Err(Error::Config(format!("beta={beta} must be nonnegative")));
        }
        if coeffs.iter().take(2).any(|&c| c != 0.0) {
            return Err(Error::Config(
                "h must vanish to second order: a_0 = a_1 = 0".into(),
            ));
        }
        if !(radius > 0.0) {
            return Err(Error::Config(format!("radius {radius} must be positive")));
        }
        Ok(Self { beta, h: Nonlinearity::Coeffs(coeffs), radius })
    }

    /// Parse a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "vp" => Ok(Self::vp()),
            "screened" => Ok(Self::screened()),
            "vpme" => Ok(Self::vpme()),
            other => Err(Error::Config(format!(
                "unknown coupling preset '{other}' (expected vp | screened | vpme)"
            ))),
        }
    }

    pub fn has_h(&self) -> bool {
        !matches!(self.h, Nonlinearity::Zero)
    }

    fn check_radius(&self, x: f64) -> Result<()> {
        if x.abs() >= self.radius {
            return Err(Error::RadiusExceeded { arg: x.abs(), radius: self.radius });
        }
        Ok(())
    }

    /// `h(u)`, summed to machine precision with a monitored remainder.
    pub fn h_eval(&self, u: f64) -> Result<f64> {
        self.check_radius(u)?;
        match &self.h {
            Nonlinearity::Zero => Ok(0.0),
            Nonlinearity::ExpMinusOneMinusU => Ok(series_exp_tail(u, 0)),
            Nonlinearity::Coeffs(a) => {
                // finite polynomial: Horner, no remainder
                Ok(a.iter().rev().fold(0.0, |acc, &c| acc * u + c))
            }
        }
    }

    /// `h'(u)` for the Newton linearization.
    pub fn h_prime_eval(&self, u: f64) -> Result<f64> {
        self.check_radius(u)?;
        match &self.h {
            Nonlinearity::Zero => Ok(0.0),
            Nonlinearity::ExpMinusOneMinusU => Ok(series_exp_tail(u, 1)),
            Nonlinearity::Coeffs(a) => Ok(a
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (n, &c)| acc * u + n as f64 * c)),
        }
    }

    /// Majorant `h̃(x) = Σ |a_n| x^n`, nondecreasing on [0, R).
    pub fn h_tilde_eval(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::Domain(format!("h_tilde argument {x} must be >= 0")));
        }
        self.check_radius(x)?;
        match &self.h {
            Nonlinearity::Zero => Ok(0.0),
            // all coefficients already positive
            Nonlinearity::ExpMinusOneMinusU => Ok(series_exp_tail(x, 0)),
            Nonlinearity::Coeffs(a) => {
                Ok(a.iter().rev().fold(0.0, |acc, &c| acc * x + c.abs()))
            }
        }
    }
}

/// `Σ_{n>=2} u^n/n!` (deriv=0) or its derivative `Σ_{n>=2} u^{n-1}/(n-1)!`
/// (deriv=1), summed until the geometric remainder bound
/// `|term|·|u|/(n+1-|u|)` drops below machine precision of the sum.
fn series_exp_tail(u: f64, deriv: usize) -> f64 {
    let mut term = if deriv == 0 { u * u / 2.0 } else { u };
    let mut sum = term;
    let mut n = if deriv == 0 { 2usize } else { 1 };
    loop {
        n += 1;
        term *= u / n as f64;
        sum += term;
        if n as f64 > 2.0 * (1.0 + u.abs()) {
            let denom = (n + 1) as f64 - u.abs();
            let remainder = term.abs() * u.abs() / denom;
            if remainder <= f64::EPSILON * sum.abs().max(1e-300) {
                return sum;
            }
        }
        if n > 400 {
            return sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vpme_h_at_one_is_e_minus_two() {
        let c = CouplingSpec::vpme();
        assert_abs_diff_eq!(c.h_eval(1.0).unwrap(), std::f64::consts::E - 2.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_h_is_zero() {
        let c = CouplingSpec::screened();
        for &u in &[0.0, 0.3, -2.0] {
            assert_eq!(c.h_eval(u).unwrap(), 0.0);
            assert_eq!(c.h_prime_eval(u).unwrap(), 0.0);
        }
    }

    #[test]
    fn vpme_series_matches_closed_form() {
        let c = CouplingSpec::vpme();
        for &u in &[-3.0f64, -0.7, 1e-4, 0.5, 2.0] {
            let want = u.exp() - 1.0 - u;
            assert_abs_diff_eq!(c.h_eval(u).unwrap(), want, epsilon = 1e-13 * want.abs().max(1.0));
            let want_p = u.exp() - 1.0;
            assert_abs_diff_eq!(c.h_prime_eval(u).unwrap(), want_p, epsilon = 1e-13);
        }
    }

    #[test]
    fn majorant_dominates_and_is_quadratic_near_zero() {
        let c = CouplingSpec::vpme();
        // series-tail oracle: h̃(x) <= x²/2 · 1/(1 - x/3) for 0 <= x < 3
        for &x in &[0.05, 0.2, 0.5] {
            let ht = c.h_tilde_eval(x).unwrap();
            assert!(ht >= c.h_eval(x).unwrap().abs() - 1e-15);
            assert!(ht >= c.h_eval(-x).unwrap().abs() - 1e-16, "x={x}");
            let bound = x * x / 2.0 / (1.0 - x / 3.0);
            assert!(ht <= bound + 1e-15, "x={x}: {ht} vs {bound}");
        }
        // monotone on [0, R)
        let mut prev = 0.0;
        for i in 1..40 {
            let x = i as f64 * 0.05;
            let v = c.h_tilde_eval(x).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn coefficient_list_constraints() {
        assert!(CouplingSpec::from_coeffs(1.0, vec![0.0, 0.0, 0.5], 2.0).is_ok());
        assert!(CouplingSpec::from_coeffs(1.0, vec![0.1, 0.0, 0.5], 2.0).is_err());
        assert!(CouplingSpec::from_coeffs(1.0, vec![0.0, 0.3], 2.0).is_err());
        assert!(CouplingSpec::from_coeffs(-1.0, vec![0.0, 0.0, 0.5], 2.0).is_err());
    }

    #[test]
    fn radius_enforced() {
        let c = CouplingSpec::from_coeffs(1.0, vec![0.0, 0.0, 1.0], 0.75).unwrap();
        assert!(c.h_eval(0.5).is_ok());
        assert!(matches!(c.h_eval(0.8), Err(Error::RadiusExceeded { .. })));
        assert!(c.h_tilde_eval(0.8).is_err());
    }

    #[test]
    fn polynomial_h_evaluates_exactly() {
        let c = CouplingSpec::from_coeffs(0.0, vec![0.0, 0.0, 2.0, -1.0], f64::INFINITY).unwrap();
        let u = 0.7;
        assert_abs_diff_eq!(c.h_eval(u).unwrap(), 2.0 * u * u - u * u * u, epsilon = 1e-15);
        assert_abs_diff_eq!(c.h_prime_eval(u).unwrap(), 4.0 * u - 3.0 * u * u, epsilon = 1e-15);
        assert_abs_diff_eq!(c.h_tilde_eval(u).unwrap(), 2.0 * u * u + u * u * u, epsilon = 1e-15);
    }

    #[test]
    fn preset_lookup() {
        assert_eq!(CouplingSpec::preset("vp").unwrap(), CouplingSpec::vp());
        assert_eq!(CouplingSpec::preset("screened").unwrap(), CouplingSpec::screened());
        assert_eq!(CouplingSpec::preset("vpme").unwrap(), CouplingSpec::vpme());
        assert!(CouplingSpec::preset("bogus").is_err());
    }
}
