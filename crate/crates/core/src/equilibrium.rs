//! Homogeneous equilibrium profiles μ(v) and verification of the decay and
//! normalization hypotheses their stability theory rests on.
//!
//! A profile carries its Fourier transform μ̂(η), a claimed exponential decay
//! rate θ₀ with prefactor C_μ (`|∂^j μ̂(η)| <= C_μ e^{-θ₀|η|}`), and enough
//! structure to be sampled on velocity grids. The two-bump family measures
//! the beam separation in units of the bump thermal width so that the
//! classical two-stream instability is representable on the unit torus,
//! where spatial modes are integers: with unit-width bumps no separation is
//! unstable for |k| >= 1, while width `σ_b` rescales the stability
//! functional by `1/σ_b²`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::integrate_complex;

pub const TWO_BUMP_DEFAULT_WIDTH: f64 = 0.15;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ProfileKind {
    /// `μ(v) = (2π)^{-d/2} e^{-|v|²/2}`, `μ̂(η) = e^{-|η|²/2}`.
    Maxwellian,
    /// Symmetric double Maxwellian, d=1: bumps of width `sigma_b` centred at
    /// `±u0·sigma_b` with weights `w` and `1-w`.
    TwoBump { u0: f64, w: f64, sigma_b: f64 },
    /// Tabulated μ̂ on a uniform η grid (d=1), linearly interpolated, with
    /// exponential tail extrapolation at the claimed rate.
    Tabulated {
        eta: Vec<f64>,
        mu_hat_re: Vec<f64>,
        mu_hat_im: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumProfile {
    pub d: usize,
    pub kind: ProfileKind,
    /// Claimed exponential decay rate of μ̂.
    pub theta0: f64,
    /// Claimed decay prefactor.
    pub c_mu: f64,
}

/// Probabilists' Hermite polynomial He_n, used for Gaussian μ̂ derivatives.
fn hermite(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        2 => x * x - 1.0,
        3 => x * x * x - 3.0 * x,
        _ => {
            let mut h0 = x * x - 1.0;
            let mut h1 = x * x * x - 3.0 * x;
            for m in 3..n {
                let h2 = x * h1 - m as f64 * h0;
                h0 = h1;
                h1 = h2;
            }
            h1
        }
    }
}

/// `μ(v) = (2π)^{-d/2} e^{-|v|²/2}` with `∫μ = 1` and `μ̂(0) = 1`.
pub fn build_maxwellian(d: usize) -> Result<EquilibriumProfile> {
    if !(1..=3).contains(&d) {
        return Err(Error::Config(format!("maxwellian: d={d} outside 1..=3")));
    }
    Ok(EquilibriumProfile {
        d,
        kind: ProfileKind::Maxwellian,
        theta0: 1.0,
        c_mu: std::f64::consts::E,
    })
}

/// Two-stream negative control with default bump width.
pub fn build_two_bump(u0: f64, w: f64) -> Result<EquilibriumProfile> {
    build_two_bump_with_width(u0, w, TWO_BUMP_DEFAULT_WIDTH)
}

pub fn build_two_bump_with_width(u0: f64, w: f64, sigma_b: f64) -> Result<EquilibriumProfile> {
    if !(u0 >= 0.0) {
        return Err(Error::Config(format!("two_bump: u0={u0} must be >= 0")));
    }
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::Config(format!("two_bump: weight w={w} outside (0,1)")));
    }
    if !(sigma_b > 0.0) {
        return Err(Error::Config(format!("two_bump: width {sigma_b} must be positive")));
    }
    Ok(EquilibriumProfile {
        d: 1,
        kind: ProfileKind::TwoBump { u0, w, sigma_b },
        theta0: sigma_b,
        c_mu: std::f64::consts::E,
    })
}

pub fn build_tabulated(
    eta: Vec<f64>,
    mu_hat_re: Vec<f64>,
    mu_hat_im: Vec<f64>,
    theta0: f64,
    c_mu: f64,
) -> Result<EquilibriumProfile> {
    if eta.len() < 2 || eta.len() != mu_hat_re.len() || eta.len() != mu_hat_im.len() {
        return Err(Error::Config("tabulated profile: mismatched table lengths".into()));
    }
    if !eta.windows(2).all(|p| p[1] > p[0]) {
        return Err(Error::Config("tabulated profile: eta grid must be strictly increasing".into()));
    }
    if !(theta0 > 0.0) || !(c_mu > 0.0) {
        return Err(Error::Config("tabulated profile: theta0 and c_mu must be positive".into()));
    }
    Ok(EquilibriumProfile {
        d: 1,
        kind: ProfileKind::Tabulated { eta, mu_hat_re, mu_hat_im },
        theta0,
        c_mu,
    })
}

impl EquilibriumProfile {
    /// μ(v) pointwise.
    pub fn mu(&self, v: &[f64]) -> f64 {
        match &self.kind {
            ProfileKind::Maxwellian => {
                let v2: f64 = v.iter().map(|c| c * c).sum();
                (-v2 / 2.0).exp() / (2.0 * std::f64::consts::PI).powf(self.d as f64 / 2.0)
            }
            ProfileKind::TwoBump { u0, w, sigma_b } => {
                let c = u0 * sigma_b;
                let norm = 1.0 / (sigma_b * (2.0 * std::f64::consts::PI).sqrt());
                let g = |x: f64| (-x * x / (2.0 * sigma_b * sigma_b)).exp();
                norm * (w * g(v[0] - c) + (1.0 - w) * g(v[0] + c))
            }
            ProfileKind::Tabulated { .. } => {
                // inverse transform of the tabulated μ̂; symmetric quadrature
                let hi = self.table_eta_max();
                let val = integrate_complex(-hi, hi, 64, 10, |eta| {
                    self.mu_hat(&[eta]) * Complex64::from_polar(1.0, eta * v[0])
                });
                val.re / (2.0 * std::f64::consts::PI)
            }
        }
    }

    fn table_eta_max(&self) -> f64 {
        match &self.kind {
            ProfileKind::Tabulated { eta, .. } => eta.last().copied().unwrap_or(0.0).abs(),
            _ => 0.0,
        }
    }

    /// μ̂(η) pointwise (complex for asymmetric profiles).
    pub fn mu_hat(&self, eta: &[f64]) -> Complex64 {
        match &self.kind {
            ProfileKind::Maxwellian => {
                let e2: f64 = eta.iter().map(|c| c * c).sum();
                Complex64::new((-e2 / 2.0).exp(), 0.0)
            }
            ProfileKind::TwoBump { u0, w, sigma_b } => {
                let c = u0 * sigma_b;
                let env = (-sigma_b * sigma_b * eta[0] * eta[0] / 2.0).exp();
                let osc = Complex64::from_polar(*w, -c * eta[0])
                    + Complex64::from_polar(1.0 - w, c * eta[0]);
                osc * env
            }
            ProfileKind::Tabulated { eta: grid, mu_hat_re, mu_hat_im } => {
                let x = eta[0];
                let (lo, hi) = (grid[0], *grid.last().unwrap());
                if x < lo || x > hi {
                    // exponential tail extrapolation at the claimed rate
                    let (edge, val) = if x < lo {
                        (lo, Complex64::new(mu_hat_re[0], mu_hat_im[0]))
                    } else {
                        let n = grid.len() - 1;
                        (hi, Complex64::new(mu_hat_re[n], mu_hat_im[n]))
                    };
                    return val * (-self.theta0 * (x - edge).abs()).exp();
                }
                // binary search + linear interpolation
                let mut a = 0usize;
                let mut b = grid.len() - 1;
                while b - a > 1 {
                    let m = (a + b) / 2;
                    if grid[m] <= x {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let t = (x - grid[a]) / (grid[b] - grid[a]);
                let va = Complex64::new(mu_hat_re[a], mu_hat_im[a]);
                let vb = Complex64::new(mu_hat_re[b], mu_hat_im[b]);
                va + (vb - va) * t
            }
        }
    }

    /// `∂^j μ̂(η)` for a multi-index j (closed form for the analytic kinds,
    /// central differences for tabulated data).
    pub fn mu_hat_partial(&self, j: &[usize], eta: &[f64]) -> Complex64 {
        match &self.kind {
            ProfileKind::Maxwellian => {
                let mut acc = Complex64::new(1.0, 0.0);
                for (a, &ja) in j.iter().enumerate() {
                    let sign = if ja % 2 == 1 { -1.0 } else { 1.0 };
                    acc *= sign * hermite(ja, eta[a]);
                }
                acc * self.mu_hat(eta)
            }
            ProfileKind::TwoBump { u0, w, sigma_b } => {
                let order = j[0];
                match order {
                    0 => self.mu_hat(eta),
                    1 => {
                        let c = u0 * sigma_b;
                        let x = eta[0];
                        let env = (-sigma_b * sigma_b * x * x / 2.0).exp();
                        let osc = Complex64::from_polar(*w, -c * x)
                            + Complex64::from_polar(1.0 - w, c * x);
                        let dosc = Complex64::new(0.0, -c) * Complex64::from_polar(*w, -c * x)
                            + Complex64::new(0.0, c) * Complex64::from_polar(1.0 - w, c * x);
                        (dosc - osc * (sigma_b * sigma_b * x)) * env
                    }
                    _ => self.fd_partial(order, eta[0]),
                }
            }
            ProfileKind::Tabulated { .. } => self.fd_partial(j[0], eta[0]),
        }
    }

    fn fd_partial(&self, order: usize, x: f64) -> Complex64 {
        let h = 1e-4;
        match order {
            0 => self.mu_hat(&[x]),
            1 => (self.mu_hat(&[x + h]) - self.mu_hat(&[x - h])) / (2.0 * h),
            2 => {
                (self.mu_hat(&[x + h]) - self.mu_hat(&[x]) * 2.0 + self.mu_hat(&[x - h])) / (h * h)
            }
            _ => {
                let f = |y: f64| self.fd_partial(order - 2, y);
                (f(x + h) - f(x) * 2.0 + f(x - h)) / (h * h)
            }
        }
    }

    /// `∫ μ dv` by quadrature (d=1..3 tensor product for named kinds).
    pub fn total_mass(&self) -> f64 {
        match &self.kind {
            ProfileKind::Maxwellian => {
                // product of 1-d integrals, each computed numerically
                let one = crate::quad::integrate_real(-10.0, 10.0, 40, 10, |v| {
                    (-v * v / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
                });
                one.powi(self.d as i32)
            }
            ProfileKind::TwoBump { u0, sigma_b, .. } => {
                let hw = u0 * sigma_b + 12.0 * sigma_b;
                crate::quad::integrate_real(-hw, hw, 160, 10, |v| self.mu(&[v]))
            }
            ProfileKind::Tabulated { .. } => self.mu_hat(&[0.0]).re,
        }
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let m = self.total_mass();
        if (m - 1.0).abs() > tol {
            return Err(Error::Config(format!(
                "equilibrium mass {m} deviates from 1 beyond {tol:.1e}"
            )));
        }
        Ok(())
    }

    /// True when μ̂ is real and even (symmetric profiles).
    pub fn is_symmetric(&self) -> bool {
        match &self.kind {
            ProfileKind::Maxwellian => true,
            ProfileKind::TwoBump { w, .. } => (*w - 0.5).abs() < 1e-15,
            ProfileKind::Tabulated { eta, mu_hat_im, .. } => {
                mu_hat_im.iter().all(|&v| v == 0.0) && eta.first().map(|&e| -e) == eta.last().copied()
            }
        }
    }
}

/// Outcome of the decay-hypothesis check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct H1Report {
    /// Global least-squares slope of `log|∂^j μ̂|` against `-θ|η|` (min over j).
    pub theta_ls: f64,
    /// Local decay rate fitted on the last third of the sample range
    /// (min over j); the quantity compared against the claim.
    pub theta_tail: f64,
    /// Smallest prefactor making `|∂^j μ̂| <= C e^{-θ₀|η|}` hold on the samples.
    pub c_required: f64,
    pub pass: bool,
}

/// Least-squares slope/intercept of y against x.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (0.0, sy / n.max(1.0));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Verify the exponential-decay hypothesis on sampled |∂^j μ̂| values.
///
/// Pass requires the tail-window decay rate to meet the claimed θ₀ for every
/// derivative order `j <= j_max` (j_max is capped at d).
pub fn verify_h1(profile: &EquilibriumProfile, j_max: usize, eta_samples: &[f64]) -> Result<H1Report> {
    if profile.d != 1 {
        return Err(Error::Config("verify_h1 is implemented for d=1 profiles".into()));
    }
    let j_max = j_max.min(profile.d);
    if eta_samples.len() < 8 {
        return Err(Error::Config("verify_h1 needs at least 8 eta samples".into()));
    }
    let mut theta_ls = f64::INFINITY;
    let mut theta_tail = f64::INFINITY;
    let mut c_required: f64 = 0.0;
    for j in 0..=j_max {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &eta in eta_samples {
            let m = profile.mu_hat_partial(&[j], &[eta]).norm();
            c_required = c_required.max(m * (profile.theta0 * eta.abs()).exp());
            if m > 1e-280 {
                xs.push(eta.abs());
                ys.push(m.ln());
            }
        }
        if xs.len() < 4 {
            // decayed below floor everywhere; any exponential claim holds
            continue;
        }
        let (slope, _) = linear_fit(&xs, &ys);
        theta_ls = theta_ls.min(-slope);
        // tail window: last third of the surviving samples
        let cut = xs.len() - (xs.len() / 3).max(2);
        let (tslope, _) = linear_fit(&xs[cut..], &ys[cut..]);
        theta_tail = theta_tail.min(-tslope);
    }
    let pass = theta_tail >= profile.theta0 && theta_tail > 0.0;
    Ok(H1Report { theta_ls, theta_tail, c_required, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::quad::integrate_complex;

    #[test]
    fn maxwellian_is_normalized() {
        for d in 1..=3 {
            let p = build_maxwellian(d).unwrap();
            assert!(p.check_normalized(1e-8).is_ok());
        }
    }

    #[test]
    fn maxwellian_mu_hat_at_zero_is_one() {
        let p = build_maxwellian(1).unwrap();
        assert_abs_diff_eq!(p.mu_hat(&[0.0]).re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn maxwellian_mu_hat_matches_quadrature() {
        // μ̂(η) = ∫ μ(v) e^{-iηv} dv computed independently
        let p = build_maxwellian(1).unwrap();
        for &eta in &[0.0, 0.5, 1.0, 2.5, 4.0] {
            let q = integrate_complex(-12.0, 12.0, 96, 10, |v| {
                Complex64::from_polar(p.mu(&[v]), -eta * v)
            });
            let want = p.mu_hat(&[eta]);
            assert!((q - want).norm() < 1e-10, "eta={eta}: {q} vs {want}");
        }
    }

    #[test]
    fn two_bump_zero_separation_is_maxwellian_shape() {
        let p = build_two_bump(0.0, 0.5).unwrap();
        // single normalized hump with width sigma_b
        assert!(p.check_normalized(1e-8).is_ok());
        let s = TWO_BUMP_DEFAULT_WIDTH;
        for &eta in &[0.0, 1.0, 3.0] {
            let want = (-s * s * eta * eta / 2.0).exp();
            assert_abs_diff_eq!(p.mu_hat(&[eta]).re, want, epsilon = 1e-12);
            assert_abs_diff_eq!(p.mu_hat(&[eta]).im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_bump_normalized_and_hat_matches_quadrature() {
        let p = build_two_bump(4.0, 0.5).unwrap();
        assert!(p.check_normalized(1e-8).is_ok());
        for &eta in &[0.3, 1.7, 6.0] {
            let q = integrate_complex(-3.0, 3.0, 120, 10, |v| {
                Complex64::from_polar(p.mu(&[v]), -eta * v)
            });
            assert!((q - p.mu_hat(&[eta])).norm() < 1e-9);
        }
    }

    #[test]
    fn two_bump_derivative_matches_fd() {
        let p = build_two_bump(4.0, 0.35).unwrap();
        for &eta in &[0.2, 1.1, 5.0] {
            let a = p.mu_hat_partial(&[1], &[eta]);
            let h = 1e-6;
            let fd = (p.mu_hat(&[eta + h]) - p.mu_hat(&[eta - h])) / (2.0 * h);
            assert!((a - fd).norm() < 1e-7);
        }
    }

    #[test]
    fn h1_maxwellian_passes() {
        let p = build_maxwellian(1).unwrap();
        let samples: Vec<f64> = (0..200).map(|i| 8.0 * i as f64 / 199.0).collect();
        let rep = verify_h1(&p, 1, &samples).unwrap();
        assert!(rep.pass, "{rep:?}");
        // Gaussian global LS slope on [0,8] is steep, around |η|-average
        assert!(rep.theta_ls > 1.0, "theta_ls={}", rep.theta_ls);
    }

    #[test]
    fn h1_compact_support_passes_any_claim() {
        // μ̂ supported on [0,1], zero tail
        let eta: Vec<f64> = (0..101).map(|i| i as f64 * 0.05).collect();
        let re: Vec<f64> = eta.iter().map(|&e| if e <= 1.0 { 1.0 - e } else { 0.0 }).collect();
        let im = vec![0.0; eta.len()];
        let mut p = build_tabulated(eta, re, im, 50.0, 1.0).unwrap();
        p.theta0 = 50.0;
        let samples: Vec<f64> = (0..100).map(|i| 2.0 + 3.0 * i as f64 / 99.0).collect();
        let rep = verify_h1(&p, 0, &samples).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn h1_polynomial_decay_fails() {
        // |μ̂| ~ 1/(1+η²) defeats any exponential claim on a long window
        let eta: Vec<f64> = (0..400).map(|i| i as f64 * 0.05).collect();
        let re: Vec<f64> = eta.iter().map(|&e| 1.0 / (1.0 + e * e)).collect();
        let im = vec![0.0; eta.len()];
        let p = build_tabulated(eta, re, im, 0.5, 1.0).unwrap();
        let samples: Vec<f64> = (0..200).map(|i| 8.0 * i as f64 / 199.0).collect();
        let rep = verify_h1(&p, 0, &samples).unwrap();
        assert!(!rep.pass, "{rep:?}");
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(build_two_bump(-1.0, 0.5).is_err());
        assert!(build_two_bump(4.0, 0.0).is_err());
        assert!(build_two_bump(4.0, 1.0).is_err());
        assert!(build_two_bump_with_width(4.0, 0.5, 0.0).is_err());
    }
}
