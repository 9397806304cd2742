//! Second-kind Volterra solver by trapezoidal product integration.
//!
//! `φ(t) + ∫₀^t κ(t,s) φ(s) ds = S(t)` on a uniform grid: the memory sum is
//! the trapezoid rule with the implicit diagonal term kept on the left, so a
//! step costs one division and the scheme is O(Δt²). A Richardson variant
//! combines Δt and Δt/2 solutions when a certified higher-order answer is
//! needed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumProfile;
use crate::error::{Error, Result};
use crate::penrose::coupling_prefactor;

/// Uniform time grid `t_i = i·Δt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || n_steps == 0 {
            return Err(Error::Config(format!(
                "time grid needs t_final > 0 and n_steps > 0 (got {t_final}, {n_steps})"
            )));
        }
        Ok(Self { t_final, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| i as f64 * self.dt()).collect()
    }

    pub fn refined(&self) -> Self {
        Self { t_final: self.t_final, n_steps: self.n_steps * 2 }
    }
}

/// Full-generality solve with a `(t,s)` kernel callable. O(n²) kernel
/// evaluations; use [`volterra_solve_convolution`] for difference kernels.
pub fn volterra_solve(
    kernel: impl Fn(f64, f64) -> Complex64,
    source: impl Fn(f64) -> Complex64,
    grid: &TimeGrid,
) -> Result<Vec<Complex64>> {
    let dt = grid.dt();
    let n = grid.n_steps;
    let mut phi = Vec::with_capacity(n + 1);
    phi.push(source(0.0));
    for i in 1..=n {
        let ti = i as f64 * dt;
        let denom = Complex64::new(1.0, 0.0) + kernel(ti, ti) * (dt / 2.0);
        if denom.norm() < 1e-8 {
            return Err(Error::Numerical(format!(
                "product-integration diagonal 1 + Δt·κ(t,t)/2 vanished at t={ti}"
            )));
        }
        let mut acc = kernel(ti, 0.0) * phi[0] * 0.5;
        for j in 1..i {
            acc += kernel(ti, j as f64 * dt) * phi[j];
        }
        phi.push((source(ti) - acc * dt) / denom);
    }
    Ok(phi)
}

/// Difference-kernel fast path: `kappa[m] = κ(m·Δt)` with
/// `∫₀^t κ(t-s)φ(s)ds` approximated by the same trapezoid weights.
pub fn volterra_solve_convolution(
    kappa: &[Complex64],
    source: &[Complex64],
    dt: f64,
) -> Result<Vec<Complex64>> {
    let n = source.len();
    if kappa.len() < n {
        return Err(Error::Config("kernel table shorter than source".into()));
    }
    let mut phi = Vec::with_capacity(n);
    phi.push(source[0]);
    for i in 1..n {
        let denom = Complex64::new(1.0, 0.0) + kappa[0] * (dt / 2.0);
        if denom.norm() < 1e-8 {
            return Err(Error::Numerical(
                "product-integration diagonal 1 + Δt·κ(0)/2 vanished".into(),
            ));
        }
        let mut acc = kappa[i] * phi[0] * 0.5;
        for j in 1..i {
            acc += kappa[i - j] * phi[j];
        }
        phi.push((source[i] - acc * dt) / denom);
    }
    Ok(phi)
}

/// One Richardson level over [`volterra_solve_convolution`]: solves at Δt
/// and Δt/2 and combines `(4·fine - coarse)/3` on the coarse points.
/// `kappa_fine` and `source_fine` live on the half-step grid.
pub fn volterra_solve_richardson(
    kappa_fine: &[Complex64],
    source_fine: &[Complex64],
    dt: f64,
) -> Result<Vec<Complex64>> {
    let n_fine = source_fine.len();
    if n_fine % 2 == 0 {
        return Err(Error::Config("fine grid must have an odd point count (2n+1)".into()));
    }
    let kappa_coarse: Vec<Complex64> = kappa_fine.iter().step_by(2).cloned().collect();
    let source_coarse: Vec<Complex64> = source_fine.iter().step_by(2).cloned().collect();
    let coarse = volterra_solve_convolution(&kappa_coarse, &source_coarse, dt)?;
    let fine = volterra_solve_convolution(kappa_fine, source_fine, dt / 2.0)?;
    Ok(coarse
        .iter()
        .enumerate()
        .map(|(i, &c)| (fine[2 * i] * 4.0 - c) / 3.0)
        .collect())
}

/// The memory kernel of the density equation:
/// `κ(t,s) = C_{k,β} · (t-s) · μ̂(k(t-s))`.
pub fn memory_kernel<'a>(
    profile: &'a EquilibriumProfile,
    k: &[i64],
    beta: f64,
) -> impl Fn(f64, f64) -> Complex64 + 'a {
    let c = coupling_prefactor(k, beta);
    let k: Vec<i64> = k.to_vec();
    move |t: f64, s: f64| {
        let u = t - s;
        let eta: Vec<f64> = k.iter().map(|&kc| kc as f64 * u).collect();
        profile.mu_hat(&eta) * (c * u)
    }
}

/// `kappa[m] = C_{k,β}·t_m·μ̂(k t_m)` sampled on a uniform grid.
pub fn memory_kernel_samples(
    profile: &EquilibriumProfile,
    k: &[i64],
    beta: f64,
    grid: &TimeGrid,
) -> Vec<Complex64> {
    let c = coupling_prefactor(k, beta);
    grid.times()
        .iter()
        .map(|&t| {
            let eta: Vec<f64> = k.iter().map(|&kc| kc as f64 * t).collect();
            profile.mu_hat(&eta) * (c * t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn zero_source_gives_zero() {
        let grid = TimeGrid::new(5.0, 100).unwrap();
        let phi = volterra_solve(|_, _| re(1.0), |_| re(0.0), &grid).unwrap();
        assert!(phi.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn zero_kernel_returns_source() {
        let grid = TimeGrid::new(5.0, 64).unwrap();
        let phi = volterra_solve(|_, _| re(0.0), |t| re(t.sin()), &grid).unwrap();
        for (i, &t) in grid.times().iter().enumerate() {
            assert!((phi[i] - re(t.sin())).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_kernel_decays_exponentially() {
        // φ + ∫₀^t φ = 1 differentiates to φ' = -φ: φ = e^{-t}
        let grid = TimeGrid::new(4.0, 512).unwrap();
        let phi = volterra_solve(|_, _| re(1.0), |_| re(1.0), &grid).unwrap();
        let mut worst = 0.0f64;
        for (i, &t) in grid.times().iter().enumerate() {
            worst = worst.max((phi[i] - re((-t).exp())).norm());
        }
        assert!(worst < 1e-5, "err {worst}");
    }

    #[test]
    fn difference_kernel_gives_cosine() {
        // κ(t,s) = t-s, S = 1: φ'' = -φ with φ(0)=1, φ'(0)=0: φ = cos t
        let grid = TimeGrid::new(6.0, 768).unwrap();
        let phi = volterra_solve(|t, s| re(t - s), |_| re(1.0), &grid).unwrap();
        let mut worst = 0.0f64;
        for (i, &t) in grid.times().iter().enumerate() {
            worst = worst.max((phi[i] - re(t.cos())).norm());
        }
        assert!(worst < 2e-5, "err {worst}");
    }

    #[test]
    fn convolution_path_matches_general_path() {
        let grid = TimeGrid::new(6.0, 256).unwrap();
        let dt = grid.dt();
        let kern = |u: f64| Complex64::new((-u).exp() * u.cos(), 0.1 * u.sin());
        let kappa: Vec<Complex64> = grid.times().iter().map(|&t| kern(t)).collect();
        let source: Vec<Complex64> = grid
            .times()
            .iter()
            .map(|&t| Complex64::new((0.7 * t).sin(), 0.2 * t.cos()))
            .collect();
        let a = volterra_solve(|t, s| kern(t - s), |t| {
            Complex64::new((0.7 * t).sin(), 0.2 * t.cos())
        }, &grid)
        .unwrap();
        let b = volterra_solve_convolution(&kappa, &source, dt).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn second_order_convergence() {
        // halving Δt reduces the cosine-benchmark error ~4×
        let err_at = |steps: usize| -> f64 {
            let grid = TimeGrid::new(6.0, steps).unwrap();
            let phi = volterra_solve(|t, s| re(t - s), |_| re(1.0), &grid).unwrap();
            grid.times()
                .iter()
                .enumerate()
                .map(|(i, &t)| (phi[i] - re(t.cos())).norm())
                .fold(0.0, f64::max)
        };
        let e1 = err_at(192);
        let e2 = err_at(384);
        let ratio = e1 / e2;
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn richardson_beats_plain() {
        let grid = TimeGrid::new(6.0, 384).unwrap();
        let kern = |u: f64| re(u);
        let kappa: Vec<Complex64> = grid.times().iter().map(|&t| kern(t)).collect();
        let src = vec![re(1.0); grid.n_steps + 1];
        let plain = volterra_solve_convolution(
            &kappa.iter().step_by(2).cloned().collect::<Vec<_>>(),
            &src.iter().step_by(2).cloned().collect::<Vec<_>>(),
            grid.dt() * 2.0,
        )
        .unwrap();
        let rich = volterra_solve_richardson(&kappa, &src, grid.dt() * 2.0).unwrap();
        let coarse_times: Vec<f64> = grid.times().into_iter().step_by(2).collect();
        let err = |phi: &[Complex64]| -> f64 {
            coarse_times
                .iter()
                .enumerate()
                .map(|(i, &t)| (phi[i] - re(t.cos())).norm())
                .fold(0.0, f64::max)
        };
        assert!(err(&rich) < err(&plain) / 20.0, "{} vs {}", err(&rich), err(&plain));
    }
}
