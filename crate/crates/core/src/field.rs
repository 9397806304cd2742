//! Spectral Newton solver for the nonlinear elliptic coupling
//! `-ΔU + βU + h(U) = ρ` on the torus, returning the small-norm branch
//! (the unique solution near the origin for small data).
//!
//! The linear part is diagonal in k; `h` acts pointwise in x. Newton steps
//! solve the linearized update either spectrally with a frozen-coefficient
//! inner iteration (β > 0) or through a dense gauged Jacobian (β = 0 with
//! h ≠ 0, where the constant mode is fixed by the solvability condition
//! `⟨h(U)⟩ = 0` with the mean of U as the extra unknown).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingSpec;
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::state::{dft_position, idft_position};

/// Solution of one elliptic solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialField {
    /// Spectral coefficients Û_k over the position lattice (natural order).
    pub u_hat: Vec<Complex64>,
    /// Max-norm of the PDE defect on the grid.
    pub residual_norm: f64,
    pub newton_iterations: usize,
    /// Observed contraction margin `‖U‖_∞ / R` (0 for entire h).
    pub basin_margin: f64,
}

/// `|k|²` over the flattened position lattice.
pub fn lattice_k2(grid: &TorusGrid) -> Vec<f64> {
    let d = grid.d;
    let n = grid.n_x;
    let total = n.pow(d as u32);
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            let mut k2 = 0.0;
            for a in (0..d).rev() {
                let stride = n.pow(a as u32);
                let bin = rem / stride;
                rem %= stride;
                let k = TorusGrid::signed_mode(bin, n) as f64;
                k2 += k * k;
            }
            k2
        })
        .collect()
}

fn to_real(grid: &TorusGrid, spectral: &[Complex64]) -> Result<Vec<f64>> {
    let phys = idft_position(grid, spectral);
    let scale = phys.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let max_im = phys.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if max_im > 1e-8 * scale.max(1.0) {
        return Err(Error::Numerical(format!(
            "field solve expects a real density; imaginary part {max_im:.3e}"
        )));
    }
    Ok(phys.into_iter().map(|z| z.re).collect())
}

fn to_spectral(grid: &TorusGrid, real: &[f64]) -> Vec<Complex64> {
    let c: Vec<Complex64> = real.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_position(grid, &c)
}

struct Workspace {
    grid: TorusGrid,
    spec: CouplingSpec,
    k2: Vec<f64>,
    rho: Vec<f64>,
}

impl Workspace {
    /// PDE defect `-ΔU + βU + h(U) - ρ` in real space.
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        let u_hat = to_spectral(&self.grid, u);
        let lap: Vec<Complex64> = u_hat
            .iter()
            .zip(&self.k2)
            .map(|(&uh, &k2)| uh * k2)
            .collect();
        let lap_real = to_real(&self.grid, &lap)?;
        let mut r = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            let h = self.spec.h_eval(u[i])?;
            r.push(lap_real[i] + self.spec.beta * u[i] + h - self.rho[i]);
        }
        Ok(r)
    }

    /// Solve `(-Δ + β + h'(u)·)δ = rhs` by a frozen-shift spectral inner
    /// iteration (requires β + min h' bounded away from the -Δ spectrum gap;
    /// true in the small-data regime).
    fn linear_solve_spectral(&self, u: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let hp: Vec<f64> = u
            .iter()
            .map(|&v| self.spec.h_prime_eval(v))
            .collect::<Result<_>>()?;
        let c = hp.iter().sum::<f64>() / hp.len() as f64;
        let shift = self.spec.beta + c;
        if shift <= 1e-12 {
            return Err(Error::Numerical(
                "spectral linear solve needs β + mean h' > 0".into(),
            ));
        }
        let mut delta = vec![0.0; rhs.len()];
        for _ in 0..200 {
            // δ ← (-Δ + shift)^{-1} (rhs - (h' - c) δ)
            let mut work: Vec<f64> = rhs
                .iter()
                .zip(&hp)
                .zip(&delta)
                .map(|((&r, &h), &d)| r - (h - c) * d)
                .collect();
            let w_hat = to_spectral(&self.grid, &work);
            let sol: Vec<Complex64> = w_hat
                .iter()
                .zip(&self.k2)
                .map(|(&w, &k2)| w / (k2 + shift))
                .collect();
            work = to_real(&self.grid, &sol)?;
            let diff = work
                .iter()
                .zip(&delta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let scale = work.iter().map(|v| v.abs()).fold(0.0, f64::max);
            delta = work;
            if diff <= 1e-14 * scale.max(1e-300) {
                return Ok(delta);
            }
        }
        Err(Error::Numerical(
            "inner linear iteration did not contract; data too large".into(),
        ))
    }

    /// Dense gauged Jacobian solve for β=0 with h ≠ 0 (d=1 scale): the mean
    /// equation is replaced by the gauge row so the constant mode stays
    /// pinned; the solvability condition is handled by the outer loop.
    fn linear_solve_dense(&self, u: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let n = u.len();
        if n > 512 {
            return Err(Error::Numerical(
                "dense elliptic Jacobian limited to n <= 512".into(),
            ));
        }
        let hp: Vec<f64> = u
            .iter()
            .map(|&v| self.spec.h_prime_eval(v))
            .collect::<Result<_>>()?;
        // columns of -Δ by applying the symbol to unit vectors
        let mut a = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            let e_hat = dft_position(&self.grid, &e);
            let lap: Vec<Complex64> = e_hat
                .iter()
                .zip(&self.k2)
                .map(|(&v, &k2)| v * k2)
                .collect();
            let col = idft_position(&self.grid, &lap);
            for i in 0..n {
                a[i][j] = col[i].re;
            }
        }
        for i in 0..n {
            a[i][i] += self.spec.beta + hp[i];
        }
        let mut b = rhs.to_vec();
        // gauge: replace the row with the weakest diagonal coupling to the
        // constant mode by the mean constraint
        for j in 0..n {
            a[0][j] = 1.0 / n as f64;
        }
        b[0] = 0.0;
        solve_dense(&mut a, &mut b)?;
        Ok(b)
    }
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<()> {
    let n = b.len();
    for col in 0..n {
        let (piv, &pval) = a[col..]
            .iter()
            .map(|row| &row[col])
            .enumerate()
            .max_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).unwrap())
            .unwrap();
        if pval.abs() < 1e-14 {
            return Err(Error::Numerical("singular elliptic Jacobian".into()));
        }
        let piv = piv + col;
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        b[col] /= a[col][col];
        let (head, tail) = b.split_at_mut(col);
        for (row, hb) in head.iter_mut().enumerate() {
            *hb -= a[row][col] * tail[0];
        }
    }
    Ok(())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Solve the coupling for a mean-zero spectral density slice. Newton with
/// Armijo damping from `U = 0`; returns the small-norm branch.
pub fn solve_poisson(
    rho_hat: &[Complex64],
    grid: &TorusGrid,
    spec: &CouplingSpec,
    tol: f64,
) -> Result<PotentialField> {
    let total = grid.n_x.pow(grid.d as u32);
    if rho_hat.len() != total {
        return Err(Error::Config(format!(
            "density slice has {} modes, lattice has {total}",
            rho_hat.len()
        )));
    }
    let mean = rho_hat[0].norm() / (crate::grid::TWO_PI).powi(grid.d as i32);
    if mean > 1e-8 {
        return Err(Error::Config(format!(
            "density must be mean-zero; mean amplitude {mean:.3e}"
        )));
    }
    let k2 = lattice_k2(grid);

    // pure linear couplings: diagonal solve, no iteration
    if !spec.has_h() {
        let mut u_hat = vec![Complex64::new(0.0, 0.0); total];
        for i in 0..total {
            let denom = k2[i] + spec.beta;
            u_hat[i] = if denom > 0.0 {
                rho_hat[i] / denom
            } else {
                Complex64::new(0.0, 0.0) // β=0 gauge on the constant mode
            };
        }
        let residual_norm = poisson_residual(&u_hat, rho_hat, grid, spec)?;
        return Ok(PotentialField {
            u_hat,
            residual_norm,
            newton_iterations: 0,
            basin_margin: 0.0,
        });
    }

    let ws = Workspace {
        grid: grid.clone(),
        spec: spec.clone(),
        k2,
        rho: to_real(grid, rho_hat)?,
    };

    // for β=0 the constant mode is not controlled by the operator: Newton
    // works on the mean-projected residual and the scalar solvability
    // condition ⟨h(U)⟩ = 0 fixes the gauge in an interleaved secant pass
    let project = spec.beta == 0.0;
    let effective = |r: &[f64]| -> Vec<f64> {
        if project {
            let m = r.iter().sum::<f64>() / r.len() as f64;
            r.iter().map(|&x| x - m).collect()
        } else {
            r.to_vec()
        }
    };

    let mut u = vec![0.0; total];
    let mut r = effective(&ws.residual(&u)?);
    let mut rnorm = max_abs(&r);
    let mut iters = 0usize;
    for _outer in 0..8 {
        while rnorm > tol {
            iters += 1;
            if iters > 80 {
                return Err(Error::Numerical(format!(
                    "Newton stalled at residual {rnorm:.3e} after 80 iterations"
                )));
            }
            let neg_r: Vec<f64> = r.iter().map(|&x| -x).collect();
            let delta = if spec.beta > 0.0 {
                ws.linear_solve_spectral(&u, &neg_r)?
            } else {
                ws.linear_solve_dense(&u, &neg_r)?
            };
            // Armijo damping: stay on the small branch
            let mut step = 1.0;
            loop {
                let trial: Vec<f64> =
                    u.iter().zip(&delta).map(|(&a, &d)| a + step * d).collect();
                if max_abs(&trial) >= 0.9 * spec.radius {
                    return Err(Error::RadiusExceeded {
                        arg: max_abs(&trial),
                        radius: spec.radius,
                    });
                }
                let trial_r = effective(&ws.residual(&trial)?);
                let trial_norm = max_abs(&trial_r);
                if trial_norm <= (1.0 - 0.5 * step) * rnorm || trial_norm <= tol {
                    u = trial;
                    r = trial_r;
                    rnorm = trial_norm;
                    break;
                }
                step *= 0.5;
                if step < 1e-4 {
                    return Err(Error::Numerical(format!(
                        "Newton direction not contracting (residual {rnorm:.3e}); \
                         no small solution found"
                    )));
                }
            }
        }
        if !project {
            break;
        }
        polish_gauge(&mut u, &ws, tol)?;
        let full = ws.residual(&u)?;
        if max_abs(&full) <= tol {
            rnorm = max_abs(&full);
            break;
        }
        r = effective(&full);
        rnorm = max_abs(&r);
        if rnorm <= tol {
            // projected part converged but the mean defect persists
            return Err(Error::Numerical(
                "solvability condition <h(U)> = 0 unreachable for this coupling".into(),
            ));
        }
    }
    if project {
        let full = ws.residual(&u)?;
        rnorm = max_abs(&full);
        if rnorm > tol {
            return Err(Error::Numerical(format!(
                "gauged Newton left residual {rnorm:.3e} above tolerance {tol:.1e}"
            )));
        }
    }

    let u_hat = to_spectral(grid, &u);
    let basin_margin = if spec.radius.is_finite() {
        max_abs(&u) / spec.radius
    } else {
        0.0
    };
    Ok(PotentialField {
        u_hat,
        residual_norm: rnorm,
        newton_iterations: iters,
        basin_margin,
    })
}

/// Secant iteration on the scalar solvability condition `⟨h(U + m)⟩ = 0`
/// (the k=0 component of the equation when β = 0).
fn polish_gauge(u: &mut Vec<f64>, ws: &Workspace, tol: f64) -> Result<()> {
    let n = u.len() as f64;
    let q = |u: &[f64], m: f64| -> Result<f64> {
        let mut acc = 0.0;
        for &v in u {
            acc += ws.spec.h_eval(v + m)?;
        }
        Ok(acc / n)
    };
    let mut m0 = 0.0;
    let mut q0 = q(u, m0)?;
    if q0.abs() <= tol {
        return Ok(());
    }
    let mut m1 = -q0.signum() * (q0.abs().sqrt()).min(0.1);
    let mut q1 = q(u, m1)?;
    for _ in 0..80 {
        if q1.abs() <= tol * 0.1 {
            for v in u.iter_mut() {
                *v += m1;
            }
            return Ok(());
        }
        let denom = q1 - q0;
        if denom.abs() < 1e-300 {
            break;
        }
        let m2 = m1 - q1 * (m1 - m0) / denom;
        m0 = m1;
        q0 = q1;
        m1 = m2;
        q1 = q(u, m1)?;
    }
    Err(Error::Numerical(format!(
        "solvability condition <h(U)> = 0 has no reachable root (residual {q1:.3e}); \
         no small solution for this β=0 coupling"
    )))
}

/// `Ê_k = -i k Û_k` per axis.
pub fn electric_field(grid: &TorusGrid, u_hat: &[Complex64]) -> Vec<Vec<Complex64>> {
    let d = grid.d;
    let n = grid.n_x;
    let total = n.pow(d as u32);
    let mut out = vec![vec![Complex64::new(0.0, 0.0); total]; d];
    for flat in 0..total {
        let mut rem = flat;
        for a in (0..d).rev() {
            let stride = n.pow(a as u32);
            let bin = rem / stride;
            rem %= stride;
            let k = TorusGrid::signed_mode(bin, n) as f64;
            out[d - 1 - a][flat] = Complex64::new(0.0, -k) * u_hat[flat];
        }
    }
    out
}

/// Max-norm of the PDE defect for a candidate potential.
pub fn poisson_residual(
    u_hat: &[Complex64],
    rho_hat: &[Complex64],
    grid: &TorusGrid,
    spec: &CouplingSpec,
) -> Result<f64> {
    let k2 = lattice_k2(grid);
    let u = to_real(grid, u_hat)?;
    let h: Vec<Complex64> = u
        .iter()
        .map(|&v| spec.h_eval(v).map(|h| Complex64::new(h, 0.0)))
        .collect::<Result<_>>()?;
    let h_hat = dft_position(grid, &h);
    let mut worst = 0.0f64;
    let defect: Vec<Complex64> = (0..u_hat.len())
        .map(|i| u_hat[i] * (k2[i] + spec.beta) + h_hat[i] - rho_hat[i])
        .collect();
    for z in idft_position(grid, &defect) {
        worst = worst.max(z.norm());
    }
    Ok(worst)
}
