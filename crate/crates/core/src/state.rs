//! Phase-space states and the discrete Fourier calculus on them.
//!
//! The spectral convention matches the continuum transforms
//! `f̂(k,η) = ∫∫ f(x,v) e^{-ik·x} e^{-iη·v} dx dv` with the reconstruction
//! `f = (2π)^{-2d} Σ_k ∫ f̂ e^{ik·x+iη·v} dη`: the forward map is a DFT scaled
//! by the cell volume with an alternating phase on the velocity axes (the
//! velocity grid starts at `-v_max`, not 0), and the pair round-trips exactly.
//!
//! Free-transport pull-back `g(t,x,v) = f(t,x+vt,v)` is the per-mode phase
//! `g̃(k,v) = f̃(k,v) e^{ik·v t}` in the mixed `(k,v)` representation, which is
//! spectrally exact: no interpolation in η ever happens.

use std::sync::Arc;

use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{TorusGrid, TWO_PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Stores `f(t,x,v)`.
    Lab,
    /// Stores the pull-back `g(t,x,v) = f(t,x+vt,v)`.
    FreeTransport,
}

/// Discretized perturbation on a [`TorusGrid`].
#[derive(Debug, Clone)]
pub struct PhaseSpaceState {
    pub grid: TorusGrid,
    /// Complex samples, shape `[n_x; d] ++ [n_v; d]`.
    pub values: ArrayD<Complex64>,
    pub time: f64,
    pub frame: Frame,
}

/// Pull-back output; `filamented` flags that `|k|·t` exceeded the resolved
/// η band for the largest mode, i.e. fine-scale content has aliased.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub state: PhaseSpaceState,
    pub filamented: bool,
}

impl PhaseSpaceState {
    pub fn zero(grid: TorusGrid) -> Self {
        let shape = IxDyn(&grid.shape());
        Self {
            values: ArrayD::zeros(shape),
            grid,
            time: 0.0,
            frame: Frame::Lab,
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64], &[f64]) -> f64) -> Self {
        let mut st = Self::zero(grid);
        let d = st.grid.d;
        let (gx, gv) = (st.grid.clone(), st.grid.clone());
        for (idx, val) in st.values.indexed_iter_mut() {
            let x: Vec<f64> = (0..d).map(|a| gx.x_coord(idx[a])).collect();
            let v: Vec<f64> = (0..d).map(|a| gv.v_coord(idx[d + a])).collect();
            *val = Complex64::new(f(&x, &v), 0.0);
        }
        st
    }

    /// Total perturbation mass `f̂_{0,0} = ∫∫ f`.
    pub fn mass(&self) -> Complex64 {
        self.values.sum() * self.grid.cell_volume()
    }

    pub fn check_mean_zero(&self, tol: f64) -> Result<()> {
        let m = self.mass().norm();
        if m > tol {
            return Err(Error::Config(format!(
                "state mass {m:.3e} exceeds mean-zero tolerance {tol:.1e}"
            )));
        }
        Ok(())
    }

    /// Discrete L² norm `(∫∫ |f|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|z| z.norm_sqr()).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Cached FFT plans for one grid.
pub struct Transformer {
    grid: TorusGrid,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_v: Arc<dyn Fft<f64>>,
    ifft_v: Arc<dyn Fft<f64>>,
}

impl Transformer {
    pub fn new(grid: &TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid: grid.clone(),
            fft_x: planner.plan_fft_forward(grid.n_x),
            ifft_x: planner.plan_fft_inverse(grid.n_x),
            fft_v: planner.plan_fft_forward(grid.n_v),
            ifft_v: planner.plan_fft_inverse(grid.n_v),
        }
    }

    fn apply_axis(arr: &mut ArrayD<Complex64>, axis: usize, plan: &Arc<dyn Fft<f64>>) {
        let len = arr.shape()[axis];
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for mut lane in arr.lanes_mut(Axis(axis)) {
            for (b, v) in buf.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            plan.process(&mut buf);
            for (v, b) in lane.iter_mut().zip(buf.iter()) {
                *v = *b;
            }
        }
    }

    /// Alternating sign along a velocity axis; equals `(-1)^m` for the
    /// signed mode `m` of each bin (the `e^{±iη v_max}` boundary phase).
    fn alternate_axis(arr: &mut ArrayD<Complex64>, axis: usize) {
        for (j, mut lane) in arr.axis_iter_mut(Axis(axis)).enumerate() {
            if j % 2 == 1 {
                lane.mapv_inplace(|z| -z);
            }
        }
    }

    /// Transform the position axes only: `f(x,v) -> f̃(k,v)` including the
    /// `Δx^d` quadrature factor.
    pub fn x_forward(&self, arr: &ArrayD<Complex64>) -> ArrayD<Complex64> {
        let mut out = arr.clone();
        for a in 0..self.grid.d {
            Self::apply_axis(&mut out, a, &self.fft_x);
        }
        let scale = self.grid.dx().powi(self.grid.d as i32);
        out.mapv_inplace(|z| z * scale);
        out
    }

    pub fn x_inverse(&self, arr: &ArrayD<Complex64>) -> ArrayD<Complex64> {
        let mut out = arr.clone();
        for a in 0..self.grid.d {
            Self::apply_axis(&mut out, a, &self.ifft_x);
        }
        let scale = 1.0 / (self.grid.dx() * self.grid.n_x as f64).powi(self.grid.d as i32);
        out.mapv_inplace(|z| z * scale);
        out
    }

    /// Transform the velocity axes only: `f(·,v) -> f̂(·,η)` with the `Δv^d`
    /// factor and the boundary phase.
    pub fn v_forward(&self, arr: &ArrayD<Complex64>) -> ArrayD<Complex64> {
        let d = self.grid.d;
        let mut out = arr.clone();
        for a in 0..d {
            Self::apply_axis(&mut out, d + a, &self.fft_v);
            Self::alternate_axis(&mut out, d + a);
        }
        let scale = self.grid.dv().powi(d as i32);
        out.mapv_inplace(|z| z * scale);
        out
    }

    pub fn v_inverse(&self, arr: &ArrayD<Complex64>) -> ArrayD<Complex64> {
        let d = self.grid.d;
        let mut out = arr.clone();
        for a in 0..d {
            Self::alternate_axis(&mut out, d + a);
            Self::apply_axis(&mut out, d + a, &self.ifft_v);
        }
        let scale = 1.0 / (self.grid.dv() * self.grid.n_v as f64).powi(d as i32);
        out.mapv_inplace(|z| z * scale);
        out
    }

    /// Full transform `f(x,v) -> f̂(k,η)`.
    pub fn forward(&self, arr: &ArrayD<Complex64>) -> ArrayD<Complex64> {
        self.v_forward(&self.x_forward(arr))
    }

    pub fn inverse(&self, arr: &ArrayD<Complex64>) -> ArrayD<Complex64> {
        self.x_inverse(&self.v_inverse(arr))
    }
}

/// `f̂_{k,η}` on the dual grid (natural DFT bin order on every axis).
pub fn forward_transform(state: &PhaseSpaceState) -> ArrayD<Complex64> {
    Transformer::new(&state.grid).forward(&state.values)
}

pub fn inverse_transform(grid: &TorusGrid, fhat: &ArrayD<Complex64>) -> ArrayD<Complex64> {
    Transformer::new(grid).inverse(fhat)
}

/// Band-limited evaluation of `f̂_{k,η}` at arbitrary η from the mixed
/// `(k,v)` representation: `Δv^d Σ_j f̃(k,v_j) e^{-iη·v_j}` (d=1).
pub fn f_hat_at_eta(grid: &TorusGrid, fk_v: &[Complex64], eta: f64) -> Complex64 {
    debug_assert_eq!(fk_v.len(), grid.n_v);
    let dv = grid.dv();
    let mut acc = Complex64::new(0.0, 0.0);
    // e^{-iη v_j} accumulated by rotation to avoid n_v trig calls
    let v0 = -grid.v_max;
    let mut phase = Complex64::from_polar(1.0, -eta * v0);
    let rot = Complex64::from_polar(1.0, -eta * dv);
    for &fv in fk_v {
        acc += fv * phase;
        phase *= rot;
    }
    acc * dv
}

/// Perturbation density `ρ(x) = ∫ f dv` on the position grid (d=1 returns a
/// length-`n_x` vector; general d flattens the position index row-major).
pub fn density(state: &PhaseSpaceState) -> Vec<Complex64> {
    let d = state.grid.d;
    let nx_total = state.grid.n_x.pow(d as u32);
    let dvd = state.grid.dv().powi(d as i32);
    let flat = state
        .values
        .view()
        .into_shape((nx_total, state.grid.n_v.pow(d as u32)))
        .expect("contiguous state");
    (0..nx_total)
        .map(|i| flat.row(i).iter().sum::<Complex64>() * dvd)
        .collect()
}

/// Spectral density ρ̂_k over the position lattice (natural bin order,
/// flattened row-major over d axes).
pub fn rho_hat(state: &PhaseSpaceState) -> Vec<Complex64> {
    let rho = density(state);
    dft_position(&state.grid, &rho)
}

/// Forward DFT over the position lattice with the `Δx^d` factor.
pub fn dft_position(grid: &TorusGrid, rho: &[Complex64]) -> Vec<Complex64> {
    let d = grid.d;
    let shape: Vec<usize> = vec![grid.n_x; d];
    let mut arr = ArrayD::from_shape_vec(IxDyn(&shape), rho.to_vec()).expect("shape");
    let mut planner = FftPlanner::new();
    let plan = planner.plan_fft_forward(grid.n_x);
    for a in 0..d {
        Transformer::apply_axis(&mut arr, a, &plan);
    }
    let scale = grid.dx().powi(d as i32);
    arr.into_iter().map(|z| z * scale).collect()
}

/// Inverse of [`dft_position`].
pub fn idft_position(grid: &TorusGrid, rho_hat: &[Complex64]) -> Vec<Complex64> {
    let d = grid.d;
    let shape: Vec<usize> = vec![grid.n_x; d];
    let mut arr = ArrayD::from_shape_vec(IxDyn(&shape), rho_hat.to_vec()).expect("shape");
    let mut planner = FftPlanner::new();
    let plan = planner.plan_fft_inverse(grid.n_x);
    for a in 0..d {
        Transformer::apply_axis(&mut arr, a, &plan);
    }
    let scale = 1.0 / (grid.dx() * grid.n_x as f64).powi(d as i32);
    arr.into_iter().map(|z| z * scale).collect()
}

/// Move a state between the lab and free-transport frames by the exact
/// spectral phase `f̃(k,v) ↦ f̃(k,v) e^{±ik·v t}`.
pub fn free_transport_pullback(state: &PhaseSpaceState, target: Frame) -> Pullback {
    if state.frame == target || state.time == 0.0 {
        let mut st = state.clone();
        st.frame = target;
        return Pullback { state: st, filamented: false };
    }
    let sign = match target {
        Frame::FreeTransport => 1.0, // g(x,v) = f(x+vt,v)
        Frame::Lab => -1.0,
    };
    let t = state.time;
    let d = state.grid.d;
    let tr = Transformer::new(&state.grid);
    let mut mixed = tr.x_forward(&state.values);
    let grid = state.grid.clone();
    for (idx, val) in mixed.indexed_iter_mut() {
        let mut kv = 0.0;
        for a in 0..d {
            let k = grid.k_of_bin(idx[a]) as f64;
            kv += k * grid.v_coord(idx[d + a]);
        }
        *val *= Complex64::from_polar(1.0, sign * kv * t);
    }
    let values = tr.x_inverse(&mixed);
    let filamented = grid.k_max() as f64 * t.abs() > grid.eta_max();
    Pullback {
        state: PhaseSpaceState { grid: state.grid.clone(), values, time: t, frame: target },
        filamented,
    }
}

/// 36th-order exponential cutoff in η (Hou–Li style), applied along every
/// velocity axis. Damping the unresolved filamentation tail; identity on
/// well-resolved modes to machine precision.
pub fn eta_filter_factors(n_v: usize) -> Vec<f64> {
    let half = (n_v / 2) as f64;
    (0..n_v)
        .map(|j| {
            let m = TorusGrid::signed_mode(j, n_v) as f64;
            (-36.0 * (m.abs() / half).powi(36)).exp()
        })
        .collect()
}

/// Reconstruction sanity bound used in tests and by callers that need the
/// round-trip contract: `‖inv(fwd(f)) - f‖_∞`.
pub fn round_trip_error(state: &PhaseSpaceState) -> f64 {
    let tr = Transformer::new(&state.grid);
    let back = tr.inverse(&tr.forward(&state.values));
    back.iter()
        .zip(state.values.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

/// Parseval mismatch `|ΔxΔv Σ|f|² - (2π)^{-2d} Δη Σ|f̂|²| / ‖f‖²`.
pub fn parseval_defect(state: &PhaseSpaceState) -> f64 {
    let phys: f64 =
        state.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * state.grid.cell_volume();
    if phys == 0.0 {
        return 0.0;
    }
    let fhat = forward_transform(state);
    let d = state.grid.d as i32;
    let spec: f64 = fhat.iter().map(|z| z.norm_sqr()).sum::<f64>()
        * state.grid.deta().powi(d)
        / TWO_PI.powi(2 * d);
    ((phys - spec) / phys).abs()
}
