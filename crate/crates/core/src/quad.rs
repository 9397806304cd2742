//! Small quadrature toolbox: Gauss–Legendre nodes (Newton on the Legendre
//! recurrence) and composite panel integration for real and complex
//! integrands.

use num_complex::Complex64;

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev-based initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and P'_n(x) by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            dp = n as f64 * (x * pn - p0) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre over [a, b] with `panels` equal panels of
/// `nodes_per_panel` points each.
pub fn integrate_complex(
    a: f64,
    b: f64,
    panels: usize,
    nodes_per_panel: usize,
    mut f: impl FnMut(f64) -> Complex64,
) -> Complex64 {
    if b <= a || panels == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let (xs, ws) = gauss_legendre(nodes_per_panel);
    let h = (b - a) / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (x, w) in xs.iter().zip(ws.iter()) {
            acc += f(mid + 0.5 * h * x) * (w * 0.5 * h);
        }
    }
    acc
}

pub fn integrate_real(
    a: f64,
    b: f64,
    panels: usize,
    nodes_per_panel: usize,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    integrate_complex(a, b, panels, nodes_per_panel, |x| Complex64::new(f(x), 0.0)).re
}
