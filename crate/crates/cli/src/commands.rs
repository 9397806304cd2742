//! Subcommand implementations. Each writes its artifacts under the output
//! directory and records them in the manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use vlasolve_core::diagnostics::{
    self, decay_fit, gen_f, gen_f_laplacian, verify_algebra_property, verify_f_le_sqrt_g,
    verify_integral_inequalities,
};
use vlasolve_core::equilibrium::verify_h1;
use vlasolve_core::error::{Error, Result};
use vlasolve_core::field::solve_poisson;
use vlasolve_core::grid::TorusGrid;
use vlasolve_core::linear::{linear_evolution, write_resolvent_csv, write_trajectory_csv};
use vlasolve_core::penrose::{penrose_margin, PenroseScan};
use vlasolve_core::resolvent::{
    resolvent_via_bromwich, resolvent_via_volterra, BromwichParams, ResolventTable,
};
use vlasolve_core::sim::{self, DatumKind, SimMode};
use vlasolve_core::state::{rho_hat, Frame, PhaseSpaceState};
use vlasolve_core::volterra::TimeGrid;
use vlasolve_core::weight::GevreyParams;

use crate::config::RunSetup;
use crate::manifest::ManifestBuilder;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn cmd_penrose(setup: &RunSetup, out: &Path, manifest: &mut ManifestBuilder) -> Result<()> {
    let scan = PenroseScan {
        k_max: setup.k_max,
        omega: setup.omega,
        boundary_step: setup.boundary_step,
        resolution: 0.02,
    };
    let report = penrose_margin(&setup.profile, setup.spec.beta, &scan)?;
    let path = out.join("penrose.json");
    write_json(&path, &report)?;
    manifest.artifact(&path, "equilibrium-penrose::penrose_margin");
    let h1_hi = (8.0f64).max(4.0 / setup.profile.theta0);
    let samples: Vec<f64> = (0..400).map(|i| h1_hi * i as f64 / 399.0).collect();
    let h1 = verify_h1(&setup.profile, setup.grid.d, &samples)?;
    let h1_path = out.join("h1.json");
    write_json(&h1_path, &h1)?;
    manifest.artifact(&h1_path, "equilibrium-penrose::verify_H1");
    println!(
        "penrose: kappa0 = {:.6}, winding_ok = {}, worst k = {:?}",
        report.kappa0, report.winding_ok, report.worst_k
    );
    Ok(())
}

fn sim_time_grid(setup: &RunSetup) -> Result<TimeGrid> {
    let n = (setup.sim.t_final / setup.sim.dt).round() as usize;
    TimeGrid::new(setup.sim.t_final, n.max(1))
}

pub fn cmd_linear(setup: &RunSetup, out: &Path, manifest: &mut ManifestBuilder) -> Result<()> {
    let tgrid = sim_time_grid(setup)?;
    let (f0, _) = sim::make_initial_datum(&setup.sim)?;
    let run = linear_evolution(&f0, &setup.spec, &setup.profile, &tgrid)?;
    let traj_path = out.join("trajectory.csv");
    write_trajectory_csv(&traj_path, &run)?;
    manifest.artifact(&traj_path, "linear-damping::linear_density_evolution");

    // resolvent tables: time-domain route for |k| = 1..4 plus the Bromwich
    // cross-check on the fundamental mode
    let mut tables: Vec<ResolventTable> = Vec::new();
    let kcap = setup.k_max.min(4).max(1);
    for k in 1..=kcap {
        tables.push(resolvent_via_volterra(&[k], &setup.profile, setup.spec.beta, &tgrid, true)?);
    }
    tables.push(resolvent_via_bromwich(
        &[1],
        &setup.profile,
        setup.spec.beta,
        &tgrid,
        &BromwichParams::default(),
    )?);
    let res_path = out.join("resolvent.csv");
    write_resolvent_csv(&res_path, &tables)?;
    manifest.artifact(&res_path, "linear-damping::resolvent_via_volterra+bromwich");

    // decay fits: resolvent rates and mode trajectories
    let mut fits = BTreeMap::new();
    for t in &tables {
        let label = format!(
            "resolvent_k{}_{}",
            t.k[0],
            match t.method {
                vlasolve_core::resolvent::ResolventMethod::Volterra => "volterra",
                vlasolve_core::resolvent::ResolventMethod::Bromwich => "bromwich",
            }
        );
        fits.insert(label, json!(t.fit));
    }
    for (mi, mode) in run.modes.iter().enumerate() {
        if mode.k[0] < 1 || mode.k[0] > kcap {
            continue;
        }
        let moduli: Vec<f64> = run.rho[mi].iter().map(|z| z.norm()).collect();
        let fit = decay_fit(
            &run.times,
            &moduli,
            mode.k[0] as f64,
            &[0.5, 2.0 / 3.0, 0.8, 1.0],
            10f64.powf(-2.5),
        );
        fits.insert(format!("rho_k{}", mode.k[0]), json!(fit));
    }
    let fits_path = out.join("decay_fits.json");
    write_json(&fits_path, &fits)?;
    manifest.artifact(&fits_path, "gevrey-diagnostics::decay_fit");
    manifest.steps(tgrid.n_steps);
    println!(
        "linear: {} modes on t in [0, {}], picard iterations = {}",
        run.modes.len(),
        tgrid.t_final,
        run.picard_iterations
    );
    Ok(())
}

pub fn cmd_simulate(setup: &RunSetup, out: &Path, manifest: &mut ManifestBuilder) -> Result<()> {
    let traj = sim::run(&setup.sim)?;
    manifest.warnings(&traj.warnings);
    let path = out.join("trajectory.csv");
    let grid = &setup.grid;
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(w, "t,k,re_rho,im_rho,abs_rho,re_u,im_u")?;
        for (si, &t) in traj.times.iter().enumerate() {
            for bin in 0..grid.n_x.pow(grid.d as u32) {
                let k = TorusGrid::signed_mode(bin % grid.n_x, grid.n_x);
                let r = traj.rho_hat[si][bin];
                let u = traj.u_hat[si][bin];
                writeln!(w, "{t},{k},{},{},{},{},{}", r.re, r.im, r.norm(), u.re, u.im)?;
            }
        }
    }
    manifest.artifact(&path, "vlasov-sim::run");

    let energy_path = out.join("summary.json");
    let l0 = traj.l2_norm[0];
    let l2_drift = traj
        .l2_norm
        .iter()
        .map(|&l| ((l - l0) / l0.max(1e-300)).abs())
        .fold(0.0, f64::max);
    write_json(
        &energy_path,
        &json!({
            "times": traj.times,
            "field_energy": traj.field_energy,
            "mass_mode_max": traj.mass_mode.iter().cloned().fold(0.0, f64::max),
            "l2_relative_drift": l2_drift,
            "warnings": traj.warnings,
        }),
    )?;
    manifest.artifact(&energy_path, "vlasov-sim::run");

    if !traj.snapshots.is_empty() {
        let snap_dir = out.join("snapshots");
        std::fs::create_dir_all(&snap_dir)?;
        for snap in &traj.snapshots {
            let p = snap_dir.join(format!("t{:08.3}.snap", snap.time));
            vlasolve_core::snapshot::write_snapshot(&p, snap)?;
            manifest.artifact(&p, "vlasov-sim::run");
        }
    }
    manifest.steps((setup.sim.t_final / setup.sim.dt).round() as usize);
    println!(
        "simulate: {} samples to t = {}, final field energy {:.3e}",
        traj.times.len(),
        setup.sim.t_final,
        traj.field_energy.last().unwrap()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct VerifyEntry {
    pub name: String,
    pub pass: bool,
    pub values: Value,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub entries: Vec<VerifyEntry>,
    pub all_pass: bool,
}

/// The lemma-scale verification suite. Runs every quantitative check with
/// pinned tolerances and returns pass/fail per entry.
pub fn run_verify_suite(setup: &RunSetup) -> Result<VerifyReport> {
    let mut entries = Vec::new();

    // 1. equilibrium decay hypothesis
    {
        let hi = (8.0f64).max(4.0 / setup.profile.theta0);
        let samples: Vec<f64> = (0..400).map(|i| hi * i as f64 / 399.0).collect();
        let rep = verify_h1(&setup.profile, setup.grid.d, &samples)?;
        entries.push(VerifyEntry {
            name: "h1_exponential_decay".into(),
            pass: rep.pass,
            values: json!(rep),
        });
    }

    // 2. product bound: C* stable across pairs, sample-set extension and
    // lattice refinement; convolution-sum constant refinement-stable
    {
        let p = GevreyParams { z: 0.04, gamma: 1.0, sigma: setup.gevrey.sigma, alpha: setup.gevrey.alpha };
        let g64 = TorusGrid::new(1, 64, 4, 1.0)?;
        let g128 = TorusGrid::new(1, 128, 4, 1.0)?;
        let base = verify_algebra_property(&g64, &p, 100, &[0.0], 0.6, setup.seed)?;
        let ext = verify_algebra_property(&g64, &p, 100, &[0.0, 10.0], 0.6, setup.seed)?;
        let reseed = verify_algebra_property(&g64, &p, 100, &[0.0], 0.6, setup.seed + 7919)?;
        let refined = verify_algebra_property(&g128, &p, 100, &[0.0], 0.6, setup.seed)?;
        let within = |a: f64, b: f64| (a / b).max(b / a) < 2.0;
        let pass = within(base.c_star, ext.c_star)
            && within(base.c_star, reseed.c_star)
            && within(base.c_star, refined.c_star)
            && (base.claim_sum_sup / refined.claim_sum_sup).max(refined.claim_sum_sup / base.claim_sum_sup)
                < 1.1
            && base.frac_sup_regions.iter().all(|r| r.is_finite());
        entries.push(VerifyEntry {
            name: "algebra_property".into(),
            pass,
            values: json!({
                "c_star": base.c_star,
                "c_star_extended_times": ext.c_star,
                "c_star_reseeded": reseed.c_star,
                "c_star_refined_lattice": refined.c_star,
                "claim_sum_sup": base.claim_sum_sup,
                "claim_sum_sup_refined": refined.claim_sum_sup,
                "frac_sup": base.frac_sup,
                "frac_sup_regions": base.frac_sup_regions,
                "pairs": base.pairs,
            }),
        });
    }

    // 3. F <= C sqrt(G) with refinement stability
    {
        let p = GevreyParams { z: 0.2, ..setup.gevrey };
        let mk_states = |n_v: usize| -> Result<Vec<PhaseSpaceState>> {
            let grid = TorusGrid::new(1, setup.grid.n_x.min(32), n_v, setup.grid.v_max)?;
            let profile = setup.profile.clone();
            let mut states = Vec::new();
            for (amp, t) in [(1e-3, 0.5), (3e-3, 1.5)] {
                let mut st = PhaseSpaceState::from_fn(grid.clone(), |x, v| {
                    amp * (x[0].cos() + 0.4 * (2.0 * x[0]).sin()) * profile.mu(v)
                });
                st.frame = Frame::FreeTransport;
                st.time = t;
                states.push(st);
            }
            Ok(states)
        };
        let coarse = verify_f_le_sqrt_g(&mk_states(128)?, &p, setup.grid.d, 0.0)?;
        let fine = verify_f_le_sqrt_g(&mk_states(256)?, &p, setup.grid.d, 0.0)?;
        let drift = (coarse.max_ratio / fine.max_ratio - 1.0).abs();
        let pass = coarse.max_ratio.is_finite()
            && coarse.max_ratio > 0.0
            && drift <= 0.10
            && fine.max_pointwise_ratio.is_finite();
        entries.push(VerifyEntry {
            name: "f_le_sqrt_g".into(),
            pass,
            values: json!({
                "max_ratio": coarse.max_ratio,
                "max_ratio_refined": fine.max_ratio,
                "refinement_drift": drift,
                "max_pointwise_ratio": coarse.max_pointwise_ratio,
            }),
        });
    }

    // 4. integral inequalities: bounded at σ=4, cumulative integral diverges
    // at the σ=2 negative control
    {
        let good = verify_integral_inequalities(1.0, 1.0, 1.0, 4.0, 100.0, 200)?;
        let bad = verify_integral_inequalities(1.0, 1.0, 1.0, 2.0, 100.0, 200)?;
        let tail_flat = {
            let n = good.ratio_smoothing.len();
            let last_quarter = &good.ratio_smoothing[3 * n / 4..];
            let sup = good.sup_ratio_smoothing;
            last_quarter.iter().all(|&r| r <= sup * 1.001)
        };
        let pass = good.sup_ratio_smoothing.is_finite()
            && good.sup_ratio_gevrey.is_finite()
            && tail_flat
            && good.cumulative_growth < 0.01
            && bad.cumulative_growth > 0.10;
        entries.push(VerifyEntry {
            name: "integral_inequalities".into(),
            pass,
            values: json!({
                "sup_ratio_smoothing_sigma4": good.sup_ratio_smoothing,
                "sup_ratio_gevrey_sigma4": good.sup_ratio_gevrey,
                "cumulative_growth_sigma4": good.cumulative_growth,
                "cumulative_growth_sigma2": bad.cumulative_growth,
                "sup_ratio_smoothing_sigma2": bad.sup_ratio_smoothing,
            }),
        });
    }

    // 5. initial-data chain: sqrt(ε) scaling of F[ρ](0,λ₁) and F[ΔU](0,λ₁)
    {
        let eps_list = [1e-2, 1e-3, 1e-4];
        let p = setup.gevrey.with_z(setup.lambda1);
        let mut rows = Vec::new();
        for &eps in &eps_list {
            let mut cfg = setup.sim.clone();
            cfg.eps = eps;
            cfg.datum = DatumKind::GevreyBump { lambda1: setup.lambda1, gamma: setup.gevrey.gamma };
            let (st, g_meas) = sim::make_initial_datum(&cfg)?;
            let rh = rho_hat(&st);
            let f_rho = gen_f(&rh, &setup.grid, 0.0, &p, 0.0)?;
            let sol = solve_poisson(&rh, &setup.grid, &setup.spec, setup.tol)?;
            let f_du = gen_f_laplacian(&sol.u_hat, &setup.grid, 0.0, &p, 0.0)?;
            rows.push((eps, g_meas.unwrap_or(f64::NAN), f_rho.value, f_du.value));
        }
        let slope = |vals: &dyn Fn(&(f64, f64, f64, f64)) -> f64| -> f64 {
            let xs: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
            let ys: Vec<f64> = rows.iter().map(|r| vals(r).ln()).collect();
            let n = xs.len() as f64;
            let sx: f64 = xs.iter().sum();
            let sy: f64 = ys.iter().sum();
            let sxx: f64 = xs.iter().map(|x| x * x).sum();
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
            (n * sxy - sx * sy) / (n * sxx - sx * sx)
        };
        let slope_rho = slope(&|r| r.2);
        let slope_du = slope(&|r| r.3);
        let pass = (slope_rho - 0.5).abs() <= 0.05 && (slope_du - 0.5).abs() <= 0.05;
        entries.push(VerifyEntry {
            name: "initial_data_sqrt_scaling".into(),
            pass,
            values: json!({
                "rows": rows.iter().map(|r| json!({
                    "eps": r.0, "g_measured": r.1, "f_rho": r.2, "f_delta_u": r.3
                })).collect::<Vec<_>>(),
                "slope_f_rho": slope_rho,
                "slope_f_delta_u": slope_du,
            }),
        });
    }

    let all_pass = entries.iter().all(|e| e.pass);
    Ok(VerifyReport { entries, all_pass })
}

pub fn cmd_verify(setup: &RunSetup, out: &Path, manifest: &mut ManifestBuilder) -> Result<bool> {
    let report = run_verify_suite(setup)?;
    let path = out.join("verify.json");
    write_json(&path, &report)?;
    manifest.artifact(&path, "gevrey-diagnostics::verify_suite");
    for e in &report.entries {
        println!("verify: {:30} {}", e.name, if e.pass { "PASS" } else { "FAIL" });
    }
    Ok(report.all_pass)
}

/// Merge existing artifacts in the output directory into one summary with
/// decay fits recomputed from the trajectory tables.
pub fn cmd_report(setup: &RunSetup, out: &Path, manifest: &mut ManifestBuilder) -> Result<()> {
    let mut merged = serde_json::Map::new();
    for name in ["penrose.json", "verify.json", "summary.json", "h1.json", "decay_fits.json"] {
        let p = out.join(name);
        if p.exists() {
            let text = std::fs::read_to_string(&p)?;
            let v: Value =
                serde_json::from_str(&text).map_err(|e| Error::Format(format!("{name}: {e}")))?;
            merged.insert(name.trim_end_matches(".json").to_string(), v);
        }
    }
    let traj = out.join("trajectory.csv");
    if traj.exists() {
        let series = read_trajectory_csv(&traj)?;
        let mut fits = serde_json::Map::new();
        for (k, (times, moduli)) in &series {
            if *k < 1 || *k > 4 {
                continue;
            }
            let fit = decay_fit(times, moduli, *k as f64, &[0.5, 2.0 / 3.0, 0.8, 1.0], 10f64.powf(-2.5));
            fits.insert(format!("rho_k{k}"), json!(fit));
        }
        merged.insert("trajectory_decay_fits".into(), Value::Object(fits));
    }
    merged.insert(
        "config".into(),
        json!(setup.raw.iter().collect::<BTreeMap<_, _>>()),
    );
    let path = out.join("report.json");
    write_json(&path, &Value::Object(merged))?;
    manifest.artifact(&path, "cli-harness::report");
    println!("report: merged summary written to {}", path.display());
    Ok(())
}

/// Minimal reader for the trajectory CSV: per-k time series of |ρ̂|.
pub fn read_trajectory_csv(path: &PathBuf) -> Result<BTreeMap<i64, (Vec<f64>, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out: BTreeMap<i64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 5 {
            return Err(Error::Format(format!("trajectory row {i} malformed")));
        }
        let t: f64 = cols[0].parse().map_err(|_| Error::Format(format!("row {i}: t")))?;
        let k: i64 = cols[1]
            .split(';')
            .next()
            .unwrap()
            .parse()
            .map_err(|_| Error::Format(format!("row {i}: k")))?;
        let m: f64 = cols[4].parse().map_err(|_| Error::Format(format!("row {i}: abs")))?;
        let entry = out.entry(k).or_default();
        entry.0.push(t);
        entry.1.push(m);
    }
    Ok(out)
}

/// Scattering + weak-limit probe on a linearized run (used by `report` when
/// snapshots exist and by the acceptance suite).
pub fn scattering_study(
    setup: &RunSetup,
    snapshots: &[PhaseSpaceState],
) -> Result<Value> {
    let z = setup.lambda0 / 4.0;
    let params = setup.gevrey.with_z(z);
    let ctx = diagnostics::ScatteringContext {
        lambda0: setup.lambda0,
        theta0: setup.profile.theta0,
        gamma: setup.gevrey.gamma,
    };
    let mut pulled: Vec<PhaseSpaceState> = Vec::new();
    for s in snapshots {
        pulled.push(vlasolve_core::state::free_transport_pullback(s, Frame::FreeTransport).state);
    }
    let floor = pulled
        .first()
        .map(|s| 1e-13 * s.max_abs())
        .unwrap_or(0.0);
    let mut distances = Vec::new();
    for w in pulled.windows(2) {
        let d = diagnostics::scattering_distance(&w[0], &w[1], &params, &ctx, setup.grid.d, floor)?;
        distances.push(json!({ "t1": w[0].time, "t2": w[1].time, "g_distance": d }));
    }
    Ok(json!({ "z": z, "dyadic_distances": distances }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config;

    #[test]
    fn trajectory_csv_reader_round_trip() {
        let dir = std::env::temp_dir().join("vlasolve_cmd_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("traj.csv");
        std::fs::write(
            &p,
            "t,k,re_rho,im_rho,abs_rho,re_u,im_u\n0,1,1,0,1,0.5,0\n1,1,0.5,0,0.5,0.25,0\n",
        )
        .unwrap();
        let m = read_trajectory_csv(&p).unwrap();
        assert_eq!(m[&1].0, vec![0.0, 1.0]);
        assert_eq!(m[&1].1, vec![1.0, 0.5]);
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn verify_entry_shapes() {
        // smoke: suite runs end to end on a small config
        let mut raw = config::parse_text(config::preset_body("screened-1d-default").unwrap()).unwrap();
        raw.insert("n_x".into(), "16".into());
        raw.insert("n_v".into(), "64".into());
        raw.insert("t_final".into(), "2.0".into());
        let setup = config::build(&raw).unwrap();
        let rep = run_verify_suite(&setup).unwrap();
        assert_eq!(rep.entries.len(), 5);
        for e in &rep.entries {
            assert!(e.pass, "{} failed: {}", e.name, e.values);
        }
    }
}
