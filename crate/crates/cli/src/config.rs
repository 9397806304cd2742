//! Key-value run configuration.
//!
//! Grammar: one `key = value` pair per line, `#` starts a comment, blank
//! lines ignored. Lists are comma-separated. `preset = <name>` may appear
//! first to start from a shipped preset; later keys override it. The same
//! keys are accepted from the command line as `-s key=value` overrides.

use std::collections::BTreeMap;
use std::path::PathBuf;

use vlasolve_core::coupling::CouplingSpec;
use vlasolve_core::equilibrium::{
    build_maxwellian, build_tabulated, build_two_bump_with_width, EquilibriumProfile,
};
use vlasolve_core::error::{Error, Result};
use vlasolve_core::grid::TorusGrid;
use vlasolve_core::sim::{DatumKind, SimConfig, SimMode};
use vlasolve_core::weight::GevreyParams;

/// Raw key-value map (string form, fully resolved after preset expansion).
pub type RawConfig = BTreeMap<String, String>;

pub fn shipped_presets() -> Vec<&'static str> {
    vec!["vp-1d-default", "screened-1d-default", "vpme-1d-default"]
}

/// Shipped preset bodies, one per headline coupling.
pub fn preset_body(name: &str) -> Result<&'static str> {
    match name {
        "vp-1d-default" => Ok(include_str!("presets/vp-1d-default.cfg")),
        "screened-1d-default" => Ok(include_str!("presets/screened-1d-default.cfg")),
        "vpme-1d-default" => Ok(include_str!("presets/vpme-1d-default.cfg")),
        other => Err(Error::Config(format!(
            "unknown preset '{other}'; shipped presets: {}",
            shipped_presets().join(", ")
        ))),
    }
}

pub fn parse_text(text: &str) -> Result<RawConfig> {
    let mut map = RawConfig::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Format(format!(
                "config line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        let key = k.trim().to_string();
        let val = v.trim().to_string();
        if key == "preset" {
            // expand the preset first; following lines override
            let body = preset_body(&val)?;
            let base = parse_text(body)?;
            for (bk, bv) in base {
                map.entry(bk).or_insert(bv);
            }
        } else {
            map.insert(key, val);
        }
    }
    Ok(map)
}

pub fn load(path: Option<&PathBuf>, preset: Option<&str>, overrides: &[String]) -> Result<RawConfig> {
    let mut map = match (path, preset) {
        (Some(p), _) => parse_text(&std::fs::read_to_string(p)?)?,
        (None, Some(name)) => parse_text(preset_body(name)?)?,
        (None, None) => parse_text(preset_body("vpme-1d-default")?)?,
    };
    if let (Some(_), Some(name)) = (path, preset) {
        // preset under an explicit config acts as defaults
        let base = parse_text(preset_body(name)?)?;
        for (bk, bv) in base {
            map.entry(bk).or_insert(bv);
        }
    }
    for ov in overrides {
        let Some((k, v)) = ov.split_once('=') else {
            return Err(Error::Format(format!("override '{ov}' is not key=value")));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn get<'a>(map: &'a RawConfig, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::Config(format!("missing required config key '{key}'")))
}

fn get_f64(map: &RawConfig, key: &str) -> Result<f64> {
    let s = get(map, key)?;
    if s == "inf" {
        return Ok(f64::INFINITY);
    }
    s.parse()
        .map_err(|_| Error::Config(format!("key '{key}': '{s}' is not a number")))
}

fn get_usize(map: &RawConfig, key: &str) -> Result<usize> {
    get(map, key)?
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}' must be a nonnegative integer")))
}

fn get_i64(map: &RawConfig, key: &str) -> Result<i64> {
    get(map, key)?
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}' must be an integer")))
}

fn get_bool(map: &RawConfig, key: &str) -> Result<bool> {
    match get(map, key)? {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("key '{key}': '{other}' is not a boolean"))),
    }
}

fn get_f64_list(map: &RawConfig, key: &str) -> Result<Vec<f64>> {
    let s = get(map, key)?;
    if s.is_empty() || s == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{p}' is not a number")))
        })
        .collect()
}

/// Fully validated run setup shared by the subcommands.
pub struct RunSetup {
    pub raw: RawConfig,
    pub grid: TorusGrid,
    pub spec: CouplingSpec,
    pub profile: EquilibriumProfile,
    pub gevrey: GevreyParams,
    pub lambda1: f64,
    pub lambda0: f64,
    pub delta: f64,
    pub sim: SimConfig,
    pub k_max: i64,
    pub boundary_step: f64,
    pub omega: Option<f64>,
    pub tol: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

pub fn build(raw: &RawConfig) -> Result<RunSetup> {
    let mut warnings = Vec::new();

    let d = get_usize(raw, "dim")?;
    let grid = TorusGrid::new(d, get_usize(raw, "n_x")?, get_usize(raw, "n_v")?, get_f64(raw, "v_max")?)?;

    let spec = match get(raw, "coupling")? {
        "custom" => {
            let coeffs = get_f64_list(raw, "h_coeffs")?;
            let radius = if raw.contains_key("h_radius") {
                get_f64(raw, "h_radius")?
            } else {
                f64::INFINITY
            };
            CouplingSpec::from_coeffs(get_f64(raw, "beta")?, coeffs, radius)?
        }
        name => CouplingSpec::preset(name)?,
    };

    let profile = match get(raw, "profile")? {
        "maxwellian" => build_maxwellian(d)?,
        "two_bump" => {
            let width = if raw.contains_key("bump_width") {
                get_f64(raw, "bump_width")?
            } else {
                vlasolve_core::equilibrium::TWO_BUMP_DEFAULT_WIDTH
            };
            build_two_bump_with_width(get_f64(raw, "u0")?, get_f64(raw, "bump_weight")?, width)?
        }
        spec if spec.starts_with("file:") => load_profile_file(&PathBuf::from(&spec[5..]))?,
        other => {
            return Err(Error::Config(format!(
                "unknown profile '{other}' (maxwellian | two_bump | file:<path>)"
            )))
        }
    };
    profile.check_normalized(1e-6)?;

    let gamma = get_f64(raw, "gamma")?;
    let sigma = get_f64(raw, "sigma")?;
    let alpha = get_f64(raw, "alpha")?;
    let delta = get_f64(raw, "delta")?;
    let lambda1 = get_f64(raw, "lambda1")?;
    let lambda0 = get_f64(raw, "lambda0")?;
    if !(sigma > 3.0 + delta) {
        return Err(Error::Config(format!(
            "sigma = {sigma} rejected: sigma > 3 + delta (= {}) is required by the \
             shrinking analyticity-radius schedule",
            3.0 + delta
        )));
    }
    let gevrey = GevreyParams::new(0.0, gamma, sigma, alpha, d)?;

    let mode = match get(raw, "mode")? {
        "nonlinear" => SimMode::Nonlinear,
        "linearized" => SimMode::Linearized,
        other => return Err(Error::Config(format!("mode '{other}' (nonlinear | linearized)"))),
    };
    if gamma <= 1.0 / 3.0 && mode == SimMode::Nonlinear {
        let allow = raw.contains_key("allow_low_gamma") && get_bool(raw, "allow_low_gamma")?;
        let msg = format!(
            "gamma = {gamma} is at or below 1/3: nonlinear damping is only \
             controlled for gamma in (1/3, 1] (the linear theory admits any \
             gamma in (0, 1])"
        );
        if allow {
            warnings.push(format!("{msg}; proceeding under allow_low_gamma"));
        } else {
            return Err(Error::Config(format!(
                "{msg}; set allow_low_gamma = true to run anyway"
            )));
        }
    }

    let datum = match get(raw, "datum")? {
        "single_mode" => DatumKind::SingleMode { k0: get_i64(raw, "datum_k")? },
        "gevrey_bump" => DatumKind::GevreyBump { lambda1, gamma },
        spec if spec.starts_with("file:") => DatumKind::File(PathBuf::from(&spec[5..])),
        other => {
            return Err(Error::Config(format!(
                "unknown datum '{other}' (single_mode | gevrey_bump | file:<path>)"
            )))
        }
    };

    let tol = get_f64(raw, "tol")?;
    let sim = SimConfig {
        grid: grid.clone(),
        spec: spec.clone(),
        profile: profile.clone(),
        dt: get_f64(raw, "dt")?,
        t_final: get_f64(raw, "t_final")?,
        eps: get_f64(raw, "epsilon")?,
        datum,
        mode,
        filter: get_bool(raw, "filter")?,
        field_tol: tol,
        sample_every: get_usize(raw, "sample_every")?,
        snap_times: get_f64_list(raw, "snap_times")?,
    };
    warnings.extend(sim.validate()?);

    let omega = match get(raw, "omega")? {
        "auto" => None,
        s => Some(s.parse().map_err(|_| Error::Config(format!("omega '{s}'")))?),
    };

    Ok(RunSetup {
        raw: raw.clone(),
        grid,
        spec,
        profile,
        gevrey,
        lambda1,
        lambda0,
        delta,
        sim,
        k_max: get_i64(raw, "k_max")?,
        boundary_step: get_f64(raw, "boundary_step")?,
        omega,
        tol,
        seed: get_usize(raw, "seed")? as u64,
        warnings,
    })
}

/// Tabulated-profile file: `theta0 = …`, `c_mu = …`, then a `table:` section
/// of `eta re im` rows.
pub fn load_profile_file(path: &PathBuf) -> Result<EquilibriumProfile> {
    let text = std::fs::read_to_string(path)?;
    let mut theta0 = None;
    let mut c_mu = None;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    let mut in_table = false;
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "table:" {
            in_table = true;
            continue;
        }
        if in_table {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Format(format!(
                    "profile table row needs 'eta re im': '{line}'"
                )));
            }
            let nums: Vec<f64> = parts
                .iter()
                .map(|p| p.parse().map_err(|_| Error::Format(format!("bad number '{p}'"))))
                .collect::<Result<_>>()?;
            rows.push((nums[0], nums[1], nums[2]));
        } else if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "theta0" => theta0 = Some(v.trim().parse().map_err(|_| Error::Format("theta0".into()))?),
                "c_mu" => c_mu = Some(v.trim().parse().map_err(|_| Error::Format("c_mu".into()))?),
                other => return Err(Error::Format(format!("unknown profile key '{other}'"))),
            }
        }
    }
    let theta0 = theta0.ok_or_else(|| Error::Format("profile file missing theta0".into()))?;
    let c_mu = c_mu.ok_or_else(|| Error::Format("profile file missing c_mu".into()))?;
    let eta: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let re: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let im: Vec<f64> = rows.iter().map(|r| r.2).collect();
    build_tabulated(eta, re, im, theta0, c_mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_all_valid() {
        for name in shipped_presets() {
            let raw = parse_text(preset_body(name).unwrap()).unwrap();
            let setup = build(&raw).unwrap();
            assert!(setup.warnings.is_empty(), "{name}: {:?}", setup.warnings);
        }
    }

    #[test]
    fn sigma_constraint_rejected_with_schedule_message() {
        let mut raw = parse_text(preset_body("vpme-1d-default").unwrap()).unwrap();
        raw.insert("sigma".into(), "2".into());
        let err = build(&raw).unwrap_err().to_string();
        assert!(err.contains("sigma > 3 + delta"), "{err}");
        assert!(err.contains("analyticity-radius schedule"), "{err}");
    }

    #[test]
    fn low_gamma_needs_flag_in_nonlinear_mode() {
        let mut raw = parse_text(preset_body("vpme-1d-default").unwrap()).unwrap();
        raw.insert("gamma".into(), "0.25".into());
        let err = build(&raw).unwrap_err().to_string();
        assert!(err.contains("allow_low_gamma"), "{err}");
        raw.insert("allow_low_gamma".into(), "true".into());
        let setup = build(&raw).unwrap();
        assert!(setup.warnings.iter().any(|w| w.contains("gamma")));
        // linearized mode is fine without the flag
        raw.remove("allow_low_gamma");
        raw.insert("mode".into(), "linearized".into());
        assert!(build(&raw).is_ok());
    }

    #[test]
    fn overrides_and_comments() {
        let raw = load(None, Some("screened-1d-default"), &["n_x=32".into()]).unwrap();
        assert_eq!(raw.get("n_x").unwrap(), "32");
        let parsed = parse_text("a = 1 # trailing\n# full comment\n\nb = two\n").unwrap();
        assert_eq!(parsed.get("a").unwrap(), "1");
        assert_eq!(parsed.get("b").unwrap(), "two");
        assert!(parse_text("not a pair\n").is_err());
    }

    #[test]
    fn profile_file_round_trip() {
        let dir = std::env::temp_dir().join("vlasolve_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("profile.txt");
        std::fs::write(
            &path,
            "theta0 = 0.5\nc_mu = 2.0\ntable:\n-1.0 0.6 0.0\n0.0 1.0 0.0\n1.0 0.6 0.0\n",
        )
        .unwrap();
        let p = load_profile_file(&path).unwrap();
        assert_eq!(p.theta0, 0.5);
        assert!((p.mu_hat(&[0.5]).re - 0.8).abs() < 1e-12);
        std::fs::remove_file(&path).ok();
    }
}
