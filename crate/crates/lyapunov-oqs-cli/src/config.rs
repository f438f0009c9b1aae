//! Run configuration: strict JSON in, fully resolved manifest out.

use std::path::{Path, PathBuf};

use lyapunov_oqs::linalg::CMat;
use lyapunov_oqs::lyapunov::Level;
use lyapunov_oqs::model::{DenseMatrix, OpenSystem, SystemConfig};
use lyapunov_oqs::observables::ResonantLevelParams;
use lyapunov_oqs::quadrature::QuadConfig;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// What the user wrote. Every section is optional; unknown keys are errors.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// inline system object, or a path (relative to this file) to one
    #[serde(default)]
    pub system: Option<serde_json::Value>,
    #[serde(default)]
    pub level: Option<Level>,
    #[serde(default)]
    pub time_grid: Option<TimeGridSpec>,
    #[serde(default)]
    pub two_time: Option<TwoTimeSpec>,
    /// initial correlation matrix; zeros when absent
    #[serde(default)]
    pub initial: Option<DenseMatrix>,
    #[serde(default)]
    pub quad: Option<QuadOverrides>,
    #[serde(default)]
    pub pert: Option<PertSpec>,
    #[serde(default)]
    pub resonant_level: Option<ResonantLevelParams>,
    #[serde(default)]
    pub conductance: Option<ConductanceSpec>,
    #[serde(default)]
    pub energy_unit: Option<String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGridSpec {
    pub t_max: Option<f64>,
    pub n_points: Option<usize>,
    pub spacing: Option<Spacing>,
    /// first point of a log grid
    pub t_min: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoTimeSpec {
    /// earlier time of the pair; absent means the steady state
    pub t: Option<f64>,
    pub tau_max: Option<f64>,
    pub n_points: Option<usize>,
    /// (ℓ, m) entries to emit; all of them when absent
    pub entries: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadOverrides {
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_intervals: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PertSpec {
    pub min_margin: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductanceSpec {
    pub r: Option<usize>,
    pub s: Option<usize>,
}

/// Resolved grids and options, written verbatim into the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_points: usize,
    pub spacing: Spacing,
    pub t_min: f64,
}

impl TimeGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points;
        match self.spacing {
            Spacing::Linear => {
                if n == 1 {
                    return vec![self.t_max];
                }
                (0..n).map(|k| self.t_max * k as f64 / (n - 1) as f64).collect()
            }
            Spacing::Log => {
                if n == 1 {
                    return vec![self.t_max];
                }
                let (a, b) = (self.t_min.ln(), self.t_max.ln());
                (0..n)
                    .map(|k| {
                        if k == n - 1 {
                            self.t_max
                        } else {
                            (a + (b - a) * k as f64 / (n - 1) as f64).exp()
                        }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoTimeGrid {
    /// `null` in the manifest means the steady state
    pub t: Option<f64>,
    pub tau_max: f64,
    pub n_points: usize,
    pub entries: Vec<[usize; 2]>,
}

impl TwoTimeGrid {
    pub fn taus(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![0.0];
        }
        (0..self.n_points).map(|k| self.tau_max * k as f64 / (self.n_points - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub level: Level,
    pub energy_unit: String,
    pub system: Option<SystemConfig>,
    pub resonant_level: Option<ResonantLevelParams>,
    pub time_grid: TimeGrid,
    pub two_time: TwoTimeGrid,
    pub initial: Option<DenseMatrix>,
    pub quad: QuadConfig,
    pub min_margin: f64,
    pub conductance: Option<[usize; 2]>,
    pub with_naive: bool,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub sys: Option<OpenSystem>,
}

impl Resolved {
    pub fn sys(&self) -> Result<&OpenSystem, Failure> {
        self.sys
            .as_ref()
            .ok_or_else(|| Failure::config("system: this subcommand needs a `system` (or `resonant_level`) section"))
    }

    pub fn initial_matrix(&self, n: usize) -> Result<CMat, Failure> {
        match &self.initial {
            None => Ok(CMat::zeros(n, n)),
            Some(d) => {
                let m = d.to_matrix().map_err(|e| Failure::config(format!("initial: {e}")))?;
                if m.nrows() != n {
                    return Err(Failure::config(format!("initial: expected a {n}x{n} matrix, got {0}x{0}", m.nrows())));
                }
                Ok(m)
            }
        }
    }
}

/// Overrides that come from the command line rather than the file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub level: Option<Level>,
    pub out: Option<PathBuf>,
    pub quad_tol: Option<f64>,
    pub with_naive: bool,
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, Failure> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            Failure::config(format!("config is not valid JSON: {inner}"))
        } else if path == "." || path.is_empty() {
            Failure::config(format!("config: {inner}"))
        } else {
            Failure::config(format!("{path}: {inner}"))
        }
    })
}

fn parse_system(value: &serde_json::Value, base: &Path) -> Result<(SystemConfig, PathBuf), Failure> {
    match value {
        serde_json::Value::String(p) => {
            let path = base.join(p);
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::config(format!("system: cannot read {}: {e}", path.display())))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let cfg: SystemConfig =
                serde_path_to_error::deserialize(de).map_err(|e| Failure::config(format!("system.{}: {}", e.path(), e.inner())))?;
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| base.to_path_buf());
            Ok((cfg, dir))
        }
        other => {
            let cfg: SystemConfig =
                serde_path_to_error::deserialize(other.clone()).map_err(|e| Failure::config(format!("system.{}: {}", e.path(), e.inner())))?;
            Ok((cfg, base.to_path_buf()))
        }
    }
}

fn positive(name: &str, x: f64) -> Result<f64, Failure> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Failure::config(format!("{name}: must be positive and finite, got {x}")))
    }
}

/// Fills in every default and builds the system.
pub fn resolve(cfg: RunConfig, base: &Path, cli: &CliOverrides) -> Result<Resolved, Failure> {
    let (system, sys) = match (&cfg.system, &cfg.resonant_level) {
        (Some(_), Some(_)) => return Err(Failure::config("system: give either `system` or `resonant_level`, not both")),
        (Some(v), None) => {
            let (sc, dir) = parse_system(v, base)?;
            let sys = OpenSystem::from_config(&sc, Some(&dir)).map_err(|e| Failure::config(format!("system: {e}")))?;
            (Some(sys.to_config()), Some(sys))
        }
        (None, Some(p)) => {
            let sys = p.to_system().map_err(|e| Failure::config(format!("resonant_level: {e}")))?;
            (None, Some(sys))
        }
        (None, None) => (None, None),
    };

    let tg = cfg.time_grid.unwrap_or_default();
    let t_max = positive("time_grid.t_max", tg.t_max.unwrap_or(10.0))?;
    let spacing = tg.spacing.unwrap_or(Spacing::Linear);
    let n_points = tg.n_points.unwrap_or(101);
    if n_points == 0 {
        return Err(Failure::config("time_grid.n_points: must be at least 1"));
    }
    let t_min = positive("time_grid.t_min", tg.t_min.unwrap_or(t_max * 1e-3))?;
    if spacing == Spacing::Log && t_min >= t_max {
        return Err(Failure::config("time_grid.t_min: must be below t_max"));
    }

    let tt = cfg.two_time.unwrap_or_default();
    if let Some(t) = tt.t {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Failure::config(format!("two_time.t: must be finite and non-negative, got {t}")));
        }
    }
    let n_sites = sys.as_ref().map(|s| s.n_sites()).unwrap_or(0);
    let entries = match tt.entries {
        Some(e) => {
            if let Some(bad) = e.iter().find(|[l, m]| *l >= n_sites || *m >= n_sites) {
                return Err(Failure::config(format!("two_time.entries: ({}, {}) is outside a {n_sites}-site system", bad[0], bad[1])));
            }
            e
        }
        None => (0..n_sites).flat_map(|l| (0..n_sites).map(move |m| [l, m])).collect(),
    };
    let two_time = TwoTimeGrid {
        t: tt.t,
        tau_max: positive("two_time.tau_max", tt.tau_max.unwrap_or(10.0))?,
        n_points: match tt.n_points.unwrap_or(101) {
            0 => return Err(Failure::config("two_time.n_points: must be at least 1")),
            n => n,
        },
        entries,
    };

    let mut quad = QuadConfig::default();
    if let Some(q) = cfg.quad {
        if let Some(x) = q.abs_tol {
            quad.abs_tol = positive("quad.abs_tol", x)?;
        }
        if let Some(x) = q.rel_tol {
            quad.rel_tol = positive("quad.rel_tol", x)?;
        }
        if let Some(x) = q.max_intervals {
            if x == 0 {
                return Err(Failure::config("quad.max_intervals: must be at least 1"));
            }
            quad.max_intervals = x;
        }
    }
    if let Some(x) = cli.quad_tol {
        let x = positive("--quad-tol", x)?;
        quad.abs_tol = x;
        quad.rel_tol = x;
    }

    let min_margin = positive("pert.min_margin", cfg.pert.and_then(|p| p.min_margin).unwrap_or(10.0))?;
    let conductance = match (cfg.conductance, n_sites) {
        (_, 0) => None,
        (Some(c), n) => Some([c.r.unwrap_or(0), c.s.unwrap_or(n - 1)]),
        (None, n) => Some([0, n - 1]),
    };

    Ok(Resolved {
        level: cli.level.or(cfg.level).unwrap_or(Level::LevelI),
        energy_unit: cfg.energy_unit.unwrap_or_else(|| "arbitrary".into()),
        system,
        resonant_level: cfg.resonant_level,
        time_grid: TimeGrid {
            t_max,
            n_points,
            spacing,
            t_min,
        },
        two_time,
        initial: cfg.initial,
        quad,
        min_margin,
        conductance,
        with_naive: cli.with_naive,
        out: cli.out.clone().or(cfg.out).unwrap_or_else(|| PathBuf::from(".")),
        sys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let e = parse_run_config(r#"{"time_grid": {"t_max": 1, "npoints": 3}}"#).unwrap_err();
        assert!(e.message.contains("time_grid") && e.message.contains("npoints"), "{}", e.message);
        let e = parse_run_config(r#"{"levle": "l1"}"#).unwrap_err();
        assert!(e.message.contains("levle"), "{}", e.message);
    }

    #[test]
    fn nested_system_errors_carry_the_path() {
        let cfg = parse_run_config(
            r#"{"system": {"hamiltonian": {"dense": [[[0,0]]]}, "statistics": "fermion", "epsilon": 1,
                "baths": [{"site": 0, "beta": 1, "mu": 0, "spectral": {"kind": "wide_band", "gama": 1}}]}}"#,
        )
        .unwrap();
        let e = resolve(cfg, Path::new("."), &CliOverrides::default()).unwrap_err();
        assert!(e.message.contains("system.baths[0].spectral") && e.message.contains("gama"), "{}", e.message);
    }

    #[test]
    fn grids() {
        let g = TimeGrid {
            t_max: 2.0,
            n_points: 5,
            spacing: Spacing::Linear,
            t_min: 0.0,
        };
        assert_eq!(g.points(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let g = TimeGrid {
            t_max: 100.0,
            n_points: 3,
            spacing: Spacing::Log,
            t_min: 1.0,
        };
        let p = g.points();
        assert!((p[1] - 10.0).abs() < 1e-12 && p[2] == 100.0);
    }
}
