//! Run configuration: TOML schema, loading, resolution, validation.
//!
//! A run file looks like:
//!
//! ```toml
//! mode = "validate"            # single | double | mc | validate
//! seed = 42
//! # q_threshold = 0.01         # classification threshold for the smallness q
//!
//! [medium]                     # inline medium (see MediumSpec), or:
//! # file = "profile.toml"      # load the medium from a profile file
//! kind = "homogeneous"
//! sigma_t = 0.01
//! phase = { kind = "isotropic", scattering = 0.008 }
//!
//! [geometry]
//! rho0 = 0.1
//! epsilon = 0.1                # or theta0 = <radians>; exactly one
//!
//! [time]
//! t_min = 50.0                 # or points = [t1, t2, ...]
//! t_max = 150.0
//! n = 11
//! spacing = "linear"           # linear | log
//!
//! [quadrature]                 # optional, defaults shown in docs
//! rel_tol = 1e-6
//!
//! [mc]                         # optional for analytic-only modes
//! histories = 1000000
//! blocks = 64
//! estimator = "next-event"     # analog | next-event
//! # horizon = 160.0            # default: upper edge of the last time bin
//!
//! [output]
//! path = "signal.csv"          # also writes signal.csv.summary.txt
//! format = "csv"
//! ```
//!
//! Validation failures are collected and reported together, each prefixed
//! with its field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::double_scatter::QuadratureConfig;
use crate::error::ConfigError;
use crate::geometry::{DetectorGeometry, TimeGrid, DEFAULT_Q_THRESHOLD};
use crate::medium::{MediumModel, MediumSpec, PhaseApproximationMode};
use crate::montecarlo::{EstimatorMode, McConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Single,
    Double,
    Mc,
    Validate,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RunMode::Single => "single",
            RunMode::Double => "double",
            RunMode::Mc => "mc",
            RunMode::Validate => "validate",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(RunMode::Single),
            "double" => Ok(RunMode::Double),
            "mc" => Ok(RunMode::Mc),
            "validate" => Ok(RunMode::Validate),
            other => Err(format!(
                "unknown mode `{other}` (expected single|double|mc|validate)"
            )),
        }
    }
}

/// The file-level schema before resolution.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<RunMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_approx: Option<PhaseApproximationMode>,
    pub medium: Option<toml::Value>,
    pub geometry: Option<GeometrySection>,
    pub time: Option<TimeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub rho0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Spacing>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histories: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
}

/// Command-line overrides merged over the file before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<RunMode>,
    pub seed: Option<u64>,
    pub histories: Option<u64>,
    pub out: Option<PathBuf>,
    pub strict: bool,
    pub log_trajectories: Option<PathBuf>,
}

/// Fully resolved, validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: RunMode,
    pub seed: u64,
    pub medium: MediumModel,
    pub medium_spec: MediumSpec,
    pub geometry: DetectorGeometry,
    pub grid: TimeGrid,
    pub phase_mode: PhaseApproximationMode,
    pub quadrature: QuadratureConfig,
    pub mc: McConfig,
    pub q_threshold: f64,
    pub output: Option<PathBuf>,
    pub strict: bool,
    pub log_trajectories: Option<PathBuf>,
}

impl RunConfig {
    /// Canonical serialized form of everything that determines the run's
    /// numbers; its SHA-256 is the `config_hash` of the summary output.
    pub fn canonical_string(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            mode: RunMode,
            seed: u64,
            medium: &'a MediumSpec,
            rho0: f64,
            theta0: f64,
            times: &'a [f64],
            phase_approx: PhaseApproximationMode,
            quadrature: &'a QuadratureConfig,
            histories: u64,
            blocks: u32,
            estimator: EstimatorMode,
            horizon: f64,
            q_threshold: f64,
        }
        serde_json::to_string(&Canonical {
            mode: self.mode,
            seed: self.seed,
            medium: &self.medium_spec,
            rho0: self.geometry.rho0(),
            theta0: self.geometry.theta0(),
            times: self.grid.times(),
            phase_approx: self.phase_mode,
            quadrature: &self.quadrature,
            histories: self.mc.histories,
            blocks: self.mc.blocks,
            estimator: self.mc.mode,
            horizon: self.mc.horizon,
            q_threshold: self.q_threshold,
        })
        .expect("canonical config serialization cannot fail")
    }
}

/// Load, resolve and validate a run configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    load_config_with(path, &Overrides::default())
}

/// As [`load_config`], with command-line overrides applied before validation.
pub fn load_config_with(
    path: impl AsRef<Path>,
    overrides: &Overrides,
) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(ConfigError::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| ConfigError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    resolve(raw, path.parent().unwrap_or(Path::new(".")), overrides)
}

fn resolve(
    raw: RawConfig,
    base_dir: &Path,
    overrides: &Overrides,
) -> Result<RunConfig, ConfigError> {
    let mut problems: Vec<String> = Vec::new();

    let mode = overrides.mode.or(raw.mode);
    if mode.is_none() {
        problems.push("mode: required (set it in the file or pass --mode)".into());
    }

    let seed = overrides.seed.or(raw.seed).unwrap_or(0);

    // --- medium ---
    let medium_spec: Option<MediumSpec> = match &raw.medium {
        None => {
            problems.push("medium: required".into());
            None
        }
        Some(value) => match value {
            toml::Value::Table(table) if table.contains_key("file") => {
                match table.get("file").and_then(|v| v.as_str()) {
                    None => {
                        problems.push("medium.file: must be a string path".into());
                        None
                    }
                    Some(rel) => {
                        let profile_path = base_dir.join(rel);
                        if !profile_path.exists() {
                            return Err(ConfigError::MissingFile { path: profile_path });
                        }
                        let text = std::fs::read_to_string(&profile_path).map_err(|source| {
                            ConfigError::Io {
                                path: profile_path.clone(),
                                source,
                            }
                        })?;
                        match toml::from_str::<MediumSpec>(&text) {
                            Ok(spec) => Some(spec),
                            Err(e) => {
                                return Err(ConfigError::Schema {
                                    path: profile_path,
                                    message: e.to_string(),
                                })
                            }
                        }
                    }
                }
            }
            other => match other.clone().try_into::<MediumSpec>() {
                Ok(spec) => Some(spec),
                Err(e) => {
                    problems.push(format!("medium: {e}"));
                    None
                }
            },
        },
    };
    let medium = medium_spec.as_ref().and_then(|spec| match spec.build() {
        Ok(m) => Some(m),
        Err(e) => {
            problems.push(format!("medium: {e}"));
            None
        }
    });

    // --- geometry ---
    let geometry = match &raw.geometry {
        None => {
            problems.push("geometry: required".into());
            None
        }
        Some(g) => {
            let mut geom = None;
            let rho0 = match g.rho0 {
                None => {
                    problems.push("geometry.rho0: required".into());
                    None
                }
                Some(r) if r.is_finite() && r > 0.0 => Some(r),
                Some(r) => {
                    problems.push(format!("geometry.rho0: must be finite and > 0, got {r}"));
                    None
                }
            };
            match (g.theta0, g.epsilon) {
                (Some(_), Some(_)) => {
                    problems.push("geometry: set exactly one of theta0 and epsilon".into());
                }
                (None, None) => {
                    problems.push("geometry: one of theta0 or epsilon is required".into());
                }
                (Some(theta0), None) => {
                    if !theta0.is_finite() || theta0 <= 0.0 || theta0 >= std::f64::consts::FRAC_PI_2
                    {
                        problems.push(format!(
                            "geometry.theta0: must lie in (0, pi/2), got {theta0}"
                        ));
                    } else if let Some(r) = rho0 {
                        geom = DetectorGeometry::new(r, theta0).ok();
                    }
                }
                (None, Some(eps)) => {
                    if !eps.is_finite() || eps <= 0.0 {
                        problems.push(format!(
                            "geometry.epsilon: must be finite and > 0, got {eps}"
                        ));
                    } else if let Some(r) = rho0 {
                        geom = DetectorGeometry::from_epsilon(r, eps).ok();
                    }
                }
            }
            geom
        }
    };

    // --- time grid ---
    let grid = match &raw.time {
        None => {
            problems.push("time: required".into());
            None
        }
        Some(t) => {
            let from_points = t.points.is_some();
            let from_range = t.t_min.is_some() || t.t_max.is_some() || t.n.is_some();
            if from_points && from_range {
                problems.push(
                    "time: give either explicit points or {t_min, t_max, n}, not both".into(),
                );
                None
            } else if from_points {
                match TimeGrid::new(t.points.clone().unwrap()) {
                    Ok(g) => Some(g),
                    Err(e) => {
                        problems.push(format!("time.points: {e}"));
                        None
                    }
                }
            } else if from_range {
                match (t.t_min, t.t_max, t.n) {
                    (Some(lo), Some(hi), Some(n)) => {
                        let built = match t.spacing.unwrap_or(Spacing::Linear) {
                            Spacing::Linear => TimeGrid::linear(lo, hi, n),
                            Spacing::Log => TimeGrid::log(lo, hi, n),
                        };
                        match built {
                            Ok(g) => Some(g),
                            Err(e) => {
                                problems.push(format!("time: {e}"));
                                None
                            }
                        }
                    }
                    _ => {
                        problems.push("time: t_min, t_max and n are all required".into());
                        None
                    }
                }
            } else {
                problems.push("time: give explicit points or {t_min, t_max, n}".into());
                None
            }
        }
    };

    // --- quadrature ---
    let quadrature = raw.quadrature.unwrap_or_default();
    if let Err(e) = quadrature.validate() {
        problems.push(format!("quadrature: {e}"));
    }

    // --- monte carlo ---
    let mc_section = raw.mc.clone().unwrap_or(McSection {
        histories: None,
        blocks: None,
        estimator: None,
        horizon: None,
    });
    let histories = overrides
        .histories
        .or(mc_section.histories)
        .unwrap_or(1_000_000);
    let blocks = mc_section.blocks.unwrap_or(64);
    if histories < 1 {
        problems.push("mc.histories: must be >= 1".into());
    }
    if blocks < 1 {
        problems.push("mc.blocks: must be >= 1".into());
    }
    if histories >= 1 && blocks >= 1 && histories < u64::from(blocks) {
        problems.push(format!(
            "mc.histories: must be >= mc.blocks ({histories} < {blocks})"
        ));
    }
    let default_horizon = grid
        .as_ref()
        .map(|g| *g.bin_edges().last().unwrap())
        .unwrap_or(0.0);
    let horizon = mc_section.horizon.unwrap_or(default_horizon);
    if !(horizon > 0.0) {
        problems.push(format!("mc.horizon: must be > 0, got {horizon}"));
    }

    let q_threshold = raw.q_threshold.unwrap_or(DEFAULT_Q_THRESHOLD);
    if !(q_threshold > 0.0) {
        problems.push(format!("q_threshold: must be > 0, got {q_threshold}"));
    }

    let output = overrides
        .out
        .clone()
        .or_else(|| raw.output.as_ref().and_then(|o| o.path.clone()));

    if !problems.is_empty() {
        return Err(ConfigError::Invalid { problems });
    }

    Ok(RunConfig {
        mode: mode.unwrap(),
        seed,
        medium: medium.unwrap(),
        medium_spec: medium_spec.unwrap(),
        geometry: geometry.unwrap(),
        grid: grid.unwrap(),
        phase_mode: raw.phase_approx.unwrap_or_default(),
        quadrature,
        mc: McConfig {
            histories,
            blocks,
            seed,
            mode: mc_section.estimator.unwrap_or_default(),
            horizon,
        },
        q_threshold,
        output,
        strict: overrides.strict,
        log_trajectories: overrides.log_trajectories.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(name: &str, contents: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("lidar_scatter_cfg_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    const MINIMAL: &str = r#"
        mode = "single"
        [medium]
        kind = "homogeneous"
        sigma_t = 0.1
        phase = { kind = "isotropic", scattering = 0.05 }
        [geometry]
        rho0 = 0.1
        epsilon = 0.1
        [time]
        points = [20.0, 50.0, 100.0]
    "#;

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let path = write_tmp("minimal.toml", MINIMAL);
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.mode, RunMode::Single);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.quadrature.rel_tol, 1e-6);
        assert!(cfg.quadrature.corner_substitution);
        assert_eq!(cfg.mc.histories, 1_000_000);
        assert_eq!(cfg.mc.blocks, 64);
        assert_eq!(cfg.mc.mode, EstimatorMode::Analog);
        assert_eq!(cfg.q_threshold, 0.01);
        // default horizon: upper edge of the last bin
        assert_eq!(cfg.mc.horizon, 125.0);
    }

    #[test]
    fn invalid_theta0_is_reported_with_field_path() {
        let bad = MINIMAL.replace("epsilon = 0.1", "theta0 = 2.0");
        let path = write_tmp("bad_theta.toml", &bad);
        match load_config(&path) {
            Err(ConfigError::Invalid { problems }) => {
                assert!(
                    problems.iter().any(|p| p.starts_with("geometry.theta0")),
                    "problems: {problems:?}"
                );
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn dangling_profile_path_names_the_file() {
        let cfg = r#"
            mode = "single"
            [medium]
            file = "does_not_exist_profile.toml"
            [geometry]
            rho0 = 0.1
            epsilon = 0.1
            [time]
            points = [20.0]
        "#;
        let path = write_tmp("dangling.toml", cfg);
        match load_config(&path) {
            Err(ConfigError::MissingFile { path }) => {
                assert!(path
                    .to_string_lossy()
                    .contains("does_not_exist_profile.toml"));
            }
            other => panic!("expected MissingFile, got {other:?}"),
        }
    }

    #[test]
    fn multiple_problems_reported_together() {
        let cfg = r#"
            [medium]
            kind = "homogeneous"
            sigma_t = 0.1
            phase = { kind = "isotropic", scattering = 0.05 }
            [geometry]
            rho0 = -1.0
            theta0 = 2.0
            [time]
            points = [20.0, 5.0]
        "#;
        let path = write_tmp("multi.toml", cfg);
        match load_config(&path) {
            Err(ConfigError::Invalid { problems }) => {
                assert!(problems.len() >= 3, "problems: {problems:?}");
                assert!(problems.iter().any(|p| p.starts_with("mode")));
                assert!(problems.iter().any(|p| p.starts_with("geometry.rho0")));
                assert!(problems.iter().any(|p| p.starts_with("time")));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn overrides_apply_before_validation() {
        let no_mode = MINIMAL.replace("mode = \"single\"", "");
        let path = write_tmp("no_mode.toml", &no_mode);
        assert!(load_config(&path).is_err());
        let cfg = load_config_with(
            &path,
            &Overrides {
                mode: Some(RunMode::Double),
                seed: Some(7),
                histories: Some(128),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(cfg.mode, RunMode::Double);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mc.histories, 128);
    }

    #[test]
    fn histories_must_cover_blocks() {
        let cfg = format!("{MINIMAL}\n[mc]\nhistories = 10\nblocks = 64\n");
        let path = write_tmp("small_mc.toml", &cfg);
        match load_config(&path) {
            Err(ConfigError::Invalid { problems }) => {
                assert!(problems.iter().any(|p| p.starts_with("mc.histories")));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn schema_violation_is_distinct_from_invalid() {
        let path = write_tmp("notml.toml", "mode = [this is not toml");
        assert!(matches!(
            load_config(&path),
            Err(ConfigError::Schema { .. })
        ));
        assert!(matches!(
            load_config("/definitely/not/here.toml"),
            Err(ConfigError::MissingFile { .. })
        ));
    }

    #[test]
    fn canonical_string_is_stable() {
        let path = write_tmp("canon.toml", MINIMAL);
        let a = load_config(&path).unwrap().canonical_string();
        let b = load_config(&path).unwrap().canonical_string();
        assert_eq!(a, b);
    }
}
