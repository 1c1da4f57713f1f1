//! Run orchestration: evaluates the requested mode over the time grid and
//! renders the CSV / summary outputs.
//!
//! Output bytes are a function of the resolved configuration (and seed)
//! only: float formatting is shortest-roundtrip, rows are emitted in grid
//! order, and the Monte Carlo reduction is deterministic across worker
//! counts. Summaries carry no timestamps for the same reason.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, RunMode};
use crate::double_scatter::{double_scatter_return, i22_bound, i23_bound};
use crate::error::{Error, Result};
use crate::geometry::{check_double_scatter_validity, check_far_field};
use crate::montecarlo::{estimate_returns, estimate_returns_logged, McTally, OrderClass};
use crate::single_scatter::single_scatter_return;

/// CSV schema version; bump when the column contract changes.
pub const CSV_SCHEMA: &str = "v1";

/// One analytic row of the return signal.
#[derive(Debug, Clone)]
pub struct SignalRow {
    pub t: f64,
    pub i1: Option<f64>,
    pub i21: Option<f64>,
    pub i21_err: Option<f64>,
    pub i22_bound: Option<f64>,
    /// `None` when the bound's own validity condition `eps t > 2 rho0` fails.
    pub i23_bound: Option<f64>,
    pub d0_empty: Option<bool>,
    pub far_field_ok: bool,
    pub far_field_margin: f64,
    /// `None` when undefined (`t <= rho0`).
    pub smallness_q: Option<f64>,
    pub q_ok: Option<bool>,
}

/// One Monte Carlo tally row.
#[derive(Debug, Clone)]
pub struct McRow {
    pub t_lo: f64,
    pub t_hi: f64,
    pub t_center: f64,
    pub class: &'static str,
    pub rate: f64,
    pub stderr: f64,
    pub events: u64,
}

/// One analytic-vs-Monte-Carlo comparison row.
#[derive(Debug, Clone)]
pub struct ValidateRow {
    pub t_center: f64,
    pub class: &'static str,
    pub mc_rate: f64,
    pub mc_stderr: f64,
    /// Bin-averaged analytic value (orders 1, 2) or remainder bound.
    pub reference: Option<f64>,
    /// `(mc - reference) / stderr`; for the remainder class the reference is
    /// an upper bound, so healthy values are negative.
    pub z_score: Option<f64>,
    pub far_field_margin: f64,
    pub smallness_q: Option<f64>,
}

/// Everything a run produces, independent of what gets written to disk.
#[derive(Debug, Clone, Default)]
pub struct ReturnSignal {
    pub rows: Vec<SignalRow>,
    pub mc_rows: Vec<McRow>,
    pub validate_rows: Vec<ValidateRow>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub signal: ReturnSignal,
    pub csv: String,
    pub summary: String,
    pub trajectory_log: Option<String>,
    /// True when any grid point violates a validity diagnostic (far-field
    /// check failed, or smallness q above threshold / undefined).
    pub regime_violation: bool,
    pub tally: Option<McTally>,
}

/// Execute the configured run and, when an output path is configured, write
/// the CSV, its `<path>.summary.txt` sibling, and the optional trajectory
/// log.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let needs_analytic = matches!(
        config.mode,
        RunMode::Single | RunMode::Double | RunMode::Validate
    );
    let rows = if needs_analytic {
        analytic_rows(config)?
    } else {
        Vec::new()
    };

    let (tally, trajectory_log) = match config.mode {
        RunMode::Mc | RunMode::Validate => {
            if config.log_trajectories.is_some() {
                let (tally, events) = estimate_returns_logged(
                    &config.mc,
                    &config.geometry,
                    &config.medium,
                    &config.grid,
                )?;
                let mut log = String::new();
                for ev in &events {
                    log.push_str(&serde_json::to_string(ev).expect("serializable event"));
                    log.push('\n');
                }
                (Some(tally), Some(log))
            } else {
                let tally =
                    estimate_returns(&config.mc, &config.geometry, &config.medium, &config.grid)?;
                (Some(tally), None)
            }
        }
        _ => (None, None),
    };

    let mc_rows = tally.as_ref().map(mc_rows).unwrap_or_default();
    let validate_rows = if config.mode == RunMode::Validate {
        validate_rows(config, tally.as_ref().unwrap(), &rows)?
    } else {
        Vec::new()
    };

    let regime_violation = rows
        .iter()
        .any(|r| !r.far_field_ok || r.q_ok == Some(false) || r.smallness_q.is_none());

    let signal = ReturnSignal {
        rows,
        mc_rows,
        validate_rows,
    };
    let csv = render_csv(config, &signal);
    let summary = render_summary(config, &signal, regime_violation);

    if let Some(path) = &config.output {
        std::fs::write(path, &csv)
            .map_err(|e| Error::Domain(format!("cannot write output {}: {e}", path.display())))?;
        let mut summary_path = path.clone().into_os_string();
        summary_path.push(".summary.txt");
        std::fs::write(&summary_path, &summary).map_err(|e| {
            Error::Domain(format!(
                "cannot write summary {}: {e}",
                std::path::Path::new(&summary_path).display()
            ))
        })?;
    }
    if let (Some(path), Some(log)) = (&config.log_trajectories, &trajectory_log) {
        std::fs::write(path, log).map_err(|e| {
            Error::Domain(format!(
                "cannot write trajectory log {}: {e}",
                path.display()
            ))
        })?;
    }

    Ok(RunOutput {
        signal,
        csv,
        summary,
        trajectory_log,
        regime_violation,
        tally,
    })
}

fn analytic_rows(config: &RunConfig) -> Result<Vec<SignalRow>> {
    let medium = &config.medium;
    let geom = &config.geometry;
    let want_single = matches!(config.mode, RunMode::Single | RunMode::Validate);
    let want_double = matches!(config.mode, RunMode::Double | RunMode::Validate);

    config
        .grid
        .times()
        .par_iter()
        .map(|&t| -> Result<SignalRow> {
            let at = |e: Error| Error::Domain(format!("at time point t = {t}: {e}"));
            let far = check_far_field(t, geom);
            let q = check_double_scatter_validity(t, geom, medium).ok();
            let q_ok = q.map(|v| v <= config.q_threshold);

            let i1 = if want_single {
                Some(single_scatter_return(t, geom, medium).map_err(at)?)
            } else {
                None
            };

            let (i21, i21_err, d0_empty, b22, b23) = if want_double {
                let ds =
                    double_scatter_return(t, geom, medium, config.phase_mode, &config.quadrature)
                        .map_err(at)?;
                (
                    Some(ds.value),
                    Some(ds.error),
                    Some(ds.d0_empty),
                    Some(i22_bound(t, geom, medium)),
                    i23_bound(t, geom, medium).ok(),
                )
            } else {
                (None, None, None, None, None)
            };

            Ok(SignalRow {
                t,
                i1,
                i21,
                i21_err,
                i22_bound: b22,
                i23_bound: b23,
                d0_empty,
                far_field_ok: far.ok,
                far_field_margin: far.margin,
                smallness_q: q,
                q_ok,
            })
        })
        .collect()
}

fn mc_rows(tally: &McTally) -> Vec<McRow> {
    let classes = [
        OrderClass::One,
        OrderClass::TwoInD0,
        OrderClass::TwoOutD0,
        OrderClass::ThreePlus,
    ];
    let mut rows = Vec::with_capacity(tally.n_bins() * (classes.len() + 1));
    for bin in 0..tally.n_bins() {
        for class in classes {
            rows.push(McRow {
                t_lo: tally.edges()[bin],
                t_hi: tally.edges()[bin + 1],
                t_center: tally.bin_center(bin),
                class: class.label(),
                rate: tally.rate(bin, class),
                stderr: tally.stderr(bin, class),
                events: tally.events(bin, class),
            });
        }
        rows.push(McRow {
            t_lo: tally.edges()[bin],
            t_hi: tally.edges()[bin + 1],
            t_center: tally.bin_center(bin),
            class: "total",
            rate: tally.total_rate(bin),
            stderr: f64::NAN,
            events: classes.iter().map(|&c| tally.events(bin, c)).sum(),
        });
    }
    rows
}

/// Gauss-Legendre bin average of an analytic curve (the Monte Carlo tally
/// estimates bin averages, not point values, so references are averaged the
/// same way).
fn bin_average<F: Fn(f64) -> Result<f64>>(f: F, lo: f64, hi: f64) -> Result<f64> {
    const NODES: [f64; 7] = [
        -0.9491079123427585,
        -0.7415311855993945,
        -0.4058451513773972,
        0.0,
        0.4058451513773972,
        0.7415311855993945,
        0.9491079123427585,
    ];
    const WEIGHTS: [f64; 7] = [
        0.1294849661688697,
        0.2797053914892766,
        0.3818300505051189,
        0.4179591836734694,
        0.3818300505051189,
        0.2797053914892766,
        0.1294849661688697,
    ];
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut acc = 0.0;
    for (x, w) in NODES.iter().zip(&WEIGHTS) {
        acc += w * f(c + h * x)?;
    }
    Ok(acc / 2.0)
}

fn validate_rows(
    config: &RunConfig,
    tally: &McTally,
    rows: &[SignalRow],
) -> Result<Vec<ValidateRow>> {
    let geom = &config.geometry;
    let medium = &config.medium;

    let per_bin: Vec<Vec<ValidateRow>> = (0..tally.n_bins())
        .into_par_iter()
        .map(|bin| -> Result<Vec<ValidateRow>> {
            let lo = tally.edges()[bin];
            let hi = tally.edges()[bin + 1];
            let center = tally.bin_center(bin);
            let diag = rows.get(bin);
            let margin = diag.map(|r| r.far_field_margin).unwrap_or(f64::NAN);
            let q = diag.and_then(|r| r.smallness_q);

            let at = |e: Error| Error::Domain(format!("at time bin around t = {center}: {e}"));
            let i1_avg =
                bin_average(|t| single_scatter_return(t, geom, medium), lo, hi).map_err(at)?;
            let i21_avg = bin_average(
                |t| {
                    double_scatter_return(t, geom, medium, config.phase_mode, &config.quadrature)
                        .map(|d| d.value)
                },
                lo,
                hi,
            )
            .map_err(at)?;
            let remainder_bound = {
                let b23 = i23_bound(center, geom, medium).ok();
                b23.map(|b| b + i22_bound(center, geom, medium))
            };

            let z = |mc: f64, reference: f64, se: f64| -> Option<f64> {
                (se > 0.0).then(|| (mc - reference) / se)
            };

            let mut out = Vec::with_capacity(4);
            let mc1 = tally.rate(bin, OrderClass::One);
            let se1 = tally.stderr(bin, OrderClass::One);
            out.push(ValidateRow {
                t_center: center,
                class: OrderClass::One.label(),
                mc_rate: mc1,
                mc_stderr: se1,
                reference: Some(i1_avg),
                z_score: z(mc1, i1_avg, se1),
                far_field_margin: margin,
                smallness_q: q,
            });
            let mc2 = tally.rate(bin, OrderClass::TwoInD0);
            let se2 = tally.stderr(bin, OrderClass::TwoInD0);
            out.push(ValidateRow {
                t_center: center,
                class: OrderClass::TwoInD0.label(),
                mc_rate: mc2,
                mc_stderr: se2,
                reference: Some(i21_avg),
                z_score: z(mc2, i21_avg, se2),
                far_field_margin: margin,
                smallness_q: q,
            });
            let mcr = tally.rate(bin, OrderClass::TwoOutD0);
            let ser = tally.stderr(bin, OrderClass::TwoOutD0);
            out.push(ValidateRow {
                t_center: center,
                class: OrderClass::TwoOutD0.label(),
                mc_rate: mcr,
                mc_stderr: ser,
                reference: remainder_bound,
                z_score: remainder_bound.and_then(|b| z(mcr, b, ser)),
                far_field_margin: margin,
                smallness_q: q,
            });
            let mc3 = tally.rate(bin, OrderClass::ThreePlus);
            let se3 = tally.stderr(bin, OrderClass::ThreePlus);
            out.push(ValidateRow {
                t_center: center,
                class: OrderClass::ThreePlus.label(),
                mc_rate: mc3,
                mc_stderr: se3,
                reference: None,
                z_score: None,
                far_field_margin: margin,
                smallness_q: q,
            });
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(per_bin.into_iter().flatten().collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_bool(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

fn render_csv(config: &RunConfig, signal: &ReturnSignal) -> String {
    let mut out = String::new();
    out.push_str(&format!("# lidar-scatter csv {CSV_SCHEMA}\n"));
    out.push_str(&format!("# mode: {}\n", config.mode));
    match config.mode {
        RunMode::Single => {
            out.push_str("t,i1,far_field_ok,far_field_margin,smallness_q,q_ok\n");
            for r in &signal.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.t,
                    fmt_opt(r.i1),
                    r.far_field_ok,
                    r.far_field_margin,
                    fmt_opt(r.smallness_q),
                    fmt_opt_bool(r.q_ok),
                ));
            }
        }
        RunMode::Double => {
            out.push_str(
                "t,i21,i21_err,i22_bound,i23_bound,d0_empty,far_field_ok,far_field_margin,smallness_q,q_ok\n",
            );
            for r in &signal.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.t,
                    fmt_opt(r.i21),
                    fmt_opt(r.i21_err),
                    fmt_opt(r.i22_bound),
                    fmt_opt(r.i23_bound),
                    fmt_opt_bool(r.d0_empty),
                    r.far_field_ok,
                    r.far_field_margin,
                    fmt_opt(r.smallness_q),
                    fmt_opt_bool(r.q_ok),
                ));
            }
        }
        RunMode::Mc => {
            out.push_str("t_lo,t_hi,t_center,class,rate,stderr,events\n");
            for r in &signal.mc_rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.t_lo, r.t_hi, r.t_center, r.class, r.rate, r.stderr, r.events
                ));
            }
        }
        RunMode::Validate => {
            out.push_str(
                "t_center,class,mc_rate,mc_stderr,reference,z_score,far_field_margin,smallness_q\n",
            );
            for r in &signal.validate_rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.t_center,
                    r.class,
                    r.mc_rate,
                    r.mc_stderr,
                    fmt_opt(r.reference),
                    fmt_opt(r.z_score),
                    r.far_field_margin,
                    fmt_opt(r.smallness_q),
                ));
            }
        }
    }
    out
}

fn render_summary(config: &RunConfig, signal: &ReturnSignal, regime_violation: bool) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config.canonical_string().as_bytes());
    let hash = hasher.finalize();
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();

    let mut s = String::new();
    s.push_str("lidar-scatter summary\n");
    s.push_str(&format!("version: {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("csv_schema: {CSV_SCHEMA}\n"));
    s.push_str(&format!("mode: {}\n", config.mode));
    s.push_str(&format!("config_hash: sha256:{hex}\n"));
    s.push_str(&format!("seed: {}\n", config.seed));
    s.push_str(&format!("time_points: {}\n", config.grid.len()));
    s.push_str(&format!("phase_approx: {:?}\n", config.phase_mode));
    if matches!(config.mode, RunMode::Double | RunMode::Validate) {
        s.push_str(&format!(
            "quadrature_rel_tol: {}\n",
            config.quadrature.rel_tol
        ));
        s.push_str(&format!(
            "corner_substitution: {}\n",
            config.quadrature.corner_substitution
        ));
    }
    if matches!(config.mode, RunMode::Mc | RunMode::Validate) {
        s.push_str(&format!("histories: {}\n", config.mc.histories));
        s.push_str(&format!("blocks: {}\n", config.mc.blocks));
        s.push_str(&format!("estimator: {:?}\n", config.mc.mode));
        s.push_str(&format!("horizon: {}\n", config.mc.horizon));
    }
    s.push_str(&format!("rows: {}\n", signal.rows.len()));
    s.push_str(&format!("mc_rows: {}\n", signal.mc_rows.len()));
    s.push_str(&format!("validate_rows: {}\n", signal.validate_rows.len()));
    s.push_str(&format!("regime_violation: {regime_violation}\n"));
    s
}
