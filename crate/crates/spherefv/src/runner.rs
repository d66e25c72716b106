//! Scenario driver: builds the grid and problem from a [`RunConfig`],
//! marches the solver to the stop rule, and writes the timeseries, final
//! profile, and summary CSVs. The convergence suite repeats a run over a
//! grid sequence and assembles an error/rate table.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use crate::config::{flux_order_num, integrator_name, scheme_name, RunConfig, ScenarioId};
use crate::diagnostics::{incompressibility_index, l1_error};
use crate::error::SolverError;
use crate::grid::Grid;
use crate::io::{fmt_float, write_profile, write_summary, write_table, SummaryRecord, TimeseriesWriter};
use crate::model::{initial_state, manufactured_scenario, ModelProblem};
use crate::scheme::{Problem, State};
use crate::time::{admissible_dtau, advance};
use crate::tumor::{initial_tumor_state, tumor_scenario, StopRule, TumorCase, TumorProblem};

/// Defensive bound on the step count of a single run.
const MAX_STEPS: u64 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    /// The solution blew up or the domain collapsed; outputs hold the last
    /// finite state and the CSVs carry a FAILED marker row.
    Nan,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Nan => "nan",
        }
    }
}

/// What a finished (or failed) run reports back.
pub struct RunSummary {
    pub status: RunStatus,
    /// Stop time; for radius-triggered stops, the crossing time obtained by
    /// linear interpolation inside the final step.
    pub final_tau: f64,
    pub final_radius: f64,
    pub final_d_theta: f64,
    pub steps: u64,
    pub wall_time: Duration,
    /// Signed radius error against the closed form, when one exists.
    pub radius_error: Option<f64>,
    pub l1_g: Option<f64>,
    pub l1_m: Option<f64>,
    pub final_state: State,
}

pub struct RunArtifacts {
    pub timeseries_path: PathBuf,
    pub profile_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: RunSummary,
}

struct MarchOutcome {
    state: State,
    steps: u64,
    status: RunStatus,
    final_tau: f64,
    final_radius: f64,
    final_d_theta: f64,
}

/// Advances `state` until the stop rule fires. Blow-ups and domain
/// collapses end the march with [`RunStatus::Nan`] after flushing a FAILED
/// marker; every other error propagates.
fn march<P: Problem>(
    p: &P,
    state0: State,
    grid: &Grid,
    cfg: &RunConfig,
    ts: &mut TimeseriesWriter,
) -> Result<MarchOutcome, SolverError> {
    let mut state = state0;
    let mut d_theta = incompressibility_index(&state.fields, state.radius.r, grid, 1.0);
    ts.write(0, state.tau, state.radius.r, state.radius.r_prime, 0.0, d_theta)?;

    let mut steps: u64 = 0;
    let mut last_emit: u64 = 0;
    let mut last_dtau = 0.0;
    let mut status = RunStatus::Ok;
    let mut final_tau = state.tau;
    let mut final_radius = state.radius.r;

    loop {
        match cfg.stop {
            StopRule::FinalTime(t_end) => {
                if state.tau >= t_end * (1.0 - 1e-12) {
                    break;
                }
            }
            StopRule::RadiusReached(r_stop) => {
                if state.radius.r >= r_stop {
                    break;
                }
            }
        }
        if steps >= MAX_STEPS {
            return Err(SolverError::Numerical(format!(
                "step cap {MAX_STEPS} reached at tau {}",
                state.tau
            )));
        }

        let mut dtau = match cfg.method.dt_fixed {
            Some(dt) => dt,
            None => match admissible_dtau(p, &state, grid, &cfg.method) {
                Ok(d) => d,
                Err(SolverError::BlowUp { .. }) | Err(SolverError::DomainCollapse { .. }) => {
                    status = RunStatus::Nan;
                    break;
                }
                Err(e) => return Err(e),
            },
        };
        if let StopRule::FinalTime(t_end) = cfg.stop {
            dtau = dtau.min(t_end - state.tau);
        }
        if !dtau.is_finite() || dtau <= 0.0 {
            return Err(SolverError::Numerical(format!(
                "admissible step {dtau} at tau {}: the stop condition is unreachable",
                state.tau
            )));
        }

        let prev_tau = state.tau;
        let prev_r = state.radius.r;
        state = match advance(p, &state, grid, &cfg.method, dtau) {
            Ok(s) => s,
            Err(SolverError::BlowUp { .. }) | Err(SolverError::DomainCollapse { .. }) => {
                status = RunStatus::Nan;
                break;
            }
            Err(e) => return Err(e),
        };
        steps += 1;
        last_dtau = dtau;
        d_theta = incompressibility_index(&state.fields, state.radius.r, grid, 1.0);
        final_tau = state.tau;
        final_radius = state.radius.r;

        if steps % cfg.emit_every as u64 == 0 {
            ts.write(steps, state.tau, state.radius.r, state.radius.r_prime, dtau, d_theta)?;
            last_emit = steps;
        }

        if let StopRule::RadiusReached(r_stop) = cfg.stop {
            if state.radius.r >= r_stop {
                // The stop radius is crossed inside this step; place the
                // stop time on the chord between the bracketing states.
                if state.radius.r > prev_r {
                    final_tau = prev_tau + dtau * (r_stop - prev_r) / (state.radius.r - prev_r);
                    final_radius = r_stop;
                }
                break;
            }
        }
    }

    if last_emit != steps {
        ts.write(steps, state.tau, state.radius.r, state.radius.r_prime, last_dtau, d_theta)?;
    }
    if status == RunStatus::Nan {
        ts.mark_failed()?;
    }
    Ok(MarchOutcome { state, steps, status, final_tau, final_radius, final_d_theta: d_theta })
}

fn run_base_name(cfg: &RunConfig) -> String {
    format!(
        "{}_{}_o{}_{}_n{}",
        cfg.scenario.as_str(),
        scheme_name(cfg.method.scheme),
        flux_order_num(cfg.method.flux_order),
        integrator_name(cfg.method.integrator),
        cfg.n_eta
    )
}

/// Executes one configured run and writes its three CSVs into
/// `cfg.output_dir`. Blow-ups return `Ok` with [`RunStatus::Nan`] so a
/// caller can keep going; structural errors (I/O, nonconvergence, bad
/// config) return `Err`.
pub fn run_scenario(cfg: &RunConfig) -> Result<RunArtifacts, SolverError> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }

    let grid = Grid::build(cfg.n_eta, cfg.ext_factor)?;
    let base = run_base_name(cfg);
    let timeseries_path = cfg.output_dir.join(format!("{base}_timeseries.csv"));
    let profile_path = cfg.output_dir.join(format!("{base}_profile.csv"));
    let summary_path = cfg.output_dir.join(format!("{base}_summary.csv"));

    let started = Instant::now();
    let mut ts = TimeseriesWriter::create(&timeseries_path)?;

    let (out, species, radius_error, l1_g, l1_m) = match cfg.scenario {
        ScenarioId::CaseStudy | ScenarioId::Pdgf => {
            let case = if cfg.scenario == ScenarioId::CaseStudy {
                TumorCase::CaseStudy
            } else {
                TumorCase::Pdgf
            };
            let sc = tumor_scenario(case);
            let p = TumorProblem { scenario: &sc };
            let s0 = initial_tumor_state(&sc, &grid)?;
            let out = march(&p, s0, &grid, cfg, &mut ts)?;
            (out, ["G", "N", "M"].as_slice(), None, None, None)
        }
        _ => {
            let id = cfg.scenario.manufactured_id().expect("model scenario");
            let sc = manufactured_scenario(id)?;
            let p = ModelProblem { scenario: &sc };
            let s0 = initial_state(&sc, &grid)?;
            let out = march(&p, s0, &grid, cfg, &mut ts)?;
            let (re, lg, lm) = if out.status == RunStatus::Ok {
                let re = sc.exact_radius.as_ref().map(|f| out.final_radius - f(out.final_tau));
                match &sc.exact_species {
                    Some(ex) => {
                        let (ge, me) = ex(out.final_tau);
                        let lg = l1_error(&out.state.fields[0], |_| ge, &grid);
                        let lm = l1_error(&out.state.fields[1], |_| me, &grid);
                        (re, Some(lg), Some(lm))
                    }
                    None => (re, None, None),
                }
            } else {
                (None, None, None)
            };
            (out, ["G", "M"].as_slice(), re, lg, lm)
        }
    };
    ts.finish()?;

    write_profile(&profile_path, &grid, &out.state, species, out.status == RunStatus::Nan)?;
    write_summary(
        &summary_path,
        &SummaryRecord {
            scenario: cfg.scenario.as_str(),
            scheme: scheme_name(cfg.method.scheme),
            flux_order: flux_order_num(cfg.method.flux_order),
            integrator: integrator_name(cfg.method.integrator),
            n_eta: cfg.n_eta,
            final_tau: out.final_tau,
            final_radius: out.final_radius,
            final_d_theta: out.final_d_theta,
            steps: out.steps,
            status: out.status.as_str(),
        },
    )?;

    if cfg.scenario.is_tumor() {
        if let Some(a) = &out.state.chemo {
            let tail = a.last().copied().unwrap_or(0.0).abs();
            let peak = a.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            if peak > 0.0 && tail > 1e-6 * peak {
                eprintln!(
                    "note: far-field chemoattractant is {:.1e} of its peak; \
                     a larger ext_factor would reduce truncation",
                    tail / peak
                );
            }
        }
    }

    Ok(RunArtifacts {
        timeseries_path,
        profile_path,
        summary_path,
        summary: RunSummary {
            status: out.status,
            final_tau: out.final_tau,
            final_radius: out.final_radius,
            final_d_theta: out.final_d_theta,
            steps: out.steps,
            wall_time: started.elapsed(),
            radius_error,
            l1_g,
            l1_m,
            final_state: out.state,
        },
    })
}

/// One grid line of a convergence table.
pub struct SuiteRow {
    pub n_eta: usize,
    pub status: RunStatus,
    pub final_tau: f64,
    pub final_radius: f64,
    /// Error in the stop-rule quantity: final radius for timed runs, stop
    /// time for radius-triggered runs. Against the closed form when one
    /// exists, otherwise against the finest successful grid (whose own
    /// entry is then empty).
    pub error: Option<f64>,
    pub rate: Option<f64>,
    pub l1_g: Option<f64>,
    pub rate_g: Option<f64>,
    pub l1_m: Option<f64>,
    pub rate_m: Option<f64>,
    pub d_theta: f64,
}

fn dyadic_rate(prev: Option<f64>, cur: Option<f64>) -> Option<f64> {
    match (prev, cur) {
        (Some(a), Some(b))
            if a.abs() > 0.0 && b.abs() > 0.0 && a.is_finite() && b.is_finite() =>
        {
            Some((a.abs() / b.abs()).log2())
        }
        _ => None,
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Runs `base` on each grid in `grids` and writes an error/rate table next
/// to the per-run artifacts. A run that blows up contributes a `nan` row;
/// the suite always finishes.
pub fn run_convergence_suite(
    base: &RunConfig,
    grids: &[usize],
) -> Result<(Vec<SuiteRow>, PathBuf), SolverError> {
    if grids.is_empty() {
        return Err(SolverError::Config("suite: empty grid list".into()));
    }
    for w in &base.warnings {
        eprintln!("warning: {w}");
    }

    let mut summaries: Vec<Option<RunSummary>> = Vec::with_capacity(grids.len());
    for &n in grids {
        let mut cfg = base.clone();
        cfg.n_eta = n;
        cfg.warnings.clear();
        match run_scenario(&cfg) {
            Ok(art) => summaries.push(Some(art.summary)),
            Err(e) => {
                eprintln!("suite: n_eta={n} failed: {e}");
                summaries.push(None);
            }
        }
    }

    // Quantity of interest per stop rule; reference is the closed form when
    // the scenario has one, else the finest successful grid.
    let timed = matches!(base.stop, StopRule::FinalTime(_));
    let qoi = |s: &RunSummary| if timed { s.final_radius } else { s.final_tau };
    let has_exact = summaries
        .iter()
        .flatten()
        .any(|s| s.radius_error.is_some());
    let finest_ok = summaries
        .iter()
        .rev()
        .flatten()
        .find(|s| s.status == RunStatus::Ok)
        .map(qoi);

    let mut rows: Vec<SuiteRow> = Vec::with_capacity(grids.len());
    for (k, &n) in grids.iter().enumerate() {
        let row = match &summaries[k] {
            Some(s) if s.status == RunStatus::Ok => {
                let error = if has_exact && timed {
                    s.radius_error
                } else {
                    finest_ok.and_then(|f| {
                        let e = qoi(s) - f;
                        if e == 0.0 {
                            None
                        } else {
                            Some(e)
                        }
                    })
                };
                SuiteRow {
                    n_eta: n,
                    status: RunStatus::Ok,
                    final_tau: s.final_tau,
                    final_radius: s.final_radius,
                    error,
                    rate: None,
                    l1_g: s.l1_g,
                    rate_g: None,
                    l1_m: s.l1_m,
                    rate_m: None,
                    d_theta: s.final_d_theta,
                }
            }
            _ => SuiteRow {
                n_eta: n,
                status: RunStatus::Nan,
                final_tau: summaries[k].as_ref().map_or(f64::NAN, |s| s.final_tau),
                final_radius: f64::NAN,
                error: None,
                rate: None,
                l1_g: None,
                rate_g: None,
                l1_m: None,
                rate_m: None,
                d_theta: f64::NAN,
            },
        };
        rows.push(row);
    }
    for k in 1..rows.len() {
        rows[k].rate = dyadic_rate(rows[k - 1].error, rows[k].error);
        rows[k].rate_g = dyadic_rate(rows[k - 1].l1_g, rows[k].l1_g);
        rows[k].rate_m = dyadic_rate(rows[k - 1].l1_m, rows[k].l1_m);
    }

    let header = [
        "n_eta",
        "final_tau",
        "final_radius",
        "error",
        "rate",
        "l1_g",
        "rate_g",
        "l1_m",
        "rate_m",
        "d_theta",
        "status",
    ];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let nan_or = |v: f64| {
                if v.is_finite() {
                    fmt_float(v)
                } else {
                    "nan".to_string()
                }
            };
            vec![
                r.n_eta.to_string(),
                nan_or(r.final_tau),
                nan_or(r.final_radius),
                opt_cell(r.error),
                opt_cell(r.rate),
                opt_cell(r.l1_g),
                opt_cell(r.rate_g),
                opt_cell(r.l1_m),
                opt_cell(r.rate_m),
                nan_or(r.d_theta),
                r.status.as_str().to_string(),
            ]
        })
        .collect();

    let suite_path = {
        let base_name = format!(
            "{}_{}_o{}_{}_suite.csv",
            base.scenario.as_str(),
            scheme_name(base.method.scheme),
            flux_order_num(base.method.flux_order),
            integrator_name(base.method.integrator)
        );
        base.output_dir.join(base_name)
    };
    std::fs::create_dir_all(&base.output_dir)?;
    write_table(&suite_path, &header, &table)?;
    Ok((rows, suite_path))
}
