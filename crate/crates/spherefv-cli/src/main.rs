//! Command-line front end: `spherefv run` executes one configured scenario,
//! `spherefv suite` sweeps it over a grid sequence and writes an error
//! table. Configuration comes from an optional `key=value` file plus flags;
//! flags win.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spherefv::{parse_config, run_convergence_suite, run_scenario, RunStatus, SolverError};

#[derive(Parser)]
#[command(name = "spherefv", version, about = "Moving-domain finite-volume scenario runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one run and write timeseries, profile, and summary CSVs
    Run(ConfigArgs),
    /// Run a grid-refinement suite and write its error/rate table
    Suite(SuiteArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of whitespace-separated key=value pairs (# comments)
    #[arg(long)]
    config: Option<PathBuf>,
    /// test1|test2|test3|test4|case_study|pdgf
    #[arg(long)]
    scenario: Option<String>,
    /// conventional|enhanced
    #[arg(long)]
    scheme: Option<String>,
    /// 1 (upwind) or 2 (MUSCL)
    #[arg(long)]
    flux_order: Option<u8>,
    /// fe|rk2|be|dirk2 (defaults to fe for order 1, rk2 for order 2)
    #[arg(long)]
    integrator: Option<String>,
    /// Number of intervals on the tumor domain
    #[arg(long)]
    n_eta: Option<usize>,
    /// Courant number for the adaptive step
    #[arg(long)]
    cfl: Option<f64>,
    /// Fixed step size; overrides cfl
    #[arg(long)]
    dt_fixed: Option<f64>,
    /// Grid extension beyond the tumor, in units of the tumor domain
    #[arg(long)]
    ext_factor: Option<f64>,
    /// Stop at this time (mutually exclusive with stop-radius)
    #[arg(long)]
    t_end: Option<f64>,
    /// Stop when the radius first reaches this value
    #[arg(long)]
    stop_radius: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Emit every k-th timeseries row
    #[arg(long)]
    emit_every: Option<usize>,
    /// Picard tolerance for implicit steps
    #[arg(long)]
    picard_tol: Option<f64>,
    #[arg(long)]
    picard_max_iter: Option<usize>,
    /// Also limit the species-sum reconstruction (diagnostic variant)
    #[arg(long)]
    theta_limiter: Option<bool>,
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Grid sequence for the refinement study
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
    grids: Vec<usize>,
}

impl ConfigArgs {
    /// Renders the file content plus one `key=value` line per given flag;
    /// the parser's later-wins rule makes the flags override the file.
    fn to_config_text(&self) -> Result<String, SolverError> {
        let mut text = match &self.config {
            Some(p) => std::fs::read_to_string(p).map_err(|e| {
                SolverError::Config(format!("config file {}: {e}", p.display()))
            })?,
            None => String::new(),
        };
        text.push('\n');
        let mut line = |k: &str, v: String| {
            text.push_str(k);
            text.push('=');
            text.push_str(&v);
            text.push('\n');
        };
        if let Some(v) = &self.scenario {
            line("scenario", v.clone());
        }
        if let Some(v) = &self.scheme {
            line("scheme", v.clone());
        }
        if let Some(v) = self.flux_order {
            line("flux_order", v.to_string());
        }
        if let Some(v) = &self.integrator {
            line("integrator", v.clone());
        }
        if let Some(v) = self.n_eta {
            line("n_eta", v.to_string());
        }
        if let Some(v) = self.cfl {
            line("cfl", v.to_string());
        }
        if let Some(v) = self.dt_fixed {
            line("dt_fixed", v.to_string());
        }
        if let Some(v) = self.ext_factor {
            line("ext_factor", v.to_string());
        }
        if let Some(v) = self.t_end {
            line("t_end", v.to_string());
        }
        if let Some(v) = self.stop_radius {
            line("stop_radius", v.to_string());
        }
        if let Some(v) = &self.output_dir {
            line("output_dir", v.display().to_string());
        }
        if let Some(v) = self.emit_every {
            line("emit_every", v.to_string());
        }
        if let Some(v) = self.picard_tol {
            line("picard_tol", v.to_string());
        }
        if let Some(v) = self.picard_max_iter {
            line("picard_max_iter", v.to_string());
        }
        if let Some(v) = self.theta_limiter {
            line("theta_limiter", v.to_string());
        }
        Ok(text)
    }
}

fn run_cmd(args: &ConfigArgs) -> Result<u8, SolverError> {
    let cfg = parse_config(&args.to_config_text()?)?;
    let art = run_scenario(&cfg)?;
    let s = &art.summary;
    println!(
        "status={} final_tau={:.6} final_radius={:.6} d_theta={:.3e} steps={} wall={:.2?}",
        s.status.as_str(),
        s.final_tau,
        s.final_radius,
        s.final_d_theta,
        s.steps,
        s.wall_time
    );
    if let Some(e) = s.radius_error {
        println!("radius_error={e:.6e}");
    }
    if let (Some(g), Some(m)) = (s.l1_g, s.l1_m) {
        println!("l1_g={g:.6e} l1_m={m:.6e}");
    }
    println!("wrote {}", art.summary_path.display());
    Ok(if s.status == RunStatus::Ok { 0 } else { 3 })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4e}"))
}

fn suite_cmd(args: &SuiteArgs) -> Result<u8, SolverError> {
    let mut text = args.cfg.to_config_text()?;
    if args.cfg.n_eta.is_none() && !text.contains("n_eta") {
        // The per-grid runs override n_eta anyway; seed the base config so
        // it validates.
        text.push_str(&format!("n_eta={}\n", args.grids.first().copied().unwrap_or(50)));
    }
    let cfg = parse_config(&text)?;
    let (rows, path) = run_convergence_suite(&cfg, &args.grids)?;
    for r in &rows {
        println!(
            "n={:<5} tau={:<10.6} radius={:<10.6} error={:<12} rate={:<8} \
             l1_g={:<12} l1_m={:<12} d_theta={:.3e} {}",
            r.n_eta,
            r.final_tau,
            r.final_radius,
            fmt_opt(r.error),
            r.rate.map_or_else(|| "-".into(), |x| format!("{x:.2}")),
            fmt_opt(r.l1_g),
            fmt_opt(r.l1_m),
            r.d_theta,
            r.status.as_str()
        );
    }
    println!("wrote {}", path.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(a) => run_cmd(a),
        Cmd::Suite(a) => suite_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                SolverError::Config(_) => 2,
                _ => 3,
            })
        }
    }
}
