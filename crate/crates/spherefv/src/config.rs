//! Run configuration: flat `key=value` text (whitespace separated, `#`
//! comments) validated into a [`RunConfig`]. The CLI builds the same text
//! from flags, so one parser serves both paths.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::SolverError;
use crate::scheme::{FluxOrder, Integrator, MethodConfig, Scheme};
use crate::tumor::StopRule;

/// Which problem a run solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioId {
    Test1,
    Test2,
    Test3,
    Test4,
    CaseStudy,
    Pdgf,
}

impl ScenarioId {
    pub fn parse(s: &str) -> Result<Self, SolverError> {
        match s {
            "test1" => Ok(Self::Test1),
            "test2" => Ok(Self::Test2),
            "test3" => Ok(Self::Test3),
            "test4" => Ok(Self::Test4),
            "case_study" => Ok(Self::CaseStudy),
            "pdgf" => Ok(Self::Pdgf),
            other => Err(SolverError::Config(format!(
                "scenario: unknown value '{other}' (expected test1..test4, case_study, pdgf)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Test1 => "test1",
            Self::Test2 => "test2",
            Self::Test3 => "test3",
            Self::Test4 => "test4",
            Self::CaseStudy => "case_study",
            Self::Pdgf => "pdgf",
        }
    }

    pub fn manufactured_id(self) -> Option<u8> {
        match self {
            Self::Test1 => Some(1),
            Self::Test2 => Some(2),
            Self::Test3 => Some(3),
            Self::Test4 => Some(4),
            _ => None,
        }
    }

    pub fn is_tumor(self) -> bool {
        matches!(self, Self::CaseStudy | Self::Pdgf)
    }

    /// Built-in final time, used when the config names neither `t_end` nor
    /// `stop_radius`. The PDGF problem has none: its runs must state a
    /// target radius.
    pub fn default_t_end(self) -> Option<f64> {
        match self {
            Self::Test1 | Self::Test2 | Self::Test3 | Self::Test4 => Some(2.0),
            Self::CaseStudy => Some(1.0),
            Self::Pdgf => None,
        }
    }
}

/// A fully validated run request.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioId,
    pub method: MethodConfig,
    pub n_eta: usize,
    pub ext_factor: f64,
    pub stop: StopRule,
    pub output_dir: PathBuf,
    pub emit_every: usize,
    /// Non-fatal notes collected while validating (e.g. ignored keys).
    pub warnings: Vec<String>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SolverError> {
    value
        .parse::<T>()
        .map_err(|_| SolverError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, SolverError> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(SolverError::Config(format!("{key}: expected true/false, got '{other}'"))),
    }
}

/// Parses and validates config text. Later assignments of the same key win,
/// which is how CLI flag overrides are layered onto a file.
pub fn parse_config(source: &str) -> Result<RunConfig, SolverError> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for line in source.lines() {
        let line = line.split('#').next().unwrap_or("");
        for token in line.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| {
                SolverError::Config(format!("expected key=value, got '{token}'"))
            })?;
            map.insert(key.to_string(), value.to_string());
        }
    }

    let known = [
        "scenario",
        "scheme",
        "flux_order",
        "integrator",
        "n_eta",
        "cfl",
        "dt_fixed",
        "ext_factor",
        "t_end",
        "stop_radius",
        "output_dir",
        "emit_every",
        "picard_tol",
        "picard_max_iter",
        "theta_limiter",
    ];
    for key in map.keys() {
        if !known.contains(&key.as_str()) {
            return Err(SolverError::Config(format!("unknown config key '{key}'")));
        }
    }
    let mut warnings = Vec::new();

    let scenario = ScenarioId::parse(
        map.get("scenario")
            .ok_or_else(|| SolverError::Config("scenario: missing".into()))?,
    )?;

    let scheme = match map.get("scheme").map(String::as_str) {
        Some("conventional") => Scheme::Conventional,
        Some("enhanced") => Scheme::Enhanced,
        Some(other) => {
            return Err(SolverError::Config(format!(
                "scheme: unknown value '{other}' (expected conventional|enhanced)"
            )))
        }
        None => return Err(SolverError::Config("scheme: missing".into())),
    };

    let flux_order = match map.get("flux_order").map(String::as_str) {
        Some("1") | None => FluxOrder::Upwind,
        Some("2") => FluxOrder::Muscl,
        Some(other) => {
            return Err(SolverError::Config(format!("flux_order: expected 1 or 2, got '{other}'")))
        }
    };

    // The paper's method pairing: first order marches with forward Euler,
    // second order with TVD-RK2.
    let integrator = match map.get("integrator").map(String::as_str) {
        Some("fe") => Integrator::ForwardEuler,
        Some("rk2") => Integrator::TvdRk2,
        Some("be") => Integrator::BackwardEuler,
        Some("dirk2") => Integrator::Dirk2,
        Some(other) => {
            return Err(SolverError::Config(format!(
                "integrator: unknown value '{other}' (expected fe|rk2|be|dirk2)"
            )))
        }
        None => match flux_order {
            FluxOrder::Upwind => Integrator::ForwardEuler,
            FluxOrder::Muscl => Integrator::TvdRk2,
        },
    };

    let n_eta: usize = match map.get("n_eta") {
        Some(v) => parse_num("n_eta", v)?,
        None => return Err(SolverError::Config("n_eta: missing".into())),
    };
    if n_eta < 4 {
        return Err(SolverError::Config(format!("n_eta: need at least 4 intervals, got {n_eta}")));
    }

    let mut method = MethodConfig::new(scheme, flux_order, integrator);
    if let Some(v) = map.get("cfl") {
        method.cfl = parse_num("cfl", v)?;
        if method.cfl <= 0.0 {
            return Err(SolverError::Config(format!("cfl: must be positive, got {}", method.cfl)));
        }
    }
    if let Some(v) = map.get("dt_fixed") {
        let dt: f64 = parse_num("dt_fixed", v)?;
        if dt <= 0.0 {
            return Err(SolverError::Config(format!("dt_fixed: must be positive, got {dt}")));
        }
        if map.contains_key("cfl") {
            warnings.push("dt_fixed overrides cfl".into());
        }
        method.dt_fixed = Some(dt);
    }
    if let Some(v) = map.get("picard_tol") {
        method.picard_tol = parse_num("picard_tol", v)?;
    }
    if let Some(v) = map.get("picard_max_iter") {
        method.picard_max_iter = parse_num("picard_max_iter", v)?;
    }
    if let Some(v) = map.get("theta_limiter") {
        method.theta_limiter = parse_bool("theta_limiter", v)?;
    }

    let mut ext_factor: f64 = match map.get("ext_factor") {
        Some(v) => parse_num("ext_factor", v)?,
        None => {
            if scenario.is_tumor() {
                5.0
            } else {
                1.0
            }
        }
    };
    if ext_factor < 1.0 {
        return Err(SolverError::Config(format!("ext_factor: must be >= 1, got {ext_factor}")));
    }
    if !scenario.is_tumor() && ext_factor != 1.0 {
        warnings.push(format!(
            "ext_factor={ext_factor} ignored: {} has no chemoattractant",
            scenario.as_str()
        ));
        ext_factor = 1.0;
    }

    let t_end = map.get("t_end").map(|v| parse_num::<f64>("t_end", v)).transpose()?;
    let stop_radius =
        map.get("stop_radius").map(|v| parse_num::<f64>("stop_radius", v)).transpose()?;
    let stop = match (t_end, stop_radius) {
        (Some(_), Some(_)) => {
            return Err(SolverError::Config(
                "t_end and stop_radius are mutually exclusive".into(),
            ))
        }
        (Some(t), None) => {
            if t <= 0.0 {
                return Err(SolverError::Config(format!("t_end: must be positive, got {t}")));
            }
            StopRule::FinalTime(t)
        }
        (None, Some(r)) => {
            if r <= 0.0 {
                return Err(SolverError::Config(format!("stop_radius: must be positive, got {r}")));
            }
            StopRule::RadiusReached(r)
        }
        (None, None) => match scenario.default_t_end() {
            Some(t) => StopRule::FinalTime(t),
            None => {
                return Err(SolverError::Config(
                    "pdgf runs for a survival length: set stop_radius".into(),
                ))
            }
        },
    };

    let output_dir = PathBuf::from(map.get("output_dir").map(String::as_str).unwrap_or("out"));
    let emit_every: usize = match map.get("emit_every") {
        Some(v) => parse_num("emit_every", v)?,
        None => 1,
    };
    if emit_every == 0 {
        return Err(SolverError::Config("emit_every: must be at least 1".into()));
    }

    Ok(RunConfig {
        scenario,
        method,
        n_eta,
        ext_factor,
        stop,
        output_dir,
        emit_every,
        warnings,
    })
}

pub fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Conventional => "conventional",
        Scheme::Enhanced => "enhanced",
    }
}

pub fn integrator_name(i: Integrator) -> &'static str {
    match i {
        Integrator::ForwardEuler => "fe",
        Integrator::TvdRk2 => "rk2",
        Integrator::BackwardEuler => "be",
        Integrator::Dirk2 => "dirk2",
    }
}

pub fn flux_order_num(f: FluxOrder) -> u8 {
    match f {
        FluxOrder::Upwind => 1,
        FluxOrder::Muscl => 2,
    }
}
