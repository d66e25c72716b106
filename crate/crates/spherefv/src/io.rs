//! CSV artifact writers. All numbers are serialized in scientific notation
//! with 17 significant digits, so outputs are deterministic and re-parse to
//! bit-identical doubles. A run that aborts mid-way flushes what it has and
//! appends a `FAILED` marker row.

use std::fs::File;
use std::path::Path;

use crate::error::SolverError;
use crate::grid::Grid;
use crate::scheme::State;

/// Fixed-width scientific rendering used for every floating-point field.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Step-by-step series: `step,tau,radius,radius_rate,dtau,d_theta`.
pub struct TimeseriesWriter {
    inner: csv::Writer<File>,
}

impl TimeseriesWriter {
    pub fn create(path: &Path) -> Result<Self, SolverError> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(["step", "tau", "radius", "radius_rate", "dtau", "d_theta"])?;
        Ok(Self { inner })
    }

    pub fn write(
        &mut self,
        step: u64,
        tau: f64,
        radius: f64,
        radius_rate: f64,
        dtau: f64,
        d_theta: f64,
    ) -> Result<(), SolverError> {
        self.inner.write_record([
            step.to_string(),
            fmt_float(tau),
            fmt_float(radius),
            fmt_float(radius_rate),
            fmt_float(dtau),
            fmt_float(d_theta),
        ])?;
        Ok(())
    }

    /// Marks an aborted run; the file stays parseable with the same arity.
    pub fn mark_failed(&mut self) -> Result<(), SolverError> {
        self.inner.write_record(["FAILED", "", "", "", "", ""])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), SolverError> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Final interval profile. Columns are
/// `eta_center,r_center,<species...>,[A,]Theta`; the chemoattractant column
/// appears only when the state carries one. `Theta` is the row sum of the
/// species values, serialized from the same doubles.
pub fn write_profile(
    path: &Path,
    grid: &Grid,
    state: &State,
    species_names: &[&str],
    failed: bool,
) -> Result<(), SolverError> {
    debug_assert_eq!(species_names.len(), state.fields.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["eta_center", "r_center"];
    header.extend_from_slice(species_names);
    if state.chemo.is_some() {
        header.push("A");
    }
    header.push("Theta");
    w.write_record(&header)?;

    let r = state.radius.r;
    for i in 0..grid.n_eta() {
        let eta = grid.center(i);
        let mut row = vec![fmt_float(eta), fmt_float(eta * r)];
        let mut total = 0.0;
        for f in &state.fields {
            total += f[i];
            row.push(fmt_float(f[i]));
        }
        if let Some(a) = &state.chemo {
            row.push(fmt_float(a[i]));
        }
        row.push(fmt_float(total));
        w.write_record(&row)?;
    }
    if failed {
        let mut row = vec!["FAILED".to_string()];
        row.resize(header.len(), String::new());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One-row run summary.
pub struct SummaryRecord<'a> {
    pub scenario: &'a str,
    pub scheme: &'a str,
    pub flux_order: u8,
    pub integrator: &'a str,
    pub n_eta: usize,
    pub final_tau: f64,
    pub final_radius: f64,
    pub final_d_theta: f64,
    pub steps: u64,
    /// `ok` or `nan`.
    pub status: &'a str,
}

pub fn write_summary(path: &Path, rec: &SummaryRecord) -> Result<(), SolverError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "scheme",
        "flux_order",
        "integrator",
        "n_eta",
        "final_tau",
        "final_radius",
        "final_d_theta",
        "steps",
        "status",
    ])?;
    w.write_record([
        rec.scenario.to_string(),
        rec.scheme.to_string(),
        rec.flux_order.to_string(),
        rec.integrator.to_string(),
        rec.n_eta.to_string(),
        fmt_float(rec.final_tau),
        fmt_float(rec.final_radius),
        fmt_float(rec.final_d_theta),
        rec.steps.to_string(),
        rec.status.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Generic table writer for convergence suites: a header plus pre-rendered
/// rows, each padded or truncated to the header arity by the caller.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), SolverError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
