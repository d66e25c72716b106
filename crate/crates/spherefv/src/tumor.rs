//! Three-species tumor model: proliferating and necrotic glioma cells plus
//! infiltrating immune cells, coupled to a secreted chemoattractant that
//! drives the infiltration velocity.
//!
//! Species are stored as fractions of the total density `theta`; the
//! chemoattractant keeps physical units, so only the Michaelis constant is
//! rescaled (`beta_hat = beta/theta`).

use crate::chemo::{chemo_step, ChemoParams};
use crate::error::SolverError;
use crate::grid::{Grid, RadiusState};
use crate::scheme::{Problem, State};
use crate::velocity::nodal_u_from_chemo;

/// Model rates and coefficients. Time in days, lengths in millimetres,
/// chemoattractant in pg/ml, densities in cells/mm^3.
#[derive(Debug, Clone, Copy)]
pub struct TumorParameters {
    /// Proliferation rate of glioma cells.
    pub lambda: f64,
    /// Glioma-to-necrotic conversion rate.
    pub mu: f64,
    /// Necrotic removal rate.
    pub delta: f64,
    /// Immune cell death rate.
    pub rho: f64,
    /// Chemoattractant diffusivity.
    pub nu: f64,
    /// Secretion scale.
    pub m_secrete: f64,
    /// Michaelis constant (density units).
    pub beta: f64,
    /// Chemoattractant decay rate.
    pub gamma: f64,
    /// Chemotactic mobility.
    pub alpha: f64,
    /// Total cell density.
    pub theta: f64,
}

/// When a simulation ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    FinalTime(f64),
    /// Stop once the domain radius reaches this value (survival length).
    RadiusReached(f64),
}

/// A concrete tumor problem: parameters, initial data, and the stop rule.
pub struct TumorScenario {
    pub name: &'static str,
    pub params: TumorParameters,
    pub r0: f64,
    /// Initial fractions, spatially constant.
    pub g0: f64,
    pub n0: f64,
    pub m0: f64,
    /// Initial chemoattractant profile over physical radius.
    pub a0_fn: Box<dyn Fn(f64) -> f64>,
    /// Incoming immune fraction at the boundary.
    pub m_bc: f64,
    pub stop: StopRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TumorCase {
    CaseStudy,
    Pdgf,
}

/// Source rates for the three fractions: glioma grows at `lambda - mu`,
/// necrosis gains `mu G` and loses `delta N`, immune cells die at `rho`.
pub fn source_terms(params: &TumorParameters, g: f64, n: f64, m: f64) -> (f64, f64, f64) {
    (
        (params.lambda - params.mu) * g,
        params.mu * g - params.delta * n,
        -params.rho * m,
    )
}

/// Builds one of the two studied configurations.
///
/// `CaseStudy` is the demonstration problem: only proliferation and
/// secretion are active, the chemoattractant starts in the steady-ish
/// piecewise profile continuous at the boundary, and the run ends at T = 1.
/// `Pdgf` is the PDGF-driven glioma with literature parameters; the run
/// ends when the radius reaches 5 mm.
pub fn tumor_scenario(case: TumorCase) -> TumorScenario {
    match case {
        TumorCase::CaseStudy => TumorScenario {
            name: "case_study",
            params: TumorParameters {
                lambda: 1.0,
                mu: 0.0,
                delta: 0.0,
                rho: 0.0,
                nu: 1.0,
                m_secrete: 30.0,
                beta: 1.0,
                gamma: 0.0,
                alpha: 1.0,
                theta: 1.0,
            },
            r0: 1.0,
            g0: 0.5,
            n0: 0.0,
            m0: 0.5,
            a0_fn: Box::new(|r| {
                if r <= 1.0 {
                    5.0 / 3.0 - r * r / 6.0
                } else {
                    1.5 * (-(2.0 / 9.0) * (r - 1.0)).exp()
                }
            }),
            m_bc: 0.5,
            stop: StopRule::FinalTime(1.0),
        },
        TumorCase::Pdgf => TumorScenario {
            name: "pdgf",
            params: TumorParameters {
                lambda: 0.48,
                mu: 0.33,
                delta: 0.45,
                rho: 0.9,
                nu: 6.048,
                m_secrete: 1.5e5,
                beta: 1.0e5,
                gamma: 1.0e2,
                alpha: 0.6,
                theta: 1.0e6,
            },
            r0: 0.2,
            g0: 0.84,
            n0: 0.155,
            m0: 0.005,
            a0_fn: Box::new(|r| 1000.0 * (-(r * r)).exp()),
            m_bc: 0.005,
            stop: StopRule::RadiusReached(5.0),
        },
    }
}

/// Adapter running a [`TumorScenario`] through the generic step machinery
/// with species ordering `(G, N, M)`; the chemoattractant state drives the
/// infiltration velocity.
pub struct TumorProblem<'a> {
    pub scenario: &'a TumorScenario,
}

impl TumorProblem<'_> {
    fn chemo_params(&self) -> ChemoParams {
        let p = &self.scenario.params;
        ChemoParams {
            nu: p.nu,
            gamma: p.gamma,
            m_secrete: p.m_secrete,
            beta_hat: p.beta / p.theta,
        }
    }
}

impl Problem for TumorProblem<'_> {
    fn n_species(&self) -> usize {
        3
    }

    fn nodal_u(
        &self,
        grid: &Grid,
        chemo: Option<&[f64]>,
        _tau: f64,
        r: f64,
    ) -> Result<Vec<f64>, SolverError> {
        let a = chemo.ok_or_else(|| {
            SolverError::Config("tumor problem stepped without a chemoattractant field".into())
        })?;
        nodal_u_from_chemo(a, grid, r, self.scenario.params.alpha)
    }

    fn source_rates(&self, _r_center: f64, _tau: f64, x: &[f64], out: &mut [f64]) {
        let (f, gs, h) = source_terms(&self.scenario.params, x[0], x[1], x[2]);
        out[0] = f;
        out[1] = gs;
        out[2] = h;
    }

    fn m_bc(&self, _tau: f64) -> f64 {
        self.scenario.m_bc
    }

    fn advance_chemo(
        &self,
        a: &mut [f64],
        g_old: &[f64],
        grid: &Grid,
        r_old: f64,
        radius_new: RadiusState,
        dtau: f64,
    ) -> Result<(), SolverError> {
        chemo_step(a, g_old, grid, r_old, radius_new, &self.chemo_params(), dtau)
    }
}

/// Constant initial fractions plus the sampled chemoattractant profile on
/// the extended grid; rejects fraction splits that do not sum to one.
pub fn initial_tumor_state(scenario: &TumorScenario, grid: &Grid) -> Result<State, SolverError> {
    let total = scenario.g0 + scenario.n0 + scenario.m0;
    if (total - 1.0).abs() > 1e-12 {
        return Err(SolverError::Config(format!(
            "initial fractions must sum to one, got {total}"
        )));
    }
    let n = grid.n_eta();
    let fields = vec![
        vec![scenario.g0; n],
        vec![scenario.n0; n],
        vec![scenario.m0; n],
    ];
    let a: Vec<f64> = (0..grid.n_tot())
        .map(|i| (scenario.a0_fn)(grid.center(i) * scenario.r0))
        .collect();
    Ok(State::new(
        0.0,
        RadiusState { r: scenario.r0, r_prime: 0.0 },
        fields,
        Some(a),
    ))
}
