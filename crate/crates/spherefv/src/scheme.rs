//! Single-step assembly shared by every scenario and integrator.
//!
//! A forward-Euler step follows a fixed ordering: sample the infiltration
//! velocity and the sources at the old level, build the infiltration flux,
//! solve the nodal bulk velocity, advance the boundary, assemble the species
//! fluxes, update the species, and finally let the problem advance its own
//! reaction-diffusion field. The implicit machinery assembles the same
//! spatial pieces at the new level and resolves them with deferred-correction
//! Picard sweeps around a first-order block-tridiagonal core, so its fixed
//! point satisfies the fully implicit update exactly.

use crate::error::SolverError;
use crate::flux::{
    conventional_flux, enhanced_u_flux, enhanced_v_flux, eta3_weighted, muscl_limiters,
    ppm_face_values, ppm_limiters, rprime_flux, sync_muscl_limiters,
};
use crate::grid::{advance_radius_conventional, advance_radius_gcl, gcl_rate, Grid, RadiusState};
use crate::linalg::solve_block_tridiagonal;
use crate::velocity::{solve_velocity_conventional, solve_velocity_enhanced};

/// Spatial discretization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Combined-velocity fluxes on conservative data with a linear radius
    /// update; simple but neither totality- nor geometry-conserving.
    Conventional,
    /// Segregated fluxes (bulk, boundary-motion, infiltration) with limiter
    /// synchronization and the quadratic radius update that together keep a
    /// uniform totality uniform.
    Enhanced,
}

/// Spatial order of the bulk and infiltration fluxes. The boundary-motion
/// flux of the enhanced scheme always uses the parabolic reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxOrder {
    Upwind,
    Muscl,
}

/// Temporal integrator applied on top of the spatial assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    ForwardEuler,
    TvdRk2,
    BackwardEuler,
    Dirk2,
}

/// Full method selection plus solver knobs.
#[derive(Debug, Clone, Copy)]
pub struct MethodConfig {
    pub scheme: Scheme,
    pub flux_order: FluxOrder,
    pub integrator: Integrator,
    /// Courant number for the adaptive step size.
    pub cfl: f64,
    /// Fixed step size; overrides the Courant rule when set.
    pub dt_fixed: Option<f64>,
    /// Convergence tolerance of the implicit Picard sweeps (max scaled
    /// change of species, velocity, and radius).
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Also include the totality field when synchronizing the MUSCL
    /// limiters of the enhanced scheme.
    pub theta_limiter: bool,
}

impl MethodConfig {
    pub fn new(scheme: Scheme, flux_order: FluxOrder, integrator: Integrator) -> Self {
        Self {
            scheme,
            flux_order,
            integrator,
            cfl: 0.8,
            dt_fixed: None,
            picard_tol: 1e-12,
            picard_max_iter: 200,
            theta_limiter: false,
        }
    }
}

/// Solution snapshot at one time level.
///
/// Species are interval averages of the density fractions on the interior
/// grid, the infiltrating species last. `chemo` holds the chemoattractant
/// averages on the extended grid when the problem carries one.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub tau: f64,
    pub radius: RadiusState,
    pub fields: Vec<Vec<f64>>,
    pub chemo: Option<Vec<f64>>,
}

impl State {
    pub fn new(tau: f64, radius: RadiusState, fields: Vec<Vec<f64>>, chemo: Option<Vec<f64>>) -> Self {
        Self { tau, radius, fields, chemo }
    }

    /// Totality (sum over species) per interval.
    pub fn totality(&self) -> Vec<f64> {
        let n = self.fields[0].len();
        let mut t = vec![0.0; n];
        for f in &self.fields {
            for (ti, xi) in t.iter_mut().zip(f) {
                *ti += *xi;
            }
        }
        t
    }
}

/// Model-specific pieces of a step.
///
/// Implementations describe the closures of a concrete scenario: how the
/// infiltrating species moves, how species convert into each other, and what
/// flows in through the moving boundary. All species values are fractions of
/// the total density, so a problem with sources must keep their sum
/// consistent with the totality it intends to preserve.
pub trait Problem {
    fn n_species(&self) -> usize;

    /// Nodal infiltration velocity (physical units) for boundary radius `r`
    /// at time `tau`; entry `0` must be zero. `chemo` is the attractant
    /// profile when the velocity is chemotactic.
    fn nodal_u(
        &self,
        grid: &Grid,
        chemo: Option<&[f64]>,
        tau: f64,
        r: f64,
    ) -> Result<Vec<f64>, SolverError>;

    /// Source rates of one interval: `x` holds the species values at the
    /// interval, `out` receives one rate per species.
    fn source_rates(&self, r_center: f64, tau: f64, x: &[f64], out: &mut [f64]);

    /// Environmental density (fraction) of the infiltrating species.
    fn m_bc(&self, tau: f64) -> f64;

    /// Advance the problem's reaction-diffusion field across the step, if it
    /// has one. `g_old` is the first species at the old level.
    fn advance_chemo(
        &self,
        _a: &mut [f64],
        _g_old: &[f64],
        _grid: &Grid,
        _r_old: f64,
        _radius_new: RadiusState,
        _dtau: f64,
    ) -> Result<(), SolverError> {
        Ok(())
    }
}

/// Pre-flux pieces of a step evaluated at one solution level.
struct Prepared {
    u: Vec<f64>,
    sources: Vec<Vec<f64>>,
    src_sum: Vec<f64>,
    /// Synchronized MUSCL limiters (enhanced second order only).
    phi: Option<Vec<f64>>,
    /// Infiltration flux (enhanced scheme only; empty otherwise).
    f_u: Vec<f64>,
    v: Vec<f64>,
    m_bc: f64,
}

fn prepare<P: Problem>(
    p: &P,
    grid: &Grid,
    method: &MethodConfig,
    fields: &[Vec<f64>],
    chemo: Option<&[f64]>,
    tau: f64,
    r: f64,
) -> Result<Prepared, SolverError> {
    let u = p.nodal_u(grid, chemo, tau, r)?;
    let (sources, src_sum) = eval_sources(p, grid, fields, tau, r);
    let m_bc = p.m_bc(tau);
    let phi = match (method.scheme, method.flux_order) {
        (Scheme::Enhanced, FluxOrder::Muscl) => Some(sync_phi(fields, method.theta_limiter)),
        _ => None,
    };
    let m = fields.last().expect("at least one species");
    let (f_u, v) = match method.scheme {
        Scheme::Enhanced => {
            let f_u = enhanced_u_flux(m, &u, grid, r, phi.as_deref(), m_bc);
            let v = solve_velocity_enhanced(grid, r, &src_sum, &f_u);
            (f_u, v)
        }
        Scheme::Conventional => {
            let v = solve_velocity_conventional(grid, r, &src_sum, &u, m);
            (Vec::new(), v)
        }
    };
    Ok(Prepared { u, sources, src_sum, phi, f_u, v, m_bc })
}

/// Per-interval source rates and their sum over species.
fn eval_sources<P: Problem>(
    p: &P,
    grid: &Grid,
    fields: &[Vec<f64>],
    tau: f64,
    r: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = grid.n_eta();
    let nsp = fields.len();
    let mut sources = vec![vec![0.0; n]; nsp];
    let mut src_sum = vec![0.0; n];
    let mut x = vec![0.0; nsp];
    let mut out = vec![0.0; nsp];
    for i in 0..n {
        for (k, f) in fields.iter().enumerate() {
            x[k] = f[i];
        }
        p.source_rates(grid.center(i) * r, tau, &x, &mut out);
        let mut total = 0.0;
        for (k, rate) in out.iter().enumerate() {
            sources[k][i] = *rate;
            total += *rate;
        }
        src_sum[i] = total;
    }
    (sources, src_sum)
}

/// Synchronized MUSCL limiters over all species, optionally also over the
/// totality field so the limited totality flux telescopes.
fn sync_phi(fields: &[Vec<f64>], with_theta: bool) -> Vec<f64> {
    let mut refs: Vec<&[f64]> = fields.iter().map(|f| f.as_slice()).collect();
    let theta;
    if with_theta {
        let n = fields[0].len();
        let mut t = vec![0.0; n];
        for f in fields {
            for (ti, xi) in t.iter_mut().zip(f) {
                *ti += *xi;
            }
        }
        theta = t;
        refs.push(&theta);
        sync_muscl_limiters(&refs)
    } else {
        sync_muscl_limiters(&refs)
    }
}

/// Total flux per species for the enhanced scheme: bulk + boundary-motion
/// (+ infiltration for the last species). The parabolic limiters of the
/// boundary-motion flux are always synchronized across species.
fn enhanced_fluxes(
    fields: &[Vec<f64>],
    pre: &Prepared,
    grid: &Grid,
    r: f64,
    r_prime: f64,
) -> Vec<Vec<f64>> {
    let n = grid.n_eta();
    let nsp = fields.len();
    let xbars: Vec<Vec<f64>> = fields.iter().map(|x| eta3_weighted(x, grid)).collect();
    let faces: Vec<Vec<f64>> = xbars.iter().map(|xb| ppm_face_values(xb, n)).collect();
    let refs: Vec<&[f64]> = xbars.iter().map(|x| x.as_slice()).collect();
    let (phi_m, phi_p) = ppm_limiters(&refs, &faces, n);
    (0..nsp)
        .map(|k| {
            let mut f = enhanced_v_flux(&fields[k], &pre.v, grid, r, pre.phi.as_deref());
            let rp = rprime_flux(&xbars[k], &faces[k], &phi_m, &phi_p, n, r, r_prime);
            for (fj, rj) in f.iter_mut().zip(&rp.f) {
                *fj += *rj;
            }
            if k == nsp - 1 {
                for (fj, uj) in f.iter_mut().zip(&pre.f_u) {
                    *fj += *uj;
                }
            }
            f
        })
        .collect()
}

/// Total flux per species for the conventional scheme: one combined-velocity
/// upwind/MUSCL flux on the conservative data, limited per species.
fn conventional_fluxes(
    fields: &[Vec<f64>],
    pre: &Prepared,
    grid: &Grid,
    method: &MethodConfig,
    r: f64,
    r_prime: f64,
) -> Vec<Vec<f64>> {
    let n = grid.n_eta();
    let nsp = fields.len();
    let r_sq = r * r;
    (0..nsp)
        .map(|k| {
            let cons: Vec<f64> = (0..n).map(|i| grid.center_sq(i) * r_sq * fields[k][i]).collect();
            let phi = match method.flux_order {
                FluxOrder::Muscl => Some(muscl_limiters(&cons)),
                FluxOrder::Upwind => None,
            };
            let infiltrating = k == nsp - 1;
            // Ghost state beyond the boundary face, weighted like every
            // other right state by its interval-center radius; a plain
            // eta^2 = 1 weight starves the last interval of inflow and
            // grows an O(d_eta) boundary layer that drags the radius.
            let ghost_sq = {
                let e = 1.0 + 0.5 * grid.d_eta();
                e * e
            };
            let m_bc_cons = if infiltrating { ghost_sq * r_sq * pre.m_bc } else { 0.0 };
            conventional_flux(
                &cons,
                &pre.v,
                infiltrating.then_some(pre.u.as_slice()),
                grid,
                r,
                r_prime,
                phi.as_deref(),
                m_bc_cons,
            )
        })
        .collect()
}

/// Conservative update of all species over one step: old-level fluxes and
/// geometric source, new-level mass.
fn advance_fields(
    grid: &Grid,
    fields: &[Vec<f64>],
    fluxes: &[Vec<f64>],
    sources: &[Vec<f64>],
    r_old: f64,
    radius_new: RadiusState,
    dtau: f64,
) -> Vec<Vec<f64>> {
    let n = grid.n_eta();
    let d_eta = grid.d_eta();
    let r_sq_old = r_old * r_old;
    let r_sq_new = radius_new.r * radius_new.r;
    let geo = radius_new.r_prime * r_old;
    fields
        .iter()
        .enumerate()
        .map(|(k, x)| {
            (0..n)
                .map(|i| {
                    let div = (fluxes[k][i + 1] - fluxes[k][i]) / (d_eta * grid.center_sq(i));
                    (r_sq_old * x[i] + dtau * (r_sq_old * sources[k][i] - geo * x[i] - div))
                        / r_sq_new
                })
                .collect()
        })
        .collect()
}

fn check_finite(fields: &[Vec<f64>], tau: f64) -> Result<(), SolverError> {
    for (k, f) in fields.iter().enumerate() {
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::BlowUp {
                tau,
                what: format!("species {k} non-finite at interval {i}"),
            });
        }
    }
    Ok(())
}

/// One forward-Euler step of the coupled system.
pub fn fe_step<P: Problem>(
    p: &P,
    state: &State,
    grid: &Grid,
    method: &MethodConfig,
    dtau: f64,
) -> Result<State, SolverError> {
    debug_assert!(dtau > 0.0);
    let n = grid.n_eta();
    let tau = state.tau;
    let r = state.radius.r;
    let pre = prepare(p, grid, method, &state.fields, state.chemo.as_deref(), tau, r)?;
    if !pre.v[n].is_finite() {
        return Err(SolverError::BlowUp { tau: tau + dtau, what: "boundary velocity".into() });
    }
    let radius_new = match method.scheme {
        Scheme::Enhanced => advance_radius_gcl(r, pre.v[n], dtau, grid.d_eta())?,
        Scheme::Conventional => advance_radius_conventional(r, pre.v[n], dtau)?,
    };
    let fluxes = match method.scheme {
        Scheme::Enhanced => enhanced_fluxes(&state.fields, &pre, grid, r, radius_new.r_prime),
        Scheme::Conventional => {
            conventional_fluxes(&state.fields, &pre, grid, method, r, radius_new.r_prime)
        }
    };
    let fields = advance_fields(grid, &state.fields, &fluxes, &pre.sources, r, radius_new, dtau);
    check_finite(&fields, tau + dtau)?;
    let mut chemo = state.chemo.clone();
    if let Some(a) = chemo.as_mut() {
        p.advance_chemo(a, &state.fields[0], grid, r, radius_new, dtau)?;
    }
    Ok(State { tau: tau + dtau, radius: radius_new, fields, chemo })
}

/// Nodal bulk and infiltration velocities of a state, computed exactly as a
/// step starting from it would; used for the admissible step size.
pub fn nodal_velocities<P: Problem>(
    p: &P,
    state: &State,
    grid: &Grid,
    method: &MethodConfig,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let pre = prepare(
        p,
        grid,
        method,
        &state.fields,
        state.chemo.as_deref(),
        state.tau,
        state.radius.r,
    )?;
    Ok((pre.v, pre.u))
}

// ---------------------------------------------------------------------------
// Implicit machinery: deferred-correction Picard around a first-order core.
// ---------------------------------------------------------------------------

/// Linear-in-the-unknowns part of the first-order flux of one species:
/// `F[j] = a_left[j] x_{j-1} + a_right[j] x_j + b[j]`.
struct CoreFlux {
    a_left: Vec<f64>,
    a_right: Vec<f64>,
    b: Vec<f64>,
}

fn core_flux_coeffs(
    method: &MethodConfig,
    infiltrating: bool,
    grid: &Grid,
    v: &[f64],
    u: &[f64],
    r: f64,
    r_prime: f64,
    m_bc: f64,
) -> CoreFlux {
    let n = grid.n_eta();
    let r_sq = r * r;
    let mut a_left = vec![0.0; n + 1];
    let mut a_right = vec![0.0; n + 1];
    let mut b = vec![0.0; n + 1];
    match method.scheme {
        Scheme::Enhanced => {
            let wr = -(r_prime * r);
            for j in 1..n {
                let g = grid.node_sq(j) * r_sq;
                let wv = v[j] / r;
                a_left[j] += g * wv.max(0.0);
                a_right[j] += g * wv.min(0.0);
                if infiltrating {
                    let wu = u[j] / r;
                    a_left[j] += g * wu.max(0.0);
                    a_right[j] += g * wu.min(0.0);
                }
                // Boundary-motion part acts on the eta^3-weighted data.
                let cl = grid.center(j - 1);
                let cr = grid.center(j);
                a_left[j] += wr.max(0.0) * (cl * cl * cl);
                a_right[j] += wr.min(0.0) * (cr * cr * cr);
            }
            // Node n: bulk and boundary-motion fluxes are zero by the
            // moving-boundary identity; only the infiltration flux remains.
            if infiltrating {
                let wu = u[n] / r;
                a_left[n] = r_sq * wu.max(0.0);
                b[n] = r_sq * wu.min(0.0) * m_bc;
            }
        }
        Scheme::Conventional => {
            for j in 1..n {
                let mut w = (v[j] - grid.node(j) * r_prime) / r;
                if infiltrating {
                    w += u[j] / r;
                }
                a_left[j] = w.max(0.0) * grid.center_sq(j - 1) * r_sq;
                a_right[j] = w.min(0.0) * grid.center_sq(j) * r_sq;
            }
            let mut w = (v[n] - r_prime) / r;
            if infiltrating {
                w += u[n] / r;
            }
            a_left[n] = w.max(0.0) * grid.center_sq(n - 1) * r_sq;
            b[n] = w.min(0.0) * r_sq * m_bc;
        }
    }
    CoreFlux { a_left, a_right, b }
}

/// Evaluates the first-order core flux at given data.
fn core_flux_eval(core: &CoreFlux, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut f = vec![0.0; n + 1];
    for j in 1..=n {
        let mut v = core.b[j] + core.a_left[j] * x[j - 1];
        if j < n {
            v += core.a_right[j] * x[j];
        }
        f[j] = v;
    }
    f
}

/// Finite-difference source Jacobian of one interval.
fn source_jacobian<P: Problem>(
    p: &P,
    r_center: f64,
    tau: f64,
    x: &[f64],
    s0: &[f64],
    jac: &mut [f64],
) {
    let nsp = x.len();
    let mut xp = vec![0.0; nsp];
    let mut sp = vec![0.0; nsp];
    for l in 0..nsp {
        xp.copy_from_slice(x);
        let h = 1e-7 * (1.0 + x[l].abs());
        xp[l] += h;
        p.source_rates(r_center, tau, &xp, &mut sp);
        for k in 0..nsp {
            jac[k * nsp + l] = (sp[k] - s0[k]) / h;
        }
    }
}

/// Solves one fully implicit relation of effective size `dtau`.
///
/// `cons_old[k][i]` carries the old-level conservative data `R_old^2 x_old`
/// (without the geometric weight) and `radius_y_old` the old-level radius
/// variable: `R_old^2` for the enhanced scheme, `R_old` for the conventional
/// one. Multi-stage integrators pass combined stage data for these two
/// arguments. Returns the new fields, the new radius pair, and the number of
/// Picard sweeps used.
pub(crate) fn implicit_solve<P: Problem>(
    p: &P,
    grid: &Grid,
    method: &MethodConfig,
    chemo: Option<&[f64]>,
    init_fields: &[Vec<f64>],
    init_radius: RadiusState,
    cons_old: &[Vec<f64>],
    radius_y_old: f64,
    tau_end: f64,
    dtau: f64,
) -> Result<(Vec<Vec<f64>>, RadiusState, usize), SolverError> {
    let n = grid.n_eta();
    let nsp = p.n_species();
    let d_eta = grid.d_eta();
    if radius_y_old <= 0.0 {
        return Err(SolverError::DomainCollapse { r_sq: radius_y_old });
    }

    let mut fields: Vec<Vec<f64>> = init_fields.to_vec();
    let mut r_iter = init_radius.r;
    let mut v_prev: Option<Vec<f64>> = None;
    let mut last_change = f64::INFINITY;

    let mut sub = vec![0.0; n * nsp];
    let mut sup = vec![0.0; n * nsp];
    let mut diag = vec![0.0; n * nsp * nsp];
    let mut rhs = vec![0.0; n * nsp];
    let mut jac = vec![0.0; nsp * nsp];
    let mut x_at = vec![0.0; nsp];
    let mut s0 = vec![0.0; nsp];

    for sweep in 1..=method.picard_max_iter {
        let pre = prepare(p, grid, method, &fields, chemo, tau_end, r_iter)?;
        let (r_prime, r_new) = match method.scheme {
            Scheme::Enhanced => {
                let rp = gcl_rate(pre.v[n], d_eta);
                let a = dtau * rp;
                (rp, a + (a * a + radius_y_old).sqrt())
            }
            Scheme::Conventional => {
                let rp = pre.v[n];
                let r_new = radius_y_old + dtau * rp;
                if r_new <= 0.0 {
                    return Err(SolverError::DomainCollapse { r_sq: r_new * r_new.abs() });
                }
                (rp, r_new)
            }
        };
        let r_sq_new = r_new * r_new;

        // Full fluxes and first-order cores at the iterate, both on the new
        // radius pair; their difference is deferred to the right-hand side.
        let full = match method.scheme {
            Scheme::Enhanced => enhanced_fluxes(&fields, &pre, grid, r_new, r_prime),
            Scheme::Conventional => {
                conventional_fluxes(&fields, &pre, grid, method, r_new, r_prime)
            }
        };
        let cores: Vec<CoreFlux> = (0..nsp)
            .map(|k| {
                core_flux_coeffs(
                    method,
                    k == nsp - 1,
                    grid,
                    &pre.v,
                    &pre.u,
                    r_new,
                    r_prime,
                    pre.m_bc,
                )
            })
            .collect();
        // The enhanced infiltration flux is built on the iterate radius for
        // the velocity solve; rebuild it on the new radius for the species
        // system so core and full parts share one scale.
        let full = if method.scheme == Scheme::Enhanced && (r_new - r_iter).abs() > 0.0 {
            let f_u =
                enhanced_u_flux(fields.last().unwrap(), &pre.u, grid, r_new, pre.phi.as_deref(), pre.m_bc);
            let mut full = full;
            let last = nsp - 1;
            for (fj, (new_u, old_u)) in
                full[last].iter_mut().zip(f_u.iter().zip(&pre.f_u))
            {
                *fj += *new_u - *old_u;
            }
            full
        } else {
            full
        };

        let lam = dtau / d_eta;
        for i in 0..n {
            let esq = grid.center_sq(i);
            let rc = grid.center(i) * r_new;
            for (k, f) in fields.iter().enumerate() {
                x_at[k] = f[i];
            }
            p.source_rates(rc, tau_end, &x_at, &mut s0);
            source_jacobian(p, rc, tau_end, &x_at, &s0, &mut jac);
            let mass = esq * (r_sq_new + dtau * r_prime * r_new);
            for k in 0..nsp {
                let core = &cores[k];
                let row = i * nsp + k;
                sub[row] = if i > 0 { -lam * core.a_left[i] } else { 0.0 };
                sup[row] = if i + 1 < n { lam * core.a_right[i + 1] } else { 0.0 };
                let corr_hi = full[k][i + 1]
                    - (core.b[i + 1]
                        + core.a_left[i + 1] * fields[k][i]
                        + if i + 1 < n { core.a_right[i + 1] * fields[k][i + 1] } else { 0.0 });
                let corr_lo = if i == 0 {
                    0.0
                } else {
                    full[k][i]
                        - (core.b[i]
                            + core.a_left[i] * fields[k][i - 1]
                            + core.a_right[i] * fields[k][i])
                };
                let mut lin = 0.0;
                for l in 0..nsp {
                    let block = i * nsp * nsp + k * nsp + l;
                    let j_kl = jac[k * nsp + l];
                    diag[block] = -dtau * esq * r_sq_new * j_kl;
                    lin += j_kl * x_at[l];
                }
                diag[i * nsp * nsp + k * nsp + k] +=
                    mass + lam * (core.a_left[i + 1] - core.a_right[i]);
                rhs[row] = esq * cons_old[k][i]
                    - lam * (core.b[i + 1] - core.b[i] + corr_hi - corr_lo)
                    + dtau * esq * r_sq_new * (s0[k] - lin);
            }
        }

        let sol = solve_block_tridiagonal(&sub, &diag, &sup, &rhs, nsp)?;

        let mut change: f64 = ((r_new - r_iter) / (1.0 + r_new)).abs();
        for k in 0..nsp {
            for i in 0..n {
                let xv = sol[i * nsp + k];
                change = change.max(((xv - fields[k][i]) / (1.0 + xv.abs())).abs());
                fields[k][i] = xv;
            }
        }
        if let Some(vp) = &v_prev {
            for (a, b) in pre.v.iter().zip(vp) {
                change = change.max(((a - b) / (1.0 + a.abs())).abs());
            }
        }
        v_prev = Some(pre.v);
        r_iter = r_new;
        last_change = change;

        check_finite(&fields, tau_end)?;
        if change <= method.picard_tol {
            return Ok((fields, RadiusState { r: r_new, r_prime }, sweep));
        }
    }
    Err(SolverError::NonConvergence { residual: last_change, iters: method.picard_max_iter })
}

/// Max-norm residual of the fully implicit update relations at `new` given
/// the old level, in solution units for the species and rate units for the
/// radius relations. Rebuilds every spatial piece at `new` (with the lagged
/// chemoattractant of `old`, matching the implicit step).
pub fn implicit_residual<P: Problem>(
    p: &P,
    grid: &Grid,
    method: &MethodConfig,
    old: &State,
    new: &State,
    dtau: f64,
) -> Result<f64, SolverError> {
    let n = grid.n_eta();
    let d_eta = grid.d_eta();
    let r_old = old.radius.r;
    let r_new = new.radius.r;
    let r_prime = new.radius.r_prime;
    let pre = prepare(p, grid, method, &new.fields, old.chemo.as_deref(), new.tau, r_new)?;
    let fluxes = match method.scheme {
        Scheme::Enhanced => enhanced_fluxes(&new.fields, &pre, grid, r_new, r_prime),
        Scheme::Conventional => {
            conventional_fluxes(&new.fields, &pre, grid, method, r_new, r_prime)
        }
    };
    let r_sq_old = r_old * r_old;
    let r_sq_new = r_new * r_new;
    let mut worst: f64 = 0.0;
    for (k, x) in new.fields.iter().enumerate() {
        for i in 0..n {
            let esq = grid.center_sq(i);
            let div = (fluxes[k][i + 1] - fluxes[k][i]) / (d_eta * esq);
            let resid = (r_sq_new * x[i] - r_sq_old * old.fields[k][i]) / dtau + div
                - r_sq_new * pre.sources[k][i]
                + r_prime * r_new * x[i];
            worst = worst.max((resid * dtau / r_sq_new).abs());
        }
    }
    match method.scheme {
        Scheme::Enhanced => {
            let rate = gcl_rate(pre.v[n], d_eta);
            worst = worst.max(((rate - r_prime) / (1.0 + rate.abs())).abs());
            let alg = (r_sq_new - r_sq_old) / (2.0 * dtau * r_new);
            worst = worst.max(((alg - r_prime) / (1.0 + alg.abs())).abs());
        }
        Scheme::Conventional => {
            worst = worst.max(((pre.v[n] - r_prime) / (1.0 + r_prime.abs())).abs());
            let alg = (r_new - r_old) / dtau;
            worst = worst.max(((alg - r_prime) / (1.0 + alg.abs())).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Two-species scenario with prescribed closures for unit tests.
    struct Toy {
        u: Box<dyn Fn(f64, f64) -> f64>,
        f: Box<dyn Fn(f64, f64, f64, f64) -> f64>,
        h: Box<dyn Fn(f64, f64, f64, f64) -> f64>,
        m_bc: f64,
    }

    impl Toy {
        fn still() -> Self {
            Toy {
                u: Box::new(|_, _| 0.0),
                f: Box::new(|_, _, _, _| 0.0),
                h: Box::new(|_, _, _, _| 0.0),
                m_bc: 0.7,
            }
        }
    }

    impl Problem for Toy {
        fn n_species(&self) -> usize {
            2
        }
        fn nodal_u(
            &self,
            grid: &Grid,
            _chemo: Option<&[f64]>,
            tau: f64,
            r: f64,
        ) -> Result<Vec<f64>, SolverError> {
            crate::velocity::nodal_u_prescribed(|rr, tt| (self.u)(rr, tt), grid, r, tau)
        }
        fn source_rates(&self, r_center: f64, tau: f64, x: &[f64], out: &mut [f64]) {
            out[0] = (self.f)(r_center, tau, x[0], x[1]);
            out[1] = (self.h)(r_center, tau, x[0], x[1]);
        }
        fn m_bc(&self, _tau: f64) -> f64 {
            self.m_bc
        }
    }

    fn uniform_state(g: f64, m: f64, n: usize, r: f64) -> State {
        State::new(
            0.0,
            RadiusState { r, r_prime: 0.0 },
            vec![vec![g; n], vec![m; n]],
            None,
        )
    }

    fn all_methods(integrator: Integrator) -> Vec<MethodConfig> {
        let mut out = Vec::new();
        for scheme in [Scheme::Conventional, Scheme::Enhanced] {
            for order in [FluxOrder::Upwind, FluxOrder::Muscl] {
                out.push(MethodConfig::new(scheme, order, integrator));
            }
        }
        out
    }

    #[test]
    fn quiescent_state_is_stationary_for_all_methods() {
        let grid = Grid::build(16, 1.0).unwrap();
        let p = Toy::still();
        let s0 = uniform_state(0.3, 0.7, 16, 1.25);
        for m in all_methods(Integrator::ForwardEuler) {
            let s1 = fe_step(&p, &s0, &grid, &m, 0.01).unwrap();
            assert_relative_eq!(s1.radius.r, 1.25, max_relative = 1e-14);
            assert_eq!(s1.radius.r_prime, 0.0);
            for (f1, f0) in s1.fields.iter().zip(&s0.fields) {
                for (a, b) in f1.iter().zip(f0) {
                    assert_relative_eq!(a, b, max_relative = 1e-13);
                }
            }
        }
    }

    #[test]
    fn enhanced_step_preserves_uniform_infiltrating_species() {
        // Pure infiltration of a single-species totality: M stays exactly
        // one and the boundary follows the quadratic update.
        let n = 24;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = Toy {
            u: Box::new(|r, _| -0.5 * r),
            f: Box::new(|_, _, _, _| 0.0),
            h: Box::new(|_, _, _, _| 0.0),
            m_bc: 1.0,
        };
        let s0 = uniform_state(0.0, 1.0, n, 1.0);
        let dtau = 0.01;
        for order in [FluxOrder::Upwind, FluxOrder::Muscl] {
            let m = MethodConfig::new(Scheme::Enhanced, order, Integrator::ForwardEuler);
            let s1 = fe_step(&p, &s0, &grid, &m, dtau).unwrap();
            for v in &s1.fields[1] {
                assert!((v - 1.0).abs() < 1e-14, "M drifted: {v}");
            }
            for v in &s1.fields[0] {
                assert!(v.abs() < 1e-14, "G drifted: {v}");
            }
            // Boundary speed: V_N = 0.5 R, kappa-corrected in the rate.
            let kappa = 1.0 / (1.0 - grid.d_eta() * grid.d_eta() / 4.0);
            let rp = kappa * 0.5;
            assert_relative_eq!(s1.radius.r_prime, rp, max_relative = 1e-12);
            let r_expect = (1.0 + 2.0 * dtau * rp).sqrt();
            assert_relative_eq!(s1.radius.r, r_expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn enhanced_step_preserves_uniform_totality_of_two_species() {
        // With two species the individual profiles may deform, but their
        // sum stays exactly one when the environment matches it.
        let n = 24;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = Toy {
            u: Box::new(|r, _| -0.5 * r),
            f: Box::new(|_, _, _, _| 0.0),
            h: Box::new(|_, _, _, _| 0.0),
            m_bc: 0.75,
        };
        let s0 = uniform_state(0.25, 0.75, n, 1.0);
        for order in [FluxOrder::Upwind, FluxOrder::Muscl] {
            let m = MethodConfig::new(Scheme::Enhanced, order, Integrator::ForwardEuler);
            let mut s = s0.clone();
            for _ in 0..5 {
                s = fe_step(&p, &s, &grid, &m, 0.01).unwrap();
            }
            for t in s.totality() {
                assert!((t - 1.0).abs() < 1e-13, "totality drifted: {t}");
            }
        }
    }

    #[test]
    fn conventional_step_drifts_on_the_same_uniform_data() {
        let n = 24;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = Toy {
            u: Box::new(|r, _| -0.5 * r),
            f: Box::new(|_, _, _, _| 0.0),
            h: Box::new(|_, _, _, _| 0.0),
            m_bc: 0.75,
        };
        let s0 = uniform_state(0.25, 0.75, n, 1.0);
        let m = MethodConfig::new(Scheme::Conventional, FluxOrder::Upwind, Integrator::ForwardEuler);
        let s1 = fe_step(&p, &s0, &grid, &m, 0.01).unwrap();
        let drift = s1.fields[1].iter().map(|v| (v - 0.75).abs()).fold(0.0, f64::max);
        assert!(drift > 1e-12, "expected totality drift, got {drift}");
    }

    #[test]
    fn muscl_equals_upwind_on_uniform_data() {
        let n = 16;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = Toy {
            u: Box::new(|r, t| -0.4 * r * (1.0 + 0.1 * t)),
            f: Box::new(|_, _, _, _| 0.0),
            h: Box::new(|_, _, _, _| 0.0),
            m_bc: 0.6,
        };
        let s0 = uniform_state(0.4, 0.6, n, 1.1);
        // Enhanced MUSCL reconstructs primitives, which are flat here, so the
        // step is bit-identical to upwind. The conventional scheme limits the
        // conservative variable eta^2 R^2 X, which is not flat, so this
        // equivalence is specific to the enhanced discretization.
        let m1 = MethodConfig::new(Scheme::Enhanced, FluxOrder::Upwind, Integrator::ForwardEuler);
        let m2 = MethodConfig::new(Scheme::Enhanced, FluxOrder::Muscl, Integrator::ForwardEuler);
        let a = fe_step(&p, &s0, &grid, &m1, 0.005).unwrap();
        let b = fe_step(&p, &s0, &grid, &m2, 0.005).unwrap();
        for (fa, fb) in a.fields.iter().zip(&b.fields) {
            for (x, y) in fa.iter().zip(fb) {
                assert_eq!(x, y, "reconstruction changed a uniform field");
            }
        }
    }

    #[test]
    fn balanced_source_update_matches_closed_form() {
        // Sources (+rho M, -rho M) keep the velocity zero, so the update is
        // the plain explicit reaction per interval.
        let n = 12;
        let grid = Grid::build(n, 1.0).unwrap();
        let rho = 2.0;
        let p = Toy {
            u: Box::new(|_, _| 0.0),
            f: Box::new(move |_, _, _, m| rho * m),
            h: Box::new(move |_, _, _, m| -rho * m),
            m_bc: 0.5,
        };
        let s0 = uniform_state(0.5, 0.5, n, 1.0);
        let dtau = 0.01;
        for m in all_methods(Integrator::ForwardEuler) {
            let s1 = fe_step(&p, &s0, &grid, &m, dtau).unwrap();
            for v in &s1.fields[1] {
                assert_relative_eq!(*v, 0.5 * (1.0 - rho * dtau), max_relative = 1e-13);
            }
            for v in &s1.fields[0] {
                assert_relative_eq!(*v, 0.5 * (1.0 + rho * dtau), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn blow_up_is_reported_with_time() {
        let n = 8;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = Toy {
            u: Box::new(|_, _| 0.0),
            f: Box::new(|_, _, _, _| f64::NAN),
            h: Box::new(|_, _, _, _| 0.0),
            m_bc: 0.5,
        };
        let s0 = uniform_state(0.5, 0.5, n, 1.0);
        let m = MethodConfig::new(Scheme::Enhanced, FluxOrder::Upwind, Integrator::ForwardEuler);
        match fe_step(&p, &s0, &grid, &m, 0.01) {
            Err(SolverError::BlowUp { tau, .. }) => assert_relative_eq!(tau, 0.01),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn implicit_solve_is_stationary_and_fast_on_quiescent_data() {
        let n = 12;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = Toy::still();
        let s0 = uniform_state(0.3, 0.7, n, 1.5);
        for scheme in [Scheme::Conventional, Scheme::Enhanced] {
            let m = MethodConfig::new(scheme, FluxOrder::Upwind, Integrator::BackwardEuler);
            let r = s0.radius.r;
            let r_sq = r * r;
            let cons: Vec<Vec<f64>> =
                s0.fields.iter().map(|f| f.iter().map(|x| r_sq * x).collect()).collect();
            let y_old = match scheme {
                Scheme::Enhanced => r_sq,
                Scheme::Conventional => r,
            };
            let (fields, radius, iters) =
                implicit_solve(&p, &grid, &m, None, &s0.fields, s0.radius, &cons, y_old, 0.1, 0.1)
                    .unwrap();
            assert!(iters <= 2, "stationary state took {iters} sweeps");
            assert_relative_eq!(radius.r, r, max_relative = 1e-13);
            for (f1, f0) in fields.iter().zip(&s0.fields) {
                for (a, b) in f1.iter().zip(f0) {
                    assert_relative_eq!(a, b, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn implicit_balanced_decay_is_exact_and_unconditionally_stable() {
        let n = 8;
        let grid = Grid::build(n, 1.0).unwrap();
        let rho = 3.0;
        let p = Toy {
            u: Box::new(|_, _| 0.0),
            f: Box::new(move |_, _, _, m| rho * m),
            h: Box::new(move |_, _, _, m| -rho * m),
            m_bc: 0.5,
        };
        let s0 = uniform_state(0.5, 0.5, n, 1.0);
        for dtau in [0.01, 1.0, 50.0] {
            let m = MethodConfig::new(Scheme::Enhanced, FluxOrder::Upwind, Integrator::BackwardEuler);
            let cons: Vec<Vec<f64>> =
                s0.fields.iter().map(|f| f.to_vec()).collect();
            let (fields, _, _) = implicit_solve(
                &p, &grid, &m, None, &s0.fields, s0.radius, &cons, 1.0, dtau, dtau,
            )
            .unwrap();
            let expect = 0.5 / (1.0 + rho * dtau);
            for v in &fields[1] {
                assert_relative_eq!(*v, expect, max_relative = 1e-11);
                assert!(v.abs() <= 0.5);
            }
            for v in &fields[0] {
                assert_relative_eq!(*v, 0.5 + (0.5 - expect), max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn implicit_growth_matches_closed_form_radius_map() {
        // Inward infiltration at matching environment: the implicit radius
        // relation has the closed form R+ = R / sqrt(1 - kappa dtau) when
        // the infiltration speed is half the boundary radius.
        let n = 20;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = Toy {
            u: Box::new(|r, _| -0.5 * r),
            f: Box::new(|_, _, _, _| 0.0),
            h: Box::new(|_, _, _, _| 0.0),
            m_bc: 1.0,
        };
        let s0 = State::new(
            0.0,
            RadiusState { r: 1.0, r_prime: 0.0 },
            vec![vec![0.0; n], vec![1.0; n]],
            None,
        );
        let dtau = 0.05;
        let m = MethodConfig::new(Scheme::Enhanced, FluxOrder::Upwind, Integrator::BackwardEuler);
        let cons: Vec<Vec<f64>> =
            s0.fields.iter().map(|f| f.to_vec()).collect();
        let (fields, radius, _) = implicit_solve(
            &p, &grid, &m, None, &s0.fields, s0.radius, &cons, 1.0, dtau, dtau,
        )
        .unwrap();
        let d = grid.d_eta();
        let kappa = 1.0 / (1.0 - d * d / 4.0);
        let r_expect = 1.0 / (1.0 - kappa * dtau).sqrt();
        assert_relative_eq!(radius.r, r_expect, max_relative = 1e-10);
        for v in &fields[1] {
            assert!((v - 1.0).abs() < 1e-11, "uniform infiltrating species drifted: {v}");
        }
        // Residual of the converged relations stays at the sweep tolerance.
        let new = State::new(dtau, radius, fields, None);
        let resid = implicit_residual(&p, &grid, &m, &s0, &new, dtau).unwrap();
        assert!(resid <= 10.0 * m.picard_tol, "residual {resid}");
    }
}
