//! Time-step control and integrator wrappers around the spatial step.
//!
//! Explicit integrators (forward Euler, TVD-RK2) take a step size from the
//! split-velocity Courant rule; implicit ones (backward Euler, two-stage
//! SDIRK2) wrap the Picard solve and remain stable at much larger steps.

use crate::error::SolverError;
use crate::grid::{gcl_rate, Grid, RadiusState};
use crate::scheme::{
    fe_step, implicit_solve, nodal_velocities, Integrator, MethodConfig, Problem, Scheme, State,
};

/// Split-velocity Courant step
/// `cfl * d_eta / max_j(|V_j|/R + eta_j |R'|/R + |u_j|/R)`.
///
/// Returns `INFINITY` when every speed vanishes; callers clip the result to
/// the remaining simulation time.
pub fn cfl_timestep(
    nodal_v: &[f64],
    nodal_u: &[f64],
    r: f64,
    r_prime: f64,
    grid: &Grid,
    cfl: f64,
) -> f64 {
    debug_assert!(r > 0.0);
    let mut speed: f64 = 0.0;
    for j in 0..=grid.n_eta() {
        let s = (nodal_v[j].abs() + grid.node(j) * r_prime.abs() + nodal_u[j].abs()) / r;
        speed = speed.max(s);
    }
    if speed == 0.0 {
        f64::INFINITY
    } else {
        cfl * grid.d_eta() / speed
    }
}

/// Courant step from the mesh and infiltration speeds only:
/// `cfl * d_eta / max_j((eta_j |R'| + |u_j|)/R)`.
///
/// The enhanced scheme transports primitives, so its interior stability is
/// governed by the relative speeds; including |V_j| there roughly halves the
/// step for no gain.
fn boundary_timestep(nodal_u: &[f64], r: f64, r_prime: f64, grid: &Grid, cfl: f64) -> f64 {
    debug_assert!(r > 0.0);
    let mut speed: f64 = 0.0;
    for j in 0..=grid.n_eta() {
        let s = (grid.node(j) * r_prime.abs() + nodal_u[j].abs()) / r;
        speed = speed.max(s);
    }
    if speed == 0.0 {
        f64::INFINITY
    } else {
        cfl * grid.d_eta() / speed
    }
}

/// Largest admissible step for `state` under the method's Courant rule,
/// evaluated from the same velocities the next step would use.
pub fn admissible_dtau<P: Problem>(
    p: &P,
    state: &State,
    grid: &Grid,
    method: &MethodConfig,
) -> Result<f64, SolverError> {
    let (v, u) = nodal_velocities(p, state, grid, method)?;
    let r = state.radius.r;
    let vn = v[grid.n_eta()];
    if !vn.is_finite() {
        return Err(SolverError::BlowUp { tau: state.tau, what: "boundary velocity".into() });
    }
    let r_prime = match method.scheme {
        Scheme::Enhanced => gcl_rate(vn, grid.d_eta()),
        Scheme::Conventional => vn,
    };
    let explicit = matches!(method.integrator, Integrator::ForwardEuler | Integrator::TvdRk2);
    let dtau = if explicit && method.scheme == Scheme::Enhanced {
        boundary_timestep(&u, r, r_prime, grid, method.cfl)
    } else {
        cfl_timestep(&v, &u, r, r_prime, grid, method.cfl)
    };
    Ok(dtau)
}

fn average_states(s0: &State, s2: &State, tau: f64, r_prime: f64) -> State {
    let fields = s0
        .fields
        .iter()
        .zip(&s2.fields)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
        .collect();
    let chemo = match (&s0.chemo, &s2.chemo) {
        (Some(a), Some(b)) => {
            Some(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>())
        }
        _ => None,
    };
    let radius = RadiusState { r: 0.5 * (s0.radius.r + s2.radius.r), r_prime };
    State { tau, radius, fields, chemo }
}

/// Two-stage TVD Runge-Kutta step: `S1 = E(Sn)`, `S2 = E(S1)`,
/// `Sn+1 = (Sn + S2)/2`, averaging species values, the chemoattractant, and
/// the radius. Both Euler stages use the same `dtau`.
pub fn tvd_rk2_step<P: Problem>(
    p: &P,
    state: &State,
    grid: &Grid,
    method: &MethodConfig,
    dtau: f64,
) -> Result<State, SolverError> {
    let s1 = fe_step(p, state, grid, method, dtau)?;
    let s2 = fe_step(p, &s1, grid, method, dtau)?;
    // Reported rate is the stage mean; nothing downstream consumes it.
    let r_prime = 0.5 * (s1.radius.r_prime + s2.radius.r_prime);
    Ok(average_states(state, &s2, state.tau + dtau, r_prime))
}

fn conservative(fields: &[Vec<f64>], r_sq: f64) -> Vec<Vec<f64>> {
    fields.iter().map(|f| f.iter().map(|x| r_sq * x).collect()).collect()
}

fn radius_y(scheme: Scheme, r: f64) -> f64 {
    match scheme {
        Scheme::Enhanced => r * r,
        Scheme::Conventional => r,
    }
}

fn advance_chemo_once<P: Problem>(
    p: &P,
    state: &State,
    radius_new: RadiusState,
    grid: &Grid,
    dtau: f64,
) -> Result<Option<Vec<f64>>, SolverError> {
    let mut chemo = state.chemo.clone();
    if let Some(a) = chemo.as_mut() {
        p.advance_chemo(a, &state.fields[0], grid, state.radius.r, radius_new, dtau)?;
    }
    Ok(chemo)
}

/// Backward Euler step: both fluxes and sources at the new time level,
/// solved by Picard iteration. Unconditionally stable for decay-dominated
/// sources and keeps the totality identity of the enhanced scheme.
pub fn backward_euler_step<P: Problem>(
    p: &P,
    state: &State,
    grid: &Grid,
    method: &MethodConfig,
    dtau: f64,
) -> Result<State, SolverError> {
    let r = state.radius.r;
    let cons_old = conservative(&state.fields, r * r);
    let y_old = radius_y(method.scheme, r);
    let tau_end = state.tau + dtau;
    let (fields, radius, _) = implicit_solve(
        p,
        grid,
        method,
        state.chemo.as_deref(),
        &state.fields,
        state.radius,
        &cons_old,
        y_old,
        tau_end,
        dtau,
    )?;
    let chemo = advance_chemo_once(p, state, radius, grid, dtau)?;
    Ok(State { tau: tau_end, radius, fields, chemo })
}

/// Stiffly accurate two-stage SDIRK2 with `gamma = 1 - 1/sqrt(2)`.
///
/// Stage one is a backward Euler step of size `gamma*dtau`. Its slope, taken
/// in the conserved variables (`R^2 X` per interval, the radius through the
/// same map the scheme updates it in), extrapolates the stage-two starting
/// data; stage two is another backward Euler solve of size `gamma*dtau`
/// landing on `tau + dtau`, and its result is the step.
pub fn dirk2_step<P: Problem>(
    p: &P,
    state: &State,
    grid: &Grid,
    method: &MethodConfig,
    dtau: f64,
) -> Result<State, SolverError> {
    let gamma = 1.0 - 1.0 / std::f64::consts::SQRT_2;
    let r = state.radius.r;
    let cons_old = conservative(&state.fields, r * r);
    let y_old = radius_y(method.scheme, r);

    let (f1, rad1, _) = implicit_solve(
        p,
        grid,
        method,
        state.chemo.as_deref(),
        &state.fields,
        state.radius,
        &cons_old,
        y_old,
        state.tau + gamma * dtau,
        gamma * dtau,
    )?;

    // y_hat = y_n + (1-gamma)/gamma * (y_1 - y_n) in conserved variables.
    let c = (1.0 - gamma) / gamma;
    let r1_sq = rad1.r * rad1.r;
    let cons_hat: Vec<Vec<f64>> = cons_old
        .iter()
        .zip(&f1)
        .map(|(co, x1)| co.iter().zip(x1).map(|(yo, x)| yo + c * (r1_sq * x - yo)).collect())
        .collect();
    let y_hat = y_old + c * (radius_y(method.scheme, rad1.r) - y_old);
    if y_hat <= 0.0 {
        return Err(SolverError::DomainCollapse { r_sq: y_hat });
    }

    let (f2, rad2, _) = implicit_solve(
        p,
        grid,
        method,
        state.chemo.as_deref(),
        &f1,
        rad1,
        &cons_hat,
        y_hat,
        state.tau + dtau,
        gamma * dtau,
    )?;
    let chemo = advance_chemo_once(p, state, rad2, grid, dtau)?;
    Ok(State { tau: state.tau + dtau, radius: rad2, fields: f2, chemo })
}

/// One step of the configured integrator.
pub fn advance<P: Problem>(
    p: &P,
    state: &State,
    grid: &Grid,
    method: &MethodConfig,
    dtau: f64,
) -> Result<State, SolverError> {
    match method.integrator {
        Integrator::ForwardEuler => fe_step(p, state, grid, method, dtau),
        Integrator::TvdRk2 => tvd_rk2_step(p, state, grid, method, dtau),
        Integrator::BackwardEuler => backward_euler_step(p, state, grid, method, dtau),
        Integrator::Dirk2 => dirk2_step(p, state, grid, method, dtau),
    }
}

/// Squared amplification factor of the split pair of first-order upwind
/// advection steps at Courant numbers `alpha_plus`, `alpha_minus` and phase
/// `theta`. The pair is von Neumann stable iff `alpha_plus + alpha_minus <= 1`.
pub fn split_amplifier(alpha_plus: f64, alpha_minus: f64, theta: f64) -> f64 {
    debug_assert!(alpha_plus >= 0.0 && alpha_minus >= 0.0);
    let s = alpha_plus + alpha_minus;
    let c = theta.cos();
    1.0 - (2.0 * s * (1.0 - s) + 4.0 * alpha_plus * alpha_minus * (1.0 + c)) * (1.0 - c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::FluxOrder;
    use approx::assert_relative_eq;

    struct Toy {
        u: Box<dyn Fn(f64, f64) -> f64>,
        f: Box<dyn Fn(f64, f64, f64, f64) -> f64>,
        h: Box<dyn Fn(f64, f64, f64, f64) -> f64>,
        m_bc: f64,
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
            Ok((0..=grid.n_eta()).map(|j| (self.u)(grid.node(j) * r, tau)).collect())
        }

        fn source_rates(&self, _r_center: f64, tau: f64, x: &[f64], out: &mut [f64]) {
            out[0] = (self.f)(0.0, tau, x[0], x[1]);
            out[1] = (self.h)(0.0, tau, x[0], x[1]);
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

    fn balanced_decay(rho: f64) -> Toy {
        // g' = +rho m, m' = -rho m keeps the totality source zero, so the
        // velocity vanishes and the step is pure reaction.
        Toy {
            u: Box::new(|_, _| 0.0),
            f: Box::new(move |_, _, _, m| rho * m),
            h: Box::new(move |_, _, _, m| -rho * m),
            m_bc: 0.5,
        }
    }

    #[test]
    fn amplifier_hand_values() {
        for theta in [0.0, 0.3, 1.0, std::f64::consts::PI] {
            assert_relative_eq!(split_amplifier(1.0, 0.0, theta), 1.0, epsilon = 1e-15);
            assert_relative_eq!(split_amplifier(0.0, 0.0, theta), 1.0, epsilon = 1e-15);
        }
        assert_relative_eq!(split_amplifier(0.5, 0.5, std::f64::consts::PI), 1.0, epsilon = 1e-15);
        assert_relative_eq!(split_amplifier(0.6, 0.6, std::f64::consts::PI), 1.96, epsilon = 1e-14);
    }

    #[test]
    fn courant_step_on_known_velocities() {
        let n = 50;
        let grid = Grid::build(n, 1.0).unwrap();
        // V_j = 0.5 eta_j, R' = 0.5, u_j = -0.5 eta_j at R = 1: the split
        // speed peaks at 1.5, so dtau = 0.8 * 0.02 / 1.5.
        let v: Vec<f64> = (0..=n).map(|j| 0.5 * grid.node(j)).collect();
        let u: Vec<f64> = (0..=n).map(|j| -0.5 * grid.node(j)).collect();
        let dtau = cfl_timestep(&v, &u, 1.0, 0.5, &grid, 0.8);
        assert_relative_eq!(dtau, 0.8 * 0.02 / 1.5, max_relative = 1e-14);

        let zeros = vec![0.0; n + 1];
        assert!(cfl_timestep(&zeros, &zeros, 1.0, 0.0, &grid, 0.8).is_infinite());
    }

    #[test]
    fn admissible_step_matches_scheme_rule() {
        let n = 50;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = Toy {
            u: Box::new(|r, _| -0.5 * r),
            f: Box::new(|_, _, _, _| 0.0),
            h: Box::new(|_, _, _, _| 0.0),
            m_bc: 1.0,
        };
        let s0 = uniform_state(0.0, 1.0, n, 1.0);

        let conv = MethodConfig::new(Scheme::Conventional, FluxOrder::Upwind, Integrator::ForwardEuler);
        let dt_conv = admissible_dtau(&p, &s0, &grid, &conv).unwrap();
        assert_relative_eq!(dt_conv, 0.8 * 0.02 / 1.5, max_relative = 1e-13);

        let enh = MethodConfig::new(Scheme::Enhanced, FluxOrder::Upwind, Integrator::ForwardEuler);
        let dt_enh = admissible_dtau(&p, &s0, &grid, &enh).unwrap();
        let kappa = gcl_rate(1.0, grid.d_eta());
        assert_relative_eq!(dt_enh, 0.8 * 0.02 / (0.5 * (1.0 + kappa)), max_relative = 1e-13);

        // Implicit integrators fall back to the full split rule.
        let imp = MethodConfig::new(Scheme::Enhanced, FluxOrder::Upwind, Integrator::BackwardEuler);
        let dt_imp = admissible_dtau(&p, &s0, &grid, &imp).unwrap();
        assert_relative_eq!(
            dt_imp,
            0.8 * 0.02 / (0.5 * (2.0 + kappa)),
            max_relative = 1e-13
        );
    }

    #[test]
    fn rk2_is_identity_plus_l_plus_half_l_squared() {
        // On the balanced linear reaction the step operator is linear and
        // time-independent, so one RK2 step must equal I + dt L + dt^2 L^2/2.
        let n = 12;
        let grid = Grid::build(n, 1.0).unwrap();
        let rho = 1.7;
        let p = balanced_decay(rho);
        let s0 = uniform_state(0.25, 0.75, n, 1.0);
        let dtau = 0.08;
        let z = rho * dtau;
        for scheme in [Scheme::Conventional, Scheme::Enhanced] {
            let m = MethodConfig::new(scheme, FluxOrder::Upwind, Integrator::TvdRk2);
            let s1 = tvd_rk2_step(&p, &s0, &grid, &m, dtau).unwrap();
            let m_expect = 0.75 * (1.0 - z + 0.5 * z * z);
            let g_expect = 0.25 + 0.75 * (z - 0.5 * z * z);
            for i in 0..n {
                assert_relative_eq!(s1.fields[1][i], m_expect, max_relative = 1e-13);
                assert_relative_eq!(s1.fields[0][i], g_expect, max_relative = 1e-13);
            }
            assert_relative_eq!(s1.radius.r, 1.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn rk2_keeps_uniform_infiltrating_species_exact() {
        // Averaging two uniform states is uniform, so the discrete identity
        // survives the composite step.
        let n = 20;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = Toy {
            u: Box::new(|r, _| -0.5 * r),
            f: Box::new(|_, _, _, _| 0.0),
            h: Box::new(|_, _, _, _| 0.0),
            m_bc: 1.0,
        };
        let mut s = uniform_state(0.0, 1.0, n, 1.0);
        let m = MethodConfig::new(Scheme::Enhanced, FluxOrder::Muscl, Integrator::TvdRk2);
        for _ in 0..20 {
            s = tvd_rk2_step(&p, &s, &grid, &m, 0.01).unwrap();
        }
        for x in &s.fields[1] {
            assert!((x - 1.0).abs() < 1e-13, "uniform field drifted to {x}");
        }
        assert!(s.radius.r > 1.0);
    }

    #[test]
    fn dirk2_matches_its_stability_function() {
        let n = 8;
        let grid = Grid::build(n, 1.0).unwrap();
        let rho = 1.3;
        let p = balanced_decay(rho);
        let gamma = 1.0 - 1.0 / std::f64::consts::SQRT_2;
        for dtau in [0.05, 0.5, 2.0, 10.0] {
            let s0 = uniform_state(0.25, 0.75, n, 1.0);
            let mut m =
                MethodConfig::new(Scheme::Enhanced, FluxOrder::Upwind, Integrator::Dirk2);
            m.picard_tol = 1e-14;
            let s1 = dirk2_step(&p, &s0, &grid, &m, dtau).unwrap();
            let z = -rho * dtau;
            let rz = (1.0 + (1.0 - 2.0 * gamma) * z) / ((1.0 - gamma * z) * (1.0 - gamma * z));
            for x in &s1.fields[1] {
                assert_relative_eq!(*x, 0.75 * rz, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn implicit_steps_damp_decay_for_any_step_size() {
        let n = 8;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = balanced_decay(0.9);
        for integrator in [Integrator::BackwardEuler, Integrator::Dirk2] {
            for dtau in [0.1, 1.0, 10.0, 100.0] {
                let s0 = uniform_state(0.25, 0.75, n, 1.0);
                let m = MethodConfig::new(Scheme::Enhanced, FluxOrder::Upwind, integrator);
                let s1 = advance(&p, &s0, &grid, &m, dtau).unwrap();
                for x in &s1.fields[1] {
                    assert!(x.abs() <= 0.75 + 1e-12, "grew to {x} at dtau {dtau}");
                }
            }
        }
    }

    #[test]
    fn stationary_state_is_fixed_under_every_integrator() {
        let n = 10;
        let grid = Grid::build(n, 1.0).unwrap();
        let p = Toy {
            u: Box::new(|_, _| 0.0),
            f: Box::new(|_, _, _, _| 0.0),
            h: Box::new(|_, _, _, _| 0.0),
            m_bc: 0.7,
        };
        let s0 = uniform_state(0.3, 0.7, n, 2.0);
        for integrator in [
            Integrator::ForwardEuler,
            Integrator::TvdRk2,
            Integrator::BackwardEuler,
            Integrator::Dirk2,
        ] {
            for scheme in [Scheme::Conventional, Scheme::Enhanced] {
                let m = MethodConfig::new(scheme, FluxOrder::Upwind, integrator);
                let s1 = advance(&p, &s0, &grid, &m, 0.3).unwrap();
                assert_relative_eq!(s1.radius.r, 2.0, max_relative = 1e-12);
                for (f1, f0) in s1.fields.iter().zip(&s0.fields) {
                    for (a, b) in f1.iter().zip(f0) {
                        assert_relative_eq!(a, b, max_relative = 1e-11);
                    }
                }
            }
        }
    }
}
