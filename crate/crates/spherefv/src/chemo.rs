//! IMEX update of the chemoattractant on the extended domain.
//!
//! Diffusion and linear decay are implicit (tridiagonal solve), the mesh
//! advection, Michaelis-Menten secretion, and geometric source explicit. In
//! the normalized coordinate the conservative equation reads
//! `d/dtau (eta^2 R^2 A) + d/deta(-eta^3 R' R A) =
//!  nu d/deta(eta^2 dA/deta) - gamma eta^2 R^2 A + eta^2 R^2 q - eta^2 R' R A`
//! with `q = m G/(beta_hat + G)` inside the tumor and zero outside.

use crate::error::SolverError;
use crate::grid::{Grid, RadiusState};
use crate::linalg::solve_tridiagonal;

/// Chemoattractant coefficients, with the saturation constant already
/// divided by the totality (`beta_hat = beta / theta`) so the secretion
/// takes the proliferating-species fraction directly.
#[derive(Debug, Clone, Copy)]
pub struct ChemoParams {
    pub nu: f64,
    pub gamma: f64,
    pub m_secrete: f64,
    pub beta_hat: f64,
}

/// Advances `a` (interval means over the extended grid) by one step.
///
/// `g_old` is the proliferating fraction on the tumor intervals at the old
/// time; the secretion is restricted to centers with `eta <= 1`. The outer
/// boundary is a homogeneous Dirichlet condition imposed through an odd
/// ghost value; the origin needs no condition because the diffusive flux
/// carries a factor `eta^2`.
pub fn chemo_step(
    a: &mut [f64],
    g_old: &[f64],
    grid: &Grid,
    r_old: f64,
    radius_new: RadiusState,
    params: &ChemoParams,
    dtau: f64,
) -> Result<(), SolverError> {
    let nt = grid.n_tot();
    debug_assert_eq!(a.len(), nt);
    debug_assert!(g_old.len() >= grid.n_eta());
    let d_eta = grid.d_eta();
    let r_sq_old = r_old * r_old;
    let r_new = radius_new.r;
    let r_sq_new = r_new * r_new;
    // Mesh advection speed at node j is w_j = -eta_j^3 R' R.
    let wc = -radius_new.r_prime * r_old;
    let geo = radius_new.r_prime * r_old;
    let lam = params.nu * dtau / (d_eta * d_eta);

    let mut sub = vec![0.0; nt];
    let mut diag = vec![0.0; nt];
    let mut sup = vec![0.0; nt];
    let mut rhs = vec![0.0; nt];

    for i in 0..nt {
        let esq = grid.center_sq(i);
        let el = grid.node_sq(i);
        let eu = grid.node_sq(i + 1);
        sub[i] = -lam * el;
        sup[i] = -lam * eu;
        diag[i] = esq * r_sq_new * (1.0 + params.gamma * dtau) + lam * (el + eu);

        // Upwind advective fluxes at the bounding nodes, old data, zero
        // far-field state beyond the last node.
        let flux_at = |j: usize| -> f64 {
            let w = wc * grid.node_cu(j);
            if w >= 0.0 {
                if j == 0 { 0.0 } else { w * a[j - 1] }
            } else if j == nt {
                0.0
            } else {
                w * a[j]
            }
        };
        let div = (flux_at(i + 1) - flux_at(i)) / d_eta;

        let secretion = if i < grid.n_eta() {
            let g = g_old[i];
            if g > 0.0 {
                params.m_secrete * g / (params.beta_hat + g)
            } else {
                0.0
            }
        } else {
            0.0
        };

        rhs[i] = esq * r_sq_old * a[i] - dtau * div + dtau * esq * (r_sq_old * secretion - geo * a[i]);
    }
    // Odd ghost for A = 0 at eta_max.
    diag[nt - 1] += lam * grid.node_sq(nt);
    sup[nt - 1] = 0.0;

    let solved = solve_tridiagonal(&sub, &diag, &sup, &rhs)?;
    a.copy_from_slice(&solved);
    for (i, v) in a.iter().enumerate() {
        if !v.is_finite() {
            return Err(SolverError::BlowUp {
                tau: f64::NAN,
                what: format!("chemoattractant at interval {i}"),
            });
        }
    }
    Ok(())
}
