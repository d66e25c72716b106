//! Numerical flux functions.
//!
//! Two families are provided:
//!
//! * Conventional fluxes: one combined flux per species acting on the
//!   conservative data `eta^2 R^2 X` with the face velocity
//!   `V_j/R - eta_j R'/R` (plus `u_j/R` for the infiltrating species),
//!   either first-order upwind or MUSCL with per-species minmod limiters.
//! * Segregated fluxes for the enhanced scheme: `F_V` and `F_u` act on the
//!   primitive interval averages with upwind or MUSCL reconstruction and
//!   limiters synchronized across all species so that the fluxes stay
//!   additive, while `F_{R'}` is a cubic-preserving flux built from a
//!   monotone parabolic reconstruction of the `eta^3`-weighted data.
//!
//! Nodes are indexed `0..=n` and intervals `0..n`; interval `i` spans nodes
//! `[i, i+1]`. All functions are pure.

use crate::grid::Grid;

/// First-order upwind flux: `w * xl` if `w >= 0`, else `w * xr`.
#[inline]
pub fn upwind(w: f64, xl: f64, xr: f64) -> f64 {
    if w >= 0.0 {
        w * xl
    } else {
        w * xr
    }
}

/// Minmod slope limiter expressed as a ratio in `[0, 1]`:
/// `0` if the two slopes oppose (or either vanishes), else `min(dz_prev/dz, 1)`.
#[inline]
pub fn minmod(dz_prev: f64, dz: f64) -> f64 {
    if dz_prev * dz <= 0.0 {
        0.0
    } else {
        (dz_prev / dz).min(1.0)
    }
}

/// Per-interval minmod limiters for one data array.
///
/// `phi[i] = minmod(x[i] - x[i-1], x[i+1] - x[i])`; the first and last
/// intervals lack a neighbor and get `phi = 0`, which reduces the MUSCL
/// reconstruction there to the plain interval average.
pub fn muscl_limiters(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut phi = vec![0.0; n];
    for i in 1..n.saturating_sub(1) {
        phi[i] = minmod(x[i] - x[i - 1], x[i + 1] - x[i]);
    }
    phi
}

/// Synchronized MUSCL limiters: the pointwise minimum of [`muscl_limiters`]
/// over all fields, so that reconstructions stay linear across species.
pub fn sync_muscl_limiters(fields: &[&[f64]]) -> Vec<f64> {
    assert!(!fields.is_empty(), "sync_muscl_limiters needs at least one field");
    let mut phi = muscl_limiters(fields[0]);
    for f in &fields[1..] {
        for (p, q) in phi.iter_mut().zip(muscl_limiters(f)) {
            *p = p.min(q);
        }
    }
    phi
}

/// MUSCL-reconstructed pair of states at node `j` (`1 <= j <= n-1`) for data
/// `x` and per-interval limiters `phi`.
///
/// Left state comes from interval `j-1`, right state from interval `j`. The
/// boundary-interval convention `phi = 0` makes the right state at node
/// `n-1` the unreconstructed average of the last interval.
#[inline]
fn muscl_states(x: &[f64], phi: &[f64], j: usize) -> (f64, f64) {
    let n = x.len();
    let left = x[j - 1] + 0.5 * phi[j - 1] * (x[j] - x[j - 1]);
    let fwd = if j + 1 < n { x[j + 1] - x[j] } else { 0.0 };
    let right = x[j] - 0.5 * phi[j] * fwd;
    (left, right)
}

/// Face states at node `j` for the requested order: plain interval averages
/// (order 1) or MUSCL-reconstructed values (order 2).
#[inline]
fn face_states(x: &[f64], phi: Option<&[f64]>, j: usize) -> (f64, f64) {
    match phi {
        None => (x[j - 1], x[j]),
        Some(phi) => muscl_states(x, phi, j),
    }
}

/// Segregated `V`-flux for one species on the primitive interval averages:
/// `F_{V,j} = eta_j^2 R^2 * upwind(V_j/R; X_l, X_r)`.
///
/// `phi` selects first-order (`None`) or MUSCL (`Some`) reconstruction; the
/// limiters must be shared across species for additivity. Both boundary
/// fluxes are zero: `eta_0 = 0` and the moving-boundary identity cancels the
/// node-`n` flux against the `R'`-flux.
pub fn enhanced_v_flux(x: &[f64], nodal_v: &[f64], grid: &Grid, r: f64, phi: Option<&[f64]>) -> Vec<f64> {
    let n = grid.n_eta();
    debug_assert_eq!(x.len(), n);
    debug_assert!(nodal_v.len() >= n + 1);
    let r_sq = r * r;
    let mut f = vec![0.0; n + 1];
    for j in 1..n {
        let (xl, xr) = face_states(x, phi, j);
        f[j] = grid.node_sq(j) * r_sq * upwind(nodal_v[j] / r, xl, xr);
    }
    f
}

/// Segregated `u`-flux for the infiltrating species.
///
/// Interior nodes follow the same construction as [`enhanced_v_flux`] with
/// velocity `u_j/R`. At node `n` the flux is always the first-order upwind
/// form with the environmental value `m_bc` as the right state, regardless
/// of the interior order.
pub fn enhanced_u_flux(
    m: &[f64],
    nodal_u: &[f64],
    grid: &Grid,
    r: f64,
    phi: Option<&[f64]>,
    m_bc: f64,
) -> Vec<f64> {
    let n = grid.n_eta();
    debug_assert_eq!(m.len(), n);
    let r_sq = r * r;
    let mut f = vec![0.0; n + 1];
    for j in 1..n {
        let (ml, mr) = face_states(m, phi, j);
        f[j] = grid.node_sq(j) * r_sq * upwind(nodal_u[j] / r, ml, mr);
    }
    f[n] = r_sq * upwind(nodal_u[n] / r, m[n - 1], m_bc);
    f
}

// ---------------------------------------------------------------------------
// Cubic-preserving R'-flux: parabolic reconstruction of eta^3-weighted data.
// ---------------------------------------------------------------------------

/// `eta^3`-weighted cell data for the `R'`-flux: `xbar[i] = center(i)^3 * x[i]`.
pub fn eta3_weighted(x: &[f64], grid: &Grid) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            let c = grid.center(i);
            c * c * c * v
        })
        .collect()
}

/// Third-order face interpolants `Xbar_k`, `k = 0..=n`, of cell data `xbar`.
///
/// Interior faces use the standard four-cell average; the origin face value
/// is identically zero and face 1 uses the modified origin stencil; face
/// `n-1` uses a biased stencil and face `n` an extrapolation that only
/// feeds the limiter of the last interval.
pub fn ppm_face_values(xbar: &[f64], n: usize) -> Vec<f64> {
    assert!(n >= 4, "parabolic face interpolation needs at least 4 intervals");
    debug_assert!(xbar.len() >= n);
    let mut fv = vec![0.0; n + 1];
    fv[1] = (7.0 / 12.0) * (xbar[0] + xbar[1]) - (1.0 / 12.0) * (xbar[2] - xbar[0]);
    for k in 2..=n - 2 {
        fv[k] = (7.0 / 12.0) * (xbar[k - 1] + xbar[k]) - (1.0 / 12.0) * (xbar[k - 2] + xbar[k + 1]);
    }
    fv[n - 1] =
        (3.0 * xbar[n - 1] + 13.0 * xbar[n - 2] - 5.0 * xbar[n - 3] + xbar[n - 4]) / 12.0;
    fv[n] =
        (25.0 * xbar[n - 1] - 23.0 * xbar[n - 2] + 13.0 * xbar[n - 3] - 3.0 * xbar[n - 4]) / 12.0;
    fv
}

/// Edge limiters `(phi_minus, phi_plus)` per interval, synchronized across
/// all fields so the reconstructed edge values stay linear in the data.
///
/// `fields[s]` is the weighted cell data of species `s` and `faces[s]` its
/// interpolants from [`ppm_face_values`]. A single field reduces exactly to
/// the unsynchronized casework. `phi_minus[0]` is unused (the origin-side
/// edge of the first interval is pinned to zero) and stored as 0.
pub fn ppm_limiters(fields: &[&[f64]], faces: &[Vec<f64>], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(!fields.is_empty(), "ppm_limiters needs at least one field");
    let mut phi_m = vec![0.0; n];
    let mut phi_p = vec![0.0; n];

    // First interval: only the right edge is limited. The reconstruction is
    // cubic through the origin, so the usual extremum casework is replaced
    // by conditions on the ratio Xbar_1 / Xbar_{1/2}.
    let mut flat = false;
    let mut p = f64::INFINITY;
    for (xb, fv) in fields.iter().zip(faces) {
        let cell = xb[0];
        let face = fv[1];
        // A species that is exactly zero here has phi-independent edges and
        // must not constrain the shared limiter.
        if cell == 0.0 && face == 0.0 {
            continue;
        }
        if cell * face <= 0.0 || 3.0 * face.abs() <= 8.0 * cell.abs() {
            flat = true;
            break;
        }
        p = p.min(5.0 / (face / cell - 1.0));
    }
    phi_p[0] = if flat { 0.0 } else { p.min(1.0) };

    for i in 1..n {
        // Any-species local extremum zeroes both edges.
        let mut extremum = false;
        let mut a1 = f64::INFINITY;
        let mut a2: f64 = 0.0;
        for (xb, fv) in fields.iter().zip(faces) {
            let dm = fv[i] - xb[i];
            let dp = fv[i + 1] - xb[i];
            // Locally vanished species: edges equal the mean for any phi, so
            // it carries no monotonicity constraint.
            if dm == 0.0 && dp == 0.0 {
                continue;
            }
            if dp * dm >= 0.0 {
                extremum = true;
                break;
            }
            a1 = a1.min(2.0 * dm.abs() / dp.abs());
            a2 = a2.max(dm.abs() / (2.0 * dp.abs()));
        }
        if extremum || a2 > a1 {
            continue;
        }
        if a1 < 1.0 {
            phi_m[i] = 1.0;
            phi_p[i] = a1;
        } else if a2 > 1.0 {
            phi_m[i] = 1.0 / a2;
            phi_p[i] = 1.0;
        } else {
            phi_m[i] = 1.0;
            phi_p[i] = 1.0;
        }
    }
    (phi_m, phi_p)
}

/// Limited edge values of the weighted reconstruction on interval `i`:
/// origin-side `xbar[i] + phi_minus (face_left - xbar[i])` and
/// boundary-side `xbar[i] + phi_plus (face_right - xbar[i])`.
#[inline]
fn ppm_edges(xbar: &[f64], fv: &[f64], phi_m: &[f64], phi_p: &[f64], i: usize) -> (f64, f64) {
    let minus = xbar[i] + phi_m[i] * (fv[i] - xbar[i]);
    let plus = xbar[i] + phi_p[i] * (fv[i + 1] - xbar[i]);
    (minus, plus)
}

/// Cubic-preserving `R'`-flux `F_{R',j} = upwind(-R'R; edge_+, edge_-)` of
/// one species, with both boundary fluxes hard-set to zero.
///
/// The returned `virtual_boundary` is the node-`n` value the interior
/// formula would produce; it is exactly cancelled by the `V`-flux under the
/// geometry-compatible rate rule, which is why the stored flux is zero. It
/// is exposed for conservation checks.
pub struct RprimeFlux {
    pub f: Vec<f64>,
    pub virtual_boundary: f64,
}

pub fn rprime_flux(
    xbar: &[f64],
    fv: &[f64],
    phi_m: &[f64],
    phi_p: &[f64],
    n: usize,
    r: f64,
    r_prime: f64,
) -> RprimeFlux {
    let w = -r_prime * r;
    let mut f = vec![0.0; n + 1];
    for j in 1..n {
        let (_, plus_left) = ppm_edges(xbar, fv, phi_m, phi_p, j - 1);
        let (minus_right, _) = ppm_edges(xbar, fv, phi_m, phi_p, j);
        f[j] = upwind(w, plus_left, minus_right);
    }
    let (_, plus_last) = ppm_edges(xbar, fv, phi_m, phi_p, n - 1);
    RprimeFlux { f, virtual_boundary: w * plus_last }
}

// ---------------------------------------------------------------------------
// Conventional combined fluxes on conservative data.
// ---------------------------------------------------------------------------

/// Combined conventional flux for one species on conservative data
/// `cons[i] = center(i)^2 R^2 x[i]`, with face velocity
/// `(V_j - eta_j R') / R` plus `u_j / R` when `nodal_u` is given.
///
/// `phi` carries this species' own minmod limiters on the conservative data
/// (`None` for first order). At node `n` the `V - eta R'` part vanishes
/// identically when `r_prime = V_n`; the remaining `u` transport uses the
/// environmental value `m_bc` (conservatively weighted by `eta_n^2 = 1`)
/// as the right state.
#[allow(clippy::too_many_arguments)]
pub fn conventional_flux(
    cons: &[f64],
    nodal_v: &[f64],
    nodal_u: Option<&[f64]>,
    grid: &Grid,
    r: f64,
    r_prime: f64,
    phi: Option<&[f64]>,
    m_bc_cons: f64,
) -> Vec<f64> {
    let n = grid.n_eta();
    let mut f = vec![0.0; n + 1];
    for j in 1..n {
        let mut w = (nodal_v[j] - grid.node(j) * r_prime) / r;
        if let Some(u) = nodal_u {
            w += u[j] / r;
        }
        let (xl, xr) = face_states(cons, phi, j);
        f[j] = upwind(w, xl, xr);
    }
    let mut w = (nodal_v[n] - r_prime) / r;
    if let Some(u) = nodal_u {
        w += u[n] / r;
    }
    let xl = cons[n - 1];
    f[n] = upwind(w, xl, m_bc_cons);
    f
}
