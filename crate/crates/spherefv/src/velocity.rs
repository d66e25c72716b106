//! Nodal velocity fields: the incompressibility velocity `V` from the
//! integral constraint, prescribed infiltration velocities `u`, and the
//! chemotactic velocity `U` from the chemoattractant gradient.
//!
//! Species are stored as fractions of the total density `theta`, so the
//! velocity algebra below is written for unit totality; `theta` only enters
//! at input/output boundaries.

use crate::error::SolverError;
use crate::grid::Grid;

/// Running compensated (Kahan) sum. The velocity prefix integral divides by
/// `eta_j^2`, which amplifies rounding near the origin; compensation keeps
/// the prefix error at one ulp independent of length.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Velocity solve of the enhanced scheme.
///
/// `source_sum[i]` holds `(f+g+h)` at interval `i`; `f_u` is the nodal
/// `u`-flux of the infiltrating species. Solves
/// `eta_j^2 R V_j = d_eta * sum_{k<=j} eta_{k-1/2}^2 R^2 (f+g+h)_k - f_u[j]`.
pub fn solve_velocity_enhanced(grid: &Grid, r: f64, source_sum: &[f64], f_u: &[f64]) -> Vec<f64> {
    let n = grid.n_eta();
    debug_assert_eq!(source_sum.len(), n);
    debug_assert_eq!(f_u.len(), n + 1);
    let d_eta = grid.d_eta();
    let r_sq = r * r;
    let mut v = vec![0.0; n + 1];
    let mut acc = Kahan::default();
    for j in 1..=n {
        acc.add(d_eta * grid.center_sq(j - 1) * r_sq * source_sum[j - 1]);
        v[j] = (acc.value() - f_u[j]) / (grid.node_sq(j) * r);
    }
    v
}

/// Velocity solve of the conventional scheme:
/// `V_j = (1/eta_j^2) d_eta sum_{k<=j} eta_{k-1/2}^2 R (f+g+h)_k - U_j M_j`,
/// with `M_j` the mean of the two adjacent interval averages and the last
/// node taking the last interval average.
pub fn solve_velocity_conventional(
    grid: &Grid,
    r: f64,
    source_sum: &[f64],
    nodal_u: &[f64],
    m_field: &[f64],
) -> Vec<f64> {
    let n = grid.n_eta();
    debug_assert_eq!(source_sum.len(), n);
    debug_assert_eq!(m_field.len(), n);
    let d_eta = grid.d_eta();
    let mut v = vec![0.0; n + 1];
    let mut acc = Kahan::default();
    for j in 1..=n {
        acc.add(d_eta * grid.center_sq(j - 1) * r * source_sum[j - 1]);
        let m_node = if j == n { m_field[n - 1] } else { 0.5 * (m_field[j - 1] + m_field[j]) };
        v[j] = acc.value() / grid.node_sq(j) - nodal_u[j] * m_node;
    }
    v
}

/// Samples a prescribed infiltration velocity `u(r, t)` at the nodes of the
/// physical domain; `u_0` is pinned to zero by radial symmetry.
pub fn nodal_u_prescribed(
    u_fn: impl Fn(f64, f64) -> f64,
    grid: &Grid,
    r: f64,
    t: f64,
) -> Result<Vec<f64>, SolverError> {
    let n = grid.n_eta();
    let mut u = vec![0.0; n + 1];
    for j in 1..=n {
        let val = u_fn(grid.node(j) * r, t);
        if !val.is_finite() {
            return Err(SolverError::BlowUp {
                tau: t,
                what: format!("prescribed velocity not finite at node {j}"),
            });
        }
        u[j] = val;
    }
    Ok(u)
}

/// Chemotactic velocity from the averaged chemoattractant field:
/// `U_j = alpha (A_{j+1/2} - A_{j-1/2}) / (d_eta R)`, `U_0 = 0`.
///
/// `a_field` must extend at least one interval past `eta = 1` so the
/// centered difference at the boundary node is available.
pub fn nodal_u_from_chemo(
    a_field: &[f64],
    grid: &Grid,
    r: f64,
    alpha: f64,
) -> Result<Vec<f64>, SolverError> {
    let n = grid.n_eta();
    if a_field.len() < n + 1 {
        return Err(SolverError::Grid(format!(
            "chemoattractant field has {} intervals; need at least {} to difference across eta = 1",
            a_field.len(),
            n + 1
        )));
    }
    let scale = alpha / (grid.d_eta() * r);
    let mut u = vec![0.0; n + 1];
    for j in 1..=n {
        u[j] = scale * (a_field[j] - a_field[j - 1]);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn zero_sources_and_flux_give_zero_velocity() {
        let g = Grid::build(10, 1.0).unwrap();
        let v = solve_velocity_enhanced(&g, 2.0, &vec![0.0; 10], &vec![0.0; 11]);
        assert!(v.iter().all(|&x| x == 0.0));
        let v = solve_velocity_conventional(&g, 2.0, &vec![0.0; 10], &vec![0.0; 11], &vec![1.0; 10]);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn enhanced_solve_recovers_linear_profile_from_u_flux() {
        // With f = h = 0, M = 1 and u_j = -v0 eta_j R the u-flux is
        // -v0 eta_j^3 R^2, so V_j = v0 eta_j R: the exact linear profile.
        let n = 50;
        let g = Grid::build(n, 1.0).unwrap();
        let (v0, r) = (0.5, 1.3);
        let f_u: Vec<f64> = (0..=n).map(|j| -v0 * g.node_cu(j) * r * r).collect();
        let v = solve_velocity_enhanced(&g, r, &vec![0.0; n], &f_u);
        for j in 1..=n {
            assert_relative_eq!(v[j], v0 * g.node(j) * r, max_relative = 1e-13);
        }
    }

    #[test]
    fn enhanced_solve_matches_midpoint_quadrature_oracle() {
        // Independent oracle: accumulate the same integral in plain f64 at
        // higher granularity of assertion, for a smooth source.
        let n = 64;
        let g = Grid::build(n, 1.0).unwrap();
        let r = 0.9;
        let src: Vec<f64> = (0..n).map(|i| (3.1 * g.center(i)).sin() + 0.4).collect();
        let v = solve_velocity_enhanced(&g, r, &src, &vec![0.0; n + 1]);
        let mut acc = 0.0;
        for j in 1..=n {
            acc += g.d_eta() * g.center_sq(j - 1) * r * r * src[j - 1];
            assert_relative_eq!(v[j], acc / (g.node_sq(j) * r), max_relative = 1e-12);
        }
    }

    #[test]
    fn conventional_solve_recovers_linear_profile() {
        let n = 40;
        let g = Grid::build(n, 1.0).unwrap();
        let (v0, r) = (0.5, 1.0);
        let u: Vec<f64> = (0..=n).map(|j| -v0 * g.node(j) * r).collect();
        let v = solve_velocity_conventional(&g, r, &vec![0.0; n], &u, &vec![1.0; n]);
        for j in 1..=n {
            assert_relative_eq!(v[j], v0 * g.node(j), max_relative = 1e-13);
        }
    }

    #[test]
    fn velocity_solvers_are_linear_in_sources() {
        let n = 16;
        let g = Grid::build(n, 1.0).unwrap();
        let r = 1.4;
        let s1: Vec<f64> = (0..n).map(|i| (i as f64 * 0.77).sin()).collect();
        let s2: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos() - 0.2).collect();
        let sum: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + b).collect();
        let zero_flux = vec![0.0; n + 1];
        let va = solve_velocity_enhanced(&g, r, &s1, &zero_flux);
        let vb = solve_velocity_enhanced(&g, r, &s2, &zero_flux);
        let vc = solve_velocity_enhanced(&g, r, &sum, &zero_flux);
        for j in 0..=n {
            assert_abs_diff_eq!(va[j] + vb[j], vc[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn prescribed_u_is_zero_at_origin_and_sampled_in_physical_coords() {
        let g = Grid::build(8, 1.0).unwrap();
        let u = nodal_u_prescribed(|r, t| 0.5 * (r * (1.0 + t)).sin(), &g, 1.0, 0.0).unwrap();
        assert_eq!(u[0], 0.0);
        assert_relative_eq!(u[8], 0.5 * 1.0f64.sin(), max_relative = 1e-15);
    }

    #[test]
    fn chemo_velocity_differences_across_boundary_node() {
        let n = 10;
        let g = Grid::build(n, 2.0).unwrap();
        // Linear field A = c eta: exact unit gradient after scaling.
        let c = 3.0;
        let a: Vec<f64> = (0..g.n_tot()).map(|i| c * g.center(i)).collect();
        let u = nodal_u_from_chemo(&a, &g, 1.0, 1.0).unwrap();
        assert_eq!(u[0], 0.0);
        for j in 1..=n {
            assert_relative_eq!(u[j], c, max_relative = 1e-12);
        }
        // Constant field: zero velocity.
        let a = vec![7.0; g.n_tot()];
        let u = nodal_u_from_chemo(&a, &g, 2.0, 0.6).unwrap();
        assert!(u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn chemo_velocity_requires_an_exterior_interval() {
        let g = Grid::build(10, 1.0).unwrap();
        assert!(nodal_u_from_chemo(&vec![1.0; 10], &g, 1.0, 1.0).is_err());
    }
}
