//! Error metrics and constraint diagnostics: the incompressibility index
//! `d_theta`, L1 errors in the normalized coordinate, convergence-rate
//! tables, and the growth-consistency residual.

use crate::grid::{Grid, RadiusState};

/// Incompressibility violation index
/// `d_theta = (R / N_eta) * sum_j |sum_fields X_{j-1/2} - theta|`.
///
/// Fields are fractions, so callers pass `theta = 1`. Adding a constant `c`
/// to one field of an exactly normalized state raises the index by `R*c`.
pub fn incompressibility_index(fields: &[Vec<f64>], r: f64, grid: &Grid, theta: f64) -> f64 {
    let n = grid.n_eta();
    let mut acc = 0.0;
    for i in 0..n {
        let total: f64 = fields.iter().map(|f| f[i]).sum();
        acc += (total - theta).abs();
    }
    r * acc / n as f64
}

/// `L1` error in the normalized coordinate:
/// `sum_j d_eta * |X_{j-1/2} - exact(eta_{j-1/2})|`.
pub fn l1_error(field: &[f64], exact_fn: impl Fn(f64) -> f64, grid: &Grid) -> f64 {
    let d_eta = grid.d_eta();
    field
        .iter()
        .enumerate()
        .map(|(i, x)| d_eta * (x - exact_fn(grid.center(i))).abs())
        .sum()
}

/// One line of a refinement table.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub n_eta: usize,
    pub error: f64,
    /// `log2(|e_prev| / |e|)`; absent on the first row and when either
    /// error vanishes or is not finite.
    pub rate: Option<f64>,
}

/// Turns an ordered `(n_eta, error)` sequence into rows with dyadic rates.
pub fn convergence_rates(errors: &[(usize, f64)]) -> Vec<ConvergenceRow> {
    let mut rows = Vec::with_capacity(errors.len());
    for (k, &(n_eta, error)) in errors.iter().enumerate() {
        let rate = if k == 0 {
            None
        } else {
            let prev = errors[k - 1].1;
            if prev.abs() > 0.0 && error.abs() > 0.0 && prev.is_finite() && error.is_finite() {
                Some((prev.abs() / error.abs()).log2())
            } else {
                None
            }
        };
        rows.push(ConvergenceRow { n_eta, error, rate });
    }
    rows
}

/// Growth-consistency residual `R'^n + u(R^n, tau^n) * M_check^n` per
/// history entry, where `M_check` is the boundary density feeding the
/// growth law (incoming value when `u < 0`, interior trace otherwise).
/// Purely diagnostic; the solver never feeds it back.
pub fn growth_consistency(
    history: &[(f64, RadiusState)],
    u_fn: impl Fn(f64, f64) -> f64,
    m_check: &[f64],
) -> Vec<f64> {
    debug_assert_eq!(history.len(), m_check.len());
    history
        .iter()
        .zip(m_check)
        .map(|(&(tau, radius), &m)| radius.r_prime + u_fn(radius.r, tau) * m)
        .collect()
}
