//! Small direct solvers for the banded systems assembled by the schemes.
//!
//! Both systems here are tiny and strongly structured: a scalar tridiagonal
//! matrix for the reaction-diffusion field and a block-tridiagonal matrix
//! with diagonal coupling blocks for the implicit species update. The
//! off-diagonal blocks of the latter are themselves diagonal (advection does
//! not mix species), so the block elimination only ever factors the
//! species-coupling blocks on the main diagonal.

use crate::error::SolverError;

/// Thomas elimination for a scalar tridiagonal system.
///
/// All slices have the same length; `sub[i]` multiplies `x[i-1]` in row `i`
/// (entry 0 unused) and `sup[i]` multiplies `x[i+1]` (last entry unused).
pub(crate) fn solve_tridiagonal(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let n = diag.len();
    debug_assert!(n > 0 && sub.len() == n && sup.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 || !piv.is_finite() {
        return Err(SolverError::Numerical("tridiagonal pivot vanished".into()));
    }
    c[0] = sup[0] / piv;
    x[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return Err(SolverError::Numerical("tridiagonal pivot vanished".into()));
        }
        c[i] = sup[i] / piv;
        x[i] = (rhs[i] - sub[i] * x[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Block-tridiagonal elimination with `s x s` diagonal blocks and diagonal
/// off-diagonal blocks.
///
/// Row-major layout: `diag[i*s*s..]` is the coupling block of block-row `i`,
/// `sub[i*s + k]` the coefficient on unknown `(i-1, k)` in row `(i, k)`, and
/// `sup[i*s + k]` the coefficient on `(i+1, k)`. Unused first/last entries
/// of `sub`/`sup` must be zero.
pub(crate) fn solve_block_tridiagonal(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
    s: usize,
) -> Result<Vec<f64>, SolverError> {
    let n = rhs.len() / s;
    debug_assert!(s > 0 && rhs.len() == n * s);
    debug_assert!(sub.len() == n * s && sup.len() == n * s && diag.len() == n * s * s);
    let ss = s * s;
    // w[i] = D_i'^{-1} * diag(sup_i), y[i] = D_i'^{-1} * rhs_i'.
    let mut w = vec![0.0; n * ss];
    let mut y = vec![0.0; n * s];
    let mut block = vec![0.0; ss];
    let mut piv = vec![0usize; s];
    let mut col = vec![0.0; s];

    for i in 0..n {
        block.copy_from_slice(&diag[i * ss..(i + 1) * ss]);
        if i > 0 {
            // D_i' = D_i - diag(sub_i) * W_{i-1}: scale row k of W by sub_{i,k}.
            for k in 0..s {
                let f = sub[i * s + k];
                if f != 0.0 {
                    for l in 0..s {
                        block[k * s + l] -= f * w[(i - 1) * ss + k * s + l];
                    }
                }
            }
        }
        lu_factor(&mut block, s, &mut piv)?;

        // rhs_i' = rhs_i - diag(sub_i) * y_{i-1}.
        for k in 0..s {
            let mut v = rhs[i * s + k];
            if i > 0 {
                v -= sub[i * s + k] * y[(i - 1) * s + k];
            }
            col[k] = v;
        }
        lu_solve(&block, s, &piv, &mut col);
        y[i * s..(i + 1) * s].copy_from_slice(&col);

        if i + 1 < n {
            // W_i columns: solve D_i' w = e_l * sup_{i,l}.
            for l in 0..s {
                for (k, c) in col.iter_mut().enumerate() {
                    *c = if k == l { sup[i * s + l] } else { 0.0 };
                }
                lu_solve(&block, s, &piv, &mut col);
                for k in 0..s {
                    w[i * ss + k * s + l] = col[k];
                }
            }
        }
    }

    // Back substitution: x_i = y_i - W_i x_{i+1}.
    let mut x = y;
    for i in (0..n - 1).rev() {
        for k in 0..s {
            let mut v = x[i * s + k];
            for l in 0..s {
                v -= w[i * ss + k * s + l] * x[(i + 1) * s + l];
            }
            x[i * s + k] = v;
        }
    }
    Ok(x)
}

/// In-place LU factorization with partial pivoting of an `s x s` row-major
/// matrix; `piv[c]` records the row swapped into position `c`.
fn lu_factor(a: &mut [f64], s: usize, piv: &mut [usize]) -> Result<(), SolverError> {
    for c in 0..s {
        let mut best = c;
        let mut mag = a[c * s + c].abs();
        for r in c + 1..s {
            let v = a[r * s + c].abs();
            if v > mag {
                best = r;
                mag = v;
            }
        }
        if mag == 0.0 || !mag.is_finite() {
            return Err(SolverError::Numerical("singular coupling block".into()));
        }
        piv[c] = best;
        if best != c {
            for l in 0..s {
                a.swap(c * s + l, best * s + l);
            }
        }
        let inv = 1.0 / a[c * s + c];
        for r in c + 1..s {
            let f = a[r * s + c] * inv;
            a[r * s + c] = f;
            for l in c + 1..s {
                a[r * s + l] -= f * a[c * s + l];
            }
        }
    }
    Ok(())
}

/// Solves `A x = b` in place given the factorization from [`lu_factor`].
fn lu_solve(a: &[f64], s: usize, piv: &[usize], b: &mut [f64]) {
    for c in 0..s {
        if piv[c] != c {
            b.swap(c, piv[c]);
        }
        for r in c + 1..s {
            b[r] -= a[r * s + c] * b[c];
        }
    }
    for r in (0..s).rev() {
        let mut v = b[r];
        for c in r + 1..s {
            v -= a[r * s + c] * b[c];
        }
        b[r] = v / a[r * s + r];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_reproduces_hand_solution() {
        // [2 1 0; 1 3 1; 0 1 2] x = [3; 10; 9] has x = [1/2; 2; 7/2].
        let x = solve_tridiagonal(
            &[0.0, 1.0, 1.0],
            &[2.0, 3.0, 2.0],
            &[1.0, 1.0, 0.0],
            &[3.0, 10.0, 9.0],
        )
        .unwrap();
        let expect = [0.5, 2.0, 3.5];
        for (a, b) in x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn block_solve_with_unit_species_matches_scalar_thomas() {
        let sub = [0.0, -0.4, 0.3, -0.1];
        let diag = [2.0, 2.5, 1.8, 2.2];
        let sup = [0.7, -0.2, 0.5, 0.0];
        let rhs = [1.0, -2.0, 0.5, 3.0];
        let scalar = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        let block = solve_block_tridiagonal(&sub, &diag, &sup, &rhs, 1).unwrap();
        for (a, b) in scalar.iter().zip(&block) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn block_solve_residual_vanishes_for_coupled_blocks() {
        // Three block rows of two species with deterministic coefficients.
        let n = 3;
        let s = 2;
        let mut sub = vec![0.0; n * s];
        let mut sup = vec![0.0; n * s];
        let mut diag = vec![0.0; n * s * s];
        let mut rhs = vec![0.0; n * s];
        for i in 0..n {
            for k in 0..s {
                if i > 0 {
                    sub[i * s + k] = -0.3 - 0.1 * (i + k) as f64;
                }
                if i + 1 < n {
                    sup[i * s + k] = 0.2 + 0.05 * (i * s + k) as f64;
                }
                rhs[i * s + k] = 1.0 + (i * s + k) as f64;
                for l in 0..s {
                    diag[i * s * s + k * s + l] = if k == l {
                        3.0 + i as f64
                    } else {
                        0.4 - 0.1 * i as f64
                    };
                }
            }
        }
        let x = solve_block_tridiagonal(&sub, &diag, &sup, &rhs, s).unwrap();
        // Multiply back and compare against the right-hand side.
        for i in 0..n {
            for k in 0..s {
                let mut v = 0.0;
                for l in 0..s {
                    v += diag[i * s * s + k * s + l] * x[i * s + l];
                }
                if i > 0 {
                    v += sub[i * s + k] * x[(i - 1) * s + k];
                }
                if i + 1 < n {
                    v += sup[i * s + k] * x[(i + 1) * s + k];
                }
                assert!(
                    (v - rhs[i * s + k]).abs() <= 1e-13,
                    "row ({i},{k}): {v} vs {}",
                    rhs[i * s + k]
                );
            }
        }
    }

    #[test]
    fn singular_systems_are_rejected() {
        assert!(solve_tridiagonal(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]).is_err());
        let res = solve_block_tridiagonal(&[0.0], &[0.0], &[0.0], &[1.0], 1);
        assert!(res.is_err());
    }
}
