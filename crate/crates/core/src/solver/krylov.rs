//! Linear algebra kernels for the Newton solvers.

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOutcome {
    pub iterations: usize,
    /// `‖b - Ax‖ / ‖b‖` at exit.
    pub relative_residual: f64,
}

/// Restarted GMRES with right preconditioning, started from `x = 0`.
///
/// `apply(v, out)` computes `A v`; `precondition(v, out)` computes `M v`
/// with `M ≈ A⁻¹`.
pub fn gmres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precondition: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    restart: usize,
    max_iterations: usize,
) -> GmresOutcome {
    let dim = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return GmresOutcome {
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let restart = restart.max(1);
    let mut total = 0;
    let mut r = b.to_vec();
    let mut work = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    loop {
        if total > 0 {
            apply(x, &mut work);
            r.iter_mut().zip(b).zip(&work).for_each(|((r, b), w)| *r = b - w);
        }
        let beta = norm(&r);
        if beta <= rtol * bnorm || total >= max_iterations {
            return GmresOutcome {
                iterations: total,
                relative_residual: beta / bnorm,
            };
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        for j in 0..restart {
            precondition(&basis[j], &mut z);
            let mut w = vec![0.0; dim];
            apply(&z, &mut w);
            let mut col = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                w.iter_mut().zip(v).for_each(|(w, v)| *w -= hij * v);
            }
            let wnorm = norm(&w);
            col[j + 1] = wnorm;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[j].hypot(col[j + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[j] / denom, col[j + 1] / denom) };
            col[j] = denom;
            col[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[j]);
            g[j] *= c;
            h.push(col);
            total += 1;
            let resid = g[j + 1].abs();
            let breakdown = wnorm <= 1e-300;
            if resid <= rtol * bnorm || breakdown || total >= max_iterations || j + 1 == restart {
                break;
            }
            basis.push(w.iter().map(|v| v / wnorm).collect());
        }
        // back substitution
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                s -= h[l][i] * yl;
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        work.iter_mut().for_each(|v| *v = 0.0);
        for (yi, v) in y.iter().zip(&basis) {
            work.iter_mut().zip(v).for_each(|(w, v)| *w += yi * v);
        }
        precondition(&work, &mut z);
        x.iter_mut().zip(&z).for_each(|(x, z)| *x += z);
        // the next pass recomputes the true residual and decides
    }
}

/// Solves a tridiagonal system by the Thomas algorithm. `lower[0]` and
/// `upper[m-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(Error::LinearSolveFailure("zero pivot in tridiagonal solve at row 0".into()));
    }
    c[0] = upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..m {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::LinearSolveFailure(format!(
                "zero pivot in tridiagonal solve at row {i}"
            )));
        }
        c[i] = if i + 1 < m { upper[i] / pivot } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / pivot;
    }
    for i in (0..m - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        // A = tridiag(-1, 4, -2), unpreconditioned and Jacobi-preconditioned
        let m = 200;
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..m {
                let mut s = 4.0 * v[i];
                if i > 0 {
                    s -= v[i - 1];
                }
                if i + 1 < m {
                    s -= 2.0 * v[i + 1];
                }
                out[i] = s;
            }
        };
        let b: Vec<f64> = (0..m).map(|i| (i as f64 * 0.1).sin()).collect();
        for jacobi in [false, true] {
            let mut x = vec![0.0; m];
            let out = gmres(
                apply,
                |v: &[f64], o: &mut [f64]| {
                    let s = if jacobi { 0.25 } else { 1.0 };
                    o.iter_mut().zip(v).for_each(|(o, v)| *o = s * v);
                },
                &b,
                &mut x,
                1e-12,
                15,
                500,
            );
            let mut ax = vec![0.0; m];
            apply(&x, &mut ax);
            let err = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{err} {out:?}");
        }
    }

    #[test]
    fn thomas_matches_dense() {
        let lower = [0.0, 1.0, -2.0, 0.5];
        let diag = [3.0, 5.0, 4.0, 2.0];
        let upper = [1.0, 0.5, 1.0, 0.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..4 {
            let mut s = diag[i] * x[i];
            if i > 0 {
                s += lower[i] * x[i - 1];
            }
            if i < 3 {
                s += upper[i] * x[i + 1];
            }
            assert!((s - rhs[i]).abs() < 1e-14);
        }
    }
}
