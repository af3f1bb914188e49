//! Pointwise Hermitian eigensolvers for the small matrices living at each
//! grid point. Dimensions 1 and 2 use closed forms; larger ones go through
//! nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Eigen-decomposition of a Hermitian `n×n` matrix given row-major.
///
/// Eigenvalues come back ascending; `vectors` is row-major with column `a`
/// holding the unit eigenvector of `values[a]`.
pub fn hermitian_eigen(n: usize, a: &[Complex64], values: &mut [f64], vectors: &mut [Complex64]) {
    debug_assert_eq!(a.len(), n * n);
    match n {
        1 => {
            values[0] = a[0].re;
            vectors[0] = Complex64::new(1.0, 0.0);
        }
        2 => eigen2(a, values, vectors),
        _ => eigen_general(n, a, values, vectors),
    }
}

fn eigen2(a: &[Complex64], values: &mut [f64], vectors: &mut [Complex64]) {
    let (p, c, d) = (a[0].re, a[1], a[3].re);
    let mean = 0.5 * (p + d);
    let half = 0.5 * (p - d);
    let r = half.hypot(c.norm());
    values[0] = mean - r;
    values[1] = mean + r;
    if r == 0.0 {
        vectors.copy_from_slice(&[
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ]);
        return;
    }
    // eigenvector of the larger eigenvalue, picking the better-conditioned form
    let (x, y) = if half >= 0.0 {
        (Complex64::new(half + r, 0.0), c.conj())
    } else {
        (c, Complex64::new(r - half, 0.0))
    };
    let scale = x.norm().max(y.norm());
    let (x, y) = (x / scale, y / scale);
    let norm = (x.norm_sqr() + y.norm_sqr()).sqrt();
    let (x, y) = (x / norm, y / norm);
    // columns: (-ȳ, x̄) for the smaller eigenvalue, (x, y) for the larger
    vectors[0] = -y.conj();
    vectors[2] = x.conj();
    vectors[1] = x;
    vectors[3] = y;
}

fn eigen_general(n: usize, a: &[Complex64], values: &mut [f64], vectors: &mut [Complex64]) {
    let m = DMatrix::from_row_slice(n, n, a);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    for (col, &src) in order.iter().enumerate() {
        values[col] = eig.eigenvalues[src];
        for row in 0..n {
            vectors[row * n + col] = eig.eigenvectors[(row, src)];
        }
    }
}

/// Cholesky factor `L` (row-major, lower) of a Hermitian positive-definite matrix.
pub fn cholesky(n: usize, a: &[Complex64]) -> Option<Vec<Complex64>> {
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            if i == j {
                if !(s.re > 0.0) || s.im.abs() > 1e-12 * s.re.abs().max(1.0) {
                    return None;
                }
                l[i * n + i] = Complex64::new(s.re.sqrt(), 0.0);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Inverse of a lower-triangular matrix (row-major).
pub fn lower_inverse(n: usize, l: &[Complex64]) -> Vec<Complex64> {
    let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
    for col in 0..n {
        inv[col * n + col] = l[col * n + col].inv();
        for row in col + 1..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in col..row {
                s += l[row * n + k] * inv[k * n + col];
            }
            inv[row * n + col] = -s / l[row * n + row];
        }
    }
    inv
}

/// `C = A·B` for row-major square matrices.
pub fn matmul(n: usize, a: &[Complex64], b: &[Complex64], c: &mut [Complex64]) {
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            c[i * n + j] = s;
        }
    }
}

/// Conjugate transpose.
pub fn adjoint(n: usize, a: &[Complex64]) -> Vec<Complex64> {
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j].conj();
        }
    }
    t
}
