//! Fourier differentiation on the flat torus `ℂⁿ/(ℤ+iℤ)ⁿ`.
//!
//! Grid axes are ordered `(x_1, y_1, ..., x_n, y_n)` with the last axis
//! fastest; every axis has period one and `p` points.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub struct TorusSpectral {
    n: usize,
    p: usize,
    dims: usize,
    shift: u32,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// First-derivative wavenumbers `2πm`, Nyquist zeroed.
    k1: Vec<f64>,
    /// Second-derivative symbol `-(2πm)²`, Nyquist kept.
    k2: Vec<f64>,
}

impl std::fmt::Debug for TorusSpectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusSpectral")
            .field("n", &self.n)
            .field("p", &self.p)
            .finish()
    }
}

impl TorusSpectral {
    /// `p` must be a power of two (checked by the caller).
    pub fn new(n: usize, p: usize) -> Self {
        let mut planner = FftPlanner::new();
        let k1 = (0..p)
            .map(|q| {
                if 2 * q == p {
                    0.0
                } else {
                    2.0 * PI * signed_mode(q, p) as f64
                }
            })
            .collect();
        let k2 = (0..p)
            .map(|q| {
                let m = if 2 * q == p { (p / 2) as f64 } else { signed_mode(q, p) as f64 };
                -(2.0 * PI * m).powi(2)
            })
            .collect();
        Self {
            n,
            p,
            dims: 2 * n,
            shift: p.trailing_zeros(),
            forward: planner.plan_fft_forward(p),
            inverse: planner.plan_fft_inverse(p),
            k1,
            k2,
        }
    }

    pub fn npts(&self) -> usize {
        self.p.pow(self.dims as u32)
    }

    #[inline]
    fn digit(&self, idx: usize, axis: usize) -> usize {
        (idx >> (self.shift as usize * (self.dims - 1 - axis))) & (self.p - 1)
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let p = self.p;
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        // last axis is contiguous
        plan.process_with_scratch(data, &mut scratch);
        let mut stride = p;
        let mut buf = Vec::new();
        for _ in 1..self.dims {
            let block = stride * p;
            buf.resize(block, ZERO);
            for start in (0..data.len()).step_by(block) {
                let chunk = &mut data[start..start + block];
                for r in 0..stride {
                    for q in 0..p {
                        buf[r * p + q] = chunk[r + q * stride];
                    }
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for r in 0..stride {
                    for q in 0..p {
                        chunk[r + q * stride] = buf[r * p + q];
                    }
                }
            }
            stride = block;
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Normalised inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn spectrum(&self, u: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    /// Spectrum of `u - mean(u)`. Derivatives annihilate constants, and
    /// removing a large mean first keeps its rounding out of the other modes.
    fn centred_spectrum(&self, u: &[f64]) -> Vec<Complex64> {
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        let mut data: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    /// Symbol of `∂_i ∂̄_j` at spectral index `idx`.
    #[inline]
    pub fn ddbar_symbol(&self, idx: usize, i: usize, j: usize) -> Complex64 {
        if i == j {
            let kx = self.k2[self.digit(idx, 2 * i)];
            let ky = self.k2[self.digit(idx, 2 * i + 1)];
            Complex64::new(0.25 * (kx + ky), 0.0)
        } else {
            let ax = self.k1[self.digit(idx, 2 * i)];
            let ay = self.k1[self.digit(idx, 2 * i + 1)];
            let bx = self.k1[self.digit(idx, 2 * j)];
            let by = self.k1[self.digit(idx, 2 * j + 1)];
            Complex64::new(-0.25 * (ax * bx + ay * by), 0.25 * (ay * bx - ax * by))
        }
    }

    /// Symbol of `∂_{z_i} = ½(∂_{x_i} - i∂_{y_i})`.
    #[inline]
    pub fn dz_symbol(&self, idx: usize, i: usize) -> Complex64 {
        let ax = self.k1[self.digit(idx, 2 * i)];
        let ay = self.k1[self.digit(idx, 2 * i + 1)];
        Complex64::new(0.5 * ay, 0.5 * ax)
    }

    /// `Re Σ_{ij} M_{ji} σ_{ij}(k)` for a constant Hermitian `M`: the symbol of
    /// `u ↦ tr(M ∂∂̄u)`, real and nonpositive for `M ≥ 0`.
    pub fn contracted_symbol(&self, idx: usize, m: &[Complex64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            s += m[i * n + i].re * self.ddbar_symbol(idx, i, i).re;
            for j in i + 1..n {
                s += 2.0 * (m[j * n + i] * self.ddbar_symbol(idx, i, j)).re;
            }
        }
        s
    }

    /// `∂_i∂̄_j u` at every point, row-major `n×n` per point.
    pub fn hessian(&self, u: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let npts = u.len();
        let spec = self.centred_spectrum(u);
        let mut out = vec![ZERO; npts * n * n];
        let mut buf = vec![ZERO; npts];
        self.for_each_hessian_component(&spec, &mut buf, |entry, buf| match entry {
            Entry::Diagonal(i, Some(j)) => {
                for (pt, z) in buf.iter().enumerate() {
                    out[pt * n * n + i * n + i] = Complex64::new(z.re, 0.0);
                    out[pt * n * n + j * n + j] = Complex64::new(z.im, 0.0);
                }
            }
            Entry::Diagonal(i, None) => {
                for (pt, z) in buf.iter().enumerate() {
                    out[pt * n * n + i * n + i] = Complex64::new(z.re, 0.0);
                }
            }
            Entry::Off(i, j) => {
                for (pt, z) in buf.iter().enumerate() {
                    out[pt * n * n + i * n + j] = *z;
                    out[pt * n * n + j * n + i] = z.conj();
                }
            }
        });
        out
    }

    /// `tr(M(x) ∂∂̄v(x))` at every point for a field of Hermitian `M`.
    pub fn contract_hessian(&self, v: &[f64], coeffs: &[Complex64], out: &mut [f64]) {
        let n = self.n;
        let spec = self.centred_spectrum(v);
        let mut buf = vec![ZERO; v.len()];
        out.iter_mut().for_each(|o| *o = 0.0);
        self.for_each_hessian_component(&spec, &mut buf, |entry, buf| match entry {
            Entry::Diagonal(i, Some(j)) => {
                for (pt, z) in buf.iter().enumerate() {
                    let m = &coeffs[pt * n * n..];
                    out[pt] += m[i * n + i].re * z.re + m[j * n + j].re * z.im;
                }
            }
            Entry::Diagonal(i, None) => {
                for (pt, z) in buf.iter().enumerate() {
                    out[pt] += coeffs[pt * n * n + i * n + i].re * z.re;
                }
            }
            Entry::Off(i, j) => {
                for (pt, z) in buf.iter().enumerate() {
                    out[pt] += 2.0 * (coeffs[pt * n * n + j * n + i] * z).re;
                }
            }
        });
    }

    fn for_each_hessian_component(
        &self,
        spec: &[Complex64],
        buf: &mut [Complex64],
        mut sink: impl FnMut(Entry, &[Complex64]),
    ) {
        let n = self.n;
        // real diagonal entries are packed in pairs into one inverse transform
        let mut i = 0;
        while i < n {
            let j = if i + 1 < n { Some(i + 1) } else { None };
            for (idx, (b, s)) in buf.iter_mut().zip(spec).enumerate() {
                let a = self.ddbar_symbol(idx, i, i).re;
                let c = j.map_or(0.0, |j| self.ddbar_symbol(idx, j, j).re);
                *b = s * Complex64::new(a, c);
            }
            self.inverse(buf);
            sink(Entry::Diagonal(i, j), buf);
            i += 2;
        }
        for i in 0..n {
            for j in i + 1..n {
                for (idx, (b, s)) in buf.iter_mut().zip(spec).enumerate() {
                    *b = s * self.ddbar_symbol(idx, i, j);
                }
                self.inverse(buf);
                sink(Entry::Off(i, j), buf);
            }
        }
    }

    /// `∂_{z_i} u` for each `i`, `n` values per point.
    pub fn gradient(&self, u: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let spec = self.centred_spectrum(u);
        let mut out = vec![ZERO; u.len() * n];
        let mut buf = vec![ZERO; u.len()];
        for i in 0..n {
            for (idx, (b, s)) in buf.iter_mut().zip(&spec).enumerate() {
                *b = s * self.dz_symbol(idx, i);
            }
            self.inverse(&mut buf);
            for (pt, z) in buf.iter().enumerate() {
                out[pt * n + i] = *z;
            }
        }
        out
    }
}

enum Entry {
    Diagonal(usize, Option<usize>),
    Off(usize, usize),
}

fn signed_mode(q: usize, p: usize) -> i64 {
    if q < p / 2 {
        q as i64
    } else {
        q as i64 - p as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, p: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let dims = 2 * n;
        let npts = p.pow(dims as u32);
        (0..npts)
            .map(|idx| {
                let x: Vec<f64> = (0..dims)
                    .map(|a| ((idx / p.pow((dims - 1 - a) as u32)) % p) as f64 / p as f64)
                    .collect();
                f(&x)
            })
            .collect()
    }

    #[test]
    fn forward_inverse_round_trip() {
        let s = TorusSpectral::new(2, 4);
        let u = grid(2, 4, |x| (x[0] * 3.0 + x[3]).sin() + x[1]);
        let mut z: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        s.forward(&mut z);
        s.inverse(&mut z);
        for (a, b) in z.iter().zip(&u) {
            assert!((a.re - b).abs() < 1e-13 && a.im.abs() < 1e-13);
        }
    }

    #[test]
    fn mixed_mode_hessian_matches_closed_form() {
        // u = cos(2π(x1 + y2)) + sin(2π(2 y1 - x2)); entries from the
        // real-coordinate formula for ∂_i∂̄_j.
        let (n, p) = (2, 8);
        let s = TorusSpectral::new(n, p);
        let tp = 2.0 * PI;
        let u = grid(n, p, |x| (tp * (x[0] + x[3])).cos() + (tp * (2.0 * x[1] - x[2])).sin());
        let h = s.hessian(&u);
        let xs = grid(n, p, |x| tp * (x[0] + x[3]));
        let ys = grid(n, p, |x| tp * (2.0 * x[1] - x[2]));
        for pt in 0..u.len() {
            let (a, b) = (xs[pt], ys[pt]);
            // second derivatives in (x1,y1,x2,y2)
            let c = -tp * tp * a.cos();
            let sn = -tp * tp * b.sin();
            let d = |i: usize, j: usize| -> f64 {
                let ca = [1.0, 0.0, 0.0, 1.0];
                let cb = [0.0, 2.0, -1.0, 0.0];
                c * ca[i] * ca[j] + sn * cb[i] * cb[j]
            };
            let h11 = 0.25 * (d(0, 0) + d(1, 1));
            let h22 = 0.25 * (d(2, 2) + d(3, 3));
            let h12 = Complex64::new(0.25 * (d(0, 2) + d(1, 3)), 0.25 * (d(0, 3) - d(1, 2)));
            assert!((h[pt * 4].re - h11).abs() < 1e-10);
            assert!((h[pt * 4 + 3].re - h22).abs() < 1e-10);
            assert!((h[pt * 4 + 1] - h12).norm() < 1e-10);
            assert!((h[pt * 4 + 2] - h12.conj()).norm() < 1e-10);
        }
    }

    #[test]
    fn contraction_matches_explicit_trace() {
        let (n, p) = (2, 4);
        let s = TorusSpectral::new(n, p);
        let u = grid(n, p, |x| (2.0 * PI * (x[0] - x[2] + x[3])).sin() + 0.3 * (2.0 * PI * x[1]).cos());
        let npts = u.len();
        let coeffs: Vec<Complex64> = (0..npts)
            .flat_map(|pt| {
                let w = 1.0 + 0.1 * pt as f64 / npts as f64;
                [
                    Complex64::new(w, 0.0),
                    Complex64::new(0.2, 0.1),
                    Complex64::new(0.2, -0.1),
                    Complex64::new(2.0 - w, 0.0),
                ]
            })
            .collect();
        let h = s.hessian(&u);
        let mut out = vec![0.0; npts];
        s.contract_hessian(&u, &coeffs, &mut out);
        for pt in 0..npts {
            let m = &coeffs[pt * 4..pt * 4 + 4];
            let hh = &h[pt * 4..pt * 4 + 4];
            let tr: Complex64 = (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| m[i * 2 + j] * hh[j * 2 + i])
                .sum();
            assert!(tr.im.abs() < 1e-12);
            assert!((tr.re - out[pt]).abs() < 1e-11);
        }
    }
}
