//! FFT plumbing shared by heat application, differentiation and translation.
//!
//! A closed-grid line of `n` samples is embedded in a periodic line of
//! length `2(n-1)` by even or odd reflection; a periodic line is used as is.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    Periodic,
    Even,
    Odd,
}

impl Extension {
    pub fn period_len(self, n: usize) -> usize {
        match self {
            Extension::Periodic => n,
            Extension::Even | Extension::Odd => 2 * (n - 1),
        }
    }
}

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, HashMap<usize, Plans>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plans(m: usize) -> Plans {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if let Some(pl) = p.1.get(&m) {
            return pl.clone();
        }
        let fwd = p.0.plan_fft_forward(m);
        let inv = p.0.plan_fft_inverse(m);
        p.1.insert(m, (fwd.clone(), inv.clone()));
        (fwd, inv)
    })
}

fn extend(line: &[f64], ext: Extension, buf: &mut Vec<Complex64>) {
    let n = line.len();
    buf.clear();
    match ext {
        Extension::Periodic => buf.extend(line.iter().map(|&v| Complex64::new(v, 0.0))),
        Extension::Even => {
            buf.extend(line.iter().map(|&v| Complex64::new(v, 0.0)));
            buf.extend(line[1..n - 1].iter().rev().map(|&v| Complex64::new(v, 0.0)));
        }
        Extension::Odd => {
            buf.push(Complex64::new(0.0, 0.0));
            buf.extend(line[1..n - 1].iter().map(|&v| Complex64::new(v, 0.0)));
            buf.push(Complex64::new(0.0, 0.0));
            buf.extend(
                line[1..n - 1]
                    .iter()
                    .rev()
                    .map(|&v| Complex64::new(-v, 0.0)),
            );
        }
    }
}

/// Multiply the periodic extension of `line` by `mult` in Fourier space and
/// write the first `out.len()` samples of the result into `out`.
pub fn apply_multiplier(line: &[f64], ext: Extension, mult: &[Complex64], out: &mut [f64]) {
    let m = ext.period_len(line.len());
    debug_assert_eq!(mult.len(), m);
    let (fwd, inv) = plans(m);
    let mut buf = Vec::with_capacity(m);
    extend(line, ext, &mut buf);
    fwd.process(&mut buf);
    for (b, w) in buf.iter_mut().zip(mult) {
        *b *= *w;
    }
    inv.process(&mut buf);
    let scale = 1.0 / m as f64;
    for (o, b) in out.iter_mut().zip(&buf) {
        *o = b.re * scale;
    }
}

/// Discrete Fourier transform of a real periodic sample vector.
pub fn dft_real(samples: &[f64]) -> Vec<Complex64> {
    let (fwd, _) = plans(samples.len());
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    buf
}

/// Signed integer wavenumber of FFT slot `k` in a length-`m` transform.
pub fn wavenumber(k: usize, m: usize) -> f64 {
    if k <= m / 2 {
        k as f64
    } else {
        k as f64 - m as f64
    }
}

/// Fourier multiplier of `d^order/dx^order` on a period of physical length `period`.
pub fn derivative_multiplier(m: usize, period: f64, order: u32) -> Vec<Complex64> {
    let base = 2.0 * std::f64::consts::PI / period;
    (0..m)
        .map(|k| {
            if order % 2 == 1 && m.is_multiple_of(2) && k == m / 2 {
                return Complex64::new(0.0, 0.0);
            }
            let ik = Complex64::new(0.0, base * wavenumber(k, m));
            ik.powu(order)
        })
        .collect()
}

/// Fourier multiplier translating a periodic signal by `shift` (u(x) -> u(x - shift)).
pub fn shift_multiplier(m: usize, period: f64, shift: f64) -> Vec<Complex64> {
    let base = 2.0 * std::f64::consts::PI / period;
    (0..m)
        .map(|k| {
            let kk = if m.is_multiple_of(2) && k == m / 2 {
                0.0
            } else {
                wavenumber(k, m)
            };
            Complex64::from_polar(1.0, -base * kk * shift)
        })
        .collect()
}

/// Apply `f` to every line of a row-major `n0 x n1` array along `axis`.
pub fn for_each_line(
    data: &[f64],
    n0: usize,
    n1: usize,
    axis: usize,
    out: &mut [f64],
    f: impl Fn(&[f64], &mut [f64]) + Sync,
) {
    use rayon::prelude::*;
    if axis == 1 {
        out.par_chunks_mut(n1)
            .zip(data.par_chunks(n1))
            .for_each(|(o, d)| f(d, o));
    } else {
        let cols: Vec<Vec<f64>> = (0..n1)
            .into_par_iter()
            .map(|j| {
                let line: Vec<f64> = (0..n0).map(|i| data[i * n1 + j]).collect();
                let mut o = vec![0.0; n0];
                f(&line, &mut o);
                o
            })
            .collect();
        for (j, col) in cols.iter().enumerate() {
            for i in 0..n0 {
                out[i * n1 + j] = col[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_extension_derivative_of_cosine() {
        let n = 65;
        let h = 1.0 / (n - 1) as f64;
        let line: Vec<f64> = (0..n)
            .map(|i| (3.0 * std::f64::consts::PI * i as f64 * h).cos())
            .collect();
        let m = Extension::Even.period_len(n);
        let mult = derivative_multiplier(m, 2.0, 2);
        let mut out = vec![0.0; n];
        apply_multiplier(&line, Extension::Even, &mult, &mut out);
        let k2 = (3.0 * std::f64::consts::PI).powi(2);
        for i in 0..n {
            assert!((out[i] + k2 * line[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn periodic_shift_is_exact_for_band_limited() {
        let n = 32;
        let period = 2.0 * std::f64::consts::PI;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * period / n as f64).collect();
        let line: Vec<f64> = x.iter().map(|&v| (2.0 * v).sin()).collect();
        let mut out = vec![0.0; n];
        apply_multiplier(
            &line,
            Extension::Periodic,
            &shift_multiplier(n, period, 0.3),
            &mut out,
        );
        for i in 0..n {
            assert!((out[i] - (2.0 * (x[i] - 0.3)).sin()).abs() < 1e-12);
        }
    }
}
