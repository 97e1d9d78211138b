//! Closed-form heat kernels on model domains and heat application.
//!
//! One-dimensional kernels are evaluated either as image sums (small t) or
//! eigenfunction series (large t). Product domains use per-axis factors; a
//! 1-form takes Dirichlet along the axis it is normal to and Neumann along
//! the others.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domains::{Axis, Bc, Domain, Field, Grid};
use crate::error::{param, HeatlabError, Result};
use crate::spectral::{self, Extension};

/// Free Gaussian `(4 pi t)^{-1/2} exp(-d^2 / 4t)`.
pub fn gauss(t: f64, d: f64) -> f64 {
    (-d * d / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

fn gauss_dx(t: f64, d: f64) -> f64 {
    -d / (2.0 * t) * gauss(t, d)
}

fn gauss_dxx(t: f64, d: f64) -> f64 {
    (d * d / (4.0 * t * t) - 0.5 / t) * gauss(t, d)
}

const MAX_SHELLS: usize = 10_000;
const SHELL_TOL: f64 = 1e-17;
const EIGEN_EXPONENT_CUT: f64 = 40.0;

/// A one-dimensional heat kernel factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisKernel {
    Free,
    HalfLine { bc: Bc },
    Interval { l: f64, bc: Bc },
    Circle { l: f64 },
}

impl AxisKernel {
    pub fn bc(&self) -> Bc {
        match *self {
            AxisKernel::Free => Bc::Free,
            AxisKernel::HalfLine { bc } | AxisKernel::Interval { bc, .. } => bc,
            AxisKernel::Circle { .. } => Bc::Periodic,
        }
    }

    fn sign(&self) -> f64 {
        if self.bc() == Bc::Dirichlet {
            -1.0
        } else {
            1.0
        }
    }

    /// Crossover time between image and eigen representations, `L^2 / 20`.
    pub fn crossover(&self) -> f64 {
        match *self {
            AxisKernel::Interval { l, .. } | AxisKernel::Circle { l } => l * l / 20.0,
            _ => f64::INFINITY,
        }
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return param(format!("kernel time must be positive, got {t}"));
        }
        if t < self.crossover() {
            self.eval_images(t, x, y)
        } else {
            self.eval_eigen(t, x, y)
        }
    }

    /// Image sum with adaptively chosen budget; errors if the cap is reached.
    pub fn eval_images(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        let (v, shells) = self.images_adaptive(t, x, y, |d| gauss(t, d));
        if shells >= MAX_SHELLS {
            return Err(HeatlabError::Truncation(format!(
                "{self:?} at t={t} needs more than {MAX_SHELLS} image shells"
            )));
        }
        Ok(v)
    }

    /// Number of image shells the adaptive rule retains at (t, x, y).
    pub fn image_budget(&self, t: f64, x: f64, y: f64) -> usize {
        self.images_adaptive(t, x, y, |d| gauss(t, d)).1
    }

    /// Image sum with a fixed number of shells beyond the central one.
    pub fn eval_images_budget(&self, t: f64, x: f64, y: f64, shells: usize) -> f64 {
        let mut s = self.shell(0, x, y, &|d| gauss(t, d));
        for k in 1..=shells {
            s += self.shell(k, x, y, &|d| gauss(t, d));
        }
        s
    }

    /// Derivative in the first argument, from the image representation.
    pub fn eval_dx(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.eval_deriv(t, x, y, 1)
    }

    /// `d^order/dx^order K(t, x, y)` for order <= 2; derivatives always use images.
    pub fn eval_deriv(&self, t: f64, x: f64, y: f64, order: u32) -> Result<f64> {
        if !(t > 0.0) {
            return param(format!("kernel time must be positive, got {t}"));
        }
        let (v, shells) = match order {
            0 => return self.eval(t, x, y),
            1 => self.images_adaptive(t, x, y, |d| gauss_dx(t, d)),
            2 => self.images_adaptive(t, x, y, |d| gauss_dxx(t, d)),
            _ => {
                return Err(HeatlabError::Unsupported(format!(
                    "kernel derivative of order {order}"
                )))
            }
        };
        if shells >= MAX_SHELLS {
            return Err(HeatlabError::Truncation(format!(
                "derivative of {self:?} at t={t}"
            )));
        }
        Ok(v)
    }

    /// Dense quadrature matrix `d^order_x K(t, x_i, y_j) w_j` on a grid axis.
    pub fn dense_operator(&self, axis: &Axis, t: f64, order: u32) -> Result<DMatrix<f64>> {
        let n = axis.n;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let (xi, yj) = (axis.node(i), axis.node(j));
                // Periodic nodes are referenced to the nearest image of the difference.
                let v = match *self {
                    AxisKernel::Circle { l } => {
                        let d = xi - yj;
                        let d = d - l * (d / l).round();
                        self.eval_deriv(t, d, 0.0, order)?
                    }
                    _ => self.eval_deriv(t, xi, yj, order)?,
                };
                m[(i, j)] = v * axis.weight(j);
            }
        }
        Ok(m)
    }

    /// Shell `k` of the image sum; terms for +k and -k are added as a pair so the
    /// sum is bitwise symmetric in (x, y).
    fn shell(&self, k: usize, x: f64, y: f64, g: &dyn Fn(f64) -> f64) -> f64 {
        let s = self.sign();
        match *self {
            AxisKernel::Free => {
                if k == 0 {
                    g(x - y)
                } else {
                    0.0
                }
            }
            AxisKernel::HalfLine { .. } => {
                if k == 0 {
                    g(x - y) + s * g(x + y)
                } else {
                    0.0
                }
            }
            AxisKernel::Interval { l, .. } => {
                let (d, e) = (x - y, x + y);
                if k == 0 {
                    g(d) + s * g(e)
                } else {
                    let c = 2.0 * k as f64 * l;
                    (g(d - c) + g(d + c)) + s * (g(e - c) + g(e + c))
                }
            }
            AxisKernel::Circle { l } => {
                let d = x - y;
                if k == 0 {
                    g(d)
                } else {
                    let c = k as f64 * l;
                    g(d - c) + g(d + c)
                }
            }
        }
    }

    fn images_adaptive(&self, _t: f64, x: f64, y: f64, g: impl Fn(f64) -> f64) -> (f64, usize) {
        let mut sum = self.shell(0, x, y, &g);
        if matches!(self, AxisKernel::Free | AxisKernel::HalfLine { .. }) {
            return (sum, 0);
        }
        let mut k = 1;
        while k < MAX_SHELLS {
            let add = self.shell(k, x, y, &g);
            sum += add;
            // Shells decrease monotonically from k = 2 on (all offsets exceed the domain length).
            if k >= 2 && add.abs() <= SHELL_TOL * sum.abs() {
                break;
            }
            if k >= 2 && add == 0.0 {
                break;
            }
            k += 1;
        }
        (sum, k)
    }

    /// Eigenfunction series; only defined on the interval and circle.
    pub fn eval_eigen(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        if !(t > 0.0) {
            return param(format!("kernel time must be positive, got {t}"));
        }
        match *self {
            AxisKernel::Interval { l, bc } => {
                let kmax = ((EIGEN_EXPONENT_CUT / t).sqrt() * l / PI).ceil() as usize + 1;
                let mut s = if bc == Bc::Neumann { 1.0 } else { 0.0 };
                for k in 1..=kmax {
                    let w = k as f64 * PI / l;
                    let decay = (-w * w * t).exp();
                    let modes = if bc == Bc::Neumann {
                        (w * x).cos() * (w * y).cos()
                    } else {
                        (w * x).sin() * (w * y).sin()
                    };
                    s += 2.0 * decay * modes;
                }
                Ok(s / l)
            }
            AxisKernel::Circle { l } => {
                let kmax = ((EIGEN_EXPONENT_CUT / t).sqrt() * l / (2.0 * PI)).ceil() as usize + 1;
                let mut s = 1.0;
                for k in 1..=kmax {
                    let w = 2.0 * PI * k as f64 / l;
                    s += 2.0 * (-w * w * t).exp() * (w * (x - y)).cos();
                }
                Ok(s / l)
            }
            _ => Err(HeatlabError::Unsupported(format!(
                "no eigen series for {self:?}"
            ))),
        }
    }

    /// Per-axis heat operator on a grid axis at time t.
    ///
    /// On periodic and closed uniform axes this is the kernel applied exactly to
    /// the trigonometric (cosine or sine) interpolant of the samples, i.e. the
    /// multiplier `exp(-xi^2 t)`. The half-line uses dense quadrature.
    pub fn operator(&self, axis: &Axis, t: f64) -> Result<AxisOperator> {
        if t == 0.0 {
            return Ok(AxisOperator::Identity);
        }
        if !(t > 0.0) {
            return param(format!("heat time must be nonnegative, got {t}"));
        }
        match *self {
            AxisKernel::Circle { l } if axis.periodic => {
                Ok(AxisOperator::spectral(axis.n, l, t, Extension::Periodic))
            }
            AxisKernel::Interval { l, bc } if !axis.periodic => {
                let ext = if bc == Bc::Dirichlet {
                    Extension::Odd
                } else {
                    Extension::Even
                };
                Ok(AxisOperator::spectral(axis.n, 2.0 * l, t, ext))
            }
            AxisKernel::HalfLine { .. } => {
                Ok(AxisOperator::Dense(self.dense_operator(axis, t, 0)?))
            }
            _ => Err(HeatlabError::Config(format!(
                "{self:?} cannot act on axis {axis:?}"
            ))),
        }
    }

    /// Trapezoid quadrature of the kernel against the samples, as a circulant
    /// on the periodic, even or odd extension. Agrees with [`Self::operator`]
    /// up to the aliasing error `~ exp(-(pi/h)^2 t)`.
    pub fn quadrature_operator(&self, axis: &Axis, t: f64) -> Result<AxisOperator> {
        match *self {
            AxisKernel::Circle { .. } if axis.periodic => {
                let h = axis.h();
                let g: Vec<f64> = (0..axis.n)
                    .map(|m| self.eval(t, m as f64 * h, 0.0))
                    .collect::<Result<_>>()?;
                Ok(AxisOperator::circulant(&g, h, Extension::Periodic))
            }
            AxisKernel::Interval { l, bc } if !axis.periodic => {
                // Periodized free kernel of period 2L, recovered from the Neumann kernel.
                let neumann = AxisKernel::Interval { l, bc: Bc::Neumann };
                let h = axis.h();
                let n = axis.n;
                let half: Vec<f64> = (0..n)
                    .map(|m| neumann.eval(t, axis.node(m), 0.0).map(|v| 0.5 * v))
                    .collect::<Result<_>>()?;
                let m_len = 2 * (n - 1);
                let g: Vec<f64> = (0..m_len)
                    .map(|m| if m < n { half[m] } else { half[m_len - m] })
                    .collect();
                let ext = if bc == Bc::Dirichlet {
                    Extension::Odd
                } else {
                    Extension::Even
                };
                Ok(AxisOperator::circulant(&g, h, ext))
            }
            AxisKernel::HalfLine { .. } | AxisKernel::Interval { .. } => {
                Ok(AxisOperator::Dense(self.dense_operator(axis, t, 0)?))
            }
            _ => Err(HeatlabError::Config(format!(
                "{self:?} cannot act on axis {axis:?}"
            ))),
        }
    }
}

/// Heat operator along one axis.
#[derive(Debug, Clone)]
pub enum AxisOperator {
    Identity,
    /// Circular convolution on the periodic extension, diagonal in Fourier space.
    Circulant {
        ext: Extension,
        symbol: Vec<Complex64>,
    },
    Dense(DMatrix<f64>),
}

impl AxisOperator {
    fn spectral(n: usize, period: f64, t: f64, ext: Extension) -> Self {
        let m = ext.period_len(n);
        let base = 2.0 * PI / period;
        let symbol = (0..m)
            .map(|k| {
                let xi = base * spectral::wavenumber(k, m);
                Complex64::new((-xi * xi * t).exp(), 0.0)
            })
            .collect();
        AxisOperator::Circulant { ext, symbol }
    }

    fn circulant(samples: &[f64], h: f64, ext: Extension) -> Self {
        let symbol = spectral::dft_real(samples)
            .into_iter()
            .map(|c| Complex64::new(h * c.re, 0.0))
            .collect();
        AxisOperator::Circulant { ext, symbol }
    }

    pub fn apply_line(&self, line: &[f64], out: &mut [f64]) {
        match self {
            AxisOperator::Identity => out.copy_from_slice(line),
            AxisOperator::Circulant { ext, symbol } => {
                spectral::apply_multiplier(line, *ext, symbol, out)
            }
            AxisOperator::Dense(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..line.len()).map(|j| m[(i, j)] * line[j]).sum();
                }
            }
        }
    }

    /// Symbol values as real eigenvalues (circulant case only).
    pub fn eigenvalues(&self) -> Option<Vec<f64>> {
        match self {
            AxisOperator::Circulant { symbol, .. } => Some(symbol.iter().map(|c| c.re).collect()),
            _ => None,
        }
    }
}

/// Heat kernel on a model domain (or free space), possibly acting on 1-forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormKernel {
    pub domain: Option<Domain>,
    pub degree: u8,
    /// Axis factors for every component.
    pub comps: Vec<Vec<AxisKernel>>,
}

impl ClosedFormKernel {
    pub fn free(n: usize) -> Self {
        ClosedFormKernel {
            domain: None,
            degree: 0,
            comps: vec![vec![AxisKernel::Free; n]],
        }
    }

    fn axis_kernel(domain: &Domain, axis: usize, bc: Bc) -> AxisKernel {
        let l = domain.lengths()[axis];
        match (domain, domain.periodic_axis(axis)) {
            (_, true) => AxisKernel::Circle { l },
            (Domain::HalfLine { .. }, _) => AxisKernel::HalfLine { bc },
            _ => AxisKernel::Interval { l, bc },
        }
    }

    /// Scalar kernel with the given condition on every non-periodic axis.
    pub fn scalar(domain: Domain, bc: Bc) -> Result<Self> {
        if !matches!(bc, Bc::Neumann | Bc::Dirichlet) {
            return param(format!(
                "scalar boundary condition must be neumann or dirichlet, got {bc:?}"
            ));
        }
        let axes = (0..domain.dim())
            .map(|a| Self::axis_kernel(&domain, a, bc))
            .collect();
        Ok(ClosedFormKernel {
            domain: Some(domain),
            degree: 0,
            comps: vec![axes],
        })
    }

    /// Kernel on 1-forms with the absolute boundary condition.
    pub fn form(domain: Domain) -> Result<Self> {
        if !matches!(domain, Domain::Channel { .. } | Domain::Rectangle { .. }) {
            return param(format!(
                "1-form kernels need a channel or rectangle, got {domain:?}"
            ));
        }
        let comps = (0..2)
            .map(|c| {
                (0..2)
                    .map(|a| {
                        Self::axis_kernel(
                            &domain,
                            a,
                            if a == c { Bc::Dirichlet } else { Bc::Neumann },
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(ClosedFormKernel {
            domain: Some(domain),
            degree: 1,
            comps,
        })
    }

    /// Kernel matching a field's degree and boundary tags.
    pub fn for_field(field: &Field) -> Result<Self> {
        let domain = field.grid.domain;
        let comps = field
            .bc
            .iter()
            .map(|tags| {
                tags.iter()
                    .enumerate()
                    .map(|(a, &bc)| match bc {
                        Bc::Periodic => Ok(AxisKernel::Circle {
                            l: domain.lengths()[a],
                        }),
                        Bc::Neumann | Bc::Dirichlet => Ok(Self::axis_kernel(&domain, a, bc)),
                        Bc::Free => param("free-space tag on a bounded grid"),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClosedFormKernel {
            domain: Some(domain),
            degree: field.degree,
            comps,
        })
    }

    pub fn dim(&self) -> usize {
        self.comps[0].len()
    }

    fn eval_comp(&self, c: usize, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() < self.dim() || y.len() < self.dim() {
            return param("point dimension below kernel dimension");
        }
        let mut v = 1.0;
        for (a, k) in self.comps[c].iter().enumerate() {
            v *= k.eval(t, x[a], y[a])?;
        }
        Ok(v)
    }

    /// Scalar kernel value `K(t, x, y)`.
    pub fn eval_scalar(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        if self.degree != 0 {
            return Err(HeatlabError::Config(
                "eval_scalar on a 1-form kernel".into(),
            ));
        }
        self.eval_comp(0, t, x, y)
    }

    /// Diagonal entries of the 1-form kernel; off-diagonal entries vanish on flat domains.
    pub fn eval_form_kernel(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if self.degree != 1 {
            return Err(HeatlabError::Config(
                "wrong degree: eval_form_kernel needs a 1-form kernel".into(),
            ));
        }
        (0..self.comps.len())
            .map(|c| self.eval_comp(c, t, x, y))
            .collect()
    }

    /// Per-axis operators for every component at time t.
    pub fn operators(&self, grid: &Grid, t: f64) -> Result<Vec<Vec<AxisOperator>>> {
        self.comps
            .iter()
            .map(|axes| {
                axes.iter()
                    .zip(&grid.axes)
                    .map(|(k, ax)| k.operator(ax, t))
                    .collect()
            })
            .collect()
    }
}

fn check_compatible(kernel: &ClosedFormKernel, field: &Field) -> Result<()> {
    if kernel.domain != Some(field.grid.domain) {
        return Err(HeatlabError::Config(format!(
            "kernel domain {:?} differs from field domain {:?}",
            kernel.domain, field.grid.domain
        )));
    }
    if kernel.comps.len() != field.comps.len() {
        return Err(HeatlabError::Config("component count mismatch".into()));
    }
    for (c, axes) in kernel.comps.iter().enumerate() {
        let tags: Vec<Bc> = axes.iter().map(|k| k.bc()).collect();
        if tags != field.bc[c] {
            return Err(HeatlabError::Config(format!(
                "component {c}: kernel conditions {tags:?} vs field tags {:?}",
                field.bc[c]
            )));
        }
    }
    Ok(())
}

/// Apply precomputed per-axis operators to one component.
pub fn apply_axis_ops(grid: &Grid, ops: &[AxisOperator], values: &[f64]) -> Vec<f64> {
    let (n0, n1) = grid.shape();
    let mut cur = values.to_vec();
    let mut out = vec![0.0; cur.len()];
    for (a, op) in ops.iter().enumerate() {
        if matches!(op, AxisOperator::Identity) {
            continue;
        }
        spectral::for_each_line(&cur, n0, n1, a, &mut out, |line, o| op.apply_line(line, o));
        std::mem::swap(&mut cur, &mut out);
    }
    cur
}

/// `e^{t Delta}` applied to a field by kernel quadrature.
pub fn apply_heat(kernel: &ClosedFormKernel, field: &Field, t: f64) -> Result<Field> {
    if !(t >= 0.0 && t.is_finite()) {
        return param(format!("heat time must be nonnegative, got {t}"));
    }
    check_compatible(kernel, field)?;
    if t == 0.0 {
        return Ok(field.clone());
    }
    let ops = kernel.operators(&field.grid, t)?;
    let comps = field
        .comps
        .iter()
        .zip(&ops)
        .map(|(v, o)| apply_axis_ops(&field.grid, o, v))
        .collect();
    Ok(Field {
        comps,
        ..field.clone()
    })
}

/// `max |S(t1) S(t2) f - S(t1 + t2) f|`.
pub fn semigroup_check(kernel: &ClosedFormKernel, field: &Field, t1: f64, t2: f64) -> Result<f64> {
    if !(t1 > 0.0 && t2 > 0.0) {
        return param("semigroup check needs t1, t2 > 0");
    }
    let a = apply_heat(kernel, &apply_heat(kernel, field, t2)?, t1)?;
    let b = apply_heat(kernel, field, t1 + t2)?;
    Ok(a.sub(&b).max_abs())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelProbeReport {
    pub d: f64,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    /// Fitted small-time limit of `-t log(K (4 pi t)^{n/2})`; `None` when underflow stops the fit.
    pub c: Option<f64>,
    pub target: f64,
    pub rel_gap: Option<f64>,
    pub underflow: bool,
}

/// Fit the Gaussian rate of the kernel between two separated points.
pub fn offdiag_decay_probe(
    kernel: &ClosedFormKernel,
    comp: usize,
    x: &[f64],
    y: &[f64],
    t_list: &[f64],
) -> Result<KernelProbeReport> {
    let n = kernel.dim();
    let d = x
        .iter()
        .zip(y)
        .take(n)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if d <= 0.0 {
        return param("probe points must be distinct");
    }
    if t_list.len() < 8 {
        return param(format!(
            "probe needs at least 8 times, got {}",
            t_list.len()
        ));
    }
    if t_list.windows(2).any(|w| w[1] >= w[0]) {
        return param("probe times must be strictly decreasing");
    }
    if t_list.iter().any(|&t| !(t > 0.0 && t <= d * d)) {
        return param(format!("probe times must lie in (0, d^2] = (0, {}]", d * d));
    }
    if comp >= kernel.comps.len() {
        return param(format!("component {comp} out of range"));
    }
    let values: Vec<f64> = t_list
        .iter()
        .map(|&t| kernel.eval_comp(comp, t, x, y))
        .collect::<Result<_>>()?;
    let target = d * d / 4.0;
    let underflow = values.iter().any(|&v| !(v.is_normal() && v > 0.0));
    if underflow {
        return Ok(KernelProbeReport {
            d,
            t: t_list.to_vec(),
            values,
            c: None,
            target,
            rel_gap: None,
            underflow,
        });
    }
    let z: Vec<f64> = t_list
        .iter()
        .zip(&values)
        .map(|(&t, &v)| -t * (v.ln() + 0.5 * n as f64 * (4.0 * PI * t).ln()))
        .collect();
    let (c, _) = linear_fit(t_list, &z);
    Ok(KernelProbeReport {
        d,
        t: t_list.to_vec(),
        values,
        c: Some(c),
        target,
        rel_gap: Some((c - target).abs() / target),
        underflow,
    })
}

/// Least-squares line `y = a + b x`; returns (a, b).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}
