//! Small-time parametrix for `d_t - (d_x^2 + b d_x + c)` on the half-line
//! with the Neumann condition at 0.
//!
//! The diagonal (td) expansion `A = sum_j tau^{j-1} a_j(x, zeta)` with
//! `zeta = (x - y)/tau` is built level by level in the Gaussian-polynomial
//! class; x-dependence is carried by truncated Taylor jets of `b` and `c`.
//! The Neumann kernel is the image fold `A(t,x,y) + A(t,x,-y)`, corrected at
//! the right face by `x^j` terms and by one Volterra step.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::Bc;
use crate::error::{param, HeatlabError, Result};
use crate::quadrature::{gauss_legendre, gauss_legendre_on};

// ---------------------------------------------------------------------------
// Taylor jets

/// Truncated Taylor series `sum_k c_k eps^k` about a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet(pub Vec<f64>);

impl Jet {
    pub fn constant(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        Jet(c)
    }

    /// The identity function at `x0`.
    pub fn variable(x0: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = x0;
        if order > 0 {
            c[1] = 1.0;
        }
        Jet(c)
    }

    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// `k`-th derivative at the base point.
    pub fn derivative(&self, k: usize) -> f64 {
        self.0
            .get(k)
            .map_or(0.0, |c| c * (1..=k).map(|i| i as f64).product::<f64>())
    }

    /// Jet of the derivative; the top coefficient is lost.
    pub fn d(&self) -> Jet {
        let n = self.0.len();
        let mut c = vec![0.0; n];
        for k in 1..n {
            c[k - 1] = k as f64 * self.0[k];
        }
        Jet(c)
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet(self.0.iter().map(|v| v * s).collect())
    }

    pub fn exp(&self) -> Jet {
        let a = &self.0;
        let mut e = vec![0.0; a.len()];
        e[0] = a[0].exp();
        for k in 1..a.len() {
            e[k] = (1..=k).map(|j| j as f64 * a[j] * e[k - j]).sum::<f64>() / k as f64;
        }
        Jet(e)
    }

    pub fn recip(&self) -> Jet {
        let a = &self.0;
        let mut r = vec![0.0; a.len()];
        r[0] = 1.0 / a[0];
        for k in 1..a.len() {
            r[k] = -(1..=k).map(|j| a[j] * r[k - j]).sum::<f64>() / a[0];
        }
        Jet(r)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet(self.0.iter().zip(&o.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let n = self.0.len().min(o.0.len());
        let mut c = vec![0.0; n];
        for (i, a) in self.0.iter().enumerate().take(n) {
            for (j, b) in o.0.iter().enumerate().take(n - i) {
                c[i + j] += a * b;
            }
        }
        Jet(c)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

/// Coefficient ring for Gaussian polynomials.
pub trait Coef: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero_like(&self) -> Self;
}

impl Coef for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
}

impl Coef for Jet {
    fn zero_like(&self) -> Self {
        Jet(vec![0.0; self.0.len()])
    }
}

// ---------------------------------------------------------------------------
// Gaussian-polynomial algebra: p(zeta) exp(-zeta^2/4) stored as coefficients of p.

/// `L_j = -d_zeta^2 - (zeta/2) d_zeta + (j - 1)/2` on `zeta^m G`:
/// `((m + j)/2) zeta^m G - m(m-1) zeta^{m-2} G`.
fn level_apply<C: Coef>(j: usize, p: &[C]) -> Vec<C> {
    (0..p.len())
        .map(|m| {
            let mut v = p[m].clone() * (0.5 * (m + j) as f64);
            if m + 2 < p.len() {
                v = v - p[m + 2].clone() * ((m + 2) * (m + 1)) as f64;
            }
            v
        })
        .collect()
}

/// Inverse of [`level_apply`] for `j >= 1` by back-substitution from the top degree.
fn level_solve<C: Coef>(j: usize, f: &[C]) -> Vec<C> {
    let mut c: Vec<C> = f.to_vec();
    for m in (0..f.len()).rev() {
        let mut rhs = f[m].clone();
        if m + 2 < f.len() {
            rhs = rhs + c[m + 2].clone() * ((m + 2) * (m + 1)) as f64;
        }
        c[m] = rhs * (2.0 / (m + j) as f64);
    }
    c
}

fn d_zeta<C: Coef>(p: &[C]) -> Vec<C> {
    let zero = p[0].zero_like();
    let mut out = vec![zero; p.len() + 1];
    for (m, c) in p.iter().enumerate() {
        if m > 0 {
            out[m - 1] = out[m - 1].clone() + c.clone() * m as f64;
        }
        out[m + 1] = out[m + 1].clone() - c.clone() * 0.5;
    }
    out
}

fn poly_add<C: Coef>(a: &[C], b: &[C]) -> Vec<C> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut out = long.to_vec();
    for (o, s) in out.iter_mut().zip(short) {
        *o = o.clone() + s.clone();
    }
    out
}

fn eval_poly(p: &[f64], z: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

/// `p(zeta) exp(-zeta^2/4)` based at a spatial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolynomial {
    pub base: f64,
    pub coeffs: Vec<f64>,
}

impl GaussianPolynomial {
    pub fn gaussian(base: f64) -> Self {
        GaussianPolynomial {
            base,
            coeffs: vec![1.0],
        }
    }

    pub fn monomial(base: f64, m: usize) -> Self {
        let mut coeffs = vec![0.0; m + 1];
        coeffs[m] = 1.0;
        GaussianPolynomial { base, coeffs }
    }

    pub fn eval(&self, zeta: f64) -> f64 {
        eval_poly(&self.coeffs, zeta) * (-zeta * zeta / 4.0).exp()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// Level-j model operator at the diagonal face.
pub fn model_td_apply(j: usize, g: &GaussianPolynomial) -> GaussianPolynomial {
    GaussianPolynomial {
        base: g.base,
        coeffs: level_apply(j, &g.coeffs),
    }
}

/// Solve `model_td_apply(j, F) = f` in the Gaussian-polynomial class.
pub fn solve_td(j: usize, f: &GaussianPolynomial) -> Result<GaussianPolynomial> {
    if j == 0 {
        return Err(HeatlabError::Parameter(
            "level 0 is prescribed by the leading term, not solved".into(),
        ));
    }
    Ok(GaussianPolynomial {
        base: f.base,
        coeffs: level_solve(j, &f.coeffs),
    })
}

/// Right-face level solve: `-j(j-1) J = C`, pointwise.
pub fn solve_rf(j: usize, c: &[f64]) -> Result<Vec<f64>> {
    if j < 2 {
        return Err(HeatlabError::Parameter(format!(
            "right-face level {j} is forbidden (coefficients vanish)"
        )));
    }
    let k = -((j * (j - 1)) as f64);
    Ok(c.iter().map(|v| v / k).collect())
}

// ---------------------------------------------------------------------------
// Leading terms

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FfLeading {
    /// `(4 pi)^{-1/2} exp(-(xi - eta)^2 / 4)`.
    pub direct: f64,
    /// `+- (4 pi)^{-1/2} exp(-(xi + eta)^2 / 4)`, sign by condition.
    pub reflected: f64,
}

impl FfLeading {
    pub fn value(&self) -> f64 {
        self.direct + self.reflected
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LeadingTerms {
    pub td: f64,
}

impl LeadingTerms {
    /// td leading coefficient at `zeta`.
    pub fn td_at(&self, zeta: f64) -> f64 {
        self.td * (-zeta * zeta / 4.0).exp()
    }

    /// ff leading coefficient at `(xi, eta)` for a Neumann (tangential) or
    /// Dirichlet (normal) component.
    pub fn ff_at(&self, xi: f64, eta: f64, bc: Bc) -> Result<FfLeading> {
        let sign = match bc {
            Bc::Neumann => 1.0,
            Bc::Dirichlet => -1.0,
            other => {
                return param(format!(
                    "ff leading term needs neumann or dirichlet, got {other:?}"
                ))
            }
        };
        Ok(FfLeading {
            direct: self.td * (-(xi - eta).powi(2) / 4.0).exp(),
            reflected: sign * self.td * (-(xi + eta).powi(2) / 4.0).exp(),
        })
    }

    /// `|u(theta, sigma) - v(0, sigma)|` at the ff/td corner: the ff leading term
    /// at fftd point `(theta, sigma, y=0)` is `xi - eta = sigma`, `xi + eta = sigma + 2/theta`.
    pub fn compatibility_residual(&self, theta: f64, sigma: f64, bc: Bc) -> Result<f64> {
        if !(theta > 0.0) {
            return param("compatibility residual needs theta > 0");
        }
        let eta = 1.0 / theta;
        let xi = sigma + eta;
        let u = self.ff_at(xi, eta, bc)?;
        Ok((u.direct - self.td_at(sigma)).abs() + u.reflected.abs())
    }
}

pub fn leading_terms(_op: &ModelOperator) -> LeadingTerms {
    LeadingTerms {
        td: (4.0 * PI).powf(-0.5),
    }
}

// ---------------------------------------------------------------------------
// Charts

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    /// `(tau, x, y)`.
    Ts,
    /// `(T, theta, y)` with `T = t/y^2`, `theta = x/y`.
    Rf,
    /// `(tau, xi, eta)` with `xi = x/tau`, `eta = y/tau`.
    Ff,
    /// `(tau, x, zeta)` with `zeta = (x - y)/tau`.
    Td,
    /// `(vartheta, sigma, y)` with `vartheta = sqrt(T)`, `sigma = (theta - 1)/sqrt(T)`.
    Fftd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinatePoint {
    pub chart: Chart,
    pub c: [f64; 3],
}

impl CoordinatePoint {
    pub fn new(chart: Chart, c: [f64; 3]) -> Self {
        CoordinatePoint { chart, c }
    }
}

const EDGES: [(Chart, Chart); 10] = [
    (Chart::Ts, Chart::Rf),
    (Chart::Ts, Chart::Ff),
    (Chart::Ts, Chart::Td),
    (Chart::Td, Chart::Fftd),
    (Chart::Rf, Chart::Fftd),
    (Chart::Rf, Chart::Ts),
    (Chart::Ff, Chart::Ts),
    (Chart::Td, Chart::Ts),
    (Chart::Fftd, Chart::Td),
    (Chart::Fftd, Chart::Rf),
];

fn need(ok: bool, what: &str, v: f64) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(HeatlabError::Chart(format!(
            "transition needs {what} (got {v})"
        )))
    }
}

fn step(from: Chart, to: Chart, c: [f64; 3]) -> Result<[f64; 3]> {
    let [a, b, d] = c;
    use Chart::*;
    match (from, to) {
        (Ts, Rf) => {
            need(d > 0.0, "y_n > 0", d)?;
            Ok([a * a / (d * d), b / d, d])
        }
        (Rf, Ts) => {
            need(a >= 0.0, "T >= 0", a)?;
            Ok([d * a.sqrt(), b * d, d])
        }
        (Ts, Ff) => {
            need(a > 0.0, "tau > 0", a)?;
            Ok([a, b / a, d / a])
        }
        (Ff, Ts) => Ok([a, a * b, a * d]),
        (Ts, Td) => {
            need(a > 0.0, "tau > 0", a)?;
            Ok([a, b, (b - d) / a])
        }
        (Td, Ts) => {
            let y = b - a * d;
            need(y >= 0.0, "x_n - tau zeta_n >= 0", y)?;
            Ok([a, b, y])
        }
        (Td, Fftd) => {
            need(b > 0.0, "x_n > 0", b)?;
            let y = b - a * d;
            need(y > 0.0, "x_n - tau zeta_n > 0", y)?;
            Ok([a / y, d, y])
        }
        (Fftd, Td) => {
            need(d > 0.0, "y_n > 0", d)?;
            Ok([a * d, d + a * d * b, b])
        }
        (Rf, Fftd) => {
            need(a > 0.0, "T > 0", a)?;
            let s = a.sqrt();
            Ok([s, (b - 1.0) / s, d])
        }
        (Fftd, Rf) => Ok([a * a, 1.0 + a * b, d]),
        _ => Err(HeatlabError::Chart(format!(
            "no direct transition {from:?} -> {to:?}"
        ))),
    }
}

fn route(from: Chart, to: Chart) -> Vec<Chart> {
    use std::collections::{HashMap, VecDeque};
    let mut prev: HashMap<Chart, Chart> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        if c == to {
            break;
        }
        for &(a, b) in &EDGES {
            if a == c && b != from && !prev.contains_key(&b) {
                prev.insert(b, c);
                queue.push_back(b);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[&cur];
        path.push(cur);
    }
    path.reverse();
    path
}

/// Exact coordinate change; failures name the violated inequality.
pub fn chart_map(p: CoordinatePoint, target: Chart) -> Result<CoordinatePoint> {
    if p.chart == target {
        return Ok(p);
    }
    let path = route(p.chart, target);
    let mut c = p.c;
    for w in path.windows(2) {
        c = step(w[0], w[1], c).map_err(|e| match e {
            HeatlabError::Chart(m) => HeatlabError::Chart(format!("{:?} -> {:?}: {m}", w[0], w[1])),
            other => other,
        })?;
    }
    Ok(CoordinatePoint { chart: target, c })
}

// ---------------------------------------------------------------------------
// Model operator and the td expansion

pub type CoefFn = Arc<dyn Fn(&Jet) -> Jet + Send + Sync>;

/// `d_x^2 + b(x) d_x + c(x)` on the half-line, Neumann at 0.
#[derive(Clone)]
pub struct ModelOperator {
    pub name: String,
    pub b: CoefFn,
    pub c: CoefFn,
    /// Set when `b = 0` and `c` is constant, so `e^{ct}` times the flat kernel is exact.
    pub constant_c: Option<f64>,
}

impl std::fmt::Debug for ModelOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelOperator")
            .field("name", &self.name)
            .field("constant_c", &self.constant_c)
            .finish()
    }
}

impl ModelOperator {
    pub fn flat() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c0: f64) -> Self {
        ModelOperator {
            name: format!("c={c0}"),
            b: Arc::new(|x: &Jet| x.zero_like()),
            c: Arc::new(move |x: &Jet| Jet::constant(c0, x.order())),
            constant_c: Some(c0),
        }
    }

    /// `c(x) = amp * exp(1 - 1/(1 - z^2))`, `z = (x - center)/width`, zero outside.
    pub fn bump(amp: f64, center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && (center == 0.0 || center - width >= 0.0)) {
            return param("bump must be centred at 0 or supported inside [0, inf)");
        }
        Ok(ModelOperator {
            name: format!("bump(amp={amp}, center={center}, width={width})"),
            b: Arc::new(|x: &Jet| x.zero_like()),
            c: Arc::new(move |x: &Jet| {
                let z = (x.clone() - Jet::constant(center, x.order())).scale(1.0 / width);
                if z.value().abs() >= 1.0 {
                    return x.zero_like();
                }
                let one = Jet::constant(1.0, x.order());
                let inner = -(one.clone() - z.clone() * z).recip();
                (one + inner).exp().scale(amp)
            }),
            constant_c: None,
        })
    }

    pub fn custom(name: &str, b: CoefFn, c: CoefFn) -> Self {
        ModelOperator {
            name: name.to_string(),
            b,
            c,
            constant_c: None,
        }
    }

    pub fn b_at(&self, x: f64) -> f64 {
        (self.b)(&Jet::constant(x, 0)).value()
    }

    pub fn c_at(&self, x: f64) -> f64 {
        (self.c)(&Jet::constant(x, 0)).value()
    }
}

/// Coefficients of the td expansion at one base point.
#[derive(Debug, Clone)]
pub struct TdExpansion {
    pub x: f64,
    /// `a_j` as Gaussian polynomials with jet coefficients in `x - base`.
    pub a: Vec<Vec<Jet>>,
    /// Residual polynomials `M1 a_J + M2 a_{J-1}` and `M2 a_J`.
    pub r1: Vec<Jet>,
    pub r2: Vec<Jet>,
}

fn m1(p: &[Jet], b: &Jet) -> Vec<Jet> {
    d_zeta(p)
        .into_iter()
        .map(|q| -(q.d().scale(2.0) + b.clone() * q))
        .collect()
}

fn m2(p: &[Jet], b: &Jet, c: &Jet) -> Vec<Jet> {
    p.iter()
        .map(|q| -(q.d().d() + b.clone() * q.d() + c.clone() * q.clone()))
        .collect()
}

impl TdExpansion {
    pub fn new(op: &ModelOperator, x: f64, j_td: usize, jet_order: usize) -> Self {
        let xv = Jet::variable(x, jet_order);
        let b = (op.b)(&xv);
        let c = (op.c)(&xv);
        let zero = vec![Jet::constant(0.0, jet_order)];
        let mut a: Vec<Vec<Jet>> = vec![vec![Jet::constant((4.0 * PI).powf(-0.5), jet_order)]];
        for j in 1..=j_td {
            let mut rhs = m1(&a[j - 1], &b);
            if j >= 2 {
                rhs = poly_add(&rhs, &m2(&a[j - 2], &b, &c));
            }
            let rhs: Vec<Jet> = rhs.into_iter().map(|q| -q).collect();
            a.push(level_solve(j, &rhs));
        }
        let last = &a[j_td];
        let prev = if j_td >= 1 { &a[j_td - 1] } else { &zero };
        let r1 = poly_add(&m1(last, &b), &m2(prev, &b, &c));
        let r2 = m2(last, &b, &c);
        TdExpansion { x, a, r1, r2 }
    }
}

/// Values of the td expansion tabulated on a uniform x grid, interpolated with
/// 4-point Lagrange stencils.
#[derive(Debug, Clone)]
struct TdTable {
    h: f64,
    /// Per node: a_j value polynomials, then r1, r2.
    rows: Vec<Vec<Vec<f64>>>,
}

impl TdTable {
    fn build(op: &ModelOperator, j_td: usize, x_max: f64, n: usize) -> Self {
        let h = x_max / (n - 1) as f64;
        let order = j_td + 4;
        let rows = (0..n)
            .into_par_iter()
            .map(|i| {
                let e = TdExpansion::new(op, i as f64 * h, j_td, order);
                let vals = |p: &[Jet]| p.iter().map(|q| q.value()).collect::<Vec<f64>>();
                let mut r: Vec<Vec<f64>> = e.a.iter().map(|p| vals(p)).collect();
                r.push(vals(&e.r1));
                r.push(vals(&e.r2));
                r
            })
            .collect();
        TdTable { h, rows }
    }

    /// Interpolated polynomial `k` (a_j for k <= J, then r1, r2) at x.
    fn poly(&self, k: usize, x: f64) -> Vec<f64> {
        let n = self.rows.len();
        let s = (x / self.h).clamp(0.0, (n - 1) as f64);
        let i0 = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let len = self.rows[i0][k].len();
        let mut out = vec![0.0; len];
        for a in 0..4 {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (s - (i0 + b) as f64) / (a as f64 - b as f64);
                }
            }
            for (o, v) in out.iter_mut().zip(&self.rows[i0 + a][k]) {
                *o += w * v;
            }
        }
        out
    }
}

/// Cutoff in `theta = x/y` used for the right-face terms: 1 below 1/4, 0 above 1/2.
fn rf_cutoff(theta: f64) -> f64 {
    let z = (theta - 0.25) / 0.25;
    let e = |v: f64| if v > 0.0 { (-1.0 / v).exp() } else { 0.0 };
    if z <= 0.0 {
        1.0
    } else if z >= 1.0 {
        0.0
    } else {
        e(1.0 - z) / (e(1.0 - z) + e(z))
    }
}

/// The assembled approximant.
#[derive(Debug, Clone)]
pub struct Parametrix {
    pub op: ModelOperator,
    pub j_td: usize,
    pub j_rf: usize,
    pub n_volterra: usize,
    table: TdTable,
    /// Jet expansion at x = 0 for the right-face Taylor coefficients.
    at_zero: TdExpansion,
    pub rule: VolterraRule,
}

impl Parametrix {
    pub fn new(
        op: &ModelOperator,
        j_td: usize,
        j_rf: usize,
        n_volterra: usize,
        x_max: f64,
    ) -> Result<Self> {
        if j_td > 6 || j_rf > 6 {
            return param("truncation orders must be at most 6");
        }
        if n_volterra > 1 {
            return Err(HeatlabError::Unsupported(format!(
                "{n_volterra} Volterra terms; the iterated composition beyond one step is not implemented"
            )));
        }
        Ok(Parametrix {
            op: op.clone(),
            j_td,
            j_rf,
            n_volterra,
            table: TdTable::build(op, j_td, x_max, 2049),
            at_zero: TdExpansion::new(op, 0.0, j_td, j_td + j_rf + 5),
            rule: VolterraRule::default(),
        })
    }

    /// td series `A(t, x, y)`, with `y` allowed negative for the image term.
    fn td_series(&self, t: f64, x: f64, y: f64) -> f64 {
        let tau = t.sqrt();
        let zeta = (x - y) / tau;
        let g = (-zeta * zeta / 4.0).exp();
        (0..=self.j_td)
            .map(|j| tau.powi(j as i32 - 1) * eval_poly(&self.table.poly(j, x), zeta))
            .sum::<f64>()
            * g
    }

    /// `(d_t - Delta_op) A` from the first truncated level.
    fn td_residual(&self, t: f64, x: f64, y: f64) -> f64 {
        let tau = t.sqrt();
        let zeta = (x - y) / tau;
        let g = (-zeta * zeta / 4.0).exp();
        let j = self.j_td as i32;
        let r1 = eval_poly(&self.table.poly(self.j_td + 1, x), zeta);
        let r2 = eval_poly(&self.table.poly(self.j_td + 2, x), zeta);
        (tau.powi(j - 2) * r1 + tau.powi(j - 1) * r2) * g
    }

    /// Image-folded td approximant `H1`.
    pub fn h1(&self, t: f64, x: f64, y: f64) -> f64 {
        self.td_series(t, x, y) + self.td_series(t, x, -y)
    }

    /// `(d_t - Delta_op) H1`.
    pub fn h1_residual(&self, t: f64, x: f64, y: f64) -> f64 {
        self.td_residual(t, x, y) + self.td_residual(t, x, -y)
    }

    /// Taylor coefficients `e_k(t, y)` of the H1 residual at `x = 0`, `k < count`.
    pub fn residual_taylor_at_boundary(&self, t: f64, y: f64, count: usize) -> Vec<f64> {
        let tau = t.sqrt();
        let e = &self.at_zero;
        let order = e.r1[0].order();
        let mut total = Jet::constant(0.0, order);
        for s in [1.0, -1.0] {
            // zeta(x) = (x - s y)/tau as a jet in x at 0.
            let mut zc = vec![0.0; order + 1];
            zc[0] = -s * y / tau;
            if order > 0 {
                zc[1] = 1.0 / tau;
            }
            let zeta = Jet(zc);
            let g = (zeta.clone() * zeta.clone()).scale(-0.25).exp();
            let horner = |p: &[Jet]| {
                p.iter().rev().fold(Jet::constant(0.0, order), |acc, c| {
                    acc * zeta.clone() + c.clone()
                })
            };
            let j = self.j_td as i32;
            let val = horner(&e.r1).scale(tau.powi(j - 2)) + horner(&e.r2).scale(tau.powi(j - 1));
            total = total + val * g;
        }
        (0..count)
            .map(|k| total.0.get(k).copied().unwrap_or(0.0))
            .collect()
    }

    /// Right-face coefficients `J_j(t, y)`, `j = 2..=j_rf+1`, solving
    /// `N_rf^j J_j = -e_{j-2}`.
    pub fn rf_coefficients(&self, t: f64, y: f64) -> Result<Vec<f64>> {
        let e = self.residual_taylor_at_boundary(t, y, self.j_rf);
        (2..self.j_rf + 2)
            .map(|j| Ok(solve_rf(j, &[-e[j - 2]])?[0]))
            .collect()
    }

    /// `H2 = H1 + sum_j x^j J_j(t, y) chi(x/y)`.
    pub fn h2(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        let mut v = self.h1(t, x, y);
        if self.j_rf > 0 && y > 0.0 {
            let chi = rf_cutoff(x / y);
            if chi > 0.0 {
                for (k, jj) in self.rf_coefficients(t, y)?.iter().enumerate() {
                    v += chi * x.powi(k as i32 + 2) * jj;
                }
            }
        }
        Ok(v)
    }

    /// Full approximant: `H2 - H2 * E` when one Volterra step is requested.
    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        let base = self.h2(t, x, y)?;
        if self.n_volterra == 0 {
            return Ok(base);
        }
        let a = |s: f64, p: f64, q: f64| self.h2(s, p, q).unwrap_or(f64::NAN);
        let b = |s: f64, p: f64, q: f64| self.h1_residual(s, p, q);
        let corr = volterra_compose(&a, &b, t, x, y, &self.rule)?;
        Ok(base - corr.value)
    }
}

// ---------------------------------------------------------------------------
// Volterra composition

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolterraRule {
    /// Gauss-Legendre nodes in `u` after `s = t u^2`.
    pub time_nodes: usize,
    /// Gauss-Legendre nodes per spatial panel.
    pub panel_nodes: usize,
    /// Multiples of `sqrt(t)` kept beyond the larger of `x`, `y`.
    pub reach: f64,
}

impl Default for VolterraRule {
    fn default() -> Self {
        VolterraRule {
            time_nodes: 32,
            panel_nodes: 12,
            reach: 14.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VolterraValue {
    pub value: f64,
    /// Difference to the same composition with half the nodes.
    pub gap: f64,
}

pub type TimeKernel<'a> = &'a (dyn Fn(f64, f64, f64) -> f64 + Sync);

fn panel_edges(t: f64, s: f64, x: f64, y: f64, reach: f64) -> Vec<f64> {
    let zmax = x.max(y) + reach * t.sqrt();
    let mut e = vec![0.0, zmax];
    let coarse = 0.5 * t.sqrt();
    let mut z = coarse;
    while z < zmax {
        e.push(z);
        z += coarse;
    }
    for (c, w) in [(x, (t - s).max(0.0).sqrt()), (y, s.sqrt())] {
        let w = w.max(1e-12);
        for k in 0..8 {
            let d = w * 2f64.powi(k);
            e.push(c - d);
            e.push(c + d);
        }
        e.push(c);
    }
    e.retain(|v| (0.0..=zmax).contains(v));
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    e
}

fn compose_once(a: TimeKernel, b: TimeKernel, t: f64, x: f64, y: f64, rule: &VolterraRule) -> f64 {
    let (u, wu) = gauss_legendre_on(0.0, 1.0, rule.time_nodes);
    let (gx, gw) = gauss_legendre(rule.panel_nodes);
    u.iter()
        .zip(&wu)
        .map(|(&ui, &wi)| {
            let s = t * ui * ui;
            let ds = 2.0 * t * ui * wi;
            let edges = panel_edges(t, s, x, y, rule.reach);
            let mut inner = 0.0;
            for p in edges.windows(2) {
                let (c, h) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
                for (g, w) in gx.iter().zip(&gw) {
                    let z = c + h * g;
                    inner += h * w * a(t - s, x, z) * b(s, z, y);
                }
            }
            ds * inner
        })
        .sum()
}

/// `(A * B)(t, x, y) = int_0^t ds int_0^inf A(t - s, x, z) B(s, z, y) dz`.
pub fn volterra_compose(
    a: TimeKernel,
    b: TimeKernel,
    t: f64,
    x: f64,
    y: f64,
    rule: &VolterraRule,
) -> Result<VolterraValue> {
    if !(t > 0.0) {
        return param("composition time must be positive");
    }
    let value = compose_once(a, b, t, x, y, rule);
    let coarse = VolterraRule {
        time_nodes: rule.time_nodes / 2,
        panel_nodes: rule.panel_nodes.div_ceil(2),
        ..*rule
    };
    let gap = (value - compose_once(a, b, t, x, y, &coarse)).abs();
    if !value.is_finite() {
        return Err(HeatlabError::Numerical(
            "non-finite Volterra composition".into(),
        ));
    }
    Ok(VolterraValue { value, gap })
}

// ---------------------------------------------------------------------------
// Reference kernel

struct Spectral {
    nodes: Vec<f64>,
    w: Vec<f64>,
    /// `sqrt(rho_i w_i)`.
    sq: Vec<f64>,
    q: DMatrix<f64>,
    lam: DVector<f64>,
}

impl Spectral {
    fn new(op: &ModelOperator, x_max: f64, n: usize) -> Result<(Self, f64)> {
        let h = x_max / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let mut w = vec![h; n];
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
        // rho = exp(B), B' = b, at nodes and midpoints.
        let (gx, gw) = gauss_legendre_on(0.0, 1.0, 4);
        let mut big_b = vec![0.0; 2 * n - 1];
        for k in 1..2 * n - 1 {
            let (a, len) = ((k - 1) as f64 * 0.5 * h, 0.5 * h);
            let inc: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(g, wt)| wt * len * op.b_at(a + g * len))
                .sum();
            big_b[k] = big_b[k - 1] + inc;
        }
        let rho = |k2: usize| big_b[k2].exp();
        let c: Vec<f64> = nodes.iter().map(|&x| op.c_at(x)).collect();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let scale = 1.0 / (rho(2 * i) * w[i] * h);
            if i > 0 {
                let f = rho(2 * i - 1) * scale;
                a[(i, i - 1)] += f;
                a[(i, i)] -= f;
            }
            if i + 1 < n {
                let f = rho(2 * i + 1) * scale;
                a[(i, i + 1)] += f;
                a[(i, i)] -= f;
            }
            a[(i, i)] += c[i];
        }
        let sq: Vec<f64> = (0..n).map(|i| (rho(2 * i) * w[i]).sqrt()).collect();
        let mut s = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = sq[i] * a[(i, j)] / sq[j];
            }
        }
        let asym = (&s - s.transpose()).amax() / s.amax().max(1e-300);
        let s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(s);
        Ok((
            Spectral {
                nodes,
                w,
                sq,
                q: eig.eigenvectors,
                lam: eig.eigenvalues,
            },
            asym,
        ))
    }

    /// Kernel values `K(t, x_i, y_j)` for nodes `i, j` in `idx`.
    fn kernel(&self, t: f64, idx: &[usize]) -> DMatrix<f64> {
        let m = idx.len();
        let e: Vec<f64> = self.lam.iter().map(|l| (t * l).exp()).collect();
        let rows = DMatrix::from_fn(m, self.lam.len(), |a, k| self.q[(idx[a], k)] * e[k]);
        let cols = DMatrix::from_fn(self.lam.len(), m, |k, b| self.q[(idx[b], k)]);
        let prod = rows * cols;
        DMatrix::from_fn(m, m, |a, b| {
            let (i, j) = (idx[a], idx[b]);
            prod[(a, b)] * self.sq[j] / (self.sq[i] * self.w[j])
        })
    }
}

/// Finite-difference heat kernel of the model operator on `[0, x_max]` with
/// Neumann rows at both ends, Richardson-extrapolated over `n` and `2n - 1` nodes.
pub struct ReferenceKernel {
    coarse: Spectral,
    fine: Spectral,
    pub sym_residual: f64,
}

impl ReferenceKernel {
    pub fn new(op: &ModelOperator, x_max: f64, n: usize) -> Result<Self> {
        if n < 9 {
            return param("reference grid needs at least 9 nodes");
        }
        let (coarse, r1) = Spectral::new(op, x_max, n)?;
        let (fine, r2) = Spectral::new(op, x_max, 2 * n - 1)?;
        let sym_residual = r1.max(r2);
        if sym_residual > 1e-10 {
            return Err(HeatlabError::Numerical(format!(
                "discretization not symmetric: residual {sym_residual:e}"
            )));
        }
        Ok(ReferenceKernel {
            coarse,
            fine,
            sym_residual,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.coarse.nodes
    }

    /// Extrapolated kernel on the coarse nodes listed in `idx`.
    pub fn kernel(&self, t: f64, idx: &[usize]) -> Result<DMatrix<f64>> {
        if !(t > 0.0) {
            return param("reference kernel time must be positive");
        }
        let kc = self.coarse.kernel(t, idx);
        let fine_idx: Vec<usize> = idx.iter().map(|i| 2 * i).collect();
        let kf = self.fine.kernel(t, &fine_idx);
        Ok((kf * 4.0 - kc) / 3.0)
    }
}

/// Extrapolated reference kernel matrix at every coarse node.
pub fn reference_kernel(op: &ModelOperator, t: f64, x_max: f64, n: usize) -> Result<DMatrix<f64>> {
    let r = ReferenceKernel::new(op, x_max, n)?;
    r.kernel(t, &(0..n).collect::<Vec<_>>())
}

// ---------------------------------------------------------------------------
// Build and error report

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParametrixConfig {
    pub t_list: Vec<f64>,
    /// Truncation of the half-line for the reference solver and the td table.
    pub x_max: f64,
    /// Coarse node count of the reference solver.
    pub n_ref: usize,
    /// Errors are measured for `x, y` in `[0, eval_max]`.
    pub eval_max: f64,
    pub eval_points: usize,
    /// Only pairs with `|x - y| <= zeta_max sqrt(t)` enter the error, when set.
    #[serde(default)]
    pub zeta_max: Option<f64>,
}

impl Default for ParametrixConfig {
    fn default() -> Self {
        ParametrixConfig {
            t_list: vec![0.01, 0.005],
            x_max: 1.5,
            n_ref: 513,
            eval_max: 0.6,
            eval_points: 13,
            zeta_max: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRow {
    pub t: f64,
    pub sup_error: f64,
    pub sup_reference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParametrixReport {
    pub operator: String,
    pub j_td: usize,
    pub j_rf: usize,
    pub n_volterra: usize,
    /// `closed_form` when `e^{ct}` times the image kernel is exact, else `finite_difference`.
    pub reference: String,
    pub rows: Vec<ErrorRow>,
    /// Largest Volterra quadrature gap seen.
    pub volterra_gap: f64,
}

/// Closed-form kernel `e^{ct} K_N(t, x, y)` for `b = 0`, constant `c`.
pub fn closed_form_kernel(c: f64, t: f64, x: f64, y: f64) -> f64 {
    (c * t).exp() * (crate::kernels::gauss(t, x - y) + crate::kernels::gauss(t, x + y))
}

/// Half-line Neumann kernel as a time kernel.
pub fn neumann_half_line(t: f64, x: f64, y: f64) -> f64 {
    closed_form_kernel(0.0, t, x, y)
}

pub fn build_parametrix(
    op: &ModelOperator,
    j_td: usize,
    j_rf: usize,
    n_volterra: usize,
    cfg: &ParametrixConfig,
) -> Result<(Parametrix, ParametrixReport)> {
    let par = Parametrix::new(op, j_td, j_rf, n_volterra, cfg.x_max)?;
    let reference = if op.constant_c.is_some() {
        "closed_form"
    } else {
        "finite_difference"
    };
    let fd = if op.constant_c.is_none() {
        Some(ReferenceKernel::new(op, cfg.x_max, cfg.n_ref)?)
    } else {
        None
    };
    // Evaluation points on reference nodes.
    let h = cfg.x_max / (cfg.n_ref - 1) as f64;
    let last = ((cfg.eval_max / h).round() as usize).min(cfg.n_ref - 1);
    let m = cfg.eval_points.max(2);
    let idx: Vec<usize> = (0..m).map(|k| k * last / (m - 1)).collect();
    let pts: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
    let mut rows = Vec::new();
    let mut gap_max = 0.0f64;
    for &t in &cfg.t_list {
        let refm = match &fd {
            Some(r) => r.kernel(t, &idx)?,
            None => {
                let c = op.constant_c.unwrap_or(0.0);
                DMatrix::from_fn(m, m, |a, b| closed_form_kernel(c, t, pts[a], pts[b]))
            }
        };
        let window = cfg.zeta_max.map_or(f64::INFINITY, |z| z * t.sqrt());
        let pairs: Vec<(usize, usize)> = (0..m)
            .flat_map(|a| (0..m).map(move |b| (a, b)))
            .filter(|&(a, b)| (pts[a] - pts[b]).abs() <= window)
            .collect();
        let vals: Vec<(f64, f64)> = pairs
            .par_iter()
            .map(|&(a, b)| -> Result<(f64, f64)> {
                let (x, y) = (pts[a], pts[b]);
                let base = par.h2(t, x, y)?;
                if par.n_volterra == 0 {
                    return Ok((base, 0.0));
                }
                let ak = |s: f64, p: f64, q: f64| par.h2(s, p, q).unwrap_or(f64::NAN);
                let bk = |s: f64, p: f64, q: f64| par.h1_residual(s, p, q);
                let v = volterra_compose(&ak, &bk, t, x, y, &par.rule)?;
                Ok((base - v.value, v.gap))
            })
            .collect::<Result<_>>()?;
        let mut sup_error = 0.0f64;
        let mut sup_reference = 0.0f64;
        for (k, &(a, b)) in pairs.iter().enumerate() {
            sup_error = sup_error.max((vals[k].0 - refm[(a, b)]).abs());
            sup_reference = sup_reference.max(refm[(a, b)].abs());
            gap_max = gap_max.max(vals[k].1);
        }
        rows.push(ErrorRow {
            t,
            sup_error,
            sup_reference,
        });
    }
    let report = ParametrixReport {
        operator: op.name.clone(),
        j_td,
        j_rf,
        n_volterra,
        reference: reference.to_string(),
        rows,
        volterra_gap: gap_max,
    };
    Ok((par, report))
}
