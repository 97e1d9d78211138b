//! Heat-flow Littlewood-Paley pieces and the diagnostics built on them.
//!
//! `P_{<=N} = e^{Delta / N^2}` and `P_N = P_{<=N} - P_{<=N/2}`. Dyadic ladders
//! are classified as vanishing or plateau by [`classify`].

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{combine_lp, multi_indices, region_mask, sobolev_norm, Field, Grid, Region};
use crate::error::{param, HeatlabError, Result};
use crate::kernels::{apply_heat, linear_fit, ClosedFormKernel};
use crate::quadrature::gauss_legendre;
use crate::spectral::{self, Extension};

/// Log2-slope of the last three rungs at or below which a ladder counts as vanishing.
pub const SLOPE_THRESHOLD: f64 = -0.15;
/// Last rung below this fraction of the largest rung counts as vanishing.
pub const REL_FLOOR: f64 = 1e-6;
/// Last rung below this fraction of `||X||_{L^p(M_{>r})}` counts as vanishing.
pub const ABS_FLOOR: f64 = 1e-7;
pub const MIN_RUNGS: usize = 5;

pub fn classifier_rule() -> String {
    format!(
        "vanishing iff log2-slope of last 3 rungs <= {SLOPE_THRESHOLD} per octave, \
         or last rung < {REL_FLOOR:e} x max rung, or < {ABS_FLOOR:e} x ||X||_Lp(M>r); \
         fewer than {MIN_RUNGS} rungs is inconclusive"
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Vanishing,
    Plateau,
    Inconclusive,
}

/// Classify a ladder ordered by increasing N; `scale` is the field's local L^p size.
pub fn classify(values: &[f64], scale: f64) -> Classification {
    if values.len() < MIN_RUNGS {
        return Classification::Inconclusive;
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    let last = *values.last().unwrap();
    if max == 0.0 || last < REL_FLOOR * max || last < ABS_FLOOR * scale {
        return Classification::Vanishing;
    }
    match tail_slope(values) {
        Some(s) if s > SLOPE_THRESHOLD => Classification::Plateau,
        _ => Classification::Vanishing,
    }
}

/// Fitted log2-slope of the last three rungs.
pub fn tail_slope(values: &[f64]) -> Option<f64> {
    if values.len() < 3 {
        return None;
    }
    let tail = &values[values.len() - 3..];
    let y: Vec<f64> = tail.iter().map(|v| v.log2()).collect();
    let s = linear_fit(&[0.0, 1.0, 2.0], &y).1;
    s.is_finite().then_some(s)
}

/// Powers of two `2^lo ..= 2^hi`.
pub fn dyadic_range(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|j| 2f64.powi(j)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicLadder {
    pub quantity: String,
    pub n: Vec<f64>,
    pub values: Vec<f64>,
}

impl DyadicLadder {
    pub fn new(quantity: impl Into<String>, n: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_dyadic(&n)?;
        if n.len() != values.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(HeatlabError::Numerical(
                "ladder values must be finite, one per rung".into(),
            ));
        }
        Ok(DyadicLadder {
            quantity: quantity.into(),
            n,
            values,
        })
    }

    pub fn classify(&self, scale: f64) -> Classification {
        classify(&self.values, scale)
    }
}

fn check_dyadic(n: &[f64]) -> Result<()> {
    for &v in n {
        if !(v > 0.0 && v.log2().fract() == 0.0) {
            return param(format!("ladder key {v} is not a power of two"));
        }
    }
    if n.windows(2).any(|w| w[1] <= w[0]) {
        return param("ladder keys must be strictly increasing");
    }
    Ok(())
}

pub fn project_leq(kernel: &ClosedFormKernel, field: &Field, n: f64) -> Result<Field> {
    if !(n > 0.0 && n.is_finite()) {
        return param(format!("frequency must be positive, got {n}"));
    }
    apply_heat(kernel, field, 1.0 / (n * n))
}

pub fn band(kernel: &ClosedFormKernel, field: &Field, n: f64) -> Result<Field> {
    if !(n > 1.0) {
        return param(format!("band index must exceed 1, got {n}"));
    }
    Ok(project_leq(kernel, field, n)?.sub(&project_leq(kernel, field, n / 2.0)?))
}

fn field_lp(field: &Field, p: f64, mask: Option<&[bool]>) -> f64 {
    let parts: Vec<f64> = field
        .comps
        .iter()
        .map(|c| field.grid.lp_norm(c, p, mask))
        .collect();
    combine_lp(&parts, p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BernsteinRow {
    pub n: f64,
    /// `||P_N X||_p N^2 / ||P_{<=sqrt2 N} X||_{W^{2,p}}`; `None` when the reference norm vanishes.
    pub r1: Option<f64>,
    /// `||P_N X||_p N / ||P_{<=2N} X||_{W^{1,p}}`.
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BernsteinTable {
    pub p: f64,
    pub rows: Vec<BernsteinRow>,
    pub max_ratio: f64,
    pub skipped: usize,
}

pub fn global_bernstein_check(
    kernel: &ClosedFormKernel,
    field: &Field,
    ns: &[f64],
    p: f64,
) -> Result<BernsteinTable> {
    let size = field_lp(field, p, None);
    let floor = 1e-14 * size;
    let rows: Vec<BernsteinRow> = ns
        .par_iter()
        .map(|&n| -> Result<BernsteinRow> {
            let pn = field_lp(&band(kernel, field, n)?, p, None);
            let w2 = sobolev_norm(&project_leq(kernel, field, 2f64.sqrt() * n)?, 2, p, None)?;
            let w1 = sobolev_norm(&project_leq(kernel, field, 2.0 * n)?, 1, p, None)?;
            let ratio = |num: f64, den: f64| (den > floor && den > 0.0).then(|| num / den);
            Ok(BernsteinRow {
                n,
                r1: ratio(pn * n * n, w2),
                r2: ratio(pn * n, w1),
            })
        })
        .collect::<Result<_>>()?;
    let ratios = rows.iter().flat_map(|r| [r.r1, r.r2]);
    let skipped = ratios.clone().filter(|r| r.is_none()).count();
    let max_ratio = ratios.flatten().fold(0.0, f64::max);
    Ok(BernsteinTable {
        p,
        rows,
        max_ratio,
        skipped,
    })
}

/// `||e^{t Delta} X||_{W^{m,p}(mask)}` with derivatives taken analytically on the
/// kernel and every integral done by direct quadrature, so exponentially small
/// values keep their relative accuracy.
pub fn heat_sobolev_direct(
    kernel: &ClosedFormKernel,
    field: &Field,
    t: f64,
    m: u32,
    p: f64,
    mask: &[bool],
) -> Result<f64> {
    let grid = &field.grid;
    let (n0, n1) = grid.shape();
    let mut parts = Vec::new();
    for (c, comp) in field.comps.iter().enumerate() {
        let axes = &kernel.comps[c];
        let mut cache: Vec<Vec<Option<nalgebra::DMatrix<f64>>>> =
            vec![vec![None, None, None]; grid.dim()];
        for gamma in multi_indices(grid.dim(), m) {
            let mut cur = comp.clone();
            for (a, &ord) in gamma.iter().enumerate() {
                if cache[a][ord as usize].is_none() {
                    cache[a][ord as usize] = Some(axes[a].dense_operator(&grid.axes[a], t, ord)?);
                }
                let mat = cache[a][ord as usize].as_ref().unwrap();
                let mut out = vec![0.0; cur.len()];
                spectral::for_each_line(&cur, n0, n1, a, &mut out, |line, o| {
                    let v = mat * nalgebra::DVector::from_column_slice(line);
                    o.copy_from_slice(v.as_slice());
                });
                cur = out;
            }
            parts.push(grid.lp_norm(&cur, p, Some(mask)));
        }
    }
    Ok(combine_lp(&parts, p))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalBernsteinReport {
    pub r: f64,
    pub m1: u32,
    pub m2: u32,
    pub p: f64,
    pub n: Vec<f64>,
    /// `||P_{<=N} X||_{W^{m1+m2,p}(M_{>=2r})}`.
    pub lhs: Vec<f64>,
    /// `N^{m2} ||X||_{W^{m1,p}(M_{>=r})}`.
    pub rhs_main: Vec<f64>,
    /// `||X||_{L^p(M_{<=3r})}`.
    pub rhs_tail: f64,
    pub boundary_supported: bool,
    /// Minus the fitted slope of `log LHS` against `log N` (boundary-supported fields only).
    pub decay_order: Option<f64>,
    /// Largest `LHS / rhs_main` over the sweep.
    pub max_ratio: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn local_bernstein_check(
    kernel: &ClosedFormKernel,
    field: &Field,
    r: f64,
    m1: u32,
    m2: u32,
    p: f64,
    ns: &[f64],
) -> Result<LocalBernsteinReport> {
    let grid = &field.grid;
    let inr = grid.domain.inradius();
    if !(r > 0.0 && 3.0 * r < inr) {
        return param(format!(
            "radius {r} must lie in (0, inradius/3 = {})",
            inr / 3.0
        ));
    }
    if m1 + m2 > 2 {
        return Err(HeatlabError::Unsupported("m1 + m2 > 2".into()));
    }
    let inner = region_mask(grid, Region::Greater(2.0 * r))?;
    let outer = region_mask(grid, Region::Greater(r))?;
    let strip = region_mask(grid, Region::Less(3.0 * r))?;
    if !inner.iter().any(|&b| b) {
        return param("region M_{>=2r} is empty on this grid");
    }
    let x_main = sobolev_norm(field, m1, p, Some(&outer))?;
    let rhs_tail = field_lp(field, p, Some(&strip));
    let lhs: Vec<f64> = ns
        .iter()
        .map(|&n| heat_sobolev_direct(kernel, field, 1.0 / (n * n), m1 + m2, p, &inner))
        .collect::<Result<_>>()?;
    let rhs_main: Vec<f64> = ns.iter().map(|n| n.powi(m2 as i32) * x_main).collect();
    let boundary_supported = field_lp(field, p, Some(&outer)) == 0.0 && rhs_tail > 0.0;
    let decay_order = if boundary_supported && lhs.iter().all(|&v| v > 0.0) {
        let lx: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
        let ly: Vec<f64> = lhs.iter().map(|v| v.ln()).collect();
        Some(-linear_fit(&lx, &ly).1)
    } else {
        None
    };
    let max_ratio = (x_main > 0.0).then(|| {
        lhs.iter()
            .zip(&rhs_main)
            .map(|(a, b)| a / b)
            .fold(0.0, f64::max)
    });
    Ok(LocalBernsteinReport {
        r,
        m1,
        m2,
        p,
        n: ns.to_vec(),
        lhs,
        rhs_main,
        rhs_tail,
        boundary_supported,
        decay_order,
        max_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BesovQ {
    One,
    Infinity,
}

impl BesovQ {
    pub fn from_f64(q: f64) -> Result<Self> {
        if q == 1.0 {
            Ok(BesovQ::One)
        } else if q == f64::INFINITY {
            Ok(BesovQ::Infinity)
        } else {
            Err(HeatlabError::Unsupported(format!(
                "Besov index q={q}; only 1 and infinity are implemented"
            )))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesovProfile {
    pub alpha: f64,
    pub p: f64,
    pub r: Option<f64>,
    /// Log-spaced, strictly decreasing in (0, 1].
    pub s: Vec<f64>,
    /// `s^{(1-alpha)/2} ||e^{s Delta} X||_{W^{1,p}}`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesovReport {
    pub lp: f64,
    /// `||X||_p + ||profile||_{L^q(ds/s)}`.
    pub integral: f64,
    /// `||X||_p + ||N^{alpha-1} ||P_{<=N} X||_{W^{1,p}}||_{l^q}`.
    pub dyadic: f64,
    pub ratio: f64,
    pub profile: BesovProfile,
    pub ladder: DyadicLadder,
}

/// Sub-steps per factor 4 in s on the profile grid.
const PROFILE_STEPS: usize = 8;

/// Heat Besov norm in integral and dyadic form, with `N` up to `n_max` (a power of two).
pub fn besov_heat_norm(
    kernel: &ClosedFormKernel,
    field: &Field,
    alpha: f64,
    p: f64,
    q: BesovQ,
    n_max: f64,
) -> Result<BesovReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return param(format!("alpha={alpha} outside (0, 1)"));
    }
    check_dyadic(&[n_max])?;
    let levels = n_max.log2().round().max(0.0) as usize;
    let s: Vec<f64> = (0..=levels * PROFILE_STEPS)
        .map(|i| 4f64.powf(-(i as f64) / PROFILE_STEPS as f64))
        .collect();
    let values: Vec<f64> = s
        .par_iter()
        .map(|&si| {
            Ok(si.powf(0.5 * (1.0 - alpha))
                * sobolev_norm(&apply_heat(kernel, field, si)?, 1, p, None)?)
        })
        .collect::<Result<_>>()?;
    let ladder_n = dyadic_range(0, levels as i32);
    let ladder_v: Vec<f64> = (0..=levels).map(|j| values[j * PROFILE_STEPS]).collect();
    let lp = field_lp(field, p, None);
    let (integral_part, dyadic_part) = match q {
        BesovQ::Infinity => (
            values.iter().cloned().fold(0.0, f64::max),
            ladder_v.iter().cloned().fold(0.0, f64::max),
        ),
        BesovQ::One => {
            let dl = 4f64.ln() / PROFILE_STEPS as f64;
            let integral = values.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dl).sum();
            (integral, ladder_v.iter().sum())
        }
    };
    let integral = lp + integral_part;
    let dyadic = lp + dyadic_part;
    let ratio = if dyadic > 0.0 { integral / dyadic } else { 1.0 };
    Ok(BesovReport {
        lp,
        integral,
        dyadic,
        ratio,
        profile: BesovProfile {
            alpha,
            p,
            r: None,
            s,
            values,
        },
        ladder: DyadicLadder::new("N^(alpha-1) ||P_<=N X||_W1p", ladder_n, ladder_v)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VanishingReport {
    pub p: f64,
    pub r: f64,
    pub tails: Vec<DyadicLadder>,
    pub classes: Vec<Classification>,
    pub classification: Classification,
    pub agree: bool,
    pub plateau_level: Option<f64>,
    pub rule: String,
}

/// The three localized critical tails and their classifications.
pub fn vanishing_diagnostic(
    kernel: &ClosedFormKernel,
    field: &Field,
    p: f64,
    r: f64,
    ns: &[f64],
) -> Result<VanishingReport> {
    check_dyadic(ns)?;
    let mask = region_mask(&field.grid, Region::Greater(r))?;
    if !mask.iter().any(|&b| b) {
        return param(format!("region M_(>{r}) is empty"));
    }
    let scale = field_lp(field, p, Some(&mask));
    let rows: Vec<[f64; 3]> = ns
        .par_iter()
        .map(|&n| -> Result<[f64; 3]> {
            let low = project_leq(kernel, field, n)?;
            let half = project_leq(kernel, field, n / 2.0)?;
            let c1 = n.powf(1.0 / p - 1.0) * sobolev_norm(&low, 1, p, Some(&mask))?;
            let c2 = n.powf(1.0 / p) * field_lp(&low.sub(&half), p, Some(&mask));
            let c3 = n.powf(1.0 / p) * field_lp(&field.sub(&low), p, Some(&mask));
            Ok([c1, c2, c3])
        })
        .collect::<Result<_>>()?;
    let names = [
        "N^(1/p-1) ||P_<=N X||_W1p(M>r)",
        "N^(1/p) ||P_N X||_Lp(M>r)",
        "N^(1/p) ||P_>N X||_Lp(M>r)",
    ];
    let tails: Vec<DyadicLadder> = (0..3)
        .map(|i| {
            DyadicLadder::new(
                names[i],
                ns.to_vec(),
                rows.iter().map(|row| row[i]).collect(),
            )
        })
        .collect::<Result<_>>()?;
    let classes: Vec<Classification> = tails.iter().map(|t| t.classify(scale)).collect();
    let agree = classes.iter().all(|c| *c == classes[0]);
    let classification = if agree {
        classes[0]
    } else {
        Classification::Inconclusive
    };
    let plateau_level = (classification == Classification::Plateau).then(|| {
        let v = &tails[0].values;
        v[v.len() - 3..].iter().sum::<f64>() / 3.0
    });
    Ok(VanishingReport {
        p,
        r,
        tails,
        classes,
        classification,
        agree,
        plateau_level,
        rule: classifier_rule(),
    })
}

/// Translation vectors and weights averaging over the unit ball.
fn ball_rule(dim: usize) -> Vec<([f64; 2], f64)> {
    if dim == 1 {
        let (x, w) = gauss_legendre(32);
        return x
            .iter()
            .zip(&w)
            .map(|(&a, &b)| ([a, 0.0], 0.5 * b))
            .collect();
    }
    // 4 radial nodes for the weight r dr on [0, 1], 8 equiangular directions.
    let (x, w) = gauss_legendre(4);
    let mut out = Vec::with_capacity(32);
    for (xi, wi) in x.iter().zip(&w) {
        let rho = 0.5 * (xi + 1.0);
        let radial = 0.5 * wi * rho * 2.0;
        for k in 0..8 {
            let th = 2.0 * PI * k as f64 / 8.0;
            out.push(([rho * th.cos(), rho * th.sin()], radial / 8.0));
        }
    }
    out
}

fn shift_component(grid: &Grid, field: &Field, c: usize, shift: [f64; 2]) -> Vec<f64> {
    let (n0, n1) = grid.shape();
    let mut cur = field.comps[c].clone();
    for a in 0..grid.dim() {
        if shift[a] == 0.0 {
            continue;
        }
        let ax = grid.axes[a];
        let ext = ax.extension_for(field.bc[c][a]);
        let period = if ext == Extension::Periodic {
            ax.len
        } else {
            2.0 * ax.len
        };
        let mult = spectral::shift_multiplier(ext.period_len(ax.n), period, shift[a]);
        let mut out = vec![0.0; cur.len()];
        spectral::for_each_line(&cur, n0, n1, a, &mut out, |line, o| {
            spectral::apply_multiplier(line, ext, &mult, o)
        });
        cur = out;
    }
    cur
}

/// `A_r(eps) = eps^{-1/p} || ||X(x - eps h) - X(x)||_{L^p_h(|h|<=1)} ||_{L^p_x(M_{>r})}`,
/// with translated samples obtained by exact spectral shifts.
pub fn vmo_modulus(field: &Field, p: f64, r: f64, eps: &[f64]) -> Result<Vec<f64>> {
    vmo_generic(&field.grid, field.comps.len(), p, r, eps, |c, shift| {
        let moved = shift_component(&field.grid, field, c, shift);
        moved
            .iter()
            .zip(&field.comps[c])
            .map(|(a, b)| a - b)
            .collect()
    })
}

/// [`vmo_modulus`] for a field known in closed form; translations are evaluated exactly.
pub fn vmo_modulus_exact(
    grid: &Grid,
    f: &ExactFn,
    p: f64,
    r: f64,
    eps: &[f64],
) -> Result<Vec<f64>> {
    let dim = grid.dim();
    vmo_generic(grid, 1, p, r, eps, |_, shift| {
        (0..grid.len())
            .map(|k| {
                let x = grid.point(k);
                let moved = [x[0] - shift[0], x[1] - shift[1]];
                f(&moved[..dim]) - f(&x[..dim])
            })
            .collect()
    })
}

fn vmo_generic(
    grid: &Grid,
    ncomp: usize,
    p: f64,
    r: f64,
    eps: &[f64],
    diff: impl Fn(usize, [f64; 2]) -> Vec<f64> + Sync,
) -> Result<Vec<f64>> {
    let mask = region_mask(grid, Region::Greater(r))?;
    if let Some(&e) = eps.iter().find(|&&e| !(e > 0.0 && e < r)) {
        return param(format!("translation length {e} must lie in (0, r = {r})"));
    }
    let rule = ball_rule(grid.dim());
    eps.par_iter()
        .map(|&e| {
            let mut acc = vec![0.0; grid.len()];
            for (h, w) in &rule {
                for c in 0..ncomp {
                    let d = diff(c, [e * h[0], e * h[1]]);
                    for (a, v) in acc.iter_mut().zip(&d) {
                        *a += w * v.abs().powf(p);
                    }
                }
            }
            let pointwise: Vec<f64> = acc.iter().map(|v| v.powf(1.0 / p)).collect();
            Ok(e.powf(-1.0 / p) * grid.lp_norm(&pointwise, p, Some(&mask)))
        })
        .collect()
}

/// Closed-form scalar field on physical coordinates.
pub type ExactFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A named test field with its samples and, when known, its closed form.
#[derive(Clone)]
pub struct BatteryField {
    pub name: String,
    pub field: Field,
    pub exact: Option<ExactFn>,
}

impl std::fmt::Debug for BatteryField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BatteryField")
            .field("name", &self.name)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl BatteryField {
    pub fn from_fn(
        name: &str,
        grid: &Grid,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let exact: ExactFn = Arc::new(f);
        let e = exact.clone();
        BatteryField {
            name: name.to_string(),
            field: Field::scalar_fn(grid, move |x| e(x)),
            exact: Some(exact),
        }
    }

    pub fn sampled(name: &str, field: Field) -> Self {
        BatteryField {
            name: name.to_string(),
            field,
            exact: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    /// VMO modulus at `eps = 1/N`, keyed by N.
    pub vmo: DyadicLadder,
    /// Heat tail `N^{1/p} ||P_{>N} X||_{L^p(M_{>r})}`.
    pub heat: DyadicLadder,
    pub vmo_class: Classification,
    pub heat_class: Classification,
    pub agree: bool,
}

pub fn vmo_vs_heat_compare(
    kernel: &ClosedFormKernel,
    battery: &[BatteryField],
    p: f64,
    r: f64,
    ns: &[f64],
) -> Result<Vec<CompareRow>> {
    let mut rows = Vec::with_capacity(battery.len());
    for BatteryField { name, field, exact } in battery {
        let mask = region_mask(&field.grid, Region::Greater(r))?;
        let scale = field_lp(field, p, Some(&mask));
        let eps: Vec<f64> = ns.iter().map(|n| 1.0 / n).collect();
        let a = match exact {
            Some(f) => vmo_modulus_exact(&field.grid, f, p, r, &eps)?,
            None => vmo_modulus(field, p, r, &eps)?,
        };
        let vmo = DyadicLadder::new("A_r(1/N)", ns.to_vec(), a)?;
        let diag = vanishing_diagnostic(kernel, field, p, r, ns)?;
        let heat = diag.tails[2].clone();
        let vmo_class = vmo.classify(scale);
        let heat_class = diag.classes[2];
        let agree = vmo_class == heat_class && vmo_class != Classification::Inconclusive;
        rows.push(CompareRow {
            name: name.clone(),
            vmo,
            heat,
            vmo_class,
            heat_class,
            agree,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierReport {
    pub s: Vec<f64>,
    /// `||f^s X^s - (f X)^s||_{W^{1,p}}`.
    pub w_norm: Vec<f64>,
    /// `s^{(1-1/p)/2} ||W(s)||_{W^{1,p}}`.
    pub scaled: Vec<f64>,
    pub x_lp: f64,
    /// `max_s ||W(s)||_{W^{1,p}} / ||X||_{L^p}`.
    pub c_max: f64,
    pub decreasing: bool,
    pub class_x: Classification,
    pub class_fx: Classification,
    pub agree: bool,
}

/// Commutator bound for multiplication by a smooth cutoff `f`, over a decreasing s sweep.
#[allow(clippy::too_many_arguments)]
pub fn pointwise_multiplier_check(
    kernel: &ClosedFormKernel,
    f: &Field,
    x: &Field,
    p: f64,
    r: f64,
    s_list: &[f64],
    ns: &[f64],
) -> Result<MultiplierReport> {
    if f.degree != 0 || f.grid != x.grid {
        return param("cutoff must be a scalar field on the same grid");
    }
    if s_list.windows(2).any(|w| w[1] >= w[0]) || s_list.iter().any(|&s| !(s > 0.0)) {
        return param("s sweep must be positive and strictly decreasing");
    }
    let fk = ClosedFormKernel::for_field(f)?;
    let fx = x.mul_scalar(&f.comps[0]);
    let w_norm: Vec<f64> = s_list
        .par_iter()
        .map(|&s| {
            let fs = apply_heat(&fk, f, s)?;
            let xs = apply_heat(kernel, x, s)?;
            let w = xs
                .mul_scalar(&fs.comps[0])
                .sub(&apply_heat(kernel, &fx, s)?);
            sobolev_norm(&w, 1, p, None)
        })
        .collect::<Result<_>>()?;
    let scaled: Vec<f64> = s_list
        .iter()
        .zip(&w_norm)
        .map(|(s, w)| s.powf(0.5 * (1.0 - 1.0 / p)) * w)
        .collect();
    let x_lp = field_lp(x, p, None);
    let c_max = if x_lp > 0.0 {
        w_norm.iter().cloned().fold(0.0, f64::max) / x_lp
    } else {
        0.0
    };
    let peak = scaled.iter().cloned().fold(0.0, f64::max);
    let decreasing = peak == 0.0
        || scaled
            .last()
            .is_some_and(|&l| l <= 0.5 * peak && l <= scaled[0]);
    let class_x = vanishing_diagnostic(kernel, x, p, r, ns)?.classification;
    let class_fx = vanishing_diagnostic(kernel, &fx, p, r, ns)?.classification;
    Ok(MultiplierReport {
        s: s_list.to_vec(),
        w_norm,
        scaled,
        x_lp,
        c_max,
        decreasing,
        class_x,
        class_fx,
        agree: class_x == class_fx,
    })
}

/// `sum_{j=1}^{J} w_j 2^{-j alpha} cos(2^j pi y / L)` with `w_j = 1` or `1/j`.
pub fn lacunary(y: f64, l: f64, depth: usize, alpha: f64, damped: bool) -> f64 {
    (1..=depth)
        .map(|j| {
            let w = if damped { 1.0 / j as f64 } else { 1.0 };
            w * 2f64.powf(-(j as f64) * alpha) * (2f64.powi(j as i32) * PI * y / l).cos()
        })
        .sum()
}

/// Smooth bump `exp(1 - 1/(1 - (y/w)^2))` on `y < w`.
pub fn boundary_bump(y: f64, w: f64) -> f64 {
    let z = y / w;
    if z.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - z * z)).exp()
    } else {
        0.0
    }
}

/// Six scalar test fields varying along the last (closed) axis: constant, smooth,
/// Lipschitz, plateau lacunary (alpha = 1/3), its 1/j-damped version and a
/// boundary bump.
pub fn standard_battery(grid: &Grid, depth: usize) -> Vec<BatteryField> {
    let a = grid.dim() - 1;
    let l = grid.axes[a].len;
    vec![
        BatteryField::from_fn("constant", grid, |_| 1.0),
        BatteryField::from_fn("smooth", grid, move |x| {
            (PI * x[a] / l).cos() + 0.5 * (3.0 * PI * x[a] / l).cos()
        }),
        BatteryField::from_fn("lipschitz", grid, move |x| (x[a] / l - 0.5).abs()),
        BatteryField::from_fn("lacunary", grid, move |x| {
            lacunary(x[a], l, depth, 1.0 / 3.0, false)
        }),
        BatteryField::from_fn("damped_lacunary", grid, move |x| {
            lacunary(x[a], l, depth, 1.0 / 3.0, true)
        }),
        BatteryField::from_fn("boundary_bump", grid, move |x| {
            boundary_bump(x[a], 0.05 * l)
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::Domain;

    fn interval_grid(n: usize) -> Grid {
        Grid::new(Domain::interval(1.0).unwrap(), &[n]).unwrap()
    }

    #[test]
    fn projection_of_eigenfunction() {
        let g = interval_grid(257);
        let f = Field::scalar_fn(&g, |p| (3.0 * PI * p[0]).cos());
        let k = ClosedFormKernel::for_field(&f).unwrap();
        for n in [2.0, 8.0, 30.0] {
            let out = project_leq(&k, &f, n).unwrap();
            let factor = (-9.0 * PI * PI / (n * n)).exp();
            assert!(out.sub(&f.scale(factor)).max_abs() < 1e-9);
        }
    }

    #[test]
    fn band_at_exact_frequency() {
        let g = interval_grid(257);
        let f = Field::scalar_fn(&g, |p| (2.0 * PI * p[0]).cos());
        let k = ClosedFormKernel::for_field(&f).unwrap();
        let b = band(&k, &f, 2.0 * PI).unwrap();
        let amp = b.comps[0][0];
        assert!((amp - 0.349_563_802_282_708_17).abs() < 1e-9, "{amp}");
    }

    #[test]
    fn bands_telescope() {
        let g = interval_grid(129);
        let f = Field::scalar_fn(&g, |p| (p[0] - 0.3).abs());
        let k = ClosedFormKernel::for_field(&f).unwrap();
        let mut acc = project_leq(&k, &f, 1.0).unwrap();
        for n in dyadic_range(1, 5) {
            acc = acc.add(&band(&k, &f, n).unwrap());
        }
        assert!(acc.sub(&project_leq(&k, &f, 32.0).unwrap()).max_abs() < 1e-13);
    }

    #[test]
    fn band_index_must_exceed_one() {
        let g = interval_grid(33);
        let f = Field::scalar_fn(&g, |_| 1.0);
        let k = ClosedFormKernel::for_field(&f).unwrap();
        assert!(band(&k, &f, 1.0).is_err());
        assert!(project_leq(&k, &f, 0.0).is_err());
    }

    #[test]
    fn classifier_cases() {
        assert_eq!(
            classify(&[1.0, 1.0, 1.0, 1.0], 1.0),
            Classification::Inconclusive
        );
        assert_eq!(
            classify(&[1.0, 1.1, 0.9, 1.0, 1.02], 1.0),
            Classification::Plateau
        );
        assert_eq!(
            classify(&[1.0, 0.5, 0.25, 0.125, 0.0625], 1.0),
            Classification::Vanishing
        );
        assert_eq!(classify(&[0.0; 6], 0.0), Classification::Vanishing);
        assert_eq!(
            classify(&[1.0, 1.0, 1.0, 1.0, 1e-9], 1.0),
            Classification::Vanishing
        );
    }

    #[test]
    fn zero_field_bernstein_skips_everything() {
        let g = interval_grid(129);
        let f = Field::scalar_fn(&g, |_| 0.0);
        let k = ClosedFormKernel::for_field(&f).unwrap();
        let t = global_bernstein_check(&k, &f, &[2.0, 4.0], 3.0).unwrap();
        assert_eq!(t.skipped, 4);
    }

    #[test]
    fn eigenfield_bernstein_ratios_match_closed_form() {
        let g = interval_grid(513);
        let kpi = 5.0 * PI;
        let f = Field::scalar_fn(&g, |p| (kpi * p[0]).cos());
        let k = ClosedFormKernel::for_field(&f).unwrap();
        let ns = dyadic_range(1, 6);
        let t = global_bernstein_check(&k, &f, &ns, 2.0).unwrap();
        for (row, n) in t.rows.iter().zip(&ns) {
            let a = kpi * kpi / (n * n);
            let band = (-a).exp() - (-4.0 * a).exp();
            let w2 = (-a / 2.0).exp() * (1.0 + kpi.powi(2) + kpi.powi(4)).sqrt();
            let w1 = (-a / 4.0).exp() * (1.0 + kpi.powi(2)).sqrt();
            let (r1, r2) = (band * n * n / w2, band * n / w1);
            if band < 1e-6 {
                // Amplitude below what a double-precision heat flow resolves.
                continue;
            }
            assert!((row.r1.unwrap() / r1 - 1.0).abs() < 1e-5, "N={n}");
            assert!((row.r2.unwrap() / r2 - 1.0).abs() < 1e-5, "N={n}");
        }
        assert!(t.max_ratio < 3.0);
    }

    #[test]
    fn besov_rejects_other_q() {
        assert!(matches!(
            BesovQ::from_f64(2.0),
            Err(HeatlabError::Unsupported(_))
        ));
    }

    #[test]
    fn zero_field_besov() {
        let g = interval_grid(129);
        let f = Field::scalar_fn(&g, |_| 0.0);
        let k = ClosedFormKernel::for_field(&f).unwrap();
        let b = besov_heat_norm(&k, &f, 0.5, 2.0, BesovQ::One, 16.0).unwrap();
        assert_eq!(b.integral, 0.0);
        assert_eq!(b.dyadic, 0.0);
    }

    #[test]
    fn vmo_of_constant_is_zero() {
        let g = Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[32, 33]).unwrap();
        let f = Field::scalar_fn(&g, |_| 2.5);
        let a = vmo_modulus(&f, 3.0, 0.3, &[0.25, 0.125]).unwrap();
        assert!(a.iter().all(|&v| v < 1e-12));
        assert!(vmo_modulus(&f, 3.0, 0.3, &[0.3]).is_err());
    }

    #[test]
    fn exact_and_spectral_vmo_agree_on_band_limited_field() {
        let g = Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[64, 65]).unwrap();
        let b = BatteryField::from_fn("c", &g, |x| (3.0 * PI * x[1]).cos() + x[0].sin());
        let eps = [0.2, 0.1, 0.05];
        let a = vmo_modulus(&b.field, 3.0, 0.3, &eps).unwrap();
        let e = vmo_modulus_exact(&g, b.exact.as_ref().unwrap(), 3.0, 0.3, &eps).unwrap();
        for (x, y) in a.iter().zip(&e) {
            assert!((x - y).abs() < 1e-10 * y);
        }
    }

    #[test]
    fn ball_rule_is_an_average() {
        for dim in [1, 2] {
            let rule = ball_rule(dim);
            let total: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
        // Mean of |h|^2 over the unit disc is 1/2.
        let m: f64 = ball_rule(2)
            .iter()
            .map(|(h, w)| w * (h[0] * h[0] + h[1] * h[1]))
            .sum();
        assert!((m - 0.5).abs() < 1e-14);
    }

    #[test]
    fn unit_multiplier_has_no_commutator() {
        let g = interval_grid(257);
        let x = Field::scalar_fn(&g, |p| (p[0] - 0.5).abs());
        let f = Field::scalar_fn(&g, |_| 1.0);
        let k = ClosedFormKernel::for_field(&x).unwrap();
        let rep =
            pointwise_multiplier_check(&k, &f, &x, 3.0, 0.2, &[0.01, 0.001], &dyadic_range(2, 6))
                .unwrap();
        assert!(rep.w_norm.iter().all(|&w| w < 1e-10));
    }
}
