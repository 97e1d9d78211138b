//! Steady velocity surrogates on the channel, boundary cutoffs, the heat
//! commutator `W(s)` with its Duhamel representation, energy-flux scaling,
//! and the strip-decay band average.
//!
//! Derivatives use even/odd reflection spectral differentiation along the
//! closed axis (odd for the normal component), so the grid pairing satisfies
//! `<<Div(A), Z>> = -<<A, grad Z>>` exactly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{region_mask, Domain, Field, Grid, Region};
use crate::error::{param, HeatlabError, Result};
use crate::kernels::{apply_heat, linear_fit, ClosedFormKernel};
use crate::lp_analysis::{classify, Classification};
use crate::quadrature::gauss_legendre_on;
use crate::spectral::{
    apply_multiplier, derivative_multiplier, for_each_line, wavenumber, Extension,
};
use rustfft::num_complex::Complex64;

/// Smooth step: 0 for `z <= 0`, 1 for `z >= 1`, built from `exp(-1/z)`.
pub fn smooth_step(z: f64) -> f64 {
    let e = |v: f64| if v > 0.0 { (-1.0 / v).exp() } else { 0.0 };
    if z <= 0.0 {
        0.0
    } else if z >= 1.0 {
        1.0
    } else {
        e(z) / (e(z) + e(1.0 - z))
    }
}

fn smooth_step_slope(z: f64) -> f64 {
    if z <= 0.0 || z >= 1.0 {
        return 0.0;
    }
    let (a, b) = ((-1.0 / z).exp(), (-1.0 / (1.0 - z)).exp());
    let (da, db) = (a / (z * z), -b / ((1.0 - z) * (1.0 - z)));
    (da * (a + b) - a * (da + db)) / ((a + b) * (a + b))
}

fn channel(grid: &Grid) -> Result<(f64, f64)> {
    match grid.domain {
        Domain::Channel { lx, ly } => Ok((lx, ly)),
        other => Err(HeatlabError::Unsupported(format!(
            "the Onsager lab runs on the channel, got {other:?}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Fields

/// Lacunary motif `(k0, m0)`: stream modes `sin(k0 2^j x' + phase) sin(m0 2^j pi y)`.
pub const MOTIF: [(u32, u32); 5] = [(1, 1), (2, 1), (1, 2), (3, 1), (2, 3)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    /// Stream mode `psi = amp sin(k x') sin(m pi y / ly)`, `x' = 2 pi x / lx`.
    Eigen { k: u32, m: u32, amp: f64 },
    /// Octaves `j = 0..=depth` of the motif with amplitude `2^{-j(1+alpha)}`
    /// (times `1/(j+1)` when damped), one random phase per motif
    /// mode shared by all octaves.
    Lacunary {
        alpha: f64,
        depth: u32,
        seed: u64,
        damped: bool,
    },
    /// Tangent shear `(cos(m pi y / ly), 0)`.
    Shear { m: u32 },
    /// Sum of stream modes `(k, m, amp)`.
    Stream { modes: Vec<(u32, u32, f64)> },
}

#[derive(Debug, Clone)]
pub struct SyntheticField {
    pub name: String,
    pub spec: FieldSpec,
    /// Target regularity exponent, when the construction has one.
    pub alpha: Option<f64>,
    pub divergence_free: bool,
    pub field: Field,
}

impl SyntheticField {
    /// Derived flux-scaling target `(3 alpha - 1)/2`.
    pub fn flux_target(&self) -> Option<f64> {
        self.alpha.map(|a| 1.5 * a - 0.5)
    }
}

fn stream_modes(grid: &Grid, modes: &[(f64, f64, f64, f64)]) -> Result<Field> {
    let (lx, ly) = channel(grid)?;
    let (n0, n1) = grid.shape();
    let kmax = modes.iter().fold(0.0f64, |m, v| m.max(v.0));
    let mmax = modes.iter().fold(0.0f64, |m, v| m.max(v.1));
    if kmax >= (n0 / 2) as f64 || mmax >= (n1 - 1) as f64 {
        return Err(HeatlabError::Aliasing(format!(
            "modes up to ({kmax}, {mmax}) exceed the grid Nyquist ({}, {})",
            n0 / 2 - 1,
            n1 - 2
        )));
    }
    let xs = grid.axes[0].nodes();
    let ys = grid.axes[1].nodes();
    let mut u = vec![0.0; grid.len()];
    let mut v = vec![0.0; grid.len()];
    for &(k, m, amp, ph) in modes {
        let (kx, ky) = (2.0 * PI * k / lx, PI * m / ly);
        let sx: Vec<f64> = xs.iter().map(|&x| (kx * x + ph).sin()).collect();
        let cx: Vec<f64> = xs.iter().map(|&x| (kx * x + ph).cos()).collect();
        let sy: Vec<f64> = ys.iter().map(|&y| (ky * y).sin()).collect();
        let cy: Vec<f64> = ys.iter().map(|&y| (ky * y).cos()).collect();
        for i in 0..n0 {
            for j in 0..n1 {
                u[i * n1 + j] += amp * ky * sx[i] * cy[j];
                v[i * n1 + j] -= amp * kx * cx[i] * sy[j];
            }
        }
    }
    Field::vector(grid, vec![u, v])
}

pub fn make_field(grid: &Grid, spec: &FieldSpec) -> Result<SyntheticField> {
    let (_, ly) = channel(grid)?;
    let (name, alpha, field) = match spec {
        FieldSpec::Eigen { k, m, amp } => (
            format!("eigen({k},{m})"),
            None,
            stream_modes(grid, &[(*k as f64, *m as f64, *amp, 0.0)])?,
        ),
        FieldSpec::Stream { modes } => {
            let m: Vec<_> = modes
                .iter()
                .map(|&(k, m, a)| (k as f64, m as f64, a, 0.0))
                .collect();
            ("stream".to_string(), None, stream_modes(grid, &m)?)
        }
        FieldSpec::Shear { m } => {
            let ys = grid.axes[1].nodes();
            let n1 = ys.len();
            let u = (0..grid.len())
                .map(|k| (*m as f64 * PI * ys[k % n1] / ly).cos())
                .collect();
            (
                format!("shear({m})"),
                None,
                Field::vector(grid, vec![u, vec![0.0; grid.len()]])?,
            )
        }
        FieldSpec::Lacunary {
            alpha,
            depth,
            seed,
            damped,
        } => {
            if !(*alpha > 0.0 && *alpha < 1.0) {
                return param(format!(
                    "regularity exponent must lie in (0, 1), got {alpha}"
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let phases: Vec<f64> = MOTIF.iter().map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            let mut modes = Vec::new();
            for j in 0..=*depth {
                let scale = 2f64.powi(j as i32);
                let mut a = 2f64.powf(-(j as f64) * (1.0 + alpha));
                if *damped {
                    a /= (j + 1) as f64;
                }
                for (&(k0, m0), &phase) in MOTIF.iter().zip(&phases) {
                    modes.push((k0 as f64 * scale, m0 as f64 * scale, a, phase));
                }
            }
            let tag = if *damped {
                "lacunary_damped"
            } else {
                "lacunary"
            };
            (
                format!("{tag}(alpha={alpha},J={depth},seed={seed})"),
                Some(*alpha),
                stream_modes(grid, &modes)?,
            )
        }
    };
    Ok(SyntheticField {
        name,
        spec: spec.clone(),
        alpha,
        divergence_free: true,
        field,
    })
}

// ---------------------------------------------------------------------------
// Grid calculus with reflection parities

fn parity(field: &Field, c: usize, axis: usize) -> Extension {
    field.grid.axes[axis].extension_for(field.bc[c][axis])
}

fn times(a: Extension, b: Extension) -> Extension {
    match (a, b) {
        (Extension::Periodic, _) | (_, Extension::Periodic) => Extension::Periodic,
        (x, y) if x == y => Extension::Even,
        _ => Extension::Odd,
    }
}

fn deriv(grid: &Grid, values: &[f64], axis: usize, ext: Extension, order: u32) -> Vec<f64> {
    let (n0, n1) = grid.shape();
    let ax = grid.axes[axis];
    let (m, period) = match ext {
        Extension::Periodic => (ax.n, ax.len),
        _ => (ext.period_len(ax.n), 2.0 * ax.len),
    };
    let mult = derivative_multiplier(m, period, order);
    let mut out = vec![0.0; values.len()];
    for_each_line(values, n0, n1, axis, &mut out, |line, o| {
        apply_multiplier(line, ext, &mult, o)
    });
    out
}

/// `Div(a (x) b)_j = sum_i d_i (a_i b_j)`.
pub fn div_tensor(a: &Field, b: &Field) -> Field {
    let grid = &a.grid;
    let comps = (0..b.comps.len())
        .map(|j| {
            let mut out = vec![0.0; grid.len()];
            for i in 0..a.comps.len() {
                let prod: Vec<f64> = a.comps[i]
                    .iter()
                    .zip(&b.comps[j])
                    .map(|(x, y)| x * y)
                    .collect();
                let ext = times(parity(a, i, i), parity(b, j, i));
                for (o, d) in out.iter_mut().zip(deriv(grid, &prod, i, ext, 1)) {
                    *o += d;
                }
            }
            out
        })
        .collect();
    Field { comps, ..b.clone() }
}

/// Componentwise Laplacian.
pub fn laplacian(f: &Field) -> Field {
    f.map_comps(|c, v| {
        let mut out = vec![0.0; v.len()];
        for axis in 0..f.grid.dim() {
            for (o, d) in out
                .iter_mut()
                .zip(deriv(&f.grid, v, axis, parity(f, c, axis), 2))
            {
                *o += d;
            }
        }
        out
    })
}

/// `<<f, g>>` with the grid quadrature.
pub fn inner(f: &Field, g: &Field) -> f64 {
    let w = f.grid.weights();
    f.comps
        .iter()
        .zip(&g.comps)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .zip(&w)
                .map(|((x, y), w)| x * y * w)
                .sum::<f64>()
        })
        .sum()
}

/// `<<a (x) b, grad z>> = int sum_ij a_i b_j d_i z_j`.
pub fn tensor_pairing(a: &Field, b: &Field, z: &Field) -> f64 {
    let w = z.grid.weights();
    let mut s = 0.0;
    for j in 0..z.comps.len() {
        for i in 0..a.comps.len() {
            let dz = deriv(&z.grid, &z.comps[j], i, parity(z, j, i), 1);
            s += (0..w.len())
                .map(|k| w[k] * a.comps[i][k] * b.comps[j][k] * dz[k])
                .sum::<f64>();
        }
    }
    s
}

pub fn magnitude_lp(f: &Field, p: f64) -> f64 {
    let mag: Vec<f64> = (0..f.grid.len())
        .map(|k| f.comps.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt())
        .collect();
    f.grid.lp_norm(&mag, p, None)
}

// ---------------------------------------------------------------------------
// Cutoffs

/// `psi_r` equal to 1 within `r/2` of the boundary and 0 beyond `3r/4`,
/// `chi_r = 1 - psi_r`, `f_r = |d psi_r / d dist|` (supported in the band).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub r: f64,
    pub psi: Vec<f64>,
    pub chi: Vec<f64>,
    pub f: Vec<f64>,
    /// `r sup |psi_r'|`, at most 8.
    pub slope_constant: f64,
}

impl CutoffFamily {
    pub fn new(grid: &Grid, r: f64) -> Result<Self> {
        let inr = grid.domain.inradius();
        if !(r > 0.0 && 0.75 * r < inr) {
            return param(format!("cutoff width {r} must satisfy 0 < 3r/4 < {inr}"));
        }
        let z = |d: f64| (d - 0.5 * r) / (0.25 * r);
        let dist: Vec<f64> = (0..grid.len()).map(|k| grid.dist(k)).collect();
        let psi: Vec<f64> = dist.iter().map(|&d| 1.0 - smooth_step(z(d))).collect();
        let chi = psi.iter().map(|p| 1.0 - p).collect();
        let f = dist
            .iter()
            .map(|&d| smooth_step_slope(z(d)).abs() / (0.25 * r))
            .collect();
        // The step's steepest slope is at its midpoint.
        let slope_constant = smooth_step_slope(0.5).abs() * 4.0;
        Ok(CutoffFamily {
            r,
            psi,
            chi,
            f,
            slope_constant,
        })
    }

    /// All-ones cutoff for the boundary-free pairing.
    pub fn none(grid: &Grid) -> Self {
        CutoffFamily {
            r: 0.0,
            psi: vec![0.0; grid.len()],
            chi: vec![1.0; grid.len()],
            f: vec![0.0; grid.len()],
            slope_constant: 0.0,
        }
    }

    fn for_r(grid: &Grid, r: Option<f64>) -> Result<Self> {
        r.map_or_else(|| Ok(Self::none(grid)), |r| Self::new(grid, r))
    }
}

// ---------------------------------------------------------------------------
// Commutator

fn check_s(grid: &Grid, s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return param(format!("heat parameter s must lie in (0, 1), got {s}"));
    }
    let h = grid.h();
    if s.sqrt() < 2.0 * h {
        return Err(HeatlabError::Resolution(format!(
            "sqrt(s) = {} is below twice the grid spacing {h}",
            s.sqrt()
        )));
    }
    Ok(())
}

/// `W(s) = Div(U (x) chi U)^{3s} - Div(U^{2s} (x) (chi U)^{2s})^s`; `r = None` uses `chi = 1`.
pub fn commutator_w(kernel: &ClosedFormKernel, u: &Field, r: Option<f64>, s: f64) -> Result<Field> {
    channel(&u.grid)?;
    check_s(&u.grid, s)?;
    let y = u.mul_scalar(&CutoffFamily::for_r(&u.grid, r)?.chi);
    let first = apply_heat(kernel, &div_tensor(u, &y), 3.0 * s)?;
    let a = apply_heat(kernel, u, 2.0 * s)?;
    let b = apply_heat(kernel, &y, 2.0 * s)?;
    let second = apply_heat(kernel, &div_tensor(&a, &b), s)?;
    Ok(first.sub(&second))
}

/// `N(sigma) = 2 Lap Div(a (x) b)^sigma - 2 Div(Lap a (x) b)^sigma - 2 Div(a (x) Lap b)^sigma`
/// with `a = U^{2 sigma}`, `b = Y^{2 sigma}`.
fn duhamel_source(kernel: &ClosedFormKernel, u: &Field, y: &Field, sigma: f64) -> Result<Field> {
    let a = apply_heat(kernel, u, 2.0 * sigma)?;
    let b = apply_heat(kernel, y, 2.0 * sigma)?;
    let g = laplacian(&div_tensor(&a, &b));
    let t2 = div_tensor(&laplacian(&a), &b);
    let t3 = div_tensor(&a, &laplacian(&b));
    apply_heat(kernel, &g.sub(&t2).sub(&t3).scale(2.0), sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuhamelQuadrature {
    /// Gauss-Legendre nodes per octave of `sigma` (log-spaced panels).
    pub nodes_per_octave: usize,
    /// Lower limit; `None` uses the floor `(2h)^2`.
    pub epsilon: Option<f64>,
}

impl Default for DuhamelQuadrature {
    fn default() -> Self {
        DuhamelQuadrature {
            nodes_per_octave: 8,
            epsilon: None,
        }
    }
}

/// `W(s) = W(eps)^{3(s - eps)} + int_eps^s N(sigma)^{3(s - sigma)} d sigma`.
pub fn commutator_via_duhamel(
    kernel: &ClosedFormKernel,
    u: &Field,
    r: Option<f64>,
    s: f64,
    quad: &DuhamelQuadrature,
) -> Result<Field> {
    channel(&u.grid)?;
    check_s(&u.grid, s)?;
    let floor = (2.0 * u.grid.h()).powi(2);
    let eps = quad.epsilon.unwrap_or(floor);
    if !(eps >= floor && eps < s) {
        return param(format!(
            "epsilon {eps} must lie in [(2h)^2, s) = [{floor}, {s})"
        ));
    }
    let y = u.mul_scalar(&CutoffFamily::for_r(&u.grid, r)?.chi);
    let start = apply_heat(kernel, &commutator_w(kernel, u, r, eps)?, 3.0 * (s - eps))?;
    let span = (s / eps).ln();
    let panels = ((span / 2f64.ln()).ceil() as usize).max(1);
    let width = span / panels as f64;
    let (gx, gw) = gauss_legendre_on(0.0, 1.0, quad.nodes_per_octave);
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| {
            gx.iter()
                .zip(&gw)
                .map(move |(&x, &w)| (eps.ln() + width * (p as f64 + x), width * w))
        })
        .map(|(ls, w)| (ls.exp(), w * ls.exp()))
        .collect();
    let parts: Vec<Field> = nodes
        .par_iter()
        .map(|&(sigma, w)| {
            Ok(apply_heat(
                kernel,
                &duhamel_source(kernel, u, &y, sigma)?,
                3.0 * (s - sigma),
            )?
            .scale(w))
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().fold(start, |acc, p| acc.add(p)))
}

// ---------------------------------------------------------------------------
// Flux experiment

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mollifier {
    /// Heat flow `e^{s Delta}`.
    Heat,
    /// Interior convolution with a product bump of radius `sqrt(s)`.
    Convolution,
}

/// Slope-fit tolerance for the flux scaling law.
pub const SLOPE_TOLERANCE: f64 = 0.15;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluxReport {
    pub field: String,
    pub mollifier: Mollifier,
    /// Cutoff width; `None` is the boundary-free pairing `chi = 1`.
    pub r: Option<f64>,
    pub s: Vec<f64>,
    pub flux: Vec<f64>,
    /// Log-log slope of `|flux|` against `s` over the 4 smallest `s`.
    pub slope: f64,
    /// Derived target `(3 alpha - 1)/2`.
    pub target: Option<f64>,
    pub tolerance: f64,
    pub classification: Classification,
}

fn check_s_list(s_list: &[f64]) -> Result<()> {
    if s_list.len() < 6 {
        return param("flux experiment needs at least 6 values of s");
    }
    for w in s_list.windows(2) {
        let q = (w[0] / w[1]).log2();
        if !(q >= 1.0 && (q - q.round()).abs() < 1e-9) {
            return param("s values must decrease by powers of two");
        }
    }
    Ok(())
}

/// `<<W(s), (chi U)^s>>` from the heat-commutator pairing, without forming `W`.
fn heat_flux(kernel: &ClosedFormKernel, u: &Field, y: &Field, s: f64) -> Result<f64> {
    let y4 = apply_heat(kernel, y, 4.0 * s)?;
    let a = apply_heat(kernel, u, 2.0 * s)?;
    let b = apply_heat(kernel, y, 2.0 * s)?;
    Ok(-tensor_pairing(u, y, &y4) + tensor_pairing(&a, &b, &b))
}

/// Fourier transform of the normalized bump `phi_rho` at the FFT slots of a
/// line, times `(i xi)^order`.
fn bump_multiplier(m: usize, period: f64, radius: f64, order: u32) -> Vec<Complex64> {
    let (z, w) = gauss_legendre_on(-1.0, 1.0, 256);
    let b: Vec<f64> = z.iter().map(|&z| (-1.0 / (1.0 - z * z)).exp()).collect();
    let norm: f64 = b.iter().zip(&w).map(|(b, w)| b * w).sum();
    (0..m)
        .map(|k| {
            let xi = 2.0 * PI / period * wavenumber(k, m);
            if order % 2 == 1 && m.is_multiple_of(2) && k == m / 2 {
                return Complex64::new(0.0, 0.0);
            }
            let hat = z
                .iter()
                .zip(&w)
                .zip(&b)
                .map(|((z, w), b)| w * b * (xi * radius * z).cos())
                .sum::<f64>()
                / norm;
            Complex64::new(0.0, xi).powu(order) * hat
        })
        .collect()
}

/// Separable bump mollification of the trigonometric interpolant (reflected
/// with parity `ext_y` across the walls), derivative orders per axis. Callers
/// only read values at least `radius` from the walls.
fn convolve(grid: &Grid, v: &[f64], ext_y: Extension, radius: f64, orders: [u32; 2]) -> Vec<f64> {
    let (n0, n1) = grid.shape();
    let (ax, ay) = (grid.axes[0], grid.axes[1]);
    let mx = bump_multiplier(ax.n, ax.len, radius, orders[0]);
    let my = bump_multiplier(ext_y.period_len(ay.n), 2.0 * ay.len, radius, orders[1]);
    let mut tmp = vec![0.0; v.len()];
    for_each_line(v, n0, n1, 0, &mut tmp, |line, o| {
        apply_multiplier(line, Extension::Periodic, &mx, o)
    });
    let mut out = vec![0.0; v.len()];
    for_each_line(&tmp, n0, n1, 1, &mut out, |line, o| {
        apply_multiplier(line, ext_y, &my, o)
    });
    out
}

/// Interior convolution analogue of the flux:
/// `int_{M>rho} [(U (x) Y)_eps - U_eps (x) Y_eps] : grad Y_eps`.
fn convolution_flux(u: &Field, y: &Field, radius: f64, mask: &[bool]) -> f64 {
    let grid = &u.grid;
    let w = grid.weights();
    let sm = |f: &Field, c: usize| convolve(grid, &f.comps[c], parity(f, c, 1), radius, [0, 0]);
    let ue: Vec<Vec<f64>> = (0..2).map(|c| sm(u, c)).collect();
    let ye: Vec<Vec<f64>> = (0..2).map(|c| sm(y, c)).collect();
    let mut s = 0.0;
    for i in 0..2 {
        let mut ord = [0, 0];
        ord[i] = 1;
        for j in 0..2 {
            let prod: Vec<f64> = u.comps[i]
                .iter()
                .zip(&y.comps[j])
                .map(|(a, b)| a * b)
                .collect();
            let pe = convolve(
                grid,
                &prod,
                times(parity(u, i, 1), parity(y, j, 1)),
                radius,
                [0, 0],
            );
            let dy = convolve(grid, &y.comps[j], parity(y, j, 1), radius, ord);
            s += (0..w.len())
                .filter(|&k| mask[k])
                .map(|k| w[k] * (pe[k] - ue[i][k] * ye[j][k]) * dy[k])
                .sum::<f64>();
        }
    }
    s
}

pub fn flux_experiment(
    kernel: &ClosedFormKernel,
    battery: &[SyntheticField],
    r: Option<f64>,
    s_list: &[f64],
    mollifier: Mollifier,
) -> Result<Vec<FluxReport>> {
    check_s_list(s_list)?;
    battery
        .iter()
        .map(|f| {
            let grid = &f.field.grid;
            channel(grid)?;
            let y = f.field.mul_scalar(&CutoffFamily::for_r(grid, r)?.chi);
            let flux: Vec<f64> = match mollifier {
                Mollifier::Heat => s_list
                    .par_iter()
                    .map(|&s| {
                        check_s(grid, s)?;
                        heat_flux(kernel, &f.field, &y, s)
                    })
                    .collect::<Result<_>>()?,
                Mollifier::Convolution => {
                    let radius = |s: f64| s.sqrt();
                    let reach = radius(s_list[0]);
                    let mask = region_mask(grid, Region::Greater(reach))?;
                    s_list
                        .par_iter()
                        .map(|&s| convolution_flux(&f.field, &y, radius(s), &mask))
                        .collect()
                }
            };
            let k = flux.len();
            let xs: Vec<f64> = s_list[k - 4..].iter().map(|s| s.ln()).collect();
            let ys: Vec<f64> = flux[k - 4..].iter().map(|v| v.abs().ln()).collect();
            let slope = linear_fit(&xs, &ys).1;
            let mags: Vec<f64> = flux.iter().map(|v| v.abs()).collect();
            let scale = magnitude_lp(&f.field, 3.0).powi(3);
            Ok(FluxReport {
                field: f.name.clone(),
                mollifier,
                r,
                s: s_list.to_vec(),
                flux,
                slope,
                target: f.flux_target(),
                tolerance: SLOPE_TOLERANCE,
                classification: classify(&mags, scale),
            })
        })
        .collect()
}

/// `<<W(s), (chi U)^s>>` through an explicit commutator field.
pub fn flux_from_commutator(
    kernel: &ClosedFormKernel,
    u: &Field,
    r: Option<f64>,
    w: &Field,
    s: f64,
) -> Result<f64> {
    let y = u.mul_scalar(&CutoffFamily::for_r(&u.grid, r)?.chi);
    Ok(inner(w, &apply_heat(kernel, &y, s)?))
}

/// `||W(s)||_{L^{3/2}}` of the pointwise magnitude.
pub fn commutator_norm(w: &Field) -> f64 {
    magnitude_lp(w, 1.5)
}

// ---------------------------------------------------------------------------
// Strip decay and energy balance

/// Extended normal: `(0, -1)` within `1/4` of `y = 0`, `(0, 1)` within `1/4` of
/// `y = ly`, smoothly cut to 0 by distance `3/8`. Returns its y-component.
pub fn extended_normal_y(y: f64, ly: f64) -> f64 {
    let cut = |d: f64| 1.0 - smooth_step((d - 0.25) / 0.125);
    if y <= ly / 2.0 {
        -cut(y)
    } else {
        cut(ly - y)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StripReport {
    pub r: Vec<f64>,
    /// Band average of `|(|V|^2/2 + p) <V, nu>|` over `r/2 <= dist <= r`.
    pub values: Vec<f64>,
    /// Log-log slope against `r` (`None` if any value is 0).
    pub slope: Option<f64>,
}

pub fn strip_decay(v: &Field, pressure: &[f64], r_list: &[f64]) -> Result<StripReport> {
    let grid = &v.grid;
    let (_, ly) = channel(grid)?;
    if pressure.len() != grid.len() {
        return param("pressure sample count differs from the grid");
    }
    let h = grid.h();
    let values = r_list
        .iter()
        .map(|&r| {
            if r < 4.0 * h {
                return Err(HeatlabError::Resolution(format!(
                    "band width {r} is below 4h = {}",
                    4.0 * h
                )));
            }
            let mask = region_mask(grid, Region::Band(r / 2.0, r))?;
            let (mut num, mut den) = (0.0, 0.0);
            for k in (0..grid.len()).filter(|&k| mask[k]) {
                let w = grid.weight(k);
                let e = 0.5 * (v.comps[0][k].powi(2) + v.comps[1][k].powi(2)) + pressure[k];
                num += w * (e * v.comps[1][k] * extended_normal_y(grid.point(k)[1], ly)).abs();
                den += w;
            }
            Ok(num / den)
        })
        .collect::<Result<Vec<f64>>>()?;
    let slope = if values.iter().all(|v| *v > 0.0) && values.len() >= 2 {
        let xs: Vec<f64> = r_list.iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        Some(linear_fit(&xs, &ys).1)
    } else {
        None
    };
    Ok(StripReport {
        r: r_list.to_vec(),
        values,
        slope,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyProbe {
    pub mollifier: Mollifier,
    pub s: Vec<f64>,
    /// `|<<Div(U (x) U)_s, U_s>>|` per `s`.
    pub residual: Vec<f64>,
    pub classification: Classification,
}

/// Mollified energy-balance residual of a steady surrogate. Pressure drops out
/// against the divergence-free, tangent mollified field.
pub fn energy_conservation_probe(
    kernel: &ClosedFormKernel,
    u: &Field,
    mollifier: Mollifier,
    s_list: &[f64],
) -> Result<EnergyProbe> {
    let grid = &u.grid;
    channel(grid)?;
    let residual = match mollifier {
        Mollifier::Heat => s_list
            .iter()
            .map(|&s| {
                check_s(grid, s)?;
                Ok(inner(&div_tensor(u, u), &apply_heat(kernel, u, 2.0 * s)?).abs())
            })
            .collect::<Result<Vec<f64>>>()?,
        Mollifier::Convolution => {
            let radius = |s: f64| s.sqrt();
            let mask = region_mask(grid, Region::Greater(radius(s_list[0])))?;
            let w = grid.weights();
            let d = div_tensor(u, u);
            s_list
                .iter()
                .map(|&s| {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        let de = convolve(grid, &d.comps[c], parity(&d, c, 1), radius(s), [0, 0]);
                        let ue = convolve(grid, &u.comps[c], parity(u, c, 1), radius(s), [0, 0]);
                        acc += (0..w.len())
                            .filter(|&k| mask[k])
                            .map(|k| w[k] * de[k] * ue[k])
                            .sum::<f64>();
                    }
                    acc.abs()
                })
                .collect()
        }
    };
    let scale = magnitude_lp(u, 3.0).powi(3);
    let classification = if residual.iter().all(|v| *v <= 1e-12 * scale.max(1.0)) {
        Classification::Vanishing
    } else {
        classify(&residual, scale)
    };
    Ok(EnergyProbe {
        mollifier,
        s: s_list.to_vec(),
        residual,
        classification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> Grid {
        Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[64, 33]).unwrap()
    }

    #[test]
    fn step_and_cutoff() {
        assert_eq!(smooth_step(0.5), 0.5);
        assert!((smooth_step_slope(0.5) - 2.0).abs() < 1e-14);
        let g = small_grid();
        let c = CutoffFamily::new(&g, 0.4).unwrap();
        assert!(c.slope_constant <= 8.0 + 1e-12);
        for k in 0..g.len() {
            let d = g.dist(k);
            assert_eq!(c.chi[k] + c.psi[k], 1.0);
            if c.f[k] != 0.0 {
                assert!(d > 0.2 && d < 0.3);
            }
            if d <= 0.2 {
                assert_eq!(c.psi[k], 1.0);
            }
            if d >= 0.3 {
                assert_eq!(c.psi[k], 0.0);
            }
        }
    }

    #[test]
    fn fields_are_tangent_and_divergence_free() {
        let g = small_grid();
        for spec in [
            FieldSpec::Shear { m: 1 },
            FieldSpec::Eigen {
                k: 1,
                m: 1,
                amp: 1.0,
            },
            FieldSpec::Lacunary {
                alpha: 0.5,
                depth: 2,
                seed: 1,
                damped: false,
            },
        ] {
            let f = make_field(&g, &spec).unwrap().field;
            let (n0, n1) = g.shape();
            for i in 0..n0 {
                assert!(
                    f.comps[1][i * n1].abs() < 1e-12 && f.comps[1][i * n1 + n1 - 1].abs() < 1e-12
                );
            }
            let div: Vec<f64> = deriv(&g, &f.comps[0], 0, Extension::Periodic, 1)
                .iter()
                .zip(deriv(&g, &f.comps[1], 1, Extension::Odd, 1))
                .map(|(a, b)| a + b)
                .collect();
            assert!(div.iter().all(|v| v.abs() < 1e-9 * (1.0 + f.max_abs())));
        }
    }

    #[test]
    fn depth_beyond_nyquist_is_aliasing() {
        let spec = FieldSpec::Lacunary {
            alpha: 0.5,
            depth: 5,
            seed: 1,
            damped: false,
        };
        assert!(matches!(
            make_field(&small_grid(), &spec),
            Err(HeatlabError::Aliasing(_))
        ));
    }

    #[test]
    fn integration_by_parts_is_exact() {
        let g = small_grid();
        let u = make_field(
            &g,
            &FieldSpec::Lacunary {
                alpha: 0.4,
                depth: 2,
                seed: 3,
                damped: false,
            },
        )
        .unwrap()
        .field;
        let z = make_field(
            &g,
            &FieldSpec::Eigen {
                k: 2,
                m: 3,
                amp: 1.0,
            },
        )
        .unwrap()
        .field;
        let lhs = inner(&div_tensor(&u, &u), &z);
        let rhs = -tensor_pairing(&u, &u, &z);
        assert!(
            (lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0),
            "{lhs} {rhs}"
        );
    }

    #[test]
    fn zero_field_has_zero_commutator() {
        let g = small_grid();
        let k = ClosedFormKernel::form(g.domain).unwrap();
        let z = Field::vector(&g, vec![vec![0.0; g.len()]; 2]).unwrap();
        assert_eq!(
            commutator_w(&k, &z, Some(0.4), 0.01).unwrap().max_abs(),
            0.0
        );
        assert_eq!(
            commutator_via_duhamel(&k, &z, None, 0.01, &DuhamelQuadrature::default())
                .unwrap()
                .max_abs(),
            0.0
        );
    }

    #[test]
    fn tiny_s_is_under_resolved() {
        let g = small_grid();
        let k = ClosedFormKernel::form(g.domain).unwrap();
        let u = make_field(&g, &FieldSpec::Shear { m: 1 }).unwrap().field;
        assert!(matches!(
            commutator_w(&k, &u, None, 1e-5),
            Err(HeatlabError::Resolution(_))
        ));
    }

    #[test]
    fn duhamel_matches_direct_on_smooth_field() {
        let g = small_grid();
        let k = ClosedFormKernel::form(g.domain).unwrap();
        let u = make_field(
            &g,
            &FieldSpec::Stream {
                modes: vec![(1, 1, 1.0), (2, 1, 0.5)],
            },
        )
        .unwrap()
        .field;
        let direct = commutator_w(&k, &u, Some(0.4), 0.01).unwrap();
        let duh =
            commutator_via_duhamel(&k, &u, Some(0.4), 0.01, &DuhamelQuadrature::default()).unwrap();
        let gap = direct.sub(&duh).max_abs() / direct.max_abs();
        assert!(gap < 1e-4, "{gap}");
    }

    #[test]
    fn strip_decay_cases() {
        let g = Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[64, 257]).unwrap();
        let shear = make_field(&g, &FieldSpec::Shear { m: 1 }).unwrap().field;
        let p = vec![1.0; g.len()];
        let rs = [0.2, 0.1, 0.05, 0.025];
        assert!(strip_decay(&shear, &p, &rs)
            .unwrap()
            .values
            .iter()
            .all(|v| *v == 0.0));
        let cell = make_field(
            &g,
            &FieldSpec::Eigen {
                k: 1,
                m: 1,
                amp: 1.0,
            },
        )
        .unwrap()
        .field;
        let rep = strip_decay(&cell, &p, &rs).unwrap();
        assert!(rep.slope.unwrap() > 0.8, "{rep:?}");
        assert!(matches!(
            strip_decay(&cell, &p, &[0.01]),
            Err(HeatlabError::Resolution(_))
        ));
    }

    #[test]
    fn shear_conserves_energy_on_both_routes() {
        let g = Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[64, 129]).unwrap();
        let k = ClosedFormKernel::form(g.domain).unwrap();
        let u = make_field(&g, &FieldSpec::Shear { m: 2 }).unwrap().field;
        let s = [4e-3, 2e-3, 1e-3, 5e-4, 2.5e-4];
        let heat = energy_conservation_probe(&k, &u, Mollifier::Heat, &s).unwrap();
        assert!(heat.residual.iter().all(|v| *v < 1e-6));
        let conv = energy_conservation_probe(&k, &u, Mollifier::Convolution, &s).unwrap();
        assert_eq!(heat.classification, conv.classification);
    }
}
