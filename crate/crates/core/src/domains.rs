//! Flat model domains, tensor grids, boundary-distance masks and discrete norms.

use serde::{Deserialize, Serialize};

use crate::error::{param, HeatlabError, Result};
use crate::spectral::{self, Extension};

/// Boundary condition attached to one axis of one field component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bc {
    Free,
    Neumann,
    Dirichlet,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Circle {
        l: f64,
    },
    Interval {
        l: f64,
    },
    /// Half-line `[0, inf)` truncated at `l`.
    HalfLine {
        l: f64,
    },
    /// Periodic in x with period `lx`, interval `[0, ly]` in y.
    Channel {
        lx: f64,
        ly: f64,
    },
    Rectangle {
        lx: f64,
        ly: f64,
    },
}

impl Domain {
    pub fn circle(l: f64) -> Result<Self> {
        Domain::Circle { l }.validated()
    }
    pub fn interval(l: f64) -> Result<Self> {
        Domain::Interval { l }.validated()
    }
    pub fn half_line(l: f64) -> Result<Self> {
        Domain::HalfLine { l }.validated()
    }
    pub fn channel(lx: f64, ly: f64) -> Result<Self> {
        Domain::Channel { lx, ly }.validated()
    }
    pub fn rectangle(lx: f64, ly: f64) -> Result<Self> {
        Domain::Rectangle { lx, ly }.validated()
    }

    /// Build from the `{kind, lengths}` form used in run configurations.
    pub fn from_spec(kind: &str, lengths: &[f64]) -> Result<Self> {
        let need = |k: usize| -> Result<()> {
            if lengths.len() != k {
                return param(format!(
                    "domain '{kind}' takes {k} length(s), got {}",
                    lengths.len()
                ));
            }
            Ok(())
        };
        match kind {
            "circle" => need(1).and_then(|_| Domain::circle(lengths[0])),
            "interval" => need(1).and_then(|_| Domain::interval(lengths[0])),
            "half_line" => need(1).and_then(|_| Domain::half_line(lengths[0])),
            "channel" => need(2).and_then(|_| Domain::channel(lengths[0], lengths[1])),
            "rectangle" => need(2).and_then(|_| Domain::rectangle(lengths[0], lengths[1])),
            other => param(format!("unknown domain kind '{other}'")),
        }
    }

    pub fn validated(self) -> Result<Self> {
        let ok = self.lengths().iter().all(|&v| v.is_finite() && v > 0.0);
        if ok {
            Ok(self)
        } else {
            param(format!(
                "domain lengths must be positive and finite: {self:?}"
            ))
        }
    }

    pub fn lengths(&self) -> Vec<f64> {
        match *self {
            Domain::Circle { l } | Domain::Interval { l } | Domain::HalfLine { l } => vec![l],
            Domain::Channel { lx, ly } | Domain::Rectangle { lx, ly } => vec![lx, ly],
        }
    }

    pub fn dim(&self) -> usize {
        self.lengths().len()
    }

    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Whether the given axis is periodic.
    pub fn periodic_axis(&self, axis: usize) -> bool {
        matches!(
            (self, axis),
            (Domain::Circle { .. }, 0) | (Domain::Channel { .. }, 0)
        )
    }

    /// Largest r for which `dist > r` is nonempty. Infinite without boundary.
    pub fn inradius(&self) -> f64 {
        match *self {
            Domain::Circle { .. } => f64::INFINITY,
            Domain::Interval { l } => l / 2.0,
            Domain::HalfLine { l } => l,
            Domain::Channel { ly, .. } => ly / 2.0,
            Domain::Rectangle { lx, ly } => lx.min(ly) / 2.0,
        }
    }

    /// Distance to the boundary; `INFINITY` on the circle.
    pub fn dist_to_boundary(&self, p: &[f64]) -> f64 {
        match *self {
            Domain::Circle { .. } => f64::INFINITY,
            Domain::Interval { l } => p[0].min(l - p[0]),
            Domain::HalfLine { .. } => p[0],
            Domain::Channel { ly, .. } => p[1].min(ly - p[1]),
            Domain::Rectangle { lx, ly } => p[0].min(lx - p[0]).min(p[1]).min(ly - p[1]),
        }
    }
}

/// One tensor factor of a grid: periodic (n open nodes) or closed (n nodes including both ends).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub len: f64,
    pub n: usize,
    pub periodic: bool,
}

impl Axis {
    pub fn h(&self) -> f64 {
        if self.periodic {
            self.len / self.n as f64
        } else {
            self.len / (self.n - 1) as f64
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        if !self.periodic && i == self.n - 1 {
            return self.len;
        }
        i as f64 * self.h()
    }

    pub fn weight(&self, i: usize) -> f64 {
        let h = self.h();
        if !self.periodic && (i == 0 || i == self.n - 1) {
            h / 2.0
        } else {
            h
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn extension_for(&self, bc: Bc) -> Extension {
        match (self.periodic, bc) {
            (true, _) => Extension::Periodic,
            (false, Bc::Dirichlet) => Extension::Odd,
            _ => Extension::Even,
        }
    }

    /// Derivative of order 1 or 2 along this axis. Spectral on periodic axes,
    /// fourth-order centered differences with one-sided closure otherwise.
    pub fn differentiate(&self, line: &[f64], order: u32, out: &mut [f64]) {
        if self.periodic {
            let mult = spectral::derivative_multiplier(self.n, self.len, order);
            spectral::apply_multiplier(line, Extension::Periodic, &mult, out);
            return;
        }
        let h = self.h();
        match order {
            1 => fd4_first(line, h, out),
            2 => fd4_second(line, h, out),
            _ => unreachable!("differentiate supports orders 1 and 2"),
        }
    }
}

fn fd4_first(u: &[f64], h: f64, out: &mut [f64]) {
    let n = u.len();
    assert!(n >= 6, "finite differences need at least 6 nodes");
    let c = 1.0 / (12.0 * h);
    out[0] = c * (-25.0 * u[0] + 48.0 * u[1] - 36.0 * u[2] + 16.0 * u[3] - 3.0 * u[4]);
    out[1] = c * (-3.0 * u[0] - 10.0 * u[1] + 18.0 * u[2] - 6.0 * u[3] + u[4]);
    for i in 2..n - 2 {
        out[i] = c * (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]);
    }
    out[n - 2] =
        -c * (-3.0 * u[n - 1] - 10.0 * u[n - 2] + 18.0 * u[n - 3] - 6.0 * u[n - 4] + u[n - 5]);
    out[n - 1] = -c
        * (-25.0 * u[n - 1] + 48.0 * u[n - 2] - 36.0 * u[n - 3] + 16.0 * u[n - 4] - 3.0 * u[n - 5]);
}

fn fd4_second(u: &[f64], h: f64, out: &mut [f64]) {
    let n = u.len();
    assert!(n >= 6, "finite differences need at least 6 nodes");
    let c = 1.0 / (12.0 * h * h);
    let left = |v: &dyn Fn(usize) -> f64| -> (f64, f64) {
        (
            c * (45.0 * v(0) - 154.0 * v(1) + 214.0 * v(2) - 156.0 * v(3) + 61.0 * v(4)
                - 10.0 * v(5)),
            c * (10.0 * v(0) - 15.0 * v(1) - 4.0 * v(2) + 14.0 * v(3) - 6.0 * v(4) + v(5)),
        )
    };
    let (a, b) = left(&|i| u[i]);
    out[0] = a;
    out[1] = b;
    for i in 2..n - 2 {
        out[i] = c * (-u[i - 2] + 16.0 * u[i - 1] - 30.0 * u[i] + 16.0 * u[i + 1] - u[i + 2]);
    }
    let (a, b) = left(&|i| u[n - 1 - i]);
    out[n - 1] = a;
    out[n - 2] = b;
}

/// Uniform tensor grid over a domain. Row-major layout with the last axis fastest;
/// 1D grids use `shape = (n, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub domain: Domain,
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn new(domain: Domain, n_per_axis: &[usize]) -> Result<Self> {
        let domain = domain.validated()?;
        if n_per_axis.len() != domain.dim() {
            return param(format!(
                "grid needs {} axis sizes for {domain:?}, got {}",
                domain.dim(),
                n_per_axis.len()
            ));
        }
        let lengths = domain.lengths();
        let mut axes = Vec::new();
        for (a, (&len, &n)) in lengths.iter().zip(n_per_axis).enumerate() {
            if n < 8 {
                return param(format!("axis {a} needs at least 8 nodes, got {n}"));
            }
            axes.push(Axis {
                len,
                n,
                periodic: domain.periodic_axis(a),
            });
        }
        Ok(Grid { domain, axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        match self.axes.len() {
            1 => (self.axes[0].n, 1),
            _ => (self.axes[0].n, self.axes[1].n),
        }
    }

    pub fn len(&self) -> usize {
        let (a, b) = self.shape();
        a * b
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest spacing over the axes.
    pub fn h(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| a.h())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let (_, n1) = self.shape();
        let (i, j) = (idx / n1, idx % n1);
        if self.axes.len() == 1 {
            [self.axes[0].node(i), 0.0]
        } else {
            [self.axes[0].node(i), self.axes[1].node(j)]
        }
    }

    pub fn weight(&self, idx: usize) -> f64 {
        let (_, n1) = self.shape();
        let (i, j) = (idx / n1, idx % n1);
        let w0 = self.axes[0].weight(i);
        if self.axes.len() == 1 {
            w0
        } else {
            w0 * self.axes[1].weight(j)
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    pub fn dist(&self, idx: usize) -> f64 {
        self.domain.dist_to_boundary(&self.point(idx))
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.dist(idx) <= 1e-14 * self.domain.lengths()[0].max(1.0)
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| f(&self.point(k)[..self.dim()]))
            .collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(k, v)| v * self.weight(k))
            .sum()
    }

    /// Derivative along `axis` of a scalar sample vector.
    pub fn derivative(&self, values: &[f64], axis: usize, order: u32) -> Vec<f64> {
        let (n0, n1) = self.shape();
        let ax = self.axes[axis];
        let mut out = vec![0.0; values.len()];
        spectral::for_each_line(values, n0, n1, axis, &mut out, |line, o| {
            ax.differentiate(line, order, o)
        });
        out
    }

    /// `(sum_k w_k |v_k|^p)^(1/p)` over masked nodes, scaled by the largest
    /// entry so tiny values do not underflow.
    pub fn lp_norm(&self, values: &[f64], p: f64, mask: Option<&[bool]>) -> f64 {
        let inside = |k: usize| mask.is_none_or(|m| m[k]);
        let big = values
            .iter()
            .enumerate()
            .filter(|(k, _)| inside(*k))
            .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        if big == 0.0 || !big.is_finite() {
            return big;
        }
        let mut s = 0.0;
        for (k, v) in values.iter().enumerate() {
            if inside(k) {
                s += self.weight(k) * (v.abs() / big).powf(p);
            }
        }
        big * s.powf(1.0 / p)
    }
}

/// Which nodes of the grid a region selects, by distance to the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Greater(f64),
    Less(f64),
    /// Closed band `lo <= dist <= hi`.
    Band(f64, f64),
}

/// Node mask for a boundary-distance region. Distances within `1e-12` of a
/// threshold count as equal to it.
pub fn region_mask(grid: &Grid, region: Region) -> Result<Vec<bool>> {
    let inr = grid.domain.inradius();
    let check = |r: f64| -> Result<()> {
        if !(r > 0.0 && r < inr) {
            return param(format!("radius {r} outside (0, {inr})"));
        }
        Ok(())
    };
    let eps = 1e-12 * grid.domain.lengths().iter().cloned().fold(1.0, f64::max);
    let mask = match region {
        Region::Greater(r) => {
            check(r)?;
            (0..grid.len()).map(|k| grid.dist(k) > r + eps).collect()
        }
        Region::Less(r) => {
            check(r)?;
            (0..grid.len()).map(|k| grid.dist(k) < r - eps).collect()
        }
        Region::Band(lo, hi) => {
            check(lo)?;
            check(hi)?;
            if lo > hi {
                return param(format!("band [{lo}, {hi}] is reversed"));
            }
            (0..grid.len())
                .map(|k| {
                    let d = grid.dist(k);
                    d >= lo - eps && d <= hi + eps
                })
                .collect()
        }
    };
    Ok(mask)
}

/// A sampled 0-form or 1-form with per-component, per-axis boundary tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub degree: u8,
    pub comps: Vec<Vec<f64>>,
    pub bc: Vec<Vec<Bc>>,
}

impl Field {
    /// Scalar boundary tags: periodic on periodic axes, Neumann elsewhere.
    pub fn scalar_tags(grid: &Grid) -> Vec<Bc> {
        grid.axes
            .iter()
            .map(|a| {
                if a.periodic {
                    Bc::Periodic
                } else {
                    Bc::Neumann
                }
            })
            .collect()
    }

    /// Absolute boundary tags of component `c` of a 1-form: Dirichlet along the
    /// axis it is normal to, Neumann along the others.
    pub fn form_tags(grid: &Grid, c: usize) -> Vec<Bc> {
        grid.axes
            .iter()
            .enumerate()
            .map(|(a, ax)| match (ax.periodic, a == c) {
                (true, _) => Bc::Periodic,
                (false, true) => Bc::Dirichlet,
                (false, false) => Bc::Neumann,
            })
            .collect()
    }

    pub fn scalar(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return param(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            ));
        }
        Ok(Field {
            grid: grid.clone(),
            degree: 0,
            bc: vec![Self::scalar_tags(grid)],
            comps: vec![values],
        })
    }

    pub fn scalar_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Field::scalar(grid, grid.sample(f)).expect("sample length matches grid")
    }

    pub fn vector(grid: &Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return param(format!(
                "a 1-form on a {}D grid needs {} components",
                grid.dim(),
                grid.dim()
            ));
        }
        if comps.iter().any(|c| c.len() != grid.len()) {
            return param("component length differs from grid size");
        }
        let bc = (0..grid.dim()).map(|c| Self::form_tags(grid, c)).collect();
        Ok(Field {
            grid: grid.clone(),
            degree: 1,
            comps,
            bc,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Field {
            comps: self.comps.iter().map(|c| vec![0.0; c.len()]).collect(),
            ..self.clone()
        }
    }

    pub fn map_comps(&self, f: impl Fn(usize, &[f64]) -> Vec<f64>) -> Self {
        Field {
            comps: self
                .comps
                .iter()
                .enumerate()
                .map(|(c, v)| f(c, v))
                .collect(),
            ..self.clone()
        }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        self.map_comps(|c, v| {
            v.iter()
                .zip(&other.comps[c])
                .map(|(&a, &b)| f(a, b))
                .collect()
        })
    }

    pub fn sub(&self, other: &Field) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_comps(|_, v| v.iter().map(|a| a * s).collect())
    }

    /// Pointwise product with a scalar sample vector (boundary tags kept).
    pub fn mul_scalar(&self, f: &[f64]) -> Self {
        self.map_comps(|_, v| v.iter().zip(f).map(|(a, b)| a * b).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Multi-indices of order at most `m` in `dim` dimensions, as derivative orders per axis.
pub fn multi_indices(dim: usize, m: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=m {
        if dim == 1 {
            out.push(vec![total]);
        } else {
            for a in (0..=total).rev() {
                out.push(vec![a, total - a]);
            }
        }
    }
    out
}

fn apply_multi_index(grid: &Grid, v: &[f64], gamma: &[u32]) -> Vec<f64> {
    let mut cur = v.to_vec();
    for (axis, &ord) in gamma.iter().enumerate() {
        if ord > 0 {
            cur = grid.derivative(&cur, axis, ord);
        }
    }
    cur
}

/// `(sum_{|gamma|<=m} ||D^gamma u||_{L^p(mask)}^p)^(1/p)`, summed over components.
pub fn sobolev_norm(field: &Field, m: u32, p: f64, mask: Option<&[bool]>) -> Result<f64> {
    if m > 2 {
        return Err(HeatlabError::Unsupported(format!(
            "derivative order {m} > 2"
        )));
    }
    if !(p > 1.0 && p.is_finite()) {
        return param(format!("integrability p={p} outside (1, inf)"));
    }
    if let Some(mk) = mask {
        if !mk.iter().any(|&b| b) {
            return Ok(0.0);
        }
    }
    let grid = &field.grid;
    let mut parts = Vec::new();
    for comp in &field.comps {
        for gamma in multi_indices(grid.dim(), m) {
            let d = apply_multi_index(grid, comp, &gamma);
            parts.push(grid.lp_norm(&d, p, mask));
        }
    }
    Ok(combine_lp(&parts, p))
}

/// `(sum_i a_i^p)^(1/p)` without intermediate underflow.
pub fn combine_lp(parts: &[f64], p: f64) -> f64 {
    let big = parts.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if big == 0.0 || !big.is_finite() {
        return big;
    }
    big * parts
        .iter()
        .map(|v| (v.abs() / big).powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Pointwise jet norm `(sum_{j<=k} |nabla^j u(node)|^2)^(1/2)`.
pub fn jet_norm(field: &Field, k: u32, node: usize) -> Result<f64> {
    if k > 2 {
        return Err(HeatlabError::Unsupported(format!("jet order {k} > 2")));
    }
    if node >= field.grid.len() {
        return param(format!("node {node} out of range"));
    }
    let grid = &field.grid;
    let mut s = 0.0;
    for comp in &field.comps {
        for gamma in multi_indices(grid.dim(), k) {
            // Each multi-index stands for multinomial(|gamma|; gamma) ordered tuples.
            let mult: u32 = if gamma.len() == 2 && gamma[0] == 1 && gamma[1] == 1 {
                2
            } else {
                1
            };
            let d = apply_multi_index(grid, comp, &gamma);
            s += mult as f64 * d[node] * d[node];
        }
    }
    Ok(s.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quadrature_weights_sum_to_volume() {
        for (d, n) in [
            (Domain::interval(1.0).unwrap(), vec![101]),
            (Domain::circle(2.0 * PI).unwrap(), vec![64]),
            (Domain::channel(2.0 * PI, 1.0).unwrap(), vec![32, 33]),
            (Domain::rectangle(2.0, 3.0).unwrap(), vec![17, 29]),
        ] {
            let g = Grid::new(d, &n).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - d.volume()).abs() < 1e-12 * d.volume());
        }
    }

    #[test]
    fn interval_greater_mask_is_open_middle() {
        let g = Grid::new(Domain::interval(1.0).unwrap(), &[101]).unwrap();
        let m = region_mask(&g, Region::Greater(0.25)).unwrap();
        for k in 0..g.len() {
            let y = g.point(k)[0];
            assert_eq!(m[k], y > 0.25 + 1e-9 && y < 0.75 - 1e-9, "y={y}");
        }
    }

    #[test]
    fn circle_has_no_boundary_strip() {
        let g = Grid::new(Domain::circle(1.0).unwrap(), &[64]).unwrap();
        assert!(region_mask(&g, Region::Less(0.1))
            .unwrap()
            .iter()
            .all(|&b| !b));
        assert!(region_mask(&g, Region::Greater(0.1))
            .unwrap()
            .iter()
            .all(|&b| b));
    }

    #[test]
    fn channel_band_hits_both_walls() {
        let g = Grid::new(Domain::channel(2.0 * PI, 1.0).unwrap(), &[16, 101]).unwrap();
        let m = region_mask(&g, Region::Band(0.1, 0.2)).unwrap();
        for k in 0..g.len() {
            let y = g.point(k)[1];
            let inside =
                (0.1 - 1e-9..=0.2 + 1e-9).contains(&y) || (0.8 - 1e-9..=0.9 + 1e-9).contains(&y);
            assert_eq!(m[k], inside, "y={y}");
        }
    }

    #[test]
    fn radius_outside_inradius_rejected() {
        let g = Grid::new(Domain::interval(1.0).unwrap(), &[33]).unwrap();
        assert!(region_mask(&g, Region::Greater(0.6)).is_err());
        assert!(region_mask(&g, Region::Less(0.0)).is_err());
    }

    #[test]
    fn sobolev_norm_of_cosine() {
        let g = Grid::new(Domain::interval(1.0).unwrap(), &[2049]).unwrap();
        let f = Field::scalar_fn(&g, |p| (PI * p[0]).cos());
        let v = sobolev_norm(&f, 1, 2.0, None).unwrap();
        assert!((v - (0.5 + PI * PI / 2.0).sqrt()).abs() < 1e-9, "{v}");
        let c = Field::scalar_fn(&g, |_| 3.0);
        assert!((sobolev_norm(&c, 0, 3.0, None).unwrap() - 3.0).abs() < 1e-12);
        let empty = vec![false; g.len()];
        assert_eq!(sobolev_norm(&f, 2, 2.0, Some(&empty)).unwrap(), 0.0);
        assert!(sobolev_norm(&f, 3, 2.0, None).is_err());
    }

    #[test]
    fn jet_norm_of_linear_field() {
        let g = Grid::new(Domain::interval(1.0).unwrap(), &[101]).unwrap();
        let f = Field::scalar_fn(&g, |p| p[0]);
        let v = jet_norm(&f, 1, 50).unwrap();
        assert!((v - 1.25f64.sqrt()).abs() < 1e-12);
        let z = Field::scalar_fn(&g, |_| 0.0);
        assert_eq!(jet_norm(&z, 2, 3).unwrap(), 0.0);
    }

    #[test]
    fn fd4_converges_at_fourth_order() {
        let err = |n: usize| {
            let g = Grid::new(Domain::interval(1.0).unwrap(), &[n]).unwrap();
            let f = g.sample(|p| (2.0 * p[0]).sin());
            let d = g.derivative(&f, 0, 1);
            (0..g.len())
                .map(|k| (d[k] - 2.0 * (2.0 * g.point(k)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let order = (err(41) / err(81)).log2();
        assert!(order > 3.7, "observed order {order}");
    }

    #[test]
    fn form_tags_follow_absolute_condition() {
        let g = Grid::new(Domain::channel(1.0, 1.0).unwrap(), &[16, 17]).unwrap();
        assert_eq!(Field::form_tags(&g, 0), vec![Bc::Periodic, Bc::Neumann]);
        assert_eq!(Field::form_tags(&g, 1), vec![Bc::Periodic, Bc::Dirichlet]);
        let r = Grid::new(Domain::rectangle(1.0, 1.0).unwrap(), &[16, 17]).unwrap();
        assert_eq!(Field::form_tags(&r, 0), vec![Bc::Dirichlet, Bc::Neumann]);
    }
}
