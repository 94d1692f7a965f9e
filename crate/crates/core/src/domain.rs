//! Domains, one-dimensional graded meshes, and grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bounded domain in `R^1` or `R^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Rectangle { lo: [f64; 2], hi: [f64; 2] },
    Ball { center: Vec<f64>, radius: f64 },
    /// `(0, T)` for `n = 1` and `(-T, T) x (0, T)` for `n = 2`; the physical
    /// boundary is the hyperplane `x_n = 0`.
    TruncatedHalfSpace { n: usize, truncation: f64 },
}

impl DomainSpec {
    pub fn unit_ball(n: usize) -> Self {
        DomainSpec::Ball {
            center: vec![0.0; n],
            radius: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Rectangle { .. } => 2,
            DomainSpec::Ball { center, .. } => center.len(),
            DomainSpec::TruncatedHalfSpace { n, .. } => *n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DomainSpec::Interval { a, b } => a.is_finite() && b.is_finite() && a < b,
            DomainSpec::Rectangle { lo, hi } => {
                lo.iter().chain(hi).all(|v| v.is_finite()) && lo[0] < hi[0] && lo[1] < hi[1]
            }
            DomainSpec::Ball { center, radius } => {
                !center.is_empty() && center.iter().all(|v| v.is_finite()) && *radius > 0.0 && radius.is_finite()
            }
            DomainSpec::TruncatedHalfSpace { n, truncation } => {
                (1..=2).contains(n) && *truncation > 0.0 && truncation.is_finite()
            }
        };
        if !ok {
            return Err(Error::Config(format!("degenerate or unbounded domain {self:?}")));
        }
        if self.dim() > 2 {
            return Err(Error::Capability(format!(
                "grids are limited to n <= 2, domain has n = {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainSpec::Interval { a, b } => (vec![*a], vec![*b]),
            DomainSpec::Rectangle { lo, hi } => (lo.to_vec(), hi.to_vec()),
            DomainSpec::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainSpec::TruncatedHalfSpace { n, truncation } => {
                if *n == 1 {
                    (vec![0.0], vec![*truncation])
                } else {
                    (vec![-truncation, 0.0], vec![*truncation, *truncation])
                }
            }
        }
    }

    /// Endpoints of a one-dimensional domain.
    pub fn interval_bounds(&self) -> Option<(f64, f64)> {
        if self.dim() != 1 {
            return None;
        }
        let (lo, hi) = self.bounding_box();
        Some((lo[0], hi[0]))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DomainSpec::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                r2 < radius * radius
            }
            _ => {
                let (lo, hi) = self.bounding_box();
                x.iter().zip(lo.iter().zip(&hi)).all(|(v, (l, h))| v > l && v < h)
            }
        }
    }

    /// Distance from an interior point to the boundary of the domain.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match self {
            DomainSpec::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                radius - r2.sqrt()
            }
            _ => {
                let (lo, hi) = self.bounding_box();
                x.iter()
                    .zip(lo.iter().zip(&hi))
                    .map(|(v, (l, h))| (v - l).min(h - v))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Distance to the physical boundary; differs from
    /// [`Self::boundary_distance`] only for truncated half-spaces.
    pub fn physical_boundary_distance(&self, x: &[f64]) -> f64 {
        match self {
            DomainSpec::TruncatedHalfSpace { n, .. } => x[n - 1],
            _ => self.boundary_distance(x),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            DomainSpec::Ball { radius, .. } => 2.0 * radius,
            _ => {
                let (lo, hi) = self.bounding_box();
                lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
            }
        }
    }

    /// Check that a truncated half-space is at least ten times larger than
    /// the region of interest around `x`.
    pub fn check_region(&self, x: &[f64]) -> Result<()> {
        if let DomainSpec::TruncatedHalfSpace { n, truncation } = self {
            let height = x[n - 1];
            let extent = x.iter().map(|v| v.abs()).fold(height, f64::max);
            if *truncation < 10.0 * extent {
                return Err(Error::Resolution(format!(
                    "truncation {truncation} is smaller than ten times the region of interest {extent}"
                )));
            }
        }
        Ok(())
    }

    /// Image of the domain under `x -> x / mu`.
    pub fn dilated(&self, mu: f64) -> DomainSpec {
        let f = 1.0 / mu;
        match self {
            DomainSpec::Interval { a, b } => DomainSpec::Interval { a: a * f, b: b * f },
            DomainSpec::Rectangle { lo, hi } => DomainSpec::Rectangle {
                lo: [lo[0] * f, lo[1] * f],
                hi: [hi[0] * f, hi[1] * f],
            },
            DomainSpec::Ball { center, radius } => DomainSpec::Ball {
                center: center.iter().map(|c| c * f).collect(),
                radius: radius * f,
            },
            DomainSpec::TruncatedHalfSpace { n, truncation } => DomainSpec::TruncatedHalfSpace {
                n: *n,
                truncation: truncation * f,
            },
        }
    }
}

/// A point of prescribed local spacing in a graded mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub x: f64,
    pub h: f64,
}

/// Graded mesh on `[a, b]` with spacing `min(hmax, min_k(h_k + g |x - x_k|))`.
/// Every anchor becomes a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedMeshSpec {
    pub a: f64,
    pub b: f64,
    pub anchors: Vec<Anchor>,
    pub growth: f64,
    pub hmax: f64,
}

impl GradedMeshSpec {
    /// Mesh on `[a, b]` refined towards both ends with spacing `h_end`.
    pub fn new(a: f64, b: f64, h_end: f64, growth: f64, hmax: f64) -> Self {
        GradedMeshSpec {
            a,
            b,
            anchors: vec![Anchor { x: a, h: h_end }, Anchor { x: b, h: h_end }],
            growth,
            hmax,
        }
    }

    pub fn with_anchor(mut self, x: f64, h: f64) -> Self {
        self.anchors.push(Anchor { x, h });
        self
    }

    fn spacing(&self, x: f64, scale: f64) -> f64 {
        let local = self
            .anchors
            .iter()
            .map(|an| scale * an.h + self.growth * (x - an.x).abs())
            .fold(f64::INFINITY, f64::min);
        local.min(scale * self.hmax)
    }

    fn validate(&self) -> Result<()> {
        if !(self.a < self.b) {
            return Err(Error::Config(format!("mesh interval [{}, {}] is empty", self.a, self.b)));
        }
        if !(self.growth > 0.0 && self.growth < 1.0) {
            return Err(Error::Config(format!("mesh growth {} must lie in (0, 1)", self.growth)));
        }
        if !(self.hmax > 0.0) || self.anchors.iter().any(|an| !(an.h > 0.0)) {
            return Err(Error::Config("mesh spacings must be positive".into()));
        }
        Ok(())
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .anchors
            .iter()
            .map(|an| an.x)
            .filter(|&x| x > self.a && x < self.b)
            .collect();
        pts.push(self.a);
        pts.push(self.b);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (self.b - self.a));
        pts
    }

    fn build_scaled(&self, scale: f64, limit: usize) -> Option<Vec<f64>> {
        let pts = self.breakpoints();
        let mut nodes = vec![pts[0]];
        for w in pts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mut marched = vec![lo];
            let mut x = lo;
            while x < hi {
                x += self.spacing(x, scale);
                marched.push(x);
                if nodes.len() + marched.len() > limit {
                    return None;
                }
            }
            let j = marched.len() - 1;
            let keep = if j >= 2 && (marched[j] - hi) > (hi - marched[j - 1]) {
                j - 1
            } else {
                j
            };
            let end = marched[keep];
            let stretch = (hi - lo) / (end - lo);
            for &y in &marched[1..keep] {
                nodes.push(lo + (y - lo) * stretch);
            }
            nodes.push(hi);
        }
        Some(nodes)
    }

    pub fn build(&self) -> Result<Vec<f64>> {
        self.validate()?;
        self.build_scaled(1.0, 10_000_000)
            .ok_or_else(|| Error::Resolution("graded mesh exceeds ten million nodes".into()))
    }

    /// Rescale all spacings so the mesh has close to `target` nodes.
    pub fn build_with_count(&self, target: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let min_nodes = self.breakpoints().len();
        if target < min_nodes {
            return Err(Error::Config(format!(
                "target of {target} nodes is below the {min_nodes} anchors"
            )));
        }
        let limit = 4 * target + 16;
        let count = |scale: f64| self.build_scaled(scale, limit).map_or(usize::MAX, |v| v.len());
        let (mut lo, mut hi) = (1e-8f64, 1e8f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if count(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo < 1.0 + 1e-12 {
                break;
            }
        }
        let pick = if count(hi).abs_diff(target) <= count(lo).abs_diff(target) {
            hi
        } else {
            lo
        };
        self.build_scaled(pick, limit)
            .ok_or_else(|| Error::Resolution("graded mesh node count did not converge".into()))
    }
}

pub fn uniform_nodes(a: f64, b: f64, cells: usize) -> Vec<f64> {
    let h = (b - a) / cells as f64;
    (0..=cells)
        .map(|i| if i == cells { b } else { a + h * i as f64 })
        .collect()
}

/// Symmetric mesh on `[-L, L]` with `x = x0 sinh(A t)`, `t` uniform in `[-1, 1]`.
pub fn sinh_nodes(half_width: f64, core: f64, cells: usize) -> Vec<f64> {
    let amp = (half_width / core).asinh();
    (0..=cells)
        .map(|i| {
            let t = -1.0 + 2.0 * i as f64 / cells as f64;
            core * (amp * t).sinh()
        })
        .collect()
}

/// Nodes of a one-dimensional grid. When `closed`, the first and last nodes
/// lie on the boundary and carry the boundary or exterior data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineGrid {
    pub nodes: Vec<f64>,
    pub closed: bool,
}

impl LineGrid {
    pub fn new(nodes: Vec<f64>, closed: bool) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Resolution("a grid needs at least three nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("grid nodes must be strictly increasing".into()));
        }
        Ok(LineGrid { nodes, closed })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Indices of the unknowns.
    pub fn interior(&self) -> std::ops::Range<usize> {
        if self.closed {
            1..self.nodes.len() - 1
        } else {
            0..self.nodes.len()
        }
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn is_uniform(&self) -> bool {
        self.max_spacing() - self.min_spacing() <= 1e-9 * self.max_spacing()
    }

    /// Trapezoid weights of the node set.
    pub fn weights(&self) -> Vec<f64> {
        let x = &self.nodes;
        let k = x.len();
        let mut w = vec![0.0; k];
        for i in 0..k - 1 {
            let h = x[i + 1] - x[i];
            w[i] += 0.5 * h;
            w[i + 1] += 0.5 * h;
        }
        w
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let i = self.nodes.partition_point(|&v| v < x);
        if i == 0 {
            0
        } else if i == self.nodes.len() {
            i - 1
        } else if (self.nodes[i] - x) < (x - self.nodes[i - 1]) {
            i
        } else {
            i - 1
        }
    }

    /// Piecewise-linear interpolation of a nodal field.
    pub fn interpolate(&self, field: &[f64], x: f64) -> f64 {
        let nodes = &self.nodes;
        if x <= nodes[0] {
            return field[0];
        }
        if x >= nodes[nodes.len() - 1] {
            return field[nodes.len() - 1];
        }
        let i = nodes.partition_point(|&v| v <= x) - 1;
        let t = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
        field[i] * (1.0 - t) + field[i + 1] * t
    }
}

/// Uniform tensor grid on a bounding box, masked to the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    /// Node counts along each axis, boundary lines included.
    pub counts: [usize; 2],
    pub interior_mask: Vec<bool>,
}

impl PlaneGrid {
    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.counts[0] + i
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        let i = k % self.counts[0];
        let j = k / self.counts[0];
        [
            self.origin[0] + self.spacing[0] * i as f64,
            self.origin[1] + self.spacing[1] * j as f64,
        ]
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.interior_mask[k]).collect()
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing[0] * self.spacing[1]
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let i = (((x[0] - self.origin[0]) / self.spacing[0]).round().max(0.0) as usize).min(self.counts[0] - 1);
        let j = (((x[1] - self.origin[1]) / self.spacing[1]).round().max(0.0) as usize).min(self.counts[1] - 1);
        self.index(i, j)
    }

    /// Bilinear interpolation of a nodal field.
    pub fn interpolate(&self, field: &[f64], x: &[f64]) -> f64 {
        let fx = ((x[0] - self.origin[0]) / self.spacing[0]).clamp(0.0, (self.counts[0] - 1) as f64);
        let fy = ((x[1] - self.origin[1]) / self.spacing[1]).clamp(0.0, (self.counts[1] - 1) as f64);
        let i = (fx.floor() as usize).min(self.counts[0] - 2);
        let j = (fy.floor() as usize).min(self.counts[1] - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v = |a: usize, b: usize| field[self.index(a, b)];
        (1.0 - tx) * (1.0 - ty) * v(i, j)
            + tx * (1.0 - ty) * v(i + 1, j)
            + (1.0 - tx) * ty * v(i, j + 1)
            + tx * ty * v(i + 1, j + 1)
    }
}

/// Grid over a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "kebab-case")]
pub enum Grid {
    Line(LineGrid),
    Plane(PlaneGrid),
}

impl Grid {
    /// Uniform grid with `cells` intervals per axis over the domain.
    pub fn uniform(domain: &DomainSpec, cells: usize) -> Result<Grid> {
        domain.validate()?;
        if cells < 2 {
            return Err(Error::Resolution(format!("{cells} cells cannot resolve a domain")));
        }
        let (lo, hi) = domain.bounding_box();
        match domain.dim() {
            1 => Ok(Grid::Line(LineGrid::new(uniform_nodes(lo[0], hi[0], cells), true)?)),
            2 => {
                let counts = [cells + 1, cells + 1];
                let spacing = [(hi[0] - lo[0]) / cells as f64, (hi[1] - lo[1]) / cells as f64];
                let mut g = PlaneGrid {
                    origin: [lo[0], lo[1]],
                    spacing,
                    counts,
                    interior_mask: vec![false; counts[0] * counts[1]],
                };
                for k in 0..g.len() {
                    let i = k % counts[0];
                    let j = k / counts[0];
                    let edge = i == 0 || j == 0 || i == counts[0] - 1 || j == counts[1] - 1;
                    g.interior_mask[k] = !edge && domain.contains(&g.point(k));
                }
                Ok(Grid::Plane(g))
            }
            n => Err(Error::Capability(format!("no grids for n = {n}"))),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Line(g) => g.len(),
            Grid::Plane(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Grid::Line(_) => 1,
            Grid::Plane(_) => 2,
        }
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        match self {
            Grid::Line(g) => g.interior().collect(),
            Grid::Plane(g) => g.interior_indices(),
        }
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        match self {
            Grid::Line(g) => vec![g.nodes[k]],
            Grid::Plane(g) => g.point(k).to_vec(),
        }
    }

    /// Quadrature weights of the nodes (trapezoid in 1D, cell area in 2D).
    pub fn weights(&self) -> Vec<f64> {
        match self {
            Grid::Line(g) => g.weights(),
            Grid::Plane(g) => vec![g.cell_area(); g.len()],
        }
    }

    /// Smallest node spacing.
    pub fn spacing(&self) -> f64 {
        match self {
            Grid::Line(g) => g.min_spacing(),
            Grid::Plane(g) => g.spacing[0].min(g.spacing[1]),
        }
    }

    pub fn nearest(&self, x: &[f64]) -> usize {
        match self {
            Grid::Line(g) => g.nearest(x[0]),
            Grid::Plane(g) => g.nearest(x),
        }
    }

    pub fn interpolate(&self, field: &[f64], x: &[f64]) -> f64 {
        match self {
            Grid::Line(g) => g.interpolate(field, x[0]),
            Grid::Plane(g) => g.interpolate(field, x),
        }
    }

    pub fn as_line(&self) -> Option<&LineGrid> {
        match self {
            Grid::Line(g) => Some(g),
            Grid::Plane(_) => None,
        }
    }

    pub fn as_plane(&self) -> Option<&PlaneGrid> {
        match self {
            Grid::Plane(g) => Some(g),
            Grid::Line(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_mesh_contains_anchors_and_respects_spacing() {
        let spec = GradedMeshSpec::new(-1.0, 1.0, 1e-4, 0.1, 0.05).with_anchor(0.3, 1e-3);
        let nodes = spec.build().unwrap();
        assert_eq!(nodes[0], -1.0);
        assert_eq!(*nodes.last().unwrap(), 1.0);
        assert!(nodes.iter().any(|&x| x == 0.3));
        let hmin = nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let hmax = nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(hmin > 0.5e-4 && hmin < 2e-4, "{hmin}");
        assert!(hmax < 0.06, "{hmax}");
        // neighbouring cells differ by a bounded ratio
        for w in nodes.windows(3) {
            let r = (w[2] - w[1]) / (w[1] - w[0]);
            assert!(r < 1.5 && r > 1.0 / 1.5, "ratio {r}");
        }
    }

    #[test]
    fn graded_mesh_hits_target_count() {
        let spec = GradedMeshSpec::new(0.0, 40.0, 1e-3, 0.15, 2.0).with_anchor(1.0, 0.01);
        for target in [200, 401, 1000] {
            let nodes = spec.build_with_count(target).unwrap();
            let diff = nodes.len().abs_diff(target);
            assert!(diff <= target / 50 + 2, "{} vs {target}", nodes.len());
        }
    }

    #[test]
    fn domain_geometry() {
        let ball = DomainSpec::unit_ball(2);
        assert!(ball.contains(&[0.5, 0.5]));
        assert!((ball.boundary_distance(&[0.6, 0.0]) - 0.4).abs() < 1e-15);
        let hs = DomainSpec::TruncatedHalfSpace { n: 1, truncation: 40.0 };
        assert!(hs.check_region(&[1.0]).is_ok());
        assert!(hs.check_region(&[5.0]).is_err());
        assert_eq!(hs.physical_boundary_distance(&[3.0]), 3.0);
        let bad = DomainSpec::Interval { a: 1.0, b: 0.0 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn plane_grid_masks_disk() {
        let g = Grid::uniform(&DomainSpec::unit_ball(2), 20).unwrap();
        let plane = g.as_plane().unwrap();
        for k in plane.interior_indices() {
            let p = plane.point(k);
            assert!(p[0] * p[0] + p[1] * p[1] < 1.0);
        }
        let field: Vec<f64> = (0..plane.len()).map(|k| plane.point(k)[0] + 2.0 * plane.point(k)[1]).collect();
        let v = plane.interpolate(&field, &[0.13, -0.27]);
        assert!((v - (0.13 - 0.54)).abs() < 1e-12);
    }

    #[test]
    fn line_interpolation_is_exact_for_linear_fields() {
        let g = LineGrid::new(vec![0.0, 0.1, 0.5, 2.0], true).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((g.interpolate(&f, 1.3) - 2.9).abs() < 1e-14);
        assert_eq!(g.nearest(0.31), 2);
    }
}
