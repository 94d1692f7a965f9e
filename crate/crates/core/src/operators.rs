//! Discrete fractional Laplacians: the spectral operator through Dirichlet
//! eigen-series, the restricted operator through product integration of the
//! hypersingular kernel, and a whole-line operator with an algebraic tail.

use std::io::{Read, Write};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, Grid, LineGrid, PlaneGrid};
use crate::error::{Error, Result};
use crate::params::{hypersingular_constant, FracParams};
use crate::quad::{exp_sinh, tanh_sinh, GaussRule, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Spectral,
    Restricted,
    WholeSpace,
}

impl std::str::FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(OperatorKind::Spectral),
            "restricted" => Ok(OperatorKind::Restricted),
            "whole-space" => Ok(OperatorKind::WholeSpace),
            other => Err(Error::Config(format!("unknown operator kind '{other}'"))),
        }
    }
}

/// Dirichlet sine basis of an interval sampled on `modes` uniform interior nodes.
#[derive(Debug, Clone)]
pub struct SineBasis {
    pub a: f64,
    pub len: f64,
    pub modes: usize,
    table: Vec<f64>,
}

impl SineBasis {
    pub fn new(a: f64, len: f64, modes: usize) -> Self {
        let period = 2 * (modes + 1);
        let norm = (2.0 / len).sqrt();
        let table = (0..period)
            .map(|j| norm * (std::f64::consts::PI * j as f64 / (modes + 1) as f64).sin())
            .collect();
        SineBasis { a, len, modes, table }
    }

    pub fn spacing(&self) -> f64 {
        self.len / (self.modes + 1) as f64
    }

    /// Dirichlet eigenvalue `(kπ/ℓ)^2`, `k >= 1`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let w = std::f64::consts::PI * k as f64 / self.len;
        w * w
    }

    /// `φ_k` at grid node `i` (`0 ..= modes + 1`).
    pub fn node_value(&self, k: usize, i: usize) -> f64 {
        self.table[(k * i) % self.table.len()]
    }

    /// `φ_k(x)` for any `x`.
    pub fn eval(&self, k: usize, x: f64) -> f64 {
        (2.0 / self.len).sqrt() * (std::f64::consts::PI * k as f64 * (x - self.a) / self.len).sin()
    }

    /// Coefficients `h Σ_i u_i φ_k(x_i)` of the interior values `u`.
    pub fn forward(&self, u: &[f64]) -> Vec<f64> {
        let h = self.spacing();
        (1..=self.modes)
            .into_par_iter()
            .map(|k| h * u.iter().enumerate().map(|(i, v)| v * self.node_value(k, i + 1)).sum::<f64>())
            .collect()
    }

    /// Interior values of `Σ_k c_k φ_k`.
    pub fn inverse(&self, c: &[f64]) -> Vec<f64> {
        (1..=self.modes)
            .into_par_iter()
            .map(|i| c.iter().enumerate().map(|(k, v)| v * self.node_value(k + 1, i)).sum::<f64>())
            .collect()
    }

    /// Dense matrix `Φ[i, k] = φ_{k+1}(x_{i+1})`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.modes, self.modes, |i, k| self.node_value(k + 1, i + 1))
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Sine(SineBasis),
    SineTensor {
        x: SineBasis,
        y: SineBasis,
        phi_x: DMatrix<f64>,
        phi_y: DMatrix<f64>,
    },
    /// Eigenpairs of a discrete Laplacian; columns orthonormal in the
    /// Euclidean inner product of the unknowns.
    Eigen {
        values: Vec<f64>,
        vectors: DMatrix<f64>,
    },
    /// Quadrature matrix over the unknowns, with coupling to boundary nodes
    /// carrying prescribed values.
    Matrix {
        a: DMatrix<f64>,
        boundary: DMatrix<f64>,
    },
}

/// A fractional Laplacian realized on a grid.
#[derive(Debug)]
pub struct DiscreteOperator {
    pub kind: OperatorKind,
    /// `None` for the whole-line operator.
    pub domain: Option<DomainSpec>,
    pub s: f64,
    pub n: usize,
    grid: Grid,
    unknowns: Vec<usize>,
    boundary_nodes: Vec<usize>,
    repr: Repr,
    lu: OnceLock<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Clone for DiscreteOperator {
    fn clone(&self) -> Self {
        DiscreteOperator {
            kind: self.kind,
            domain: self.domain.clone(),
            s: self.s,
            n: self.n,
            grid: self.grid.clone(),
            unknowns: self.unknowns.clone(),
            boundary_nodes: self.boundary_nodes.clone(),
            repr: self.repr.clone(),
            lu: OnceLock::new(),
        }
    }
}

/// Build a discrete operator of the given kind on `grid` over `domain`.
pub fn build_operator(
    domain: &DomainSpec,
    params: &FracParams,
    grid: Grid,
    kind: OperatorKind,
) -> Result<DiscreteOperator> {
    domain.validate()?;
    if domain.dim() != params.n || grid.dim() != params.n {
        return Err(Error::Config(format!(
            "domain of dimension {} and grid of dimension {} do not match n = {}",
            domain.dim(),
            grid.dim(),
            params.n
        )));
    }
    match kind {
        OperatorKind::Spectral => build_spectral(domain, params.s, grid),
        OperatorKind::Restricted => build_restricted(domain, params.s, grid),
        OperatorKind::WholeSpace => Err(Error::Capability(
            "the whole-line operator has no domain; use DiscreteOperator::whole_line".into(),
        )),
    }
}

fn build_spectral(domain: &DomainSpec, s: f64, grid: Grid) -> Result<DiscreteOperator> {
    let mismatch = || Error::Config("spectral operators need a uniform grid spanning the domain".into());
    let (repr, unknowns, n) = match (domain, &grid) {
        (DomainSpec::Interval { .. } | DomainSpec::Ball { .. } | DomainSpec::TruncatedHalfSpace { n: 1, .. }, Grid::Line(g)) => {
            let (a, b) = domain.interval_bounds().ok_or_else(mismatch)?;
            if !g.closed || !g.is_uniform() || (g.nodes[0] - a).abs() > 1e-12 || (g.nodes[g.len() - 1] - b).abs() > 1e-12 {
                return Err(mismatch());
            }
            let basis = SineBasis::new(a, b - a, g.len() - 2);
            (Repr::Sine(basis), g.interior().collect(), 1)
        }
        (DomainSpec::Rectangle { .. } | DomainSpec::TruncatedHalfSpace { n: 2, .. }, Grid::Plane(g)) => {
            let (lo, hi) = domain.bounding_box();
            if (g.origin[0] - lo[0]).abs() > 1e-12 || (g.origin[1] - lo[1]).abs() > 1e-12 {
                return Err(mismatch());
            }
            let x = SineBasis::new(lo[0], hi[0] - lo[0], g.counts[0] - 2);
            let y = SineBasis::new(lo[1], hi[1] - lo[1], g.counts[1] - 2);
            let unknowns = (1..g.counts[1] - 1)
                .flat_map(|j| (1..g.counts[0] - 1).map(move |i| (i, j)))
                .map(|(i, j)| g.index(i, j))
                .collect();
            let phi_x = x.matrix();
            let phi_y = y.matrix();
            (Repr::SineTensor { x, y, phi_x, phi_y }, unknowns, 2)
        }
        (DomainSpec::Ball { .. }, Grid::Plane(g)) => {
            let (values, vectors, unknowns) = five_point_eigen(g)?;
            (Repr::Eigen { values, vectors }, unknowns, 2)
        }
        _ => {
            return Err(Error::Capability(format!(
                "no spectral realization for {domain:?} on this grid"
            )))
        }
    };
    let boundary_nodes = complement(grid.len(), &unknowns);
    Ok(DiscreteOperator {
        kind: OperatorKind::Spectral,
        domain: Some(domain.clone()),
        s,
        n,
        grid,
        unknowns,
        boundary_nodes,
        repr,
        lu: OnceLock::new(),
    })
}

fn complement(len: usize, unknowns: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; len];
    for &k in unknowns {
        mark[k] = true;
    }
    (0..len).filter(|&k| !mark[k]).collect()
}

fn five_point_laplacian(g: &PlaneGrid, unknowns: &[usize]) -> Result<DMatrix<f64>> {
    if (g.spacing[0] - g.spacing[1]).abs() > 1e-12 * g.spacing[0] {
        return Err(Error::Config("the disk Laplacian needs equal spacing on both axes".into()));
    }
    let h2 = g.spacing[0] * g.spacing[0];
    let mut pos = vec![usize::MAX; g.len()];
    for (r, &k) in unknowns.iter().enumerate() {
        pos[k] = r;
    }
    let m = unknowns.len();
    let mut lap = DMatrix::zeros(m, m);
    for (r, &k) in unknowns.iter().enumerate() {
        lap[(r, r)] = 4.0 / h2;
        let i = k % g.counts[0];
        let j = k / g.counts[0];
        for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (ii, jj) = (i as i64 + di, j as i64 + dj);
            let nb = g.index(ii as usize, jj as usize);
            if pos[nb] != usize::MAX {
                lap[(r, pos[nb])] = -1.0 / h2;
            }
        }
    }
    Ok(lap)
}

type EigenParts = (Vec<f64>, DMatrix<f64>, Vec<usize>);

fn five_point_eigen(g: &PlaneGrid) -> Result<EigenParts> {
    let unknowns = g.interior_indices();
    if unknowns.len() < 4 {
        return Err(Error::Resolution("grid leaves fewer than four interior nodes".into()));
    }
    let lap = five_point_laplacian(g, &unknowns)?;
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(unknowns.len(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors, unknowns))
}

fn build_restricted(domain: &DomainSpec, s: f64, grid: Grid) -> Result<DiscreteOperator> {
    let n = domain.dim();
    let c = hypersingular_constant(n, s);
    let (repr, unknowns) = match &grid {
        Grid::Line(g) => {
            let (a, b) = domain.interval_bounds().ok_or_else(|| {
                Error::Config("line grids need a one-dimensional domain".into())
            })?;
            if !g.closed || (g.nodes[0] - a).abs() > 1e-12 * (b - a) || (g.nodes[g.len() - 1] - b).abs() > 1e-12 * (b - a) {
                return Err(Error::Config(
                    "restricted grids must be closed with end nodes on the boundary".into(),
                ));
            }
            let rows = line_rows(&g.nodes, s, c, LineTail::Zero);
            let unknowns: Vec<usize> = g.interior().collect();
            let m = unknowns.len();
            let a_mat = DMatrix::from_fn(m, m, |r, col| rows[r][col + 1]);
            let last = g.len() - 1;
            let boundary = DMatrix::from_fn(m, 2, |r, col| rows[r][if col == 0 { 0 } else { last }]);
            (Repr::Matrix { a: a_mat, boundary }, unknowns)
        }
        Grid::Plane(g) => {
            let unknowns = g.interior_indices();
            let a_mat = lattice_matrix(g, &unknowns, s, c)?;
            let m = unknowns.len();
            (
                Repr::Matrix {
                    a: a_mat,
                    boundary: DMatrix::zeros(m, 0),
                },
                unknowns,
            )
        }
    };
    let boundary_nodes = match &grid {
        Grid::Line(g) => vec![0, g.len() - 1],
        Grid::Plane(_) => Vec::new(),
    };
    Ok(DiscreteOperator {
        kind: OperatorKind::Restricted,
        domain: Some(domain.clone()),
        s,
        n,
        grid,
        unknowns,
        boundary_nodes,
        repr,
        lu: OnceLock::new(),
    })
}

/// Far-field model of a line operator beyond the end nodes.
#[derive(Debug, Clone, Copy)]
enum LineTail {
    /// Values vanish beyond the end nodes.
    Zero,
    /// `u(z) = u_end (|x_end| / |z|)^q` beyond the end nodes.
    Algebraic(f64),
}

fn gauss6() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::legendre(6))
}

/// Moments of the element at distances `[d1, d2]` from the row node:
/// `(∫ y^{-1-2s}, ∫ (d2 - y)/h y^{-1-2s})`. The second is the weight of the
/// element node closest to the row node.
fn element_moments(d1: f64, d2: f64, s: f64) -> (f64, f64) {
    let h = d2 - d1;
    let rho = h / d1;
    if rho < 0.05 {
        let rule = gauss6();
        let (mid, half) = (0.5 * (d1 + d2), 0.5 * h);
        let mut m0 = 0.0;
        let mut near = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let y = mid + half * x;
            let k = w * half * y.powf(-1.0 - 2.0 * s);
            m0 += k;
            near += k * (d2 - y) / h;
        }
        (m0, near)
    } else {
        let l = rho.ln_1p();
        let m0 = d1.powf(-2.0 * s) * (-(-2.0 * s * l).exp_m1()) / (2.0 * s);
        let m1 = if (1.0 - 2.0 * s).abs() < 1e-12 {
            l
        } else {
            d1.powf(1.0 - 2.0 * s) * ((1.0 - 2.0 * s) * l).exp_m1() / (1.0 - 2.0 * s)
        };
        (m0, (d2 * m0 - m1) / h)
    }
}

/// `∫_0^∞ g(y) (d + y)^{-1-2s} dy` through `y = d t / (1 - t)`.
pub fn exterior_integral<G: Fn(f64) -> f64>(g: G, d: f64, s: f64) -> Result<f64> {
    let est = tanh_sinh(
        |t, _, one_minus| {
            let y = d * t / one_minus;
            if one_minus < 1e-200 || !y.is_finite() {
                return 0.0;
            }
            g(y) * one_minus.powf(2.0 * s - 1.0)
        },
        0.0,
        1.0,
        Tolerance::new(1e-300, 1e-12),
    )?;
    Ok(d.powf(-2.0 * s) * est.value)
}

/// `∫_0^∞ (1 - (1+t)^{-q}) t^{-1-2s} dt`.
fn algebraic_tail_constant(q: f64, s: f64) -> f64 {
    exp_sinh(
        |t, _| {
            if t > 0.0 {
                -(-q * t.ln_1p()).exp_m1() / t * t.powf(-2.0 * s)
            } else {
                0.0
            }
        },
        0.0,
        Tolerance::rel(1e-13),
    )
    .map(|e| e.value)
    .unwrap_or(f64::NAN)
}

/// Rows of the product-integration matrix: entry `j` of row `r` multiplies
/// `u_j` in `(A u)(x_i)` for the `r`-th row node. Closed tails yield rows for
/// interior nodes only.
fn line_rows(x: &[f64], s: f64, c: f64, tail: LineTail) -> Vec<Vec<f64>> {
    let k = x.len();
    let last = k - 1;
    let rows: Vec<usize> = match tail {
        LineTail::Zero => (1..last).collect(),
        LineTail::Algebraic(_) => (0..k).collect(),
    };
    let adj = |h: f64| h.powf(-2.0 * s) / (1.0 - 2.0 * s);
    let (tail_q, kappa) = match tail {
        LineTail::Zero => (0.0, 0.0),
        LineTail::Algebraic(q) => (q, algebraic_tail_constant(q, s)),
    };
    rows.par_iter()
        .map(|&i| {
            let xi = x[i];
            let mut row = vec![0.0; k];
            let mut diag = 0.0;
            if i > 0 && i < last {
                // Quadratic through the row node and its neighbours on the two
                // adjacent elements: u_i - Q(x_i + y) = -(a1 y + a2 y^2).
                let (l, r) = (xi - x[i - 1], x[i + 1] - xi);
                let odd = if (1.0 - 2.0 * s).abs() < 1e-12 {
                    (r / l).ln()
                } else {
                    (r.powf(1.0 - 2.0 * s) - l.powf(1.0 - 2.0 * s)) / (1.0 - 2.0 * s)
                };
                let even = (l.powf(2.0 - 2.0 * s) + r.powf(2.0 - 2.0 * s)) / (2.0 - 2.0 * s);
                // a2 = [(u+ - u)/r + (u- - u)/l] / (r + l), a1 = (u+ - u)/r - a2 r
                let a2 = [1.0 / (l * (r + l)), -1.0 / (r * l), 1.0 / (r * (r + l))];
                let a1 = [-a2[0] * r, -1.0 / r - a2[1] * r, 1.0 / r - a2[2] * r];
                for (j, idx) in [i - 1, i, i + 1].into_iter().enumerate() {
                    row[idx] -= a1[j] * odd + a2[j] * even;
                }
            }
            for e in 0..last {
                let (xa, xc) = (x[e], x[e + 1]);
                if e == i || e + 1 == i {
                    if i > 0 && i < last {
                        continue;
                    }
                    let w = adj(xc - xa);
                    let other = if e == i { e + 1 } else { e };
                    diag += w;
                    row[other] -= w;
                } else if xc < xi {
                    let (m0, near) = element_moments(xi - xc, xi - xa, s);
                    diag += m0;
                    row[e + 1] -= near;
                    row[e] -= m0 - near;
                } else {
                    let (m0, near) = element_moments(xa - xi, xc - xi, s);
                    diag += m0;
                    row[e] -= near;
                    row[e + 1] -= m0 - near;
                }
            }
            match tail {
                LineTail::Zero => {
                    diag += ((xi - x[0]).powf(-2.0 * s) + (x[last] - xi).powf(-2.0 * s)) / (2.0 * s);
                }
                LineTail::Algebraic(_) => {
                    for (end, dist) in [(last, x[last] - xi), (0, xi - x[0])] {
                        let l = x[end].abs();
                        if end == i {
                            diag += l.powf(-2.0 * s) * kappa;
                        } else {
                            diag += dist.powf(-2.0 * s) / (2.0 * s);
                            let t = exterior_integral(|y| (l / (l + y)).powf(tail_q), dist, s)
                                .unwrap_or(f64::NAN);
                            row[end] -= t;
                        }
                    }
                }
            }
            row[i] += diag;
            row.iter_mut().for_each(|v| *v *= c);
            row
        })
        .collect()
}

/// `Σ_{(k,l) ≠ 0} (k^2 + l^2)^{-σ/2}` for `σ > 2`.
fn lattice_zeta(sigma: f64) -> f64 {
    let r: i64 = 200;
    let mut sum = 0.0;
    for k in -r..=r {
        for l in -r..=r {
            if k != 0 || l != 0 {
                sum += ((k * k + l * l) as f64).powf(-0.5 * sigma);
            }
        }
    }
    // Region outside the square of half-width r + 1/2.
    let half = r as f64 + 0.5;
    let rule = GaussRule::legendre(32).mapped(0.0, std::f64::consts::FRAC_PI_4);
    let tail = 8.0 / (sigma - 2.0) * rule.sum(|th| (half / th.cos()).powf(2.0 - sigma));
    sum + tail
}

/// Lattice discretization `c [u_i h^{-2s} Z - Σ_{j ≠ i} h^2 |x_i - x_j|^{-2-2s} u_j]`
/// with `u = 0` off the unknowns.
fn lattice_matrix(g: &PlaneGrid, unknowns: &[usize], s: f64, c: f64) -> Result<DMatrix<f64>> {
    let h = g.spacing[0];
    if (g.spacing[1] - h).abs() > 1e-12 * h {
        return Err(Error::Config("the lattice scheme needs equal spacing on both axes".into()));
    }
    let zeta = lattice_zeta(2.0 + 2.0 * s);
    let m = unknowns.len();
    let pts: Vec<(i64, i64)> = unknowns
        .iter()
        .map(|&k| ((k % g.counts[0]) as i64, (k / g.counts[0]) as i64))
        .collect();
    let diag = c * h.powf(-2.0 * s) * zeta;
    let off = c * h.powf(-2.0 * s);
    Ok(DMatrix::from_fn(m, m, |r, col| {
        if r == col {
            diag
        } else {
            let (di, dj) = (pts[r].0 - pts[col].0, pts[r].1 - pts[col].1);
            -off * ((di * di + dj * dj) as f64).powf(-1.0 - s)
        }
    }))
}

/// Sup-norm comparison for the problem with vanishing interior source and
/// prescribed data on the complement of the domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub data_sup: f64,
    pub solution_sup: f64,
    pub ratio: f64,
    pub grid_tolerance: f64,
    pub passed: bool,
}

impl DiscreteOperator {
    /// Whole-line operator on a grid spanning `[-L, L]` with the far field
    /// modelled as `u_end (L/|z|)^{n-2s}`.
    pub fn whole_line(params: &FracParams, grid: LineGrid) -> Result<Self> {
        if params.n != 1 {
            return Err(Error::Capability("the whole-space operator is one-dimensional".into()));
        }
        if grid.nodes[0] >= 0.0 || grid.nodes[grid.len() - 1] <= 0.0 {
            return Err(Error::Config("whole-line grids must straddle the origin".into()));
        }
        let s = params.s;
        let c = hypersingular_constant(1, s);
        let rows = line_rows(&grid.nodes, s, c, LineTail::Algebraic(params.decay()));
        let m = grid.len();
        let a = DMatrix::from_fn(m, m, |r, col| rows[r][col]);
        let grid = LineGrid { closed: false, ..grid };
        Ok(DiscreteOperator {
            kind: OperatorKind::WholeSpace,
            domain: None,
            s,
            n: 1,
            unknowns: (0..m).collect(),
            boundary_nodes: Vec::new(),
            grid: Grid::Line(grid),
            repr: Repr::Matrix {
                a,
                boundary: DMatrix::zeros(m, 0),
            },
            lu: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Node indices carrying unknowns.
    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    /// Node indices carrying boundary values.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Number of retained eigenmodes of a spectral operator.
    pub fn truncation(&self) -> Option<usize> {
        match &self.repr {
            Repr::Sine(b) => Some(b.modes),
            Repr::SineTensor { x, y, .. } => Some(x.modes * y.modes),
            Repr::Eigen { values, .. } => Some(values.len()),
            Repr::Matrix { .. } => None,
        }
    }

    /// Dirichlet eigenvalues of the Laplacian underlying a spectral operator,
    /// in increasing order.
    pub fn laplacian_eigenvalues(&self) -> Option<Vec<f64>> {
        match &self.repr {
            Repr::Sine(b) => Some((1..=b.modes).map(|k| b.eigenvalue(k)).collect()),
            Repr::SineTensor { x, y, .. } => {
                let mut v: Vec<f64> = (1..=x.modes)
                    .flat_map(|i| (1..=y.modes).map(move |j| (i, j)))
                    .map(|(i, j)| x.eigenvalue(i) + y.eigenvalue(j))
                    .collect();
                v.sort_by(f64::total_cmp);
                Some(v)
            }
            Repr::Eigen { values, .. } => Some(values.clone()),
            Repr::Matrix { .. } => None,
        }
    }

    /// Matrix acting on the unknowns, if the operator is a quadrature matrix.
    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            Repr::Matrix { a, .. } => Some(a),
            _ => None,
        }
    }

    /// Dense matrix of the operator on the unknowns (materialized for
    /// spectral kinds).
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Matrix { a, .. } => a.clone(),
            _ => {
                let m = self.unknowns.len();
                let mut out = DMatrix::zeros(m, m);
                let mut e = vec![0.0; m];
                for col in 0..m {
                    e[col] = 1.0;
                    let v = self.apply_unknowns(&e);
                    out.set_column(col, &DVector::from_vec(v));
                    e[col] = 0.0;
                }
                out
            }
        }
    }

    fn check_field(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.grid.len() {
            return Err(Error::GridMismatch {
                expected: self.grid.len(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Values of a nodal field at the unknowns.
    pub fn gather(&self, u: &[f64]) -> Vec<f64> {
        self.unknowns.iter().map(|&k| u[k]).collect()
    }

    /// Nodal field with the given unknowns and zero elsewhere.
    pub fn scatter(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (&k, &x) in self.unknowns.iter().zip(v) {
            out[k] = x;
        }
        out
    }

    fn spectral_multiply(&self, v: &[f64], power: f64) -> Vec<f64> {
        match &self.repr {
            Repr::Sine(b) => {
                let mut c = b.forward(v);
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck *= b.eigenvalue(k + 1).powf(power);
                }
                b.inverse(&c)
            }
            Repr::SineTensor { x, y, phi_x, phi_y } => {
                let (nx, ny) = (x.modes, y.modes);
                let u = DMatrix::from_column_slice(nx, ny, v);
                let mut c = phi_x.transpose() * u * phi_y * (x.spacing() * y.spacing());
                for i in 0..nx {
                    for j in 0..ny {
                        c[(i, j)] *= (x.eigenvalue(i + 1) + y.eigenvalue(j + 1)).powf(power);
                    }
                }
                let out = phi_x * c * phi_y.transpose();
                out.as_slice().to_vec()
            }
            Repr::Eigen { values, vectors } => {
                let mut c = vectors.transpose() * DVector::from_column_slice(v);
                for (ck, lam) in c.iter_mut().zip(values) {
                    *ck *= lam.powf(power);
                }
                (vectors * c).as_slice().to_vec()
            }
            Repr::Matrix { .. } => unreachable!("quadrature operators are not spectral"),
        }
    }

    /// `A u` restricted to the unknowns, for a vector of unknowns.
    pub fn apply_unknowns(&self, v: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Matrix { a, .. } => (a * DVector::from_column_slice(v)).as_slice().to_vec(),
            _ => self.spectral_multiply(v, self.s),
        }
    }

    /// `A u` at the unknowns; zero at the remaining nodes. Values of `u` at
    /// boundary nodes of a restricted line operator enter through the
    /// boundary coupling.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_field(u)?;
        let mut out = self.apply_unknowns(&self.gather(u));
        if let Repr::Matrix { boundary, .. } = &self.repr {
            if boundary.ncols() > 0 {
                let ub = DVector::from_iterator(
                    self.boundary_nodes.len(),
                    self.boundary_nodes.iter().map(|&k| u[k]),
                );
                let extra = boundary * ub;
                out.iter_mut().zip(extra.iter()).for_each(|(o, e)| *o += e);
            }
        }
        Ok(self.scatter(&out))
    }

    fn lu(&self) -> &LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
        self.lu.get_or_init(|| match &self.repr {
            Repr::Matrix { a, .. } => a.clone().lu(),
            _ => self.dense_matrix().lu(),
        })
    }

    /// Solve `A u = f` at the unknowns with `u = 0` on the complement.
    pub fn solve_unknowns(&self, f: &[f64]) -> Result<Vec<f64>> {
        match &self.repr {
            Repr::Matrix { .. } => {
                let sol = self
                    .lu()
                    .solve(&DVector::from_column_slice(f))
                    .ok_or_else(|| Error::Singular("quadrature matrix is singular".into()))?;
                Ok(sol.as_slice().to_vec())
            }
            _ => Ok(self.spectral_multiply(f, -self.s)),
        }
    }

    /// Solve for several right-hand sides at once (columns of `f`).
    pub fn solve_many(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.repr {
            Repr::Matrix { .. } => self
                .lu()
                .solve(f)
                .ok_or_else(|| Error::Singular("quadrature matrix is singular".into())),
            _ => {
                let mut out = DMatrix::zeros(f.nrows(), f.ncols());
                for (j, col) in f.column_iter().enumerate() {
                    let v = self.spectral_multiply(col.as_slice(), -self.s);
                    out.set_column(j, &DVector::from_vec(v));
                }
                Ok(out)
            }
        }
    }

    /// Solve `A u = f` with `u = 0` on the complement of the domain; `f` is a
    /// nodal field whose values off the unknowns are ignored.
    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_field(f)?;
        let u = self.solve_unknowns(&self.gather(f))?;
        Ok(self.scatter(&u))
    }

    /// For a restricted line operator: the interior load
    /// `c ∫_{R \ Ω} g(z) |x_i - z|^{-1-2s} dz` of exterior data `g`.
    pub fn exterior_load(&self, g: &(dyn Fn(f64) -> f64 + Sync)) -> Result<Vec<f64>> {
        let (line, (a, b)) = self.restricted_line()?;
        let s = self.s;
        let c = hypersingular_constant(1, s);
        self.unknowns
            .par_iter()
            .map(|&k| {
                let x = line.nodes[k];
                let right = exterior_integral(|y| g(b + y), b - x, s)?;
                let left = exterior_integral(|y| g(a - y), x - a, s)?;
                Ok(c * (left + right))
            })
            .collect()
    }

    fn restricted_line(&self) -> Result<(&LineGrid, (f64, f64))> {
        match (&self.kind, &self.grid, &self.domain) {
            (OperatorKind::Restricted, Grid::Line(g), Some(d)) => Ok((g, d.interval_bounds().expect("line domain"))),
            _ => Err(Error::Capability(
                "exterior data are supported for restricted line operators only".into(),
            )),
        }
    }

    /// Restricted line problem `A u = f` in the domain with `u = g` on the
    /// complement. Returns the nodal field, boundary nodes included.
    pub fn solve_exterior(&self, f: &[f64], g: &(dyn Fn(f64) -> f64 + Sync)) -> Result<Vec<f64>> {
        self.check_field(f)?;
        let load = self.exterior_load(g)?;
        let (line, (a, b)) = self.restricted_line()?;
        let _ = line;
        let mut rhs = self.gather(f);
        let bvals = DVector::from_vec(vec![g(a), g(b)]);
        if let Repr::Matrix { boundary, .. } = &self.repr {
            let coupling = boundary * &bvals;
            for (r, v) in rhs.iter_mut().enumerate() {
                *v += load[r] - coupling[r];
            }
        }
        let u = self.solve_unknowns(&rhs)?;
        let mut out = self.scatter(&u);
        out[self.boundary_nodes[0]] = bvals[0];
        out[self.boundary_nodes[1]] = bvals[1];
        Ok(out)
    }

    /// Smallest eigenvalue of the operator on the unknowns.
    pub fn smallest_eigenvalue(&self) -> Result<f64> {
        if let Some(ev) = self.laplacian_eigenvalues() {
            return Ok(ev[0].powf(self.s));
        }
        // Inverse iteration; the principal eigenvector is positive.
        let m = self.unknowns.len();
        let mut v = DVector::from_element(m, 1.0 / (m as f64).sqrt());
        let mut mu = 0.0;
        for _ in 0..500 {
            let w = DVector::from_vec(self.solve_unknowns(v.as_slice())?);
            let next = 1.0 / v.dot(&w);
            v = &w / w.norm();
            if (next - mu).abs() <= 1e-13 * next.abs() {
                return Ok(next);
            }
            mu = next;
        }
        Err(Error::numeric("inverse iteration for the smallest eigenvalue", (mu).abs()))
    }

    /// Descriptor identifying the operator for caching.
    pub fn cache_key(&self) -> String {
        let dom = match &self.domain {
            Some(d) => serde_json::to_string(d).unwrap_or_default(),
            None => "whole-line".into(),
        };
        format!(
            "{:?}|{}|s={:.17e}|nodes={}|h={:.17e}",
            self.kind,
            dom,
            self.s,
            self.grid.len(),
            self.grid.spacing()
        )
    }

    /// Write the operator data (eigenvalues or matrix) to a binary stream:
    /// a JSON header line followed by little-endian `f64` values.
    pub fn write_cache<W: Write>(&self, mut out: W) -> Result<()> {
        let (values, rows, cols) = match &self.repr {
            Repr::Matrix { a, .. } => (a.as_slice().to_vec(), a.nrows(), a.ncols()),
            Repr::Eigen { values, vectors } => {
                let mut data = values.clone();
                data.extend_from_slice(vectors.as_slice());
                (data, vectors.nrows(), vectors.ncols() + 1)
            }
            _ => (self.laplacian_eigenvalues().unwrap_or_default(), 1, self.unknowns.len()),
        };
        let header = serde_json::json!({
            "key": self.cache_key(),
            "rows": rows,
            "cols": cols,
        });
        writeln!(out, "{header}")?;
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Replace the operator data by a cache written for the same key.
    pub fn read_cache<R: Read>(&mut self, mut input: R) -> Result<()> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Config("cache file lacks a header".into()))?;
        let header: serde_json::Value = serde_json::from_slice(&bytes[..split])?;
        if header["key"].as_str() != Some(self.cache_key().as_str()) {
            return Err(Error::Config("cache file belongs to a different operator".into()));
        }
        let data: Vec<f64> = bytes[split + 1..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight bytes")))
            .collect();
        let rows = header["rows"].as_u64().unwrap_or(0) as usize;
        let cols = header["cols"].as_u64().unwrap_or(0) as usize;
        if data.len() != rows * cols {
            return Err(Error::GridMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        match &mut self.repr {
            Repr::Matrix { a, .. } => {
                *a = DMatrix::from_vec(rows, cols, data);
            }
            Repr::Eigen { values, vectors } => {
                let m = rows;
                *values = data[..cols - 1].to_vec();
                *vectors = DMatrix::from_vec(m, cols - 1, data[cols - 1..].to_vec());
            }
            _ => {}
        }
        self.lu = OnceLock::new();
        Ok(())
    }
}

/// Solve the problem with vanishing source in the domain and data `g` on its
/// complement (restricted) or boundary (spectral, through the harmonic
/// extension), and compare sup norms.
pub fn max_principle_check(op: &DiscreteOperator, g: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<MaxPrincipleReport> {
    let grid = op.grid();
    let h = grid.spacing();
    let diam = op.domain.as_ref().map_or(1.0, |d| d.diameter());
    let (solution, data_sup) = match (op.kind, grid) {
        (OperatorKind::Restricted, Grid::Line(line)) => {
            let (a, b) = op.domain.as_ref().and_then(|d| d.interval_bounds()).expect("line domain");
            let g1 = |z: f64| g(&[z]);
            let u = op.solve_exterior(&vec![0.0; line.len()], &g1)?;
            // Sample the data on the complement at geometrically spaced distances.
            let mut sup: f64 = 0.0;
            for k in 0..400 {
                let y = diam * 1e-6 * 10f64.powf(k as f64 / 40.0);
                sup = sup.max(g1(a - y).abs()).max(g1(b + y).abs());
            }
            sup = sup.max(g1(a).abs()).max(g1(b).abs());
            (op.gather(&u), sup)
        }
        (OperatorKind::Spectral, Grid::Line(line)) => {
            let (a, b) = (line.nodes[0], line.nodes[line.len() - 1]);
            let (ga, gb) = (g(&[a]), g(&[b]));
            let u: Vec<f64> = op
                .unknowns()
                .iter()
                .map(|&k| ga + (gb - ga) * (line.nodes[k] - a) / (b - a))
                .collect();
            (u, ga.abs().max(gb.abs()))
        }
        (OperatorKind::Spectral, Grid::Plane(plane)) => {
            let unknowns = op.unknowns();
            let lap = five_point_laplacian(plane, unknowns)?;
            let h2 = plane.spacing[0] * plane.spacing[0];
            let mut pos = vec![usize::MAX; plane.len()];
            for (r, &k) in unknowns.iter().enumerate() {
                pos[k] = r;
            }
            let mut rhs = DVector::zeros(unknowns.len());
            let mut sup: f64 = 0.0;
            for (r, &k) in unknowns.iter().enumerate() {
                let i = k % plane.counts[0];
                let j = k / plane.counts[0];
                for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let nb = plane.index((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    if pos[nb] == usize::MAX {
                        let v = g(&plane.point(nb));
                        sup = sup.max(v.abs());
                        rhs[r] += v / h2;
                    }
                }
            }
            let u = lap
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular("discrete Laplacian".into()))?;
            (u.as_slice().to_vec(), sup)
        }
        _ => {
            return Err(Error::Capability(format!(
                "no maximum-principle check for {:?} operators on this grid",
                op.kind
            )))
        }
    };
    let solution_sup = solution.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ratio = if data_sup > 0.0 { solution_sup / data_sup } else { 0.0 };
    let grid_tolerance = 2.0 * h / diam;
    Ok(MaxPrincipleReport {
        data_sup,
        solution_sup,
        ratio,
        grid_tolerance,
        passed: ratio <= 1.0 + grid_tolerance && (data_sup > 0.0 || solution_sup == 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{sinh_nodes, uniform_nodes, GradedMeshSpec};
    use crate::params::Criticality;

    fn params(s: f64) -> FracParams {
        FracParams::new(1, s, Criticality::Subcritical, 0.0).unwrap()
    }

    fn interval_pi(cells: usize) -> (DomainSpec, Grid) {
        let d = DomainSpec::Interval {
            a: 0.0,
            b: std::f64::consts::PI,
        };
        let g = Grid::uniform(&d, cells).unwrap();
        (d, g)
    }

    #[test]
    fn spectral_eigenfunction_scaling() {
        let s = 0.3;
        let (d, g) = interval_pi(256);
        let op = build_operator(&d, &params(s), g.clone(), OperatorKind::Spectral).unwrap();
        let u: Vec<f64> = (0..g.len()).map(|k| (2.0 * g.point(k)[0]).sin()).collect();
        let au = op.apply(&u).unwrap();
        let scale = 4f64.powf(s);
        for k in op.unknowns() {
            assert!((au[*k] - scale * u[*k]).abs() <= 1e-10 * scale, "{k}");
        }
        assert!((op.smallest_eigenvalue().unwrap() - 1.0).abs() < 1e-14);
        let f: Vec<f64> = (0..g.len()).map(|k| g.point(k)[0].sin()).collect();
        let sol = op.solve(&f).unwrap();
        for k in op.unknowns() {
            assert!((sol[*k] - f[*k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangle_principal_eigenvalue() {
        let pi = std::f64::consts::PI;
        let d = DomainSpec::Rectangle {
            lo: [0.0, 0.0],
            hi: [pi, pi],
        };
        let p = FracParams::new(2, 0.5, Criticality::Subcritical, 0.0).unwrap();
        let g = Grid::uniform(&d, 24).unwrap();
        let op = build_operator(&d, &p, g.clone(), OperatorKind::Spectral).unwrap();
        assert!((op.laplacian_eigenvalues().unwrap()[0] - 2.0).abs() < 1e-13);
        let u: Vec<f64> = (0..g.len())
            .map(|k| {
                let x = g.point(k);
                (x[0]).sin() * (2.0 * x[1]).sin()
            })
            .collect();
        let au = op.apply(&u).unwrap();
        for k in op.unknowns() {
            assert!((au[*k] - 5f64.sqrt() * u[*k]).abs() < 1e-10);
        }
    }

    #[test]
    fn restricted_annihilates_constants() {
        let s = 0.3;
        let d = DomainSpec::Interval { a: -1.0, b: 1.0 };
        let nodes = GradedMeshSpec::new(-1.0, 1.0, 1e-3, 0.1, 0.05).build().unwrap();
        let g = Grid::Line(LineGrid::new(nodes, true).unwrap());
        let op = build_operator(&d, &params(s), g.clone(), OperatorKind::Restricted).unwrap();
        let one = |_: f64| 1.0;
        let u = op.solve_exterior(&vec![0.0; g.len()], &one).unwrap();
        for v in &u {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn restricted_symmetric_on_uniform_grid() {
        let d = DomainSpec::Interval { a: -1.0, b: 1.0 };
        let g = Grid::Line(LineGrid::new(uniform_nodes(-1.0, 1.0, 80), true).unwrap());
        let op = build_operator(&d, &params(0.4), g, OperatorKind::Restricted).unwrap();
        let a = op.matrix().unwrap();
        let asym = (a - a.transpose()).amax();
        assert!(asym <= 1e-10 * a.amax(), "{asym}");
    }

    #[test]
    fn restricted_half_order_principal_eigenvalue() {
        // Principal eigenvalue of the restricted half-Laplacian on (-1, 1).
        let reference = 1.157_773_883_697_7;
        let d = DomainSpec::Interval { a: -1.0, b: 1.0 };
        let mut last = 0.0;
        for cells in [200, 400] {
            let nodes = GradedMeshSpec::new(-1.0, 1.0, 0.02 / cells as f64, 0.08, 2.0 / cells as f64)
                .build_with_count(cells + 1)
                .unwrap();
            let g = Grid::Line(LineGrid::new(nodes, true).unwrap());
            let half = FracParams { n: 1, s: 0.5, sign: Criticality::Subcritical, eps: 0.0 };
            let op = build_operator(&d, &half, g, OperatorKind::Restricted).unwrap();
            last = op.smallest_eigenvalue().unwrap();
        }
        assert!((last / reference - 1.0).abs() < 2e-3, "{last}");
    }

    #[test]
    fn tail_constant_matches_beta_integral() {
        // (q / 2s) Γ(1-2s) Γ(q+2s) / Γ(q+1), which is 5/3 at q = 0.4, s = 0.3
        assert!((algebraic_tail_constant(0.4, 0.3) - 5.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn whole_line_bubble_residual() {
        let s = 0.3;
        let p = params(s);
        let b = 0.727_089_806_682_866_7;
        let q = p.decay();
        let mut prev = f64::INFINITY;
        for cells in [1000, 2000] {
            let nodes = sinh_nodes(1e3, 0.5, cells);
            let op = DiscreteOperator::whole_line(&p, LineGrid::new(nodes.clone(), false).unwrap()).unwrap();
            let w: Vec<f64> = nodes.iter().map(|x| b * (1.0 + x * x).powf(-q / 2.0)).collect();
            let aw = op.apply(&w).unwrap();
            assert!(aw.iter().all(|v| v.is_finite()));
            let v = op.solve(&w.iter().map(|x| x.powi(4)).collect::<Vec<_>>()).unwrap();
            let solve_err = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(f64::NAN, f64::max) / b;
            assert!(solve_err < 2e-2, "{solve_err}");
            let res = aw
                .iter()
                .zip(&w)
                .map(|(a, v)| (a - v.powi(4)).abs())
                .fold(0.0, f64::max)
                / b.powi(4);
            assert!(res < prev);
            prev = res;
        }
        assert!(prev < 5e-3, "{prev}");
    }

    #[test]
    fn max_principle_for_exterior_noise() {
        let d = DomainSpec::Interval { a: -1.0, b: 1.0 };
        let nodes = GradedMeshSpec::new(-1.0, 1.0, 1e-3, 0.1, 0.05).build().unwrap();
        let g = Grid::Line(LineGrid::new(nodes, true).unwrap());
        let op = build_operator(&d, &params(0.3), g, OperatorKind::Restricted).unwrap();
        let data = |x: &[f64]| (7.0 * x[0].atan()).sin() * 0.8 + 0.15 * (3.0 * (2.0 * x[0]).atan()).cos();
        let report = max_principle_check(&op, &data).unwrap();
        assert!(report.passed, "{report:?}");
        let zero = max_principle_check(&op, &|_: &[f64]| 0.0).unwrap();
        assert_eq!(zero.solution_sup, 0.0);
    }

    #[test]
    fn disk_spectral_round_trip() {
        let d = DomainSpec::unit_ball(2);
        let p = FracParams::new(2, 0.5, Criticality::Subcritical, 0.0).unwrap();
        let g = Grid::uniform(&d, 16).unwrap();
        let op = build_operator(&d, &p, g.clone(), OperatorKind::Spectral).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|k| 1.0 + g.point(k)[0]).collect();
        let u = op.solve(&f).unwrap();
        let back = op.apply(&u).unwrap();
        for &k in op.unknowns() {
            assert!((back[k] - f[k]).abs() < 1e-10);
        }
        // First Dirichlet eigenvalue of the unit disk is j_{0,1}^2 = 5.783...
        let l1 = op.laplacian_eigenvalues().unwrap()[0];
        assert!((l1 / 5.783_185_962_946_784 - 1.0).abs() < 0.1, "{l1}");
    }

    #[test]
    fn lattice_scheme_principal_eigenvalue_converges() {
        let d = DomainSpec::unit_ball(2);
        let p = FracParams::new(2, 0.5, Criticality::Subcritical, 0.0).unwrap();
        let l: Vec<f64> = [12usize, 24]
            .iter()
            .map(|&c| {
                let g = Grid::uniform(&d, c).unwrap();
                build_operator(&d, &p, g, OperatorKind::Restricted)
                    .unwrap()
                    .smallest_eigenvalue()
                    .unwrap()
            })
            .collect();
        assert!((l[1] / l[0] - 1.0).abs() < 0.1, "{l:?}");
    }

    #[test]
    fn cache_round_trip() {
        let d = DomainSpec::Interval { a: -1.0, b: 1.0 };
        let g = Grid::Line(LineGrid::new(uniform_nodes(-1.0, 1.0, 20), true).unwrap());
        let op = build_operator(&d, &params(0.3), g, OperatorKind::Restricted).unwrap();
        let mut bytes = Vec::new();
        op.write_cache(&mut bytes).unwrap();
        let mut other = op.clone();
        other.read_cache(bytes.as_slice()).unwrap();
        assert_eq!(op.matrix(), other.matrix());
    }
}
