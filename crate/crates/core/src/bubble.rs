//! Multi-bubble ansatz on the enlarged domain `Ω_ε = ε^{-1/(n-2s)} Ω`: bubble
//! projections, the projected linear and nonlinear problems with their
//! multipliers, energies, and numerical checks of the ε-expansions.
//!
//! The grid machinery is one-dimensional.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{Bubble, ConstantSet};
use crate::domain::{DomainSpec, GradedMeshSpec, Grid, LineGrid};
use crate::energy::{flatten, Objective, ReducedEnergy};
use crate::error::{Error, Result};
use crate::green::{Fundamental, GreenSource};
use crate::operators::{build_operator, DiscreteOperator, OperatorKind};
use crate::params::{Criticality, FracParams};
use crate::quad::{tanh_sinh, GaussRule, Tolerance};

/// Points, rates and perturbation of an `m`-bubble ansatz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzConfig {
    pub params: FracParams,
    pub domain: DomainSpec,
    pub xi: Vec<Vec<f64>>,
    #[serde(rename = "Lambda")]
    pub big_lambda: Vec<f64>,
}

impl AnsatzConfig {
    pub fn new(params: FracParams, domain: DomainSpec, xi: Vec<Vec<f64>>, big_lambda: Vec<f64>) -> Result<Self> {
        params.validate()?;
        domain.validate()?;
        if !(params.eps > 0.0) {
            return Err(Error::Config("the ansatz needs eps > 0".into()));
        }
        if xi.is_empty() || xi.len() != big_lambda.len() {
            return Err(Error::Config(format!(
                "{} points and {} rates given",
                xi.len(),
                big_lambda.len()
            )));
        }
        for (i, x) in xi.iter().enumerate() {
            if x.len() != params.n {
                return Err(Error::Config(format!("ξ_{} has dimension {}", i + 1, x.len())));
            }
            if !(domain.boundary_distance(x) > 0.0) {
                return Err(Error::Domain(format!("ξ_{} = {x:?} is not interior", i + 1)));
            }
        }
        if let Some(i) = big_lambda.iter().position(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Domain(format!("Λ_{} = {} must be positive", i + 1, big_lambda[i])));
        }
        for i in 0..xi.len() {
            for j in i + 1..xi.len() {
                if dist(&xi[i], &xi[j]) == 0.0 {
                    return Err(Error::Domain(format!("ξ_{} and ξ_{} coincide", i + 1, j + 1)));
                }
            }
        }
        Ok(AnsatzConfig { params, domain, xi, big_lambda })
    }

    pub fn m(&self) -> usize {
        self.xi.len()
    }

    /// `μ = ε^{1/(n-2s)}`.
    pub fn dilation(&self) -> f64 {
        self.params.dilation()
    }

    pub fn scaled_domain(&self) -> DomainSpec {
        self.domain.dilated(self.dilation())
    }

    /// `ξ_i' = ξ_i / μ`.
    pub fn scaled_points(&self) -> Vec<Vec<f64>> {
        let mu = self.dilation();
        self.xi.iter().map(|x| x.iter().map(|v| v / mu).collect()).collect()
    }

    /// `λ_i = (β Λ_i²)^{1/(n-2s)}`.
    pub fn rates(&self, consts: &ConstantSet) -> Vec<f64> {
        self.big_lambda.iter().map(|&l| consts.scaled_rate(l)).collect()
    }

    /// `p* ± ε`.
    pub fn exponent(&self) -> f64 {
        self.params.exponent()
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.params.with_eps(eps)?, self.domain.clone(), self.xi.clone(), self.big_lambda.clone())
    }

    /// Separation and interior-distance bounds, checked on `Ω_ε`.
    pub fn check_separation(&self, delta: f64) -> Result<()> {
        let mu = self.dilation();
        let scaled = self.scaled_domain();
        let pts = self.scaled_points();
        for (i, p) in pts.iter().enumerate() {
            let d = scaled.boundary_distance(p);
            if d < delta / mu {
                return Err(Error::Domain(format!(
                    "dist(ξ_{}', ∂Ω_ε) = {d:.3e} is below δ/μ = {:.3e}",
                    i + 1,
                    delta / mu
                )));
            }
            for (j, q) in pts.iter().enumerate().skip(i + 1) {
                let d = dist(p, q);
                if d < delta / mu {
                    return Err(Error::Domain(format!(
                        "separation |ξ_{}' - ξ_{}'| = {d:.3e} is below δ/μ = {:.3e}",
                        i + 1,
                        j + 1,
                        delta / mu
                    )));
                }
            }
        }
        Ok(())
    }

    /// Bubbles `w_{λ_i, ξ_i'}` on the enlarged line.
    pub fn bubbles(&self, consts: &ConstantSet) -> Result<Vec<Bubble<1>>> {
        if self.params.n != 1 {
            return Err(Error::Capability("the bubble machine is one-dimensional".into()));
        }
        consts.ensure_matches(&self.params)?;
        Ok(self
            .scaled_points()
            .iter()
            .zip(self.rates(consts))
            .map(|(p, l)| Bubble::new(consts, l, [p[0]]))
            .collect())
    }
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Spacings of the graded meshes on `Ω_ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    /// Spacing at each bubble center, in units of its rate.
    pub core: f64,
    pub growth: f64,
    /// Spacing at the boundary, relative to the half-width of `Ω_ε`.
    pub boundary: f64,
    /// Largest spacing, relative to the half-width.
    pub coarse: f64,
    /// Rescale all spacings to hit this node count.
    pub nodes: Option<usize>,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions {
            core: 0.03,
            growth: 0.05,
            boundary: 1e-3,
            coarse: 0.05,
            nodes: None,
        }
    }
}

impl MeshOptions {
    pub fn with_nodes(self, nodes: usize) -> Self {
        MeshOptions { nodes: Some(nodes), ..self }
    }

    fn build(&self, a: f64, b: f64, bubbles: &[Bubble<1>]) -> Result<Vec<f64>> {
        let half = 0.5 * (b - a);
        let mut spec = GradedMeshSpec::new(a, b, self.boundary * half, self.growth, self.coarse * half);
        for bu in bubbles {
            spec = spec.with_anchor(bu.xi[0], self.core * bu.lambda);
        }
        match self.nodes {
            Some(n) => spec.build_with_count(n),
            None => spec.build(),
        }
    }
}

/// Closed graded grid on `Ω_ε` refined at the bubble centers and the boundary.
pub fn ansatz_grid(cfg: &AnsatzConfig, consts: &ConstantSet, opts: &MeshOptions) -> Result<LineGrid> {
    let bubbles = cfg.bubbles(consts)?;
    let (a, b) = cfg
        .scaled_domain()
        .interval_bounds()
        .ok_or_else(|| Error::Capability("the bubble machine needs an interval".into()))?;
    LineGrid::new(opts.build(a, b, &bubbles)?, true)
}

/// Operator of the given kind on the graded grid of `Ω_ε`. The whole-line
/// kind ignores the domain and uses `[-L, L]` with `L` the half-width of `Ω_ε`.
pub fn machine_operator(
    cfg: &AnsatzConfig,
    consts: &ConstantSet,
    kind: OperatorKind,
    opts: &MeshOptions,
) -> Result<DiscreteOperator> {
    let bubbles = cfg.bubbles(consts)?;
    let scaled = cfg.scaled_domain();
    let (a, b) = scaled
        .interval_bounds()
        .ok_or_else(|| Error::Capability("the bubble machine needs an interval".into()))?;
    match kind {
        OperatorKind::Restricted => {
            let grid = LineGrid::new(opts.build(a, b, &bubbles)?, true)?;
            build_operator(&scaled, &cfg.params, Grid::Line(grid), kind)
        }
        OperatorKind::Spectral => {
            let lmin = bubbles.iter().map(|bu| bu.lambda).fold(f64::INFINITY, f64::min);
            let needed = (b - a) / (opts.core * lmin);
            Err(Error::Capability(format!(
                "the spectral operator needs a uniform grid; resolving the bubbles on Ω_ε takes about {needed:.1e} nodes"
            )))
        }
        OperatorKind::WholeSpace => {
            let l = a.abs().max(b.abs());
            let grid = LineGrid::new(opts.build(-l, l, &bubbles)?, false)?;
            DiscreteOperator::whole_line(&cfg.params, grid)
        }
    }
}

fn line_nodes(op: &DiscreteOperator) -> Result<&LineGrid> {
    op.grid()
        .as_line()
        .ok_or_else(|| Error::Capability("the bubble machine works on line grids".into()))
}

/// Bubble values at the grid nodes.
pub fn bubble_field(grid: &LineGrid, bubble: &Bubble<1>) -> Vec<f64> {
    grid.nodes.iter().map(|&x| bubble.value(&[x])).collect()
}

/// `v_i` with `A v_i = w_i^{p*}` in `Ω_ε` and `v_i = 0` outside.
pub fn project_bubble(op: &DiscreteOperator, consts: &ConstantSet, bubble: &Bubble<1>) -> Result<Vec<f64>> {
    let p = consts.critical_exponent();
    let grid = line_nodes(op)?;
    let f: Vec<f64> = grid.nodes.iter().map(|&x| bubble.value(&[x]).powf(p)).collect();
    op.solve(&f)
}

/// `v̄ = Σ v_i`.
pub fn build_ansatz(projections: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = projections
        .first()
        .ok_or_else(|| Error::Config("the ansatz needs at least one projection".into()))?;
    let mut out = vec![0.0; first.len()];
    for v in projections {
        if v.len() != out.len() {
            return Err(Error::GridMismatch {
                expected: out.len(),
                got: v.len(),
            });
        }
        out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
    }
    Ok(out)
}

/// `‖h‖_α = sup |h(x)| / Σ_i (1 + |x - ξ_i'|)^{-α}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub alpha: f64,
    pub centers: Vec<f64>,
}

impl WeightedNorm {
    pub fn new(alpha: f64, centers: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0) || centers.is_empty() {
            return Err(Error::Config(format!(
                "weighted norm needs α > 0 and at least one center (α = {alpha})"
            )));
        }
        Ok(WeightedNorm { alpha, centers })
    }

    /// Norm of the linear theory, with `2s < α < 4s`.
    pub fn linear_theory(alpha: f64, centers: Vec<f64>, s: f64) -> Result<Self> {
        if !(alpha > 2.0 * s && alpha < 4.0 * s) {
            return Err(Error::Config(format!(
                "α = {alpha} must lie in (2s, 4s) = ({}, {})",
                2.0 * s,
                4.0 * s
            )));
        }
        Self::new(alpha, centers)
    }

    pub fn weight(&self, x: f64) -> f64 {
        self.centers.iter().map(|c| (1.0 + (x - c).abs()).powf(-self.alpha)).sum()
    }

    /// The norm with exponent `α - by`.
    pub fn lowered(&self, by: f64) -> WeightedNorm {
        WeightedNorm {
            alpha: self.alpha - by,
            centers: self.centers.clone(),
        }
    }

    pub fn norm(&self, nodes: &[f64], h: &[f64]) -> f64 {
        nodes
            .iter()
            .zip(h)
            .map(|(&x, v)| v.abs() / self.weight(x))
            .fold(0.0, f64::max)
    }
}

pub fn weighted_norm(nodes: &[f64], h: &[f64], wn: &WeightedNorm) -> f64 {
    wn.norm(nodes, h)
}

/// `N_ε(φ) = (v̄+φ)_+^p - v̄_+^p - p v̄_+^{p-1} φ`.
pub fn nonlinear_term(p: f64, vbar: &[f64], phi: &[f64]) -> Vec<f64> {
    vbar.iter()
        .zip(phi)
        .map(|(&v, &f)| {
            let vp = v.max(0.0);
            (v + f).max(0.0).powf(p) - vp.powf(p) - p * vp.powf(p - 1.0) * f
        })
        .collect()
}

/// `R_ε = v̄_+^{p} - Σ w_i^{p*}` and `N_ε(φ)`, with `p = p* ± ε`.
pub fn error_terms(p: f64, p_star: f64, w: &[Vec<f64>], vbar: &[f64], phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let residual = (0..vbar.len())
        .map(|k| vbar[k].max(0.0).powf(p) - w.iter().map(|wi| wi[k].powf(p_star)).sum::<f64>())
        .collect();
    (residual, nonlinear_term(p, vbar, phi))
}

/// Solution of the projected problem with its multipliers `c_ij`
/// (`j = 0` dilation, `j = 1` translation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedSolution {
    pub phi: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub alpha: f64,
    /// `‖h‖_α`.
    pub h_norm: f64,
    /// `‖φ‖_{α-2s}`.
    pub phi_norm: f64,
    /// Largest `|∫ φ w_i^{p*-1} z_ij|`, relative to `sup|φ| ∫ |w_i^{p*-1} z_ij|`.
    pub orthogonality: f64,
}

impl ProjectedSolution {
    /// `‖φ‖_{α-2s} / ‖h‖_α`.
    pub fn constant(&self) -> f64 {
        if self.h_norm > 0.0 {
            self.phi_norm / self.h_norm
        } else {
            0.0
        }
    }

    pub fn max_multiplier(&self) -> f64 {
        self.c.iter().flatten().fold(0.0, |a: f64, v| a.max(v.abs()))
    }

    pub fn sup_phi(&self) -> f64 {
        self.phi.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
    }
}

/// Result of the fixed-point iteration `φ ← L_ε(R_ε + N_ε(φ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearSolution {
    pub solution: ProjectedSolution,
    /// `ψ = L_ε(R_ε)`.
    pub psi: Vec<f64>,
    pub psi_norm: f64,
    /// `‖φ - ψ‖_{α-2s}`.
    pub tilde_norm: f64,
    /// `‖R_ε‖_α`.
    pub residual_norm: f64,
    /// Largest ratio of successive increments.
    pub contraction: f64,
    pub iterations: usize,
    pub increments: Vec<f64>,
}

/// Discretized projected problem around a fixed ansatz.
pub struct ReductionSystem {
    op: DiscreteOperator,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    pub bubbles: Vec<Bubble<1>>,
    pub p_star: f64,
    pub exponent: f64,
    pub s: f64,
    pub norm: WeightedNorm,
    pub w: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub vbar: Vec<f64>,
    /// Projected kernels `z_ij`, index `2i + j`.
    pub z: Vec<Vec<f64>>,
    linear: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    columns: DMatrix<f64>,
    constraints: DMatrix<f64>,
    x_cols: DMatrix<f64>,
    schur: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl std::fmt::Debug for ReductionSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReductionSystem")
            .field("nodes", &self.nodes.len())
            .field("bubbles", &self.bubbles)
            .field("exponent", &self.exponent)
            .field("norm", &self.norm)
            .finish()
    }
}

impl ReductionSystem {
    /// Projections, kernels and the factorized linearized operator for the
    /// bubbles on `op`'s grid with nonlinearity exponent `exponent`.
    pub fn new(
        op: DiscreteOperator,
        consts: &ConstantSet,
        bubbles: Vec<Bubble<1>>,
        exponent: f64,
        alpha: f64,
    ) -> Result<Self> {
        let grid = line_nodes(&op)?.clone();
        let p_star = consts.critical_exponent();
        let s = op.s;
        let norm = WeightedNorm::linear_theory(alpha, bubbles.iter().map(|bu| bu.xi[0]).collect(), s)?;
        let w: Vec<Vec<f64>> = bubbles.iter().map(|bu| bubble_field(&grid, bu)).collect();
        let v = bubbles
            .iter()
            .map(|bu| project_bubble(&op, consts, bu))
            .collect::<Result<Vec<_>>>()?;
        let vbar = build_ansatz(&v)?;
        let unknowns = op.unknowns().to_vec();
        let nu = unknowns.len();
        let k = 2 * bubbles.len();

        let mut zbar_src = DMatrix::zeros(nu, k);
        for (i, bu) in bubbles.iter().enumerate() {
            for (r, &node) in unknowns.iter().enumerate() {
                let x = [grid.nodes[node]];
                let wp = p_star * bu.value(&x).powf(p_star - 1.0);
                zbar_src[(r, 2 * i)] = wp * bu.dilation_kernel(&x);
                zbar_src[(r, 2 * i + 1)] = wp * bu.translation_kernel(0, &x);
            }
        }
        let z_unknowns = op.solve_many(&zbar_src)?;
        let z: Vec<Vec<f64>> = (0..k)
            .map(|col| op.scatter(z_unknowns.column(col).as_slice()))
            .collect();

        let weights = grid.weights();
        let mut columns = DMatrix::zeros(nu, k);
        let mut constraints = DMatrix::zeros(k, nu);
        for col in 0..k {
            let wi = &w[col / 2];
            for (r, &node) in unknowns.iter().enumerate() {
                let b = wi[node].powf(p_star - 1.0) * z[col][node];
                columns[(r, col)] = b;
                constraints[(col, r)] = weights[node] * b;
            }
        }

        let mut linear = op.dense_matrix();
        for (r, &node) in unknowns.iter().enumerate() {
            linear[(r, r)] -= exponent * vbar[node].max(0.0).powf(exponent - 1.0);
        }
        let lu = linear.clone().lu();
        let x_cols = lu
            .solve(&columns)
            .ok_or_else(|| Error::Singular("linearized operator is singular".into()))?;
        let schur_mat = &constraints * &x_cols;
        let schur = schur_mat.clone().lu();
        if !schur.is_invertible() {
            return Err(Error::Resolution(
                "the bordered system is singular; refine the grid or decrease ε".into(),
            ));
        }
        Ok(ReductionSystem {
            op,
            nodes: grid.nodes,
            weights,
            bubbles,
            p_star,
            exponent,
            s,
            norm,
            w,
            v,
            vbar,
            z,
            linear,
            lu,
            columns,
            constraints,
            x_cols,
            schur,
        })
    }

    /// System for an ansatz configuration on the graded restricted grid.
    pub fn for_ansatz(cfg: &AnsatzConfig, consts: &ConstantSet, opts: &MeshOptions, alpha: f64) -> Result<Self> {
        let op = machine_operator(cfg, consts, OperatorKind::Restricted, opts)?;
        Self::new(op, consts, cfg.bubbles(consts)?, cfg.exponent(), alpha)
    }

    pub fn operator(&self) -> &DiscreteOperator {
        &self.op
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Constraint generator `w_i^{p*-1} z_ij` as a nodal field.
    pub fn generator(&self, i: usize, j: usize) -> Vec<f64> {
        let col = 2 * i + j;
        self.op.scatter(self.columns.column(col).as_slice())
    }

    fn unknown_norm(&self, alpha: f64, values: &[f64]) -> f64 {
        let wn = WeightedNorm {
            alpha,
            centers: self.norm.centers.clone(),
        };
        self.op
            .unknowns()
            .iter()
            .zip(values)
            .map(|(&k, v)| v.abs() / wn.weight(self.nodes[k]))
            .fold(0.0, f64::max)
    }

    fn package(&self, h_unknowns: &[f64], phi_unknowns: &[f64], c: &[f64]) -> ProjectedSolution {
        let sup = phi_unknowns.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        let mut orthogonality = 0.0f64;
        if sup > 0.0 {
            for col in 0..self.constraints.nrows() {
                let row = self.constraints.row(col);
                let dot: f64 = row.iter().zip(phi_unknowns).map(|(a, b)| a * b).sum();
                let scale: f64 = row.iter().map(|a| a.abs()).sum::<f64>() * sup;
                orthogonality = orthogonality.max(dot.abs() / scale);
            }
        }
        ProjectedSolution {
            phi: self.op.scatter(phi_unknowns),
            c: c.chunks(2).map(|ch| ch.to_vec()).collect(),
            alpha: self.norm.alpha,
            h_norm: self.unknown_norm(self.norm.alpha, h_unknowns),
            phi_norm: self.unknown_norm(self.norm.alpha - 2.0 * self.s, phi_unknowns),
            orthogonality,
        }
    }

    /// `(A - p v̄^{p-1}) φ = h + Σ c_ij w_i^{p*-1} z_ij` with `φ ⊥ w_i^{p*-1} z_ij`,
    /// through the Schur complement of the constraint block.
    pub fn solve_projected_linear(&self, h: &[f64]) -> Result<ProjectedSolution> {
        if h.len() != self.nodes.len() {
            return Err(Error::GridMismatch {
                expected: self.nodes.len(),
                got: h.len(),
            });
        }
        let hu = DVector::from_vec(self.op.gather(h));
        let (phi, c) = self.solve_unknowns(&hu)?;
        Ok(self.package(hu.as_slice(), phi.as_slice(), c.as_slice()))
    }

    fn solve_unknowns(&self, hu: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let singular = || Error::Singular("linearized operator is singular".into());
        let y = self.lu.solve(hu).ok_or_else(singular)?;
        let rhs = -(&self.constraints * &y);
        let c = self.schur.solve(&rhs).ok_or_else(singular)?;
        let phi = y + &self.x_cols * &c;
        Ok((phi, c))
    }

    /// The same problem by a dense full-pivoting solve of the bordered matrix.
    pub fn solve_projected_dense(&self, h: &[f64]) -> Result<ProjectedSolution> {
        let hu = self.op.gather(h);
        let nu = hu.len();
        let k = self.columns.ncols();
        let mut big = DMatrix::zeros(nu + k, nu + k);
        big.view_mut((0, 0), (nu, nu)).copy_from(&self.linear);
        big.view_mut((0, nu), (nu, k)).copy_from(&(-&self.columns));
        big.view_mut((nu, 0), (k, nu)).copy_from(&self.constraints);
        let mut rhs = DVector::zeros(nu + k);
        rhs.rows_mut(0, nu).copy_from_slice(&hu);
        let sol = big
            .full_piv_lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("bordered matrix is singular".into()))?;
        Ok(self.package(&hu, &sol.as_slice()[..nu], &sol.as_slice()[nu..]))
    }

    /// `R_ε` as a nodal field.
    pub fn residual(&self) -> Vec<f64> {
        let zero = vec![0.0; self.nodes.len()];
        error_terms(self.exponent, self.p_star, &self.w, &self.vbar, &zero).0
    }

    /// Fixed-point iteration for `φ = L_ε(R_ε + N_ε(φ))`, stopped when the
    /// increment in `‖·‖_{α-2s}` falls below `tol`.
    pub fn solve_nonlinear(&self, max_iter: usize, tol: f64) -> Result<NonlinearSolution> {
        self.iterate(&self.residual(), max_iter, tol)
    }

    /// Fixed-point iteration `φ ← L_ε(residual + N_ε(φ))` for a prescribed residual field.
    pub fn iterate(&self, residual: &[f64], max_iter: usize, tol: f64) -> Result<NonlinearSolution> {
        if residual.len() != self.nodes.len() {
            return Err(Error::GridMismatch {
                expected: self.nodes.len(),
                got: residual.len(),
            });
        }
        if max_iter == 0 {
            return Err(Error::Config("the fixed-point iteration needs max_iter >= 1".into()));
        }
        let unknowns = self.op.unknowns();
        let r: Vec<f64> = self.op.gather(residual);
        let lowered = self.norm.alpha - 2.0 * self.s;
        let (psi, _) = self.solve_unknowns(&DVector::from_column_slice(&r))?;
        let mut phi = psi.clone();
        let mut increments = Vec::new();
        let mut contraction = 0.0f64;
        for iter in 1..=max_iter {
            let vbar_u: Vec<f64> = unknowns.iter().map(|&k| self.vbar[k]).collect();
            let nl = nonlinear_term(self.exponent, &vbar_u, phi.as_slice());
            let rhs = DVector::from_iterator(r.len(), r.iter().zip(&nl).map(|(a, b)| a + b));
            let (next, c) = self.solve_unknowns(&rhs)?;
            let d = self.unknown_norm(lowered, (&next - &phi).as_slice());
            if let Some(&prev) = increments.last() {
                if prev > 1e3 * tol {
                    contraction = contraction.max(d / prev);
                }
                if d >= prev && prev > tol {
                    return Err(Error::numeric(
                        format!("fixed point does not contract: last increments {prev:.3e} and {d:.3e}"),
                        d,
                    ));
                }
            }
            increments.push(d);
            phi = next;
            if d <= tol {
                let solution = self.package(rhs.as_slice(), phi.as_slice(), c.as_slice());
                return Ok(NonlinearSolution {
                    psi_norm: self.unknown_norm(lowered, psi.as_slice()),
                    tilde_norm: self.unknown_norm(lowered, (&phi - &psi).as_slice()),
                    residual_norm: self.unknown_norm(self.norm.alpha, &r),
                    psi: self.op.scatter(psi.as_slice()),
                    solution,
                    contraction,
                    iterations: iter,
                    increments,
                });
            }
        }
        let n = increments.len();
        Err(Error::numeric(
            format!(
                "fixed point not converged in {max_iter} iterations; last increments {:.3e} and {:.3e}",
                increments[n.saturating_sub(2)],
                increments[n - 1]
            ),
            increments[n - 1],
        ))
    }
}

/// `J(v) = ½⟨A v, v⟩ - (1/r) ∫ |v|^r` with trapezoid weights on the grid.
pub fn energy(op: &DiscreteOperator, r: f64, v: &[f64]) -> Result<f64> {
    let grid = line_nodes(op)?;
    let av = op.apply(v)?;
    let q = grid.weights();
    let quad: f64 = (0..v.len()).map(|k| q[k] * v[k] * av[k]).sum();
    let pot: f64 = (0..v.len()).map(|k| q[k] * v[k].abs().powf(r)).sum();
    Ok(0.5 * quad - pot / r)
}

/// Energy of the ansatz `v̄` with exact projections: the boundary
/// correction `w_i - v_i` is evaluated from the regular part of the domain
/// and the far field of the bubble, both by quadrature.
pub struct ExactAnsatz<'a> {
    consts: &'a ConstantSet,
    source: &'a dyn GreenSource,
    interval: (f64, f64),
    inner: GaussRule,
    outer: GaussRule,
    fundamental: Fundamental,
}

/// One bubble on the enlarged line, with the geometry of `Ω_ε`.
#[derive(Debug, Clone, Copy)]
struct ScaledBubble {
    center: f64,
    rate: f64,
}

impl<'a> ExactAnsatz<'a> {
    pub fn new(
        consts: &'a ConstantSet,
        source: &'a dyn GreenSource,
        interval: (f64, f64),
        inner: usize,
        outer: usize,
    ) -> Result<Self> {
        if consts.n != 1 || source.dim() != 1 {
            return Err(Error::Capability("exact projections are one-dimensional".into()));
        }
        if !(interval.0 < interval.1) {
            return Err(Error::Config(format!("empty interval {interval:?}")));
        }
        Ok(ExactAnsatz {
            consts,
            source,
            interval,
            inner: GaussRule::legendre(inner),
            outer: GaussRule::legendre(outer),
            fundamental: Fundamental::new(consts),
        })
    }

    fn w(&self, bu: &ScaledBubble, y: f64) -> f64 {
        let d = y - bu.center;
        self.consts.b * (bu.rate / (bu.rate * bu.rate + d * d)).powf(0.5 * self.consts.decay())
    }

    /// `w - v` at `y` for a bubble on `(lo, hi) = Ω_ε`:
    /// `ε ∫_{Ω_ε} H(μy, μz) w^p(z) dz + ∫_{Ω_ε^c} Γ(y - z) w^p(z) dz`, with
    /// `z = c + λ tan θ`.
    fn correction(&self, bu: &ScaledBubble, mu: f64, eps: f64, lo: f64, hi: f64, y: f64) -> Result<f64> {
        let q = self.consts.decay();
        let p = self.consts.critical_exponent();
        let l = bu.rate;
        let pref = self.consts.b.powf(p) * l.powf(1.0 - 0.5 * p * q);
        let power = p * q - 2.0;
        let (ta, tb) = (((lo - bu.center) / l).atan(), ((hi - bu.center) / l).atan());
        let rule = self.inner.mapped(ta, tb);
        let interior = eps
            * rule.sum(|t| {
                let z = bu.center + l * t.tan();
                self.source.regular(&[mu * y], &[mu * z]) * t.cos().powf(power)
            });
        let tol = Tolerance::new(1e-300, 1e-11);
        let a = self.fundamental.a;
        let (ca, cb) = (ta.cos(), tb.cos());
        let right = tanh_sinh(
            |_, da, db| {
                let c = db.sin();
                let gap = (hi - y) + l * da.sin() / (c * cb);
                a * gap.powf(-q) * c.powf(power)
            },
            tb,
            FRAC_PI_2,
            tol,
        )?;
        let left = tanh_sinh(
            |_, da, db| {
                let c = da.sin();
                let gap = (y - lo) + l * db.sin() / (c * ca);
                a * gap.powf(-q) * c.powf(power)
            },
            -FRAC_PI_2,
            ta,
            tol,
        )?;
        Ok(pref * (interior + right.value + left.value))
    }

    fn scaled(&self, xi: &[f64], big_lambda: &[f64], mu: f64) -> Vec<ScaledBubble> {
        xi.iter()
            .zip(big_lambda)
            .map(|(&x, &bl)| ScaledBubble {
                center: x / mu,
                rate: self.consts.scaled_rate(bl),
            })
            .collect()
    }

    /// `J_{±ε}(v̄)` for bubbles at `xi` with rates `big_lambda`.
    pub fn energy(&self, sign: Criticality, xi: &[f64], big_lambda: &[f64], eps: f64) -> Result<f64> {
        if xi.is_empty() || xi.len() != big_lambda.len() {
            return Err(Error::Config("points and rates must be nonempty and match".into()));
        }
        if !(eps > 0.0) {
            return Err(Error::Config("exact energies need eps > 0".into()));
        }
        for &x in xi {
            if !(self.source.boundary_distance(&[x]) > 0.0) {
                return Err(Error::Domain(format!("ξ = {x} is not interior")));
            }
        }
        let q = self.consts.decay();
        let p_star = self.consts.critical_exponent();
        let r = p_star + 1.0 + sign.sign() * eps;
        let mu = eps.powf(1.0 / q);
        let (lo, hi) = (self.interval.0 / mu, self.interval.1 / mu);
        let bubbles = self.scaled(xi, big_lambda, mu);
        let mut order: Vec<usize> = (0..bubbles.len()).collect();
        order.sort_by(|&i, &j| bubbles[i].center.total_cmp(&bubbles[j].center));
        let mut cuts = vec![lo];
        for w in order.windows(2) {
            cuts.push(0.5 * (bubbles[w[0]].center + bubbles[w[1]].center));
        }
        cuts.push(hi);

        let mut samples = Vec::new();
        for (piece, &own) in order.iter().enumerate() {
            let bu = bubbles[own];
            let (a, b) = (cuts[piece], cuts[piece + 1]);
            let ta = ((a - bu.center) / bu.rate).atan();
            let tb = ((b - bu.center) / bu.rate).atan();
            let rule = self.outer.mapped(ta, tb);
            for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
                let c = t.cos();
                samples.push((bu.center + bu.rate * t.tan(), wt * bu.rate / (c * c)));
            }
        }
        let terms = samples
            .par_iter()
            .map(|&(y, wt)| {
                let mut wp = 0.0;
                let mut vbar = 0.0;
                for bu in &bubbles {
                    let w = self.w(bu, y);
                    wp += w.powf(p_star);
                    vbar += w - self.correction(bu, mu, eps, lo, hi, y)?;
                }
                Ok(wt * (0.5 * wp * vbar - vbar.max(0.0).powf(r) / r))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(terms.iter().sum())
    }
}

/// One `ε` of an expansion table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub eps: f64,
    pub energy: f64,
    /// `(J - m C) / ε`.
    pub slope: f64,
    /// First-order Richardson value from this and the previous row.
    pub richardson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub m: usize,
    pub sign: Criticality,
    pub xi: Vec<f64>,
    pub big_lambda: Vec<f64>,
    pub rows: Vec<ExpansionRow>,
    pub extrapolated: f64,
    /// `γ + ω Ψ(ξ, Λ)`.
    pub predicted: f64,
    pub relative_error: f64,
    /// Successive Richardson values approach each other.
    pub monotone: bool,
}

/// Richardson-extrapolated `(J_{±ε}(v̄) - m C)/ε` against `γ + ωΨ(ξ, Λ)`,
/// for a decreasing sequence with ratio 1/2.
pub fn energy_expansion_check(
    exact: &ExactAnsatz,
    sign: Criticality,
    xi: &[f64],
    big_lambda: &[f64],
    eps_list: &[f64],
) -> Result<ExpansionReport> {
    check_halving(eps_list)?;
    let m = xi.len();
    let consts = exact.consts;
    let mut rows: Vec<ExpansionRow> = Vec::new();
    for &eps in eps_list {
        let energy = exact.energy(sign, xi, big_lambda, eps)?;
        let slope = (energy - m as f64 * consts.energy_c) / eps;
        let richardson = rows.last().map(|prev| 2.0 * slope - prev.slope);
        rows.push(ExpansionRow { eps, energy, slope, richardson });
    }
    let rich: Vec<f64> = rows.iter().filter_map(|r| r.richardson).collect();
    let monotone = rich.windows(3).all(|w| (w[2] - w[1]).abs() <= (w[1] - w[0]).abs());
    let extrapolated = *rich.last().expect("at least two eps values");
    let predicted = predicted_slope(exact, sign, xi, big_lambda)?.0;
    Ok(ExpansionReport {
        m,
        sign,
        xi: xi.to_vec(),
        big_lambda: big_lambda.to_vec(),
        rows,
        extrapolated,
        predicted,
        relative_error: (extrapolated - predicted).abs() / predicted.abs(),
        monotone,
    })
}

fn check_halving(eps_list: &[f64]) -> Result<()> {
    if eps_list.len() < 2 {
        return Err(Error::Config("an ε-sequence needs at least two values".into()));
    }
    for w in eps_list.windows(2) {
        if (w[1] / w[0] - 0.5).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "ε-sequence must halve at each step, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// `γ + ωΨ` and `ω∇Ψ` in the layout `(ξ_1 … ξ_m, Λ_1 … Λ_m)`.
fn predicted_slope(exact: &ExactAnsatz, sign: Criticality, xi: &[f64], big_lambda: &[f64]) -> Result<(f64, Vec<f64>)> {
    let consts = exact.consts;
    let psi = ReducedEnergy::new(exact.source, xi.len(), sign);
    let pts: Vec<Vec<f64>> = xi.iter().map(|&x| vec![x]).collect();
    let (value, grad) = psi.evaluate(&flatten(&pts, big_lambda))?;
    Ok((
        consts.gamma_for(xi.len(), sign) + consts.omega * value,
        grad.iter().map(|g| consts.omega * g).collect(),
    ))
}

/// One component of the reduced-gradient comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientComponent {
    pub index: usize,
    /// Richardson-extrapolated central difference of `J` divided by `ε`.
    pub measured: f64,
    /// `ω ∂Ψ`.
    pub predicted: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub eps: Vec<f64>,
    pub step: f64,
    pub components: Vec<GradientComponent>,
    pub max_relative_error: f64,
}

/// Central differences of `J_{±ε}(v̄)` in `(ξ, Λ)` divided by `ε`, extrapolated
/// over `eps_list`, against `ω ∇Ψ`. The `Λ` step is relative.
pub fn gradient_expansion_check(
    exact: &ExactAnsatz,
    sign: Criticality,
    xi: &[f64],
    big_lambda: &[f64],
    eps_list: &[f64],
    step: f64,
) -> Result<GradientReport> {
    check_halving(eps_list)?;
    let m = xi.len();
    let base = flatten(&xi.iter().map(|&x| vec![x]).collect::<Vec<_>>(), big_lambda);
    let (_, predicted) = predicted_slope(exact, sign, xi, big_lambda)?;
    let mut components = Vec::new();
    for (index, &pred) in predicted.iter().enumerate() {
        let h = if index < m { step } else { step * base[index] };
        let mut quotients = Vec::new();
        for &eps in eps_list {
            let eval = |shift: f64| {
                let mut z = base.clone();
                z[index] += shift;
                exact.energy(sign, &z[..m], &z[m..], eps)
            };
            quotients.push((eval(h)? - eval(-h)?) / (2.0 * h * eps));
        }
        let measured = quotients
            .windows(2)
            .map(|w| 2.0 * w[1] - w[0])
            .last()
            .expect("two eps values");
        components.push(GradientComponent {
            index,
            measured,
            predicted: pred,
            relative_error: (measured - pred).abs() / pred.abs(),
        });
    }
    let max_relative_error = components.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    Ok(GradientReport {
        eps: eps_list.to_vec(),
        step,
        components,
        max_relative_error,
    })
}

/// `u_ε(x) ≈ Σ_i b ((β Λ_i² ε)^{1/(n-2s)} / ((β Λ_i² ε)^{2/(n-2s)} + |x - ξ_i|²))^{(n-2s)/2}`.
pub fn asymptotic_profile(cfg: &AnsatzConfig, consts: &ConstantSet, x: &[f64]) -> f64 {
    let q = consts.decay();
    let eps = cfg.params.eps;
    cfg.xi
        .iter()
        .zip(&cfg.big_lambda)
        .map(|(xi, &bl)| {
            let g = consts.beta * bl * bl * eps;
            let d2: f64 = x.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum();
            consts.b * (g.powf(1.0 / q) / (g.powf(2.0 / q) + d2)).powf(0.5 * q)
        })
        .sum()
}

/// `u(x) = v(x/μ) / κ` at the physical points `x_k = μ y_k`.
pub fn back_transform(cfg: &AnsatzConfig, nodes: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mu = cfg.dilation();
    let kappa = cfg.params.amplitude();
    (nodes.iter().map(|y| mu * y).collect(), v.iter().map(|x| x / kappa).collect())
}

/// Near-kernel of the linearized whole-line operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub nodes: usize,
    /// Lowest eigenvalues `σ` of `(A - p* W) x = σ W x`, `W = w^{p*-1}`, by real part.
    pub spectrum: Vec<f64>,
    pub max_imaginary: f64,
    /// Eigenvalues with `|σ|` below `cluster_bound`.
    pub near_zero: usize,
    pub cluster_bound: f64,
    /// Smallest `|σ|` outside the cluster over the largest inside.
    pub gap_factor: f64,
    pub negative: usize,
    /// Principal angles between the near-kernel and the span of the kernels.
    pub angles: Vec<f64>,
    pub passed: bool,
}

/// Weighted eigenproblem of `(-Δ)^s - p* w^{p*-1}` on a whole-line graded
/// grid for the unit bubble, and the alignment of its near-kernel with the
/// dilation and translation kernels.
pub fn nondegeneracy_check(params: &FracParams, consts: &ConstantSet, half_width: f64, opts: &MeshOptions) -> Result<NondegeneracyReport> {
    if params.n != 1 {
        return Err(Error::Capability("the whole-line check is one-dimensional".into()));
    }
    let bubble = Bubble::<1>::new(consts, 1.0, [0.0]);
    let grid = LineGrid::new(opts.build(-half_width, half_width, &[bubble])?, false)?;
    let op = DiscreteOperator::whole_line(params, grid.clone())?;
    let p = consts.critical_exponent();
    let w = bubble_field(&grid, &bubble);
    let weight: Vec<f64> = w.iter().map(|v| v.powf(p - 1.0)).collect();
    let a = op.dense_matrix();
    let nn = grid.len();
    let scaled = DMatrix::from_fn(nn, nn, |r, c| a[(r, c)] / weight[r] - if r == c { p } else { 0.0 });
    let eig = scaled.clone().complex_eigenvalues();
    let mut values: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    values.sort_by(|x, y| x.0.total_cmp(&y.0));
    let max_imaginary = values.iter().take(12).map(|v| v.1.abs()).fold(0.0, f64::max);
    let spectrum: Vec<f64> = values.iter().take(12).map(|v| v.0).collect();
    let mut by_size: Vec<f64> = values.iter().map(|v| v.0.abs()).collect();
    by_size.sort_by(f64::total_cmp);
    let cluster_bound = 0.1;
    let near_zero = by_size.iter().filter(|v| **v < cluster_bound).count();
    let k = params.n + 1;
    let gap_factor = by_size[k] / by_size[k - 1].max(f64::MIN_POSITIVE);
    let negative = values.iter().filter(|v| v.0 < -cluster_bound).count();

    // Block inverse iteration with shift 0 in the W-weighted inner product.
    let q = grid.weights();
    let ip = |x: &DVector<f64>, y: &DVector<f64>| (0..nn).map(|i| q[i] * weight[i] * x[i] * y[i]).sum::<f64>();
    let orthonormalize = |cols: &mut Vec<DVector<f64>>| {
        for i in 0..cols.len() {
            for j in 0..i {
                let c = ip(&cols[i], &cols[j]);
                let cj = cols[j].clone();
                cols[i] -= cj * c;
            }
            let nrm = ip(&cols[i], &cols[i]).sqrt();
            cols[i] /= nrm;
        }
    };
    let lu = scaled.lu();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut block: Vec<DVector<f64>> = (0..k)
        .map(|_| DVector::from_fn(nn, |i, _| w[i] * rng.random_range(-1.0..1.0)))
        .collect();
    orthonormalize(&mut block);
    for _ in 0..8 {
        block = block
            .iter()
            .map(|x| lu.solve(x).ok_or_else(|| Error::Singular("shifted operator is singular".into())))
            .collect::<Result<Vec<_>>>()?;
        orthonormalize(&mut block);
    }
    let mut kernels = vec![
        DVector::from_fn(nn, |i, _| bubble.dilation_kernel(&[grid.nodes[i]])),
        DVector::from_fn(nn, |i, _| bubble.translation_kernel(0, &[grid.nodes[i]])),
    ];
    orthonormalize(&mut kernels);
    let overlap = DMatrix::from_fn(k, k, |i, j| ip(&block[i], &kernels[j]));
    let angles: Vec<f64> = overlap
        .svd(false, false)
        .singular_values
        .iter()
        .map(|c| c.min(1.0).acos())
        .collect();
    let passed = near_zero == k && gap_factor >= 10.0 && angles.iter().all(|a| *a < 0.05);
    Ok(NondegeneracyReport {
        nodes: nn,
        spectrum,
        max_imaginary,
        near_zero,
        cluster_bound,
        gap_factor,
        negative,
        angles,
        passed,
    })
}

/// Empirical constants of the linear theory at one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriRow {
    pub eps: f64,
    /// Largest `‖φ‖_∞` over the trials with `‖h‖_α = 1`.
    pub phi_sup: f64,
    pub max_multiplier: f64,
    /// Largest `‖φ‖_{α-2s}`.
    pub phi_weighted: f64,
    /// Deviation from exact scaling when `h` is multiplied by 10.
    pub linearity_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub rows: Vec<AprioriRow>,
    /// Largest ratio of the constants between consecutive `ε`.
    pub max_ratio: f64,
    pub bounded: bool,
    pub convolution: Vec<ConvolutionBound>,
}

/// Random right-hand sides `h = weight · g` with `sup|g| = 1`, so that `‖h‖_α = 1`.
fn random_rhs(system: &ReductionSystem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(0.2..3.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let l = system.bubbles.iter().map(|b| b.lambda).fold(f64::INFINITY, f64::min);
    let g: Vec<f64> = system
        .nodes
        .iter()
        .map(|&x| {
            let t = (x / l).atan();
            terms.iter().map(|(a, f, ph)| a * (f * t + ph).sin()).sum()
        })
        .collect();
    let unknowns = system.op.unknowns();
    let sup = unknowns.iter().map(|&k| g[k].abs()).fold(0.0, f64::max);
    let mut h = vec![0.0; g.len()];
    for &k in unknowns {
        h[k] = system.norm.weight(system.nodes[k]) * g[k] / sup;
    }
    h
}

/// Bounds of the projected linear solver over a sequence of systems (one per
/// `ε`) and the convolution estimate by quadrature.
pub fn a_priori_bound_probe(systems: &[(f64, &ReductionSystem)], trials: usize, seed: u64, consts: &ConstantSet) -> Result<AprioriReport> {
    let mut rows = Vec::new();
    for (eps, system) in systems {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut row = AprioriRow {
            eps: *eps,
            phi_sup: 0.0,
            max_multiplier: 0.0,
            phi_weighted: 0.0,
            linearity_error: 0.0,
        };
        for _ in 0..trials {
            let h = random_rhs(system, &mut rng);
            let sol = system.solve_projected_linear(&h)?;
            let scaled = system.solve_projected_linear(&h.iter().map(|v| 10.0 * v).collect::<Vec<_>>())?;
            let dev = sol
                .phi
                .iter()
                .zip(&scaled.phi)
                .map(|(a, b)| (10.0 * a - b).abs())
                .fold(0.0, f64::max)
                / (10.0 * sol.sup_phi()).max(f64::MIN_POSITIVE);
            row.linearity_error = row.linearity_error.max(dev);
            row.phi_sup = row.phi_sup.max(sol.sup_phi());
            row.max_multiplier = row.max_multiplier.max(sol.max_multiplier());
            row.phi_weighted = row.phi_weighted.max(sol.phi_norm);
        }
        rows.push(row);
    }
    let ratio = |a: f64, b: f64| if a > b { a / b } else { b / a };
    let max_ratio = rows
        .windows(2)
        .map(|w| ratio(w[0].phi_sup, w[1].phi_sup).max(ratio(w[0].max_multiplier, w[1].max_multiplier)))
        .fold(1.0, f64::max);
    let convolution = [0.8, 1.0]
        .iter()
        .map(|&alpha| convolution_bound(consts, alpha, trials.max(3), seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(AprioriReport {
        rows,
        max_ratio,
        bounded: max_ratio <= 2.0,
        convolution,
    })
}

/// `sup (1+|x|)^{α-2s} |Γ * h|` for `|h| ≤ (1+|x|)^{-α}`: the extremal
/// `h = (1+|x|)^{-α}` fixes the constant, random signed `h` must stay below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionBound {
    pub alpha: f64,
    pub fitted: f64,
    pub random_max: f64,
    pub passed: bool,
}

pub fn convolution_bound(consts: &ConstantSet, alpha: f64, trials: usize, seed: u64) -> Result<ConvolutionBound> {
    if consts.n != 1 {
        return Err(Error::Capability("the convolution probe is one-dimensional".into()));
    }
    let q = consts.decay();
    let s = consts.s;
    let support = 200.0;
    let gamma = Fundamental::new(consts);
    let points: Vec<f64> = (0..40).map(|k| 10f64.powf(-1.0 + 4.0 * k as f64 / 39.0) - 0.1).collect();
    // Integrates K(t) h(x + dir t) over t in (0, reach), split at the kinks of h.
    let side = |h: &(dyn Fn(f64) -> f64 + Sync), x: f64, dir: f64, kinks: &[f64]| -> Result<f64> {
        let reach = support - dir * x;
        let mut cuts: Vec<f64> = kinks
            .iter()
            .map(|k| dir * (k - x))
            .filter(|t| *t > 0.0 && *t < reach)
            .collect();
        let chunks = (reach / 8.0).ceil() as usize;
        cuts.extend((0..=chunks).map(|k| reach * k as f64 / chunks as f64));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let tol = Tolerance::new(1e-14, 1e-9);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let t0 = w[0];
            total += tanh_sinh(|_, da, _| gamma.a * (t0 + da).powf(-q) * h(x + dir * (t0 + da)), t0, w[1], tol)?.value;
        }
        Ok(total)
    };
    let weighted_sup = |h: &(dyn Fn(f64) -> f64 + Sync), kinks: &[f64]| -> Result<f64> {
        let vals = points
            .par_iter()
            .map(|&x| {
                let conv = side(h, x, -1.0, kinks)? + side(h, x, 1.0, kinks)?;
                Ok((1.0 + x.abs()).powf(alpha - 2.0 * s) * conv.abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    };
    let fitted = weighted_sup(&|y: f64| (1.0 + y.abs()).powf(-alpha), &[0.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_max = 0.0f64;
    for _ in 0..trials {
        let cut = rng.random_range(5.0..support);
        let (f, ph) = (rng.random_range(0.1..2.0), rng.random_range(0.0..std::f64::consts::TAU));
        let h = move |y: f64| {
            if y.abs() > cut {
                0.0
            } else {
                (1.0 + y.abs()).powf(-alpha) * (f * y + ph).sin()
            }
        };
        random_max = random_max.max(weighted_sup(&h, &[-cut, 0.0, cut])?);
    }
    Ok(ConvolutionBound {
        alpha,
        fitted,
        random_max,
        passed: random_max <= fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::resolve_constants;
    use crate::green::{BallRestricted, IntervalSpectral};

    fn consts() -> ConstantSet {
        resolve_constants(&FracParams::critical(1, 0.3).unwrap(), 1e-10).unwrap()
    }

    fn unit_interval() -> DomainSpec {
        DomainSpec::Interval { a: -1.0, b: 1.0 }
    }

    fn config(sign: Criticality, eps: f64, xi: &[f64], big_lambda: &[f64]) -> AnsatzConfig {
        AnsatzConfig::new(
            FracParams::new(1, 0.3, sign, eps).unwrap(),
            unit_interval(),
            xi.iter().map(|&x| vec![x]).collect(),
            big_lambda.to_vec(),
        )
        .unwrap()
    }

    fn critical_rate(c: &ConstantSet) -> f64 {
        BallRestricted::new(c, vec![0.0], 1.0).robin(&[0.0]).powf(-0.5)
    }

    #[test]
    fn config_scales_points_and_rates() {
        let c = consts();
        let cfg = config(Criticality::Subcritical, 0.01, &[0.2, -0.5], &[1.0, 2.0]);
        let mu = 0.01f64.powf(2.5);
        assert!((cfg.dilation() - mu).abs() < 1e-18);
        assert!((cfg.scaled_points()[0][0] - 0.2 / mu).abs() < 1e-6);
        let rates = cfg.rates(&c);
        assert!((rates[1] - (c.beta * 4.0).powf(2.5)).abs() < 1e-15);
        assert!((c.rate_from_scaled(rates[0]) - 1.0).abs() < 1e-12);
        cfg.check_separation(0.1).unwrap();
        let err = cfg.check_separation(0.6).unwrap_err().to_string();
        assert!(err.contains("∂Ω_ε"), "{err}");
        let close = config(Criticality::Subcritical, 0.01, &[0.0, 0.05], &[1.0, 1.0]);
        assert!(close.check_separation(0.1).unwrap_err().to_string().contains("separation"));
        assert!(AnsatzConfig::new(
            FracParams::new(1, 0.3, Criticality::Subcritical, 0.01).unwrap(),
            unit_interval(),
            vec![vec![1.2]],
            vec![1.0]
        )
        .is_err());
    }

    #[test]
    fn spectral_machine_reports_its_resolution_need() {
        let c = consts();
        let cfg = config(Criticality::Subcritical, 0.01, &[0.0], &[1.0]);
        let err = machine_operator(&cfg, &c, OperatorKind::Spectral, &MeshOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Capability(_)), "{err}");
    }

    #[test]
    fn whole_line_projection_is_the_bubble() {
        let c = consts();
        let cfg = config(Criticality::Subcritical, 0.01, &[0.0], &[1.0]);
        let op = machine_operator(&cfg, &c, OperatorKind::WholeSpace, &MeshOptions::default()).unwrap();
        let bu = cfg.bubbles(&c).unwrap()[0];
        let v = project_bubble(&op, &c, &bu).unwrap();
        let w = bubble_field(op.grid().as_line().unwrap(), &bu);
        let peak = w.iter().copied().fold(0.0, f64::max);
        let err = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(f64::NAN, f64::max);
        assert!(err < 2e-3 * peak, "{err}");
    }

    #[test]
    fn projection_is_below_the_bubble_with_the_gap_largest_at_the_boundary() {
        let c = consts();
        let cfg = config(Criticality::Subcritical, 0.02, &[0.1], &[1.0]);
        let op = machine_operator(&cfg, &c, OperatorKind::Restricted, &MeshOptions::default()).unwrap();
        let grid = op.grid().as_line().unwrap().clone();
        let bu = cfg.bubbles(&c).unwrap()[0];
        let v = project_bubble(&op, &c, &bu).unwrap();
        let w = bubble_field(&grid, &bu);
        let gap: Vec<f64> = v.iter().zip(&w).map(|(a, b)| b - a).collect();
        let peak = w.iter().copied().fold(0.0, f64::max);
        assert!(gap.iter().all(|g| *g > -1e-3 * peak));
        assert!(v.iter().all(|x| *x >= 0.0));
        assert_eq!((v[0], v[grid.len() - 1]), (0.0, 0.0));
        let argmax = (0..gap.len()).max_by(|&i, &j| gap[i].total_cmp(&gap[j])).unwrap();
        let half = 0.5 * (grid.nodes[grid.len() - 1] - grid.nodes[0]);
        let edge = (grid.nodes[argmax] - grid.nodes[0]).min(grid.nodes[grid.len() - 1] - grid.nodes[argmax]);
        assert!(edge < 0.05 * half, "gap peaks at {}", grid.nodes[argmax]);
    }

    #[test]
    fn projection_far_from_the_center_tracks_the_green_function() {
        let c = consts();
        let ball = BallRestricted::new(&c, vec![0.0], 1.0);
        let x = 0.5;
        let errs: Vec<f64> = [0.04, 0.01]
            .iter()
            .map(|&eps| {
                let cfg = config(Criticality::Subcritical, eps, &[0.0], &[1.0]);
                let op = machine_operator(&cfg, &c, OperatorKind::Restricted, &MeshOptions::default()).unwrap();
                let bu = cfg.bubbles(&c).unwrap()[0];
                let v = project_bubble(&op, &c, &bu).unwrap();
                let grid = op.grid().as_line().unwrap();
                let measured = grid.interpolate(&v, x / cfg.dilation()) / eps;
                let predicted = c.alpha * bu.lambda.powf(0.5 * c.decay()) * ball.green(&[x], &[0.0]);
                (measured / predicted - 1.0).abs()
            })
            .collect();
        assert!(errs.iter().all(|e| *e < 0.02), "{errs:?}");
    }

    #[test]
    fn ansatz_superposes_and_peaks_at_the_centers() {
        let c = consts();
        let cfg = config(Criticality::Subcritical, 0.02, &[-0.4, 0.4], &[1.2, 0.9]);
        let op = machine_operator(&cfg, &c, OperatorKind::Restricted, &MeshOptions::default()).unwrap();
        let grid = op.grid().as_line().unwrap().clone();
        let bubbles = cfg.bubbles(&c).unwrap();
        let v: Vec<Vec<f64>> = bubbles.iter().map(|b| project_bubble(&op, &c, b).unwrap()).collect();
        let vbar = build_ansatz(&v).unwrap();
        assert_eq!(build_ansatz(&v[..1]).unwrap(), v[0]);
        let sum = op.solve(&grid.nodes.iter().map(|&x| bubbles.iter().map(|b| b.value(&[x]).powi(4)).sum()).collect::<Vec<f64>>()).unwrap();
        let scale = vbar.iter().copied().fold(0.0, f64::max);
        assert!(vbar.iter().zip(&sum).all(|(a, b)| (a - b).abs() < 1e-10 * scale));
        for b in &bubbles {
            let (lo, hi) = (b.xi[0] - 0.5 * grid.max_spacing().min(1e3 * b.lambda), b.xi[0]);
            let window: Vec<usize> = (0..grid.len()).filter(|&k| (grid.nodes[k] - b.xi[0]).abs() < 50.0 * b.lambda).collect();
            let peak = window.iter().copied().max_by(|&i, &j| vbar[i].total_cmp(&vbar[j])).unwrap();
            let cell = grid.nodes[grid.nearest(b.xi[0]) + 1] - grid.nodes[grid.nearest(b.xi[0]) - 1];
            assert!((grid.nodes[peak] - b.xi[0]).abs() <= cell, "{lo} {hi}");
        }
        assert!(build_ansatz(&[vec![0.0; 3], vec![0.0; 4]]).is_err());
    }

    #[test]
    fn weighted_norm_examples() {
        let wn = WeightedNorm::new(0.8, vec![0.0]).unwrap();
        let nodes: Vec<f64> = (0..200).map(|k| -50.0 + k as f64 * 0.5).collect();
        let h: Vec<f64> = nodes.iter().map(|&x| (1.0 + x.abs()).powf(-0.8)).collect();
        assert!((weighted_norm(&nodes, &h, &wn) - 1.0).abs() < 1e-14);
        assert_eq!(weighted_norm(&nodes, &vec![0.0; 200], &wn), 0.0);
        let smaller: Vec<f64> = h.iter().enumerate().map(|(k, v)| v * (k as f64 / 200.0).sin()).collect();
        assert!(wn.norm(&nodes, &smaller) <= wn.norm(&nodes, &h));
        assert!(WeightedNorm::linear_theory(0.5, vec![0.0], 0.3).is_err());
        assert!(WeightedNorm::linear_theory(0.8, vec![0.0], 0.3).is_ok());
    }

    #[test]
    fn error_terms_vanish_where_they_should_and_scale_quadratically() {
        let vbar = vec![0.5, 1.0, 2.0, 0.0];
        let w = vec![vbar.clone()];
        let (r, n) = error_terms(4.0, 4.0, &w, &vbar, &[0.0; 4]);
        assert!(r.iter().all(|v| v.abs() < 1e-15) && n.iter().all(|v| *v == 0.0));
        let base = [0.3, -0.2, 0.1, 0.0];
        let size = |t: f64| {
            let phi: Vec<f64> = base.iter().map(|b| b * t).collect();
            nonlinear_term(4.0 - 0.01, &vbar[..3], &phi[..3]).iter().fold(0.0, |a: f64, v| a.max(v.abs()))
        };
        let slope = (size(1e-2) / size(1e-3)).log10();
        assert!((slope - 2.0).abs() < 0.05, "{slope}");
    }

    fn small_system(c: &ConstantSet) -> ReductionSystem {
        let cfg = config(Criticality::Subcritical, 0.04, &[0.1], &[1.2]);
        ReductionSystem::for_ansatz(&cfg, c, &MeshOptions::default().with_nodes(400), 0.8).unwrap()
    }

    #[test]
    fn projected_solver_matches_the_dense_bordered_oracle() {
        let c = consts();
        let sys = small_system(&c);
        let nodes = sys.nodes().to_vec();
        let l = sys.bubbles[0].lambda;
        let h: Vec<f64> = nodes.iter().map(|&x| sys.norm.weight(x) * ((x - 0.3) / l).atan().sin()).collect();
        let fast = sys.solve_projected_linear(&h).unwrap();
        let dense = sys.solve_projected_dense(&h).unwrap();
        let scale = fast.sup_phi();
        let diff = fast.phi.iter().zip(&dense.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8 * scale, "{diff}");
        for (a, b) in fast.c.iter().flatten().zip(dense.c.iter().flatten()) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
        assert!(fast.orthogonality < 1e-10);
        let twice = sys.solve_projected_linear(&h.iter().map(|v| 2.0 * v).collect::<Vec<_>>()).unwrap();
        assert!(twice.phi.iter().zip(&fast.phi).all(|(a, b)| (a - 2.0 * b).abs() < 1e-12 * scale));
    }

    #[test]
    fn projected_solver_trivial_cases() {
        let c = consts();
        let sys = small_system(&c);
        let zero = sys.solve_projected_linear(&vec![0.0; sys.nodes().len()]).unwrap();
        assert!(zero.sup_phi() == 0.0 && zero.max_multiplier() == 0.0);
        let g = sys.generator(0, 0);
        let sol = sys.solve_projected_linear(&g).unwrap();
        assert!((sol.c[0][0] + 1.0).abs() < 1e-9, "{:?}", sol.c);
        assert!(sol.c[0][1].abs() < 1e-9);
        let gsup = g.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        let wsup = sys.w[0].iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        assert!(sol.sup_phi() < 1e-9 * wsup.max(gsup), "{}", sol.sup_phi());
        assert!(sys.solve_projected_linear(&[1.0; 3]).is_err());
    }

    #[test]
    fn zero_residual_is_a_fixed_point() {
        let c = consts();
        let sys = small_system(&c);
        let sol = sys.iterate(&vec![0.0; sys.nodes().len()], 50, 1e-10).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.solution.sup_phi() == 0.0 && sol.solution.max_multiplier() == 0.0);
    }

    #[test]
    fn fixed_point_contracts_and_the_correction_is_quadratic() {
        let c = consts();
        let mut tilde = Vec::new();
        for eps in [0.04, 0.02, 0.01] {
            let cfg = config(Criticality::Subcritical, eps, &[0.1], &[1.2]);
            let sys = ReductionSystem::for_ansatz(&cfg, &c, &MeshOptions::default(), 0.8).unwrap();
            let sol = sys.solve_nonlinear(50, 1e-10).unwrap();
            assert!(sol.contraction < 0.5, "{}", sol.contraction);
            assert!(sol.solution.orthogonality < 1e-10);
            tilde.push(sol.tilde_norm);
        }
        let slope = (tilde[0] / tilde[2]).ln() / 4f64.ln();
        assert!(slope > 1.7, "{tilde:?}");
    }

    #[test]
    fn grid_energy_identities() {
        let c = consts();
        let params = FracParams::critical(1, 0.3).unwrap();
        let bu = Bubble::<1>::new(&c, 1.0, [0.0]);
        let opts = MeshOptions { core: 0.02, ..MeshOptions::default() };
        let grid = LineGrid::new(opts.build(-1e5, 1e5, &[bu]).unwrap(), false).unwrap();
        let op = DiscreteOperator::whole_line(&params, grid.clone()).unwrap();
        let w = bubble_field(&grid, &bu);
        assert_eq!(energy(&op, 5.0, &vec![0.0; w.len()]).unwrap(), 0.0);
        let j = energy(&op, 5.0, &w).unwrap();
        assert!((j / c.energy_c - 1.0).abs() < 5e-3, "{j} vs {}", c.energy_c);
        let scaled = |t: f64| energy(&op, 5.0, &w.iter().map(|v| t * v).collect::<Vec<_>>()).unwrap();
        assert!(scaled(0.95) < j && scaled(1.05) < j);
        assert!(scaled(0.2) < scaled(0.4));

        let d = unit_interval();
        let spectral = build_operator(&d, &params, Grid::uniform(&d, 64).unwrap(), OperatorKind::Spectral).unwrap();
        let g = spectral.grid().as_line().unwrap().clone();
        let v: Vec<f64> = g.nodes.iter().map(|x| (1.0 - x * x) * (1.0 + 0.3 * x)).collect();
        let basis_energy = {
            let modes = spectral.laplacian_eigenvalues().unwrap();
            let h = g.nodes[1] - g.nodes[0];
            let interior = spectral.gather(&v);
            let coef: Vec<f64> = (1..=modes.len())
                .map(|k| {
                    h * interior
                        .iter()
                        .enumerate()
                        .map(|(i, u)| u * (2f64).sqrt() / 2f64.sqrt() * (std::f64::consts::PI * k as f64 * (i + 1) as f64 / 64.0).sin())
                        .sum::<f64>()
                })
                .collect();
            0.5 * modes.iter().zip(&coef).map(|(l, a)| l.powf(0.3) * a * a).sum::<f64>()
        };
        let pot: f64 = g.weights().iter().zip(&v).map(|(q, x)| q * x.abs().powf(5.0)).sum::<f64>() / 5.0;
        let boundary_form = energy(&spectral, 5.0, &v).unwrap();
        assert!((boundary_form - (basis_energy - pot)).abs() < 1e-12 * basis_energy, "{boundary_form} {basis_energy} {pot}");
    }

    #[test]
    fn energy_expansion_matches_the_reduced_energy() {
        let c = consts();
        let ball = BallRestricted::new(&c, vec![0.0], 1.0);
        let exact = ExactAnsatz::new(&c, &ball, (-1.0, 1.0), 4000, 400).unwrap();
        let eps = [0.04, 0.02, 0.01, 0.005];
        let lam = critical_rate(&c);
        let one = energy_expansion_check(&exact, Criticality::Subcritical, &[0.0], &[lam], &eps).unwrap();
        assert!(one.relative_error < 0.05 && one.monotone, "{one:?}");

        let pair = energy_expansion_check(&exact, Criticality::Subcritical, &[-0.4, 0.4], &[1.2, 1.2], &eps[..3]).unwrap();
        let left = energy_expansion_check(&exact, Criticality::Subcritical, &[-0.4], &[1.2], &eps[..3]).unwrap();
        let right = energy_expansion_check(&exact, Criticality::Subcritical, &[0.4], &[1.2], &eps[..3]).unwrap();
        let interaction = pair.extrapolated - left.extrapolated - right.extrapolated;
        let predicted = -c.omega * ball.green(&[-0.4], &[0.4]) * 1.44;
        assert!(interaction < 0.0 && (interaction / predicted - 1.0).abs() < 0.05, "{interaction} {predicted}");

        let doubled = predicted_slope(&exact, Criticality::Supercritical, &[0.2], &[2.0]).unwrap().0
            - predicted_slope(&exact, Criticality::Supercritical, &[0.2], &[1.0]).unwrap().0;
        let r = ball.robin(&[0.2]);
        assert!((doubled - c.omega * (1.5 * r + 2f64.ln())).abs() < 1e-14);
        assert!(energy_expansion_check(&exact, Criticality::Subcritical, &[0.0], &[1.0], &[0.04, 0.03]).is_err());
    }

    #[test]
    fn energy_expansion_with_the_spectral_regular_part() {
        let c = consts();
        let source = IntervalSpectral::new(&c, -1.0, 1.0).unwrap();
        let exact = ExactAnsatz::new(&c, &source, (-1.0, 1.0), 1500, 200).unwrap();
        let rep = energy_expansion_check(&exact, Criticality::Supercritical, &[0.2], &[1.0], &[0.02, 0.01, 0.005]).unwrap();
        assert!(rep.relative_error < 0.05, "{rep:?}");
    }

    #[test]
    fn energy_gradient_matches_the_reduced_gradient() {
        let c = consts();
        let ball = BallRestricted::new(&c, vec![0.0], 1.0);
        let exact = ExactAnsatz::new(&c, &ball, (-1.0, 1.0), 4000, 400).unwrap();
        let rep = gradient_expansion_check(&exact, Criticality::Subcritical, &[0.3], &[1.0], &[0.02, 0.01], 1e-2).unwrap();
        assert!(rep.max_relative_error < 0.1, "{rep:?}");
    }

    #[test]
    fn profile_scaling_and_back_transform() {
        let c = consts();
        let cfg = config(Criticality::Subcritical, 0.01, &[0.0], &[1.0]);
        let lam = cfg.rates(&c)[0];
        let peak = asymptotic_profile(&cfg, &c, &[0.0]);
        let expected = c.b * lam.powf(-0.5 * c.decay()) * 0.01f64.powf(-0.5);
        assert!((peak / expected - 1.0).abs() < 1e-12);
        let far = asymptotic_profile(&cfg, &c, &[0.9]);
        let tail = c.b * (c.beta * 0.01).sqrt() / 0.9f64.powf(c.decay());
        assert!((far / tail - 1.0).abs() < 1e-3 && far < 1e-3 * peak);

        let mut errors = Vec::new();
        for eps in [0.04, 0.02, 0.01] {
            let cfg = config(Criticality::Subcritical, eps, &[0.0], &[critical_rate(&c)]);
            let sys = ReductionSystem::for_ansatz(&cfg, &c, &MeshOptions::default(), 0.8).unwrap();
            let sol = sys.solve_nonlinear(50, 1e-10).unwrap();
            let v: Vec<f64> = sys.vbar.iter().zip(&sol.solution.phi).map(|(a, b)| a + b).collect();
            let (x, u) = back_transform(&cfg, sys.nodes(), &v);
            assert!(u[1..u.len() - 1].iter().all(|x| *x > 0.0));
            assert_eq!((u[0], u[u.len() - 1]), (0.0, 0.0));
            let top = u.iter().copied().fold(0.0, f64::max);
            let diff = x
                .iter()
                .zip(&u)
                .map(|(xk, uk)| (uk - asymptotic_profile(&cfg, &c, &[*xk])).abs())
                .fold(0.0, f64::max);
            errors.push(diff / top);
        }
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    }

    #[test]
    fn whole_line_linearization_is_nondegenerate() {
        let c = consts();
        let params = FracParams::critical(1, 0.3).unwrap();
        let rep = nondegeneracy_check(&params, &c, 1e4, &MeshOptions::default()).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.negative, 1);
        assert!((rep.spectrum[0] + 3.0).abs() < 0.05);
    }

    #[test]
    fn a_priori_constants_stay_bounded() {
        let c = consts();
        let systems: Vec<(f64, ReductionSystem)> = [0.04, 0.02]
            .iter()
            .map(|&eps| {
                let cfg = config(Criticality::Subcritical, eps, &[0.1], &[1.2]);
                (eps, ReductionSystem::for_ansatz(&cfg, &c, &MeshOptions::default(), 0.8).unwrap())
            })
            .collect();
        let refs: Vec<(f64, &ReductionSystem)> = systems.iter().map(|(e, s)| (*e, s)).collect();
        let rep = a_priori_bound_probe(&refs, 3, 11, &c).unwrap();
        assert!(rep.bounded, "{rep:?}");
        assert!(rep.rows.iter().all(|r| r.linearity_error < 1e-10));
        assert!(rep.convolution.iter().all(|b| b.passed && b.fitted.is_finite()));
    }
}
