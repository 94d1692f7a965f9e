//! Reduced energy `Ψ(ξ, Λ)` of multi-bubble configurations, its critical
//! points and the two-bubble min-max level.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::ConstantSet;
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::green::GreenSource;
use crate::kernel::KernelK;
use crate::operators::OperatorKind;
use crate::params::Criticality;

/// Admissible configurations keep points `δ` apart and away from the
/// boundary, and rates inside `(δ, 1/δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub delta: f64,
}

impl Constraints {
    /// `δ = 0.1 · diam(Ω)`.
    pub fn for_domain(domain: &DomainSpec) -> Self {
        Constraints { delta: 0.1 * domain.diameter() }
    }

    pub fn check(&self, source: &dyn GreenSource, xi: &[Vec<f64>], lambda: &[f64]) -> Result<()> {
        let d = self.delta;
        for (i, x) in xi.iter().enumerate() {
            let dist = source.boundary_distance(x);
            if dist < d {
                return Err(Error::Domain(format!(
                    "dist(ξ_{}, ∂Ω) = {dist} is below δ = {d}",
                    i + 1
                )));
            }
            for (j, y) in xi.iter().enumerate().skip(i + 1) {
                let sep = distance(x, y);
                if sep < d {
                    return Err(Error::Domain(format!(
                        "separation |ξ_{} - ξ_{}| = {sep} is below δ = {d}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        for (i, &l) in lambda.iter().enumerate() {
            if !(l > d && l < 1.0 / d) {
                return Err(Error::Domain(format!(
                    "Λ_{} = {l} lies outside ({d}, {})",
                    i + 1,
                    1.0 / d
                )));
            }
        }
        Ok(())
    }
}

/// A configuration with its energy and gradient. The gradient lists the
/// `ξ` components point by point, followed by the `Λ` components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiPoint {
    pub xi: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationParams {
    /// Cutoff `M` of the Green function.
    pub m_cut: f64,
    /// Boundary margin `ρ`.
    pub rho: f64,
    /// Level margin `ρ₀` of the interaction function.
    pub rho0: f64,
    /// Dilation window `I = (σ₀, 1/σ₀)`.
    pub sigma0: f64,
}

impl TruncationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("M", self.m_cut), ("ρ", self.rho), ("ρ₀", self.rho0), ("σ₀", self.sigma0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("truncation parameter {name} = {v} must be positive")));
            }
        }
        if self.sigma0 >= 1.0 {
            return Err(Error::Config(format!("σ₀ = {} must be below 1", self.sigma0)));
        }
        Ok(())
    }

    /// Fill in `ρ₀ = min{½ exp(-2C₀ - 1), -½ max φ_M}` from a seed set, where
    /// `C₀` is the sup of the truncated energy over `𝓜² × I` on the initial
    /// family. Returns the parameters together with `C₀`.
    pub fn derive(
        source: &dyn GreenSource,
        seed_set: &[Vec<f64>],
        m_cut: f64,
        rho: f64,
        sigma0: f64,
        sigma_samples: usize,
    ) -> Result<(Self, f64)> {
        let mut tp = TruncationParams { m_cut, rho, rho0: 1.0, sigma0 };
        tp.validate()?;
        let pairs = seed_pairs(seed_set);
        if pairs.is_empty() {
            return Err(Error::Config("the seed set needs at least two distinct points".into()));
        }
        let sigmas = sigma_grid(sigma0, sigma_samples.max(2));
        let mut c0 = f64::NEG_INFINITY;
        let mut phi_max = f64::NEG_INFINITY;
        for &(i, j) in &pairs {
            let (x1, x2) = (&seed_set[i], &seed_set[j]);
            let (r1, r2, g) = pair_data(source, x1, x2, Some(m_cut));
            let crit = critical_lambda(r1, r2, g)?;
            phi_max = phi_max.max(crit.phi);
            for &sg in &sigmas {
                let l = [sg * crit.lambda[0], sg * crit.lambda[1]];
                let v = psi_truncated_parts(r1, r2, g, l);
                c0 = c0.max(v);
            }
        }
        tp.rho0 = (0.5 * (-2.0 * c0 - 1.0).exp()).min(-0.5 * phi_max);
        if !(tp.rho0 > 0.0) {
            return Err(Error::Domain(format!(
                "φ is not negative on the seed set (max φ_M = {phi_max})"
            )));
        }
        Ok((tp, c0))
    }
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Value and gradient of `Ψ`, with the interaction optionally capped at `M`.
fn psi_with_gradient(
    source: &dyn GreenSource,
    xi: &[Vec<f64>],
    lambda: &[f64],
    sign: f64,
    cutoff: Option<f64>,
) -> (f64, Vec<f64>) {
    let m = xi.len();
    let n = source.dim();
    let mut grad = vec![0.0; m * n + m];
    let mut quad = 0.0;
    let mut logs = 0.0;
    for i in 0..m {
        let r = source.robin(&xi[i]);
        let dr = source.robin_gradient(&xi[i]);
        let l = lambda[i];
        quad += r * l * l;
        logs += l.ln();
        for k in 0..n {
            grad[i * n + k] += 0.5 * dr[k] * l * l;
        }
        grad[m * n + i] += r * l + sign / l;
    }
    for i in 0..m {
        for j in i + 1..m {
            let g = source.green(&xi[i], &xi[j]);
            let (li, lj) = (lambda[i], lambda[j]);
            let capped = cutoff.is_some_and(|cap| g > cap);
            let g_eff = if capped { cutoff.unwrap() } else { g };
            quad -= 2.0 * g_eff * li * lj;
            grad[m * n + i] -= g_eff * lj;
            grad[m * n + j] -= g_eff * li;
            if !capped {
                let (gx, gy) = source.green_gradient(&xi[i], &xi[j]);
                for k in 0..n {
                    grad[i * n + k] -= gx[k] * li * lj;
                    grad[j * n + k] -= gy[k] * li * lj;
                }
            }
        }
    }
    (0.5 * quad + sign * logs, grad)
}

fn check_interior(source: &dyn GreenSource, xi: &[Vec<f64>], lambda: &[f64]) -> Result<()> {
    if xi.len() != lambda.len() || xi.is_empty() {
        return Err(Error::Config(format!(
            "{} points and {} rates given",
            xi.len(),
            lambda.len()
        )));
    }
    for (i, x) in xi.iter().enumerate() {
        if x.len() != source.dim() {
            return Err(Error::Config(format!("ξ_{} has dimension {}", i + 1, x.len())));
        }
        if !(source.boundary_distance(x) > 0.0) {
            return Err(Error::Domain(format!("ξ_{} = {x:?} is not interior", i + 1)));
        }
    }
    if let Some(i) = lambda.iter().position(|l| !(*l > 0.0)) {
        return Err(Error::Domain(format!("Λ_{} = {} must be positive", i + 1, lambda[i])));
    }
    Ok(())
}

/// `Ψ(ξ, Λ) = ½[Σ H(ξ_i,ξ_i)Λ_i² - 2Σ_{i<j} G(ξ_i,ξ_j)Λ_iΛ_j] ± Σ log Λ_i`,
/// `+` above the critical exponent and `-` below, with its analytic gradient.
pub fn psi_eval(
    source: &dyn GreenSource,
    xi: &[Vec<f64>],
    lambda: &[f64],
    sign: Criticality,
    constraints: &Constraints,
) -> Result<PsiPoint> {
    check_interior(source, xi, lambda)?;
    constraints.check(source, xi, lambda)?;
    let (value, gradient) = psi_with_gradient(source, xi, lambda, sign.sign(), None);
    Ok(PsiPoint { xi: xi.to_vec(), lambda: lambda.to_vec(), value, gradient })
}

/// `φ(ξ₁, ξ₂) = H(ξ₁,ξ₁)^{1/2} H(ξ₂,ξ₂)^{1/2} - G(ξ₁, ξ₂)`.
pub fn varphi(source: &dyn GreenSource, x1: &[f64], x2: &[f64]) -> Result<f64> {
    pair_checks(source, x1, x2)?;
    let (r1, r2, g) = pair_data(source, x1, x2, None);
    Ok((r1 * r2).sqrt() - g)
}

/// Gradient of `φ` in `(ξ₁, ξ₂)`.
pub fn varphi_gradient(source: &dyn GreenSource, x1: &[f64], x2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    pair_checks(source, x1, x2)?;
    let (r1, r2) = (source.robin(x1), source.robin(x2));
    let (d1, d2) = (source.robin_gradient(x1), source.robin_gradient(x2));
    let (gx, gy) = source.green_gradient(x1, x2);
    let root = (r1 * r2).sqrt();
    let g1 = d1.iter().zip(&gx).map(|(d, g)| 0.5 * root / r1 * d - g).collect();
    let g2 = d2.iter().zip(&gy).map(|(d, g)| 0.5 * root / r2 * d - g).collect();
    Ok((g1, g2))
}

fn pair_checks(source: &dyn GreenSource, x1: &[f64], x2: &[f64]) -> Result<()> {
    if distance(x1, x2) == 0.0 {
        return Err(Error::Domain("φ is undefined at coincident points".into()));
    }
    for x in [x1, x2] {
        if !(source.boundary_distance(x) > 0.0) {
            return Err(Error::Domain(format!("{x:?} is not interior")));
        }
    }
    Ok(())
}

fn pair_data(source: &dyn GreenSource, x1: &[f64], x2: &[f64], cutoff: Option<f64>) -> (f64, f64, f64) {
    let g = source.green(x1, x2);
    let g = cutoff.map_or(g, |cap| g.min(cap));
    (source.robin(x1), source.robin(x2), g)
}

/// Stationary rates of the two-bubble supercritical energy at fixed points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalLambda {
    pub lambda: [f64; 2],
    /// `H₁Λ₁² + H₂Λ₂² - 2GΛ₁Λ₂`, identically `-2`.
    pub q: f64,
    /// `Ψ(ξ, Λ(ξ)) = -1 + log(1/|φ|)`.
    pub psi: f64,
    pub phi: f64,
    /// `∂_Λ Ψ` at the returned rates.
    pub lambda_gradient: [f64; 2],
}

/// `Λ₁² = -R₂^{1/2} / (R₁^{1/2} φ)`, `Λ₂² = -R₁^{1/2} / (R₂^{1/2} φ)` from the
/// Robin values and the Green value of a pair.
pub fn critical_lambda(r1: f64, r2: f64, g: f64) -> Result<CriticalLambda> {
    let phi = (r1 * r2).sqrt() - g;
    if !(phi < 0.0) {
        return Err(Error::Domain(format!("φ = {phi} is not negative: the rates have no negative direction")));
    }
    let l1 = (-(r2.sqrt()) / (r1.sqrt() * phi)).sqrt();
    let l2 = (-(r1.sqrt()) / (r2.sqrt() * phi)).sqrt();
    let q = r1 * l1 * l1 + r2 * l2 * l2 - 2.0 * g * l1 * l2;
    let psi = 0.5 * q + (l1 * l2).ln();
    Ok(CriticalLambda {
        lambda: [l1, l2],
        q,
        psi,
        phi,
        lambda_gradient: [r1 * l1 - g * l2 + 1.0 / l1, r2 * l2 - g * l1 + 1.0 / l2],
    })
}

pub fn lambda_critical(source: &dyn GreenSource, x1: &[f64], x2: &[f64]) -> Result<CriticalLambda> {
    pair_checks(source, x1, x2)?;
    let (r1, r2, g) = pair_data(source, x1, x2, None);
    critical_lambda(r1, r2, g)
}

fn psi_truncated_parts(r1: f64, r2: f64, g_capped: f64, l: [f64; 2]) -> f64 {
    0.5 * (r1 * l[0] * l[0] + r2 * l[1] * l[1] - 2.0 * g_capped * l[0] * l[1]) + (l[0] * l[1]).ln()
}

/// `Ψ + (G - G_M)Λ₁Λ₂ = Ψ` with `G` replaced by `G_M = min(G, M)`.
pub fn psi_truncated(
    source: &dyn GreenSource,
    tp: &TruncationParams,
    xi: &[Vec<f64>],
    lambda: &[f64],
    sign: Criticality,
) -> Result<f64> {
    check_interior(source, xi, lambda)?;
    for (i, x) in xi.iter().enumerate() {
        if source.boundary_distance(x) < tp.rho {
            return Err(Error::Domain(format!("ξ_{} lies outside Ω_ρ with ρ = {}", i + 1, tp.rho)));
        }
    }
    Ok(psi_with_gradient(source, xi, lambda, sign.sign(), Some(tp.m_cut)).0)
}

/// A smooth function of the flattened configuration `z = (ξ₁, …, ξ_m, Λ)`.
pub trait Objective: Sync {
    fn points(&self) -> usize;
    fn space_dim(&self) -> usize;
    fn evaluate(&self, z: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn admissible(&self, z: &[f64]) -> bool;

    fn dim(&self) -> usize {
        self.points() * (self.space_dim() + 1)
    }

    fn split(&self, z: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let (m, n) = (self.points(), self.space_dim());
        let xi = (0..m).map(|i| z[i * n..(i + 1) * n].to_vec()).collect();
        (xi, z[m * n..].to_vec())
    }
}

pub fn flatten(xi: &[Vec<f64>], lambda: &[f64]) -> Vec<f64> {
    xi.iter().flatten().copied().chain(lambda.iter().copied()).collect()
}

/// `Ψ` as an objective on interior configurations.
pub struct ReducedEnergy<'a> {
    pub source: &'a dyn GreenSource,
    pub m: usize,
    pub sign: Criticality,
    pub cutoff: Option<f64>,
}

impl<'a> ReducedEnergy<'a> {
    pub fn new(source: &'a dyn GreenSource, m: usize, sign: Criticality) -> Self {
        ReducedEnergy { source, m, sign, cutoff: None }
    }
}

impl Objective for ReducedEnergy<'_> {
    fn points(&self) -> usize {
        self.m
    }

    fn space_dim(&self) -> usize {
        self.source.dim()
    }

    fn evaluate(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        if !self.admissible(z) {
            return Err(Error::Domain(format!("configuration {z:?} is not admissible")));
        }
        let (xi, lambda) = self.split(z);
        let (v, g) = psi_with_gradient(self.source, &xi, &lambda, self.sign.sign(), self.cutoff);
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("non-finite reduced energy", v));
        }
        Ok((v, g))
    }

    fn admissible(&self, z: &[f64]) -> bool {
        if z.len() != self.dim() || z.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let (xi, lambda) = self.split(z);
        if lambda.iter().any(|l| !(*l > 0.0)) || xi.iter().any(|x| !(self.source.boundary_distance(x) > 0.0)) {
            return false;
        }
        self.cutoff.is_some() || (0..self.m).all(|i| (i + 1..self.m).all(|j| distance(&xi[i], &xi[j]) > 0.0))
    }
}

/// Sum of random sinusoids with `sup|f| + sup|∇f| ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothPerturbation {
    center: Vec<f64>,
    terms: Vec<(f64, Vec<f64>, f64)>,
}

impl SmoothPerturbation {
    pub fn random(center: &[f64], terms: usize, max_frequency: f64, rng: &mut impl Rng) -> Self {
        let dim = center.len();
        let mut raw: Vec<(f64, Vec<f64>, f64)> = (0..terms)
            .map(|_| {
                let amp = rng.random_range(-1.0..1.0);
                let freq = (0..dim).map(|_| rng.random_range(-max_frequency..max_frequency)).collect();
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (amp, freq, phase)
            })
            .collect();
        let total: f64 = raw.iter().map(|(a, w, _)| a.abs() * (1.0 + norm(w))).sum();
        for t in &mut raw {
            t.0 /= total;
        }
        SmoothPerturbation { center: center.to_vec(), terms: raw }
    }

    pub fn value_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let mut v = 0.0;
        let mut g = vec![0.0; z.len()];
        for (a, w, ph) in &self.terms {
            let arg: f64 = w.iter().zip(z.iter().zip(&self.center)).map(|(wk, (x, c))| wk * (x - c)).sum::<f64>() + ph;
            v += a * arg.sin();
            for (gk, wk) in g.iter_mut().zip(w) {
                *gk += a * wk * arg.cos();
            }
        }
        (v, g)
    }
}

/// `Φ = Ψ + δ f` for a smooth perturbation `f`.
pub struct Perturbed<'a> {
    pub base: &'a dyn Objective,
    pub perturbation: SmoothPerturbation,
    pub delta: f64,
}

impl Objective for Perturbed<'_> {
    fn points(&self) -> usize {
        self.base.points()
    }

    fn space_dim(&self) -> usize {
        self.base.space_dim()
    }

    fn evaluate(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, mut g) = self.base.evaluate(z)?;
        let (pv, pg) = self.perturbation.value_and_gradient(z);
        for (gk, pk) in g.iter_mut().zip(pg) {
            *gk += self.delta * pk;
        }
        Ok((v + self.delta * pv, g))
    }

    fn admissible(&self, z: &[f64]) -> bool {
        self.base.admissible(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Signature {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub xi: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub hessian_eigenvalues: Vec<f64>,
    pub signature: Signature,
    pub iterations: usize,
    /// Set by [`classify_stability`].
    pub stable: Option<bool>,
}

impl CriticalPoint {
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.xi, &self.lambda)
    }

    pub fn nondegenerate(&self) -> bool {
        self.signature.zero == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub points: Vec<CriticalPoint>,
    pub failures: Vec<SeedFailure>,
}

/// Hessian by central differences of the gradient, step `1e-4 · max(|z_k|, 1)`.
pub fn fd_hessian(obj: &dyn Objective, z: &[f64]) -> Result<DMatrix<f64>> {
    let d = z.len();
    let mut h = DMatrix::zeros(d, d);
    for k in 0..d {
        let step = 1e-4 * z[k].abs().max(1.0);
        let shifted = |e: f64| {
            let mut p = z.to_vec();
            p[k] += e;
            p
        };
        let (zp, zm) = (shifted(step), shifted(-step));
        let col: Vec<f64> = match (obj.admissible(&zp), obj.admissible(&zm)) {
            (true, true) => {
                let (gp, gm) = (obj.evaluate(&zp)?.1, obj.evaluate(&zm)?.1);
                gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * step)).collect()
            }
            (true, false) => {
                let (gp, g0) = (obj.evaluate(&zp)?.1, obj.evaluate(z)?.1);
                gp.iter().zip(&g0).map(|(a, b)| (a - b) / step).collect()
            }
            (false, true) => {
                let (g0, gm) = (obj.evaluate(z)?.1, obj.evaluate(&zm)?.1);
                g0.iter().zip(&gm).map(|(a, b)| (a - b) / step).collect()
            }
            (false, false) => return Err(Error::Domain("no admissible stencil for the Hessian".into())),
        };
        for (r, v) in col.into_iter().enumerate() {
            h[(r, k)] = v;
        }
    }
    Ok(0.5 * (&h + h.transpose()))
}

/// Eigenvalues (ascending) and signature; `|eig| < 1e-6 ‖H‖` counts as zero.
pub fn hessian_signature(h: &DMatrix<f64>) -> (Vec<f64>, Signature) {
    let mut eig: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let scale = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut sig = Signature::default();
    for &v in &eig {
        if v.abs() < 1e-6 * scale || scale == 0.0 {
            sig.zero += 1;
        } else if v > 0.0 {
            sig.positive += 1;
        } else {
            sig.negative += 1;
        }
    }
    (eig, sig)
}

const MAX_NEWTON_STEPS: usize = 200;

/// Damped Newton iteration on `∇Ψ = 0` with backtracking on `‖∇Ψ‖`; falls
/// back to steepest descent of `½‖∇Ψ‖²` when the Newton step stalls.
fn newton(obj: &dyn Objective, z0: &[f64], tol: f64) -> Result<(Vec<f64>, f64, Vec<f64>, usize)> {
    if !obj.admissible(z0) {
        return Err(Error::Domain("seed is not admissible".into()));
    }
    let mut z = z0.to_vec();
    let (mut value, mut grad) = obj.evaluate(&z)?;
    let mut gnorm = norm(&grad);
    for it in 0..MAX_NEWTON_STEPS {
        if gnorm < tol {
            return Ok((z, value, grad, it));
        }
        let h = fd_hessian(obj, &z)?;
        let g = DVector::from_column_slice(&grad);
        let mut directions = Vec::new();
        if let Some(step) = h.clone().lu().solve(&(-&g)) {
            if step.iter().all(|v| v.is_finite()) {
                directions.push(step);
            }
        }
        directions.push(-(&h * &g));
        directions.push(-g.clone());
        let mut accepted = false;
        'dirs: for dir in directions {
            let mut t = 1.0;
            while t > 1e-12 {
                let trial: Vec<f64> = z.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
                if obj.admissible(&trial) {
                    if let Ok((v, gr)) = obj.evaluate(&trial) {
                        let n = norm(&gr);
                        if n < (1.0 - 1e-4 * t) * gnorm {
                            z = trial;
                            value = v;
                            grad = gr;
                            gnorm = n;
                            accepted = true;
                            break 'dirs;
                        }
                    }
                }
                t *= 0.5;
            }
        }
        if !accepted {
            return Err(Error::numeric("line search stalled", gnorm));
        }
    }
    if gnorm < tol {
        Ok((z, value, grad, MAX_NEWTON_STEPS))
    } else {
        Err(Error::numeric("no convergence within the iteration budget", gnorm))
    }
}

fn refine(obj: &dyn Objective, seed: &[f64], tol: f64) -> Result<CriticalPoint> {
    let (z, value, grad, iterations) = newton(obj, seed, tol)?;
    let (eig, signature) = hessian_signature(&fd_hessian(obj, &z)?);
    let (xi, lambda) = obj.split(&z);
    Ok(CriticalPoint {
        xi,
        lambda,
        value,
        gradient_norm: norm(&grad),
        hessian_eigenvalues: eig,
        signature,
        iterations,
        stable: None,
    })
}

/// Critical points reached from each seed (flattened configurations),
/// deduplicated within `10 · tol`.
pub fn find_critical(obj: &dyn Objective, seeds: &[Vec<f64>], tol: f64) -> CriticalSearch {
    let outcomes: Vec<Result<CriticalPoint>> = seeds.par_iter().map(|s| refine(obj, s, tol)).collect();
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(cp) => {
                let z = cp.flat();
                if points.iter().all(|p| distance(&p.flat(), &z) > 10.0 * tol) {
                    points.push(cp);
                }
            }
            Err(e) => failures.push(SeedFailure { seed, reason: e.to_string() }),
        }
    }
    CriticalSearch { points, failures }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub mu: f64,
    /// Perturbation size `δ = μ · min(1, λ_min/2)`, or `μ` when degenerate.
    pub delta: f64,
    pub runs: usize,
    pub survived: usize,
    pub max_shift: f64,
    pub nondegenerate: bool,
    pub stable: bool,
}

/// Re-run the search on `Ψ + δ f` for random smooth `f` with `‖f‖_{C¹} ≤ 1`;
/// stable iff every run finds a critical point within `μ` of `cp`.
pub fn classify_stability(
    obj: &dyn Objective,
    cp: &CriticalPoint,
    mu: f64,
    runs: usize,
    tol: f64,
    seed: u64,
) -> StabilityReport {
    let z = cp.flat();
    let lambda_min = cp.hessian_eigenvalues.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let nondegenerate = cp.nondegenerate();
    let delta = if nondegenerate { mu * (0.5 * lambda_min).min(1.0) } else { mu };
    let shifts: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let perturbation = SmoothPerturbation::random(&z, 3, 3.0, &mut rng);
            let phi = Perturbed { base: obj, perturbation, delta };
            newton(&phi, &z, tol).map_or(f64::INFINITY, |(w, ..)| distance(&w, &z))
        })
        .collect();
    let survived = shifts.iter().filter(|d| **d <= mu).count();
    StabilityReport {
        mu,
        delta,
        runs,
        survived,
        max_shift: shifts.iter().copied().fold(0.0, f64::max),
        nondegenerate,
        stable: survived == runs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub z: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
}

/// `Ψ` and `‖∇Ψ‖` at each admissible point; other points are skipped.
pub fn scan(obj: &dyn Objective, points: &[Vec<f64>]) -> Vec<ScanRow> {
    points
        .par_iter()
        .filter_map(|z| {
            obj.evaluate(z).ok().map(|(value, g)| ScanRow { z: z.clone(), value, gradient_norm: norm(&g) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxConfig {
    pub truncation: TruncationParams,
    /// Number of dilation samples in `I`, endpoints included.
    pub sigma_samples: usize,
    pub flow_steps: usize,
    pub dt: f64,
    /// Width of the level gate: frozen below `c - 2α`, full above `c - α`.
    pub gate: f64,
    /// Monitored lower bound `-K`.
    pub lower_bound: f64,
}

impl MinMaxConfig {
    pub fn new(truncation: TruncationParams) -> Self {
        MinMaxConfig { truncation, sigma_samples: 41, flow_steps: 1000, dt: 0.02, gate: 0.1, lower_bound: -1e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxReport {
    pub value: f64,
    pub initial_sup: f64,
    /// Smallest truncated energy met by any family member.
    pub observed_inf: f64,
    pub maximizer_xi: Vec<Vec<f64>>,
    pub maximizer_lambda: Vec<f64>,
    /// Critical point of the truncated energy reached by Newton from the
    /// final maximizer; `ξ*` is the maximizer itself when this fails.
    pub saddle: Option<CriticalPoint>,
    /// Whether `G(ξ*) ≥ M`, i.e. `ξ*` lies where the interaction is cut off.
    pub saddle_capped: bool,
    pub saddle_phi: f64,
    /// `-1 + log(1/|φ_M(ξ*)|)`.
    pub saddle_level: f64,
    pub relative_gap: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub stayed_in_d: bool,
    pub dropped_below_lower_bound: bool,
    pub sup_history: Vec<f64>,
}

fn seed_pairs(seed_set: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..seed_set.len() {
        for j in 0..seed_set.len() {
            if i != j && distance(&seed_set[i], &seed_set[j]) > 0.0 {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Geometric grid on `[σ₀, 1/σ₀]` containing `σ = 1` when the count is odd.
fn sigma_grid(sigma0: f64, count: usize) -> Vec<f64> {
    let lo = sigma0.ln();
    (0..count).map(|k| (lo - 2.0 * lo * k as f64 / (count - 1) as f64).exp()).collect()
}

const CURVE_SUBSAMPLES: usize = 8;

struct Member {
    z: Vec<f64>,
    value: f64,
    pinned: bool,
    dt: f64,
}

/// Move the interior members of a chain to equal arc length along the
/// piecewise-linear curve through them; the image of the curve is unchanged.
fn redistribute(chain: &mut [Member], obj: &TruncatedPair) {
    let mut arc = vec![0.0];
    for w in chain.windows(2) {
        arc.push(arc.last().unwrap() + distance(&w[0].z, &w[1].z));
    }
    let total = *arc.last().unwrap();
    if !(total > 0.0) {
        return;
    }
    let old: Vec<Vec<f64>> = chain.iter().map(|m| m.z.clone()).collect();
    let last = chain.len() - 1;
    let mut seg = 0;
    for (k, member) in chain.iter_mut().enumerate().take(last).skip(1) {
        let target = total * k as f64 / last as f64;
        while seg + 1 < last && arc[seg + 1] < target {
            seg += 1;
        }
        let span = arc[seg + 1] - arc[seg];
        let t = if span > 0.0 { (target - arc[seg]) / span } else { 0.0 };
        let z: Vec<f64> = old[seg].iter().zip(&old[seg + 1]).map(|(a, b)| a + t * (b - a)).collect();
        if obj.in_d(&z) {
            member.value = obj.evaluate(&z).0;
            member.z = z;
        }
    }
}

fn gate(value: f64, level: f64, width: f64) -> f64 {
    ((value - (level - 2.0 * width)) / width).clamp(0.0, 1.0)
}

/// Truncated two-bubble objective restricted to the admissible set `D`.
struct TruncatedPair<'a> {
    source: &'a dyn GreenSource,
    tp: TruncationParams,
}

impl TruncatedPair<'_> {
    fn split(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>, [f64; 2]) {
        let n = self.source.dim();
        (z[..n].to_vec(), z[n..2 * n].to_vec(), [z[2 * n], z[2 * n + 1]])
    }

    fn phi(&self, z: &[f64]) -> f64 {
        let (x1, x2, _) = self.split(z);
        let (r1, r2, g) = pair_data(self.source, &x1, &x2, Some(self.tp.m_cut));
        (r1 * r2).sqrt() - g
    }

    fn in_d(&self, z: &[f64]) -> bool {
        let (x1, x2, l) = self.split(z);
        z.iter().all(|v| v.is_finite())
            && l[0] > 0.0
            && l[1] > 0.0
            && self.source.boundary_distance(&x1) > self.tp.rho
            && self.source.boundary_distance(&x2) > self.tp.rho
            && distance(&x1, &x2) > 0.0
            && self.phi(z) < -self.tp.rho0
    }

    fn evaluate(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let (x1, x2, l) = self.split(z);
        psi_with_gradient(self.source, &[x1, x2], &l, 1.0, Some(self.tp.m_cut))
    }
}

/// Inf over flow time of the sup of the truncated energy over the deformed
/// family `ζ(ξ, σ, t)`, started from `ζ₀(ξ, σ) = (ξ, σΛ(ξ))` on `𝓜² × I` and
/// moved by the gated explicit-Euler gradient flow. The ends of `I` stay fixed.
pub fn minmax_estimate(source: &dyn GreenSource, seed_set: &[Vec<f64>], cfg: &MinMaxConfig) -> Result<MinMaxReport> {
    cfg.truncation.validate()?;
    if cfg.sigma_samples < 3 || !(cfg.dt > 0.0) || !(cfg.gate > 0.0) {
        return Err(Error::Config("min-max needs at least three σ samples, dt > 0 and gate > 0".into()));
    }
    let obj = TruncatedPair { source, tp: cfg.truncation };
    let pairs = seed_pairs(seed_set);
    if pairs.is_empty() {
        return Err(Error::Config("the seed set needs at least two distinct points".into()));
    }
    let sigmas = sigma_grid(cfg.truncation.sigma0, cfg.sigma_samples);
    let mut chains: Vec<Vec<Member>> = Vec::new();
    for &(i, j) in &pairs {
        let (x1, x2) = (&seed_set[i], &seed_set[j]);
        let (r1, r2, g) = pair_data(source, x1, x2, Some(cfg.truncation.m_cut));
        let crit = critical_lambda(r1, r2, g)?;
        let mut chain = Vec::with_capacity(sigmas.len());
        for (k, &sg) in sigmas.iter().enumerate() {
            let z: Vec<f64> =
                x1.iter().chain(x2).copied().chain([sg * crit.lambda[0], sg * crit.lambda[1]]).collect();
            if !obj.in_d(&z) {
                return Err(Error::Domain(format!(
                    "seed pair ({x1:?}, {x2:?}) is outside D (φ_M = {}, ρ₀ = {})",
                    obj.phi(&z),
                    cfg.truncation.rho0
                )));
            }
            let value = obj.evaluate(&z).0;
            chain.push(Member { z, value, pinned: k == 0 || k + 1 == sigmas.len(), dt: cfg.dt });
        }
        chains.push(chain);
    }
    // The family is the piecewise-linear curve through the members of each
    // chain, so its sup is taken on sub-samples of every segment.
    let curve_sup = |chains: &[Vec<Member>]| -> (f64, Vec<f64>) {
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for chain in chains {
            for w in chain.windows(2) {
                for k in 0..CURVE_SUBSAMPLES {
                    let t = k as f64 / CURVE_SUBSAMPLES as f64;
                    let z: Vec<f64> = w[0].z.iter().zip(&w[1].z).map(|(a, b)| a + t * (b - a)).collect();
                    let v = if k == 0 { w[0].value } else if obj.in_d(&z) { obj.evaluate(&z).0 } else { continue };
                    if v > best.0 {
                        best = (v, z);
                    }
                }
            }
            let last = chain.last().unwrap();
            if last.value > best.0 {
                best = (last.value, last.z.clone());
            }
        }
        best
    };
    let (initial_sup, mut best_z) = curve_sup(&chains);
    let mut best = initial_sup;
    let mut level = chains.iter().flatten().map(|m| m.value).fold(f64::NEG_INFINITY, f64::max);
    let mut observed_inf = chains.iter().flatten().map(|m| m.value).fold(f64::INFINITY, f64::min);
    let mut history = vec![initial_sup];
    let (mut accepted, mut rejected) = (0, 0);
    let mut stayed = true;
    for _ in 0..cfg.flow_steps {
        for member in chains.iter_mut().flatten().filter(|m| !m.pinned) {
            let (v, g) = obj.evaluate(&member.z);
            let h = gate(v, level, cfg.gate);
            if h == 0.0 {
                continue;
            }
            let mut dt = member.dt;
            loop {
                let trial: Vec<f64> = member.z.iter().zip(&g).map(|(a, b)| a - dt * h * b).collect();
                let lowered = obj.in_d(&trial).then(|| obj.evaluate(&trial).0).filter(|tv| *tv < v);
                if let Some(tv) = lowered {
                    member.value = tv;
                    member.z = trial;
                    member.dt = (2.0 * dt).min(cfg.dt);
                    accepted += 1;
                    break;
                }
                rejected += 1;
                dt *= 0.5;
                if dt < 1e-14 * cfg.dt {
                    break;
                }
            }
            stayed &= obj.in_d(&member.z);
            observed_inf = observed_inf.min(member.value);
        }
        for chain in chains.iter_mut() {
            redistribute(chain.as_mut_slice(), &obj);
        }
        let (sup, z) = curve_sup(&chains);
        level = chains.iter().flatten().map(|m| m.value).fold(f64::NEG_INFINITY, f64::max);
        history.push(sup);
        if sup < best {
            best = sup;
            best_z = z;
        }
    }
    let (x1, x2, l) = obj.split(&best_z);
    let energy = ReducedEnergy { source, m: 2, sign: Criticality::Supercritical, cutoff: Some(cfg.truncation.m_cut) };
    let saddle = refine(&energy, &best_z, 1e-9).ok();
    let star = saddle.as_ref().map_or(best_z.clone(), |cp| cp.flat());
    let (s1, s2, _) = obj.split(&star);
    let phi_star = obj.phi(&star);
    let level = -1.0 + (1.0 / phi_star.abs()).ln();
    Ok(MinMaxReport {
        value: best,
        initial_sup,
        observed_inf,
        maximizer_xi: vec![x1, x2],
        maximizer_lambda: l.to_vec(),
        saddle_capped: source.green(&s1, &s2) >= cfg.truncation.m_cut,
        saddle,
        saddle_phi: phi_star,
        saddle_level: level,
        relative_gap: (best - level).abs() / level.abs(),
        accepted_steps: accepted,
        rejected_steps: rejected,
        stayed_in_d: stayed,
        dropped_below_lower_bound: history.iter().any(|v| *v < cfg.lower_bound),
        sup_history: history,
    })
}

/// `a⁻¹φ_+` and its derivative along the axis configuration `ξ₁ = e_n`,
/// `ξ₂ = θ e_n` of the half-space; the restricted kind uses the kernel `K`.
pub fn halfspace_phi_plus(consts: &ConstantSet, theta: f64, kind: OperatorKind) -> Result<(f64, f64)> {
    if !(theta > 1.0) {
        return Err(Error::Domain(format!("θ = {theta} must exceed 1")));
    }
    let q = consts.decay();
    let below = theta - 1.0;
    match kind {
        OperatorKind::Spectral => {
            let above = theta + 1.0;
            let value = 2f64.powf(-q) * theta.powf(-0.5 * q) - below.powf(-q) + above.powf(-q);
            let derivative = -0.5 * q * 2f64.powf(-q) * theta.powf(-0.5 * q - 1.0) + q * below.powf(-q - 1.0)
                - q * above.powf(-q - 1.0);
            Ok((value, derivative))
        }
        OperatorKind::Restricted => {
            let kernel = KernelK::new(consts.n, consts.s);
            let (k, dk) = kernel.along_axis(theta);
            let d = consts.d_half;
            let robin = d * consts.iota * 2f64.powf(-q);
            let value = robin * theta.powf(-0.5 * q) - below.powf(-q) * (1.0 - d * k);
            let derivative = -0.5 * q * robin * theta.powf(-0.5 * q - 1.0) + q * below.powf(-q - 1.0) * (1.0 - d * k)
                + below.powf(-q) * d * dk;
            Ok((value, derivative))
        }
        OperatorKind::WholeSpace => Err(Error::Capability("φ_+ needs a half-space operator".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiPlusRoot {
    pub theta0: f64,
    pub derivative: f64,
    /// Sign changes of `φ_+` seen on a fine grid of `(1, 100)`.
    pub sign_changes: usize,
}

/// Root of `φ_+` on `(1, 100)` by bisection of the first sign change.
pub fn phi_plus_root(consts: &ConstantSet, kind: OperatorKind) -> Result<PhiPlusRoot> {
    let grid: Vec<f64> = (1..=2000).map(|k| 1.0 + 99.0 * (k as f64 / 2000.0).powi(2)).collect();
    let values: Vec<f64> =
        grid.par_iter().map(|&t| halfspace_phi_plus(consts, t, kind).map(|v| v.0)).collect::<Result<_>>()?;
    let changes: Vec<usize> = (1..grid.len()).filter(|&k| (values[k - 1] < 0.0) != (values[k] < 0.0)).collect();
    let first = *changes.first().ok_or_else(|| Error::numeric("φ_+ has no sign change on (1, 100)", values[0]))?;
    let (mut lo, mut hi) = (grid[first - 1], grid[first]);
    let f_lo = values[first - 1];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = halfspace_phi_plus(consts, mid, kind)?.0;
        if (fm < 0.0) == (f_lo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    let theta0 = 0.5 * (lo + hi);
    Ok(PhiPlusRoot { theta0, derivative: halfspace_phi_plus(consts, theta0, kind)?.1, sign_changes: changes.len() })
}

/// Margin configuration on an interval: `ξ₁` on `∂Ω_ρ` and `ξ₂` on the level
/// set `φ = c`, with the derivative of `φ` along the tangent `τ = (0, e)`
/// pointing from `ξ₁` into the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginTangent {
    pub xi1: f64,
    pub xi2: f64,
    pub level: f64,
    pub derivative: f64,
}

pub fn margin_tangent(source: &dyn GreenSource, a: f64, b: f64, rho: f64, level: f64) -> Result<MarginTangent> {
    if !(level < 0.0) || !(rho > 0.0) || 2.0 * rho >= b - a {
        return Err(Error::Config(format!("margin ρ = {rho} and level c = {level} are not usable on ({a}, {b})")));
    }
    let xi1 = a + rho;
    let phi = |x2: f64| varphi(source, &[xi1], &[x2]);
    let mut lo = xi1 + 1e-9 * (b - a);
    let mut hi = b - rho;
    if phi(lo)? > level || phi(hi)? < level {
        return Err(Error::Domain(format!("the level {level} is not crossed inside Ω_ρ")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid)? < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (b - a) {
            break;
        }
    }
    let xi2 = 0.5 * (lo + hi);
    let (_, g2) = varphi_gradient(source, &[xi1], &[xi2])?;
    Ok(MarginTangent { xi1, xi2, level, derivative: g2[0] })
}
