//! Green functions, regular parts and Robin functions: closed forms for
//! half-spaces, balls and intervals, numerical tables from discrete
//! operators, and the Kelvin transform.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::constants::ConstantSet;
use crate::domain::{DomainSpec, Grid};
use crate::error::{Error, Result};
use crate::kernel::KernelK;
use crate::operators::{DiscreteOperator, OperatorKind};
use crate::quad::{tanh_sinh, Tolerance};
use crate::spline::CubicSpline;

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// The fundamental solution `a |x - y|^{2s-n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fundamental {
    pub a: f64,
    pub q: f64,
}

impl Fundamental {
    pub fn new(consts: &ConstantSet) -> Self {
        Fundamental {
            a: consts.a,
            q: consts.decay(),
        }
    }

    pub fn radial(&self, r: f64) -> f64 {
        self.a * r.powf(-self.q)
    }

    pub fn radial_derivative(&self, r: f64) -> f64 {
        -self.q * self.a * r.powf(-self.q - 1.0)
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.radial(dist(x, y))
    }

    /// Gradient in `x`; the gradient in `y` is its negative.
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let r = dist(x, y);
        let f = self.radial_derivative(r) / r;
        x.iter().zip(y).map(|(a, b)| f * (a - b)).collect()
    }
}

/// `a |x - ξ|^{2s-n}`; fails at `x = ξ`.
pub fn gamma_fundamental(consts: &ConstantSet, x: &[f64], xi: &[f64]) -> Result<f64> {
    let r = dist(x, xi);
    if r == 0.0 {
        return Err(Error::Domain("the fundamental solution is singular at x = ξ".into()));
    }
    Ok(Fundamental::new(consts).value(x, xi))
}

/// `(K, ∂K/∂r, ∂K/∂t)` of the half-space kernel.
pub fn kernel_k_and_partials(kernel: &KernelK, r: f64, t: f64) -> Result<(f64, f64, f64)> {
    if !(r > 0.0 && t > 0.0) {
        return Err(Error::Domain(format!("kernel arguments r = {r}, t = {t} must be positive")));
    }
    Ok(kernel.partials(r, t))
}

/// Restricted half-space Green function
/// `a r^{-(n-2s)/2} [1 - d K(r, t)]`, `r = |ξ1 - ξ2|^2`, `t = 4 ξ1_n ξ2_n`.
pub fn half_space_green(consts: &ConstantSet, kernel: &KernelK, x1: &[f64], x2: &[f64]) -> Result<f64> {
    let n = x1.len();
    let (h1, h2) = (x1[n - 1], x2[n - 1]);
    if !(h1 > 0.0 && h2 > 0.0) {
        return Err(Error::Domain(format!("heights {h1}, {h2} must be positive")));
    }
    let r = dist(x1, x2).powi(2);
    if r == 0.0 {
        return Err(Error::Domain("coincident points".into()));
    }
    let t = 4.0 * h1 * h2;
    Ok(consts.a * r.powf(-0.5 * consts.decay()) * (1.0 - consts.d_half * kernel.value(r, t)))
}

/// Closed-form restricted half-space Robin function `a d ι / (2 h)^{n-2s}`.
pub fn half_space_robin(consts: &ConstantSet, height: f64) -> Result<f64> {
    if !(height > 0.0) {
        return Err(Error::Domain(format!("height {height} must be positive")));
    }
    Ok(consts.a * consts.d_half * consts.iota * (2.0 * height).powf(-consts.decay()))
}

/// Method-of-images half-space Green function `Γ(Z - Y) - Γ(Z - Ȳ)`.
pub fn spectral_half_space_green(consts: &ConstantSet, z: &[f64], y: &[f64]) -> Result<f64> {
    let n = z.len();
    if z[n - 1] < 0.0 || !(y[n - 1] > 0.0) {
        return Err(Error::Domain("points must lie in the closed upper half-space".into()));
    }
    if dist(z, y) == 0.0 {
        return Err(Error::Domain("coincident points".into()));
    }
    let mut image = y.to_vec();
    image[n - 1] = -image[n - 1];
    let f = Fundamental::new(consts);
    Ok(f.value(z, y) - f.value(z, &image))
}

/// Inversion `ξ / |ξ|^2`.
pub fn inversion(xi: &[f64]) -> Result<Vec<f64>> {
    let r2: f64 = xi.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return Err(Error::Domain("inversion is undefined at the origin".into()));
    }
    Ok(xi.iter().map(|v| v / r2).collect())
}

/// Kelvin transform `|ξ|^{2s-n} u(ξ / |ξ|^2)`.
pub fn kelvin_transform(u: &dyn Fn(&[f64]) -> f64, xi: &[f64], s: f64) -> Result<f64> {
    let n = xi.len() as f64;
    let r: f64 = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let star = inversion(xi)?;
    Ok(r.powf(2.0 * s - n) * u(&star))
}

/// Regular part and Green function of a domain, with gradients.
pub trait GreenSource: Send + Sync {
    fn dim(&self) -> usize;

    /// Distance to the boundary; positive inside.
    fn boundary_distance(&self, x: &[f64]) -> f64;

    fn regular(&self, x: &[f64], y: &[f64]) -> f64;

    fn green(&self, x: &[f64], y: &[f64]) -> f64;

    fn robin(&self, x: &[f64]) -> f64 {
        self.regular(x, x)
    }

    /// Gradients of the regular part in `x` and in `y`.
    fn regular_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let step = 1e-5 * self.boundary_distance(x).min(self.boundary_distance(y)).max(1e-12);
        let fd = |f: &dyn Fn(f64) -> f64| (f(step) - f(-step)) / (2.0 * step);
        let n = x.len();
        let gx = (0..n)
            .map(|j| {
                fd(&|e| {
                    let mut p = x.to_vec();
                    p[j] += e;
                    self.regular(&p, y)
                })
            })
            .collect();
        let gy = (0..n)
            .map(|j| {
                fd(&|e| {
                    let mut p = y.to_vec();
                    p[j] += e;
                    self.regular(x, &p)
                })
            })
            .collect();
        (gx, gy)
    }

    /// Gradients of the Green function in `x` and in `y`.
    fn green_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>);

    fn robin_gradient(&self, x: &[f64]) -> Vec<f64> {
        let (gx, gy) = self.regular_gradient(x, x);
        gx.iter().zip(&gy).map(|(a, b)| a + b).collect()
    }
}

fn green_gradient_from_regular<S: GreenSource + ?Sized>(
    src: &S,
    fundamental: &Fundamental,
    x: &[f64],
    y: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (hx, hy) = src.regular_gradient(x, y);
    let fx = fundamental.gradient(x, y);
    (
        fx.iter().zip(&hx).map(|(f, h)| f - h).collect(),
        fx.iter().zip(&hy).map(|(f, h)| -f - h).collect(),
    )
}

/// Restricted Green function of a ball (closed form).
#[derive(Debug, Clone)]
pub struct BallRestricted {
    pub center: Vec<f64>,
    pub radius: f64,
    fundamental: Fundamental,
    scale: f64,
    kernel: KernelK,
}

impl BallRestricted {
    pub fn new(consts: &ConstantSet, center: Vec<f64>, radius: f64) -> Self {
        let n = center.len();
        BallRestricted {
            radius,
            fundamental: Fundamental::new(consts),
            scale: consts.a * consts.d_half * radius.powf(-consts.decay()),
            kernel: KernelK::new(n, consts.s),
            center,
        }
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(v, c)| (v - c) / self.radius).collect()
    }

    fn rt(&self, xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let r = dist(xs, ys).powi(2);
        let nx: f64 = xs.iter().map(|v| v * v).sum();
        let ny: f64 = ys.iter().map(|v| v * v).sum();
        (r, (1.0 - nx) * (1.0 - ny))
    }
}

impl GreenSource for BallRestricted {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.radius - dist(x, &self.center)
    }

    fn regular(&self, x: &[f64], y: &[f64]) -> f64 {
        let (xs, ys) = (self.scaled(x), self.scaled(y));
        let (r, t) = self.rt(&xs, &ys);
        self.scale * self.kernel.regular_profile(r, t)
    }

    fn green(&self, x: &[f64], y: &[f64]) -> f64 {
        self.fundamental.value(x, y) - self.regular(x, y)
    }

    fn regular_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (xs, ys) = (self.scaled(x), self.scaled(y));
        let (r, t) = self.rt(&xs, &ys);
        let (_, pr, pt) = self.kernel.regular_profile_partials(r, t);
        let nx: f64 = xs.iter().map(|v| v * v).sum();
        let ny: f64 = ys.iter().map(|v| v * v).sum();
        let f = self.scale / self.radius;
        let gx = (0..xs.len())
            .map(|j| f * (pr * 2.0 * (xs[j] - ys[j]) - pt * 2.0 * xs[j] * (1.0 - ny)))
            .collect();
        let gy = (0..xs.len())
            .map(|j| f * (-pr * 2.0 * (xs[j] - ys[j]) - pt * 2.0 * ys[j] * (1.0 - nx)))
            .collect();
        (gx, gy)
    }

    fn green_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        green_gradient_from_regular(self, &self.fundamental, x, y)
    }
}

/// Restricted Green function of the half-space `{x_n > 0}` (closed form).
#[derive(Debug, Clone)]
pub struct HalfSpaceRestricted {
    n: usize,
    fundamental: Fundamental,
    scale: f64,
    kernel: KernelK,
}

impl HalfSpaceRestricted {
    pub fn new(consts: &ConstantSet) -> Self {
        HalfSpaceRestricted {
            n: consts.n,
            fundamental: Fundamental::new(consts),
            scale: consts.a * consts.d_half,
            kernel: KernelK::new(consts.n, consts.s),
        }
    }
}

impl GreenSource for HalfSpaceRestricted {
    fn dim(&self) -> usize {
        self.n
    }

    fn boundary_distance(&self, x: &[f64]) -> f64 {
        x[self.n - 1]
    }

    fn regular(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = dist(x, y).powi(2);
        let t = 4.0 * x[self.n - 1] * y[self.n - 1];
        self.scale * self.kernel.regular_profile(r, t)
    }

    fn green(&self, x: &[f64], y: &[f64]) -> f64 {
        self.fundamental.value(x, y) - self.regular(x, y)
    }

    fn regular_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let r = dist(x, y).powi(2);
        let t = 4.0 * x[n - 1] * y[n - 1];
        let (_, pr, pt) = self.kernel.regular_profile_partials(r, t);
        let mut gx: Vec<f64> = (0..n).map(|j| self.scale * pr * 2.0 * (x[j] - y[j])).collect();
        let mut gy: Vec<f64> = gx.iter().map(|v| -v).collect();
        gx[n - 1] += self.scale * pt * 4.0 * y[n - 1];
        gy[n - 1] += self.scale * pt * 4.0 * x[n - 1];
        (gx, gy)
    }

    fn green_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        green_gradient_from_regular(self, &self.fundamental, x, y)
    }
}

/// Spectral Green function of the half-space `{x_n > 0}` by images.
#[derive(Debug, Clone)]
pub struct HalfSpaceSpectral {
    n: usize,
    fundamental: Fundamental,
}

impl HalfSpaceSpectral {
    pub fn new(consts: &ConstantSet) -> Self {
        HalfSpaceSpectral {
            n: consts.n,
            fundamental: Fundamental::new(consts),
        }
    }

    fn image(&self, y: &[f64]) -> Vec<f64> {
        let mut im = y.to_vec();
        im[self.n - 1] = -im[self.n - 1];
        im
    }
}

impl GreenSource for HalfSpaceSpectral {
    fn dim(&self) -> usize {
        self.n
    }

    fn boundary_distance(&self, x: &[f64]) -> f64 {
        x[self.n - 1]
    }

    fn regular(&self, x: &[f64], y: &[f64]) -> f64 {
        self.fundamental.value(x, &self.image(y))
    }

    fn green(&self, x: &[f64], y: &[f64]) -> f64 {
        self.fundamental.value(x, y) - self.regular(x, y)
    }

    fn regular_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let gx = self.fundamental.gradient(x, &self.image(y));
        let mut gy: Vec<f64> = gx.iter().map(|v| -v).collect();
        gy[self.n - 1] = gx[self.n - 1];
        (gx, gy)
    }

    fn green_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        green_gradient_from_regular(self, &self.fundamental, x, y)
    }
}

const IMAGE_TERMS: usize = 32;

/// Spectral Green function of an interval through its periodic odd images.
#[derive(Debug, Clone)]
pub struct IntervalSpectral {
    pub a: f64,
    pub b: f64,
    fundamental: Fundamental,
}

impl IntervalSpectral {
    pub fn new(consts: &ConstantSet, a: f64, b: f64) -> Result<Self> {
        if consts.n != 1 {
            return Err(Error::Capability("image series are one-dimensional".into()));
        }
        Ok(IntervalSpectral {
            a,
            b,
            fundamental: Fundamental::new(consts),
        })
    }

    fn period(&self) -> f64 {
        2.0 * (self.b - self.a)
    }

    /// `Σ_{k >= 1} [Γ(c1 + kP) - Γ(c2 + kP)]`.
    fn paired_sum(&self, c1: f64, c2: f64) -> f64 {
        let p = self.period();
        let (a, q) = (self.fundamental.a, self.fundamental.q);
        let g = |u: f64| a * u.powf(-q);
        let dg = |u: f64| -q * a * u.powf(-q - 1.0);
        let mut sum = 0.0;
        for k in 1..=IMAGE_TERMS {
            let kp = k as f64 * p;
            sum += g(c1 + kp) - g(c2 + kp);
        }
        let jp = IMAGE_TERMS as f64 * p;
        // Euler–Maclaurin remainder of the sum over k > J.
        let integral = a * ((c2 + jp).powf(1.0 - q) - (c1 + jp).powf(1.0 - q)) / (p * (1.0 - q));
        let f = g(c1 + jp) - g(c2 + jp);
        let fp = p * (dg(c1 + jp) - dg(c2 + jp));
        sum + integral - 0.5 * f - fp / 12.0
    }

    /// `Σ_{k >= 1} Γ'(c + kP)`.
    fn derivative_sum(&self, c: f64) -> f64 {
        let p = self.period();
        let (a, q) = (self.fundamental.a, self.fundamental.q);
        let g = |u: f64| a * u.powf(-q);
        let dg = |u: f64| -q * a * u.powf(-q - 1.0);
        let d2g = |u: f64| q * (q + 1.0) * a * u.powf(-q - 2.0);
        let mut sum = 0.0;
        for k in 1..=IMAGE_TERMS {
            sum += dg(c + k as f64 * p);
        }
        let jp = IMAGE_TERMS as f64 * p;
        sum - g(c + jp) / p - 0.5 * dg(c + jp) - p * d2g(c + jp) / 12.0
    }
}

impl GreenSource for IntervalSpectral {
    fn dim(&self) -> usize {
        1
    }

    fn boundary_distance(&self, x: &[f64]) -> f64 {
        (x[0] - self.a).min(self.b - x[0])
    }

    fn regular(&self, x: &[f64], y: &[f64]) -> f64 {
        let (xt, yt) = (x[0] - self.a, y[0] - self.a);
        let (sum, diff) = (xt + yt, xt - yt);
        self.fundamental.radial(sum) + self.paired_sum(sum, diff) + self.paired_sum(-sum, -diff)
    }

    fn green(&self, x: &[f64], y: &[f64]) -> f64 {
        self.fundamental.value(x, y) - self.regular(x, y)
    }

    fn regular_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (xt, yt) = (x[0] - self.a, y[0] - self.a);
        let (sum, diff) = (xt + yt, xt - yt);
        let base = self.fundamental.radial_derivative(sum);
        let (ta, tb) = (self.derivative_sum(sum), self.derivative_sum(diff));
        let (tma, tmb) = (self.derivative_sum(-sum), self.derivative_sum(-diff));
        let gx = base + (ta - tb) - (tma - tmb);
        let gy = base + (ta + tb) - (tma + tmb);
        (vec![gx], vec![gy])
    }

    fn green_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        green_gradient_from_regular(self, &self.fundamental, x, y)
    }
}

/// Spectral regular part of an interval from the heat-truncated eigen-series
/// `Γ_τ(x - y) - Σ_k λ_k^{-s} Q(s, λ_k τ) φ_k(x) φ_k(y)`, where the neglected
/// short-time part is exponentially small for `τ << dist^2`.
#[derive(Debug, Clone)]
pub struct HeatTruncatedInterval {
    pub a: f64,
    pub b: f64,
    s: f64,
    fundamental: Fundamental,
}

impl HeatTruncatedInterval {
    pub fn new(consts: &ConstantSet, a: f64, b: f64) -> Self {
        HeatTruncatedInterval {
            a,
            b,
            s: consts.s,
            fundamental: Fundamental::new(consts),
        }
    }

    /// Whole-line kernel restricted to times `t > τ`.
    fn truncated_fundamental(&self, u: f64, tau: f64) -> f64 {
        let alpha = 0.5 * self.fundamental.q;
        let z = u * u / (4.0 * tau);
        if z < 1.0 {
            // P(α, z) |u|^{-q} through its power series.
            let mut term = 1.0 / gamma(alpha + 1.0);
            let mut sum = term;
            for k in 1..60 {
                term *= z / (alpha + k as f64);
                sum += term;
            }
            self.fundamental.a * (4.0 * tau).powf(-alpha) * (-z).exp() * sum
        } else {
            self.fundamental.radial(u.abs()) * (1.0 - gamma_ur(alpha, z))
        }
    }

    /// Regular part with truncation time chosen from the distances of `x`
    /// and `y` to the boundary.
    pub fn regular(&self, x: f64, y: f64) -> f64 {
        let len = self.b - self.a;
        let d = (x - self.a).min(self.b - x).min(y - self.a).min(self.b - y).max(1e-12 * len);
        let tau = d * d / 60.0;
        let kmax = ((len / std::f64::consts::PI) * (40.0 / tau).sqrt()).ceil() as usize + 1;
        let mut series = 0.0;
        for k in 1..=kmax {
            let w = std::f64::consts::PI * k as f64 / len;
            let lam = w * w;
            let phi = |v: f64| (w * (v - self.a)).sin();
            series += lam.powf(-self.s) * gamma_ur(self.s, lam * tau) * phi(x) * phi(y);
        }
        series *= 2.0 / len;
        self.truncated_fundamental(x - y, tau) - series
    }
}

/// Sampled Green function, regular part and Robin function of a domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenTable {
    pub domain: DomainSpec,
    pub kind: OperatorKind,
    pub method: String,
    pub s: f64,
    pub spacing: f64,
    pub constants: ConstantSet,
    pub samples: Vec<Vec<f64>>,
    pub nodes: Vec<Vec<f64>>,
    /// `green[k][j] = G(x_j, ξ_k)`; infinite at `x_j = ξ_k`.
    pub green: Vec<Vec<f64>>,
    pub regular: Vec<Vec<f64>>,
    pub robin: Vec<f64>,
}

/// Discrete unit-mass hat of half-width `2h` centred at `xi`.
pub fn mollified_delta(grid: &Grid, xi: &[f64]) -> Vec<f64> {
    let w = grid.weights();
    let k0 = grid.nearest(xi);
    let h = match grid {
        Grid::Line(g) => {
            let k = k0.clamp(1, g.len() - 2);
            0.5 * (g.nodes[k + 1] - g.nodes[k - 1])
        }
        Grid::Plane(_) => grid.spacing(),
    };
    let width = 2.0 * h;
    let mut f: Vec<f64> = (0..grid.len())
        .map(|k| {
            let r = dist(&grid.point(k), xi);
            (1.0 - r / width).max(0.0)
        })
        .collect();
    let mass: f64 = f.iter().zip(&w).map(|(a, b)| a * b).sum();
    f.iter_mut().for_each(|v| *v /= mass);
    f
}

/// Numerical Green function: the solution with a mollified delta source.
pub fn green_numeric(op: &DiscreteOperator, xi: &[f64]) -> Result<Vec<f64>> {
    let domain = op
        .domain
        .as_ref()
        .ok_or_else(|| Error::Capability("Green functions need a bounded domain".into()))?;
    let h = op.grid().spacing().max(local_spacing(op.grid(), xi));
    if domain.boundary_distance(xi) < 4.0 * h {
        return Err(Error::Resolution(format!(
            "ξ = {xi:?} lies within four grid cells of the boundary"
        )));
    }
    op.solve(&mollified_delta(op.grid(), xi))
}

fn local_spacing(grid: &Grid, xi: &[f64]) -> f64 {
    match grid {
        Grid::Line(g) => {
            let k = g.nearest(xi[0]).clamp(1, g.len() - 2);
            (g.nodes[k + 1] - g.nodes[k]).max(g.nodes[k] - g.nodes[k - 1])
        }
        Grid::Plane(_) => grid.spacing(),
    }
}

/// Fundamental solution convolved with the mollifier of [`mollified_delta`]
/// (one dimension), evaluated at `x`.
fn mollified_fundamental_line(f: &Fundamental, xi: f64, width: f64, x: f64) -> Result<f64> {
    let hat = |z: f64| (1.0 - (z - xi).abs() / width).max(0.0) / width;
    let mut breaks = vec![xi - width, xi, xi + width];
    if x > xi - width && x < xi + width && x != xi {
        breaks.push(x);
    }
    breaks.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        total += tanh_sinh(
            |z, da, db| {
                let r = if (z - x).abs() < 1e-300 {
                    da.min(db)
                } else if (lo - x).abs() < 1e-15 * width.max(1.0) {
                    da
                } else if (hi - x).abs() < 1e-15 * width.max(1.0) {
                    db
                } else {
                    (z - x).abs()
                };
                f.radial(r) * hat(z)
            },
            lo,
            hi,
            Tolerance::new(1e-14, 1e-11),
        )?
        .value;
    }
    Ok(total)
}

/// Regular part `H(·, ξ)` on the grid of `op`.
///
/// Restricted line operators solve the exterior problem with data `Γ(· - ξ)`;
/// spectral line operators use the heat-truncated eigen-series; other
/// operators subtract the mollified numerical Green function from the
/// mollified fundamental solution.
pub fn regular_part(op: &DiscreteOperator, xi: &[f64], consts: &ConstantSet) -> Result<Vec<f64>> {
    let domain = op
        .domain
        .as_ref()
        .ok_or_else(|| Error::Capability("regular parts need a bounded domain".into()))?;
    if !domain.contains(xi) {
        return Err(Error::Domain(format!("ξ = {xi:?} is not inside the domain")));
    }
    domain.check_region(xi)?;
    let f = Fundamental::new(consts);
    let grid = op.grid();
    match (op.kind, grid) {
        (OperatorKind::Restricted, Grid::Line(_)) => {
            let x0 = xi[0];
            let data = move |z: f64| f.radial((z - x0).abs());
            op.solve_exterior(&vec![0.0; grid.len()], &data)
        }
        (OperatorKind::Spectral, Grid::Line(g)) => {
            let (a, b) = domain.interval_bounds().expect("line domain");
            let heat = HeatTruncatedInterval::new(consts, a, b);
            Ok(g.nodes
                .par_iter()
                .map(|&x| if x <= a || x >= b { f.radial((x - xi[0]).abs()) } else { heat.regular(x, xi[0]) })
                .collect())
        }
        (_, Grid::Line(g)) => {
            let gm = green_numeric(op, xi)?;
            let k = g.nearest(xi[0]).clamp(1, g.len() - 2);
            let width = g.nodes[k + 1] - g.nodes[k - 1];
            g.nodes
                .iter()
                .zip(&gm)
                .map(|(&x, gv)| Ok(mollified_fundamental_line(&f, xi[0], width, x)? - gv))
                .collect()
        }
        (_, Grid::Plane(_)) => {
            let gm = green_numeric(op, xi)?;
            Ok((0..grid.len())
                .map(|k| {
                    let p = grid.point(k);
                    let r = dist(&p, xi);
                    if r == 0.0 {
                        f64::NAN
                    } else {
                        f.radial(r) - gm[k]
                    }
                })
                .collect())
        }
    }
}

/// Robin function `H(ξ, ξ)` from the regular part on the grid of `op`.
pub fn robin(op: &DiscreteOperator, xi: &[f64], consts: &ConstantSet) -> Result<f64> {
    let h = regular_part(op, xi, consts)?;
    robin_from_field(op.grid(), &h, xi, op.kind)
}

fn robin_from_field(grid: &Grid, h: &[f64], xi: &[f64], kind: OperatorKind) -> Result<f64> {
    match grid {
        Grid::Line(g) => {
            let k = g.nearest(xi[0]);
            if (g.nodes[k] - xi[0]).abs() <= 1e-12 * (1.0 + xi[0].abs()) {
                let _ = kind;
                return Ok(h[k]);
            }
            Ok(g.interpolate(h, xi[0]))
        }
        Grid::Plane(p) => {
            // Extrapolate ring averages at 2h, 4h, 6h to the centre.
            let step = p.spacing[0];
            let ring = |radius: f64| -> f64 {
                let m = 16;
                (0..m)
                    .map(|j| {
                        let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                        p.interpolate(h, &[xi[0] + radius * th.cos(), xi[1] + radius * th.sin()])
                    })
                    .sum::<f64>()
                    / m as f64
            };
            let (r1, r2, r3) = (ring(2.0 * step), ring(4.0 * step), ring(6.0 * step));
            // Quadratic in the radius through (2,r1), (4,r2), (6,r3), evaluated at 0.
            Ok(3.0 * r1 - 3.0 * r2 + r3)
        }
    }
}

impl GreenTable {
    /// Table of a discrete operator at the sample points, built in parallel.
    pub fn from_operator(op: &DiscreteOperator, consts: &ConstantSet, samples: Vec<Vec<f64>>) -> Result<Self> {
        let domain = op
            .domain
            .clone()
            .ok_or_else(|| Error::Capability("tables need a bounded domain".into()))?;
        let f = Fundamental::new(consts);
        let grid = op.grid();
        let nodes: Vec<Vec<f64>> = (0..grid.len()).map(|k| grid.point(k)).collect();
        let fields: Vec<(Vec<f64>, Vec<f64>, f64)> = samples
            .par_iter()
            .map(|xi| {
                let h = regular_part(op, xi, consts)?;
                let r = robin_from_field(grid, &h, xi, op.kind)?;
                let g = nodes
                    .iter()
                    .zip(&h)
                    .map(|(x, hv)| {
                        let d = dist(x, xi);
                        if d == 0.0 {
                            f64::INFINITY
                        } else {
                            f.radial(d) - hv
                        }
                    })
                    .collect();
                Ok((g, h, r))
            })
            .collect::<Result<_>>()?;
        let method = match (op.kind, grid) {
            (OperatorKind::Restricted, Grid::Line(_)) => "exterior-data",
            (OperatorKind::Spectral, Grid::Line(_)) => "heat-truncated-series",
            _ => "mollified-delta",
        };
        let mut table = GreenTable {
            domain,
            kind: op.kind,
            method: method.into(),
            s: op.s,
            spacing: grid.spacing(),
            constants: consts.clone(),
            samples,
            nodes,
            green: Vec::new(),
            regular: Vec::new(),
            robin: Vec::new(),
        };
        for (g, h, r) in fields {
            table.green.push(g);
            table.regular.push(h);
            table.robin.push(r);
        }
        Ok(table)
    }

    /// Table sampled from a closed-form source.
    pub fn from_source(
        source: &dyn GreenSource,
        domain: DomainSpec,
        kind: OperatorKind,
        consts: &ConstantSet,
        samples: Vec<Vec<f64>>,
        nodes: Vec<Vec<f64>>,
    ) -> Self {
        let f = Fundamental::new(consts);
        let mut green = Vec::new();
        let mut regular = Vec::new();
        let mut robin = Vec::new();
        for xi in &samples {
            let h: Vec<f64> = nodes.iter().map(|x| source.regular(x, xi)).collect();
            green.push(
                nodes
                    .iter()
                    .zip(&h)
                    .map(|(x, hv)| {
                        let d = dist(x, xi);
                        if d == 0.0 {
                            f64::INFINITY
                        } else {
                            f.radial(d) - hv
                        }
                    })
                    .collect(),
            );
            regular.push(h);
            robin.push(source.robin(xi));
        }
        let spacing = nodes
            .windows(2)
            .map(|w| dist(&w[0], &w[1]))
            .fold(f64::INFINITY, f64::min);
        GreenTable {
            domain,
            kind,
            method: "closed-form".into(),
            s: consts.s,
            spacing,
            constants: consts.clone(),
            samples,
            nodes,
            green,
            regular,
            robin,
        }
    }

    /// Header record written next to the delimited rows.
    pub fn header(&self) -> serde_json::Value {
        serde_json::json!({
            "domain": self.domain,
            "kind": self.kind,
            "method": self.method,
            "s": self.s,
            "h": self.spacing,
            "constants": self.constants,
            "samples": self.samples,
            "robin": self.robin,
        })
    }

    /// Rows `(ξ coords, x coords, G, H)` with a single header row.
    pub fn write_rows<W: Write>(&self, out: W, preamble: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(p) = preamble {
            writeln!(out, "{p}")?;
        }
        let n = self.domain.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut head: Vec<String> = (0..n).map(|j| format!("xi{j}")).collect();
        head.extend((0..n).map(|j| format!("x{j}")));
        head.push("G".into());
        head.push("H".into());
        w.write_record(&head).map_err(csv_error)?;
        for (k, xi) in self.samples.iter().enumerate() {
            for (j, x) in self.nodes.iter().enumerate() {
                let mut rec: Vec<String> = xi.iter().chain(x).map(|v| format_float(*v)).collect();
                rec.push(format_float(self.green[k][j]));
                rec.push(format_float(self.regular[k][j]));
                w.write_record(&rec).map_err(csv_error)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Interpolating source over the sampled regular part (one dimension):
    /// splines in `x` for each sample, then across samples, symmetrized.
    pub fn interpolant(&self) -> Result<TableSource> {
        if self.domain.dim() != 1 {
            return Err(Error::Capability("table interpolation is one-dimensional".into()));
        }
        if self.samples.len() < 3 {
            return Err(Error::Resolution("table interpolation needs at least three samples".into()));
        }
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.sort_by(|&a, &b| self.samples[a][0].total_cmp(&self.samples[b][0]));
        let xs: Vec<f64> = self.nodes.iter().map(|p| p[0]).collect();
        let splines = order
            .iter()
            .map(|&k| CubicSpline::new(xs.clone(), self.regular[k].clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(TableSource {
            domain: self.domain.clone(),
            sample_x: order.iter().map(|&k| self.samples[k][0]).collect(),
            splines,
            fundamental: Fundamental::new(&self.constants),
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Float formatting with 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Spline interpolant of a one-dimensional [`GreenTable`].
#[derive(Debug, Clone)]
pub struct TableSource {
    domain: DomainSpec,
    sample_x: Vec<f64>,
    splines: Vec<CubicSpline>,
    fundamental: Fundamental,
}

impl TableSource {
    fn one_sided(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let mut vals = Vec::with_capacity(self.splines.len());
        let mut ders = Vec::with_capacity(self.splines.len());
        for sp in &self.splines {
            let (v, d) = sp.eval_with_derivative(x);
            vals.push(v);
            ders.push(d);
        }
        let across = CubicSpline::new(self.sample_x.clone(), vals).expect("sorted samples");
        let across_d = CubicSpline::new(self.sample_x.clone(), ders).expect("sorted samples");
        let (v, dy) = across.eval_with_derivative(y);
        (v, across_d.eval(y), dy)
    }
}

impl GreenSource for TableSource {
    fn dim(&self) -> usize {
        1
    }

    fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.domain.boundary_distance(x)
    }

    fn regular(&self, x: &[f64], y: &[f64]) -> f64 {
        0.5 * (self.one_sided(x[0], y[0]).0 + self.one_sided(y[0], x[0]).0)
    }

    fn green(&self, x: &[f64], y: &[f64]) -> f64 {
        self.fundamental.value(x, y) - self.regular(x, y)
    }

    fn regular_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (_, ax, ay) = self.one_sided(x[0], y[0]);
        let (_, by, bx) = self.one_sided(y[0], x[0]);
        (vec![0.5 * (ax + bx)], vec![0.5 * (ay + by)])
    }

    fn green_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        green_gradient_from_regular(self, &self.fundamental, x, y)
    }
}

/// Constant regular part and Green function on a box; decouples the bubbles.
#[derive(Debug, Clone)]
pub struct UniformToy {
    pub domain: DomainSpec,
    pub h: f64,
    pub g: f64,
}

impl GreenSource for UniformToy {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.domain.boundary_distance(x)
    }

    fn regular(&self, _: &[f64], _: &[f64]) -> f64 {
        self.h
    }

    fn green(&self, _: &[f64], _: &[f64]) -> f64 {
        self.g
    }

    fn regular_gradient(&self, x: &[f64], _: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; x.len()], vec![0.0; x.len()])
    }

    fn green_gradient(&self, x: &[f64], _: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; x.len()], vec![0.0; x.len()])
    }
}

type PairFn = Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Source defined by user closures; gradients by central differences.
pub struct Manufactured {
    pub domain: DomainSpec,
    pub regular: PairFn,
    pub green: PairFn,
}

impl GreenSource for Manufactured {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.domain.boundary_distance(x)
    }

    fn regular(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.regular)(x, y)
    }

    fn green(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.green)(x, y)
    }

    fn green_gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let step = 1e-6;
        let n = x.len();
        let part = |first: bool| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let eval = |e: f64| {
                        let (mut p, mut q) = (x.to_vec(), y.to_vec());
                        if first {
                            p[j] += e;
                        } else {
                            q[j] += e;
                        }
                        (self.green)(&p, &q)
                    };
                    (eval(step) - eval(-step)) / (2.0 * step)
                })
                .collect()
        };
        (part(true), part(false))
    }
}

/// Closed-form source for a domain where one exists: restricted balls and
/// half-spaces, spectral intervals and half-spaces.
pub fn closed_form_source(
    domain: &DomainSpec,
    kind: OperatorKind,
    consts: &ConstantSet,
) -> Result<Box<dyn GreenSource>> {
    match (kind, domain) {
        (OperatorKind::Restricted, DomainSpec::Ball { center, radius }) => {
            Ok(Box::new(BallRestricted::new(consts, center.clone(), *radius)))
        }
        (OperatorKind::Restricted, DomainSpec::Interval { a, b }) => Ok(Box::new(BallRestricted::new(
            consts,
            vec![0.5 * (a + b)],
            0.5 * (b - a),
        ))),
        (OperatorKind::Spectral, DomainSpec::Interval { a, b }) => Ok(Box::new(IntervalSpectral::new(consts, *a, *b)?)),
        (OperatorKind::Spectral, DomainSpec::Ball { center, radius }) if center.len() == 1 => Ok(Box::new(
            IntervalSpectral::new(consts, center[0] - radius, center[0] + radius)?,
        )),
        _ => Err(Error::Capability(format!(
            "no closed-form Green function for {kind:?} on {domain:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GradedMeshSpec, LineGrid};
    use crate::operators::build_operator;
    use crate::params::FracParams;
    use std::sync::OnceLock;

    fn desk() -> &'static ConstantSet {
        static C: OnceLock<ConstantSet> = OnceLock::new();
        C.get_or_init(|| ConstantSet::resolve(&FracParams::critical(1, 0.3).unwrap(), 1e-10).unwrap())
    }

    #[test]
    fn ball_robin_at_centre_is_product_of_constants() {
        let c = desk();
        let ball = BallRestricted::new(c, vec![0.0], 1.0);
        let r = ball.robin(&[0.0]);
        assert!((r / (c.a * c.d_half * c.iota) - 1.0).abs() < 1e-12);
        for xi in [0.2f64, 0.5, 0.8] {
            let expect = c.a * c.d_half * c.iota * (1.0 - xi * xi).powf(-c.decay());
            assert!((ball.robin(&[xi]) / expect - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_gradients_match_differences() {
        let c = desk();
        let ball = BallRestricted::new(c, vec![0.0], 1.0);
        let (x, y) = ([0.31], [-0.42]);
        let (gx, gy) = ball.regular_gradient(&x, &y);
        let e = 1e-6;
        let fx = (ball.regular(&[x[0] + e], &y) - ball.regular(&[x[0] - e], &y)) / (2.0 * e);
        let fy = (ball.regular(&x, &[y[0] + e]) - ball.regular(&x, &[y[0] - e])) / (2.0 * e);
        assert!((gx[0] / fx - 1.0).abs() < 1e-6, "{gx:?} {fx}");
        assert!((gy[0] / fy - 1.0).abs() < 1e-6, "{gy:?} {fy}");
    }

    #[test]
    fn image_series_vanishes_on_boundary_and_matches_heat_series() {
        let c = desk();
        let img = IntervalSpectral::new(c, 0.0, 1.0).unwrap();
        // G(x, y) -> 0 as x -> boundary
        let g = img.green(&[1e-9], &[0.4]);
        assert!(g.abs() < 1e-3, "{g}");
        let heat = HeatTruncatedInterval::new(c, 0.0, 1.0);
        for (x, y) in [(0.3, 0.3), (0.1, 0.6), (0.05, 0.05)] {
            let a = img.regular(&[x], &[y]);
            let b = heat.regular(x, y);
            assert!((a / b - 1.0).abs() < 1e-8, "{x} {y}: {a} {b}");
        }
        let (gx, gy) = img.regular_gradient(&[0.3], &[0.55]);
        let e = 1e-6;
        let fx = (img.regular(&[0.3 + e], &[0.55]) - img.regular(&[0.3 - e], &[0.55])) / (2.0 * e);
        let fy = (img.regular(&[0.3], &[0.55 + e]) - img.regular(&[0.3], &[0.55 - e])) / (2.0 * e);
        assert!((gx[0] - fx).abs() < 1e-7 * fx.abs().max(1.0));
        assert!((gy[0] - fy).abs() < 1e-7 * fy.abs().max(1.0));
    }

    #[test]
    fn half_space_green_is_bounded_by_fundamental() {
        let c = desk();
        let k = KernelK::new(1, c.s);
        for (a, b) in [(0.5, 1.0), (2.0, 0.1), (0.3, 0.31)] {
            let g = half_space_green(c, &k, &[a], &[b]).unwrap();
            let gam = gamma_fundamental(c, &[a], &[b]).unwrap();
            assert!(g >= 0.0 && g <= gam, "{a} {b}: {g} {gam}");
        }
        let near = half_space_green(c, &k, &[1.0], &[1e-8]).unwrap();
        assert!(near < 1e-2, "{near}");
        let r1 = half_space_robin(c, 1.0).unwrap();
        let r2 = half_space_robin(c, 2.0).unwrap();
        assert!((r2 / r1 - 2f64.powf(-c.decay())).abs() < 1e-15);
    }

    #[test]
    fn exterior_data_regular_part_matches_ball_formula() {
        let c = desk();
        let p = FracParams::critical(1, 0.3).unwrap();
        let dom = DomainSpec::Interval { a: -1.0, b: 1.0 };
        let nodes = GradedMeshSpec::new(-1.0, 1.0, 2e-4, 0.06, 0.02)
            .with_anchor(0.3, 2e-3)
            .build()
            .unwrap();
        let grid = Grid::Line(LineGrid::new(nodes, true).unwrap());
        let op = build_operator(&dom, &p, grid, OperatorKind::Restricted).unwrap();
        let r = robin(&op, &[0.3], c).unwrap();
        let exact = BallRestricted::new(c, vec![0.0], 1.0).robin(&[0.3]);
        assert!((r / exact - 1.0).abs() < 5e-3, "{r} {exact}");
    }

    #[test]
    fn kelvin_inversion_identities() {
        let (x, y) = ([0.3, -1.2], [2.0, 0.7]);
        let (xs, ys) = (inversion(&x).unwrap(), inversion(&y).unwrap());
        let lhs = dist(&xs, &ys) * dist(&x, &[0.0, 0.0]) * dist(&y, &[0.0, 0.0]);
        assert!((lhs - dist(&x, &y)).abs() < 1e-14);
        let u = |p: &[f64]| (p[0] + 2.0 * p[1]).exp();
        let once = |p: &[f64]| kelvin_transform(&u, p, 0.3).unwrap();
        let twice = kelvin_transform(&once, &x, 0.3).unwrap();
        assert!((twice / u(&x) - 1.0).abs() < 1e-13);
        assert!(inversion(&[0.0, 0.0]).is_err());
    }
}
