//! Dimensional constants of the bubble family, the bubble profiles and their
//! kernel functions, and the s-harmonic (Poisson) extension.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelK;
use crate::params::{hypersingular_constant, sphere_area, Criticality, FracParams};
use crate::quad::{exp_sinh, tanh_sinh, Tolerance};

/// Constants attached to a pair `(n, s)`. Independent of `ε` and of the sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ConstantRecord", try_from = "ConstantRecord")]
pub struct ConstantSet {
    pub n: usize,
    pub s: f64,
    pub tol: f64,
    /// Normalization of the hypersingular integral.
    pub kernel_c: f64,
    /// Bubble amplitude: `w(x) = b (1 + |x|^2)^{-(n-2s)/2}` solves the critical equation.
    pub b: f64,
    /// Fundamental-solution constant: `Γ(x) = a |x|^{2s-n}`.
    pub a: f64,
    /// `∫ w^{p*}`.
    pub alpha: f64,
    /// `ω / α^2`; links rates and scaled rates.
    pub beta: f64,
    /// `∫ w^{p*+1} / (p*+1)`.
    pub omega: f64,
    /// Per-bubble `ε`-coefficient of the energy for the supercritical sign.
    pub gamma: f64,
    /// Energy of one bubble, `(s/n) ∫ w^{p*+1}`.
    pub energy_c: f64,
    /// `∫_0^1 (1-c)^{(n-2)/2} c^{-s} dc`.
    pub iota: f64,
    /// Normalization of the half-space kernel: `d K(r, t) -> 1` as `t -> 0`.
    pub d_half: f64,
    pub residuals: Residuals,
}

/// Achieved residuals or error estimates of each oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `|b L - b^{p*}| / b^{p*}` at the test point.
    pub b: f64,
    pub a: f64,
    pub alpha: f64,
    pub omega: f64,
    pub gamma: f64,
    pub energy_c: f64,
    pub iota: f64,
    /// Relative disagreement of the two boundary-limit extrapolations.
    pub d_half: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConstantValues {
    kernel_c: f64,
    b: f64,
    a: f64,
    alpha: f64,
    beta: f64,
    omega: f64,
    gamma: f64,
    energy_c: f64,
    iota: f64,
    d_half: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantRecord {
    n: usize,
    s: f64,
    tol: f64,
    values: ConstantValues,
    residuals: Residuals,
}

impl From<ConstantSet> for ConstantRecord {
    fn from(c: ConstantSet) -> Self {
        ConstantRecord {
            n: c.n,
            s: c.s,
            tol: c.tol,
            values: ConstantValues {
                kernel_c: c.kernel_c,
                b: c.b,
                a: c.a,
                alpha: c.alpha,
                beta: c.beta,
                omega: c.omega,
                gamma: c.gamma,
                energy_c: c.energy_c,
                iota: c.iota,
                d_half: c.d_half,
            },
            residuals: c.residuals,
        }
    }
}

impl TryFrom<ConstantRecord> for ConstantSet {
    type Error = String;

    fn try_from(r: ConstantRecord) -> std::result::Result<Self, String> {
        let v = r.values;
        let set = ConstantSet {
            n: r.n,
            s: r.s,
            tol: r.tol,
            kernel_c: v.kernel_c,
            b: v.b,
            a: v.a,
            alpha: v.alpha,
            beta: v.beta,
            omega: v.omega,
            gamma: v.gamma,
            energy_c: v.energy_c,
            iota: v.iota,
            d_half: v.d_half,
            residuals: r.residuals,
        };
        set.check().map_err(|e| e.to_string())?;
        Ok(set)
    }
}

impl ConstantSet {
    /// Resolve every constant for `(n, s)` from its oracle.
    pub fn resolve(params: &FracParams, tol: f64) -> Result<Self> {
        resolve_constants(params, tol)
    }

    pub fn decay(&self) -> f64 {
        self.n as f64 - 2.0 * self.s
    }

    pub fn critical_exponent(&self) -> f64 {
        (self.n as f64 + 2.0 * self.s) / self.decay()
    }

    /// `ε`-coefficient `γ` of the `m`-bubble energy for the given sign.
    pub fn gamma_for(&self, m: usize, sign: Criticality) -> f64 {
        sign.sign() * m as f64 * self.gamma
    }

    /// Scaled rate `λ` for a rate `Λ`: `λ = (β Λ^2)^{1/(n-2s)}`.
    pub fn scaled_rate(&self, big_lambda: f64) -> f64 {
        (self.beta * big_lambda * big_lambda).powf(1.0 / self.decay())
    }

    /// Inverse of [`Self::scaled_rate`].
    pub fn rate_from_scaled(&self, lambda: f64) -> f64 {
        (lambda.powf(self.decay()) / self.beta).sqrt()
    }

    /// Fundamental solution `a |x - y|^{2s-n}`.
    pub fn fundamental(&self, dist: f64) -> f64 {
        self.a * dist.powf(-self.decay())
    }

    /// Fail with a configuration error unless the set belongs to `params`.
    pub fn ensure_matches(&self, params: &FracParams) -> Result<()> {
        if self.n != params.n || (self.s - params.s).abs() > 1e-15 {
            return Err(Error::Config(format!(
                "constants resolved for (n = {}, s = {}) but problem has (n = {}, s = {})",
                self.n, self.s, params.n, params.s
            )));
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        let positive = [
            ("b", self.b),
            ("a", self.a),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("omega", self.omega),
            ("energy_c", self.energy_c),
            ("iota", self.iota),
            ("d_half", self.d_half),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::numeric(format!("constant {name} = {v} is not positive"), v));
            }
        }
        if !self.gamma.is_finite() {
            return Err(Error::numeric("constant gamma is not finite", self.gamma));
        }
        Ok(())
    }
}

/// `∫_0^∞ ρ^k e^{-ρ^2/2} dρ` by quadrature.
fn gaussian_moment(k: f64, tol: f64) -> Result<(f64, f64)> {
    let e = exp_sinh(|_, r| r.powf(k) * (-0.5 * r * r).exp(), 0.0, Tolerance::rel(tol))?;
    Ok((e.value, e.error / e.value.abs()))
}

/// `∫_{R^n} w^k` and `∫_{R^n} w^k log w` for the unit bubble, through
/// `ρ = tan θ`, which turns the radial integrand into
/// `sin^{n-1} θ cos^{k(n-2s)-n-1} θ` times powers of `b`.
fn bubble_moments(n: usize, q: f64, b: f64, k: f64, tol: f64) -> Result<(f64, f64, f64)> {
    let area = sphere_area(n);
    let e = n as f64 - 1.0;
    let c = k * q - n as f64 - 1.0;
    let plain = tanh_sinh(
        |_, da, db| da.sin().powf(e) * db.sin().powf(c),
        0.0,
        FRAC_PI_2,
        Tolerance::rel(tol),
    )?;
    let logged = tanh_sinh(
        |_, da, db| {
            let cos = db.sin();
            da.sin().powf(e) * cos.powf(c) * (b.ln() + q * cos.ln())
        },
        0.0,
        FRAC_PI_2,
        Tolerance::rel(tol),
    )?;
    let bk = b.powf(k);
    Ok((
        area * bk * plain.value,
        area * bk * logged.value,
        plain.error / plain.value.abs(),
    ))
}

/// `(-Δ)^s` of the unit profile `(1 + |x|^2)^{-(n-2s)/2}` at the origin.
fn profile_operator_at_origin(n: usize, s: f64, tol: f64) -> Result<(f64, f64)> {
    let q = n as f64 - 2.0 * s;
    let e = exp_sinh(
        |r, _| {
            if r < 1e-6 {
                // 1 - (1 + r^2)^{-q/2} = (q/2) r^2 (1 + O(r^2))
                0.5 * q * r.powf(1.0 - 2.0 * s)
            } else {
                -(-0.5 * q * (r * r).ln_1p()).exp_m1() * r.powf(-1.0 - 2.0 * s)
            }
        },
        0.0,
        Tolerance::rel(tol),
    )?;
    let c = hypersingular_constant(n, s) * sphere_area(n);
    Ok((c * e.value, e.error / e.value.abs()))
}

/// Extrapolate `K(x)` to `x -> ∞` from the samples `x0 2^k`, eliminating the
/// known correction exponents `s, 1, 1+s, 2` in `1/x`.
fn kernel_limit(kernel: &KernelK, x0: f64) -> f64 {
    let s = kernel.s;
    let exps = [s, 1.0, 1.0 + s, 2.0];
    let npts = exps.len() + 1;
    let mut mat = nalgebra::DMatrix::<f64>::zeros(npts, npts);
    let mut rhs = nalgebra::DVector::<f64>::zeros(npts);
    for k in 0..npts {
        let x = x0 * 2f64.powi(k as i32);
        mat[(k, 0)] = 1.0;
        for (j, e) in exps.iter().enumerate() {
            mat[(k, j + 1)] = (x0 / x).powf(*e);
        }
        rhs[k] = kernel.k_of_ratio(x);
    }
    match mat.lu().solve(&rhs) {
        Some(sol) => sol[0],
        None => f64::NAN,
    }
}

/// Resolve all constants for `(n, s)` by their oracles at quadrature tolerance `tol`.
pub fn resolve_constants(params: &FracParams, tol: f64) -> Result<ConstantSet> {
    params.validate()?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(format!("tolerance {tol} must lie in (0, 1)")));
    }
    let qtol = tol.max(1e-14);
    let n = params.n;
    let s = params.s;
    let q = params.decay();
    let p = params.critical_exponent();
    let nf = n as f64;

    // b: bisection on the residual b L - b^p of the bubble equation at the origin.
    let (l0, l0_err) = profile_operator_at_origin(n, s, qtol)?;
    let residual = |b: f64| b * l0 - b.powf(p);
    let mut lo = 1e-8;
    let mut hi = 1.0;
    while residual(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::numeric("bracketing the bubble amplitude", residual(hi)));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    let b = 0.5 * (lo + hi);
    let b_res = (residual(b) / b.powf(p)).abs() + l0_err;

    // a: the potential of a Gaussian equals its inverse-fractional-Laplacian at the origin.
    let (num, e1) = gaussian_moment(nf - 1.0 - 2.0 * s, qtol)?;
    let (den, e2) = gaussian_moment(2.0 * s - 1.0, qtol)?;
    let a = (2.0 * PI).powf(-nf / 2.0) * num / den;
    let a_res = e1 + e2;

    let (alpha, _, alpha_err) = bubble_moments(n, q, b, p, qtol)?;
    let (big_a, wlog, a_err) = bubble_moments(n, q, b, p + 1.0, qtol)?;
    let omega = big_a / (p + 1.0);
    let beta = omega / (alpha * alpha);
    let gamma = omega / (p + 1.0) + 0.5 * omega * beta.ln() - wlog / (p + 1.0);
    let energy_c = (s / nf) * big_a;
    let energy_res = ((0.5 - 1.0 / (p + 1.0)) * big_a - energy_c).abs() / energy_c;

    let m = (nf - 2.0) / 2.0;
    let iota_est = tanh_sinh(
        |_, da, db| db.powf(m) * da.powf(-s),
        0.0,
        1.0,
        Tolerance::rel(qtol),
    )?;
    let iota = iota_est.value;

    let kernel = KernelK::new(n, s);
    // K depends on (r, t) through r/t only; the two ladders use different ratios.
    let at_r1 = 1.0 / kernel_limit(&kernel, 1.0 / 1e-3);
    let at_r4 = 1.0 / kernel_limit(&kernel, 4.0 / 2.7e-3);
    let d_res = (at_r1 - at_r4).abs() / at_r1;
    if !(d_res < 1e-4) {
        return Err(Error::numeric("boundary limit of the half-space kernel", d_res));
    }

    let set = ConstantSet {
        n,
        s,
        tol,
        kernel_c: hypersingular_constant(n, s),
        b,
        a,
        alpha,
        beta,
        omega,
        gamma,
        energy_c,
        iota,
        d_half: at_r1,
        residuals: Residuals {
            b: b_res,
            a: a_res,
            alpha: alpha_err,
            omega: a_err,
            gamma: a_err,
            energy_c: energy_res,
            iota: iota_est.error / iota,
            d_half: d_res,
        },
    };
    set.check()?;
    Ok(set)
}

/// Center and rate of one bubble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub lambda: f64,
    pub xi: Vec<f64>,
}

impl BubbleParams {
    pub fn new(lambda: f64, xi: Vec<f64>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("bubble rate {lambda} must be positive")));
        }
        Ok(BubbleParams { lambda, xi })
    }
}

/// A bubble `w_{λ,ξ}` with its constants unpacked for fast evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Bubble<const N: usize> {
    pub b: f64,
    pub q: f64,
    pub lambda: f64,
    pub xi: [f64; N],
}

impl<const N: usize> Bubble<N> {
    pub fn new(consts: &ConstantSet, lambda: f64, xi: [f64; N]) -> Self {
        Bubble {
            b: consts.b,
            q: consts.decay(),
            lambda,
            xi,
        }
    }

    fn dist2(&self, x: &[f64; N]) -> f64 {
        x.iter().zip(&self.xi).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn value(&self, x: &[f64; N]) -> f64 {
        let l = self.lambda;
        self.b * (l / (l * l + self.dist2(x))).powf(0.5 * self.q)
    }

    /// Dilation kernel `(n-2s)/2 w + (x - ξ)·∇w`.
    pub fn dilation_kernel(&self, x: &[f64; N]) -> f64 {
        let r2 = self.dist2(x);
        let l2 = self.lambda * self.lambda;
        0.5 * self.q * self.value(x) * (l2 - r2) / (l2 + r2)
    }

    /// Translation kernel `∂w/∂ξ_j`.
    pub fn translation_kernel(&self, j: usize, x: &[f64; N]) -> f64 {
        let r2 = self.dist2(x);
        let l2 = self.lambda * self.lambda;
        self.q * self.value(x) * (x[j] - self.xi[j]) / (l2 + r2)
    }

    /// `∂w/∂λ = -(dilation kernel) / λ`.
    pub fn rate_derivative(&self, x: &[f64; N]) -> f64 {
        -self.dilation_kernel(x) / self.lambda
    }
}

fn check_point(consts: &ConstantSet, params: &FracParams, bp: &BubbleParams, x: &[f64]) -> Result<()> {
    consts.ensure_matches(params)?;
    if bp.xi.len() != params.n || x.len() != params.n {
        return Err(Error::Config(format!(
            "points must have {} coordinates",
            params.n
        )));
    }
    if !(bp.lambda > 0.0) {
        return Err(Error::Domain(format!("bubble rate {} must be positive", bp.lambda)));
    }
    Ok(())
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `w_{λ,ξ}(x) = b (λ / (λ^2 + |x-ξ|^2))^{(n-2s)/2}`.
pub fn bubble_value(params: &FracParams, consts: &ConstantSet, bp: &BubbleParams, x: &[f64]) -> Result<f64> {
    check_point(consts, params, bp, x)?;
    let l = bp.lambda;
    Ok(consts.b * (l / (l * l + dist2(x, &bp.xi))).powf(0.5 * consts.decay()))
}

/// Kernel functions of the linearized operator: `j = 0` is the dilation kernel
/// `(n-2s)/2 w + (x-ξ)·∇w`, `j >= 1` the translation kernel `∂w/∂ξ_j`.
pub fn kernel_functions(
    params: &FracParams,
    consts: &ConstantSet,
    bp: &BubbleParams,
    j: usize,
    x: &[f64],
) -> Result<f64> {
    check_point(consts, params, bp, x)?;
    if j > params.n {
        return Err(Error::Config(format!("kernel index {j} exceeds dimension {}", params.n)));
    }
    let w = bubble_value(params, consts, bp, x)?;
    let r2 = dist2(x, &bp.xi);
    let l2 = bp.lambda * bp.lambda;
    let q = consts.decay();
    Ok(if j == 0 {
        0.5 * q * w * (l2 - r2) / (l2 + r2)
    } else {
        q * w * (x[j - 1] - bp.xi[j - 1]) / (l2 + r2)
    })
}

/// A field on `R^n` together with the information needed to bound the
/// contribution of the far field to a convolution.
pub struct TailField<'a> {
    pub f: &'a dyn Fn(&[f64]) -> f64,
    /// Bound on `|f|` outside the truncation radius.
    pub tail_bound: f64,
}

/// Result of [`poisson_extension`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionValue {
    pub value: f64,
    /// Upper bound on the neglected far-field contribution.
    pub truncation_bound: f64,
    /// Set when the truncation bound exceeds the requested tolerance.
    pub warning: bool,
}

/// Normalization of the Poisson kernel `y^{2s} / (|x|^2 + y^2)^{(n+2s)/2}`.
pub fn poisson_normalization(n: usize, s: f64) -> f64 {
    use statrs::function::gamma::gamma;
    gamma((n as f64 + 2.0 * s) / 2.0) / (PI.powf(n as f64 / 2.0) * gamma(s))
}

/// Truncation radius `R` with `(1+R)^{2s-n} < tol/10`.
pub fn tail_radius(n: usize, s: f64, tol: f64) -> f64 {
    (tol / 10.0).powf(-1.0 / (n as f64 - 2.0 * s)) - 1.0
}

/// s-harmonic extension `U(x, y)` of `u` by quadrature of the Poisson
/// convolution over the ball of radius `tail_radius` around `x`.
pub fn poisson_extension(
    params: &FracParams,
    u: &TailField<'_>,
    x: &[f64],
    y: f64,
    tol: f64,
) -> Result<ExtensionValue> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("extension height {y} must be positive")));
    }
    if x.len() != params.n {
        return Err(Error::Config(format!("point must have {} coordinates", params.n)));
    }
    let (n, s) = (params.n, params.s);
    let norm = poisson_normalization(n, s);
    let radius = tail_radius(n, s, tol).max(1e3 * y);
    // Radial profile of the kernel in units of y: P(ρ) = y^{-n} P1(ρ / y).
    let kernel = |rho: f64| norm * y.powf(2.0 * s) * (rho * rho + y * y).powf(-(n as f64 + 2.0 * s) / 2.0);
    let qtol = Tolerance::new(tol * 1e-3, tol * 1e-2);
    let value = match n {
        1 => {
            let x0 = x[0];
            let side = |sign: f64| -> Result<f64> {
                // ρ = y tan θ clusters nodes at the kernel scale.
                let tmax = (radius / y).atan();
                Ok(tanh_sinh(
                    |th, _, _| {
                        let rho = y * th.tan();
                        let jac = y / th.cos().powi(2);
                        kernel(rho) * (u.f)(&[x0 + sign * rho]) * jac
                    },
                    0.0,
                    tmax,
                    qtol,
                )?
                .value)
            };
            side(1.0)? + side(-1.0)?
        }
        2 => {
            let tmax = (radius / y).atan();
            let inner = |rho: f64| -> Result<f64> {
                Ok(crate::quad::adaptive(
                    |phi| (u.f)(&[x[0] + rho * phi.cos(), x[1] + rho * phi.sin()]),
                    0.0,
                    2.0 * PI,
                    qtol,
                )?
                .value)
            };
            let mut failure = None;
            let v = tanh_sinh(
                |th, _, _| {
                    let rho = y * th.tan();
                    let jac = y / th.cos().powi(2);
                    match inner(rho) {
                        Ok(v) => kernel(rho) * rho * v * jac,
                        Err(e) => {
                            failure = Some(e);
                            0.0
                        }
                    }
                },
                0.0,
                tmax,
                qtol,
            )?
            .value;
            if let Some(e) = failure {
                return Err(e);
            }
            v
        }
        _ => {
            return Err(Error::Capability(format!(
                "Poisson extension implemented for n <= 2, got n = {n}"
            )))
        }
    };
    // Kernel mass outside the radius, bounded by the pure power tail.
    let tail_mass = norm * sphere_area(n) * y.powf(2.0 * s) * radius.powf(-2.0 * s) / (2.0 * s);
    let truncation_bound = u.tail_bound * tail_mass;
    Ok(ExtensionValue {
        value,
        truncation_bound,
        warning: truncation_bound > tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta;
    use statrs::function::gamma::gamma;

    fn desk() -> (FracParams, ConstantSet) {
        let p = FracParams::critical(1, 0.3).unwrap();
        let c = resolve_constants(&p, 1e-12).unwrap();
        (p, c)
    }

    #[test]
    fn amplitude_solves_bubble_equation_in_closed_form() {
        // Independent oracle: b^{p-1} = 4^s Γ((n+2s)/2) / Γ((n-2s)/2).
        for &(n, s) in &[(1usize, 0.3), (1, 0.2), (2, 0.5), (3, 0.8)] {
            let p = FracParams::critical(n, s).unwrap();
            let c = resolve_constants(&p, 1e-12).unwrap();
            let nf = n as f64;
            let l = 4f64.powf(s) * gamma((nf + 2.0 * s) / 2.0) / gamma((nf - 2.0 * s) / 2.0);
            let b = l.powf(1.0 / (p.critical_exponent() - 1.0));
            assert!((c.b / b - 1.0).abs() < 1e-9, "n={n} s={s}: {} vs {b}", c.b);
            assert!(c.residuals.b < 1e-9);
        }
    }

    #[test]
    fn fundamental_constant_matches_gamma_ratio() {
        for &(n, s) in &[(1usize, 0.3), (2, 0.5), (3, 0.25)] {
            let p = FracParams::critical(n, s).unwrap();
            let c = resolve_constants(&p, 1e-12).unwrap();
            let nf = n as f64;
            let a = gamma(nf / 2.0 - s) / (4f64.powf(s) * PI.powf(nf / 2.0) * gamma(s));
            assert!((c.a / a - 1.0).abs() < 1e-11, "n={n}");
        }
    }

    #[test]
    fn desk_values_frozen() {
        let (_, c) = desk();
        let frozen = [
            (c.b, 0.7270898066828667),
            (c.a, 0.571216247620264),
            (c.alpha, 1.2728801215160979),
            (c.omega, 0.12767919892171495),
            (c.beta, 0.07880343359117191),
            (c.energy_c, 0.19151879838257244),
            (c.gamma, -0.06057550678683038),
            (c.iota, 2.505795576340679),
            (c.d_half, 0.25751810740024195),
        ];
        for (got, want) in frozen {
            assert!((got / want - 1.0).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn moments_match_beta_functions() {
        let (p, c) = desk();
        // ∫ w^{p*} = 2 b^p ∫_0^{π/2} cos^{2s-1} = b^p B(1/2, s)
        let exact = c.b.powf(p.critical_exponent()) * beta(0.5, p.s);
        assert!((c.alpha / exact - 1.0).abs() < 1e-11);
    }

    #[test]
    fn iota_matches_series_oracle() {
        // 1/B(x, y) = x y / (x + y) Π_k (1 + x y / (k (x + y + k)))
        let (p, c) = desk();
        let (x, y) = (1.0 - p.s, 0.5);
        let mut inv = x * y / (x + y);
        for k in 1..2_000_000 {
            let kf = k as f64;
            inv *= 1.0 + x * y / (kf * (x + y + kf));
        }
        assert!((c.iota * inv - 1.0).abs() < 1e-6);
    }

    #[test]
    fn half_space_constant_matches_reflection_formula() {
        for &(n, s) in &[(1usize, 0.3), (2, 0.6), (3, 0.45)] {
            let p = FracParams::critical(n, s).unwrap();
            let c = resolve_constants(&p, 1e-12).unwrap();
            let d = (PI * s).sin() / PI;
            assert!((c.d_half / d - 1.0).abs() < 1e-8, "n={n}: {} vs {d}", c.d_half);
        }
    }

    #[test]
    fn constant_set_json_round_trip() {
        let (_, c) = desk();
        let text = serde_json::to_string(&c).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["n", "s", "tol", "values", "residuals"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: ConstantSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bubble_examples() {
        let (p, c) = desk();
        let bp = BubbleParams::new(1.0, vec![0.0]).unwrap();
        assert_eq!(bubble_value(&p, &c, &bp, &[0.0]).unwrap(), c.b);
        let w1 = bubble_value(&p, &c, &bp, &[1.0]).unwrap();
        assert!((w1 - c.b * 2f64.powf(-0.2)).abs() < 1e-15);
        let bp = BubbleParams::new(0.25, vec![0.3]).unwrap();
        let peak = bubble_value(&p, &c, &bp, &[0.3]).unwrap();
        assert!((peak - 0.25f64.powf(-0.2) * c.b).abs() < 1e-14);
    }

    #[test]
    fn mismatched_constants_are_a_configuration_error() {
        let (_, c) = desk();
        let other = FracParams::critical(1, 0.4).unwrap();
        let bp = BubbleParams::new(1.0, vec![0.0]).unwrap();
        let err = bubble_value(&other, &c, &bp, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn kernel_functions_at_center() {
        let (p, c) = desk();
        let bp = BubbleParams::new(0.7, vec![0.2]).unwrap();
        let w = bubble_value(&p, &c, &bp, &[0.2]).unwrap();
        let z0 = kernel_functions(&p, &c, &bp, 0, &[0.2]).unwrap();
        assert!((z0 - 0.2 * w).abs() < 1e-15);
        assert_eq!(kernel_functions(&p, &c, &bp, 1, &[0.2]).unwrap(), 0.0);
    }

    #[test]
    fn dilation_kernel_is_rate_derivative_direction() {
        let (p, c) = desk();
        let lam = 0.8;
        let h = 1e-5;
        for &x in &[-2.0, -0.3, 0.1, 0.5, 4.0] {
            let at = |l: f64| bubble_value(&p, &c, &BubbleParams::new(l, vec![0.1]).unwrap(), &[x]).unwrap();
            let fd = (at(lam + h) - at(lam - h)) / (2.0 * h);
            let z0 = kernel_functions(&p, &c, &BubbleParams::new(lam, vec![0.1]).unwrap(), 0, &[x]).unwrap();
            // z0 = -λ ∂w/∂λ
            assert!((fd * (-lam) / z0 - 1.0).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn poisson_extension_of_constant_is_constant() {
        let (p, _) = desk();
        let one = |_: &[f64]| 1.0;
        let field = TailField {
            f: &one,
            tail_bound: 1.0,
        };
        for &y in &[0.1, 1.0, 5.0] {
            let v = poisson_extension(&p, &field, &[0.3], y, 1e-4).unwrap();
            assert!((v.value - 1.0).abs() < 1e-4, "y = {y}: {}", v.value);
            assert!(!v.warning);
        }
    }

    #[test]
    fn poisson_extension_boundary_trace_and_refinement() {
        let (p, c) = desk();
        let bp = BubbleParams::new(1.0, vec![0.0]).unwrap();
        let w = |x: &[f64]| bubble_value(&p, &c, &bp, x).unwrap();
        let field = TailField {
            f: &w,
            tail_bound: c.b * 1e-3,
        };
        let trace_error = |y: f64| {
            let v = poisson_extension(&p, &field, &[0.5], y, 1e-8).unwrap();
            (v.value / w(&[0.5]) - 1.0).abs()
        };
        let (e1, e2) = (trace_error(1e-4), trace_error(1e-8));
        assert!(e2 < e1 && e2 < 1e-3, "{e1} {e2}");
        let coarse = poisson_extension(&p, &field, &[0.0], 1.0, 1e-4).unwrap();
        let fine = poisson_extension(&p, &field, &[0.0], 1.0, 1e-6).unwrap();
        assert!((coarse.value / fine.value - 1.0).abs() < 1e-4);
    }
}
