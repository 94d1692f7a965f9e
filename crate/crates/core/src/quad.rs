//! Quadrature rules: fixed Gauss rules, adaptive Gauss–Kronrod, and
//! double-exponential rules for endpoint singularities and infinite ranges.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

/// Nodes and weights of a fixed interpolatory rule.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Gauss–Legendre rule on `[-1, 1]`.
    pub fn legendre(n: usize) -> Self {
        assert!(n > 0, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }

    /// Gauss–Jacobi rule on `[-1, 1]` for the weight `(1-x)^alpha (1+x)^beta`,
    /// computed from the eigen-decomposition of the Jacobi matrix.
    pub fn jacobi(n: usize, alpha: f64, beta: f64) -> Self {
        assert!(n > 0, "rule needs at least one node");
        assert!(alpha > -1.0 && beta > -1.0, "Jacobi exponents must exceed -1");
        let ab = alpha + beta;
        let mut jm = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            let diag = if k == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
            };
            jm[(k, k)] = diag;
            if k + 1 < n {
                let j = kf + 1.0;
                let off2 = if k == 0 {
                    4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
                } else {
                    4.0 * j * (j + alpha) * (j + beta) * (j + ab)
                        / ((2.0 * j + ab).powi(2) * (2.0 * j + ab + 1.0) * (2.0 * j + ab - 1.0))
                };
                let off = off2.sqrt();
                jm[(k, k + 1)] = off;
                jm[(k + 1, k)] = off;
            }
        }
        let eig = SymmetricEigen::new(jm);
        let log_mu0 = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0)
            + ln_gamma(beta + 1.0)
            - ln_gamma(ab + 2.0);
        let mu0 = log_mu0.exp();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        GaussRule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Gauss–Jacobi rule on `[0, 1]` for the weight `(1-c)^alpha c^beta`.
    pub fn jacobi_unit(n: usize, alpha: f64, beta: f64) -> Self {
        let rule = Self::jacobi(n, alpha, beta);
        let scale = 0.5f64.powf(alpha + beta + 1.0);
        GaussRule {
            nodes: rule.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
            weights: rule.weights.iter().map(|w| w * scale).collect(),
        }
    }

    /// Affine image of a Legendre rule on `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> GaussRule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        GaussRule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sum<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    (resk * h, ((resk - resg) * h).abs())
}

/// Tolerances for the adaptive integrators.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Tolerance {
            abs: 0.0,
            rel,
            max_intervals: 4000,
        }
    }

    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            max_intervals: 4000,
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

/// Globally adaptive 7/15-point Gauss–Kronrod quadrature on a finite interval.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evals: 0,
        });
    }
    let (v, e) = kronrod15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    let mut evals = 15;
    while err > tol.target(total) {
        if parts.len() >= tol.max_intervals {
            return Err(Error::numeric(
                format!("adaptive quadrature on [{a}, {b}] did not converge"),
                err,
            ));
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty partition");
        let (lo, hi, pv, pe) = parts.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(&mut f, lo, mid);
        let (v2, e2) = kronrod15(&mut f, mid, hi);
        evals += 30;
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
        if !total.is_finite() {
            return Err(Error::numeric("non-finite integrand in adaptive quadrature", f64::NAN));
        }
    }
    // Re-sum to remove drift from the incremental updates.
    let value = parts.iter().map(|p| p.2).sum();
    let error = parts.iter().map(|p| p.3).sum();
    Ok(Estimate { value, error, evals })
}

/// Adaptive quadrature on `[a, inf)` through the map `x = a + t / (1 - t)`.
pub fn adaptive_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: Tolerance) -> Result<Estimate> {
    adaptive(
        |t| {
            let om = 1.0 - t;
            f(a + t / om) / (om * om)
        },
        0.0,
        1.0,
        tol,
    )
}

const TS_MAX_LEVEL: usize = 12;

/// Tanh–sinh quadrature on `[a, b]`. The integrand receives the abscissa and
/// its distances to both endpoints, computed without cancellation, so that
/// endpoint singularities can be evaluated accurately.
pub fn tanh_sinh<F: FnMut(f64, f64, f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    let len = b - a;
    if len == 0.0 {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evals: 0,
        });
    }
    let tmax = 6.5;
    let mut evals = 0usize;
    let mut node = |t: f64, f: &mut F| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let (da, db) = if u >= 0.0 {
            let e = (-2.0 * u).exp();
            (len / (1.0 + e), len * e / (1.0 + e))
        } else {
            let e = (2.0 * u).exp();
            (len * e / (1.0 + e), len / (1.0 + e))
        };
        if da <= 0.0 || db <= 0.0 {
            return 0.0;
        }
        let ch = u.abs().min(700.0).cosh();
        let w = 0.5 * len * FRAC_PI_2 * t.cosh() / (ch * ch);
        if w == 0.0 {
            return 0.0;
        }
        let x = if da <= db { a + da } else { b - db };
        evals += 1;
        w * f(x, da, db)
    };
    let mut h = 1.0;
    let mut sum = node(0.0, &mut f);
    let mut k = 1.0;
    while k * h <= tmax {
        sum += node(k * h, &mut f) + node(-k * h, &mut f);
        k += 1.0;
    }
    let mut prev = sum * h;
    let mut err = f64::INFINITY;
    for _ in 1..=TS_MAX_LEVEL {
        h *= 0.5;
        let mut t = h;
        while t <= tmax {
            sum += node(t, &mut f) + node(-t, &mut f);
            t += 2.0 * h;
        }
        let cur = sum * h;
        err = (cur - prev).abs();
        if !cur.is_finite() {
            return Err(Error::numeric("non-finite integrand in tanh-sinh quadrature", f64::NAN));
        }
        // The level difference overestimates the error of the finer level by a
        // large factor once the rule is in its quadratic convergence regime.
        if err <= tol.target(cur) && h < 0.5 {
            return Ok(Estimate {
                value: cur,
                error: err,
                evals,
            });
        }
        prev = cur;
    }
    if err <= 10.0 * tol.target(prev) {
        return Ok(Estimate {
            value: prev,
            error: err,
            evals,
        });
    }
    Err(Error::numeric(
        format!("tanh-sinh quadrature on [{a}, {b}] did not converge"),
        err,
    ))
}

/// Exp–sinh quadrature on `[a, inf)`; the integrand receives the abscissa and
/// its distance to `a`.
pub fn exp_sinh<F: FnMut(f64, f64) -> f64>(mut f: F, a: f64, tol: Tolerance) -> Result<Estimate> {
    let (tlo, thi) = (-6.5, 5.5);
    let mut evals = 0usize;
    let mut node = |t: f64, f: &mut F| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let d = u.exp();
        if d <= 0.0 || !d.is_finite() {
            return 0.0;
        }
        let w = FRAC_PI_2 * t.cosh() * d;
        evals += 1;
        let v = f(a + d, d);
        if v == 0.0 {
            0.0
        } else {
            w * v
        }
    };
    let mut h = 1.0;
    let mut sum = 0.0;
    let mut t = tlo;
    while t <= thi {
        sum += node(t, &mut f);
        t += h;
    }
    let mut prev = sum * h;
    let mut err = f64::INFINITY;
    for _ in 1..=TS_MAX_LEVEL {
        h *= 0.5;
        let mut t = tlo + h;
        while t <= thi {
            sum += node(t, &mut f);
            t += 2.0 * h;
        }
        let cur = sum * h;
        if !cur.is_finite() {
            return Err(Error::numeric("non-finite integrand in exp-sinh quadrature", f64::NAN));
        }
        err = (cur - prev).abs();
        if err <= tol.target(cur) && h < 0.5 {
            return Ok(Estimate {
                value: cur,
                error: err,
                evals,
            });
        }
        prev = cur;
    }
    if err <= 10.0 * tol.target(prev) {
        return Ok(Estimate {
            value: prev,
            error: err,
            evals,
        });
    }
    Err(Error::numeric(
        format!("exp-sinh quadrature on [{a}, inf) did not converge"),
        err,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = GaussRule::legendre(6);
        for k in 0..12 {
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            let got = rule.sum(|x| x.powi(k));
            assert!((got - exact).abs() < 1e-14, "k = {k}: {got} vs {exact}");
        }
    }

    #[test]
    fn large_legendre_rule_has_unit_mass() {
        let rule = GaussRule::legendre(301);
        let mass: f64 = rule.weights.iter().sum();
        assert!((mass - 2.0).abs() < 1e-13);
        assert!((rule.sum(|x| x.cos()) - 2.0 * 1f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn jacobi_moments_match_beta_function() {
        let (alpha, beta_exp) = (-0.5, -0.3);
        let rule = GaussRule::jacobi_unit(40, alpha, beta_exp);
        for k in 0..10 {
            let exact = beta(beta_exp + 1.0 + k as f64, alpha + 1.0);
            let got = rule.sum(|c| c.powi(k as i32));
            assert!((got / exact - 1.0).abs() < 1e-13, "k = {k}");
        }
    }

    #[test]
    fn kronrod_handles_smooth_and_peaked() {
        let est = adaptive(|x| x.exp(), 0.0, 1.0, Tolerance::rel(1e-14)).unwrap();
        assert!((est.value - (1f64.exp() - 1.0)).abs() < 1e-14);
        let est = adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, Tolerance::rel(1e-12)).unwrap();
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((est.value / exact - 1.0).abs() < 1e-11);
    }

    #[test]
    fn kronrod_to_infinity() {
        let est = adaptive_to_infinity(|x| (-x).exp(), 0.0, Tolerance::rel(1e-13)).unwrap();
        assert!((est.value - 1.0).abs() < 1e-13);
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        // integral of c^{-0.3} (1-c)^{-0.5} over [0, 1]
        let est = tanh_sinh(|_, da, db| da.powf(-0.3) * db.powf(-0.5), 0.0, 1.0, Tolerance::rel(1e-13)).unwrap();
        let exact = beta(0.7, 0.5);
        assert!((est.value / exact - 1.0).abs() < 1e-12, "{}", est.value);
    }

    #[test]
    fn exp_sinh_algebraic_decay() {
        // integral of x^{-1.6} on [1, inf) = 1/0.6
        let est = exp_sinh(|x, _| x.powf(-1.6), 1.0, Tolerance::rel(1e-12)).unwrap();
        assert!((est.value * 0.6 - 1.0).abs() < 1e-11, "{}", est.value);
        // singular at the endpoint: integral of d^{-0.4} e^{-d}
        let est = exp_sinh(|_, d| d.powf(-0.4) * (-d).exp(), 0.0, Tolerance::rel(1e-12)).unwrap();
        let exact = statrs::function::gamma::gamma(0.6);
        assert!((est.value / exact - 1.0).abs() < 1e-11);
    }

    #[test]
    fn nonconvergence_reports_residual() {
        let tol = Tolerance {
            abs: 0.0,
            rel: 1e-15,
            max_intervals: 3,
        };
        let err = adaptive(|x| (1.0 / x).sin(), 1e-6, 1.0, tol).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }
}
