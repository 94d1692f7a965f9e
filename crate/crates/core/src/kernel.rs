//! The auxiliary kernel `K(r, t)` of the half-space and ball Green functions
//! of the restricted operator.
//!
//! With `x = r / t` and `m = (n - 2) / 2`,
//! `K(r, t) = (x / (1 + x))^m x^{1-s} J(x)` where
//! `J(x) = ∫_0^1 (1-c)^m c^{-s} / (1 + x c) dc`.
//! The regular part of the Green function is `a d r^{-(n-2s)/2} K(r, t)`, which
//! is smooth at `r = 0` in the form `a d (r+t)^{-m} t^{s-1} J(r/t)`.

use crate::quad::{tanh_sinh, GaussRule, Tolerance};

/// Above this ratio the Gauss–Jacobi rule loses accuracy because of the pole
/// at `c = -1/x`; a split tanh–sinh rule is used instead.
const JACOBI_LIMIT: f64 = 50.0;
const JACOBI_NODES: usize = 64;

#[derive(Debug, Clone)]
pub struct KernelK {
    pub n: usize,
    pub s: f64,
    m: f64,
    rule: GaussRule,
}

impl KernelK {
    pub fn new(n: usize, s: f64) -> Self {
        let m = (n as f64 - 2.0) / 2.0;
        KernelK {
            n,
            s,
            m,
            rule: GaussRule::jacobi_unit(JACOBI_NODES, m, -s),
        }
    }

    /// Exponent `(n - 2) / 2` of the `(1 - c)` factor.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// `J(x)`; `J(0)` is the Beta-type constant `ι`.
    pub fn j(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        if x <= JACOBI_LIMIT {
            self.rule.sum(|c| 1.0 / (1.0 + x * c))
        } else {
            self.split_quad(x, 0)
        }
    }

    /// `J'(x) = -∫ (1-c)^m c^{1-s} / (1 + x c)^2 dc`.
    pub fn j_prime(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        if x <= JACOBI_LIMIT {
            -self.rule.sum(|c| {
                let d = 1.0 + x * c;
                c / (d * d)
            })
        } else {
            -self.split_quad(x, 1)
        }
    }

    fn split_quad(&self, x: f64, order: i32) -> f64 {
        let (m, s) = (self.m, self.s);
        let split = (1.0 / x).min(0.5);
        let f = |c: f64, dc0: f64, dc1: f64| -> f64 {
            let base = dc1.powf(m) * dc0.powf(-s) / (1.0 + x * c);
            if order == 0 {
                base
            } else {
                base * c / (1.0 + x * c)
            }
        };
        let tol = Tolerance::rel(1e-14);
        let left = tanh_sinh(|c, da, _| f(c, da, 1.0 - c), 0.0, split, tol)
            .map(|e| e.value)
            .unwrap_or(f64::NAN);
        let right = tanh_sinh(|c, _, db| f(c, c, db), split, 1.0, tol)
            .map(|e| e.value)
            .unwrap_or(f64::NAN);
        left + right
    }

    /// `K` as a function of the ratio `x = r / t`.
    pub fn k_of_ratio(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        (x / (1.0 + x)).powf(self.m) * x.powf(1.0 - self.s) * self.j(x)
    }

    /// `dK/dx`.
    pub fn k_prime_of_ratio(&self, x: f64) -> f64 {
        let pre = (x / (1.0 + x)).powf(self.m) * x.powf(1.0 - self.s);
        let j = self.j(x);
        let log_der = self.m / (x * (1.0 + x)) + (1.0 - self.s) / x;
        pre * (j * log_der + self.j_prime(x))
    }

    pub fn value(&self, r: f64, t: f64) -> f64 {
        self.k_of_ratio(r / t)
    }

    /// `(K, ∂K/∂r, ∂K/∂t)` at `r, t > 0`.
    pub fn partials(&self, r: f64, t: f64) -> (f64, f64, f64) {
        let x = r / t;
        let k = self.k_of_ratio(x);
        let kp = self.k_prime_of_ratio(x);
        (k, kp / t, -kp * r / (t * t))
    }

    /// Partials from the closed-form integrals in which the derivative falls on
    /// `(r - t b)^{(n-2)/2}`. The boundary term of that differentiation only
    /// vanishes for `n >= 3`, so `None` is returned otherwise.
    pub fn boundary_free_partials(&self, r: f64, t: f64) -> Option<(f64, f64)> {
        if self.n < 3 {
            return None;
        }
        let m = self.m;
        let x = r / t;
        // ∫_0^{r/t} (r - t b)^{m-1} b^{-s} db = r^{m-1} x^{1-s} B(1-s, m)
        let integral = r.powf(m - 1.0)
            * x.powf(1.0 - self.s)
            * statrs::function::beta::beta(1.0 - self.s, m);
        let pre = m / (r + t).powf(m + 1.0) * integral;
        Some((pre * t, -pre * r))
    }

    /// `K` along the axis configuration `r = (θ-1)^2, t = 4θ` and its
    /// derivative in `θ`.
    pub fn along_axis(&self, theta: f64) -> (f64, f64) {
        let r = (theta - 1.0).powi(2);
        let t = 4.0 * theta;
        let (k, kr, kt) = self.partials(r, t);
        (k, kr * 2.0 * (theta - 1.0) + kt * 4.0)
    }

    /// Regular-part profile `(r+t)^{-m} t^{s-1} J(r/t)`, finite at `r = 0`.
    pub fn regular_profile(&self, r: f64, t: f64) -> f64 {
        (r + t).powf(-self.m) * t.powf(self.s - 1.0) * self.j(r / t)
    }

    /// Partials of [`Self::regular_profile`] in `r` and `t`.
    pub fn regular_profile_partials(&self, r: f64, t: f64) -> (f64, f64, f64) {
        let (m, s) = (self.m, self.s);
        let x = r / t;
        let j = self.j(x);
        let jp = self.j_prime(x);
        let rt = r + t;
        let a = rt.powf(-m);
        let b = t.powf(s - 1.0);
        let v = a * b * j;
        let dr = b * (-m * rt.powf(-m - 1.0) * j + a * jp / t);
        let dt = -m * rt.powf(-m - 1.0) * b * j + (s - 1.0) * a * t.powf(s - 2.0) * j
            - a * b * jp * r / (t * t);
        (v, dr, dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta;

    #[test]
    fn j_at_zero_is_beta() {
        for &(n, s) in &[(1usize, 0.3), (2, 0.5), (3, 0.7)] {
            let k = KernelK::new(n, s);
            let exact = beta(1.0 - s, n as f64 / 2.0);
            assert!((k.j(0.0) / exact - 1.0).abs() < 1e-13, "n={n} s={s}");
        }
    }

    #[test]
    fn both_quadrature_paths_agree_at_switch() {
        let k = KernelK::new(1, 0.3);
        let x = JACOBI_LIMIT;
        let a = k.j(x);
        let b = k.split_quad(x, 0);
        assert!((a / b - 1.0).abs() < 1e-12, "{a} {b}");
        let a = k.j_prime(x);
        let b = -k.split_quad(x, 1);
        assert!((a / b - 1.0).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn large_ratio_limit() {
        let s = 0.3;
        let k = KernelK::new(1, s);
        let lim = std::f64::consts::PI / (std::f64::consts::PI * s).sin();
        let v = k.k_of_ratio(1e8);
        assert!((v / lim - 1.0).abs() < 1e-2, "{v} {lim}");
    }

    #[test]
    fn profile_matches_kernel_form() {
        let k = KernelK::new(1, 0.3);
        let (r, t) = (0.7, 1.9);
        let q = 0.4;
        let lhs = k.value(r, t) / r.powf(q / 2.0);
        let rhs = k.regular_profile(r, t);
        assert!((lhs / rhs - 1.0).abs() < 1e-13);
    }

    #[test]
    fn boundary_free_partials_agree_in_three_dimensions() {
        let k = KernelK::new(3, 0.4);
        for &(r, t) in &[(0.5, 1.0), (2.0, 0.3), (0.1, 5.0)] {
            let (_, kr, kt) = k.partials(r, t);
            let (pr, pt) = k.boundary_free_partials(r, t).unwrap();
            assert!((kr / pr - 1.0).abs() < 1e-10, "{kr} {pr}");
            assert!((kt / pt - 1.0).abs() < 1e-10, "{kt} {pt}");
        }
        assert!(KernelK::new(1, 0.3).boundary_free_partials(1.0, 1.0).is_none());
    }
}
