//! Kernel constants and the one-dimensional profiles obtained by integrating
//! `|z|^-(n+s)` along vertical lines.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::quadrature::Rule1D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid fractional parameters: {0}")]
    InvalidParams(String),
}

/// Ambient dimension `n` and fractional order `s`, with `sigma = 1 - s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalParams {
    pub n: usize,
    pub s: f64,
    pub sigma: f64,
}

impl FractionalParams {
    pub fn new(n: usize, s: f64) -> Result<Self, KernelError> {
        let p = Self { n, s, sigma: 1.0 - s };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `sigma` taken verbatim and `s = 1 - sigma`.
    pub fn from_sigma(n: usize, sigma: f64) -> Result<Self, KernelError> {
        let p = Self { n, s: 1.0 - sigma, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.n < 2 {
            return Err(KernelError::InvalidParams(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(KernelError::InvalidParams(format!("s must lie in (0,1), got {}", self.s)));
        }
        if (self.sigma - (1.0 - self.s)).abs() > 4.0 * f64::EPSILON {
            return Err(KernelError::InvalidParams(format!(
                "sigma {} inconsistent with s {}",
                self.sigma, self.s
            )));
        }
        Ok(())
    }

    /// Half the kernel exponent, `(n+s)/2`.
    pub fn half_exponent(&self) -> f64 {
        0.5 * (self.n as f64 + self.s)
    }
}

/// Surface measure of the unit sphere in `R^dim`, i.e. `H^{dim-1}(S^{dim-1})`.
pub fn sphere_area(dim: usize) -> f64 {
    let d = dim as f64;
    2.0 * PI.powf(0.5 * d) / gamma(0.5 * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub c_ns: f64,
    pub c_circ: f64,
    /// `c_ns` recomputed by quadrature, independent of the Beta function.
    pub omega_check: f64,
}

/// Column constant `∫_{R^{n-1}} (1+|z'|^2)^{-(n+s)/2} dz'`.
pub fn c_ns(p: &FractionalParams) -> f64 {
    let n = p.n as f64;
    0.5 * sphere_area(p.n - 1) * beta(0.5 * (n - 1.0), 0.5 * (1.0 + p.s))
}

/// Half-column constant `H^{n-2}(S^{n-2}) / (2(n-1))`.
pub fn c_circ(n: usize) -> f64 {
    sphere_area(n - 1) / (2.0 * (n as f64 - 1.0))
}

/// `c_ns` by quadrature of `H^{n-2}(S^{n-2}) ∫_0^{π/2} sin^{n-2}φ cos^s φ dφ`
/// (the substitution `t = tan φ`), with panels graded toward `π/2`.
pub fn c_ns_quadrature(p: &FractionalParams) -> f64 {
    let rule = Rule1D::panels(0.0, 0.5 * PI, 0.1, &[], (false, true), 60);
    let m = p.n as i32 - 2;
    let integral = rule.integrate(|phi| {
        let u = 0.5 * PI - phi;
        // cos φ = sin u, evaluated without cancellation near π/2
        phi.sin().powi(m) * u.sin().powf(p.s)
    });
    sphere_area(p.n - 1) * integral
}

pub fn kernel_constants(p: &FractionalParams) -> KernelConstants {
    KernelConstants { c_ns: c_ns(p), c_circ: c_circ(p.n), omega_check: c_ns_quadrature(p) }
}

/// `normalization * ∫_0^t (1+τ^2)^{-(n+s)/2} dτ`.
pub fn profile_f(t: f64, p: &FractionalParams, normalization: f64) -> f64 {
    normalization * VerticalProfile::new(p.half_exponent()).f1(t)
}

/// Antiderivatives of `k(w) = (1+w^2)^{-a}` used to integrate power kernels
/// exactly along vertical segments.
///
/// With `r` the horizontal distance, `∫_I (r^2+t^2)^{-a} dt = r^{1-2a} seg(I/r)`
/// and `∫_I∫_J (r^2+(u-v)^2)^{-a} = r^{2-2a} q(I/r, J/r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalProfile {
    pub a: f64,
    /// `∫_0^∞ k`.
    pub f_inf: f64,
}

impl VerticalProfile {
    pub fn new(a: f64) -> Self {
        assert!(a > 0.5, "vertical profile needs a > 1/2, got {a}");
        Self { a, f_inf: 0.5 * beta(0.5, a - 0.5) }
    }

    /// `∫_0^c k`, odd in `c`.
    pub fn f1(&self, c: f64) -> f64 {
        if c.is_infinite() {
            return c.signum() * self.f_inf;
        }
        let x = c.abs();
        let val = if x < 1e-3 {
            // the incomplete beta loses everything for tiny arguments
            let x2 = x * x;
            let a = self.a;
            x * (1.0 - a * x2 / 3.0 + a * (a + 1.0) * x2 * x2 / 10.0 - a * (a + 1.0) * (a + 2.0) * x2 * x2 * x2 / 42.0)
        } else if x <= 1.0 {
            self.f_inf * beta_reg(0.5, self.a - 0.5, x * x / (1.0 + x * x))
        } else {
            self.f_inf - self.tail(x)
        };
        val.copysign(c)
    }

    /// `∫_c^∞ k` for any real `c`.
    pub fn tail(&self, c: f64) -> f64 {
        if c == f64::INFINITY {
            return 0.0;
        }
        if c == f64::NEG_INFINITY {
            return 2.0 * self.f_inf;
        }
        if c < 0.0 {
            return self.f_inf + self.f1(-c);
        }
        if c <= 1.0 {
            return self.f_inf - self.f1(c);
        }
        self.f_inf * beta_reg(self.a - 0.5, 0.5, 1.0 / (1.0 + c * c))
    }

    /// `∫_lo^hi k`, computed from the side that avoids cancellation.
    pub fn seg(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        if lo >= 0.0 {
            self.tail(lo) - self.tail(hi)
        } else if hi <= 0.0 {
            self.tail(-hi) - self.tail(-lo)
        } else {
            self.f1(hi) - self.f1(lo)
        }
    }

    /// `∫_c^∞ (w-c) k(w) dw`, a second antiderivative of `k` vanishing at +∞.
    pub fn g2(&self, c: f64) -> f64 {
        if c == f64::INFINITY {
            return 0.0;
        }
        if c < 0.0 {
            return self.g2(-c) - 2.0 * c * self.f_inf;
        }
        if self.a == 1.0 {
            // log kernel never occurs for n+s > 2
            return f64::INFINITY;
        }
        (1.0 + c * c).powf(1.0 - self.a) / (2.0 * (self.a - 1.0)) - c * self.tail(c)
    }

    /// `∫_I∫_J k(v-u) dv du` for intervals given as (lo, hi), at most one of
    /// which may be unbounded in a given direction.
    pub fn q(&self, i: (f64, f64), j: (f64, f64)) -> f64 {
        if i.1 <= i.0 || j.1 <= j.0 {
            return 0.0;
        }
        let (lower, upper) = if i.0 <= j.0 { (i, j) } else { (j, i) };
        let (a1, b1) = lower;
        let (a2, b2) = upper;
        if b1 == f64::INFINITY && b2 == f64::INFINITY {
            return f64::INFINITY;
        }
        if b1 == f64::INFINITY {
            // upper is nested inside lower's unbounded end; split lower
            return self.q((a1, a2), upper) + self.q((a2, f64::INFINITY), upper);
        }
        self.g2(a2 - b1) - self.g2(b2 - b1) - self.g2(a2 - a1) + self.g2(b2 - a1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn f1_small_arguments() {
        let prof = VerticalProfile::new(1.49);
        for c in [1e-12, 1e-8, 3e-5] {
            assert_relative_eq!(prof.f1(c), c, max_relative = 1e-9);
            assert_relative_eq!(prof.f1(-c), -c, max_relative = 1e-9);
        }
        // both branches agree at the switch
        let below = prof.f1(1e-3 * (1.0 - 1e-12));
        let above = prof.f1(1e-3 * (1.0 + 1e-12));
        assert_relative_eq!(below, above, max_relative = 1e-10);
    }

    #[test]
    fn closed_forms() {
        let p = FractionalParams::new(3, 0.5).unwrap();
        assert_relative_eq!(c_ns(&p), 4.0 * PI / 3.0, max_relative = 1e-13);
        assert_relative_eq!(c_circ(2), 1.0, max_relative = 1e-14);
        assert_relative_eq!(c_circ(3), PI / 2.0, max_relative = 1e-14);
        assert_relative_eq!(c_circ(4), 2.0 * PI / 3.0, max_relative = 1e-14);
        let p = FractionalParams::new(2, 1.0 - 1e-9).unwrap();
        assert_relative_eq!(c_ns(&p), 2.0, max_relative = 1e-7);
        let p = FractionalParams::new(3, 1.0 - 1e-9).unwrap();
        assert_relative_eq!(c_ns(&p), PI, max_relative = 1e-7);
    }

    #[test]
    fn quadrature_agrees_with_beta() {
        for n in 2..=4 {
            for s in [0.5, 0.8, 0.95, 0.99] {
                let p = FractionalParams::new(n, s).unwrap();
                let k = kernel_constants(&p);
                assert_relative_eq!(k.omega_check, k.c_ns, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(FractionalParams::new(1, 0.5).is_err());
        assert!(FractionalParams::new(2, 1.0).is_err());
        assert!(FractionalParams::new(2, 0.0).is_err());
        let p = FractionalParams::from_sigma(2, 0.05).unwrap();
        assert_eq!(p.sigma, 0.05);
    }

    #[test]
    fn profile_examples() {
        let p = FractionalParams::new(3, 1.0 - 1e-12).unwrap();
        assert_eq!(profile_f(0.0, &p, 1.0), 0.0);
        assert_relative_eq!(profile_f(1e12, &p, 1.0), PI / 4.0, max_relative = 1e-9);
        assert_relative_eq!(profile_f(-0.7, &p, 2.0), -profile_f(0.7, &p, 2.0));
    }

    fn gl_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        Rule1D::panels(a, b, 0.01, &[], (false, false), 0).integrate(f)
    }

    #[test]
    fn vertical_profile_against_quadrature() {
        let vp = VerticalProfile::new(1.3);
        let k = |w: f64| (1.0 + w * w).powf(-1.3);
        for c in [0.0f64, 0.3, 1.0, 2.5, -1.7] {
            let direct = gl_integral(k, 0.0, c.abs()) * c.signum();
            assert_relative_eq!(vp.f1(c), direct, epsilon = 1e-13);
        }
        assert_relative_eq!(vp.seg(-0.4, 3.0), gl_integral(k, -0.4, 3.0), max_relative = 1e-12);
        // g2 by direct quadrature on a long truncated range plus its far tail
        for c in [0.0, 0.5, 3.0, -2.0] {
            let upto = 400.0;
            let direct = gl_integral(|w| (w - c) * k(w), c, upto);
            let far = upto.powf(2.0 - 2.0 * 1.3) / (2.0 * 1.3 - 2.0) - c * upto.powf(1.0 - 2.0 * 1.3) / (2.0 * 1.3 - 1.0);
            assert_relative_eq!(vp.g2(c), direct + far, max_relative = 1e-4);
        }
    }

    #[test]
    fn q_matches_double_quadrature() {
        let vp = VerticalProfile::new(1.25);
        let k = |w: f64| (1.0 + w * w).powf(-1.25);
        let i = (-0.5, 0.7);
        let j = (0.2, 1.9);
        let direct = gl_integral(|u| gl_integral(|v| k(v - u), j.0, j.1), i.0, i.1);
        assert_relative_eq!(vp.q(i, j), direct, max_relative = 1e-11);
        assert_relative_eq!(vp.q(j, i), direct, max_relative = 1e-11);
        // half-line against a segment: the inner integral is a `seg`
        let half = (0.4, f64::INFINITY);
        let seg = (-1.0, 0.1);
        let direct = gl_integral(|u| vp.seg(half.0 - u, f64::INFINITY), seg.0, seg.1);
        assert_relative_eq!(vp.q(seg, half), direct, max_relative = 1e-11);
        assert_relative_eq!(vp.q(half, seg), direct, max_relative = 1e-11);
        // whole line against a segment
        assert_relative_eq!(
            vp.q((f64::NEG_INFINITY, 0.0), (0.0, 1.0)) + vp.q((1.0, f64::INFINITY), (0.0, 1.0)) + vp.q((0.0, 1.0), (0.0, 1.0)),
            2.0 * vp.f_inf,
            max_relative = 1e-10
        );
    }
}
