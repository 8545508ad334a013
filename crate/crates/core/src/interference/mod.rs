//! Aggregate interference from the oncoming lane.
//!
//! Interferers form a Poisson process of density `lambda_I` along the
//! opposite lane at longitudinal distances `r >= r_Imin`, each received with
//! power `rho_I |h|^2 (r^2 + d_I^2)^(-alpha_I/2)` where `|h|^2` is unit-mean
//! Rician with factor `K`.

mod inversion;
mod table;

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOpts};
use crate::scenario::ValidatedScenario;

pub use inversion::{gil_pelaez, wynn_epsilon, GpOpts, GpResult};
pub use table::{CdfOpts, CdfSource, CfTable, DirectCdf, InterferenceCdf, Pchip};

/// Relative bound on the Laplace-exponent tail beyond the truncation radius.
const LT_TAIL: f64 = 1e-10;

/// `exp(z) - 1` without cancellation for small `|z|`.
pub fn complex_expm1(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    let em1 = z.re.exp_m1();
    // cos y - 1 = -2 sin^2(y/2)
    Complex64::new(em1 * c - 2.0 * half * half, z.re.exp() * s)
}

/// Laplace transform of the unit-mean Rician power gain.
pub fn fading_lt(s: Complex64, k: f64) -> Result<Complex64> {
    let den = Complex64::new(k + 1.0, 0.0) + s;
    if den.norm() == 0.0 {
        return Err(Error::Pole { re: s.re, im: s.im });
    }
    Ok((k + 1.0) / den * (-k * s / den).exp())
}

/// `1 - fading_lt(s, k)` evaluated without cancellation near `s = 0`.
pub fn one_minus_fading_lt(s: Complex64, k: f64) -> Result<Complex64> {
    let den = Complex64::new(k + 1.0, 0.0) + s;
    if den.norm() == 0.0 {
        return Err(Error::Pole { re: s.re, im: s.im });
    }
    let a = (k + 1.0) / den;
    Ok(s / den - a * complex_expm1(-k * s / den))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceField {
    pub lambda: f64,
    pub rho: f64,
    pub d: f64,
    pub alpha: f64,
    pub k: f64,
    pub r_min: f64,
}

impl InterferenceField {
    pub fn new(scenario: &ValidatedScenario) -> Self {
        let p = scenario.params();
        Self {
            lambda: p.lambda_i,
            rho: scenario.derived().rho_i,
            d: p.d_i,
            alpha: p.alpha_i,
            k: p.k,
            r_min: scenario.derived().r_imin,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lambda == 0.0
    }

    /// Mean received power of one interferer at distance `r`, before fading.
    pub fn path_gain(&self, r: f64) -> f64 {
        self.rho * (r * r + self.d * self.d).powf(-0.5 * self.alpha)
    }

    /// `E[I]`.
    pub fn mean(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.lambda * self.rho * power_law_tail(self.r_min, self.d, self.alpha)
    }

    /// Scale of `|ln L_I(s)|`, capped at one.
    fn exponent_scale(&self, s_abs: f64) -> f64 {
        (s_abs * self.mean()).min(1.0)
    }

    /// Radius beyond which the exponent tail is below `1e-10` relative to
    /// the exponent itself (absolute once the exponent exceeds one).
    pub fn truncation_radius(&self, s_abs: f64) -> f64 {
        let a1 = self.alpha - 1.0;
        let eps = LT_TAIL * self.exponent_scale(s_abs);
        let log_r = ((self.lambda * s_abs * self.rho).ln() - (a1 * eps).ln()) / a1;
        log_r.min(700.0).exp().max(self.r_min)
    }

    /// `ln L_I(s)`.
    pub fn exponent(&self, s: Complex64) -> Result<Complex64> {
        if self.is_empty() || s.norm() == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let r_hi = self.truncation_radius(s.norm());
        if r_hi <= self.r_min {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let scale = self.exponent_scale(s.norm());
        let mut fail = None;
        let res = integrate(
            |t: f64| {
                let r = t.exp();
                match one_minus_fading_lt(s * self.path_gain(r), self.k) {
                    Ok(v) => v * r,
                    Err(e) => {
                        fail.get_or_insert(e);
                        Complex64::new(0.0, 0.0)
                    }
                }
            },
            self.r_min.ln(),
            r_hi.ln(),
            QuadOpts {
                abs_tol: 1e-13 * scale / self.lambda,
                rel_tol: 1e-11,
                max_panels: 2000,
            },
        );
        if let Some(e) = fail {
            return Err(e);
        }
        if !res.converged {
            return Err(Error::Quadrature {
                what: "interference Laplace exponent",
                estimate: res.value.re * self.lambda,
                error: res.error * self.lambda,
                target: 1e-11,
            });
        }
        Ok(-self.lambda * res.value)
    }

    /// `L_I(s)`.
    pub fn laplace(&self, s: Complex64) -> Result<Complex64> {
        Ok(self.exponent(s)?.exp())
    }

    /// Characteristic function `E[exp(j tau I)] = L_I(-j tau)`.
    pub fn cf(&self, tau: f64) -> Result<Complex64> {
        self.laplace(Complex64::new(0.0, -tau))
    }
}

/// `int_{r0}^inf (r^2 + d^2)^(-alpha/2) dr` for `alpha > 1`.
pub fn power_law_tail(r0: f64, d: f64, alpha: f64) -> f64 {
    if alpha == 2.0 {
        return (FRAC_PI_2 - (r0 / d).atan()) / d;
    }
    if alpha == 3.0 {
        return (1.0 - r0 / (r0 * r0 + d * d).sqrt()) / (d * d);
    }
    if r0 == 0.0 {
        // Beta-function form.
        let h = 0.5 * alpha;
        return d.powf(1.0 - alpha) * 0.5 * PI.sqrt() * gamma_ratio(h - 0.5, h);
    }
    // r = r0 / v; the v^(alpha-2) singularity is integrated in closed form.
    let c = (d / r0).powi(2);
    let res = integrate(
        |v: f64| {
            if v == 0.0 {
                0.0
            } else {
                v.powf(alpha - 2.0) * ((1.0 + c * v * v).powf(-0.5 * alpha) - 1.0)
            }
        },
        0.0,
        1.0,
        QuadOpts {
            abs_tol: 1e-15,
            rel_tol: 1e-13,
            max_panels: 500,
        },
    );
    r0.powf(1.0 - alpha) * (res.value + 1.0 / (alpha - 1.0))
}

fn gamma_ratio(a: f64, b: f64) -> f64 {
    (statrs::function::gamma::ln_gamma(a) - statrs::function::gamma::ln_gamma(b)).exp()
}

/// `Pr(I <= x)` by direct inversion of the exact transform. Slow; the
/// tabulated [`InterferenceCdf`] is the production path.
pub fn interference_cdf(field: &InterferenceField, x: f64, tol: f64) -> Result<f64> {
    if x < 0.0 {
        return Ok(0.0);
    }
    if field.is_empty() {
        return Ok(1.0);
    }
    let mean = field.mean();
    let fail = std::cell::RefCell::new(None);
    let cf = |u: f64| match field.cf(u / mean) {
        Ok(v) => v,
        Err(e) => {
            fail.borrow_mut().get_or_insert(e);
            Complex64::new(0.0, 0.0)
        }
    };
    let r = gil_pelaez(cf, x / mean, 1.0, GpOpts::with_tol(tol));
    if let Some(e) = fail.into_inner() {
        return Err(e);
    }
    r.map(|g| g.value)
}
