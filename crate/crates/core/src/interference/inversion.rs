//! Gil-Pelaez inversion of a characteristic function.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOpts};

#[derive(Debug, Clone, Copy)]
pub struct GpOpts {
    pub tol: f64,
    pub max_panels: usize,
    /// Number of most recent partial sums fed to the epsilon algorithm.
    pub window: usize,
}

impl Default for GpOpts {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_panels: 20_000,
            window: 30,
        }
    }
}

impl GpOpts {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Limit of a sequence of partial sums by Wynn's epsilon algorithm.
pub fn wynn_epsilon(s: &[f64]) -> f64 {
    let n = s.len();
    if n == 0 {
        return 0.0;
    }
    let mut best = s[n - 1];
    let mut prev = vec![0.0; n];
    let mut cur = s.to_vec();
    for k in 1..n {
        let mut next = Vec::with_capacity(n - k);
        for i in 0..n - k {
            let d = cur[i + 1] - cur[i];
            if d == 0.0 || !d.is_finite() {
                return best;
            }
            next.push(prev[i + 1] + 1.0 / d);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return best;
        }
        prev = cur;
        cur = next;
        if k % 2 == 0 {
            best = cur[cur.len() - 1];
        }
    }
    best
}

/// `F(x) = 1/2 - (1/pi) int_0^inf Im{phi(u) e^{-j u x}} / u du` for a
/// characteristic function `phi` of a nonnegative variable with mean `mean`.
///
/// `x` and `mean` are in the units of `phi`'s conjugate variable; callers
/// normalize so that `mean` is of order one. Returns 0 for `x < 0` and clamps
/// the result to `[0, 1]`.
pub fn gil_pelaez<F>(cf: F, x: f64, mean: f64, opts: GpOpts) -> Result<GpResult>
where
    F: Fn(f64) -> Complex64,
{
    if x < 0.0 {
        return Ok(GpResult {
            value: 0.0,
            error: 0.0,
            panels: 0,
        });
    }
    let tol = opts.tol;
    let stop = 0.1 * PI * tol;
    let panel_tol = 1e-3 * PI * tol;
    let half_period = if x > 0.0 { PI / x } else { f64::INFINITY };
    let integrand = |u: f64| (cf(u) * Complex64::new(0.0, -u * x).exp()).im / u;

    let u0 = 1e-6f64.min(1e-3 * half_period);
    let mut sum = u0 * (mean - x);
    let mut quad_err = 0.0;
    let mut panels = 0usize;
    let panel = |a: f64, b: f64, err: &mut f64| {
        let r = integrate(
            integrand,
            a,
            b,
            QuadOpts {
                abs_tol: panel_tol,
                rel_tol: 1e-12,
                max_panels: 64,
            },
        );
        *err += r.error;
        r.value
    };

    let finish = |sum: f64, err: f64, panels: usize| GpResult {
        value: (0.5 - sum / PI).clamp(0.0, 1.0),
        error: err / PI,
        panels,
    };

    // Geometric panels up to the first half-period.
    let mut u = u0;
    let mut prev_env = f64::INFINITY;
    while u < half_period {
        let b = (2.0 * u).min(half_period);
        sum += panel(u, b, &mut quad_err);
        panels += 1;
        let env = cf(b).norm() * LN_2;
        let q = env / prev_env;
        if prev_env.is_finite() && q < 0.9 && env * q / (1.0 - q) < stop {
            return Ok(finish(sum, quad_err + env * q / (1.0 - q), panels));
        }
        prev_env = env;
        u = b;
        if panels >= opts.max_panels {
            return Err(Error::Inversion {
                x,
                estimate: finish(sum, 0.0, panels).value,
                correction: env,
                panels,
            });
        }
    }

    // Half-period panels aligned to multiples of the half-period.
    let h = half_period;
    let mut k = 1.0;
    let mut sums: Vec<f64> = Vec::with_capacity(opts.window + 1);
    sums.push(sum);
    let mut acc_prev = f64::NAN;
    let mut diff_prev = f64::INFINITY;
    loop {
        let a = k * h;
        let b = (k + 1.0) * h;
        sum += panel(a, b, &mut quad_err);
        panels += 1;
        k += 1.0;
        if sums.len() == opts.window {
            sums.remove(0);
        }
        sums.push(sum);

        let env = h * cf(b).norm() / b;
        if env < stop {
            return Ok(finish(sum, quad_err + env, panels));
        }
        if sums.len() >= 4 {
            let acc = wynn_epsilon(&sums);
            let diff = (acc - acc_prev).abs();
            if diff < stop && diff_prev < stop {
                return Ok(finish(acc, quad_err + diff + diff_prev, panels));
            }
            acc_prev = acc;
            diff_prev = diff;
        }
        if panels >= opts.max_panels {
            let est = if acc_prev.is_finite() { acc_prev } else { sum };
            return Err(Error::Inversion {
                x,
                estimate: finish(est, 0.0, panels).value,
                correction: diff_prev,
                panels,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wynn_accelerates_alternating_harmonic() {
        let mut s = 0.0;
        let sums: Vec<f64> = (1..=20)
            .map(|k| {
                s += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
                s
            })
            .collect();
        assert!((wynn_epsilon(&sums) - LN_2).abs() < 1e-12);
    }

    #[test]
    fn wynn_handles_constant_sequence() {
        assert_eq!(wynn_epsilon(&[1.5, 1.5, 1.5]), 1.5);
        assert_eq!(wynn_epsilon(&[]), 0.0);
    }

    fn exponential_cf(lambda: f64) -> impl Fn(f64) -> Complex64 {
        move |t| lambda / Complex64::new(lambda, -t)
    }

    #[test]
    fn exponential_median() {
        let lambda = 1.0;
        let r = gil_pelaez(exponential_cf(lambda), LN_2 / lambda, 1.0 / lambda, GpOpts::default()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-4);
    }

    #[test]
    fn exponential_curve() {
        for x in [0.0, 1e-3, 0.1, 0.7, 2.0, 5.0, 12.0, 30.0] {
            let r = gil_pelaez(exponential_cf(1.0), x, 1.0, GpOpts::default()).unwrap();
            let exact = 1.0 - (-x).exp();
            assert!((r.value - exact).abs() < 2e-6, "x={x}: {} vs {exact}", r.value);
        }
    }

    #[test]
    fn heavy_gamma_curve() {
        // Shape 0.3: the characteristic function decays like u^-0.3.
        use statrs::distribution::{ContinuousCDF, Gamma};
        let k = 0.3;
        let g = Gamma::new(k, k).unwrap();
        let mean = 1.0;
        let theta = mean / k;
        let cf = |t: f64| Complex64::new(1.0, -t * theta).powc(Complex64::new(-k, 0.0));
        for x in [1e-3, 0.05, 0.5, 1.0, 4.0, 20.0] {
            let r = gil_pelaez(cf, x, mean, GpOpts::default()).unwrap();
            let exact = g.cdf(x);
            assert!((r.value - exact).abs() < 5e-6, "x={x}: {} vs {exact}", r.value);
        }
    }

    #[test]
    fn negative_argument() {
        let r = gil_pelaez(exponential_cf(1.0), -1.0, 1.0, GpOpts::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn budget_exhaustion_reports_estimate() {
        let opts = GpOpts {
            max_panels: 3,
            ..GpOpts::default()
        };
        match gil_pelaez(exponential_cf(1.0), 1.0, 1.0, opts) {
            Err(Error::Inversion { panels, estimate, .. }) => {
                assert_eq!(panels, 3);
                assert!((0.0..=1.0).contains(&estimate));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
