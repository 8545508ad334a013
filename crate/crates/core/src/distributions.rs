//! Distances and received powers of the desired links, and expectations over
//! `(S_R, S_C)` restricted to regions of the power plane.
//!
//! `r_R` is the distance to the nearest vehicle ahead within the detectable
//! range, `r_C` the longitudinal distance to the nearest traffic light.
//! `S_R = rho_R r_R^-alpha_R` and `S_C = rho_C (r_C^2 + d_C^2)^(-alpha_C/2)`.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_breaks, QuadOpts};
use crate::scenario::ValidatedScenario;

/// Default truncation of the `r_C` exponential tail.
pub const DEFAULT_TAIL_EPS: f64 = 1e-8;
/// Default absolute accuracy of [`DesiredLinkDistributions::expect`].
pub const DEFAULT_TOL: f64 = 1e-5;

const SERIES_THRESHOLD: f64 = 1e-6;
const SCAN_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredLinkDistributions {
    lambda_v: f64,
    r_rmin: f64,
    r_rmax: f64,
    alpha_r: f64,
    rho_r: f64,
    lambda_l: f64,
    r_cmin: f64,
    d_c: f64,
    alpha_c: f64,
    rho_c: f64,
}

pub type Predicate<'a> = Box<dyn Fn(f64, f64) -> bool + 'a>;
pub type EdgeFn<'a> = Box<dyn Fn(f64, f64) -> f64 + 'a>;
pub type Integrand<'a> = Box<dyn Fn(f64, f64) -> f64 + 'a>;

/// Subset of the `(S_R, S_C)` plane.
///
/// `edges` are functions whose zero sets contain the region boundary and any
/// other curve across which the integrand changes quickly; the quadrature
/// places panel breaks on them.
pub struct Region<'a> {
    contains: Predicate<'a>,
    edges: Vec<EdgeFn<'a>>,
    empty: bool,
}

impl<'a> Region<'a> {
    pub fn new(contains: Predicate<'a>, edges: Vec<EdgeFn<'a>>) -> Self {
        Self {
            contains,
            edges,
            empty: false,
        }
    }

    pub fn everywhere() -> Self {
        Self::new(Box::new(|_, _| true), Vec::new())
    }

    pub fn nowhere() -> Self {
        Self {
            contains: Box::new(|_, _| false),
            edges: Vec::new(),
            empty: true,
        }
    }

    pub fn with_edge(mut self, e: EdgeFn<'a>) -> Self {
        self.edges.push(e);
        self
    }

    pub fn contains(&self, s_r: f64, s_c: f64) -> bool {
        !self.empty && (self.contains)(s_r, s_c)
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }
}

/// `integrand * 1_region`, one summand of a metric.
pub struct Term<'a> {
    pub region: Region<'a>,
    pub integrand: Integrand<'a>,
}

#[derive(Debug, Clone, Copy)]
pub struct ExpectOpts {
    pub tol: f64,
    pub tail_eps: f64,
    /// Bound on `|g|`, used to charge the truncated `r_C` tail to the error.
    pub bound: f64,
    pub max_panels: usize,
}

impl Default for ExpectOpts {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            tail_eps: DEFAULT_TAIL_EPS,
            bound: 1.0,
            max_panels: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub error: f64,
}

impl DesiredLinkDistributions {
    pub fn new(scenario: &ValidatedScenario) -> Self {
        let p = scenario.params();
        let d = scenario.derived();
        Self {
            lambda_v: p.lambda_v,
            r_rmin: p.r_rmin,
            r_rmax: p.r_rmax,
            alpha_r: p.alpha_r,
            rho_r: d.rho_r,
            lambda_l: p.lambda_l,
            r_cmin: d.r_cmin,
            d_c: p.d_c,
            alpha_c: p.alpha_c,
            rho_c: d.rho_c,
        }
    }

    fn radar_span(&self) -> f64 {
        self.r_rmax - self.r_rmin
    }

    fn uniform_limit(&self) -> bool {
        self.lambda_v * self.radar_span() < SERIES_THRESHOLD
    }

    pub fn pdf_r_r(&self, r: f64) -> f64 {
        if !(r >= self.r_rmin && r <= self.r_rmax) {
            return 0.0;
        }
        let (l, x, span) = (self.lambda_v, r - self.r_rmin, self.radar_span());
        if self.uniform_limit() {
            (1.0 + l * (0.5 * span - x)) / span
        } else {
            l * (-l * x).exp() / -(-l * span).exp_m1()
        }
    }

    pub fn cdf_r_r(&self, r: f64) -> f64 {
        if r <= self.r_rmin {
            return 0.0;
        }
        if r >= self.r_rmax {
            return 1.0;
        }
        let (l, x, span) = (self.lambda_v, r - self.r_rmin, self.radar_span());
        if self.uniform_limit() {
            x / span * (1.0 + 0.5 * l * (span - x))
        } else {
            (-l * x).exp_m1() / (-l * span).exp_m1()
        }
    }

    pub fn quantile_r_r(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let (l, span) = (self.lambda_v, self.radar_span());
        let x = if self.uniform_limit() {
            u * span * (1.0 - 0.5 * l * span * (1.0 - u))
        } else {
            -(u * (-l * span).exp_m1()).ln_1p() / l
        };
        (self.r_rmin + x).clamp(self.r_rmin, self.r_rmax)
    }

    pub fn pdf_r_c(&self, r: f64) -> f64 {
        if r < self.r_cmin {
            return 0.0;
        }
        self.lambda_l * (-self.lambda_l * (r - self.r_cmin)).exp()
    }

    pub fn cdf_r_c(&self, r: f64) -> f64 {
        if r <= self.r_cmin {
            return 0.0;
        }
        -(-self.lambda_l * (r - self.r_cmin)).exp_m1()
    }

    pub fn quantile_r_c(&self, u: f64) -> f64 {
        self.r_cmin - (-u.clamp(0.0, 1.0)).ln_1p() / self.lambda_l
    }

    pub fn s_r(&self, r: f64) -> f64 {
        self.rho_r * r.powf(-self.alpha_r)
    }

    pub fn s_c(&self, r: f64) -> f64 {
        self.rho_c * (r * r + self.d_c * self.d_c).powf(-0.5 * self.alpha_c)
    }

    /// Inverse of [`Self::s_r`].
    pub fn r_of_s_r(&self, s: f64) -> f64 {
        (self.rho_r / s).powf(1.0 / self.alpha_r)
    }

    /// Inverse of [`Self::s_c`] on `(0, S_C(0)]`.
    pub fn r_of_s_c(&self, s: f64) -> f64 {
        let r2 = (self.rho_c / s).powf(2.0 / self.alpha_c) - self.d_c * self.d_c;
        r2.max(0.0).sqrt()
    }

    pub fn s_r_range(&self) -> (f64, f64) {
        (self.s_r(self.r_rmax), self.s_r(self.r_rmin))
    }

    pub fn s_c_max(&self) -> f64 {
        self.s_c(self.r_cmin)
    }

    pub fn pdf_s_r(&self, s: f64) -> f64 {
        let (lo, hi) = self.s_r_range();
        if !(s >= lo && s <= hi) {
            return 0.0;
        }
        let r = self.r_of_s_r(s).clamp(self.r_rmin, self.r_rmax);
        self.pdf_r_r(r) * r / (self.alpha_r * s)
    }

    pub fn pdf_s_c(&self, s: f64) -> f64 {
        if !(s > 0.0 && s <= self.s_c_max()) {
            return 0.0;
        }
        let r = self.r_of_s_c(s).max(self.r_cmin);
        self.pdf_r_c(r) * (r * r + self.d_c * self.d_c) / (self.alpha_c * s * r)
    }

    /// Truncation point of the `r_C` tail.
    pub fn r_c_trunc(&self, tail_eps: f64) -> f64 {
        self.r_cmin - tail_eps.ln() / self.lambda_l
    }

    /// `E[g(S_R, S_C) 1_region(S_R, S_C)]`.
    pub fn restricted_expectation<'a, G>(&self, g: G, region: Region<'a>, opts: ExpectOpts) -> Result<Expectation>
    where
        G: Fn(f64, f64) -> f64 + 'a,
    {
        self.expect(
            &[Term {
                region,
                integrand: Box::new(g),
            }],
            opts,
        )
    }

    /// `sum_k E[g_k 1_{region_k}]` as a single 2-D quadrature in distance space.
    pub fn expect(&self, terms: &[Term], opts: ExpectOpts) -> Result<Expectation> {
        let live: Vec<&Term> = terms.iter().filter(|t| !t.region.is_empty()).collect();
        if live.is_empty() {
            return Ok(Expectation {
                value: 0.0,
                error: 0.0,
            });
        }
        let edges: Vec<&EdgeFn<'_>> = live.iter().flat_map(|t| t.region.edges.iter()).collect();
        let r_c_hi = self.r_c_trunc(opts.tail_eps);
        let inner_tol = opts.tol / 20.0;
        let inner_err = Cell::new(0.0f64);
        let inner_failed = Cell::new(false);

        let integrand = |s_r: f64, s_c: f64| -> f64 {
            let mut v = 0.0;
            for t in &live {
                if t.region.contains(s_r, s_c) {
                    v += (t.integrand)(s_r, s_c);
                }
            }
            v
        };

        let inner = |r_r: f64| -> f64 {
            let s_r = self.s_r(r_r);
            let mut pts = vec![self.r_cmin, r_c_hi];
            for e in &edges {
                let f = |r_c: f64| e(s_r, self.s_c(r_c));
                push_roots(&f, self.r_cmin, r_c_hi, &mut pts);
            }
            sort_dedup(&mut pts);
            let res = integrate_breaks(
                |r_c: f64| integrand(s_r, self.s_c(r_c)) * self.pdf_r_c(r_c),
                &pts,
                QuadOpts {
                    abs_tol: inner_tol,
                    rel_tol: 0.0,
                    max_panels: opts.max_panels,
                },
            );
            if !res.converged {
                inner_failed.set(true);
            }
            inner_err.set(inner_err.get().max(res.error));
            res.value
        };

        let mut pts = vec![self.r_rmin, self.r_rmax];
        for r_c in [self.r_cmin, r_c_hi] {
            let s_c = self.s_c(r_c);
            for e in &edges {
                let f = |r_r: f64| e(self.s_r(r_r), s_c);
                push_roots(&f, self.r_rmin, self.r_rmax, &mut pts);
            }
        }
        sort_dedup(&mut pts);
        let outer = integrate_breaks(
            |r_r: f64| inner(r_r) * self.pdf_r_r(r_r),
            &pts,
            QuadOpts {
                abs_tol: opts.tol / 2.0,
                rel_tol: 0.0,
                max_panels: opts.max_panels,
            },
        );
        let error = outer.error + inner_err.get() + opts.tail_eps * opts.bound;
        if !outer.converged || inner_failed.get() || error > opts.tol {
            return Err(Error::Quadrature {
                what: "restricted expectation",
                estimate: outer.value,
                error,
                target: opts.tol,
            });
        }
        Ok(Expectation {
            value: outer.value,
            error,
        })
    }

    /// `E[g(S_R, S_C)]` integrated against the power densities in `ln s`.
    /// Independent cross-check of the distance-space quadrature.
    pub fn expect_power_space<G>(&self, g: G, opts: ExpectOpts) -> Result<Expectation>
    where
        G: Fn(f64, f64) -> f64,
    {
        let (sr_lo, sr_hi) = self.s_r_range();
        let sc_lo = self.s_c(self.r_c_trunc(opts.tail_eps));
        let sc_hi = self.s_c_max();
        let inner_err = Cell::new(0.0f64);
        let inner = |s_r: f64| -> f64 {
            let res = integrate(
                |t: f64| {
                    let s_c = t.exp();
                    g(s_r, s_c) * self.pdf_s_c(s_c) * s_c
                },
                sc_lo.ln(),
                sc_hi.ln(),
                QuadOpts::abs(opts.tol / 20.0),
            );
            inner_err.set(inner_err.get().max(res.error));
            res.value
        };
        let outer = integrate(
            |t: f64| {
                let s_r = t.exp();
                inner(s_r) * self.pdf_s_r(s_r) * s_r
            },
            sr_lo.ln(),
            sr_hi.ln(),
            QuadOpts::abs(opts.tol / 2.0),
        );
        let error = outer.error + inner_err.get() + opts.tail_eps * opts.bound;
        if !outer.converged || error > opts.tol {
            return Err(Error::Quadrature {
                what: "power-space expectation",
                estimate: outer.value,
                error,
                target: opts.tol,
            });
        }
        Ok(Expectation {
            value: outer.value,
            error,
        })
    }
}

/// Sign changes of `f` on `[lo, hi]` located by a log-spaced scan and bisection.
fn push_roots<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, out: &mut Vec<f64>) {
    let ratio = (hi / lo).ln();
    let at = |i: usize| {
        if i == SCAN_POINTS {
            hi
        } else {
            lo * (ratio * i as f64 / SCAN_POINTS as f64).exp()
        }
    };
    let mut x0 = lo;
    let mut f0 = f(x0);
    for i in 1..=SCAN_POINTS {
        let x1 = at(i);
        let f1 = f(x1);
        if f0 == 0.0 {
            out.push(x0);
        } else if f0.is_finite() && f1.is_finite() && (f0 < 0.0) != (f1 < 0.0) && f1 != 0.0 {
            out.push(bisect(f, x0, x1, f0));
        }
        x0 = x1;
        f0 = f1;
    }
    if f0 == 0.0 {
        out.push(x0);
    }
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, fa: f64) -> f64 {
    let neg = fa < 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b || (b - a) <= 1e-14 * b.abs() {
            break;
        }
        if (f(m) < 0.0) == neg {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup();
}
