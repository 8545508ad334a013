//! Analytic radar, communication and joint performance metrics.
//!
//! Every metric is an expectation over the desired-link powers `(S_R, S_C)`
//! of the interference CDF `F` evaluated at a link-dependent argument.
//! With `zeta_R, zeta_C` the residuals of the active [`ResidualMap`]:
//!
//! * coverage      `F(S_C/theta - zeta_R)`
//! * false alarm   `1 - F(gamma - zeta_C)`
//! * detection     `1 - F(gamma - S_R kappa - zeta_C)`
//! * success       `F(S_R kappa/theta' - zeta_C)`
//!
//! and the joint metrics combine two of these on the same realization.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cancellation::{ResidualMap, ResidualModel};
use crate::distributions::{DesiredLinkDistributions, EdgeFn, ExpectOpts, Region, Term};
use crate::error::{Error, Result};
use crate::interference::{CdfOpts, CdfSource, InterferenceCdf, InterferenceField};
use crate::quad::{integrate, QuadOpts};
use crate::scenario::ValidatedScenario;

/// Probability levels whose quantile curves are used as panel breaks.
const QUANTILE_LEVELS: [f64; 9] = [1e-4, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.9999];

/// Conditioning probabilities at or below this are rejected.
pub const NULL_CONDITIONING: f64 = 1e-9;

pub const DEFAULT_MAX_ETA: f64 = 20.0;
const TAIL_SPAN: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Coverage,
    FalseAlarm,
    Detection,
    Success,
    Jrdccp,
    Jrsccp,
    CGivenD,
    DGivenC,
    CGivenS,
    SGivenC,
    RateCdf,
    AvgRate,
}

impl MetricKind {
    pub const ALL: [MetricKind; 12] = [
        Self::Coverage,
        Self::FalseAlarm,
        Self::Detection,
        Self::Success,
        Self::Jrdccp,
        Self::Jrsccp,
        Self::CGivenD,
        Self::DGivenC,
        Self::CGivenS,
        Self::SGivenC,
        Self::RateCdf,
        Self::AvgRate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Coverage => "coverage",
            Self::FalseAlarm => "false_alarm",
            Self::Detection => "detection",
            Self::Success => "success",
            Self::Jrdccp => "jrdccp",
            Self::Jrsccp => "jrsccp",
            Self::CGivenD => "c_given_d",
            Self::DGivenC => "d_given_c",
            Self::CGivenS => "c_given_s",
            Self::SGivenC => "s_given_c",
            Self::RateCdf => "rate_cdf",
            Self::AvgRate => "avg_rate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Unchanged when every transmit power is scaled by the same factor.
    pub fn is_sir_based(&self) -> bool {
        !matches!(self, Self::FalseAlarm | Self::Detection | Self::Jrdccp | Self::CGivenD | Self::DGivenC)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact limit, no quadrature.
    Trivial,
    Regions,
    Clamped,
    ClosedForm,
    ShortCircuit,
    /// Ratio of two quadratures.
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub value: f64,
    pub method: Method,
    pub error_bound: f64,
}

impl MetricEstimate {
    fn exact(value: f64, method: Method) -> Self {
        Self {
            value,
            method,
            error_bound: 0.0,
        }
    }
}

/// How the joint metrics are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Sum over the disjoint regions where the joint event is possible.
    #[default]
    Regions,
    /// `max(F(b) - F(a), 0)` and `F(min(b1, b2))` over the full support.
    Clamped,
    /// Region boundaries written as explicit lines in the `(S_R, S_C)` plane.
    /// Only valid when the residual map is the identity.
    ClosedFormNoIc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointKind {
    Jrdccp,
    Jrsccp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionalKind {
    CGivenD,
    CGivenS,
    DGivenC,
    SGivenC,
}

/// Linear thresholds: communication SIR `theta`, radar SIR `theta_p` and
/// detection power `gamma` in watts. Unused entries are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta: f64,
    pub theta_p: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetBounds {
    pub lower: f64,
    pub upper: f64,
}

impl FrechetBounds {
    pub fn new(p_a: f64, p_c: f64) -> Self {
        Self {
            lower: (p_a + p_c - 1.0).max(0.0),
            upper: p_a.min(p_c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Bit/s/Hz.
    pub value: f64,
    pub error_bound: f64,
    /// Upper bound on the omitted part above `max_eta`.
    pub tail_bound: f64,
}

#[derive(Clone)]
pub struct Metrics {
    dists: DesiredLinkDistributions,
    cdf: Arc<dyn CdfSource>,
    kappa: f64,
    quantiles: Vec<f64>,
    opts: ExpectOpts,
    formulation: Formulation,
}

impl std::fmt::Debug for Metrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Metrics")
            .field("kappa", &self.kappa)
            .field("mean_interference", &self.cdf.mean())
            .field("opts", &self.opts)
            .field("formulation", &self.formulation)
            .finish()
    }
}

impl Metrics {
    pub fn new(scenario: &ValidatedScenario, cdf: Arc<dyn CdfSource>) -> Self {
        let mut quantiles: Vec<f64> = if cdf.mean() > 0.0 {
            QUANTILE_LEVELS.iter().map(|&p| cdf.quantile(p)).collect()
        } else {
            Vec::new()
        };
        quantiles.retain(|q| *q > 0.0);
        quantiles.dedup();
        Self {
            dists: DesiredLinkDistributions::new(scenario),
            cdf,
            kappa: scenario.params().kappa,
            quantiles,
            opts: ExpectOpts::default(),
            formulation: Formulation::default(),
        }
    }

    /// Builds the interference table for `scenario` and wraps it.
    pub fn build(scenario: &ValidatedScenario, opts: CdfOpts) -> Result<Self> {
        let table = InterferenceCdf::build(&InterferenceField::new(scenario), opts)?;
        Ok(Self::new(scenario, Arc::new(table)))
    }

    pub fn with_formulation(mut self, f: Formulation) -> Self {
        self.formulation = f;
        self
    }

    pub fn with_opts(mut self, opts: ExpectOpts) -> Self {
        self.opts = opts;
        self
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn opts(&self) -> ExpectOpts {
        self.opts
    }

    pub fn distributions(&self) -> &DesiredLinkDistributions {
        &self.dists
    }

    pub fn cdf_source(&self) -> &Arc<dyn CdfSource> {
        &self.cdf
    }

    /// Total error to expect from one metric value.
    pub fn tolerance(&self) -> f64 {
        self.opts.tol + 2.0 * self.cdf.error_bound()
    }

    fn f(&self, x: f64) -> f64 {
        self.cdf.cdf(x)
    }

    /// Zero crossing of `arg` and of `arg - x_q` for the tabulated quantiles.
    fn arg_edges<'a, A>(&'a self, arg: A) -> Vec<EdgeFn<'a>>
    where
        A: Fn(f64, f64) -> f64 + Copy + 'a,
    {
        let mut out: Vec<EdgeFn<'a>> = vec![Box::new(arg)];
        for &q in &self.quantiles {
            out.push(Box::new(move |s_r, s_c| arg(s_r, s_c) - q));
        }
        out
    }

    fn run(&self, terms: &[Term<'_>], cdf_terms: f64, method: Method) -> Result<MetricEstimate> {
        let e = self.dists.expect(terms, self.opts)?;
        Ok(MetricEstimate {
            value: e.value.clamp(0.0, 1.0),
            method,
            error_bound: e.error + cdf_terms * self.cdf.error_bound(),
        })
    }

    fn single<'a, A, G>(&'a self, arg: A, g: G) -> Result<MetricEstimate>
    where
        A: Fn(f64, f64) -> f64 + Copy + 'a,
        G: Fn(f64, f64) -> f64 + 'a,
    {
        let mut region = Region::everywhere();
        for e in self.arg_edges(arg) {
            region = region.with_edge(e);
        }
        self.run(
            &[Term {
                region,
                integrand: Box::new(g),
            }],
            1.0,
            Method::Regions,
        )
    }

    pub fn coverage(&self, theta: f64, model: &dyn ResidualMap) -> Result<MetricEstimate> {
        check_threshold("theta", theta)?;
        if theta == 0.0 {
            return Ok(MetricEstimate::exact(1.0, Method::Trivial));
        }
        if theta.is_infinite() {
            return Ok(MetricEstimate::exact(0.0, Method::Trivial));
        }
        let b = move |s_r: f64, s_c: f64| s_c / theta - model.residuals(s_r, s_c).0;
        self.single(b, move |s_r, s_c| self.f(b(s_r, s_c)))
    }

    pub fn false_alarm(&self, gamma: f64, model: &dyn ResidualMap) -> Result<MetricEstimate> {
        check_threshold("gamma", gamma)?;
        if gamma == 0.0 {
            return Ok(MetricEstimate::exact(1.0, Method::Trivial));
        }
        if gamma.is_infinite() {
            return Ok(MetricEstimate::exact(0.0, Method::Trivial));
        }
        let a0 = move |s_r: f64, s_c: f64| gamma - model.residuals(s_r, s_c).1;
        let r = self.single(a0, move |s_r, s_c| self.f(a0(s_r, s_c)))?;
        Ok(complement(r))
    }

    pub fn detection(&self, gamma: f64, model: &dyn ResidualMap) -> Result<MetricEstimate> {
        check_threshold("gamma", gamma)?;
        if gamma == 0.0 {
            return Ok(MetricEstimate::exact(1.0, Method::Trivial));
        }
        if gamma.is_infinite() {
            return Ok(MetricEstimate::exact(0.0, Method::Trivial));
        }
        let kappa = self.kappa;
        let a = move |s_r: f64, s_c: f64| gamma - s_r * kappa - model.residuals(s_r, s_c).1;
        let r = self.single(a, move |s_r, s_c| self.f(a(s_r, s_c)))?;
        Ok(complement(r))
    }

    pub fn success(&self, theta_p: f64, model: &dyn ResidualMap) -> Result<MetricEstimate> {
        check_threshold("theta_p", theta_p)?;
        if theta_p == 0.0 {
            return Ok(MetricEstimate::exact(1.0, Method::Trivial));
        }
        if theta_p.is_infinite() {
            return Ok(MetricEstimate::exact(0.0, Method::Trivial));
        }
        let kappa = self.kappa;
        let b1 = move |s_r: f64, s_c: f64| s_r * kappa / theta_p - model.residuals(s_r, s_c).1;
        self.single(b1, move |s_r, s_c| self.f(b1(s_r, s_c)))
    }

    /// Detection threshold `gamma` (watts) giving false-alarm probability `target`.
    pub fn fa_threshold(&self, target: f64, model: &dyn ResidualMap) -> Result<f64> {
        if !(target > 0.0 && target <= 1.0) {
            return Err(Error::InvalidArgument {
                name: "target_pfa",
                message: format!("{target} is not in (0, 1]"),
            });
        }
        if target == 1.0 {
            return Ok(0.0);
        }
        let pfa = |g: f64| self.false_alarm(g, model).map(|e| e.value);
        let scale = self.cdf.mean().max(self.dists.s_c_max()).max(f64::MIN_POSITIVE);
        let mut lo = 0.0;
        let mut hi = scale;
        let mut p_hi = pfa(hi)?;
        let mut steps = 0;
        while p_hi > target {
            lo = hi;
            hi *= 4.0;
            p_hi = pfa(hi)?;
            steps += 1;
            if steps > 40 {
                return Err(Error::TargetOutOfRange {
                    target,
                    lo: p_hi,
                    hi: 1.0,
                });
            }
        }
        if lo == 0.0 {
            // Walk down until the bracket straddles the target.
            lo = hi;
            let mut p_lo = p_hi;
            while p_lo <= target {
                hi = lo;
                lo /= 4.0;
                p_lo = pfa(lo)?;
                if lo < 1e-30 * scale {
                    return Err(Error::TargetOutOfRange {
                        target,
                        lo: p_hi,
                        hi: p_lo,
                    });
                }
            }
        }
        // pfa(lo) > target >= pfa(hi); bisect in log space.
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            let p = pfa(mid)?;
            if (p - target).abs() <= 2e-5 {
                return Ok(mid);
            }
            if p > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-12 {
                return Ok(mid);
            }
        }
        Ok((lo * hi).sqrt())
    }

    pub fn jrdccp(&self, theta: f64, gamma: f64, model: &dyn ResidualMap) -> Result<MetricEstimate> {
        check_threshold("theta", theta)?;
        check_threshold("gamma", gamma)?;
        if theta == 0.0 {
            return self.detection(gamma, model);
        }
        if gamma == 0.0 {
            return self.coverage(theta, model);
        }
        if theta.is_infinite() || gamma.is_infinite() {
            return Ok(MetricEstimate::exact(0.0, Method::Trivial));
        }
        let kappa = self.kappa;
        let a = move |s_r: f64, s_c: f64| gamma - s_r * kappa - model.residuals(s_r, s_c).1;
        let b = move |s_r: f64, s_c: f64| s_c / theta - model.residuals(s_r, s_c).0;
        let split = move |s_r: f64, s_c: f64| b(s_r, s_c) - a(s_r, s_c);
        let edges = || {
            let mut v = self.arg_edges(a);
            v.extend(self.arg_edges(b));
            v.push(Box::new(split));
            v
        };
        match self.formulation {
            Formulation::Regions => {
                let d1 = Region::new(Box::new(move |s_r, s_c| a(s_r, s_c) <= 0.0 && b(s_r, s_c) >= 0.0), edges());
                let d2 = Region::new(Box::new(move |s_r, s_c| a(s_r, s_c) > 0.0 && b(s_r, s_c) >= a(s_r, s_c)), Vec::new());
                self.run(
                    &[
                        Term {
                            region: d1,
                            integrand: Box::new(move |s_r, s_c| self.f(b(s_r, s_c))),
                        },
                        Term {
                            region: d2,
                            integrand: Box::new(move |s_r, s_c| self.f(b(s_r, s_c)) - self.f(a(s_r, s_c))),
                        },
                    ],
                    2.0,
                    Method::Regions,
                )
            }
            Formulation::Clamped => self.run(
                &[Term {
                    region: Region::new(Box::new(|_, _| true), edges()),
                    integrand: Box::new(move |s_r, s_c| (self.f(b(s_r, s_c)) - self.f(a(s_r, s_c))).max(0.0)),
                }],
                2.0,
                Method::Clamped,
            ),
            Formulation::ClosedFormNoIc => {
                require_passthrough(model)?;
                let d1_lo = move |s_r: f64| (theta * s_r).max(gamma - s_r * kappa);
                let d2_lo = move |s_r: f64| theta * (gamma - s_r * (kappa - 1.0)) / (theta + 1.0);
                let d2_hi = move |s_r: f64| gamma - kappa * s_r;
                let b0 = move |s_r: f64, s_c: f64| s_c / theta - s_r;
                let a0 = move |s_r: f64, s_c: f64| gamma - s_r * kappa - s_c;
                let mut e = self.arg_edges(a0);
                e.extend(self.arg_edges(b0));
                e.push(Box::new(move |s_r, s_c| s_c - d1_lo(s_r)));
                e.push(Box::new(move |s_r, s_c| s_c - d2_lo(s_r)));
                let d1 = Region::new(Box::new(move |s_r, s_c| s_c >= d1_lo(s_r)), e);
                let d2 = Region::new(Box::new(move |s_r, s_c| s_c >= d2_lo(s_r) && s_c < d2_hi(s_r)), Vec::new());
                self.run(
                    &[
                        Term {
                            region: d1,
                            integrand: Box::new(move |s_r, s_c| self.f(b0(s_r, s_c))),
                        },
                        Term {
                            region: d2,
                            integrand: Box::new(move |s_r, s_c| self.f(b0(s_r, s_c)) - self.f(a0(s_r, s_c))),
                        },
                    ],
                    2.0,
                    Method::ClosedForm,
                )
            }
        }
    }

    pub fn jrsccp(&self, theta_p: f64, theta: f64, model: &dyn ResidualMap) -> Result<MetricEstimate> {
        check_threshold("theta_p", theta_p)?;
        check_threshold("theta", theta)?;
        if theta == 0.0 {
            return self.success(theta_p, model);
        }
        if theta_p == 0.0 {
            return self.coverage(theta, model);
        }
        let kappa = self.kappa;
        if model.is_passthrough() && theta * theta_p > kappa {
            return Ok(MetricEstimate::exact(0.0, Method::ShortCircuit));
        }
        if theta.is_infinite() || theta_p.is_infinite() {
            return Ok(MetricEstimate::exact(0.0, Method::Trivial));
        }
        let b1 = move |s_r: f64, s_c: f64| s_r * kappa / theta_p - model.residuals(s_r, s_c).1;
        let b2 = move |s_r: f64, s_c: f64| s_c / theta - model.residuals(s_r, s_c).0;
        let split = move |s_r: f64, s_c: f64| b2(s_r, s_c) - b1(s_r, s_c);
        let edges = || {
            let mut v = self.arg_edges(b1);
            v.extend(self.arg_edges(b2));
            v.push(Box::new(split));
            v
        };
        match self.formulation {
            Formulation::Regions => {
                let s1 = Region::new(Box::new(move |s_r, s_c| b1(s_r, s_c) >= 0.0 && b2(s_r, s_c) >= b1(s_r, s_c)), edges());
                let s2 = Region::new(Box::new(move |s_r, s_c| b2(s_r, s_c) >= 0.0 && b1(s_r, s_c) > b2(s_r, s_c)), Vec::new());
                self.run(
                    &[
                        Term {
                            region: s1,
                            integrand: Box::new(move |s_r, s_c| self.f(b1(s_r, s_c))),
                        },
                        Term {
                            region: s2,
                            integrand: Box::new(move |s_r, s_c| self.f(b2(s_r, s_c))),
                        },
                    ],
                    1.0,
                    Method::Regions,
                )
            }
            Formulation::Clamped => self.run(
                &[Term {
                    region: Region::new(Box::new(|_, _| true), edges()),
                    integrand: Box::new(move |s_r, s_c| self.f(b1(s_r, s_c).min(b2(s_r, s_c)))),
                }],
                1.0,
                Method::Clamped,
            ),
            Formulation::ClosedFormNoIc => {
                require_passthrough(model)?;
                let split_line = move |s_r: f64| s_r * theta * (theta_p + kappa) / (theta_p * (theta + 1.0));
                let upper = move |s_r: f64| s_r * kappa / theta_p;
                let lower = move |s_r: f64| theta * s_r;
                let b10 = move |s_r: f64, s_c: f64| s_r * kappa / theta_p - s_c;
                let b20 = move |s_r: f64, s_c: f64| s_c / theta - s_r;
                let mut e = self.arg_edges(b10);
                e.extend(self.arg_edges(b20));
                e.push(Box::new(move |s_r, s_c| s_c - split_line(s_r)));
                let s1 = Region::new(
                    Box::new(move |s_r, s_c| s_c >= split_line(s_r) && s_c <= upper(s_r)),
                    e,
                );
                let s2 = Region::new(
                    Box::new(move |s_r, s_c| s_c >= lower(s_r) && s_c < split_line(s_r)),
                    Vec::new(),
                );
                self.run(
                    &[
                        Term {
                            region: s1,
                            integrand: Box::new(move |s_r, s_c| self.f(b10(s_r, s_c))),
                        },
                        Term {
                            region: s2,
                            integrand: Box::new(move |s_r, s_c| self.f(b20(s_r, s_c))),
                        },
                    ],
                    1.0,
                    Method::ClosedForm,
                )
            }
        }
    }

    pub fn joint(&self, kind: JointKind, t: &Thresholds, model: &dyn ResidualMap) -> Result<MetricEstimate> {
        match kind {
            JointKind::Jrdccp => self.jrdccp(t.theta, t.gamma, model),
            JointKind::Jrsccp => self.jrsccp(t.theta_p, t.theta, model),
        }
    }

    pub fn frechet_bounds(&self, kind: JointKind, t: &Thresholds, model: &dyn ResidualMap) -> Result<FrechetBounds> {
        let p_a = match kind {
            JointKind::Jrdccp => self.detection(t.gamma, model)?,
            JointKind::Jrsccp => self.success(t.theta_p, model)?,
        };
        let p_c = self.coverage(t.theta, model)?;
        Ok(FrechetBounds::new(p_a.value, p_c.value))
    }

    pub fn conditional(&self, kind: ConditionalKind, t: &Thresholds, model: &dyn ResidualMap) -> Result<MetricEstimate> {
        let (joint, cond) = match kind {
            ConditionalKind::CGivenD => (self.jrdccp(t.theta, t.gamma, model)?, self.detection(t.gamma, model)?),
            ConditionalKind::DGivenC => (self.jrdccp(t.theta, t.gamma, model)?, self.coverage(t.theta, model)?),
            ConditionalKind::CGivenS => (self.jrsccp(t.theta_p, t.theta, model)?, self.success(t.theta_p, model)?),
            ConditionalKind::SGivenC => (self.jrsccp(t.theta_p, t.theta, model)?, self.coverage(t.theta, model)?),
        };
        if cond.value <= NULL_CONDITIONING {
            return Err(Error::NullConditioning(cond.value));
        }
        let ratio = joint.value / cond.value;
        Ok(MetricEstimate {
            value: ratio.clamp(0.0, 1.0),
            method: Method::Ratio,
            error_bound: (joint.error_bound + ratio * cond.error_bound) / cond.value,
        })
    }

    /// `Pr(log2(1 + SIR_C) >= eta)`.
    pub fn rate_cdf(&self, eta: f64, model: &dyn ResidualMap) -> Result<MetricEstimate> {
        check_threshold("eta", eta)?;
        self.coverage(eta.exp2() - 1.0, model)
    }

    /// `E[log2(1 + SIR_C)]` truncated at `max_eta`.
    ///
    /// Integrates `rate_cdf` over `[0, max_eta]`. The omitted part is charged
    /// to the error: coverage is integrated over `[max_eta, max_eta + 40]` and
    /// bounded by `F(S_C,max / theta)` further out.
    pub fn avg_rate(&self, max_eta: f64, model: &dyn ResidualMap) -> Result<RateEstimate> {
        if !(max_eta.is_finite() && max_eta > 0.0) {
            return Err(Error::InvalidArgument {
                name: "max_eta",
                message: format!("{max_eta} must be finite and > 0"),
            });
        }
        let mut failure = None;
        let mut worst = 0.0f64;
        let tol = self.opts.tol * max_eta;
        let res = integrate(
            |eta: f64| match self.rate_cdf(eta, model) {
                Ok(e) => {
                    worst = worst.max(e.error_bound);
                    e.value
                }
                Err(err) => {
                    failure.get_or_insert(err);
                    f64::NAN
                }
            },
            0.0,
            max_eta,
            QuadOpts {
                abs_tol: tol,
                rel_tol: 0.0,
                max_panels: 64,
            },
        );
        if let Some(err) = failure {
            return Err(err);
        }
        // Omitted part: coverage itself over the next stretch, then the
        // residual-free bound beyond it.
        let near_end = max_eta + TAIL_SPAN;
        let near = integrate(
            |eta: f64| match self.rate_cdf(eta, model) {
                Ok(e) => e.value + e.error_bound,
                Err(err) => {
                    failure.get_or_insert(err);
                    f64::NAN
                }
            },
            max_eta,
            near_end,
            QuadOpts {
                abs_tol: tol,
                rel_tol: 0.0,
                max_panels: 16,
            },
        );
        if let Some(err) = failure {
            return Err(err);
        }
        let s_c_max = self.dists.s_c_max();
        let far = integrate(
            |eta: f64| self.f(s_c_max / (eta.exp2() - 1.0)),
            near_end,
            near_end + 200.0,
            QuadOpts::abs(1e-3 * tol),
        );
        let tail_bound = near.value + near.error + far.value + far.error;
        Ok(RateEstimate {
            value: res.value,
            error_bound: res.error + worst * max_eta + tail_bound,
            tail_bound,
        })
    }

    /// Dispatches on `kind`. `eta` is used by the rate metrics, with
    /// `AvgRate` reading it as `max_eta`.
    pub fn evaluate(&self, kind: MetricKind, t: &Thresholds, eta: f64, model: &ResidualModel) -> Result<MetricEstimate> {
        match kind {
            MetricKind::Coverage => self.coverage(t.theta, model),
            MetricKind::FalseAlarm => self.false_alarm(t.gamma, model),
            MetricKind::Detection => self.detection(t.gamma, model),
            MetricKind::Success => self.success(t.theta_p, model),
            MetricKind::Jrdccp => self.jrdccp(t.theta, t.gamma, model),
            MetricKind::Jrsccp => self.jrsccp(t.theta_p, t.theta, model),
            MetricKind::CGivenD => self.conditional(ConditionalKind::CGivenD, t, model),
            MetricKind::DGivenC => self.conditional(ConditionalKind::DGivenC, t, model),
            MetricKind::CGivenS => self.conditional(ConditionalKind::CGivenS, t, model),
            MetricKind::SGivenC => self.conditional(ConditionalKind::SGivenC, t, model),
            MetricKind::RateCdf => self.rate_cdf(eta, model),
            MetricKind::AvgRate => {
                let r = self.avg_rate(eta, model)?;
                Ok(MetricEstimate {
                    value: r.value,
                    method: Method::Regions,
                    error_bound: r.error_bound,
                })
            }
        }
    }
}

fn complement(e: MetricEstimate) -> MetricEstimate {
    MetricEstimate {
        value: (1.0 - e.value).clamp(0.0, 1.0),
        ..e
    }
}

fn check_threshold(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name,
            message: format!("{v} must be >= 0"),
        })
    }
}

fn require_passthrough(model: &dyn ResidualMap) -> Result<()> {
    if model.is_passthrough() {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name: "formulation",
            message: "closed-form regions need the identity residual map".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{validate, ScenarioParams};
    use crate::units::db_to_linear;
    use std::sync::OnceLock;

    fn metrics() -> &'static Metrics {
        static M: OnceLock<Metrics> = OnceLock::new();
        M.get_or_init(|| {
            let s = validate(ScenarioParams::reference()).unwrap();
            Metrics::build(&s, CdfOpts::default()).unwrap()
        })
    }

    const NONE: ResidualModel = ResidualModel::None;

    #[test]
    fn trivial_limits() {
        let m = metrics();
        assert_eq!(m.coverage(0.0, &NONE).unwrap().value, 1.0);
        assert_eq!(m.coverage(f64::INFINITY, &NONE).unwrap().value, 0.0);
        assert_eq!(m.false_alarm(0.0, &NONE).unwrap().value, 1.0);
        assert_eq!(m.detection(0.0, &NONE).unwrap().value, 1.0);
        assert_eq!(m.success(0.0, &NONE).unwrap().value, 1.0);
        assert_eq!(m.rate_cdf(0.0, &NONE).unwrap().value, 1.0);
        assert!(m.coverage(1e12, &NONE).unwrap().value < 1e-6);
        assert!(m.success(1e12, &NONE).unwrap().value < 1e-6);
        assert!(m.coverage(1e-9, &NONE).unwrap().value > 1.0 - 1e-4);
    }

    #[test]
    fn negative_threshold_rejected() {
        assert!(matches!(
            metrics().coverage(-1.0, &NONE),
            Err(Error::InvalidArgument { name: "theta", .. })
        ));
    }

    #[test]
    fn coverage_is_nonincreasing() {
        let m = metrics();
        let mut prev = 1.0;
        for db in (-40..=30).step_by(5) {
            let v = m.coverage(db_to_linear(db as f64), &NONE).unwrap().value;
            assert!(v <= prev + 2.0 * m.tolerance(), "{db} dB: {v} > {prev}");
            prev = v;
        }
    }

    #[test]
    fn rate_cdf_matches_coverage() {
        let m = metrics();
        let a = m.rate_cdf(1.0, &NONE).unwrap().value;
        let b = m.coverage(1.0, &NONE).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn jrsccp_short_circuit() {
        let m = metrics();
        let e = m.jrsccp(2.0, 1.0, &NONE).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.method, Method::ShortCircuit);
        let c = m.conditional(
            ConditionalKind::SGivenC,
            &Thresholds {
                theta: 1.0,
                theta_p: 2.0,
                gamma: 0.0,
            },
            &NONE,
        );
        assert_eq!(c.unwrap().value, 0.0);
    }

    #[test]
    fn null_conditioning() {
        let m = metrics();
        let t = Thresholds {
            theta: 1e12,
            theta_p: 0.1,
            gamma: 1e-13,
        };
        assert!(matches!(
            m.conditional(ConditionalKind::DGivenC, &t, &NONE),
            Err(Error::NullConditioning(_))
        ));
    }

    #[test]
    fn closed_form_needs_identity() {
        let m = metrics().clone().with_formulation(Formulation::ClosedFormNoIc);
        let r = m.jrsccp(0.1, 0.01, &ResidualModel::perfect());
        assert!(matches!(r, Err(Error::InvalidArgument { name: "formulation", .. })));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in MetricKind::ALL {
            assert_eq!(MetricKind::parse(k.name()), Some(k));
        }
        assert_eq!(MetricKind::parse("nope"), None);
    }

    #[test]
    fn frechet_collapse() {
        let b = FrechetBounds::new(0.7, 1.0);
        assert_eq!((b.lower, b.upper), (0.7, 0.7));
        let b = FrechetBounds::new(0.3, 0.6);
        assert_eq!(b.lower, 0.0);
    }
}
