//! Monte Carlo simulation of road realizations.
//!
//! Link constants are recomputed here from the raw parameters rather than
//! taken from [`crate::scenario::derive`], and nothing from the analytic
//! modules is used apart from the residual model itself.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::cancellation::{residuals, ResidualModel};
use crate::metrics::{MetricKind, Thresholds};
use crate::scenario::ValidatedScenario;

const C0: f64 = 299_792_458.0;
/// Normal quantile for a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadarSampling {
    /// Simulate the vehicle PPP on the detectable range, retry when empty and
    /// keep the nearest point.
    #[default]
    Rejection,
    /// Invert the conditional nearest-vehicle CDF.
    InverseCdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    #[default]
    Normal,
    ClopperPearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOpts {
    pub n: usize,
    pub seed: u64,
    pub sampling: RadarSampling,
    pub ci: CiMethod,
    /// Mean interference power left beyond the truncation radius, relative to
    /// the weakest radar echo.
    pub trunc_rel: f64,
}

impl Default for McOpts {
    fn default() -> Self {
        Self {
            n: 100_000,
            seed: 1,
            sampling: RadarSampling::default(),
            ci: CiMethod::default(),
            trunc_rel: 1e-6,
        }
    }
}

/// Independent copy of the link geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McModel {
    pub lambda_v: f64,
    pub lambda_l: f64,
    pub lambda_i: f64,
    pub r_rmin: f64,
    pub r_rmax: f64,
    pub r_cmin: f64,
    pub r_imin: f64,
    pub r_trunc: f64,
    pub d_c: f64,
    pub d_i: f64,
    pub alpha_r: f64,
    pub alpha_c: f64,
    pub alpha_i: f64,
    pub rho_r: f64,
    pub rho_c: f64,
    pub rho_i: f64,
    pub kappa: f64,
    pub k: f64,
}

impl McModel {
    pub fn new(scenario: &ValidatedScenario, trunc_rel: f64) -> Self {
        let p = scenario.params();
        let wavelength = C0 / p.f_c;
        let fs = wavelength * wavelength / (4.0 * PI);
        let rho_r = p.p_v * p.g_r * fs / p.beta_r / 2f64.powf(p.alpha_r);
        let rho_c = p.p_l * p.g_c * fs / p.beta_c;
        let rho_i = p.p_v * p.g_i * fs / p.beta_i;
        let r_cmin = p.d_c / (0.5 * p.psi_lt.min(p.psi_vr)).tan();
        let r_imin = p.d_i / (0.5 * p.psi_vt.min(p.psi_vr)).tan();
        let s_rmin = rho_r * p.r_rmax.powf(-p.alpha_r);
        let a1 = p.alpha_i - 1.0;
        let r_trunc = if p.lambda_i > 0.0 {
            (p.lambda_i * rho_i / (a1 * trunc_rel * s_rmin))
                .powf(1.0 / a1)
                .max(r_imin)
        } else {
            r_imin
        };
        Self {
            lambda_v: p.lambda_v,
            lambda_l: p.lambda_l,
            lambda_i: p.lambda_i,
            r_rmin: p.r_rmin,
            r_rmax: p.r_rmax,
            r_cmin,
            r_imin,
            r_trunc,
            d_c: p.d_c,
            d_i: p.d_i,
            alpha_r: p.alpha_r,
            alpha_c: p.alpha_c,
            alpha_i: p.alpha_i,
            rho_r,
            rho_c,
            rho_i,
            kappa: p.kappa,
            k: p.k,
        }
    }

    /// Mean interference power beyond the truncation radius (upper bound).
    pub fn truncated_mean(&self) -> f64 {
        let a1 = self.alpha_i - 1.0;
        self.lambda_i * self.rho_i * self.r_trunc.powf(-a1) / a1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub r_r: f64,
    pub r_c: f64,
    pub interferers: Vec<f64>,
    pub fading: Vec<f64>,
    pub s_r: f64,
    pub s_c: f64,
    pub i: f64,
}

/// `|h|^2` of a unit-power Rician channel.
pub fn rician_gain<R: Rng + ?Sized>(rng: &mut R, k: f64) -> f64 {
    let nu = (k / (k + 1.0)).sqrt();
    let sigma = (0.5 / (k + 1.0)).sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    let n = Normal::new(0.0, sigma).expect("sigma > 0");
    let x = nu * phi.cos() + n.sample(rng);
    let y = nu * phi.sin() + n.sample(rng);
    x * x + y * y
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("mean > 0").sample(rng) as usize
}

pub fn sample_r_r<R: Rng + ?Sized>(rng: &mut R, m: &McModel, how: RadarSampling) -> f64 {
    let span = m.r_rmax - m.r_rmin;
    match how {
        RadarSampling::Rejection => loop {
            let n = poisson(rng, m.lambda_v * span);
            if n == 0 {
                continue;
            }
            let u = (0..n).map(|_| rng.random::<f64>()).fold(1.0, f64::min);
            return m.r_rmin + u * span;
        },
        RadarSampling::InverseCdf => {
            let u: f64 = rng.random();
            let x = -(u * (-m.lambda_v * span).exp_m1()).ln_1p() / m.lambda_v;
            m.r_rmin + x.clamp(0.0, span)
        }
    }
}

pub fn sample_realization<R: Rng + ?Sized>(rng: &mut R, m: &McModel, how: RadarSampling) -> Realization {
    let r_r = sample_r_r(rng, m, how);
    let r_c = m.r_cmin + Exp::new(m.lambda_l).expect("lambda_L > 0").sample(rng);
    let n_i = poisson(rng, m.lambda_i * (m.r_trunc - m.r_imin));
    let mut interferers = Vec::with_capacity(n_i);
    let mut fading = Vec::with_capacity(n_i);
    let mut i = 0.0;
    for _ in 0..n_i {
        let r = m.r_imin + rng.random::<f64>() * (m.r_trunc - m.r_imin);
        let h = rician_gain(rng, m.k);
        i += m.rho_i * h * (r * r + m.d_i * m.d_i).powf(-0.5 * m.alpha_i);
        interferers.push(r);
        fading.push(h);
    }
    Realization {
        r_r,
        r_c,
        interferers,
        fading,
        s_r: m.rho_r * r_r.powf(-m.alpha_r),
        s_c: m.rho_c * (r_c * r_c + m.d_c * m.d_c).powf(-0.5 * m.alpha_c),
        i,
    }
}

/// Stream `index` of the generator seeded by `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Per-realization powers `(S_R, S_C, I)`, shared by every threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub s_r: Vec<f64>,
    pub s_c: Vec<f64>,
    pub i: Vec<f64>,
    pub seed: u64,
    pub r_trunc: f64,
    pub kappa: f64,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.s_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_r.is_empty()
    }
}

pub fn simulate(scenario: &ValidatedScenario, opts: &McOpts) -> Samples {
    let m = McModel::new(scenario, opts.trunc_rel);
    let rows: Vec<(f64, f64, f64)> = (0..opts.n as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = stream(opts.seed, idx);
            let r = sample_realization(&mut rng, &m, opts.sampling);
            (r.s_r, r.s_c, r.i)
        })
        .collect();
    let mut s = Samples {
        s_r: Vec::with_capacity(rows.len()),
        s_c: Vec::with_capacity(rows.len()),
        i: Vec::with_capacity(rows.len()),
        seed: opts.seed,
        r_trunc: m.r_trunc,
        kappa: m.kappa,
    };
    for (a, b, c) in rows {
        s.s_r.push(a);
        s.s_c.push(b);
        s.i.push(c);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub half_width: f64,
    pub n: usize,
    pub seed: u64,
}

pub fn binomial_ci(successes: usize, n: usize, method: CiMethod) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = successes as f64 / n as f64;
    match method {
        CiMethod::Normal => (p, Z95 * (p * (1.0 - p) / n as f64).sqrt()),
        CiMethod::ClopperPearson => {
            let (k, nf) = (successes as f64, n as f64);
            let lo = if successes == 0 {
                0.0
            } else {
                Beta::new(k, nf - k + 1.0).expect("valid").inverse_cdf(0.025)
            };
            let hi = if successes == n {
                1.0
            } else {
                Beta::new(k + 1.0, nf - k).expect("valid").inverse_cdf(0.975)
            };
            (p, (hi - p).max(p - lo))
        }
    }
}

struct Events {
    cov: bool,
    det: bool,
    succ: bool,
}

fn events(s_r: f64, s_c: f64, i: f64, kappa: f64, t: &Thresholds, model: &ResidualModel) -> (Events, bool) {
    let (z_r, z_c) = residuals(s_r, s_c, model);
    let cov = s_c >= t.theta * (z_r + i);
    let det = s_r * kappa + z_c + i >= t.gamma;
    let succ = s_r * kappa >= t.theta_p * (z_c + i);
    let fa = z_c + i >= t.gamma;
    (Events { cov, det, succ }, fa)
}

/// Empirical frequency of the event defining `kind`.
///
/// `eta` is the rate threshold for `RateCdf` and the truncation `max_eta` for
/// `AvgRate`, whose estimate is the sample mean of `min(log2(1 + SIR), max_eta)`.
pub fn estimate(samples: &Samples, kind: MetricKind, t: &Thresholds, eta: f64, model: &ResidualModel, ci: CiMethod) -> McEstimate {
    let n = samples.len();
    let kappa = samples.kappa;
    let finish = |num: usize, den: usize| {
        let (value, half_width) = binomial_ci(num, den, ci);
        McEstimate {
            value,
            half_width,
            n: den,
            seed: samples.seed,
        }
    };
    if kind == MetricKind::AvgRate {
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for j in 0..n {
            let (z_r, _) = residuals(samples.s_r[j], samples.s_c[j], model);
            let sir = samples.s_c[j] / (z_r + samples.i[j]);
            let r = (sir.ln_1p() / std::f64::consts::LN_2).min(eta);
            sum += r;
            sum2 += r * r;
        }
        let mean = sum / n as f64;
        let var = (sum2 / n as f64 - mean * mean).max(0.0);
        return McEstimate {
            value: mean,
            half_width: Z95 * (var / n as f64).sqrt(),
            n,
            seed: samples.seed,
        };
    }
    let mut t = *t;
    if kind == MetricKind::RateCdf {
        t.theta = eta.exp2() - 1.0;
    }
    let (mut num, mut den) = (0usize, 0usize);
    for j in 0..n {
        let (e, fa) = events(samples.s_r[j], samples.s_c[j], samples.i[j], kappa, &t, model);
        let (hit, cond) = match kind {
            MetricKind::Coverage | MetricKind::RateCdf => (e.cov, true),
            MetricKind::FalseAlarm => (fa, true),
            MetricKind::Detection => (e.det, true),
            MetricKind::Success => (e.succ, true),
            MetricKind::Jrdccp => (e.det && e.cov, true),
            MetricKind::Jrsccp => (e.succ && e.cov, true),
            MetricKind::CGivenD => (e.cov, e.det),
            MetricKind::DGivenC => (e.det, e.cov),
            MetricKind::CGivenS => (e.cov, e.succ),
            MetricKind::SGivenC => (e.succ, e.cov),
            MetricKind::AvgRate => unreachable!(),
        };
        if cond {
            den += 1;
            if hit {
                num += 1;
            }
        }
    }
    finish(num, den)
}

/// Sorted interference samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(mut xs: Vec<f64>) -> Self {
        xs.sort_by(f64::total_cmp);
        Self { sorted: xs }
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }

    /// Fraction of samples `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// `sup_x |ECDF(x) - F(x)|` for a continuous `F`.
    pub fn ks_distance<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let n = self.sorted.len() as f64;
        let mut d = 0.0f64;
        for (j, &x) in self.sorted.iter().enumerate() {
            let fx = f(x);
            d = d.max((j as f64 + 1.0) / n - fx).max(fx - j as f64 / n);
        }
        d
    }
}

pub fn empirical_interference_cdf(scenario: &ValidatedScenario, n: usize, seed: u64) -> Ecdf {
    let m = McModel::new(scenario, McOpts::default().trunc_rel);
    let xs: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|idx| sample_realization(&mut stream(seed, idx), &m, RadarSampling::InverseCdf).i)
        .collect();
    Ecdf::new(xs)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    (d, kolmogorov_q((ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d))
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{validate, ScenarioParams};

    fn model() -> McModel {
        McModel::new(&validate(ScenarioParams::reference()).unwrap(), 1e-6)
    }

    #[test]
    fn truncation_meets_target() {
        let m = model();
        let s_rmin = m.rho_r * m.r_rmax.powf(-m.alpha_r);
        assert!(m.truncated_mean() <= 1e-6 * s_rmin * (1.0 + 1e-12));
        assert!(m.r_trunc > m.r_imin);
    }

    #[test]
    fn streams_are_independent_of_order() {
        let a: f64 = stream(7, 3).random();
        let _: f64 = stream(7, 2).random();
        let b: f64 = stream(7, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, stream(7, 4).random::<f64>());
    }

    #[test]
    fn realization_invariants() {
        let m = model();
        let mut rng = stream(1, 0);
        for _ in 0..2000 {
            let r = sample_realization(&mut rng, &m, RadarSampling::Rejection);
            assert!(r.r_r >= m.r_rmin && r.r_r <= m.r_rmax);
            assert!(r.r_c >= m.r_cmin);
            assert!(r.interferers.iter().all(|&x| x >= m.r_imin && x <= m.r_trunc));
            assert!(r.fading.iter().all(|&h| h >= 0.0));
            assert!(r.i >= 0.0);
        }
    }

    #[test]
    fn kolmogorov_survival() {
        // Known value Q(1) = 0.26999967...
        assert!((kolmogorov_q(1.0) - 0.269_999_671).abs() < 1e-8);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn clopper_pearson_contains_normal_case() {
        let (p, hw) = binomial_ci(50, 100, CiMethod::ClopperPearson);
        let (_, hn) = binomial_ci(50, 100, CiMethod::Normal);
        assert_eq!(p, 0.5);
        assert!(hw >= hn * 0.95 && hw < 0.12);
        let (_, h0) = binomial_ci(0, 100, CiMethod::ClopperPearson);
        assert!((h0 - (1.0 - 0.025f64.powf(1.0 / 100.0))).abs() < 1e-9);
    }

    #[test]
    fn ecdf_basics() {
        let e = Ecdf::new(vec![3.0, 1.0, 2.0, 2.0]);
        assert_eq!(e.cdf(-1e-300), 0.0);
        assert_eq!(e.cdf(2.0), 0.75);
        assert_eq!(e.cdf(5.0), 1.0);
        assert_eq!(e.mean(), 2.0);
    }
}
