//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! of them fails.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use dfrc_sg::cancellation::{residuals, zeta, ResidualMap, ResidualModel};
use dfrc_sg::distributions::DesiredLinkDistributions;
use dfrc_sg::interference::{gil_pelaez, CdfOpts, GpOpts};
use dfrc_sg::metrics::{ConditionalKind, JointKind, MetricKind, Metrics, Thresholds};
use dfrc_sg::montecarlo::{
    empirical_interference_cdf, estimate, ks_two_sample, rician_gain, sample_r_r, simulate, stream, CiMethod,
    McModel, McOpts, RadarSampling, Samples,
};
use dfrc_sg::optimize::{optimize_powers, OptimizeOpts, PowerBox};
use dfrc_sg::report::{csv_string, Row};
use dfrc_sg::scenario::{validate, ScenarioParams, ValidatedScenario};
use dfrc_sg::units::db_to_linear;

const NONE: ResidualModel = ResidualModel::None;

/// Identity residuals that do not advertise themselves as such, so metrics
/// take the general code path.
struct Identity;

impl ResidualMap for Identity {
    fn residuals(&self, s_r: f64, s_c: f64) -> (f64, f64) {
        (s_r, s_c)
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

struct Ctx {
    scenario: ValidatedScenario,
    metrics: Metrics,
    samples: Samples,
}

fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    lin_grid(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

fn db_points(n: usize) -> Vec<f64> {
    lin_grid(-30.0, 10.0, n)
}

fn gammas(m: &Metrics) -> [f64; 3] {
    [0.5, 0.1, 0.01].map(|p| m.fa_threshold(p, &NONE).unwrap())
}

// ---------------------------------------------------------------------------

fn oracle_equivalence(ctx: &Ctx) -> Outcome {
    let m = &ctx.metrics;
    let g = gammas(m);
    let grid = db_points(20);
    let mut jobs: Vec<(MetricKind, Thresholds)> = Vec::new();
    let t = |theta_db: Option<f64>, theta_p_db: Option<f64>, gamma: f64| Thresholds {
        theta: theta_db.map(db_to_linear).unwrap_or(0.0),
        theta_p: theta_p_db.map(db_to_linear).unwrap_or(0.0),
        gamma,
    };
    for &x in &grid {
        jobs.push((MetricKind::Coverage, t(Some(x), None, 0.0)));
        jobs.push((MetricKind::Success, t(None, Some(x), 0.0)));
        jobs.push((MetricKind::Jrsccp, t(Some(-20.0), Some(x), 0.0)));
        jobs.push((MetricKind::Jrsccp, t(Some(x), Some(-10.0), 0.0)));
        for &gm in &g {
            jobs.push((MetricKind::Jrdccp, t(Some(x), None, gm)));
        }
    }
    // 20 detection thresholds spanning P_FA from 0.5 down to 0.01, and the
    // three target thresholds themselves.
    let mut gs = log_grid(g[0], g[2], 20);
    gs.push(g[1]);
    for &gm in &gs {
        jobs.push((MetricKind::FalseAlarm, t(None, None, gm)));
        jobs.push((MetricKind::Detection, t(None, None, gm)));
    }

    let diffs: Vec<(MetricKind, f64)> = jobs
        .par_iter()
        .map(|(kind, t)| {
            let a = m.evaluate(*kind, t, 0.0, &NONE).unwrap().value;
            let e = estimate(&ctx.samples, *kind, t, 0.0, &NONE, CiMethod::Normal).value;
            (*kind, (a - e).abs())
        })
        .collect();
    let mut worst: Vec<(MetricKind, f64)> = Vec::new();
    for (k, d) in diffs {
        match worst.iter_mut().find(|w| w.0 == k) {
            Some(w) => w.1 = w.1.max(d),
            None => worst.push((k, d)),
        }
    }
    let pass = worst.iter().all(|w| w.1 <= 0.01);
    let detail = worst
        .iter()
        .map(|(k, d)| format!("{} {:.4}", k.name(), d))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(pass, format!("{} points, n = {}, max |analytic - MC|: {detail}", jobs.len(), ctx.samples.len()))
}

fn inversion_correctness(ctx: &Ctx) -> Outcome {
    let cf = |u: f64| Complex64::new(1.0, 0.0) / Complex64::new(1.0, -u);
    let mut worst = 0.0f64;
    for x in lin_grid(0.05, 8.0, 50) {
        let v = gil_pelaez(cf, x, 1.0, GpOpts::with_tol(1e-7)).unwrap().value;
        worst = worst.max((v - (1.0 - (-x).exp())).abs());
    }
    let e = empirical_interference_cdf(&ctx.scenario, 100_000, 11);
    let cdf = ctx.metrics.cdf_source().clone();
    let ks = e.ks_distance(|x| cdf.cdf(x));
    Outcome::new(
        worst <= 1e-4 && ks <= 0.01,
        format!("exponential max error {worst:.2e} (<= 1e-4), interference KS {ks:.4} (<= 0.01)"),
    )
}

fn structural_identities(ctx: &Ctx) -> Outcome {
    let m = &ctx.metrics;
    let tol = m.tolerance();
    let mut failures: Vec<String> = Vec::new();

    let ordered = log_grid(1e-13, 1e-9, 50)
        .par_iter()
        .filter(|&&g| m.false_alarm(g, &NONE).unwrap().value > m.detection(g, &NONE).unwrap().value)
        .count();
    if ordered > 0 {
        failures.push(format!("P_FA > P_D at {ordered} thresholds"));
    }

    let g = gammas(m);
    let gs = log_grid(g[0], g[2], 10);
    let grid = db_points(10);
    let mut cases: Vec<(JointKind, Thresholds)> = Vec::new();
    for &x in &grid {
        for &gm in &gs {
            cases.push((
                JointKind::Jrdccp,
                Thresholds {
                    theta: db_to_linear(x),
                    theta_p: 0.0,
                    gamma: gm,
                },
            ));
        }
        for &y in &grid {
            cases.push((
                JointKind::Jrsccp,
                Thresholds {
                    theta: db_to_linear(x),
                    theta_p: db_to_linear(y),
                    gamma: 0.0,
                },
            ));
        }
    }
    let bad: Vec<String> = cases
        .par_iter()
        .filter_map(|(kind, t)| {
            let joint = m.joint(*kind, t, &NONE).unwrap().value;
            let b = m.frechet_bounds(*kind, t, &NONE).unwrap();
            let (c1, c2, p1, p2) = match kind {
                JointKind::Jrdccp => (
                    ConditionalKind::CGivenD,
                    ConditionalKind::DGivenC,
                    m.detection(t.gamma, &NONE).unwrap().value,
                    m.coverage(t.theta, &NONE).unwrap().value,
                ),
                JointKind::Jrsccp => (
                    ConditionalKind::CGivenS,
                    ConditionalKind::SGivenC,
                    m.success(t.theta_p, &NONE).unwrap().value,
                    m.coverage(t.theta, &NONE).unwrap().value,
                ),
            };
            let mut why = Vec::new();
            if joint < b.lower - 2.0 * tol || joint > b.upper + 2.0 * tol {
                why.push(format!("outside [{}, {}]", b.lower, b.upper));
            }
            for (c, p) in [(c1, p1), (c2, p2)] {
                if let Ok(cond) = m.conditional(c, t, &NONE) {
                    if (cond.value * p - joint).abs() > 3.0 * tol {
                        why.push(format!("Bayes {c:?} off by {:e}", cond.value * p - joint));
                    }
                }
            }
            (!why.is_empty()).then(|| format!("{kind:?} {t:?}: {}", why.join("; ")))
        })
        .collect();
    failures.extend(bad.into_iter().take(3));

    let mut zero_ok = 0;
    let mut positive_ok = 0;
    for &x in &grid {
        for &y in &grid {
            let v = m.jrsccp(db_to_linear(y), db_to_linear(x), &NONE).unwrap().value;
            if x + y > 0.0 {
                if v == 0.0 {
                    zero_ok += 1;
                } else {
                    failures.push(format!("jrsccp({y} dB, {x} dB) = {v:e}, expected 0"));
                }
            } else if x + y < 0.0 {
                if v > 0.0 {
                    positive_ok += 1;
                } else {
                    failures.push(format!("jrsccp({y} dB, {x} dB) = 0 below the limit"));
                }
            }
        }
    }

    let tiny = 1e-20;
    let mut limit_err = 0.0f64;
    for &gm in &g {
        let j = m.jrdccp(tiny, gm, &NONE).unwrap().value;
        limit_err = limit_err.max((j - m.detection(gm, &NONE).unwrap().value).abs());
    }
    for &y in &grid {
        let tp = db_to_linear(y);
        let j = m.jrsccp(tp, tiny, &NONE).unwrap().value;
        limit_err = limit_err.max((j - m.success(tp, &NONE).unwrap().value).abs());
    }
    if limit_err > 2.0 * tol {
        failures.push(format!("theta -> 0 limit off by {limit_err:e}"));
    }

    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "P_FA <= P_D on 50 thresholds; {} joint cases inside Frechet bounds and Bayes within 3 tol; \
                 jrsccp exactly 0 on {zero_ok} infeasible pairs, positive on {positive_ok}; limits within {limit_err:.1e}",
                cases.len()
            )
        } else {
            failures.join(" | ")
        },
    )
}

fn scale_invariance(ctx: &Ctx) -> Outcome {
    let base = &ctx.metrics;
    let p = ctx.scenario.params();
    let scaled_s = validate(p.with_powers(10.0 * p.p_l, 10.0 * p.p_v)).unwrap();
    let scaled = Metrics::build(&scaled_s, CdfOpts::default()).unwrap();
    let tol = 3.0 * base.tolerance().max(scaled.tolerance());
    let mut worst = 0.0f64;
    let mut count = 0;
    for kind in MetricKind::ALL.into_iter().filter(|k| k.is_sir_based() && *k != MetricKind::AvgRate) {
        for x in db_points(5) {
            let t = Thresholds {
                theta: db_to_linear(x),
                theta_p: db_to_linear(-10.0),
                gamma: 0.0,
            };
            let eta = (1.0 + db_to_linear(x)).log2();
            let a = base.evaluate(kind, &t, eta, &NONE);
            let b = scaled.evaluate(kind, &t, eta, &NONE);
            if let (Ok(a), Ok(b)) = (a, b) {
                worst = worst.max((a.value - b.value).abs());
                count += 1;
            }
        }
    }

    let coarse = PowerBox {
        resolution_db: 10.0,
        ..PowerBox::default()
    };
    let mut ratio_worst = 0.0f64;
    let mut ratio_tol = f64::INFINITY;
    for (tp, th) in [(-10.0, -20.0), (-5.0, -25.0), (-15.0, -10.0)] {
        let o = optimize_powers(
            p,
            db_to_linear(tp),
            db_to_linear(th),
            &coarse,
            &NONE,
            &OptimizeOpts {
                ratio_reduction: false,
                ..OptimizeOpts::default()
            },
        )
        .unwrap();
        ratio_worst = ratio_worst.max(o.ratio_check.unwrap());
        ratio_tol = ratio_tol.min(2.0 * o.tol);
    }
    Outcome::new(
        worst <= tol && ratio_worst <= ratio_tol,
        format!(
            "{count} SIR metrics under 10x powers differ by <= {worst:.1e} (3 tol = {tol:.1e}); \
             ratio vs full grid {ratio_worst:.1e} (2 tol = {ratio_tol:.1e})"
        ),
    )
}

fn cancellation_model(ctx: &Ctx) -> Outcome {
    let m = &ctx.metrics;
    let tol = m.tolerance();
    let g = gammas(m)[1];
    let mut failures = Vec::new();

    for x in db_points(5) {
        let th = db_to_linear(x);
        let tp = db_to_linear(-10.0);
        let pairs = [
            (m.coverage(th, &NONE), m.coverage(th, &Identity)),
            (m.success(th, &NONE), m.success(th, &Identity)),
            (m.false_alarm(g, &NONE), m.false_alarm(g, &Identity)),
            (m.detection(g, &NONE), m.detection(g, &Identity)),
            (m.jrdccp(th, g, &NONE), m.jrdccp(th, g, &Identity)),
            (m.jrsccp(tp, th, &NONE), m.jrsccp(tp, th, &Identity)),
        ];
        for (a, b) in pairs {
            if a.unwrap().value.to_bits() != b.unwrap().value.to_bits() {
                failures.push(format!("identity map differs at {x} dB"));
            }
        }
    }

    let perfect = ResidualModel::perfect();
    let mut dominated = 0;
    for x in db_points(10) {
        let th = db_to_linear(x);
        let tp = db_to_linear(-10.0);
        let checks = [
            (m.coverage(th, &perfect), m.coverage(th, &NONE)),
            (m.success(th, &perfect), m.success(th, &NONE)),
            (m.jrsccp(th, db_to_linear(-20.0), &perfect), m.jrsccp(th, db_to_linear(-20.0), &NONE)),
            (m.jrsccp(tp, th, &perfect), m.jrsccp(tp, th, &NONE)),
        ];
        for (p, n) in checks {
            let (p, n) = (p.unwrap().value, n.unwrap().value);
            if p + 2.0 * tol < n {
                failures.push(format!("perfect IC below no IC at {x} dB: {p} < {n}"));
            } else {
                dominated += 1;
            }
        }
    }

    if zeta(1.0, 2.0, 4.0) != 1.0 {
        failures.push(format!("zeta(1; 2, 4) = {}", zeta(1.0, 2.0, 4.0)));
    }
    let mut homog = 0;
    let mut rng = stream(99, 0);
    for _ in 0..1000 {
        let model = ResidualModel::partial(rng.random_range(0.0..1.0), rng.random_range(0.5..6.0)).unwrap();
        let s_r = 10f64.powf(rng.random_range(-14.0..-8.0));
        let s_c = 10f64.powf(rng.random_range(-14.0..-8.0));
        let c = 2f64.powi(rng.random_range(-20..20));
        let (zr, zc) = residuals(s_r, s_c, &model);
        let (zr2, zc2) = residuals(c * s_r, c * s_c, &model);
        if zr2 == c * zr && zc2 == c * zc {
            homog += 1;
        } else {
            failures.push(format!("homogeneity fails for {model:?} c = {c}"));
        }
    }
    failures.truncate(3);
    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "identity map bitwise equal to no IC; {dominated} perfect-IC comparisons dominate; \
                 zeta(1; 2, 4) = 1; homogeneity exact on {homog} cases"
            )
        } else {
            failures.join(" | ")
        },
    )
}

/// Composite Simpson rule in `ln s` for `int f(s) ds` over `[lo, hi]`.
fn simpson_log<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    simpson(|u| f(u.exp()) * u.exp(), a, b, n)
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn distribution_correctness(ctx: &Ctx) -> Outcome {
    let d = DesiredLinkDistributions::new(&ctx.scenario);
    let p = ctx.scenario.params();
    let derived = ctx.scenario.derived();
    let n = 200_000;
    let r_rmax = p.r_rmax;
    let r_cmin = derived.r_cmin;
    let far = r_cmin + 40.0 / p.lambda_l;
    let mass_r_r = simpson(|r| d.pdf_r_r(r), p.r_rmin, r_rmax, n);
    let mass_r_c = simpson(|r| d.pdf_r_c(r), r_cmin, far, n);
    let (s_lo, s_hi) = d.s_r_range();
    let mass_s_r = simpson_log(|s| d.pdf_s_r(s), s_lo, s_hi, n);
    let mass_s_c = simpson_log(|s| d.pdf_s_c(s), d.s_c(far), d.s_c_max(), n);
    let masses = [mass_r_r, mass_r_c, mass_s_r, mass_s_c];
    let pdf_ok = masses.iter().all(|m| (m - 1.0).abs() <= 1e-5);

    let mc = McModel::new(&ctx.scenario, 1e-6);
    let a: Vec<f64> = (0..10_000u64)
        .map(|i| sample_r_r(&mut stream(21, i), &mc, RadarSampling::Rejection))
        .collect();
    let b: Vec<f64> = (0..10_000u64)
        .map(|i| sample_r_r(&mut stream(22, i), &mc, RadarSampling::InverseCdf))
        .collect();
    let (ks_d, ks_p) = ks_two_sample(&a, &b);

    let mut rng = stream(23, 0);
    let draws = 1_000_000;
    let power = (0..draws).map(|_| rician_gain(&mut rng, p.k)).sum::<f64>() / draws as f64;
    let power_ok = (power - 1.0).abs() <= 0.005;

    Outcome::new(
        pdf_ok && ks_p > 0.01 && power_ok,
        format!(
            "pdf masses r_R {:.7}, r_C {:.7}, S_R {:.7}, S_C {:.7}; sampler KS D = {ks_d:.4}, p = {ks_p:.3}; \
             E|h|^2 = {power:.5} (n = 1e6, K = {})",
            mass_r_r, mass_r_c, mass_s_r, mass_s_c, p.k
        ),
    )
}

fn csv_rows(m: &Metrics, samples: Option<&Samples>) -> String {
    let g = m.fa_threshold(0.1, &NONE).unwrap();
    let mut rows = Vec::new();
    for x in db_points(6) {
        let t = Thresholds {
            theta: db_to_linear(x),
            theta_p: db_to_linear(-10.0),
            gamma: g,
        };
        for kind in [MetricKind::Coverage, MetricKind::Detection, MetricKind::Jrdccp, MetricKind::Jrsccp] {
            let (value, ci, n, seed) = match samples {
                None => {
                    let e = m.evaluate(kind, &t, 0.0, &NONE).unwrap();
                    (e.value, e.error_bound, None, None)
                }
                Some(s) => {
                    let e = estimate(s, kind, &t, 0.0, &NONE, CiMethod::Normal);
                    (e.value, e.half_width, Some(e.n), Some(e.seed))
                }
            };
            rows.push(Row {
                metric: kind.name().into(),
                theta_db: Some(x),
                theta_p_db: Some(-10.0),
                gamma: Some(g),
                value,
                ci: Some(ci),
                n,
                seed,
            });
        }
    }
    csv_string(&rows)
}

fn determinism(ctx: &Ctx) -> Outcome {
    let opts = McOpts {
        n: 20_000,
        seed: 5,
        ..McOpts::default()
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let s1 = one.install(|| simulate(&ctx.scenario, &opts));
    let s2 = four.install(|| simulate(&ctx.scenario, &opts));
    let mc_a = csv_rows(&ctx.metrics, Some(&s1));
    let mc_b = csv_rows(&ctx.metrics, Some(&s2));

    let fresh = Metrics::build(&ctx.scenario, CdfOpts::default()).unwrap();
    let an_a = one.install(|| csv_rows(&ctx.metrics, None));
    let an_b = four.install(|| csv_rows(&fresh, None));
    let (mc_same, an_same) = (mc_a == mc_b, an_a == an_b);
    Outcome::new(
        mc_same && an_same,
        format!(
            "MC CSV {} ({} bytes, 1 vs 4 threads); analytic CSV {} ({} bytes, rebuilt table)",
            if mc_same { "identical" } else { "differs" },
            mc_a.len(),
            if an_same { "identical" } else { "differs" },
            an_a.len()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let scenario = validate(ScenarioParams::reference()).unwrap();
    let metrics = Metrics::build(&scenario, CdfOpts::default()).unwrap();
    let samples = simulate(&scenario, &McOpts::default());
    let ctx = Ctx {
        scenario,
        metrics,
        samples,
    };

    let criteria: [(&str, fn(&Ctx) -> Outcome); 7] = [
        ("analytic and Monte Carlo agree", oracle_equivalence),
        ("CDF inversion", inversion_correctness),
        ("structural identities", structural_identities),
        ("scale invariance", scale_invariance),
        ("interference cancellation", cancellation_model),
        ("distributions and samplers", distribution_correctness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f(&ctx);
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {} [{:.1} s]",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
