mod args;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use rayon::prelude::*;

use args::{parse_grid, Cli, Command, Common, EvalArgs, Format, IcMode, OptimizeArgs, Sampling};
use dfrc_sg::cancellation::ResidualModel;
use dfrc_sg::distributions::{DesiredLinkDistributions, ExpectOpts};
use dfrc_sg::interference::{CdfOpts, DirectCdf, InterferenceCdf, InterferenceField};
use dfrc_sg::metrics::{MetricKind, Metrics, Thresholds};
use dfrc_sg::montecarlo::{estimate, simulate, CiMethod, McModel, McOpts, RadarSampling};
use dfrc_sg::optimize::{optimize_powers, write_surface_csv, OptimizeOpts, PowerBox};
use dfrc_sg::report::{csv_string, Row, RunManifest, Tolerances, TruncationRadii};
use dfrc_sg::scenario::{config, validate, ValidatedScenario};
use dfrc_sg::units::{db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm};
use dfrc_sg::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Debug)]
struct Failure {
    code: u8,
    module: &'static str,
    message: String,
}

impl Failure {
    fn usage(module: &'static str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            module,
            message: message.into(),
        }
    }

    fn core(module: &'static str, e: Error) -> Self {
        let code = match e {
            Error::InvalidScenario(_) | Error::Config(_) | Error::InvalidArgument { .. } | Error::Io(_) => EXIT_USAGE,
            Error::Quadrature { .. }
            | Error::Inversion { .. }
            | Error::Pole { .. }
            | Error::TargetOutOfRange { .. }
            | Error::NullConditioning(_) => EXIT_NUMERIC,
        };
        Self {
            code,
            module,
            message: e.to_string(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::usage("cli", format!("cannot write {}: {e}", path.display()))
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error [{}]: {}", f.module, f.message);
        return ExitCode::from(f.code);
    }
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Analytic(a) => run_eval(&a, Mode::Analytic, &argv),
        Command::Mc(a) => run_eval(&a, Mode::Mc, &argv),
        Command::Validate(a) => run_eval(&a, Mode::Validate, &argv),
        Command::Sweep(a) => {
            let mode = if a.with_mc { Mode::Validate } else { Mode::Analytic };
            run_eval(&a, mode, &argv)
        }
        Command::Optimize(a) => run_optimize(&a, &argv),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error [{}]: {}", f.module, f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("DFRC_SG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::usage("cli", format!("DFRC_SG_THREADS=`{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage("cli", e.to_string()))
}

struct Setup {
    scenario: ValidatedScenario,
    model: ResidualModel,
    defaulted: Vec<String>,
}

fn setup(c: &Common) -> CliResult<Setup> {
    let loaded = match &c.config {
        Some(p) => config::load(p).map_err(|e| Failure::core("scenario", e))?,
        None => config::LoadedConfig::default(),
    };
    let mut params = loaded.params.clone();
    if let Some(dbm) = c.pv_dbm {
        params.p_v = dbm_to_watts(dbm);
    }
    if let Some(dbm) = c.pl_dbm {
        params.p_l = dbm_to_watts(dbm);
    }
    let scenario = validate(params).map_err(|e| Failure::core("scenario", e))?;
    let model = match c.ic {
        None => loaded.ic.unwrap_or_default(),
        Some(IcMode::None) => ResidualModel::None,
        Some(IcMode::Partial) => {
            let (Some(a), Some(b)) = (c.a, c.b) else {
                return Err(Failure::usage("cancellation", "--ic partial needs --a and --b"));
            };
            ResidualModel::partial(a, b).map_err(|e| Failure::core("cancellation", e))?
        }
        Some(IcMode::Perfect) => ResidualModel::perfect(),
        Some(IcMode::PerfectRadar) => ResidualModel::Perfect {
            at_radar: true,
            at_comm: false,
        },
        Some(IcMode::PerfectComm) => ResidualModel::Perfect {
            at_radar: false,
            at_comm: true,
        },
    };
    let mut defaulted: Vec<String> = loaded.defaulted.iter().map(|s| s.to_string()).collect();
    defaulted.retain(|k| !(k == "P_V" && c.pv_dbm.is_some() || k == "P_L" && c.pl_dbm.is_some()));
    Ok(Setup {
        scenario,
        model,
        defaulted,
    })
}

fn cdf_opts(c: &Common) -> CdfOpts {
    CdfOpts {
        tol: c.cdf_tol,
        ..CdfOpts::default()
    }
}

fn build_table(s: &ValidatedScenario, c: &Common) -> CliResult<InterferenceCdf> {
    InterferenceCdf::build(&InterferenceField::new(s), cdf_opts(c)).map_err(|e| Failure::core("interference", e))
}

fn build_metrics(s: &ValidatedScenario, c: &Common) -> CliResult<(Metrics, Option<InterferenceCdf>)> {
    let opts = ExpectOpts {
        tol: c.tol,
        ..ExpectOpts::default()
    };
    let field = InterferenceField::new(s);
    if c.no_cache && !field.is_empty() {
        let direct = DirectCdf::new(&field, 0.1 * c.cdf_tol).map_err(|e| Failure::core("interference", e))?;
        let table = if c.dump_cdf.is_some() { Some(build_table(s, c)?) } else { None };
        return Ok((Metrics::new(s, Arc::new(direct)).with_opts(opts), table));
    }
    let table = build_table(s, c)?;
    Ok((Metrics::new(s, Arc::new(table.clone())).with_opts(opts), Some(table)))
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn dump_cdf(c: &Common, table: Option<&InterferenceCdf>) -> CliResult<()> {
    let Some(req) = &c.dump_cdf else {
        return Ok(());
    };
    let path = if !req.is_empty() {
        PathBuf::from(req)
    } else if let Some(out) = &c.out {
        with_suffix(out, ".cdf.csv")
    } else {
        PathBuf::from("interference_cdf.csv")
    };
    let table = table.expect("table built when dumping");
    let f = File::create(&path).map_err(|e| Failure::io(&path, e))?;
    let mut w = BufWriter::new(f);
    table.write_csv(&mut w).map_err(|e| Failure::io(&path, e))?;
    w.flush().map_err(|e| Failure::io(&path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Analytic,
    Mc,
    Validate,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    kind: MetricKind,
    t: Thresholds,
    eta: f64,
    theta_db: Option<f64>,
    theta_p_db: Option<f64>,
    gamma: Option<f64>,
}

fn grid_arg(name: &'static str, v: &Option<String>) -> CliResult<Option<Vec<f64>>> {
    v.as_deref()
        .map(|s| parse_grid(name, s).map_err(|m| Failure::usage("cli", m)))
        .transpose()
}

fn need<'a>(name: &str, metric: &str, v: &'a Option<Vec<f64>>) -> CliResult<&'a [f64]> {
    v.as_deref()
        .ok_or_else(|| Failure::usage("cli", format!("metric `{metric}` needs --{name}")))
}

fn build_jobs(a: &EvalArgs, metrics: &Metrics, model: &ResidualModel) -> CliResult<Vec<Job>> {
    let theta = grid_arg("theta-db", &a.theta_db)?;
    let theta_p = grid_arg("theta-p-db", &a.theta_p_db)?;
    let gamma_dbm = grid_arg("gamma-dbm", &a.gamma_dbm)?;
    let pfa = grid_arg("pfa", &a.pfa)?;
    let eta = grid_arg("eta", &a.eta)?;

    let gammas: Option<Vec<f64>> = match (&gamma_dbm, &pfa) {
        (Some(g), _) => Some(g.iter().map(|&d| dbm_to_watts(d)).collect()),
        (None, Some(p)) => Some(
            p.iter()
                .map(|&p| metrics.fa_threshold(p, model).map_err(|e| Failure::core("metrics", e)))
                .collect::<CliResult<_>>()?,
        ),
        (None, None) => None,
    };

    let mut jobs = Vec::new();
    for name in &a.metrics {
        let kind = MetricKind::parse(name.trim()).ok_or_else(|| {
            let known: Vec<&str> = MetricKind::ALL.iter().map(|k| k.name()).collect();
            Failure::usage("cli", format!("unknown metric `{name}` (known: {})", known.join(", ")))
        })?;
        let job = |theta_db: Option<f64>, theta_p_db: Option<f64>, gamma: Option<f64>, eta: f64| Job {
            kind,
            t: Thresholds {
                theta: theta_db.map(db_to_linear).unwrap_or(0.0),
                theta_p: theta_p_db.map(db_to_linear).unwrap_or(0.0),
                gamma: gamma.unwrap_or(0.0),
            },
            eta,
            theta_db,
            theta_p_db,
            gamma,
        };
        match kind {
            MetricKind::Coverage => {
                for &th in need("theta-db", name, &theta)? {
                    jobs.push(job(Some(th), None, None, 0.0));
                }
            }
            MetricKind::Success => {
                for &tp in need("theta-p-db", name, &theta_p)? {
                    jobs.push(job(None, Some(tp), None, 0.0));
                }
            }
            MetricKind::FalseAlarm | MetricKind::Detection => {
                for &g in need("gamma-dbm or --pfa", name, &gammas)? {
                    jobs.push(job(None, None, Some(g), 0.0));
                }
            }
            MetricKind::Jrdccp | MetricKind::CGivenD | MetricKind::DGivenC => {
                for &g in need("gamma-dbm or --pfa", name, &gammas)? {
                    for &th in need("theta-db", name, &theta)? {
                        jobs.push(job(Some(th), None, Some(g), 0.0));
                    }
                }
            }
            MetricKind::Jrsccp | MetricKind::CGivenS | MetricKind::SGivenC => {
                for &tp in need("theta-p-db", name, &theta_p)? {
                    for &th in need("theta-db", name, &theta)? {
                        jobs.push(job(Some(th), Some(tp), None, 0.0));
                    }
                }
            }
            MetricKind::RateCdf => {
                for &e in need("eta", name, &eta)? {
                    let mut j = job(None, None, None, e);
                    j.theta_db = Some(linear_to_db(e.exp2() - 1.0));
                    jobs.push(j);
                }
            }
            MetricKind::AvgRate => jobs.push(job(None, None, None, a.max_eta)),
        }
    }
    Ok(jobs)
}

fn row(j: &Job, value: f64, ci: f64, mc: Option<(usize, u64)>) -> Row {
    Row {
        metric: j.kind.name().to_string(),
        theta_db: j.theta_db,
        theta_p_db: j.theta_p_db,
        gamma: j.gamma,
        value,
        ci: Some(ci),
        n: mc.map(|m| m.0),
        seed: mc.map(|m| m.1),
    }
}

fn render(rows: &[Row], format: Format) -> String {
    match format {
        Format::Csv => csv_string(rows),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
            s.push('\n');
            s
        }
    }
}

fn run_eval(a: &EvalArgs, mode: Mode, argv: &[String]) -> CliResult<u8> {
    let c = &a.common;
    if a.n < 1000 && mode != Mode::Analytic {
        return Err(Failure::usage("montecarlo", format!("--n {} is below the minimum of 1000", a.n)));
    }
    let Setup {
        scenario,
        model,
        defaulted,
    } = setup(c)?;
    let (metrics, table) = build_metrics(&scenario, c)?;
    dump_cdf(c, table.as_ref())?;
    let jobs = build_jobs(a, &metrics, &model)?;

    let analytic: Vec<(f64, f64)> = if mode == Mode::Mc {
        Vec::new()
    } else {
        let eval = |j: &Job| {
            metrics
                .evaluate(j.kind, &j.t, j.eta, &model)
                .map(|e| (e.value, e.error_bound))
                .map_err(|e| Failure::core("metrics", e))
        };
        if c.no_cache {
            // The uncached source tracks its worst error as it goes; keep the
            // reported bounds independent of scheduling.
            jobs.iter().map(eval).collect::<CliResult<_>>()?
        } else {
            jobs.par_iter().map(eval).collect::<CliResult<_>>()?
        }
    };

    let mc_opts = McOpts {
        n: a.n,
        seed: a.seed,
        sampling: match a.sampling {
            Sampling::Rejection => RadarSampling::Rejection,
            Sampling::InverseCdf => RadarSampling::InverseCdf,
        },
        ci: if a.exact_ci { CiMethod::ClopperPearson } else { CiMethod::Normal },
        ..McOpts::default()
    };
    let mc: Vec<(f64, f64, usize)> = if mode == Mode::Analytic {
        Vec::new()
    } else {
        let samples = simulate(&scenario, &mc_opts);
        jobs.par_iter()
            .map(|j| {
                let e = estimate(&samples, j.kind, &j.t, j.eta, &model, mc_opts.ci);
                (e.value, e.half_width, e.n)
            })
            .collect()
    };

    let mut rows = Vec::new();
    for (k, j) in jobs.iter().enumerate() {
        if let Some(&(v, err)) = analytic.get(k) {
            rows.push(row(j, v, err, None));
        }
        if let Some(&(v, hw, n)) = mc.get(k) {
            rows.push(row(j, v, hw, Some((n, a.seed))));
        }
    }
    let text = render(&rows, c.format);
    match &c.out {
        Some(path) => {
            write_file(path, &text)?;
            let manifest = manifest(argv, &scenario, &model, defaulted, c, &metrics, (mode != Mode::Analytic).then_some(&mc_opts));
            write_file(&with_suffix(path, ".manifest.json"), &(manifest.to_json() + "\n"))?;
        }
        None => print!("{text}"),
    }

    if mode == Mode::Validate {
        let mut worst: Vec<(MetricKind, f64)> = Vec::new();
        for (k, j) in jobs.iter().enumerate() {
            let d = (analytic[k].0 - mc[k].0).abs();
            match worst.iter_mut().find(|w| w.0 == j.kind) {
                Some(w) => w.1 = w.1.max(d),
                None => worst.push((j.kind, d)),
            }
        }
        let mut ok = true;
        for (kind, d) in &worst {
            let pass = *d <= a.pass_tol;
            ok &= pass;
            eprintln!(
                "{}: max |analytic - mc| = {:.6} ({} at {})",
                kind.name(),
                d,
                if pass { "pass" } else { "FAIL" },
                a.pass_tol
            );
        }
        if !ok {
            return Ok(EXIT_VALIDATION);
        }
    }
    Ok(0)
}

fn manifest(
    argv: &[String],
    scenario: &ValidatedScenario,
    model: &ResidualModel,
    defaulted: Vec<String>,
    c: &Common,
    metrics: &Metrics,
    mc: Option<&McOpts>,
) -> RunManifest {
    let opts = metrics.opts();
    let dists = DesiredLinkDistributions::new(scenario);
    let mc_model = mc.map(|o| McModel::new(scenario, o.trunc_rel));
    RunManifest {
        tool: "dfrc-sg".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: argv.to_vec(),
        resolved_config: config::to_value(scenario.params(), Some(model)),
        defaulted,
        seed: mc.map(|o| o.seed),
        tolerances: Tolerances {
            expect_tol: opts.tol,
            cdf_tol: c.cdf_tol,
            r_c_tail_eps: opts.tail_eps,
            cdf_error_bound: metrics.cdf_source().error_bound(),
        },
        truncation: TruncationRadii {
            r_c_trunc: dists.r_c_trunc(opts.tail_eps),
            mc_r_trunc: mc_model.map(|m| m.r_trunc),
            mc_truncated_mean: mc_model.map(|m| m.truncated_mean()),
        },
        timestamp: chrono::Utc::now().to_rfc3339(),
    }
}

fn run_optimize(a: &OptimizeArgs, argv: &[String]) -> CliResult<u8> {
    let c = &a.common;
    let Setup {
        scenario,
        model,
        defaulted,
    } = setup(c)?;
    if c.no_cache {
        eprintln!("note: --no-cache is ignored by optimize");
    }
    let power_box = PowerBox {
        pl_min_dbm: a.pl_min_dbm,
        pl_max_dbm: a.pl_max_dbm,
        pv_min_dbm: a.pv_min_dbm,
        pv_max_dbm: a.pv_max_dbm,
        resolution_db: a.resolution_db,
    };
    let opts = OptimizeOpts {
        ratio_reduction: !a.no_ratio_reduction,
        cdf: cdf_opts(c),
        expect: ExpectOpts {
            tol: c.tol,
            ..ExpectOpts::default()
        },
    };
    if c.dump_cdf.is_some() {
        dump_cdf(c, Some(&build_table(&scenario, c)?))?;
    }
    let (theta_p, theta) = (db_to_linear(a.theta_p_db), db_to_linear(a.theta_db));
    let o = optimize_powers(scenario.params(), theta_p, theta, &power_box, &model, &opts)
        .map_err(|e| Failure::core("optimize", e))?;

    let summary = serde_json::json!({
        "theta_db": a.theta_db,
        "theta_p_db": a.theta_p_db,
        "pl_dbm": o.pl_dbm,
        "pv_dbm": o.pv_dbm,
        "pl_minus_pv_db": o.pl_dbm - o.pv_dbm,
        "jrsccp": o.value,
        "evaluations": o.evaluations,
        "ratio_check": o.ratio_check,
        "tol": o.tol,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));

    if let Some(path) = &c.out {
        let f = File::create(path).map_err(|e| Failure::io(path, e))?;
        let mut w = BufWriter::new(f);
        write_surface_csv(&o.surface, &mut w).map_err(|e| Failure::io(path, e))?;
        w.flush().map_err(|e| Failure::io(path, e))?;
        let metrics = Metrics::new(&scenario, Arc::new(build_table(&scenario, c)?)).with_opts(opts.expect);
        let mut m = manifest(argv, &scenario, &model, defaulted, c, &metrics, None);
        m.resolved_config["P_L"] = serde_json::json!(dbm_to_watts(o.pl_dbm));
        m.resolved_config["P_V"] = serde_json::json!(dbm_to_watts(o.pv_dbm));
        write_file(&with_suffix(path, ".manifest.json"), &(m.to_json() + "\n"))?;
    }

    if let Some(gap) = o.ratio_check {
        if gap > 2.0 * o.tol {
            return Err(Failure {
                code: EXIT_NUMERIC,
                module: "optimize",
                message: format!(
                    "ratio search and full grid differ by {gap:e} (> 2 tol = {:e}) at P_L {} dBm, P_V {} dBm",
                    2.0 * o.tol,
                    watts_to_dbm(dbm_to_watts(o.pl_dbm)),
                    o.pv_dbm
                ),
            });
        }
    }
    Ok(0)
}
