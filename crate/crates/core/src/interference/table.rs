//! Tabulated characteristic function and interference CDF.
//!
//! Both tables work in units of the mean interference, so a table built for
//! one vehicle transmit power serves every other by rescaling.

use std::f64::consts::LN_10;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::inversion::{gil_pelaez, GpOpts};
use super::InterferenceField;
use crate::error::{Error, Result};

/// Anything that can act as the interference CDF inside a metric.
pub trait CdfSource: Send + Sync {
    /// `Pr(I <= x)` with `x` in watts.
    fn cdf(&self, x: f64) -> f64;

    /// Absolute accuracy of [`Self::cdf`].
    fn error_bound(&self) -> f64;

    /// `E[I]` in watts; zero when there is no interference.
    fn mean(&self) -> f64;

    /// Smallest `x` with `cdf(x) >= p`, by bisection over a log bracket.
    fn quantile(&self, p: f64) -> f64 {
        let m = self.mean();
        if m == 0.0 || p <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (1e-12f64, 1e8f64);
        if self.cdf(lo * m) >= p {
            return lo * m;
        }
        if self.cdf(hi * m) < p {
            return hi * m;
        }
        for _ in 0..100 {
            let mid = (lo * hi).sqrt();
            if self.cdf(mid * m) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo < 1.0 + 1e-12 {
                break;
            }
        }
        hi * m
    }
}

const CF_STEP: f64 = LN_10 / 256.0;
const CF_U_MIN: f64 = 1e-6;
const CF_U_CAP: f64 = 1e18;
const CF_LOG_FLOOR: f64 = -40.0;

/// `psi(t) = ln(phi(u)) / u` on a uniform grid in `t = ln u`, where `phi` is
/// the characteristic function of `I / E[I]`.
#[derive(Debug, Clone)]
pub struct CfTable {
    t0: f64,
    psi: Vec<Complex64>,
    u_max: f64,
}

impl CfTable {
    pub fn build(field: &InterferenceField) -> Result<Self> {
        let mean = field.mean();
        if mean == 0.0 {
            return Err(Error::InvalidArgument {
                name: "lambda_I",
                message: "no interference to tabulate".into(),
            });
        }
        let t0 = CF_U_MIN.ln();
        let mut psi = Vec::new();
        let mut i = 0usize;
        // Chunks in order keep construction deterministic.
        'outer: loop {
            let chunk: Vec<usize> = (i..i + 64).collect();
            let vals: Vec<Result<(f64, Complex64)>> = chunk
                .par_iter()
                .map(|&j| {
                    let u = (t0 + j as f64 * CF_STEP).exp();
                    let e = field.exponent(Complex64::new(0.0, -u / mean))?;
                    Ok((u, e))
                })
                .collect();
            for v in vals {
                let (u, e) = v?;
                psi.push(e / u);
                if e.re < CF_LOG_FLOOR || u > CF_U_CAP {
                    break 'outer;
                }
            }
            i += 64;
        }
        let u_max = (t0 + (psi.len() - 1) as f64 * CF_STEP).exp();
        Ok(Self { t0, psi, u_max })
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    fn psi_at(&self, u: f64) -> Complex64 {
        if u < CF_U_MIN {
            let j = Complex64::new(0.0, 1.0);
            return j + (self.psi[0] - j) * (u / CF_U_MIN);
        }
        let x = (u.ln() - self.t0) / CF_STEP;
        let n = self.psi.len();
        let base = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let s = x - base as f64;
        // Four-point Lagrange through nodes base..base+3 at s = 0, 1, 2, 3.
        let w = [
            -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
            s * (s - 2.0) * (s - 3.0) / 2.0,
            -s * (s - 1.0) * (s - 3.0) / 2.0,
            s * (s - 1.0) * (s - 2.0) / 6.0,
        ];
        let p = &self.psi[base..base + 4];
        p[0] * w[0] + p[1] * w[1] + p[2] * w[2] + p[3] * w[3]
    }

    /// Characteristic function of `I / E[I]` at `u`.
    pub fn cf(&self, u: f64) -> Complex64 {
        if u == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        if u > self.u_max {
            return Complex64::new(0.0, 0.0);
        }
        (self.psi_at(u) * u).exp()
    }

    /// `Pr(I / E[I] <= x)`.
    pub fn cdf_normalized(&self, x: f64, tol: f64) -> Result<(f64, f64)> {
        let r = gil_pelaez(|u| self.cf(u), x, 1.0, GpOpts::with_tol(tol))?;
        Ok((r.value, r.error))
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson).
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl Pchip {
    /// `xs` strictly increasing, `ys` nondecreasing.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n);
        let delta: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut ds = vec![0.0; n];
        ds[0] = delta[0];
        ds[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                ds[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        for i in 0..n - 1 {
            if delta[i] == 0.0 {
                ds[i] = 0.0;
                ds[i + 1] = 0.0;
            } else {
                let a = ds[i] / delta[i];
                let b = ds[i + 1] / delta[i];
                let r = a * a + b * b;
                if r > 9.0 {
                    let t = 3.0 / r.sqrt();
                    ds[i] = t * a * delta[i];
                    ds[i + 1] = t * b * delta[i];
                }
            }
        }
        Self { xs, ys, ds }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CdfOpts {
    pub tol: f64,
    pub n_points: usize,
    pub max_levels: usize,
}

impl Default for CdfOpts {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            n_points: 64,
            max_levels: 12,
        }
    }
}

/// Tabulated CDF of the aggregate interference.
///
/// Stored against `x / E[I]`; monotone cubic interpolation in `ln x` inside
/// `[x_lo, x_hi]`, linear from the origin below `x_lo`, and 1 above `x_hi`.
#[derive(Debug, Clone)]
pub struct InterferenceCdf {
    mean: f64,
    interp: Option<Pchip>,
    tol: f64,
    error_bound: f64,
}

impl InterferenceCdf {
    pub fn build(field: &InterferenceField, opts: CdfOpts) -> Result<Self> {
        if field.is_empty() {
            return Ok(Self::degenerate());
        }
        let table = CfTable::build(field)?;
        Self::from_cf_table(&table, field.mean(), opts)
    }

    /// Step at the origin: no interference.
    pub fn degenerate() -> Self {
        Self {
            mean: 0.0,
            interp: None,
            tol: 0.0,
            error_bound: 0.0,
        }
    }

    pub fn from_cf_table(table: &CfTable, mean: f64, opts: CdfOpts) -> Result<Self> {
        let tol = opts.tol;
        let gp_tol = 0.1 * tol;
        let f = |x: f64| table.cdf_normalized(x, gp_tol);
        let mut gp_err = 0.0f64;

        let mut x_lo = 1e-3;
        loop {
            let (v, e) = f(x_lo)?;
            gp_err = gp_err.max(e);
            if v < 0.1 * tol || x_lo < 1e-30 {
                break;
            }
            x_lo /= 10.0;
        }
        let mut x_hi = 1e3;
        loop {
            let (v, e) = f(x_hi)?;
            gp_err = gp_err.max(e);
            if 1.0 - v <= 0.1 * tol || x_hi > 1e12 {
                break;
            }
            x_hi *= 2.0;
        }

        let n = opts.n_points.max(4);
        let (l0, l1) = (x_lo.ln(), x_hi.ln());
        let mut ts: Vec<f64> = (0..n).map(|i| l0 + (l1 - l0) * i as f64 / (n - 1) as f64).collect();
        let eval_all = |ts: &[f64]| -> Result<Vec<(f64, f64)>> {
            ts.par_iter().map(|&t| f(t.exp())).collect()
        };
        let first = eval_all(&ts)?;
        let mut fs: Vec<f64> = first.iter().map(|p| p.0).collect();
        gp_err = first.iter().fold(gp_err, |m, p| m.max(p.1));

        // Intervals still under test, by left index into the current grid.
        let mut pending: Vec<usize> = (0..n - 1).collect();
        let mut worst = f64::INFINITY;
        for _ in 0..opts.max_levels {
            if pending.is_empty() {
                break;
            }
            let interp = Pchip::new(ts.clone(), monotone(&fs));
            let mids: Vec<f64> = pending.iter().map(|&i| 0.5 * (ts[i] + ts[i + 1])).collect();
            let vals = eval_all(&mids)?;
            gp_err = vals.iter().fold(gp_err, |m, p| m.max(p.1));
            let mut bad = vec![false; pending.len()];
            worst = 0.0;
            for (k, (&m, v)) in mids.iter().zip(&vals).enumerate() {
                let d = (interp.eval(m) - v.0).abs();
                worst = worst.max(d);
                bad[k] = d > tol;
            }
            // Merge midpoints into the grid and keep refining the bad halves.
            let mut new_ts = Vec::with_capacity(ts.len() + mids.len());
            let mut new_fs = Vec::with_capacity(ts.len() + mids.len());
            let mut new_pending = Vec::new();
            let mut k = 0;
            for i in 0..ts.len() {
                new_ts.push(ts[i]);
                new_fs.push(fs[i]);
                if k < pending.len() && pending[k] == i {
                    new_ts.push(mids[k]);
                    new_fs.push(vals[k].0);
                    if bad[k] {
                        let left = new_ts.len() - 2;
                        new_pending.push(left);
                        new_pending.push(left + 1);
                    }
                    k += 1;
                }
            }
            ts = new_ts;
            fs = new_fs;
            pending = new_pending;
        }
        let converged = pending.is_empty() || worst <= tol;
        let interp = Pchip::new(ts, monotone(&fs));
        let error_bound = if converged { tol } else { worst } + gp_err;
        Ok(Self {
            mean,
            interp: Some(interp),
            tol,
            error_bound,
        })
    }

    /// Same distribution shape with mean `mean` (exact for a change of
    /// interferer transmit power or gain).
    pub fn with_mean(&self, mean: f64) -> Self {
        let mut out = self.clone();
        if out.interp.is_some() {
            out.mean = mean;
        }
        out
    }

    pub fn is_degenerate(&self) -> bool {
        self.interp.is_none()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Normalized bounds `(x_lo, x_hi)` of the tabulated range.
    pub fn normalized_range(&self) -> Option<(f64, f64)> {
        self.interp.as_ref().map(|p| {
            let xs = p.xs();
            (xs[0].exp(), xs[xs.len() - 1].exp())
        })
    }

    pub fn len(&self) -> usize {
        self.interp.as_ref().map_or(0, |p| p.xs().len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Pr(I <= m * E[I])`.
    pub fn cdf_normalized(&self, m: f64) -> f64 {
        if m < 0.0 {
            return 0.0;
        }
        let Some(p) = &self.interp else {
            return 1.0;
        };
        let xs = p.xs();
        let (t_lo, t_hi) = (xs[0], xs[xs.len() - 1]);
        let x_lo = t_lo.exp();
        if m <= x_lo {
            return p.ys()[0] * m / x_lo;
        }
        if m.ln() >= t_hi {
            return 1.0;
        }
        p.eval(m.ln())
    }

    /// Writes `x,F` rows (x in watts).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,F")?;
        match &self.interp {
            None => writeln!(w, "0,1")?,
            Some(p) => {
                writeln!(w, "0,0")?;
                for (t, f) in p.xs().iter().zip(p.ys()) {
                    writeln!(w, "{:e},{}", t.exp() * self.mean, f)?;
                }
            }
        }
        Ok(())
    }
}

impl CdfSource for InterferenceCdf {
    fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if self.interp.is_none() {
            return 1.0;
        }
        self.cdf_normalized(x / self.mean)
    }

    fn error_bound(&self) -> f64 {
        self.error_bound
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn quantile(&self, p: f64) -> f64 {
        let Some(interp) = &self.interp else {
            return 0.0;
        };
        if p <= 0.0 {
            return 0.0;
        }
        let xs = interp.xs();
        let (mut lo, mut hi) = (xs[0], xs[xs.len() - 1]);
        if self.cdf_normalized(lo.exp()) >= p {
            let f_lo = interp.ys()[0];
            return if f_lo > 0.0 { p / f_lo * lo.exp() * self.mean } else { 0.0 };
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if interp.eval(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        hi.exp() * self.mean
    }
}

fn monotone(fs: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    fs.iter()
        .map(|&v| {
            m = m.max(v.clamp(0.0, 1.0));
            m
        })
        .collect()
}

/// Inversion on every query, without a CDF table.
pub struct DirectCdf {
    table: Arc<CfTable>,
    mean: f64,
    tol: f64,
    worst: AtomicU64,
}

impl DirectCdf {
    pub fn new(field: &InterferenceField, tol: f64) -> Result<Self> {
        Ok(Self {
            table: Arc::new(CfTable::build(field)?),
            mean: field.mean(),
            tol,
            worst: AtomicU64::new(0f64.to_bits()),
        })
    }

    fn record(&self, e: f64) {
        let bits = e.to_bits();
        self.worst.fetch_max(bits, Ordering::Relaxed);
    }
}

impl CdfSource for DirectCdf {
    fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self.table.cdf_normalized(x / self.mean, self.tol) {
            Ok((v, e)) => {
                self.record(e);
                v
            }
            Err(Error::Inversion { estimate, correction, .. }) => {
                self.record(correction.abs().max(self.tol));
                estimate
            }
            Err(_) => {
                self.record(1.0);
                f64::NAN
            }
        }
    }

    fn error_bound(&self) -> f64 {
        self.tol + f64::from_bits(self.worst.load(Ordering::Relaxed))
    }

    fn mean(&self) -> f64 {
        self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{validate, ScenarioParams};
    use std::sync::OnceLock;

    fn field() -> InterferenceField {
        InterferenceField::new(&validate(ScenarioParams::reference()).unwrap())
    }

    fn cf_table() -> &'static CfTable {
        static T: OnceLock<CfTable> = OnceLock::new();
        T.get_or_init(|| CfTable::build(&field()).unwrap())
    }

    fn cdf_table() -> &'static InterferenceCdf {
        static T: OnceLock<InterferenceCdf> = OnceLock::new();
        T.get_or_init(|| InterferenceCdf::from_cf_table(cf_table(), field().mean(), CdfOpts::default()).unwrap())
    }

    #[test]
    fn cf_table_matches_exact_transform() {
        let f = field();
        let t = cf_table();
        let m = f.mean();
        let mut u = 3e-7;
        while u < t.u_max() {
            let exact = f.exponent(Complex64::new(0.0, -u / m)).unwrap();
            let approx = t.psi_at(u) * u;
            let rel = (approx - exact).norm() / exact.norm();
            assert!(rel < 1e-8, "u={u}: rel {rel}");
            u *= 1.37;
        }
    }

    #[test]
    fn pchip_is_monotone_and_interpolates() {
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = vec![0.0, 0.0, 0.5, 0.99, 1.0];
        let p = Pchip::new(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(p.eval(*x), *y);
        }
        let mut prev = -1.0;
        for i in 0..=400 {
            let v = p.eval(i as f64 / 100.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn table_basic_shape() {
        let c = cdf_table();
        let m = c.mean();
        assert_eq!(c.cdf(-1e-20), 0.0);
        assert_eq!(c.cdf(0.0), 0.0);
        assert!(c.cdf(1e3 * m) >= 0.999);
        let mut prev = 0.0;
        for i in 0..300 {
            let x = m * 10f64.powf(-4.0 + 8.0 * i as f64 / 299.0);
            let v = c.cdf(x);
            assert!(v >= prev && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn table_matches_direct_inversion_between_nodes() {
        let c = cdf_table();
        let t = cf_table();
        let p = c.interp.as_ref().unwrap();
        let xs = p.xs();
        for i in (0..xs.len() - 1).step_by(7) {
            let m = (0.5 * (xs[i] + xs[i + 1])).exp();
            let (direct, _) = t.cdf_normalized(m, 1e-8).unwrap();
            assert!((c.cdf_normalized(m) - direct).abs() < 2e-6, "m={m}");
        }
    }

    #[test]
    fn quantile_inverts() {
        let c = cdf_table();
        for p in [1e-4, 0.01, 0.3, 0.5, 0.9, 0.9999] {
            let x = c.quantile(p);
            assert!((c.cdf(x) - p).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn rescaling_is_exact() {
        let c = cdf_table();
        let r = c.with_mean(7.0 * c.mean());
        for m in [0.01, 0.3, 1.0, 4.0, 50.0] {
            assert!((r.cdf(7.0 * m * c.mean()) - c.cdf(m * c.mean())).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_table() {
        let c = InterferenceCdf::degenerate();
        assert_eq!(c.cdf(-1.0), 0.0);
        assert_eq!(c.cdf(0.0), 1.0);
        assert_eq!(c.mean(), 0.0);
        assert_eq!(c.quantile(0.5), 0.0);
    }

    #[test]
    fn direct_source_agrees_with_table() {
        let f = field();
        let d = DirectCdf {
            table: Arc::new(cf_table().clone()),
            mean: f.mean(),
            tol: 1e-6,
            worst: AtomicU64::new(0),
        };
        let c = cdf_table();
        for m in [0.05, 0.5, 2.0, 20.0] {
            assert!((d.cdf(m * f.mean()) - c.cdf(m * f.mean())).abs() < 3e-6);
        }
        assert!(d.error_bound() >= 1e-6);
    }

    #[test]
    fn csv_dump() {
        let mut buf = Vec::new();
        cdf_table().write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,F\n0,0\n"));
        assert_eq!(s.lines().count(), cdf_table().len() + 2);
    }
}
