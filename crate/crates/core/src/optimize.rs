//! Grid search of the transmit powers `(P_L, P_V)` maximizing JRSCCP.
//!
//! Every SIR-based metric depends on the powers only through `P_L / P_V`,
//! so the default search runs over the ratio and reports the cheapest pair
//! in the box realizing the best ratio.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cancellation::ResidualMap;
use crate::distributions::ExpectOpts;
use crate::error::{Error, Result};
use crate::interference::{CdfOpts, CdfSource, InterferenceCdf, InterferenceField};
use crate::metrics::Metrics;
use crate::scenario::{validate, ScenarioParams};
use crate::units::dbm_to_watts;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBox {
    pub pl_min_dbm: f64,
    pub pl_max_dbm: f64,
    pub pv_min_dbm: f64,
    pub pv_max_dbm: f64,
    pub resolution_db: f64,
}

impl Default for PowerBox {
    fn default() -> Self {
        Self {
            pl_min_dbm: 0.0,
            pl_max_dbm: 60.0,
            pv_min_dbm: 0.0,
            pv_max_dbm: 60.0,
            resolution_db: 1.0,
        }
    }
}

impl PowerBox {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, message: &str| {
            Err(Error::InvalidArgument {
                name,
                message: message.into(),
            })
        };
        let all = [self.pl_min_dbm, self.pl_max_dbm, self.pv_min_dbm, self.pv_max_dbm, self.resolution_db];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("power_box", "bounds must be finite");
        }
        if self.pl_min_dbm >= self.pl_max_dbm {
            return bad("P_L", "minimum must be below maximum");
        }
        if self.pv_min_dbm >= self.pv_max_dbm {
            return bad("P_V", "minimum must be below maximum");
        }
        if self.resolution_db <= 0.0 {
            return bad("resolution_db", "must be > 0");
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| lo + k as f64 * step).collect()
    }

    pub fn pl_axis(&self) -> Vec<f64> {
        Self::axis(self.pl_min_dbm, self.pl_max_dbm, self.resolution_db)
    }

    pub fn pv_axis(&self) -> Vec<f64> {
        Self::axis(self.pv_min_dbm, self.pv_max_dbm, self.resolution_db)
    }

    /// `P_L - P_V` values reachable on the grid.
    pub fn ratio_axis(&self) -> Vec<f64> {
        Self::axis(
            self.pl_min_dbm - self.pv_max_dbm,
            self.pl_max_dbm - self.pv_min_dbm,
            self.resolution_db,
        )
    }

    /// Lowest-power grid pair with `P_L - P_V = ratio_db`.
    pub fn cheapest_pair(&self, ratio_db: f64) -> (f64, f64) {
        let pv = self
            .pv_axis()
            .into_iter()
            .find(|pv| pv + ratio_db >= self.pl_min_dbm - 1e-9)
            .unwrap_or(self.pv_max_dbm);
        (pv + ratio_db, pv)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOpts {
    pub ratio_reduction: bool,
    pub cdf: CdfOpts,
    pub expect: ExpectOpts,
}

impl Default for OptimizeOpts {
    fn default() -> Self {
        Self {
            ratio_reduction: true,
            cdf: CdfOpts::default(),
            expect: ExpectOpts::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub pl_dbm: f64,
    pub pv_dbm: f64,
    pub jrsccp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub pl_dbm: f64,
    pub pv_dbm: f64,
    pub value: f64,
    /// Distinct objective evaluations.
    pub evaluations: usize,
    /// Every grid point, `P_V` major.
    pub surface: Vec<SurfacePoint>,
    /// Largest gap between the ratio search and the full grid, when both ran.
    pub ratio_check: Option<f64>,
    /// Tolerance of one objective value.
    pub tol: f64,
}

/// The metric engine at arbitrary powers without rebuilding the table.
struct Objective<'a> {
    template: &'a ScenarioParams,
    base: InterferenceCdf,
    base_pv: f64,
    theta_p: f64,
    theta: f64,
    model: &'a dyn ResidualMap,
    expect: ExpectOpts,
}

impl Objective<'_> {
    fn metrics(&self, pl_dbm: f64, pv_dbm: f64) -> Result<Metrics> {
        let pv = dbm_to_watts(pv_dbm);
        let scenario = validate(self.template.with_powers(dbm_to_watts(pl_dbm), pv))?;
        let cdf = if self.base.is_degenerate() {
            self.base.clone()
        } else {
            self.base.with_mean(self.base.mean() * pv / self.base_pv)
        };
        Ok(Metrics::new(&scenario, Arc::new(cdf)).with_opts(self.expect))
    }

    fn value(&self, pl_dbm: f64, pv_dbm: f64) -> Result<f64> {
        Ok(self.metrics(pl_dbm, pv_dbm)?.jrsccp(self.theta_p, self.theta, self.model)?.value)
    }
}

fn better(a: &SurfacePoint, b: &SurfacePoint) -> bool {
    // Larger value, then lower total power, then lower P_V, then lower P_L.
    if a.jrsccp != b.jrsccp {
        return a.jrsccp > b.jrsccp;
    }
    let (ta, tb) = (a.pl_dbm + a.pv_dbm, b.pl_dbm + b.pv_dbm);
    if ta != tb {
        return ta < tb;
    }
    if a.pv_dbm != b.pv_dbm {
        return a.pv_dbm < b.pv_dbm;
    }
    a.pl_dbm < b.pl_dbm
}

fn argmax(points: &[SurfacePoint]) -> SurfacePoint {
    let mut best = points[0];
    for p in &points[1..] {
        if better(p, &best) {
            best = *p;
        }
    }
    best
}

/// Maximizes `jrsccp(theta_p, theta)` over the powers in `power_box`.
pub fn optimize_powers(
    template: &ScenarioParams,
    theta_p: f64,
    theta: f64,
    power_box: &PowerBox,
    model: &dyn ResidualMap,
    opts: &OptimizeOpts,
) -> Result<Optimum> {
    power_box.validate()?;
    let base_pv_dbm = power_box.pv_min_dbm;
    let base_scenario = validate(template.with_powers(dbm_to_watts(power_box.pl_min_dbm), dbm_to_watts(base_pv_dbm)))?;
    let base = InterferenceCdf::build(&InterferenceField::new(&base_scenario), opts.cdf)?;
    let obj = Objective {
        template,
        base,
        base_pv: dbm_to_watts(base_pv_dbm),
        theta_p,
        theta,
        model,
        expect: opts.expect,
    };
    let tol = obj.metrics(power_box.pl_min_dbm, base_pv_dbm)?.tolerance();
    let pl_axis = power_box.pl_axis();
    let pv_axis = power_box.pv_axis();

    let ratios = power_box.ratio_axis();
    let ratio_values: Vec<f64> = ratios
        .par_iter()
        .map(|&r| obj.value(base_pv_dbm + r, base_pv_dbm))
        .collect::<Result<_>>()?;
    let lookup = |pl: f64, pv: f64| {
        let k = ((pl - pv - ratios[0]) / power_box.resolution_db).round() as usize;
        ratio_values[k.min(ratios.len() - 1)]
    };

    let grid: Vec<(f64, f64)> = pv_axis
        .iter()
        .flat_map(|&pv| pl_axis.iter().map(move |&pl| (pl, pv)))
        .collect();

    let (surface, evaluations, ratio_check) = if opts.ratio_reduction {
        let s: Vec<SurfacePoint> = grid
            .iter()
            .map(|&(pl, pv)| SurfacePoint {
                pl_dbm: pl,
                pv_dbm: pv,
                jrsccp: lookup(pl, pv),
            })
            .collect();
        (s, ratios.len(), None)
    } else {
        let s: Vec<SurfacePoint> = grid
            .par_iter()
            .map(|&(pl, pv)| {
                Ok(SurfacePoint {
                    pl_dbm: pl,
                    pv_dbm: pv,
                    jrsccp: obj.value(pl, pv)?,
                })
            })
            .collect::<Result<_>>()?;
        let gap = s
            .iter()
            .map(|p| (p.jrsccp - lookup(p.pl_dbm, p.pv_dbm)).abs())
            .fold(0.0, f64::max);
        let n = s.len() + ratios.len();
        (s, n, Some(gap))
    };

    let best = argmax(&surface);
    Ok(Optimum {
        pl_dbm: best.pl_dbm,
        pv_dbm: best.pv_dbm,
        value: best.jrsccp,
        evaluations,
        surface,
        ratio_check,
        tol,
    })
}

/// Best `P_L` for each `P_V` on the surface.
pub fn frontier(surface: &[SurfacePoint]) -> Vec<SurfacePoint> {
    let mut out: Vec<SurfacePoint> = Vec::new();
    for p in surface {
        match out.iter_mut().find(|q| q.pv_dbm == p.pv_dbm) {
            Some(q) => {
                if p.jrsccp > q.jrsccp {
                    *q = *p;
                }
            }
            None => out.push(*p),
        }
    }
    out
}

/// `pl_dbm,pv_dbm,jrsccp` rows.
pub fn write_surface_csv<W: std::io::Write>(surface: &[SurfacePoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "pl_dbm,pv_dbm,jrsccp")?;
    for p in surface {
        writeln!(w, "{},{},{}", p.pl_dbm, p.pv_dbm, p.jrsccp)?;
    }
    Ok(())
}
