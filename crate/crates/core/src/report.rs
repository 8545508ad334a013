//! CSV/JSON result rows and the run manifest written next to them.

use std::io::Write;

use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str = "metric,theta_db,theta_p_db,gamma,value,ci,n,seed";

/// One output line. Analytic rows put the error bound in `ci` and leave
/// `n` and `seed` empty; Monte Carlo rows carry the 95% half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub metric: String,
    pub theta_db: Option<f64>,
    pub theta_p_db: Option<f64>,
    /// Watts.
    pub gamma: Option<f64>,
    pub value: f64,
    pub ci: Option<f64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

fn cell<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Row {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.metric,
            cell(self.theta_db),
            cell(self.theta_p_db),
            self.gamma.map(|g| format!("{g:e}")).unwrap_or_default(),
            self.value,
            cell(self.ci),
            cell(self.n),
            cell(self.seed),
        )
    }
}

pub fn write_csv<W: Write>(rows: &[Row], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> String {
    let mut out = Vec::new();
    write_csv(rows, &mut out).expect("writing to a Vec cannot fail");
    String::from_utf8(out).expect("ASCII output")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub expect_tol: f64,
    pub cdf_tol: f64,
    pub r_c_tail_eps: f64,
    pub cdf_error_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRadii {
    /// Distance where the traffic-light distance tail is cut (analytic).
    pub r_c_trunc: f64,
    /// Interferer truncation radius of the simulation, when one ran.
    pub mc_r_trunc: Option<f64>,
    /// Mean interference power beyond `mc_r_trunc`.
    pub mc_truncated_mean: Option<f64>,
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    /// Accepted by the configuration loader as-is.
    pub resolved_config: serde_json::Value,
    /// Keys that were filled from implementation defaults.
    pub defaulted: Vec<String>,
    pub seed: Option<u64>,
    pub tolerances: Tolerances,
    pub truncation: TruncationRadii,
    pub timestamp: String,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
