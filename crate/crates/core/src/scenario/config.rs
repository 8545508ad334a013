//! JSON configuration layer.
//!
//! Keys match the [`ScenarioParams`] serialized names. Angles are in degrees.
//! `P_V_dBm` and `P_L_dBm` may replace `P_V` and `P_L`. Missing keys take the
//! reference values; unknown keys are rejected. An optional `ic` object selects
//! the residual model. A run manifest (which nests the resolved configuration
//! under `resolved_config`) is accepted as well.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ScenarioParams;
use crate::cancellation::{IcConfig, ResidualModel};
use crate::error::{Error, Result};
use crate::units::dbm_to_watts;

/// Keys whose defaults are implementation choices rather than reference values.
pub const IMPLEMENTATION_DEFAULTS: [&str; 3] = ["f_c", "r_Rmax", "K"];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawConfig {
    P_V: Option<f64>,
    P_V_dBm: Option<f64>,
    P_L: Option<f64>,
    P_L_dBm: Option<f64>,
    G_R: Option<f64>,
    G_C: Option<f64>,
    G_I: Option<f64>,
    kappa: Option<f64>,
    f_c: Option<f64>,
    d_C: Option<f64>,
    d_I: Option<f64>,
    r_Rmin: Option<f64>,
    r_Rmax: Option<f64>,
    psi_VT: Option<f64>,
    psi_VR: Option<f64>,
    psi_LT: Option<f64>,
    lambda_V: Option<f64>,
    lambda_I: Option<f64>,
    lambda_L: Option<f64>,
    alpha_R: Option<f64>,
    alpha_C: Option<f64>,
    alpha_I: Option<f64>,
    beta_R: Option<f64>,
    beta_C: Option<f64>,
    beta_I: Option<f64>,
    K: Option<f64>,
    ic: Option<IcConfig>,
}

/// Result of loading a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub params: ScenarioParams,
    pub ic: Option<ResidualModel>,
    /// Keys that were absent and took their default value.
    pub defaulted: Vec<&'static str>,
}

impl LoadedConfig {
    /// Defaulted keys whose value is an implementation choice.
    pub fn implementation_defaults(&self) -> Vec<&'static str> {
        self.defaulted
            .iter()
            .copied()
            .filter(|k| IMPLEMENTATION_DEFAULTS.contains(k))
            .collect()
    }
}

impl Default for LoadedConfig {
    fn default() -> Self {
        resolve(RawConfig::default()).expect("empty config is valid")
    }
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    from_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn from_str(text: &str) -> Result<LoadedConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    from_value(value)
}

pub fn from_value(mut value: Value) -> Result<LoadedConfig> {
    if let Some(inner) = value.get_mut("resolved_config") {
        value = inner.take();
    }
    if !value.is_object() {
        return Err(Error::Config("configuration must be a JSON object".into()));
    }
    let raw: RawConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    resolve(raw)
}

fn power(
    key: &'static str,
    w: Option<f64>,
    dbm: Option<f64>,
    default: f64,
    defaulted: &mut Vec<&'static str>,
) -> Result<f64> {
    match (w, dbm) {
        (Some(_), Some(_)) => Err(Error::Config(format!("both `{key}` and `{key}_dBm` given"))),
        (Some(x), None) => Ok(x),
        (None, Some(d)) => Ok(dbm_to_watts(d)),
        (None, None) => {
            defaulted.push(key);
            Ok(default)
        }
    }
}

fn resolve(raw: RawConfig) -> Result<LoadedConfig> {
    let base = ScenarioParams::reference();
    let mut defaulted = Vec::new();
    let p_v = power("P_V", raw.P_V, raw.P_V_dBm, base.p_v, &mut defaulted)?;
    let p_l = power("P_L", raw.P_L, raw.P_L_dBm, base.p_l, &mut defaulted)?;

    let mut take = |key: &'static str, v: Option<f64>, default: f64| match v {
        Some(x) => x,
        None => {
            defaulted.push(key);
            default
        }
    };
    let deg = |v: Option<f64>| v.map(f64::to_radians);
    let params = ScenarioParams {
        p_v,
        p_l,
        g_r: take("G_R", raw.G_R, base.g_r),
        g_c: take("G_C", raw.G_C, base.g_c),
        g_i: take("G_I", raw.G_I, base.g_i),
        kappa: take("kappa", raw.kappa, base.kappa),
        f_c: take("f_c", raw.f_c, base.f_c),
        d_c: take("d_C", raw.d_C, base.d_c),
        d_i: take("d_I", raw.d_I, base.d_i),
        r_rmin: take("r_Rmin", raw.r_Rmin, base.r_rmin),
        r_rmax: take("r_Rmax", raw.r_Rmax, base.r_rmax),
        psi_vt: take("psi_VT", deg(raw.psi_VT), base.psi_vt),
        psi_vr: take("psi_VR", deg(raw.psi_VR), base.psi_vr),
        psi_lt: take("psi_LT", deg(raw.psi_LT), base.psi_lt),
        lambda_v: take("lambda_V", raw.lambda_V, base.lambda_v),
        lambda_i: take("lambda_I", raw.lambda_I, base.lambda_i),
        lambda_l: take("lambda_L", raw.lambda_L, base.lambda_l),
        alpha_r: take("alpha_R", raw.alpha_R, base.alpha_r),
        alpha_c: take("alpha_C", raw.alpha_C, base.alpha_c),
        alpha_i: take("alpha_I", raw.alpha_I, base.alpha_i),
        beta_r: take("beta_R", raw.beta_R, base.beta_r),
        beta_c: take("beta_C", raw.beta_C, base.beta_c),
        beta_i: take("beta_I", raw.beta_I, base.beta_i),
        k: take("K", raw.K, base.k),
    };
    let ic = raw.ic.as_ref().map(IcConfig::resolve).transpose()?;
    Ok(LoadedConfig {
        params,
        ic,
        defaulted,
    })
}

/// Configuration-layer view of `params` (angles in degrees, powers in W).
/// Feeding the result back through [`from_value`] reproduces `params`.
pub fn to_value(params: &ScenarioParams, ic: Option<&ResidualModel>) -> Value {
    #[derive(Serialize)]
    struct Out {
        #[serde(flatten)]
        params: ScenarioParams,
        #[serde(skip_serializing_if = "Option::is_none")]
        ic: Option<IcConfig>,
    }
    let mut p = params.clone();
    p.psi_vt = p.psi_vt.to_degrees();
    p.psi_vr = p.psi_vr.to_degrees();
    p.psi_lt = p.psi_lt.to_degrees();
    serde_json::to_value(Out {
        params: p,
        ic: ic.map(IcConfig::from),
    })
    .expect("plain numeric structure serializes")
}
