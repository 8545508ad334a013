//! Scenario parameters, validation and the link constants derived from them.
//!
//! All quantities are SI and angles are radians. The JSON configuration layer
//! in [`config`] takes degrees and optionally dBm and converts once.

pub mod config;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default carrier frequency (Hz) when the configuration omits `f_c`.
pub const DEFAULT_CARRIER_HZ: f64 = 77e9;
/// Default maximum radar range (m) when the configuration omits `r_Rmax`.
pub const DEFAULT_R_RMAX: f64 = 150.0;
/// Default Rician K-factor of the interfering links when `K` is omitted.
pub const DEFAULT_RICIAN_K: f64 = 10.0;

/// Full user-facing parameter set.
///
/// Serialized names match the configuration keys (`P_V`, `psi_VT`, ...).
/// Angles are stored in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    #[serde(rename = "P_V")]
    pub p_v: f64,
    #[serde(rename = "P_L")]
    pub p_l: f64,
    #[serde(rename = "G_R")]
    pub g_r: f64,
    #[serde(rename = "G_C")]
    pub g_c: f64,
    #[serde(rename = "G_I")]
    pub g_i: f64,
    pub kappa: f64,
    pub f_c: f64,
    #[serde(rename = "d_C")]
    pub d_c: f64,
    #[serde(rename = "d_I")]
    pub d_i: f64,
    #[serde(rename = "r_Rmin")]
    pub r_rmin: f64,
    #[serde(rename = "r_Rmax")]
    pub r_rmax: f64,
    #[serde(rename = "psi_VT")]
    pub psi_vt: f64,
    #[serde(rename = "psi_VR")]
    pub psi_vr: f64,
    #[serde(rename = "psi_LT")]
    pub psi_lt: f64,
    #[serde(rename = "lambda_V")]
    pub lambda_v: f64,
    #[serde(rename = "lambda_I")]
    pub lambda_i: f64,
    #[serde(rename = "lambda_L")]
    pub lambda_l: f64,
    #[serde(rename = "alpha_R")]
    pub alpha_r: f64,
    #[serde(rename = "alpha_C")]
    pub alpha_c: f64,
    #[serde(rename = "alpha_I")]
    pub alpha_i: f64,
    #[serde(rename = "beta_R")]
    pub beta_r: f64,
    #[serde(rename = "beta_C")]
    pub beta_c: f64,
    #[serde(rename = "beta_I")]
    pub beta_i: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

impl ScenarioParams {
    /// The reference two-lane parameter set, with the implementation defaults
    /// for carrier frequency, maximum radar range and K-factor.
    pub fn reference() -> Self {
        Self {
            p_v: 1.0,
            p_l: 1.0,
            g_r: 1.0,
            g_c: 1.0,
            g_i: 1.0,
            kappa: 1.0,
            f_c: DEFAULT_CARRIER_HZ,
            d_c: 2.5,
            d_i: 3.0,
            r_rmin: 5.0,
            r_rmax: DEFAULT_R_RMAX,
            psi_vt: 22.5f64.to_radians(),
            psi_vr: 45f64.to_radians(),
            psi_lt: 45f64.to_radians(),
            lambda_v: 0.02,
            lambda_i: 0.002,
            lambda_l: 0.01,
            alpha_r: 2.0,
            alpha_c: 3.0,
            alpha_i: 3.0,
            beta_r: 4.0 * PI,
            beta_c: 4.0 * PI,
            beta_i: 4.0 * PI,
            k: DEFAULT_RICIAN_K,
        }
    }

    /// Same scenario with both transmit powers replaced.
    pub fn with_powers(&self, p_l: f64, p_v: f64) -> Self {
        Self {
            p_l,
            p_v,
            ..self.clone()
        }
    }

    pub fn validate(self) -> Result<ValidatedScenario> {
        validate(self)
    }
}

/// Cached link constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedQuantities {
    pub rho_r: f64,
    pub rho_c: f64,
    pub rho_i: f64,
    pub r_cmin: f64,
    pub r_imin: f64,
    pub s_rmin: f64,
    pub s_rmax: f64,
    pub s_cmax: f64,
}

/// Parameters that passed [`validate`], together with their derived constants.
/// Immutable; share freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScenario {
    params: ScenarioParams,
    derived: DerivedQuantities,
}

impl ValidatedScenario {
    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn derived(&self) -> &DerivedQuantities {
        &self.derived
    }

    pub fn into_params(self) -> ScenarioParams {
        self.params
    }
}

fn check(out: &mut Vec<Violation>, ok: bool, field: &'static str, message: &str) {
    if !ok {
        out.push(Violation {
            field,
            message: message.to_string(),
        });
    }
}

/// Checks every invariant and reports all violations at once.
pub fn validate(params: ScenarioParams) -> Result<ValidatedScenario> {
    let p = &params;
    let mut v = Vec::new();

    let positive = [
        ("P_V", p.p_v),
        ("P_L", p.p_l),
        ("G_R", p.g_r),
        ("G_C", p.g_c),
        ("G_I", p.g_i),
        ("kappa", p.kappa),
        ("f_c", p.f_c),
        ("d_C", p.d_c),
        ("d_I", p.d_i),
        ("lambda_V", p.lambda_v),
        ("lambda_L", p.lambda_l),
        ("beta_R", p.beta_r),
        ("beta_C", p.beta_c),
        ("beta_I", p.beta_i),
    ];
    for (field, x) in positive {
        check(&mut v, x.is_finite() && x > 0.0, field, "must be finite and > 0");
    }

    check(
        &mut v,
        p.lambda_i.is_finite() && p.lambda_i >= 0.0,
        "lambda_I",
        "must be finite and >= 0",
    );
    check(&mut v, p.k.is_finite() && p.k >= 0.0, "K", "must be finite and >= 0");

    check(
        &mut v,
        p.r_rmin.is_finite() && p.r_rmin > 0.0,
        "r_Rmin",
        "must be finite and > 0",
    );
    check(&mut v, p.r_rmax.is_finite(), "r_Rmax", "must be finite");
    if p.r_rmin.is_finite() && p.r_rmax.is_finite() {
        if p.r_rmin == p.r_rmax {
            check(&mut v, false, "r_Rmax", "empty radar range");
        } else {
            check(&mut v, p.r_rmin < p.r_rmax, "r_Rmax", "must exceed r_Rmin");
        }
    }

    for (field, psi) in [("psi_VT", p.psi_vt), ("psi_VR", p.psi_vr), ("psi_LT", p.psi_lt)] {
        check(
            &mut v,
            psi.is_finite() && psi > 0.0 && psi < PI,
            field,
            "beamwidth must lie in (0, 180) degrees",
        );
    }

    for (field, alpha) in [("alpha_R", p.alpha_r), ("alpha_C", p.alpha_c), ("alpha_I", p.alpha_i)] {
        check(&mut v, alpha.is_finite() && alpha >= 1.0, field, "must be >= 1");
    }
    if p.lambda_i > 0.0 && p.alpha_i.is_finite() && p.alpha_i >= 1.0 {
        check(
            &mut v,
            p.alpha_i > 1.0,
            "alpha_I",
            "must be > 1 when lambda_I > 0 (aggregate interference diverges otherwise)",
        );
    }

    if !v.is_empty() {
        return Err(Error::InvalidScenario(v));
    }
    let derived = derive_from(&params);
    Ok(ValidatedScenario { params, derived })
}

/// Link constants of a validated scenario.
pub fn derive(scenario: &ValidatedScenario) -> DerivedQuantities {
    derive_from(&scenario.params)
}

fn derive_from(p: &ScenarioParams) -> DerivedQuantities {
    let friis = SPEED_OF_LIGHT * SPEED_OF_LIGHT / (4.0 * PI * p.f_c * p.f_c);
    let rho_c = p.p_l * p.g_c * friis / p.beta_c;
    let rho_i = p.p_v * p.g_i * friis / p.beta_i;
    // Round trip: the radar path loss is evaluated at 2r.
    let rho_r = p.p_v * p.g_r * friis / (p.beta_r * 2f64.powf(p.alpha_r));
    let r_cmin = p.d_c / (p.psi_lt.min(p.psi_vr) / 2.0).tan();
    let r_imin = p.d_i / (p.psi_vt.min(p.psi_vr) / 2.0).tan();
    DerivedQuantities {
        rho_r,
        rho_c,
        rho_i,
        r_cmin,
        r_imin,
        s_rmin: rho_r * p.r_rmax.powf(-p.alpha_r),
        s_rmax: rho_r * p.r_rmin.powf(-p.alpha_r),
        s_cmax: rho_c * (r_cmin * r_cmin + p.d_c * p.d_c).powf(-p.alpha_c / 2.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ValidatedScenario {
        validate(ScenarioParams::reference()).expect("reference scenario is valid")
    }

    #[test]
    fn reference_scenario_is_valid() {
        let s = table();
        assert_eq!(s.params().f_c, 77e9);
        assert_eq!(s.params().r_rmax, 150.0);
    }

    #[test]
    fn minimum_distances_follow_beamwidths() {
        let d = *table().derived();
        // 2.5 / tan(22.5 deg) and 3 / tan(11.25 deg)
        assert!((d.r_cmin - 6.035534).abs() < 1e-5, "{}", d.r_cmin);
        assert!((d.r_imin - 15.08202).abs() < 1e-4, "{}", d.r_imin);
    }

    #[test]
    fn equal_beamwidths_use_the_common_value() {
        let mut p = ScenarioParams::reference();
        p.psi_lt = 30f64.to_radians();
        p.psi_vr = 30f64.to_radians();
        let d = *validate(p).unwrap().derived();
        assert!((d.r_cmin - 2.5 / 15f64.to_radians().tan()).abs() < 1e-12);
    }

    #[test]
    fn power_extremes() {
        let s = table();
        let d = s.derived();
        let p = s.params();
        assert!(d.s_rmin < d.s_rmax);
        let ratio = d.s_rmin / d.s_rmax;
        let expect = (p.r_rmin / p.r_rmax).powf(p.alpha_r);
        assert!((ratio - expect).abs() <= 1e-15 * expect);
        let friis = SPEED_OF_LIGHT * SPEED_OF_LIGHT / (4.0 * PI * p.f_c * p.f_c);
        assert!((d.rho_r - friis / (4.0 * PI * 4.0)).abs() < 1e-22);
        assert!(d.s_cmax > 0.0);
    }

    #[test]
    fn empty_radar_range_is_rejected() {
        let mut p = ScenarioParams::reference();
        p.r_rmax = p.r_rmin;
        match validate(p) {
            Err(Error::InvalidScenario(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].field, "r_Rmax");
                assert_eq!(v[0].message, "empty radar range");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn violations_are_collected() {
        let mut p = ScenarioParams::reference();
        p.p_v = 0.0;
        p.k = -1.0;
        p.psi_vt = PI;
        p.alpha_c = 0.5;
        let Err(Error::InvalidScenario(v)) = validate(p) else {
            panic!("expected violations")
        };
        let fields: Vec<_> = v.iter().map(|x| x.field).collect();
        assert_eq!(fields, vec!["P_V", "K", "psi_VT", "alpha_C"]);
    }

    #[test]
    fn interference_free_scenario_is_admissible() {
        let mut p = ScenarioParams::reference();
        p.lambda_i = 0.0;
        assert!(validate(p).is_ok());
    }

    #[test]
    fn unit_path_loss_exponent_for_interference_needs_empty_field() {
        let mut p = ScenarioParams::reference();
        p.alpha_i = 1.0;
        assert!(validate(p.clone()).is_err());
        p.lambda_i = 0.0;
        assert!(validate(p).is_ok());
    }

    #[test]
    fn derive_matches_cached() {
        let s = table();
        assert_eq!(derive(&s), *s.derived());
    }

    proptest::proptest! {
        #[test]
        fn power_scaling_is_covariant(c in 1e-3f64..1e3) {
            let base = *table().derived();
            let p = ScenarioParams::reference();
            let scaled = *validate(p.with_powers(c * p.p_l, c * p.p_v)).unwrap().derived();
            let rel = |a: f64, b: f64| ((a - b) / b).abs();
            proptest::prop_assert!(rel(scaled.rho_r, c * base.rho_r) < 1e-14);
            proptest::prop_assert!(rel(scaled.rho_i, c * base.rho_i) < 1e-14);
            proptest::prop_assert!(rel(scaled.rho_c, c * base.rho_c) < 1e-14);
            proptest::prop_assert_eq!(scaled.r_cmin, base.r_cmin);
            proptest::prop_assert_eq!(scaled.r_imin, base.r_imin);
        }
    }
}
