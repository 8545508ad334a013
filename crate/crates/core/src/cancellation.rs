//! Residual-interference models for self-interference cancellation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mapping from the ideal powers `(S_R, S_C)` to the residual powers
/// `(zeta_R, zeta_C)` left at the communication and radar receivers.
///
/// `zeta_R` is the leftover radar echo seen by the communication receiver and
/// `zeta_C` is the leftover communication signal seen by the radar receiver.
pub trait ResidualMap: Send + Sync {
    fn residuals(&self, s_r: f64, s_c: f64) -> (f64, f64);

    /// True when `residuals` is the identity. Metrics use this to select the
    /// closed-form region boundaries.
    fn is_passthrough(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ResidualModel {
    #[default]
    None,
    Partial {
        a: f64,
        b: f64,
    },
    Perfect {
        at_radar: bool,
        at_comm: bool,
    },
}

impl ResidualModel {
    pub fn partial(a: f64, b: f64) -> Result<Self> {
        let bad = |name: &'static str| Error::InvalidArgument {
            name,
            message: "must be finite and > 0 in partial mode".into(),
        };
        if !(a.is_finite() && a > 0.0) {
            return Err(bad("a"));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(bad("b"));
        }
        Ok(Self::Partial { a, b })
    }

    pub fn perfect() -> Self {
        Self::Perfect {
            at_radar: true,
            at_comm: true,
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match *self {
            Self::None => "none".into(),
            Self::Partial { a, b } => format!("partial(a={a},b={b})"),
            Self::Perfect {
                at_radar: true,
                at_comm: true,
            } => "perfect".into(),
            Self::Perfect { at_radar, at_comm } => {
                format!("perfect(at_radar={at_radar},at_comm={at_comm})")
            }
        }
    }
}

/// `a / (1 + x^b)`.
pub fn zeta(x: f64, a: f64, b: f64) -> f64 {
    a / (1.0 + x.powf(b))
}

/// Residual powers under `model`.
pub fn residuals(s_r: f64, s_c: f64, model: &ResidualModel) -> (f64, f64) {
    match *model {
        ResidualModel::None => (s_r, s_c),
        ResidualModel::Partial { a, b } => {
            if s_r == 0.0 || s_c == 0.0 {
                // Both residuals vanish in the limit.
                return (0.0, 0.0);
            }
            (s_r * zeta(s_r / s_c, a, b), s_c * zeta(s_c / s_r, a, b))
        }
        ResidualModel::Perfect { at_radar, at_comm } => (
            if at_comm { 0.0 } else { s_r },
            if at_radar { 0.0 } else { s_c },
        ),
    }
}

impl ResidualMap for ResidualModel {
    fn residuals(&self, s_r: f64, s_c: f64) -> (f64, f64) {
        residuals(s_r, s_c, self)
    }

    fn is_passthrough(&self) -> bool {
        matches!(
            self,
            Self::None
                | Self::Perfect {
                    at_radar: false,
                    at_comm: false
                }
        )
    }
}

/// JSON form of a [`ResidualModel`]:
/// `{"mode": "none" | "partial" | "perfect", "a", "b", "at_radar", "at_comm"}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcConfig {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_radar: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_comm: Option<bool>,
}

impl IcConfig {
    pub fn resolve(&self) -> Result<ResidualModel> {
        let stray = |field: &str| {
            Err(Error::Config(format!(
                "ic: field `{field}` is not used by mode `{}`",
                self.mode
            )))
        };
        match self.mode.as_str() {
            "none" => {
                if self.a.is_some() || self.b.is_some() {
                    return stray("a/b");
                }
                if self.at_radar.is_some() || self.at_comm.is_some() {
                    return stray("at_radar/at_comm");
                }
                Ok(ResidualModel::None)
            }
            "partial" => {
                if self.at_radar.is_some() || self.at_comm.is_some() {
                    return stray("at_radar/at_comm");
                }
                let (Some(a), Some(b)) = (self.a, self.b) else {
                    return Err(Error::Config("ic: partial mode needs `a` and `b`".into()));
                };
                ResidualModel::partial(a, b)
            }
            "perfect" => {
                if self.a.is_some() || self.b.is_some() {
                    return stray("a/b");
                }
                Ok(ResidualModel::Perfect {
                    at_radar: self.at_radar.unwrap_or(true),
                    at_comm: self.at_comm.unwrap_or(true),
                })
            }
            other => Err(Error::Config(format!(
                "ic: unknown mode `{other}` (expected none, partial or perfect)"
            ))),
        }
    }
}

impl From<&ResidualModel> for IcConfig {
    fn from(m: &ResidualModel) -> Self {
        match *m {
            ResidualModel::None => Self {
                mode: "none".into(),
                ..Self::default()
            },
            ResidualModel::Partial { a, b } => Self {
                mode: "partial".into(),
                a: Some(a),
                b: Some(b),
                ..Self::default()
            },
            ResidualModel::Perfect { at_radar, at_comm } => Self {
                mode: "perfect".into(),
                at_radar: Some(at_radar),
                at_comm: Some(at_comm),
                ..Self::default()
            },
        }
    }
}
