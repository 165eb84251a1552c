use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationSet;
use crate::error::Error;
use crate::geometry::{MicArray, Point, TdeVector};

/// The nine localization methods of the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "bnb")]
    Bnb,
    #[serde(rename = "unc")]
    Unc,
    #[serde(rename = "d-lb")]
    DLb,
    #[serde(rename = "s-lb")]
    SLb,
    #[serde(rename = "dm")]
    Dm,
    #[serde(rename = "n-mult")]
    NMult,
    #[serde(rename = "t-mult")]
    TMult,
    #[serde(rename = "f-mult")]
    FMult,
    #[serde(rename = "pi")]
    Pi,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Bnb,
        Method::Unc,
        Method::DLb,
        Method::SLb,
        Method::Dm,
        Method::NMult,
        Method::TMult,
        Method::FMult,
        Method::Pi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bnb => "bnb",
            Method::Unc => "unc",
            Method::DLb => "d-lb",
            Method::SLb => "s-lb",
            Method::Dm => "dm",
            Method::NMult => "n-mult",
            Method::TMult => "t-mult",
            Method::FMult => "f-mult",
            Method::Pi => "pi",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.to_ascii_lowercase();
        let alias = match s.as_str() {
            "b&b" | "bb" => "bnb",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.name() == alias)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub method: Method,
    pub delays: Option<TdeVector>,
    pub position: Option<Vec<f64>>,
    /// `J` at the returned delays.
    pub criterion: Option<f64>,
    pub feasible: bool,
    /// The delays admit a second source position.
    pub ambiguous: bool,
    /// Seconds.
    pub wall_time: f64,
}

impl LocalizationResult {
    pub fn failure(method: Method) -> Self {
        Self {
            method,
            delays: None,
            position: None,
            criterion: None,
            feasible: false,
            ambiguous: false,
            wall_time: 0.0,
        }
    }

    /// Evaluates `J`, feasibility and, when feasible, the source position of `t`.
    pub fn from_delays(
        method: Method,
        array: &MicArray,
        set: Option<&CorrelationSet>,
        t: TdeVector,
        eps_eq: f64,
    ) -> Self {
        let criterion = set.and_then(|s| s.criterion_j(&t).ok());
        let feasible = array.is_feasible(&t, eps_eq);
        let loc = feasible
            .then(|| array.localize_detailed(&t).ok())
            .flatten();
        Self {
            method,
            position: loc.as_ref().map(|l| l.position.iter().copied().collect()),
            ambiguous: loc.as_ref().is_some_and(|l| l.ambiguous),
            delays: Some(t),
            criterion,
            feasible: loc.is_some(),
            wall_time: 0.0,
        }
    }

    pub fn point(&self) -> Option<Point> {
        self.position.as_ref().map(|p| DVector::from_column_slice(p))
    }
}
