//! Bias-mitigation transforms applied before model training.
//!
//! | method | changes | fitted state used on held-out data |
//! |--------|---------|------------------------------------|
//! | [`Method::Reweighing`] | instance weights | none (held-out weights are not touched) |
//! | [`Method::Lfr`] | features, labels | prototype map, features only |
//! | [`Method::Dir`] | numeric features | group CDFs and target quantiles |
//! | [`Method::Opp`] | discretised features, labels | `P(x' | x, s)` |

pub mod dir;
pub mod lfr;
pub mod opp;
pub mod reweigh;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dir::{dir_fit, dir_repair, DirConfig, DirRepairer};
pub use lfr::{lfr_fit, LfrConfig, LfrModel};
pub use opp::{opp_fit, OppConfig, OppMap};
pub use reweigh::{reweigh, CellWeights, ReweighResult};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::params::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Reweighing,
    Lfr,
    Dir,
    Opp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Reweighing, Method::Lfr, Method::Dir, Method::Opp];

    pub fn abbreviation(self) -> &'static str {
        match self {
            Method::Reweighing => "RW",
            Method::Lfr => "LFR",
            Method::Dir => "DIR",
            Method::Opp => "OPP",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Method::Reweighing => "reweighing",
            Method::Lfr => "learned_fair_representations",
            Method::Dir => "disparate_impact_remover",
            Method::Opp => "optimized_preprocessing",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbreviation())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.abbreviation().eq_ignore_ascii_case(s) || m.long_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Param {
                name: "method".into(),
                message: format!("unknown method `{s}`; expected one of RW, LFR, DIR, OPP"),
            })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.abbreviation().to_string()
    }
}

/// A method together with its validated parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", try_from = "RawMethodConfig")]
pub enum MethodConfig {
    #[serde(rename = "RW")]
    Reweighing,
    #[serde(rename = "LFR")]
    Lfr(LfrConfig),
    #[serde(rename = "DIR")]
    Dir(DirConfig),
    #[serde(rename = "OPP")]
    Opp(OppConfig),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethodConfig {
    method: Method,
    #[serde(default)]
    params: Params,
}

impl TryFrom<RawMethodConfig> for MethodConfig {
    type Error = Error;

    fn try_from(raw: RawMethodConfig) -> Result<Self> {
        MethodConfig::from_params(raw.method, &raw.params)
    }
}

/// Decodes a parameter block into a config struct, rejecting unknown keys.
fn decode<T: serde::de::DeserializeOwned>(method: Method, params: &Params) -> Result<T> {
    let value = serde_json::to_value(params).expect("params are plain JSON");
    serde_path_to_error::deserialize(value).map_err(|e| Error::Param {
        name: format!("{method}.{}", e.path()),
        message: e.inner().to_string(),
    })
}

impl MethodConfig {
    pub fn from_params(method: Method, params: &Params) -> Result<Self> {
        let cfg = match method {
            Method::Reweighing => {
                params.check_keys("RW", &[])?;
                MethodConfig::Reweighing
            }
            Method::Lfr => {
                let c: LfrConfig = decode(method, params)?;
                c.validate()?;
                MethodConfig::Lfr(c)
            }
            Method::Dir => {
                let c: DirConfig = decode(method, params)?;
                c.validate()?;
                MethodConfig::Dir(c)
            }
            Method::Opp => {
                let c: OppConfig = decode(method, params)?;
                c.validate()?;
                MethodConfig::Opp(c)
            }
        };
        Ok(cfg)
    }

    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Reweighing => Method::Reweighing,
            MethodConfig::Lfr(_) => Method::Lfr,
            MethodConfig::Dir(_) => Method::Dir,
            MethodConfig::Opp(_) => Method::Opp,
        }
    }

    /// Fits the transform on `ds` and returns its output on `ds` together
    /// with the state needed for held-out data.
    pub fn fit(&self, ds: &TabularDataset, seed: u64) -> Result<Fitted> {
        let fitted = match self {
            MethodConfig::Reweighing => {
                let r = reweigh(ds)?;
                Fitted {
                    output: r.dataset,
                    model: FittedModel::Reweighing(r.weights),
                }
            }
            MethodConfig::Lfr(c) => {
                let model = lfr_fit(ds, c, seed)?;
                Fitted {
                    output: model.transform(ds)?,
                    model: FittedModel::Lfr(Box::new(model)),
                }
            }
            MethodConfig::Dir(c) => {
                let (output, repairer) = dir_fit(ds, c)?;
                Fitted {
                    output,
                    model: FittedModel::Dir(Box::new(repairer)),
                }
            }
            MethodConfig::Opp(c) => {
                let map = opp_fit(ds, c)?;
                Fitted {
                    output: map.transform(ds, seed)?,
                    model: FittedModel::Opp(Box::new(map)),
                }
            }
        };
        Ok(fitted)
    }
}

#[derive(Debug, Clone)]
pub struct Fitted {
    /// The transform applied to its own training data.
    pub output: TabularDataset,
    pub model: FittedModel,
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Reweighing(CellWeights),
    Lfr(Box<LfrModel>),
    Dir(Box<DirRepairer>),
    Opp(Box<OppMap>),
}

impl FittedModel {
    /// Maps evaluation records through the fitted transform. Only features
    /// change: evaluation labels and weights stay as observed.
    pub fn transform_held_out(&self, ds: &TabularDataset, seed: u64) -> Result<TabularDataset> {
        match self {
            FittedModel::Reweighing(_) => Ok(ds.clone()),
            FittedModel::Lfr(m) => m.transform_features(ds),
            FittedModel::Dir(r) => r.transform(ds),
            FittedModel::Opp(m) => m.transform_features(ds, seed),
        }
    }

    /// Short machine-readable summary of the fit.
    pub fn diagnostics(&self) -> serde_json::Value {
        match self {
            FittedModel::Reweighing(w) => serde_json::json!({ "cell_weights": w }),
            FittedModel::Lfr(m) => serde_json::json!({
                "iterations": m.iterations,
                "initial_objective": m.trace.first(),
                "final_loss": m.final_loss,
            }),
            FittedModel::Dir(r) => serde_json::json!({
                "repaired_columns": r.repaired_columns(),
            }),
            FittedModel::Opp(m) => serde_json::json!({
                "iterations": m.trace().len() - 1,
                "residuals": m.residuals(),
            }),
        }
    }
}
