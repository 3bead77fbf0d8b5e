//! JSON scenario files.
//!
//! ```json
//! {
//!   "model": {
//!     "m": 2, "n": 2, "q_upper": 100, "loss_gradient_includes_multiplier": true,
//!     "retailers": [{"c": 17.6, "B": 5.28, "D": 176, "t": 0.76, "mu": 1.76,
//!                    "costs": [{"a": 1, "b": 2, "s": 1.76}, {"a": 0.5, "b": 2, "s": 1.76}]}],
//!     "markets": [{"alpha": -2, "gamma": 0.2, "kappa": 120}]
//!   },
//!   "initial": {"Q": [[1, 1], [1, 1]], "u": [0, 0], "lambda": [0, 0]},
//!   "solver": {"beta0": 1, "nu": 0.9, "mu": 0.3, "rho": 1.9, "tol": 1e-7, "max_iter": 200000}
//! }
//! ```
//!
//! Unknown keys are rejected; errors carry the dotted key path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Market, ModelSpec, Retailer, TransactionCost, DEFAULT_Q_UPPER};
use crate::pc::SolverConfig;
use crate::scenarios::Scenario;
use crate::vi::DecisionVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: ModelFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverFile>,
}

fn default_q_upper() -> f64 {
    DEFAULT_Q_UPPER
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub m: usize,
    pub n: usize,
    #[serde(default = "default_q_upper")]
    pub q_upper: f64,
    #[serde(default = "default_true")]
    pub loss_gradient_includes_multiplier: bool,
    pub retailers: Vec<RetailerFile>,
    pub markets: Vec<MarketFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetailerFile {
    pub c: f64,
    #[serde(rename = "B")]
    pub budget: f64,
    #[serde(rename = "D")]
    pub loss: f64,
    pub t: f64,
    pub mu: f64,
    pub costs: Vec<CostFile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    pub a: f64,
    pub b: f64,
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    pub alpha: f64,
    pub gamma: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialFile {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverFile {
    pub beta0: f64,
    pub nu: f64,
    pub mu: f64,
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl From<&SolverConfig> for SolverFile {
    fn from(c: &SolverConfig) -> Self {
        Self {
            beta0: c.beta0,
            nu: c.nu,
            mu: c.mu,
            rho: c.rho,
            tol: c.tol,
            max_iter: c.max_iter,
        }
    }
}

impl From<SolverFile> for SolverConfig {
    fn from(f: SolverFile) -> Self {
        Self {
            beta0: f.beta0,
            nu: f.nu,
            mu: f.mu,
            rho: f.rho,
            tol: f.tol,
            max_iter: f.max_iter,
            record_trace: false,
        }
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        let model = &s.model;
        let n = model.n();
        Self {
            model: ModelFile {
                m: model.m(),
                n,
                q_upper: model.q_upper,
                loss_gradient_includes_multiplier: model.loss_gradient_includes_multiplier,
                retailers: model
                    .retailers
                    .iter()
                    .map(|r| RetailerFile {
                        c: r.handling_cost,
                        budget: r.budget,
                        loss: r.base_loss,
                        t: r.market_share,
                        mu: r.attack_multiplier,
                        costs: r.costs.iter().map(|c| CostFile { a: c.a, b: c.b, s: c.s }).collect(),
                    })
                    .collect(),
                markets: model
                    .markets
                    .iter()
                    .map(|mk| MarketFile {
                        alpha: mk.alpha,
                        gamma: mk.gamma,
                        kappa: mk.kappa,
                    })
                    .collect(),
            },
            initial: Some(InitialFile {
                q: s.initial.q.chunks(n).map(<[f64]>::to_vec).collect(),
                u: s.initial.u.clone(),
                lambda: s.initial.lambda.clone(),
            }),
            solver: Some(SolverFile::from(&s.solver)),
        }
    }
}

fn schema(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Schema(format!("{path}: {msg}"))
}

impl ScenarioFile {
    /// Checks counts against `m` and `n` and builds a validated scenario.
    pub fn into_scenario(self, name: &str) -> Result<Scenario> {
        let mf = self.model;
        if mf.retailers.len() != mf.m {
            return Err(schema(
                "model.retailers",
                format!("{} entries but m = {}", mf.retailers.len(), mf.m),
            ));
        }
        if mf.markets.len() != mf.n {
            return Err(schema(
                "model.markets",
                format!("{} entries but n = {}", mf.markets.len(), mf.n),
            ));
        }
        for (i, r) in mf.retailers.iter().enumerate() {
            if r.costs.len() != mf.n {
                return Err(schema(
                    &format!("model.retailers[{i}].costs"),
                    format!("{} entries but n = {}", r.costs.len(), mf.n),
                ));
            }
        }
        let model = ModelSpec {
            retailers: mf
                .retailers
                .into_iter()
                .map(|r| Retailer {
                    handling_cost: r.c,
                    budget: r.budget,
                    base_loss: r.loss,
                    market_share: r.t,
                    attack_multiplier: r.mu,
                    costs: r
                        .costs
                        .into_iter()
                        .map(|c| TransactionCost::new(c.a, c.b, c.s))
                        .collect(),
                })
                .collect(),
            markets: mf
                .markets
                .into_iter()
                .map(|mk| Market::new(mk.alpha, mk.gamma, mk.kappa))
                .collect(),
            q_upper: mf.q_upper,
            loss_gradient_includes_multiplier: mf.loss_gradient_includes_multiplier,
        };
        model.validate().map_err(|e| schema("model", e))?;
        let (m, n) = (mf.m, mf.n);

        let initial = match self.initial {
            None => DecisionVector::uniform(m, n, 1.0, 0.0),
            Some(init) => {
                if init.q.len() != m || init.q.iter().any(|row| row.len() != n) {
                    return Err(schema("initial.Q", format!("expected an {m} x {n} matrix")));
                }
                if init.u.len() != m {
                    return Err(schema("initial.u", format!("expected {m} entries")));
                }
                if init.lambda.len() != m {
                    return Err(schema("initial.lambda", format!("expected {m} entries")));
                }
                DecisionVector {
                    m,
                    n,
                    q: init.q.into_iter().flatten().collect(),
                    u: init.u,
                    lambda: init.lambda,
                }
            }
        };
        let solver: SolverConfig = self.solver.map(Into::into).unwrap_or_default();
        solver.validate().map_err(|e| schema("solver", e))?;

        let scenario = Scenario {
            name: name.to_string(),
            model,
            initial,
            solver,
        };
        scenario.validate().map_err(|e| schema("initial", e))?;
        Ok(scenario)
    }
}

/// Parse and validate scenario JSON.
pub fn parse_scenario(text: &str, name: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let inner = e.inner().to_string();
        // serde reports a missing key against its parent object
        if let Some(rest) = inner.strip_prefix("missing field `") {
            if let Some(field) = rest.split('`').next() {
                path = if path == "." {
                    field.to_string()
                } else {
                    format!("{path}.{field}")
                };
            }
        }
        Error::Schema(format!("{path}: {inner}"))
    })?;
    file.into_scenario(name)
}

pub fn to_json(scenario: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(&ScenarioFile::from(scenario)).expect("scenario serializes");
    s.push('\n');
    s
}
