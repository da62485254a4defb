//! Machine-readable reports. JSON is the full record; CSV is a flat projection.

use std::path::PathBuf;

use seqlearn_core::{ConfigParams, DataSchema, ReplicationSummary, SimulationDesign};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: CommandEcho,
    pub result: ResultPayload,
    pub provenance: Provenance,
    /// False only when the data ran out before the risk bound could be met.
    pub certified: bool,
    #[serde(default)]
    pub advisories: Vec<String>,
}

/// The fully resolved invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CommandEcho {
    Eta {
        k: usize,
        rho: Option<f64>,
    },
    Simulate {
        design: SimulationDesign,
    },
    Run {
        data: Vec<PathBuf>,
        schema: DataSchema,
        config: ConfigParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultPayload {
    Eta(EtaResult),
    Simulate(ReplicationSummary),
    Run(RunResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaResult {
    pub k: usize,
    pub eta: f64,
    pub terms_used: usize,
    pub truncation_threshold: f64,
    /// `eta / rho`, when a rho was given.
    pub projected_overshoot: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub t_steps: usize,
    /// Rows absorbed into the final fit.
    pub sample_size: usize,
    pub n_projected: Option<f64>,
    pub n_final: Option<usize>,
    pub s2: Option<f64>,
    pub coefficients: Vec<Coefficient>,
    /// Present when the source ran dry.
    pub shortfall: Option<Shortfall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub phase: String,
    pub obtained: usize,
    pub needed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub timestamp: String,
}

impl Provenance {
    pub fn now() -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }
}

impl Report {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Header line plus one data row.
    pub fn to_csv(&self) -> String {
        let (header, row): (Vec<String>, Vec<String>) = match &self.result {
            ResultPayload::Eta(e) => (
                ["k", "eta", "terms_used", "projected_overshoot"]
                    .map(String::from)
                    .to_vec(),
                vec![
                    e.k.to_string(),
                    e.eta.to_string(),
                    e.terms_used.to_string(),
                    opt(e.projected_overshoot),
                ],
            ),
            ResultPayload::Simulate(s) => (
                [
                    "b",
                    "n_star",
                    "n_bar",
                    "se_n",
                    "ratio",
                    "diff",
                    "sigma_bar",
                    "se_sigma",
                    "r_star",
                    "r_bar",
                    "se_r",
                ]
                .map(String::from)
                .to_vec(),
                [
                    s.b,
                    s.n_star,
                    s.n_bar,
                    s.se_n,
                    s.ratio,
                    s.diff,
                    s.sigma_bar,
                    s.se_sigma,
                    s.r_star,
                    s.r_bar,
                    s.se_r,
                ]
                .iter()
                .map(f64::to_string)
                .collect(),
            ),
            ResultPayload::Run(r) => {
                let mut header: Vec<String> =
                    ["certified", "t_steps", "n_projected", "n_final", "s2"]
                        .map(String::from)
                        .to_vec();
                let mut row = vec![
                    self.certified.to_string(),
                    r.t_steps.to_string(),
                    opt(r.n_projected),
                    r.n_final.map(|n| n.to_string()).unwrap_or_default(),
                    opt(r.s2),
                ];
                for c in &r.coefficients {
                    header.push(format!("est_{}", c.name));
                    header.push(format!("se_{}", c.name));
                    row.push(c.estimate.to_string());
                    row.push(c.std_error.to_string());
                }
                (header, row)
            }
        };
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
