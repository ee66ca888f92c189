//! Report schema and its canonical JSON rendering: keys sorted, floats
//! rounded to twelve significant digits, non-finite values as `null`. The
//! `inputs` echo is kept exact so a report reruns bit for bit.

use std::path::Path;

use knockout::certificate::Check;
use knockout::io::{ClaimFile, MarketFile};
use knockout::market::NodeId;
use knockout::risk::RiskMeasure;
use knockout::static_hedge::{CuttingPlaneStats, SolverPath};
use knockout::superhedge::NodeHolding;
use knockout::Tolerances;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

/// Everything needed to rerun the solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub market: MarketFile,
    pub claim: ClaimFile,
    pub risk: RiskMeasure,
    pub budget: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytopeSection {
    pub leaves: Vec<NodeId>,
    pub vertices: Vec<Vec<f64>>,
    pub superhedging_price: f64,
    pub attaining_vertex: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticSection {
    pub phi: Vec<f64>,
    pub value: f64,
    pub solver_path: SolverPath,
    pub cutting_plane: Option<CuttingPlaneStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub np1: f64,
    pub np2: f64,
    /// `|rho(-(H - V_T)^+) - p|`; absent when the hedge was skipped.
    pub decomposition: Option<f64>,
    pub slackness: f64,
    pub eq_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSection {
    pub q_tilde: Vec<f64>,
    pub y: Vec<f64>,
    pub p: f64,
    pub d: f64,
    pub gap: f64,
    pub gap_tolerance: f64,
    pub saddle_value: f64,
    pub modified_price: f64,
    pub passed: bool,
    pub residuals: Residuals,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedgeSection {
    pub initial_capital: f64,
    pub superhedge_cost: f64,
    pub dynamic_risk: f64,
    pub terminal_values: Vec<f64>,
    pub success_ratio: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub inputs: Inputs,
    pub tolerances: Tolerances,
    pub polytope: PolytopeSection,
    #[serde(rename = "static")]
    pub static_: StaticSection,
    pub certificate: CertificateSection,
    pub hedge: Option<HedgeSection>,
    pub strategy: Vec<NodeHolding>,
    pub flags: Vec<String>,
}

pub mod flag {
    pub const SHORT_CIRCUIT: &str = "short_circuit";
    pub const DEGENERATE_CERTIFICATE: &str = "degenerate_certificate";
    pub const CUTTING_PLANE_TOLERANCE: &str = "cutting_plane_tolerance";
    pub const HEDGE_SKIPPED: &str = "hedge_skipped";
    pub const CERTIFICATE_FAILED: &str = "certificate_failed";
}

impl Report {
    pub fn has_flag(&self, name: &str) -> bool {
        self.flags.iter().any(|f| f == name)
    }
}

fn round12(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn canonical(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round12(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, canonical(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys and rounded floats.
pub fn render<T: Serialize>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value).map_err(|e| CliError::new(4, format!("serializing report: {e}")))?;
    let tree = match tree {
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| if k == "inputs" { (k, v) } else { (k, canonical(v)) })
                .collect(),
        ),
        other => canonical(other),
    };
    let mut text = serde_json::to_string_pretty(&tree).expect("a json value always serializes");
    text.push('\n');
    Ok(text)
}

pub fn parse_report(text: &str) -> Result<Report> {
    serde_json::from_str(text).map_err(|e| CliError::invalid(format!("report: {e}")))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_and_sorts() {
        let v = serde_json::json!({"b": 1.0 / 3.0, "a": [2.0 / 3.0, 5, f64::NAN]});
        let text = render(&v).unwrap();
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        assert!(text.contains("0.333333333333"));
        assert!(!text.contains("0.3333333333333"));
        assert!(text.contains("0.666666666667"));
    }

    #[test]
    fn inputs_stay_exact() {
        let v = serde_json::json!({"inputs": {"p": 1.0 / 3.0}, "x": 1.0 / 3.0});
        let back: Value = serde_json::from_str(&render(&v).unwrap()).unwrap();
        assert_eq!(back["inputs"]["p"].as_f64(), Some(1.0 / 3.0));
        assert_eq!(back["x"].as_f64(), Some(0.333333333333));
    }

    #[test]
    fn rendering_is_idempotent() {
        let v = serde_json::json!({"x": [0.1 + 0.2, 1e-17, -123_456.789_012_345_67]});
        let once = render(&v).unwrap();
        let again: Value = serde_json::from_str(&once).unwrap();
        assert_eq!(render(&again).unwrap(), once);
    }
}
