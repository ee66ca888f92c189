//! JSON input files: markets, claims and risk configurations.
//!
//! Leaf-keyed maps must name every leaf exactly once; keys are decimal leaf
//! ids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};
use crate::market::{Claim, MarketTree, Node, NodeId, TerminalMeasure};
use crate::risk::RiskMeasure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketFile {
    pub assets: usize,
    pub nodes: Vec<Node>,
    pub terminal_probabilities: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimFile {
    pub payoff: BTreeMap<String, f64>,
}

fn parse<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| HedgeError::Parse(e.to_string()))
}

/// Orders a leaf-keyed map by the tree's leaves.
pub fn leaf_vector(tree: &MarketTree, map: &BTreeMap<String, f64>, field: &'static str) -> Result<Vec<f64>> {
    let mut by_id: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (key, value) in map {
        let id: NodeId = key.trim().parse().map_err(|_| HedgeError::Invalid {
            field,
            node: None,
            reason: format!("key {key:?} is not a node id"),
        })?;
        if !tree.is_terminal(id) {
            return Err(HedgeError::Invalid {
                field,
                node: Some(id),
                reason: "not a leaf".into(),
            });
        }
        if by_id.insert(id, *value).is_some() {
            return Err(HedgeError::Invalid {
                field,
                node: Some(id),
                reason: "leaf listed twice".into(),
            });
        }
    }
    tree.leaf_ids()
        .into_iter()
        .map(|id| {
            by_id.get(&id).copied().ok_or(HedgeError::Invalid {
                field,
                node: Some(id),
                reason: "missing leaf".into(),
            })
        })
        .collect()
}

pub fn parse_market(text: &str) -> Result<MarketFile> {
    parse(text)
}

/// Parses and validates a market file.
pub fn load_market(text: &str) -> Result<(MarketTree, TerminalMeasure)> {
    market_from_file(parse_market(text)?)
}

pub fn market_from_file(file: MarketFile) -> Result<(MarketTree, TerminalMeasure)> {
    let tree = MarketTree::new(file.assets, file.nodes)?;
    let probabilities = leaf_vector(&tree, &file.terminal_probabilities, "terminal_probabilities")?;
    let reference = TerminalMeasure::reference(probabilities, &tree.leaf_ids())?;
    Ok((tree, reference))
}

pub fn parse_claim(text: &str) -> Result<ClaimFile> {
    parse(text)
}

pub fn load_claim(text: &str, tree: &MarketTree) -> Result<Claim> {
    Claim::new(leaf_vector(tree, &parse_claim(text)?.payoff, "payoff")?)
}

pub fn parse_risk(text: &str) -> Result<RiskMeasure> {
    parse(text)
}

/// Parses a risk configuration and checks it against the reference measure.
pub fn load_risk(text: &str, reference: &TerminalMeasure) -> Result<RiskMeasure> {
    let rm = parse_risk(text)?;
    rm.validate(reference)?;
    Ok(rm)
}

/// A market file for an existing tree and reference measure.
pub fn market_file(tree: &MarketTree, reference: &TerminalMeasure) -> MarketFile {
    MarketFile {
        assets: tree.assets(),
        nodes: tree.nodes().to_vec(),
        terminal_probabilities: keyed(tree, reference.probabilities()),
    }
}

pub fn claim_file(tree: &MarketTree, claim: &Claim) -> ClaimFile {
    ClaimFile {
        payoff: keyed(tree, claim.payoff()),
    }
}

fn keyed(tree: &MarketTree, values: &[f64]) -> BTreeMap<String, f64> {
    tree.leaf_ids().iter().map(|id| id.to_string()).zip(values.iter().copied()).collect()
}
