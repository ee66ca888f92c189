//! Finite non-recombining market trees, terminal measures, claims and
//! randomized tests.
//!
//! Every leaf-indexed vector in the crate is ordered by ascending leaf id.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};

pub type NodeId = u64;

/// Probabilities must sum to one within this tolerance.
pub const SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub time: usize,
    /// Discounted asset prices at this node.
    pub prices: Vec<f64>,
}

/// A validated event tree. Leaves (nodes at the horizon) correspond one to
/// one with paths, so measures on paths are plain leaf vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketTree {
    assets: usize,
    horizon: usize,
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    children: Vec<Vec<usize>>,
    root: usize,
    leaves: Vec<usize>,
    /// For every leaf position, the node indices from the root down to the leaf.
    paths: Vec<Vec<usize>>,
}

impl MarketTree {
    pub fn new(assets: usize, mut nodes: Vec<Node>) -> Result<Self> {
        if assets == 0 {
            return Err(invalid("assets", None, "at least one asset is required"));
        }
        if nodes.is_empty() {
            return Err(invalid("nodes", None, "tree has no nodes"));
        }
        nodes.sort_by_key(|n| n.id);
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id, i).is_some() {
                return Err(invalid("id", Some(node.id), "duplicate node id"));
            }
            if node.prices.len() != assets {
                return Err(invalid(
                    "prices",
                    Some(node.id),
                    format!("expected {assets} prices, found {}", node.prices.len()),
                ));
            }
            if node.prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(invalid("prices", Some(node.id), "prices must be finite and nonnegative"));
            }
        }

        let mut root = None;
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            match node.parent {
                None => {
                    if node.time != 0 {
                        return Err(invalid("time", Some(node.id), "root must be at time 0"));
                    }
                    if root.replace(i).is_some() {
                        return Err(invalid("parent", Some(node.id), "more than one root"));
                    }
                }
                Some(pid) => {
                    let Some(&p) = index.get(&pid) else {
                        return Err(invalid("parent", Some(node.id), format!("unknown parent {pid}")));
                    };
                    if nodes[p].time + 1 != node.time {
                        return Err(invalid(
                            "time",
                            Some(node.id),
                            "node time must be one more than its parent's",
                        ));
                    }
                    children[p].push(i);
                }
            }
        }
        let Some(root) = root else {
            return Err(invalid("parent", None, "no root node"));
        };
        let horizon = nodes.iter().map(|n| n.time).max().unwrap_or(0);
        if horizon == 0 {
            return Err(invalid("time", None, "tree must have at least one period"));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.time < horizon && children[i].is_empty() {
                return Err(invalid("nodes", Some(node.id), "non-terminal node without children"));
            }
        }

        // Parent times strictly decrease, so every node reaches the root and
        // the structure is a tree.
        let leaves: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].time == horizon).collect();
        let paths = leaves
            .iter()
            .map(|&leaf| {
                let mut path = vec![leaf];
                let mut cur = leaf;
                while let Some(pid) = nodes[cur].parent {
                    cur = index[&pid];
                    path.push(cur);
                }
                path.reverse();
                path
            })
            .collect();

        Ok(Self {
            assets,
            horizon,
            nodes,
            index,
            children,
            root,
            leaves,
            paths,
        })
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// All nodes, sorted by id.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[self.root]
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    /// Position of `id` in [`MarketTree::nodes`].
    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = &Node> {
        let kids = self.index.get(&id).map(|&i| self.children[i].as_slice()).unwrap_or(&[]);
        kids.iter().map(|&c| &self.nodes[c])
    }

    pub fn is_terminal(&self, id: NodeId) -> bool {
        self.node(id).is_some_and(|n| n.time == self.horizon)
    }

    /// Leaf ids in leaf-vector order.
    pub fn leaf_ids(&self) -> Vec<NodeId> {
        self.leaves.iter().map(|&i| self.nodes[i].id).collect()
    }

    /// Position of a leaf id in leaf vectors.
    pub fn leaf_position(&self, id: NodeId) -> Option<usize> {
        self.leaves.iter().position(|&i| self.nodes[i].id == id)
    }

    /// Non-terminal nodes in id order.
    pub fn internal_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.time < self.horizon)
    }

    /// Nodes on the path to the leaf at `leaf` (a leaf-vector position), root first.
    pub fn path(&self, leaf: usize) -> impl Iterator<Item = &Node> {
        self.paths[leaf].iter().map(|&i| &self.nodes[i])
    }

    /// Whether the path of leaf position `leaf` passes through `id`.
    pub fn passes_through(&self, leaf: usize, id: NodeId) -> bool {
        self.index
            .get(&id)
            .is_some_and(|i| self.paths[leaf].contains(i))
    }

    /// Leaf positions whose path passes through `id`.
    pub fn leaves_below(&self, id: NodeId) -> Vec<usize> {
        (0..self.leaves.len()).filter(|&l| self.passes_through(l, id)).collect()
    }
}

fn invalid(field: &'static str, node: Option<NodeId>, reason: impl Into<String>) -> HedgeError {
    HedgeError::Invalid {
        field,
        node,
        reason: reason.into(),
    }
}

/// A probability vector over leaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TerminalMeasure {
    probabilities: Vec<f64>,
}

impl TerminalMeasure {
    /// A general measure: nonnegative entries summing to one.
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(invalid("probabilities", None, "empty measure"));
        }
        for (i, p) in probabilities.iter().enumerate() {
            if !p.is_finite() || *p < -SUM_TOL {
                return Err(invalid("probabilities", None, format!("entry {i} is {p}")));
            }
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(invalid("probabilities", None, format!("sum is {sum}, expected 1")));
        }
        let probabilities = probabilities.into_iter().map(|p| p.max(0.0)).collect();
        Ok(Self { probabilities })
    }

    /// A reference measure, which must charge every leaf.
    pub fn reference(probabilities: Vec<f64>, leaf_ids: &[NodeId]) -> Result<Self> {
        if probabilities.len() != leaf_ids.len() {
            return Err(HedgeError::DimensionMismatch {
                expected: leaf_ids.len(),
                found: probabilities.len(),
            });
        }
        for (p, &leaf) in probabilities.iter().zip(leaf_ids) {
            if !(*p > 0.0) {
                return Err(HedgeError::NotStrictlyPositive { leaf, value: *p });
            }
        }
        Self::new(probabilities)
    }

    /// Normalizes a nonnegative weight vector into a measure.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(invalid("probabilities", None, "weights do not normalize"));
        }
        Self::new(weights.iter().map(|w| w.max(0.0) / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probabilities: vec![1.0 / n as f64; n],
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Density `dQ/dP` with respect to a strictly positive `reference`.
    pub fn density(&self, reference: &TerminalMeasure) -> Result<Vec<f64>> {
        check_len(reference.len(), self.len())?;
        Ok(self
            .probabilities
            .iter()
            .zip(&reference.probabilities)
            .map(|(q, p)| q / p)
            .collect())
    }

    /// `E[payoff]` under this measure.
    pub fn expect(&self, payoff: &[f64]) -> Result<f64> {
        expectation(self, payoff)
    }
}

/// A nonnegative terminal payoff in discounted units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Claim {
    payoff: Vec<f64>,
}

impl Claim {
    pub fn new(payoff: Vec<f64>) -> Result<Self> {
        for (i, h) in payoff.iter().enumerate() {
            if !h.is_finite() || *h < 0.0 {
                return Err(invalid("payoff", None, format!("entry {i} is {h}")));
            }
        }
        Ok(Self { payoff })
    }

    pub fn payoff(&self) -> &[f64] {
        &self.payoff
    }

    pub fn len(&self) -> usize {
        self.payoff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payoff.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.payoff.iter().all(|h| *h == 0.0)
    }

    /// Leaf positions where the claim pays something.
    pub fn support(&self) -> Vec<usize> {
        (0..self.payoff.len()).filter(|&i| self.payoff[i] > 0.0).collect()
    }

    /// The modified claim `phi * H`.
    pub fn modified(&self, test: &RandomizedTest) -> Result<Vec<f64>> {
        check_len(self.len(), test.len())?;
        Ok(self.payoff.iter().zip(test.values()).map(|(h, f)| h * f).collect())
    }

    /// The position `(phi - 1) H` whose risk is minimized.
    pub fn shortfall_position(&self, test: &RandomizedTest) -> Result<Vec<f64>> {
        check_len(self.len(), test.len())?;
        Ok(self
            .payoff
            .iter()
            .zip(test.values())
            .map(|(h, f)| (f - 1.0) * h)
            .collect())
    }
}

/// A `[0, 1]`-valued function on the leaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomizedTest {
    values: Vec<f64>,
}

impl RandomizedTest {
    /// Accepts values in `[0, 1]` up to `1e-12` and clips them into range.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < -SUM_TOL || *v > 1.0 + SUM_TOL {
                return Err(invalid("test", None, format!("entry {i} is {v}, outside [0, 1]")));
            }
        }
        Ok(Self {
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    /// Clips arbitrary finite values into `[0, 1]`.
    pub fn clipped(values: &[f64]) -> Self {
        Self {
            values: values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self::clipped(&vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(HedgeError::DimensionMismatch { expected, found })
    }
}

/// `sum_w measure_w * payoff_w`.
pub fn expectation(measure: &TerminalMeasure, payoff: &[f64]) -> Result<f64> {
    check_len(measure.len(), payoff.len())?;
    Ok(measure
        .probabilities()
        .iter()
        .zip(payoff)
        .map(|(p, x)| p * x)
        .sum())
}

/// The success ratio of a terminal wealth: `1` where wealth covers the claim,
/// `V_T / H` elsewhere. On `{H = 0}` the ratio is `1`.
pub fn success_ratio(terminal_value: &[f64], claim: &Claim) -> Result<RandomizedTest> {
    check_len(claim.len(), terminal_value.len())?;
    let mut values = Vec::with_capacity(claim.len());
    for (i, (v, h)) in terminal_value.iter().zip(claim.payoff()).enumerate() {
        if !v.is_finite() || *v < 0.0 {
            return Err(invalid("terminal value", None, format!("entry {i} is {v}")));
        }
        values.push(if v >= h { 1.0 } else { v / h });
    }
    Ok(RandomizedTest { values })
}
