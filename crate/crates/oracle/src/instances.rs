//! Random arbitrage-free instances for property runs.

use knockout::market::{Claim, MarketTree, Node, NodeId, TerminalMeasure};
use knockout::risk::{RiskMeasure, Scenario};
use rand::Rng;

/// A market with a reference measure and a claim.
#[derive(Clone, Debug)]
pub struct Instance {
    pub tree: MarketTree,
    pub reference: TerminalMeasure,
    pub claim: Claim,
}

/// Shape of generated trees.
#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub min_leaves: usize,
    pub max_leaves: usize,
    pub max_periods: usize,
    pub max_assets: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Self {
            min_leaves: 2,
            max_leaves: 12,
            max_periods: 2,
            max_assets: 2,
        }
    }
}

/// A random tree in which every node's increments average to zero under
/// strictly positive weights, so a strictly positive martingale measure
/// exists.
pub fn random_market<R: Rng>(rng: &mut R, shape: Shape) -> MarketTree {
    loop {
        let periods = rng.gen_range(1..=shape.max_periods);
        let assets = rng.gen_range(1..=shape.max_assets);
        let mut nodes = vec![Node {
            id: 0,
            parent: None,
            time: 0,
            prices: (0..assets).map(|_| round(rng.gen_range(0.5..2.0))).collect(),
        }];
        let mut frontier: Vec<usize> = vec![0];
        for t in 1..=periods {
            let mut next = Vec::new();
            for &pi in &frontier {
                let parent = nodes[pi].clone();
                // With d assets, fewer than d + 1 moving children would put
                // the parent price on the boundary of their hull.
                let least = assets + 1;
                let branching = if periods == 1 {
                    rng.gen_range(least..=shape.max_leaves.max(least))
                } else if t == 1 {
                    rng.gen_range(least..=3)
                } else if rng.gen_bool(0.2) {
                    1
                } else {
                    rng.gen_range(least..=4)
                };
                for prices in children_prices(rng, &parent.prices, branching) {
                    let id = nodes.len() as NodeId;
                    nodes.push(Node {
                        id,
                        parent: Some(parent.id),
                        time: t,
                        prices,
                    });
                    next.push(nodes.len() - 1);
                }
            }
            frontier = next;
        }
        if (shape.min_leaves..=shape.max_leaves).contains(&frontier.len()) {
            return MarketTree::new(assets, nodes).expect("generated tree is valid");
        }
    }
}

fn children_prices<R: Rng>(rng: &mut R, parent: &[f64], count: usize) -> Vec<Vec<f64>> {
    let weights: Vec<f64> = (0..count).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let raw: Vec<Vec<f64>> = (0..count)
        .map(|_| parent.iter().map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mean: Vec<f64> = (0..parent.len())
        .map(|a| raw.iter().zip(&weights).map(|(v, w)| v[a] * w).sum::<f64>() / total)
        .collect();
    raw.iter()
        .map(|v| {
            (0..parent.len())
                .map(|a| {
                    // Moves of at most 40% keep prices positive.
                    let step = 0.2 * (v[a] - mean[a]);
                    round(parent[a] * (1.0 + step))
                })
                .collect()
        })
        .collect()
}

/// Prices with a short decimal expansion so vertex coordinates stay tame.
fn round(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn random_reference<R: Rng>(rng: &mut R, leaves: usize) -> TerminalMeasure {
    let w: Vec<f64> = (0..leaves).map(|_| rng.gen_range(0.2..1.0)).collect();
    TerminalMeasure::from_weights(&w).expect("positive weights")
}

/// Calls, puts, digitals or random nonnegative payoffs, nonzero somewhere.
pub fn random_claim<R: Rng>(rng: &mut R, tree: &MarketTree) -> Claim {
    let leaves: Vec<&Node> = tree.leaf_ids().iter().map(|id| tree.node(*id).expect("leaf")).collect();
    loop {
        let asset = rng.gen_range(0..tree.assets());
        let prices: Vec<f64> = leaves.iter().map(|n| n.prices[asset]).collect();
        let lo = prices.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = prices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let strike = rng.gen_range(lo..=hi.max(lo + 1e-6));
        let payoff: Vec<f64> = match rng.gen_range(0..4) {
            0 => prices.iter().map(|s| (s - strike).max(0.0)).collect(),
            1 => prices.iter().map(|s| (strike - s).max(0.0)).collect(),
            2 => prices.iter().map(|s| if *s > strike { 1.0 } else { 0.0 }).collect(),
            _ => prices
                .iter()
                .map(|_| if rng.gen_bool(0.3) { 0.0 } else { round(rng.gen_range(0.0..2.0)) })
                .collect(),
        };
        if payoff.iter().any(|h| *h > 1e-3) {
            let payoff = payoff.into_iter().map(|h| if h > 1e-3 { h } else { 0.0 }).collect();
            return Claim::new(payoff).expect("nonnegative payoff");
        }
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, shape: Shape) -> Instance {
    let tree = random_market(rng, shape);
    let reference = random_reference(rng, tree.num_leaves());
    let claim = random_claim(rng, &tree);
    Instance { tree, reference, claim }
}

/// A small scenario set: the reference measure plus up to two tilted
/// densities with penalties.
pub fn random_scenarios<R: Rng>(rng: &mut R, reference: &TerminalMeasure) -> RiskMeasure {
    let p = reference.probabilities();
    let count = rng.gen_range(1..=3);
    let scenarios = (0..count)
        .map(|i| {
            let raw: Vec<f64> = if i == 0 && rng.gen_bool(0.5) {
                vec![1.0; p.len()]
            } else {
                (0..p.len()).map(|_| rng.gen_range(0.1..2.0)).collect()
            };
            let mean: f64 = raw.iter().zip(p).map(|(z, p)| z * p).sum();
            Scenario {
                density: raw.iter().map(|z| z / mean).collect(),
                penalty: if i == 0 { 0.0 } else { rng.gen_range(0.0..0.2) },
            }
        })
        .collect();
    RiskMeasure::Scenarios { scenarios }
}

pub fn random_avar<R: Rng>(rng: &mut R) -> RiskMeasure {
    RiskMeasure::AverageValueAtRisk {
        beta: rng.gen_range(0.1..0.9),
    }
}

pub fn random_entropic<R: Rng>(rng: &mut R) -> RiskMeasure {
    RiskMeasure::Entropic {
        gamma: rng.gen_range(0.2..3.0),
    }
}

/// A measure with full support drawn around the reference measure.
pub fn random_measure<R: Rng>(rng: &mut R, leaves: usize) -> TerminalMeasure {
    let w: Vec<f64> = (0..leaves).map(|_| rng.gen_range(0.01..1.0)).collect();
    TerminalMeasure::from_weights(&w).expect("positive weights")
}
