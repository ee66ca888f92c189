#![allow(dead_code)]

use knockout::market::{Claim, MarketTree, Node, NodeId, TerminalMeasure};
use knockout::martingale::{build_constraints, enumerate_vertices, MartingalePolytope};

#[derive(Debug)]
pub struct Fixture {
    pub tree: MarketTree,
    pub reference: TerminalMeasure,
    pub polytope: MartingalePolytope,
    pub claim: Claim,
}

pub fn fixture(assets: usize, nodes: Vec<Node>, probabilities: Vec<f64>, payoff: Vec<f64>) -> Fixture {
    let tree = MarketTree::new(assets, nodes).unwrap();
    let reference = TerminalMeasure::reference(probabilities, &tree.leaf_ids()).unwrap();
    let polytope = enumerate_vertices(&build_constraints(&tree), &reference, 24, 1e-9).unwrap();
    let claim = Claim::new(payoff).unwrap();
    Fixture { tree, reference, polytope, claim }
}

pub fn node(id: NodeId, parent: Option<NodeId>, time: usize, prices: &[f64]) -> Node {
    Node { id, parent, time, prices: prices.to_vec() }
}

/// One period, one asset: S0 = 1, S1 = (2, 1, 0.5), uniform reference, a call
/// paying only in the up state.
pub fn t1() -> Fixture {
    fixture(
        1,
        vec![
            node(0, None, 0, &[1.0]),
            node(1, Some(0), 1, &[2.0]),
            node(2, Some(0), 1, &[1.0]),
            node(3, Some(0), 1, &[0.5]),
        ],
        vec![1.0 / 3.0; 3],
        vec![1.0, 0.0, 0.0],
    )
}

/// Two-period trinomial with a call struck at 1.
pub fn trinomial_two_period() -> Fixture {
    let mut nodes = vec![node(0, None, 0, &[1.0])];
    let moves = [1.5, 1.0, 0.75];
    let mut id: NodeId = 1;
    let mut firsts = Vec::new();
    for m in moves {
        nodes.push(node(id, Some(0), 1, &[m]));
        firsts.push((id, m));
        id += 1;
    }
    let mut payoff = Vec::new();
    for (parent, s) in firsts {
        for m in moves {
            nodes.push(node(id, Some(parent), 2, &[s * m]));
            payoff.push((s * m - 1.0).max(0.0));
            id += 1;
        }
    }
    fixture(1, nodes, vec![1.0 / 9.0; 9], payoff)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
