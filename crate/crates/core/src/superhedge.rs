//! Minimal-cost superhedging on the tree and the dynamic pipeline built on
//! the static solution.

use serde::{Deserialize, Serialize};

use crate::certificate::{certify, Certified};
use crate::error::{HedgeError, Result};
use crate::lp::{LinearProgram, Relation, SimplexOptions};
use crate::market::{check_len, success_ratio, Claim, MarketTree, NodeId, TerminalMeasure};
use crate::risk::RiskMeasure;
use crate::static_hedge::{feasible, HedgeProblem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeHolding {
    pub node: NodeId,
    pub holdings: Vec<f64>,
    pub value: f64,
}

/// A self-financing strategy, one entry per node in id order. Terminal nodes
/// carry empty holdings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub initial_capital: f64,
    pub nodes: Vec<NodeHolding>,
    /// Martingale measure read off the leaf-row duals; it prices the payoff
    /// at the initial capital.
    pub pricing_measure: Option<TerminalMeasure>,
}

impl Strategy {
    pub fn node(&self, id: NodeId) -> Option<&NodeHolding> {
        self.nodes.iter().find(|n| n.node == id)
    }

    /// Values at the leaves in leaf-vector order.
    pub fn terminal_values(&self, tree: &MarketTree) -> Vec<f64> {
        tree.leaf_ids()
            .iter()
            .map(|id| self.node(*id).map_or(f64::NAN, |n| n.value))
            .collect()
    }

    /// Adds riskless cash to every node value.
    pub fn with_cash(mut self, cash: f64) -> Self {
        self.initial_capital += cash;
        for n in &mut self.nodes {
            n.value += cash;
        }
        self
    }

    /// Largest `|V_child - V_parent - xi_parent (S_child - S_parent)|`.
    pub fn self_financing_residual(&self, tree: &MarketTree) -> f64 {
        let mut worst = 0.0_f64;
        for node in tree.nodes() {
            let Some(parent) = node.parent.and_then(|p| tree.node(p)) else {
                continue;
            };
            let (Some(c), Some(pn)) = (self.node(node.id), self.node(parent.id)) else {
                return f64::INFINITY;
            };
            let gains: f64 = pn
                .holdings
                .iter()
                .zip(node.prices.iter().zip(&parent.prices))
                .map(|(xi, (s1, s0))| xi * (s1 - s0))
                .sum();
            worst = worst.max((c.value - pn.value - gains).abs());
        }
        worst
    }

    pub fn min_value(&self) -> f64 {
        self.nodes.iter().map(|n| n.value).fold(f64::INFINITY, f64::min)
    }
}

/// `min V_root` over self-financing strategies with nonnegative values that
/// dominate `payoff` at the leaves.
pub fn superhedge(tree: &MarketTree, payoff: &[f64]) -> Result<Strategy> {
    superhedge_with(tree, payoff, &SimplexOptions::default())
}

pub fn superhedge_with(tree: &MarketTree, payoff: &[f64], options: &SimplexOptions) -> Result<Strategy> {
    check_len(tree.num_leaves(), payoff.len())?;
    Claim::new(payoff.to_vec())?;
    let d = tree.assets();
    let nodes = tree.nodes();
    let internal: Vec<usize> = (0..nodes.len()).filter(|&i| !tree.is_terminal(nodes[i].id)).collect();
    let holding_var = |node_idx: usize, asset: usize| -> usize {
        nodes.len() + internal.iter().position(|&i| i == node_idx).expect("internal node") * d + asset
    };
    let total = nodes.len() + internal.len() * d;

    let root = tree.node_index(tree.root().id).expect("root is indexed");
    let mut objective = vec![0.0; total];
    objective[root] = 1.0;
    let mut lp = LinearProgram::minimize(objective);
    for &i in &internal {
        for a in 0..d {
            lp.set_free(holding_var(i, a));
        }
    }
    for (i, node) in nodes.iter().enumerate() {
        let Some(parent) = node.parent else { continue };
        let pi = tree.node_index(parent).expect("parent is indexed");
        let mut coeffs = vec![0.0; total];
        coeffs[i] = 1.0;
        coeffs[pi] = -1.0;
        for a in 0..d {
            coeffs[holding_var(pi, a)] = -(node.prices[a] - nodes[pi].prices[a]);
        }
        lp.add_constraint(coeffs, Relation::Eq, 0.0);
    }
    let leaf_ids = tree.leaf_ids();
    let mut leaf_rows = Vec::with_capacity(leaf_ids.len());
    for (id, h) in leaf_ids.iter().zip(payoff) {
        let mut coeffs = vec![0.0; total];
        coeffs[tree.node_index(*id).expect("leaf is indexed")] = 1.0;
        leaf_rows.push(lp.add_constraint(coeffs, Relation::Ge, *h));
    }
    let sol = lp.solve_with(options)?.into_optimal()?;

    let strategy_nodes = nodes
        .iter()
        .enumerate()
        .map(|(i, node)| NodeHolding {
            node: node.id,
            holdings: if internal.contains(&i) {
                (0..d).map(|a| sol.x[holding_var(i, a)]).collect()
            } else {
                Vec::new()
            },
            value: sol.x[i],
        })
        .collect();
    let duals: Vec<f64> = leaf_rows.iter().map(|&r| sol.duals[r].max(0.0)).collect();
    Ok(Strategy {
        initial_capital: sol.x[root],
        nodes: strategy_nodes,
        pricing_measure: TerminalMeasure::from_weights(&duals).ok(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HedgeResult {
    pub certified: Certified,
    pub modified_claim: Vec<f64>,
    /// Cost of superhedging the modified claim before adding the cash surplus.
    pub superhedge_cost: f64,
    pub strategy: Strategy,
    pub terminal_values: Vec<f64>,
    /// `rho(-(H - V_T)^+)`.
    pub dynamic_risk: f64,
    /// `|dynamic_risk - static value|`.
    pub decomposition_residual: f64,
}

impl HedgeResult {
    pub fn static_value(&self) -> f64 {
        self.certified.solution.value
    }
}

/// Static solution, certificate, and a strategy superhedging the modified
/// claim that starts from the full budget.
pub fn solve_dynamic(tree: &MarketTree, problem: &HedgeProblem<'_>, rm: &RiskMeasure) -> Result<HedgeResult> {
    let certified = certify(problem, rm)?;
    hedge_certified(tree, problem, rm, certified)
}

pub fn hedge_certified(
    tree: &MarketTree,
    problem: &HedgeProblem<'_>,
    rm: &RiskMeasure,
    certified: Certified,
) -> Result<HedgeResult> {
    let modified_claim = problem.claim.modified(&certified.solution.test)?;
    let options = problem.simplex_options();
    let base = superhedge_with(tree, &modified_claim, &options)?;
    let cost = base.initial_capital;
    if cost > problem.budget + 1e-8 * problem.budget.max(1.0) {
        return Err(HedgeError::Certificate {
            check: "feasibility",
            detail: format!("modified claim costs {cost:e} above the budget {:e}", problem.budget),
        });
    }
    let strategy = base.with_cash((problem.budget - cost).max(0.0));
    let terminal_values = strategy.terminal_values(tree);
    let shortfall: Vec<f64> = problem
        .claim
        .payoff()
        .iter()
        .zip(&terminal_values)
        .map(|(h, v)| -(h - v).max(0.0))
        .collect();
    let dynamic_risk = rm.evaluate(&shortfall, problem.reference)?.value;
    let decomposition_residual = (dynamic_risk - certified.solution.value).abs();
    Ok(HedgeResult {
        certified,
        modified_claim,
        superhedge_cost: cost,
        strategy,
        terminal_values,
        dynamic_risk,
        decomposition_residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessRatioReport {
    pub test: Vec<f64>,
    pub feasible: bool,
    pub risk: f64,
    pub static_value: f64,
    pub residual: f64,
    pub passed: bool,
}

/// The success ratio of the strategy's terminal wealth is itself a feasible
/// test attaining the static optimum.
pub fn verify_success_ratio(
    result: &HedgeResult,
    problem: &HedgeProblem<'_>,
    rm: &RiskMeasure,
) -> Result<SuccessRatioReport> {
    let wealth: Vec<f64> = result.terminal_values.iter().map(|v| v.max(0.0)).collect();
    let test = success_ratio(&wealth, problem.claim)?;
    let is_feasible = feasible(&test, problem.polytope, problem.claim, problem.budget + 1e-9)?;
    let risk = rm.evaluate(&problem.claim.shortfall_position(&test)?, problem.reference)?.value;
    let residual = (risk - result.static_value()).abs();
    Ok(SuccessRatioReport {
        test: test.values().to_vec(),
        feasible: is_feasible,
        risk,
        static_value: result.static_value(),
        residual,
        passed: is_feasible && residual <= 1e-6,
    })
}
