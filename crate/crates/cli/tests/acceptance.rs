//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero when any
//! criterion fails.

use std::time::Instant;

use knockout::certificate::certify;
use knockout::io::market_file;
use knockout::market::{Claim, MarketTree, Node, TerminalMeasure};
use knockout::martingale::{
    build_constraints, check_no_arbitrage, enumerate_vertices, ArbitrageWitness, MartingaleConstraints,
};
use knockout::np_test::strong_duality_check;
use knockout::risk::{axiom_harness, RiskMeasure, Scenario};
use knockout::static_hedge::{solve_static, HedgeProblem, SolverPath};
use knockout::superhedge::{solve_dynamic, verify_success_ratio};
use knockout_cli::commands::load_market;
use knockout_cli::error::exit;
use knockout_oracle::instances::{
    random_avar, random_entropic, random_instance, random_measure, random_reference, random_scenarios, Instance, Shape,
};
use knockout_oracle::{grid_oracle_static, MAX_EFFECTIVE_LEAVES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MARKETS: usize = 200;
const INNER_SAMPLES: usize = 5;
const GRID: usize = 200;
const AXIOM_TRIALS: usize = 1000;

struct Outcome {
    label: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(label: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { label, passed, detail }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn t1_fixture() -> Outcome {
    const TOL: f64 = 1e-8;
    let start = Instant::now();
    let node = |id, parent, time, price| Node { id, parent, time, prices: vec![price] };
    let tree = MarketTree::new(
        1,
        vec![node(0, None, 0, 1.0), node(1, Some(0), 1, 2.0), node(2, Some(0), 1, 1.0), node(3, Some(0), 1, 0.5)],
    )
    .unwrap();
    let reference = TerminalMeasure::reference(vec![1.0 / 3.0; 3], &tree.leaf_ids()).unwrap();
    let claim = Claim::new(vec![1.0, 0.0, 0.0]).unwrap();
    let poly = enumerate_vertices(&build_constraints(&tree), &reference, 24, 1e-9).unwrap();
    let problem = HedgeProblem::new(&reference, &poly, &claim, 1.0 / 6.0).unwrap();
    let rm = RiskMeasure::expected_shortfall(3);
    let result = solve_dynamic(&tree, &problem, &rm).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let mut failures = Vec::new();
    let (u0, _) = poly.superhedging_price(&claim).unwrap();
    if !close(u0, 1.0 / 3.0, TOL) {
        failures.push(format!("U0 = {u0}"));
    }
    // Sorted order: (0, 1, 0) first, (1/3, 0, 2/3) second.
    let expected = [[0.0, 1.0, 0.0], [1.0 / 3.0, 0.0, 2.0 / 3.0]];
    let vertices_ok = poly.num_vertices() == 2
        && poly
            .vertices()
            .iter()
            .zip(&expected)
            .all(|(v, e)| v.measure.probabilities().iter().zip(e).all(|(a, b)| close(*a, *b, TOL)));
    if !vertices_ok {
        failures.push("vertices".into());
    }
    let cert = &result.certified.certificate;
    if !close(cert.primal_value, 1.0 / 6.0, TOL) || !close(cert.dual_value, 1.0 / 6.0, TOL) {
        failures.push(format!("p = {}, d = {}", cert.primal_value, cert.dual_value));
    }
    let phi = result.certified.solution.test.values()[0];
    if !close(phi, 0.5, TOL) {
        failures.push(format!("phi = {phi}"));
    }
    // y = (1, 0) on ((1/3, 0, 2/3), (0, 1, 0)).
    if !close(cert.y_tilde[1], 1.0, TOL) || !close(cert.y_tilde[0], 0.0, TOL) {
        failures.push(format!("y = {:?}", cert.y_tilde));
    }
    let usage = problem.budget_usage(&result.certified.solution.test).unwrap();
    if !close(usage[1], 1.0 / 6.0, TOL) {
        failures.push(format!("budget row at the charged vertex {}", usage[1]));
    }
    if !cert.passed() {
        failures.push("certificate checks".into());
    }
    let vertices: Vec<Vec<f64>> = poly.vertices().iter().map(|v| v.measure.probabilities().to_vec()).collect();
    let bracket = grid_oracle_static(&vertices, reference.probabilities(), claim.payoff(), 1.0 / 6.0, &rm, GRID).unwrap();
    if !bracket.contains(cert.primal_value, 1e-8) {
        failures.push("grid oracle".into());
    }
    if elapsed >= 1.0 {
        failures.push(format!("runtime {elapsed:.3} s"));
    }
    let detail = if failures.is_empty() {
        format!("U0 = 1/3, p = d = 1/6, phi = 1/2, y = (1, 0), {elapsed:.4} s")
    } else {
        failures.join("; ")
    };
    outcome("1 fixture T1", failures.is_empty(), detail)
}

#[derive(Default)]
struct Sweep {
    instances: usize,
    solves: usize,
    solve_seconds: f64,
    errors: Vec<String>,
    worst_gap_lp: f64,
    worst_gap_cp: f64,
    gap_failures: usize,
    inner_worst: f64,
    inner_failures: usize,
    structure_worst: f64,
    boundary_worst: f64,
    structure_failures: usize,
    decomposition_worst: f64,
    success_worst: f64,
    decomposition_failures: usize,
    oracle_checked: usize,
    oracle_failures: usize,
    oracle_worst_excess: f64,
}

fn sweep() -> Sweep {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut s = Sweep::default();
    while s.instances < MARKETS {
        let inst = random_instance(&mut rng, Shape::default());
        let start = Instant::now();
        let poly = match enumerate_vertices(&build_constraints(&inst.tree), &inst.reference, 24, 1e-9) {
            Ok(p) => p,
            Err(e) => {
                s.errors.push(format!("instance {}: {e}", s.instances));
                s.instances += 1;
                continue;
            }
        };
        let u0 = poly.superhedging_price(&inst.claim).unwrap().0;
        let mut budget = 0.0;
        while budget <= 0.0 {
            budget = u0 * rng.gen::<f64>();
        }
        let problem = HedgeProblem::new(&inst.reference, &poly, &inst.claim, budget).unwrap();
        s.solve_seconds += start.elapsed().as_secs_f64();
        let vertices: Vec<Vec<f64>> = poly.vertices().iter().map(|v| v.measure.probabilities().to_vec()).collect();
        let eligible = inst.claim.support().len() <= MAX_EFFECTIVE_LEAVES;

        let variants = [random_scenarios(&mut rng, &inst.reference), random_avar(&mut rng), random_entropic(&mut rng)];
        for rm in &variants {
            let start = Instant::now();
            let result = solve_dynamic(&inst.tree, &problem, rm);
            s.solve_seconds += start.elapsed().as_secs_f64();
            s.solves += 1;
            let result = match result {
                Ok(r) => r,
                Err(e) => {
                    s.errors.push(format!("instance {} {}: {e}", s.instances, rm.name()));
                    s.gap_failures += 1;
                    s.structure_failures += 1;
                    s.decomposition_failures += 1;
                    continue;
                }
            };
            let cert = &result.certified.certificate;
            let p = cert.primal_value;
            let gap = (p - cert.dual_value).abs();
            match result.certified.solution.solver_path {
                SolverPath::Lp => {
                    s.worst_gap_lp = s.worst_gap_lp.max(gap / p.abs().max(1.0));
                    if gap > 1e-6 * p.abs().max(1.0) {
                        s.gap_failures += 1;
                    }
                }
                SolverPath::CuttingPlane => {
                    s.worst_gap_cp = s.worst_gap_cp.max(gap);
                    if gap > 1e-5 {
                        s.gap_failures += 1;
                    }
                }
            }

            let slack = &cert.structure.slackness;
            let structure = cert
                .structure
                .np1
                .max(cert.structure.np2)
                .max(slack.unfilled)
                .max(slack.overfilled)
                .max(slack.slack_violation);
            s.structure_worst = s.structure_worst.max(structure);
            let mut structure_ok = structure <= 1e-6;
            if !result.certified.dual.is_zero() {
                let boundary = (cert.modified_price - budget).abs();
                s.boundary_worst = s.boundary_worst.max(boundary);
                structure_ok &= boundary <= 1e-6;
            }
            if !structure_ok {
                s.structure_failures += 1;
            }

            let ratio = verify_success_ratio(&result, &problem, rm).unwrap();
            s.decomposition_worst = s.decomposition_worst.max(result.decomposition_residual);
            s.success_worst = s.success_worst.max(ratio.residual);
            if result.decomposition_residual > 1e-6 || !ratio.passed {
                s.decomposition_failures += 1;
            }

            if eligible {
                s.oracle_checked += 1;
                let bracket =
                    grid_oracle_static(&vertices, inst.reference.probabilities(), inst.claim.payoff(), budget, rm, GRID)
                        .unwrap();
                let value = result.static_value();
                let excess = (bracket.lower - value).max(value - bracket.value).max(0.0);
                s.oracle_worst_excess = s.oracle_worst_excess.max(excess);
                if !bracket.contains(value, 1e-8) {
                    s.oracle_failures += 1;
                }
            }
        }

        for _ in 0..INNER_SAMPLES {
            let q = random_measure(&mut rng, inst.tree.num_leaves());
            let g = strong_duality_check(&problem, &q).unwrap();
            s.inner_worst = s.inner_worst.max(g.gap);
            if g.gap > 1e-7 {
                s.inner_failures += 1;
            }
        }
        s.instances += 1;
    }
    s
}

fn sweep_outcomes(s: &Sweep) -> Vec<Outcome> {
    let errors = if s.errors.is_empty() {
        String::new()
    } else {
        format!("; errors: {}", s.errors.join(" | "))
    };
    vec![
        outcome(
            "2 strong duality",
            s.gap_failures == 0 && s.solve_seconds < 60.0,
            format!(
                "{} markets x 3 variants, {} failures, worst relative LP gap {:.1e}, worst entropic gap {:.1e}, {:.2} s{errors}",
                s.instances, s.gap_failures, s.worst_gap_lp, s.worst_gap_cp, s.solve_seconds
            ),
        ),
        outcome(
            "3 inner strong duality",
            s.inner_failures == 0,
            format!(
                "{} measures, {} failures, worst gap {:.1e}",
                s.instances * INNER_SAMPLES,
                s.inner_failures,
                s.inner_worst
            ),
        ),
        outcome(
            "4 Neyman-Pearson structure",
            s.structure_failures == 0,
            format!(
                "{} solves, {} failures, worst residual {:.1e}, worst capital-boundary residual {:.1e}",
                s.solves, s.structure_failures, s.structure_worst, s.boundary_worst
            ),
        ),
        outcome(
            "5 decomposition",
            s.decomposition_failures == 0,
            format!(
                "{} solves, {} failures, worst dynamic-static residual {:.1e}, worst success-ratio residual {:.1e}",
                s.solves, s.decomposition_failures, s.decomposition_worst, s.success_worst
            ),
        ),
        outcome(
            "6 grid oracle agreement",
            s.oracle_failures == 0 && s.oracle_checked > 0,
            format!(
                "{} eligible solves at grid {GRID}, {} failures, worst excursion {:.1e}",
                s.oracle_checked, s.oracle_failures, s.oracle_worst_excess
            ),
        ),
    ]
}

fn risk_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = 0;
    let mut homogeneity_worst = 0.0_f64;
    let mut checked = 0;
    for variant in 0..3 {
        let leaves = rng.gen_range(2..=12);
        let reference = random_reference(&mut rng, leaves);
        let rm = match variant {
            0 => random_scenarios(&mut rng, &reference),
            1 => random_avar(&mut rng),
            _ => random_entropic(&mut rng),
        };
        let report = axiom_harness(&rm, &reference, AXIOM_TRIALS, 100 + variant).unwrap();
        failures += report.failures.len();
        checked += report.trials;

        // Coherent variants: zero-penalty scenario sets and AVaR.
        let coherent = match &rm {
            RiskMeasure::Scenarios { scenarios } => Some(RiskMeasure::Scenarios {
                scenarios: scenarios.iter().map(|s| Scenario { density: s.density.clone(), penalty: 0.0 }).collect(),
            }),
            RiskMeasure::AverageValueAtRisk { .. } => Some(rm.clone()),
            RiskMeasure::Entropic { .. } => None,
        };
        if let Some(c) = coherent {
            for _ in 0..AXIOM_TRIALS {
                let x: Vec<f64> = (0..leaves).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let lambda: f64 = rng.gen_range(0.0..10.0);
                let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
                let base = c.evaluate(&x, &reference).unwrap().value;
                let big = c.evaluate(&scaled, &reference).unwrap().value;
                let rel = (big - lambda * base).abs() / (lambda * base).abs().max(1.0);
                homogeneity_worst = homogeneity_worst.max(rel);
                if rel > 1e-9 {
                    failures += 1;
                }
            }
        }
    }
    outcome(
        "7 risk-measure axioms",
        failures == 0,
        format!("{checked} trials over 3 variants, {failures} failures, worst homogeneity error {homogeneity_worst:.1e}"),
    )
}

/// Forces every increment of asset 0 out of one internal node to be
/// nonnegative, with at least one positive.
fn arbitrage_market(rng: &mut ChaCha8Rng) -> Instance {
    let inst = random_instance(rng, Shape::default());
    let tree = inst.tree;
    let internal: Vec<Node> = tree.internal_nodes().cloned().collect();
    let target = &internal[rng.gen_range(0..internal.len())];
    let mut nodes = tree.nodes().to_vec();
    let children: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.parent == Some(target.id))
        .map(|(i, _)| i)
        .collect();
    let base = target.prices[0];
    for (j, &i) in children.iter().enumerate() {
        let up = (nodes[i].prices[0] - base).abs() + if j == 0 { 0.1 } else { 0.0 };
        let shift = base + up - nodes[i].prices[0];
        // Shift the whole subtree so later increments are unchanged.
        let below: Vec<usize> = descendants(&nodes, nodes[i].id);
        for k in std::iter::once(i).chain(below) {
            nodes[k].prices[0] += shift;
        }
    }
    let tree = MarketTree::new(tree.assets(), nodes).unwrap();
    Instance { tree, reference: inst.reference, claim: inst.claim }
}

fn descendants(nodes: &[Node], id: knockout::market::NodeId) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![id];
    while let Some(p) = stack.pop() {
        for (i, n) in nodes.iter().enumerate() {
            if n.parent == Some(p) {
                out.push(i);
                stack.push(n.id);
            }
        }
    }
    out
}

fn witness_is_valid(constraints: &MartingaleConstraints, w: &ArbitrageWitness) -> bool {
    let n = constraints.num_leaves();
    let gains: Vec<f64> = (0..n)
        .map(|leaf| {
            constraints
                .rows()
                .iter()
                .zip(&w.holdings)
                .map(|(row, (_, _, units))| row.coeffs[leaf] * units)
                .sum()
        })
        .collect();
    gains.iter().all(|g| *g >= -1e-9)
        && gains.iter().any(|g| *g > 1e-9)
        && gains.iter().zip(&w.gains).all(|(a, b)| (a - b).abs() <= 1e-9)
}

fn degenerate_regimes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = Vec::new();
    for i in 0..50 {
        let inst = random_instance(&mut rng, Shape::default());
        let poly = enumerate_vertices(&build_constraints(&inst.tree), &inst.reference, 24, 1e-9).unwrap();
        let u0 = poly.superhedging_price(&inst.claim).unwrap().0;
        let zero = Claim::new(vec![0.0; inst.tree.num_leaves()]).unwrap();
        let variants = [random_scenarios(&mut rng, &inst.reference), random_avar(&mut rng), random_entropic(&mut rng)];
        for rm in &variants {
            let covered = HedgeProblem::new(&inst.reference, &poly, &inst.claim, u0 * rng.gen_range(1.0..2.0)).unwrap();
            let sol = solve_static(&covered, rm).unwrap();
            if sol.value != 0.0 || sol.test.values().iter().any(|v| *v != 1.0) {
                failures.push(format!("instance {i} {}: covered budget value {}", rm.name(), sol.value));
            }
            if !certify(&covered, rm).unwrap().certificate.degenerate {
                failures.push(format!("instance {i} {}: covered budget not flagged degenerate", rm.name()));
            }
            let nothing = HedgeProblem::new(&inst.reference, &poly, &zero, rng.gen_range(0.01..1.0)).unwrap();
            let sol = solve_static(&nothing, rm).unwrap();
            if sol.value != 0.0 {
                failures.push(format!("instance {i} {}: zero claim value {}", rm.name(), sol.value));
            }
        }

        let arb = arbitrage_market(&mut rng);
        let constraints = build_constraints(&arb.tree);
        let report = check_no_arbitrage(&constraints, 1e-9).unwrap();
        let witnessed = report.arbitrage.as_ref().is_some_and(|w| witness_is_valid(&constraints, w));
        if report.arbitrage_free || !witnessed {
            failures.push(format!("arbitrage market {i} not rejected with a valid witness"));
        }
        match load_market(market_file(&arb.tree, &arb.reference)) {
            Err(e) if e.code == exit::ARBITRAGE && e.witness.is_some() => {}
            _ => failures.push(format!("arbitrage market {i} not rejected by the front end")),
        }
    }
    let passed = failures.is_empty();
    let detail = if passed {
        "50 markets: covered budgets give value 0 with phi = 1, zero claims give 0, arbitrage rejected with witnesses".into()
    } else {
        failures.join("; ")
    };
    outcome("8 degenerate regimes", passed, detail)
}

fn main() {
    let mut outcomes = vec![t1_fixture()];
    outcomes.extend(sweep_outcomes(&sweep()));
    outcomes.push(risk_axioms());
    outcomes.push(degenerate_regimes());
    let mut failed = 0;
    for o in &outcomes {
        let mark = if o.passed { "PASS" } else { "FAIL" };
        println!("{mark} {}: {}", o.label, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
