use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use knockout::certificate::{certify, Check};
use knockout::io::{leaf_vector, market_from_file, parse_claim, parse_market, parse_risk, ClaimFile, MarketFile};
use knockout::market::{Claim, MarketTree, NodeId, TerminalMeasure};
use knockout::martingale::{
    build_constraints, check_no_arbitrage, enumerate_vertices, ArbitrageWitness, ConstraintRow, MartingaleConstraints, MartingalePolytope,
};
use knockout::np_test::{construct_test, inner_dual, inner_primal, strong_duality_check, verify_np, NpDiagnostics};
use knockout::risk::RiskMeasure;
use knockout::static_hedge::{HedgeProblem, SolverPath};
use knockout::superhedge::{hedge_certified, superhedge_with, verify_success_ratio, NodeHolding};
use knockout::{HedgeError, Tolerances};
use knockout_oracle::{
    grid_oracle_static, lipschitz_bound, polytope_sampler, product_vertices, weak_duality_sweep, GridBracket,
    WeakDualityReport, MAX_EFFECTIVE_LEAVES,
};

use crate::args::{OracleArgs, PolytopeArgs, PriceArgs, SolveArgs};
use crate::error::{exit, CliError, Result};
use crate::report::{
    flag, read_text, CertificateSection, HedgeSection, Inputs, PolytopeSection, Report, Residuals, StaticSection,
};

/// Output of a command: the JSON document, a short human summary and the
/// exit code.
#[derive(Debug)]
pub struct Outcome<T> {
    pub document: T,
    pub summary: String,
    pub code: i32,
}

pub struct Market {
    pub file: MarketFile,
    pub tree: MarketTree,
    pub reference: TerminalMeasure,
    pub constraints: MartingaleConstraints,
}

/// Validates a market file and rejects arbitrage with a witness strategy.
pub fn load_market(file: MarketFile) -> Result<Market> {
    let (tree, reference) = market_from_file(file.clone())?;
    let constraints = build_constraints(&tree);
    let report = check_no_arbitrage(&constraints, 1e-9)?;
    if !report.arbitrage_free {
        return Err(CliError::arbitrage(report.margin, report.arbitrage));
    }
    Ok(Market {
        file,
        tree,
        reference,
        constraints,
    })
}

pub fn read_market(path: &std::path::Path) -> Result<Market> {
    load_market(parse_market(&read_text(path)?)?)
}

pub fn claim_for(market: &Market, file: &ClaimFile) -> Result<Claim> {
    Ok(Claim::new(leaf_vector(&market.tree, &file.payoff, "payoff")?)?)
}

pub fn polytope_of(market: &Market, tol: &Tolerances) -> Result<MartingalePolytope> {
    Ok(enumerate_vertices(&market.constraints, &market.reference, tol.max_leaves, tol.vertex)?)
}

fn vertex_list(poly: &MartingalePolytope) -> Vec<Vec<f64>> {
    poly.vertices().iter().map(|v| v.measure.probabilities().to_vec()).collect()
}

fn polytope_section(market: &Market, poly: &MartingalePolytope, claim: &Claim) -> Result<PolytopeSection> {
    let (price, attaining) = poly.superhedging_price(claim)?;
    Ok(PolytopeSection {
        leaves: market.tree.leaf_ids(),
        vertices: vertex_list(poly),
        superhedging_price: price,
        attaining_vertex: attaining,
    })
}

#[derive(Debug, Serialize)]
pub struct PriceInputs {
    pub market: MarketFile,
    pub claim: ClaimFile,
}

#[derive(Debug, Serialize)]
pub struct PriceReport {
    pub inputs: PriceInputs,
    pub tolerances: Tolerances,
    pub polytope: PolytopeSection,
    pub superhedging_price: f64,
    pub strategy: Vec<NodeHolding>,
    pub pricing_measure: Option<Vec<f64>>,
}

pub fn price(args: &PriceArgs) -> Result<Outcome<PriceReport>> {
    let tol = args.tol.resolve();
    let market = read_market(&args.market)?;
    let claim_file = parse_claim(&read_text(&args.claim)?)?;
    let claim = claim_for(&market, &claim_file)?;
    let poly = polytope_of(&market, &tol)?;
    let section = polytope_section(&market, &poly, &claim)?;
    let options = knockout::lp::SimplexOptions {
        max_pivots: tol.max_pivots,
        feasibility_tol: tol.feasibility,
        ..Default::default()
    };
    let strategy = superhedge_with(&market.tree, claim.payoff(), &options)?;
    let summary = format!(
        "superhedging price {:.12} attained at vertex {} {:?}\n",
        strategy.initial_capital, section.attaining_vertex, section.vertices[section.attaining_vertex]
    );
    Ok(Outcome {
        document: PriceReport {
            inputs: PriceInputs {
                market: market.file,
                claim: claim_file,
            },
            tolerances: tol,
            superhedging_price: strategy.initial_capital,
            polytope: section,
            pricing_measure: strategy.pricing_measure.map(|m| m.probabilities().to_vec()),
            strategy: strategy.nodes,
        },
        summary,
        code: exit::OK,
    })
}

#[derive(Debug, Serialize)]
pub struct PolytopeInputs {
    pub market: MarketFile,
}

#[derive(Debug, Serialize)]
pub struct PolytopeReport {
    pub inputs: PolytopeInputs,
    pub tolerances: Tolerances,
    pub leaves: Vec<NodeId>,
    pub constraints: Vec<ConstraintRow>,
    pub no_arbitrage: bool,
    /// Largest achievable minimum leaf probability.
    pub margin: f64,
    pub interior_measure: Vec<f64>,
    pub vertices: Vec<Vec<f64>>,
    /// Vertex densities against the reference measure.
    pub densities: Vec<Vec<f64>>,
    pub arbitrage: Option<ArbitrageWitness>,
}

/// Reports an arbitrage market instead of rejecting it, exiting with the
/// arbitrage code.
pub fn polytope(args: &PolytopeArgs) -> Result<Outcome<PolytopeReport>> {
    let tol = args.tol.resolve();
    let file = parse_market(&read_text(&args.market)?)?;
    let (tree, reference) = market_from_file(file.clone())?;
    let constraints = build_constraints(&tree);
    let report = check_no_arbitrage(&constraints, 1e-9)?;
    let mut document = PolytopeReport {
        leaves: tree.leaf_ids(),
        constraints: constraints.rows().to_vec(),
        no_arbitrage: report.arbitrage_free,
        margin: report.margin,
        interior_measure: report.witness.map(|w| w.probabilities().to_vec()).unwrap_or_default(),
        vertices: Vec::new(),
        densities: Vec::new(),
        arbitrage: report.arbitrage,
        inputs: PolytopeInputs { market: file },
        tolerances: tol,
    };
    if !document.no_arbitrage {
        let summary = format!(
            "{} leaves, {} constraint rows, arbitrage (margin {:.6e})\n",
            tree.num_leaves(),
            constraints.rows().len(),
            document.margin
        );
        return Ok(Outcome {
            document,
            summary,
            code: exit::ARBITRAGE,
        });
    }
    let poly = enumerate_vertices(&constraints, &reference, tol.max_leaves, tol.vertex)?;
    document.vertices = vertex_list(&poly);
    document.densities = poly.vertices().iter().map(|v| v.density.clone()).collect();
    let summary = format!(
        "{} leaves, {} constraint rows, {} vertices, interior margin {:.6e}\n",
        tree.num_leaves(),
        constraints.rows().len(),
        poly.num_vertices(),
        document.margin
    );
    Ok(Outcome {
        document,
        summary,
        code: exit::OK,
    })
}

pub fn read_inputs(args: &SolveArgs) -> Result<Inputs> {
    Ok(Inputs {
        market: parse_market(&read_text(&args.market)?)?,
        claim: parse_claim(&read_text(&args.claim)?)?,
        risk: parse_risk(&read_text(&args.risk)?)?,
        budget: args.budget,
    })
}

pub fn solve(args: &SolveArgs) -> Result<Outcome<Report>> {
    solve_inputs(read_inputs(args)?, args.tol.resolve(), args.skip_hedge)
}

/// The whole pipeline on already parsed inputs.
pub fn solve_inputs(inputs: Inputs, tol: Tolerances, skip_hedge: bool) -> Result<Outcome<Report>> {
    let market = load_market(inputs.market.clone())?;
    let claim = claim_for(&market, &inputs.claim)?;
    let rm = &inputs.risk;
    rm.validate(&market.reference)?;
    let poly = polytope_of(&market, &tol)?;
    let problem = HedgeProblem::new(&market.reference, &poly, &claim, inputs.budget)?.with_tolerances(tol);
    let certified = certify(&problem, rm)?;
    let cert = &certified.certificate;

    let mut flags = Vec::new();
    if certified.solution.short_circuit {
        flags.push(flag::SHORT_CIRCUIT.to_string());
    }
    if cert.degenerate {
        flags.push(flag::DEGENERATE_CERTIFICATE.to_string());
    }
    if certified.solution.solver_path == SolverPath::CuttingPlane {
        flags.push(flag::CUTTING_PLANE_TOLERANCE.to_string());
    }
    let mut passed = cert.passed();
    let static_section = StaticSection {
        phi: certified.solution.test.values().to_vec(),
        value: certified.solution.value,
        solver_path: certified.solution.solver_path,
        cutting_plane: certified.solution.cutting_plane.clone(),
    };
    let mut certificate = CertificateSection {
        q_tilde: cert.q_tilde.probabilities().to_vec(),
        y: cert.y_tilde.clone(),
        p: cert.primal_value,
        d: cert.dual_value,
        gap: cert.gap,
        gap_tolerance: cert.gap_tolerance,
        saddle_value: cert.saddle_value,
        modified_price: cert.modified_price,
        passed,
        residuals: Residuals {
            np1: cert.structure.np1,
            np2: cert.structure.np2,
            decomposition: None,
            slackness: cert
                .structure
                .slackness
                .unfilled
                .max(cert.structure.slackness.overfilled)
                .max(cert.structure.slackness.slack_violation),
            eq_tol: cert.structure.eq_tol,
        },
        checks: cert.checks.clone(),
    };

    let mut hedge = None;
    let mut strategy = Vec::new();
    let mut notes = Vec::new();
    if skip_hedge {
        flags.push(flag::HEDGE_SKIPPED.to_string());
    } else {
        match hedge_certified(&market.tree, &problem, rm, certified) {
            Ok(result) => {
                let ratio = verify_success_ratio(&result, &problem, rm)?;
                certificate.residuals.decomposition = Some(result.decomposition_residual);
                if result.decomposition_residual > tol.certificate {
                    passed = false;
                    notes.push(format!("decomposition residual {:e}", result.decomposition_residual));
                }
                if !ratio.passed {
                    passed = false;
                    notes.push(format!("success-ratio test off by {:e}", ratio.residual));
                }
                hedge = Some(HedgeSection {
                    initial_capital: result.strategy.initial_capital,
                    superhedge_cost: result.superhedge_cost,
                    dynamic_risk: result.dynamic_risk,
                    terminal_values: result.terminal_values.clone(),
                    success_ratio: ratio.test,
                });
                strategy = result.strategy.nodes;
            }
            Err(HedgeError::Certificate { check, detail }) => {
                passed = false;
                notes.push(format!("{check}: {detail}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    for c in certificate.checks.iter().filter(|c| !c.passed) {
        notes.push(format!("{} residual {:e} above {:e}", c.name, c.residual, c.tolerance));
    }
    if !passed {
        flags.push(flag::CERTIFICATE_FAILED.to_string());
    }
    certificate.passed = passed;

    let polytope = polytope_section(&market, &poly, &claim)?;
    let mut summary = format!(
        "static value p = {:.12}\ndual value   d = {:.12}\ngap            = {:.3e} (tolerance {:.1e})\n",
        certificate.p, certificate.d, certificate.gap, certificate.gap_tolerance
    );
    if let Some(h) = &hedge {
        summary += &format!(
            "strategy: capital {:.12}, superhedge cost {:.12}, dynamic risk {:.12}\n",
            h.initial_capital, h.superhedge_cost, h.dynamic_risk
        );
    }
    for note in &notes {
        summary += &format!("failed: {note}\n");
    }
    summary += if passed { "certificate passed\n" } else { "certificate FAILED\n" };

    Ok(Outcome {
        document: Report {
            inputs,
            tolerances: tol,
            polytope,
            static_: static_section,
            certificate,
            hedge,
            strategy,
            flags,
        },
        summary,
        code: if passed { exit::OK } else { exit::GAP },
    })
}

#[derive(Debug, Serialize)]
pub struct SamplerSummary {
    pub samples: usize,
    pub outside: usize,
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub inputs: Inputs,
    pub solver_value: f64,
    pub lipschitz: f64,
    /// Absent when more than the oracle's leaf limit carry payoff.
    pub grid: Option<GridBracket>,
    pub grid_agrees: Option<bool>,
    pub vertices_agree: bool,
    pub weak_duality: WeakDualityReport,
    pub sampler: SamplerSummary,
    pub passed: bool,
}

pub fn oracle(args: &OracleArgs) -> Result<Outcome<OracleReport>> {
    let tol = args.tol.resolve();
    let inputs = Inputs {
        market: parse_market(&read_text(&args.market)?)?,
        claim: parse_claim(&read_text(&args.claim)?)?,
        risk: parse_risk(&read_text(&args.risk)?)?,
        budget: args.budget,
    };
    let market = load_market(inputs.market.clone())?;
    let claim = claim_for(&market, &inputs.claim)?;
    let rm: &RiskMeasure = &inputs.risk;
    rm.validate(&market.reference)?;
    let poly = polytope_of(&market, &tol)?;
    let problem = HedgeProblem::new(&market.reference, &poly, &claim, inputs.budget)?.with_tolerances(tol);
    let certified = certify(&problem, rm)?;
    let value = certified.solution.value;
    let vertices = vertex_list(&poly);
    let p = market.reference.probabilities();

    let lipschitz = lipschitz_bound(rm, claim.payoff(), p);
    let (grid, grid_agrees) = if claim.support().len() <= MAX_EFFECTIVE_LEAVES {
        let bracket = grid_oracle_static(&vertices, p, claim.payoff(), inputs.budget, rm, args.grid)?;
        let agrees = bracket.contains(value, 1e-8);
        (Some(bracket), Some(agrees))
    } else {
        (None, None)
    };

    let products = product_vertices(&market.tree);
    let vertices_agree = products.len() == vertices.len()
        && products
            .iter()
            .all(|a| vertices.iter().any(|b| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-8)));

    let q = &certified.certificate.q_tilde;
    let primal = inner_primal(&problem, q)?.value;
    let weak_duality = weak_duality_sweep(
        q.probabilities(),
        &vertices,
        claim.payoff(),
        inputs.budget,
        primal,
        args.samples,
        args.seed,
    )?;

    let samples = polytope_sampler(&market.constraints, args.samples.min(200), args.seed)?;
    let mut outside = 0;
    for s in &samples {
        if !poly.contains(s)? {
            outside += 1;
        }
    }

    let passed = grid_agrees.unwrap_or(true) && vertices_agree && weak_duality.passed() && outside == 0;
    let mut summary = format!("solver value {value:.12}\n");
    match &grid {
        Some(b) => summary += &format!("grid {} bracket [{:.12}, {:.12}]\n", b.grid, b.lower, b.value),
        None => summary += "grid oracle skipped: too many leaves carry payoff\n",
    }
    summary += &format!(
        "vertices agree: {vertices_agree}; weak duality violations: {}; samples outside polytope: {outside}\n",
        weak_duality.violations.len()
    );
    summary += if passed { "oracles agree\n" } else { "oracles DISAGREE\n" };
    Ok(Outcome {
        document: OracleReport {
            inputs,
            solver_value: value,
            lipschitz,
            grid,
            grid_agrees,
            vertices_agree,
            weak_duality,
            sampler: SamplerSummary {
                samples: samples.len(),
                outside,
            },
            passed,
        },
        summary,
        code: if passed { exit::OK } else { exit::CHECK_FAILED },
    })
}

/// A measure over leaves: `{"probabilities": {"<leaf id>": real, ...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub probabilities: BTreeMap<String, f64>,
}

pub fn parse_measure(text: &str) -> Result<MeasureFile> {
    serde_json::from_str(text).map_err(|e| CliError::invalid(format!("measure file: {e}")))
}

#[derive(Debug, Serialize)]
pub struct InnerReport {
    pub q: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub gap_tolerance: f64,
    pub y: Vec<f64>,
    pub phi: Vec<f64>,
    pub equality_set: Vec<usize>,
    pub delta: Vec<f64>,
    pub np: NpDiagnostics,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Inner strong duality and the test conditions at a given measure, on the
/// inputs echoed by a solve report.
pub fn inner_check(report: &Report, file: &MeasureFile) -> Result<Outcome<InnerReport>> {
    let market = load_market(report.inputs.market.clone())?;
    let claim = claim_for(&market, &report.inputs.claim)?;
    let q = TerminalMeasure::new(leaf_vector(&market.tree, &file.probabilities, "probabilities")?)?;
    let tol = report.tolerances;
    let poly = polytope_of(&market, &tol)?;
    let problem = HedgeProblem::new(&market.reference, &poly, &claim, report.inputs.budget)?.with_tolerances(tol);
    let gap = strong_duality_check(&problem, &q)?;
    let dual = inner_dual(&problem, &q)?;
    let np = construct_test(&problem, &q, &dual, None)?;
    let diagnostics = verify_np(&np, &problem, &q, &dual)?;
    let d = &diagnostics;
    let checks = vec![
        Check::new("gap", gap.gap, gap.tolerance),
        Check::new("NP-1", d.unfilled.max(d.overfilled), d.tolerance),
        Check::new("NP-2", d.slack_violation.max(d.budget_excess), d.tolerance),
    ];
    let passed = checks.iter().all(|c| c.passed);
    let mut summary = String::new();
    for c in &checks {
        summary += &format!(
            "{} {:<5} residual {:.3e} tolerance {:.1e}\n",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.residual,
            c.tolerance
        );
    }
    summary += if passed { "inner check: passed\n" } else { "inner check: failed\n" };
    Ok(Outcome {
        document: InnerReport {
            q: q.probabilities().to_vec(),
            primal: gap.primal,
            dual: gap.dual,
            gap: gap.gap,
            gap_tolerance: gap.tolerance,
            y: dual.weights.clone(),
            phi: np.test.values().to_vec(),
            equality_set: np.equality_set.clone(),
            delta: np.delta.clone(),
            np: diagnostics,
            checks,
            passed,
        },
        summary,
        code: if passed { exit::OK } else { exit::CHECK_FAILED },
    })
}
