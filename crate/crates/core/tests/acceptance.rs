//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its headline numbers. Run with `--nocapture` to see them.
//!
//! The corpus is 200 seeded random instances (≤ 8 nodes, ≤ 16 arcs,
//! ≤ 4 terminals, horizons ≤ 10); parametric criteria run over every
//! context the refinement pipeline reaches on a corpus prefix, plus the
//! documented 3-node example in both orientations.

use std::sync::OnceLock;
use std::time::Instant;

use transship_core::driver::{self, SolveOptions};
use transship_core::generator::{instance_i1, random_instance, GeneratorProfile};
use transship_core::model::{TerminalSet, TransshipmentInstance};
use transship_core::outflow::OutflowOracle;
use transship_core::parametric::{
    baseline_search, exhaustive_optimum, EvalAt, ParamKind, ParametricContext, SearchStrategy,
};
use transship_core::pipeline::{lift, refine, ContextRecord};
use transship_core::time_expanded::{brute_feasibility, outflow_te, verify, Conservation};
use transship_core::{sfm, Role, Time, Value};

const CORPUS_SIZE: u64 = 200;
const CONTEXT_INSTANCES: u64 = 80;

fn corpus() -> &'static [TransshipmentInstance] {
    static CORPUS: OnceLock<Vec<TransshipmentInstance>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let profile = GeneratorProfile::default();
        (0..CORPUS_SIZE).map(|seed| random_instance(seed, &profile)).collect()
    })
}

fn reversed_i1(horizon: Time) -> TransshipmentInstance {
    let json = format!(
        r#"{{"nodes": ["t","v","s"],
             "arcs": [{{"id":0,"tail":"s","head":"v","capacity":2,"transit":1}},
                      {{"id":1,"tail":"v","head":"t","capacity":2,"transit":1}}],
             "balances": {{"t":-4,"s":4}}, "horizon": {horizon}}}"#
    );
    TransshipmentInstance::from_json(&json).unwrap()
}

/// Every parametric context the pipeline reaches on the corpus prefix, plus
/// both orientations of the running example.
fn contexts() -> &'static [ContextRecord] {
    static CONTEXTS: OnceLock<Vec<ContextRecord>> = OnceLock::new();
    CONTEXTS.get_or_init(|| {
        let mut out = Vec::new();
        for inst in &corpus()[..CONTEXT_INSTANCES as usize] {
            let refined = refine(&lift(inst), SearchStrategy::StrongMap).expect("corpus refines");
            out.extend(refined.contexts);
        }
        for inst in [instance_i1(Some(5)), reversed_i1(5)] {
            let refined = refine(&lift(&inst), SearchStrategy::StrongMap).unwrap();
            out.extend(refined.contexts);
        }
        out
    })
}

/// Parameter samples straddling the optimum, clamped to the search range.
fn sample_params(ctx: &ParametricContext, optimum: Value) -> Vec<Value> {
    let hi = match ctx.param {
        ParamKind::Alpha => ctx.alpha_max(),
        ParamKind::Delta => ctx.horizon(),
    };
    let mut ps = vec![0, hi, optimum, optimum + 1, (optimum + 1 + hi) / 2];
    if optimum > 0 {
        ps.push(optimum - 1);
    }
    ps.retain(|&p| (0..=hi).contains(&p));
    ps.sort_unstable();
    ps.dedup();
    ps
}

fn restricted_feasible(ctx: &ParametricContext, at: &EvalAt) -> bool {
    let domain = ctx.domain_set();
    (0u64..(1 << ctx.domain().len()))
        .map(|local| {
            let mut set = TerminalSet::EMPTY;
            for (i, t) in domain.iter().enumerate() {
                if local >> i & 1 == 1 {
                    set.insert(t);
                }
            }
            ctx.restricted_v(at, set).unwrap()
        })
        .all(|v| v >= 0)
}

#[test]
fn criterion_01_outflow_oracle_equivalence() {
    let started = Instant::now();
    let mut checked = 0u64;
    for inst in corpus() {
        let horizon = inst.horizon.unwrap();
        let oracle = OutflowOracle::new(inst);
        for bits in 0u64..(1 << inst.terminal_count()) {
            let x = TerminalSet(bits);
            assert_eq!(
                oracle.outflow_at(x, horizon).unwrap(),
                outflow_te(inst, x, horizon).unwrap(),
                "out-flow mismatch on {x} at horizon {horizon}"
            );
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 120, "criterion 1 exceeded its runtime budget: {elapsed:?}");
    println!(
        "criterion 01 out-flow oracle equivalence: PASS ({checked} subsets on {} instances in {elapsed:?})",
        corpus().len()
    );
}

#[test]
fn criterion_02_feasibility_equivalence() {
    let mut agreements = 0u64;
    for inst in corpus() {
        let by_sfm = sfm::is_feasible(inst).unwrap().0;
        let by_expansion = brute_feasibility(inst).unwrap();
        assert_eq!(by_sfm, by_expansion, "feasibility disagreement");
        agreements += 1;
    }
    println!("criterion 02 feasibility equivalence: PASS ({agreements} instances)");
}

#[test]
fn criterion_03_outflow_submodularity() {
    let mut checked = 0u64;
    for inst in corpus() {
        let horizon = inst.horizon.unwrap();
        let oracle = OutflowOracle::new(inst);
        let k = inst.terminal_count();
        for xb in 0u64..(1 << k) {
            for yb in 0u64..(1 << k) {
                let (x, y) = (TerminalSet(xb), TerminalSet(yb));
                let lhs = oracle.outflow_at(x.union(y), horizon).unwrap()
                    + oracle.outflow_at(x.intersection(y), horizon).unwrap();
                let rhs =
                    oracle.outflow_at(x, horizon).unwrap() + oracle.outflow_at(y, horizon).unwrap();
                assert!(lhs <= rhs, "submodularity violated at X={x} Y={y}");
                checked += 1;
            }
        }
    }
    println!("criterion 03 submodularity of o: PASS ({checked} pairs, zero violations)");
}

#[test]
fn criterion_04_violated_set_structure() {
    let mut violated_sets = 0u64;
    let mut sampled = 0u64;
    for record in contexts() {
        let ctx = &record.context;
        for p in sample_params(ctx, record.outcome.optimum) {
            let at = ctx.extend(p).unwrap();
            sampled += 1;
            let k = at.instance.terminal_count();
            for bits in 0u64..(1 << k) {
                let x = TerminalSet(bits);
                if at.violation(x).unwrap() < 0 {
                    violated_sets += 1;
                    let has_new = x.contains(at.new_terminal);
                    let has_drained = x.contains(ctx.drained);
                    match ctx.kind() {
                        Role::Source => assert!(
                            has_new && !has_drained,
                            "source-case violated set must contain ŝ and exclude š: {x} ({})",
                            record.label
                        ),
                        Role::Sink => assert!(
                            !has_new && has_drained,
                            "sink-case violated set must exclude ŝ and contain š: {x} ({})",
                            record.label
                        ),
                    }
                }
            }
        }
    }
    println!(
        "criterion 04 violated-set structure: PASS ({violated_sets} violated sets across \
         {sampled} sampled parameters, zero exceptions)"
    );
}

#[test]
fn criterion_05_restriction_soundness() {
    let mut sampled = 0u64;
    for record in contexts() {
        let ctx = &record.context;
        for p in sample_params(ctx, record.outcome.optimum) {
            let at = ctx.extend(p).unwrap();
            let k = at.instance.terminal_count();
            let full_feasible =
                (0u64..(1 << k)).all(|bits| at.violation(TerminalSet(bits)).unwrap() >= 0);
            assert_eq!(
                full_feasible,
                restricted_feasible(ctx, &at),
                "restricted and full-domain feasibility disagree at p = {p} ({})",
                record.label
            );
            sampled += 1;
        }
    }
    println!("criterion 05 restriction soundness: PASS ({sampled} sampled parameters)");
}

#[test]
fn criterion_06_strong_map_and_monotonicity() {
    assert!(contexts().len() >= 50, "need at least 50 contexts, got {}", contexts().len());
    let mut inequalities = 0u64;
    for record in contexts() {
        let ctx = &record.context;
        let params = sample_params(ctx, record.outcome.optimum);
        let ats: Vec<(Value, EvalAt)> =
            params.iter().map(|&p| (p, ctx.extend(p).unwrap())).collect();
        let domain = ctx.domain_set();
        let members: Vec<_> = domain.iter().collect();
        let kind = ctx.kind();

        // all nested pairs X ⊆ Y of the restricted domain
        let mut nested = Vec::new();
        for xb in 0u64..(1 << members.len()) {
            for yb in 0u64..(1 << members.len()) {
                if xb & !yb == 0 {
                    let mut x = TerminalSet::EMPTY;
                    let mut y = TerminalSet::EMPTY;
                    for (i, &t) in members.iter().enumerate() {
                        if xb >> i & 1 == 1 {
                            x.insert(t);
                        }
                        if yb >> i & 1 == 1 {
                            y.insert(t);
                        }
                    }
                    nested.push((x, y));
                }
            }
        }

        for (i, (p1, at1)) in ats.iter().enumerate() {
            for (p2, at2) in ats.iter().skip(i + 1) {
                assert!(p1 < p2);
                for &(x, y) in &nested {
                    let low = ctx.restricted_v(at1, y).unwrap() - ctx.restricted_v(at1, x).unwrap();
                    let high =
                        ctx.restricted_v(at2, y).unwrap() - ctx.restricted_v(at2, x).unwrap();
                    // source case: marginals shrink as α grows and grow as δ
                    // grows; both directions flip for sinks
                    let ok = match (kind, ctx.param) {
                        (Role::Source, ParamKind::Alpha) => high <= low,
                        (Role::Source, ParamKind::Delta) => low <= high,
                        (Role::Sink, ParamKind::Alpha) => low <= high,
                        (Role::Sink, ParamKind::Delta) => high <= low,
                    };
                    assert!(
                        ok,
                        "strong map violated between p={p1} and p={p2} at X={x} Y={y} ({})",
                        record.label
                    );
                    inequalities += 1;
                }
                // per-set monotonicity: ṽ^α is non-increasing and ṽ^δ
                // non-decreasing, for sources and sinks alike (the base of
                // the restricted function fixes the critical memberships)
                for &(_, y) in &nested {
                    let v1 = ctx.restricted_v(at1, y).unwrap();
                    let v2 = ctx.restricted_v(at2, y).unwrap();
                    if ctx.param == ParamKind::Alpha {
                        assert!(v2 <= v1, "monotonicity violated at {y} ({})", record.label);
                    } else {
                        assert!(v1 <= v2, "monotonicity violated at {y} ({})", record.label);
                    }
                    inequalities += 1;
                }
            }
        }
    }
    println!(
        "criterion 06 strong map and monotonicity: PASS ({} contexts, {inequalities} \
         inequalities, zero exceptions)",
        contexts().len()
    );
}

#[test]
fn criterion_07_parametric_search_exactness() {
    for record in contexts() {
        let exhaustive = exhaustive_optimum(&record.context).unwrap();
        assert_eq!(
            record.outcome.optimum, exhaustive,
            "strong-map optimum diverges from the exhaustive scan ({})",
            record.label
        );
        let baseline = baseline_search(&record.context).unwrap();
        assert_eq!(baseline.optimum, exhaustive, "baseline diverges ({})", record.label);
    }
    // the documented example: α* = 1, then δ* = 2
    let refined = refine(&lift(&instance_i1(Some(5))), SearchStrategy::StrongMap).unwrap();
    assert_eq!(refined.trace[0].alpha_star, Some(1));
    assert_eq!(refined.trace[0].delta_star, Some(2));
    println!(
        "criterion 07 parametric search exactness: PASS ({} contexts, both strategies match \
         the exhaustive scan; traced example gives α*=1, δ*=2)",
        contexts().len()
    );
}

#[test]
fn criterion_08_iteration_and_call_count_bounds() {
    let mut separations = 0u64;
    for record in contexts() {
        let ctx = &record.context;
        let ground = ctx.domain().len() as u64;
        let stats = &record.outcome.stats;
        assert!(
            stats.iterations as u64 <= ground + 1,
            "iteration bound exceeded: {} > {} ({})",
            stats.iterations,
            ground + 1,
            record.label
        );
        assert!(
            stats.sfm_calls <= ground + 1,
            "SFM budget exceeded: {} > {} ({})",
            stats.sfm_calls,
            ground + 1,
            record.label
        );
        let range = match ctx.param {
            ParamKind::Alpha => ctx.alpha_max(),
            ParamKind::Delta => ctx.horizon(),
        };
        let initial_infeasible = match ctx.param {
            ParamKind::Alpha => record.outcome.optimum < ctx.alpha_max(),
            ParamKind::Delta => record.outcome.optimum > 0,
        };
        if initial_infeasible {
            let baseline = baseline_search(ctx).unwrap();
            let floor_log = (range as f64).log2().floor() as u64;
            assert!(
                baseline.stats.sfm_calls >= floor_log,
                "baseline did fewer SFM calls than log₂(range): {} < {floor_log} ({})",
                baseline.stats.sfm_calls,
                record.label
            );
            separations += 1;
        }
    }
    println!(
        "criterion 08 iteration and call-count bounds: PASS ({} contexts, {separations} \
         baseline separations at ⌊log₂ range⌋)",
        contexts().len()
    );
}

#[test]
fn criterion_09_end_to_end_integrality_and_correctness() {
    let mut solved = 0u64;
    for inst in corpus() {
        let report = driver::solve(inst, &SolveOptions::default())
            .unwrap_or_else(|e| panic!("solve failed on a feasible corpus instance: {e}"));
        assert!(report.oracle_verified);
        // integrality is structural (all values are integers); re-check the
        // projected flow strictly against the original instance
        let problems = verify(&report.flow, inst, Conservation::Strict);
        assert!(problems.is_empty(), "{problems:?}");
        // prefix balances along the tight order are met exactly
        let final_inst = &report.final_instance;
        let mut prefix_balance = 0;
        let mut prefix_delivered = 0;
        for &t in &report.order.sequence {
            prefix_balance += final_inst.terminal_balance(t);
            prefix_delivered +=
                report.final_flow.net_outflow(final_inst, final_inst.terminal(t).node);
            assert_eq!(
                prefix_delivered, prefix_balance,
                "prefix through {} unbalanced",
                final_inst.terminal_name(t)
            );
        }
        solved += 1;
    }
    println!(
        "criterion 09 end-to-end integrality and correctness: PASS ({solved}/{} instances, \
         100% strict verification after projection)",
        corpus().len()
    );
}

#[test]
fn criterion_10_quickest_horizon() {
    for inst in corpus() {
        let mut open = inst.clone();
        open.horizon = None;
        let t_star = driver::minimal_horizon(&open).unwrap();
        assert!(t_star <= inst.horizon.unwrap());
        assert!(
            brute_feasibility(&open.with_horizon(t_star)).unwrap(),
            "computed horizon is not feasible"
        );
        if t_star > 1 {
            assert!(
                !brute_feasibility(&open.with_horizon(t_star - 1)).unwrap(),
                "computed horizon is not minimal"
            );
        }
    }
    let mut i1 = instance_i1(None);
    i1.horizon = None;
    assert_eq!(driver::minimal_horizon(&i1).unwrap(), 4);
    println!(
        "criterion 10 quickest horizon: PASS ({} instances, T* minimal and feasible; \
         running example gives T* = 4)",
        corpus().len()
    );
}
