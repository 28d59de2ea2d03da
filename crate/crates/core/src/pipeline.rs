//! The outer refinement loop: lift the instance onto drained twin terminals,
//! grow a chain of tight terminal sets using the parametric searches, and
//! read off a tight order.
//!
//! Source iterations insert Q∪{ŝ₁} ⊂ Q∪{ŝ₁,ŝ₂} ⊂ Q″∪(W∩R) between Q and R
//! and push every later chain member up by the two new terminals; sink
//! iterations mirror this below R. Every inserted or updated set is
//! re-verified tight before the loop continues.

use serde::Serialize;

use crate::model::{Terminal, TerminalId, TerminalOrigin, TerminalSet, TransshipmentInstance};
use crate::outflow::OutflowOracle;
use crate::parametric::{
    restricted_minimal_minimizer, run_search, ParamKind, ParametricContext, SearchOutcome,
    SearchStrategy,
};
use crate::{Error, Result, Role, Value, U_INF};

/// Moves every terminal's balance onto a fresh twin node joined by an
/// unbounded zero-transit arc, so that supply and demand can later be carved
/// up without touching the network proper.
pub fn lift(inst: &TransshipmentInstance) -> TransshipmentInstance {
    let mut network = inst.network.clone();
    let mut balances = inst.balances.clone();
    let mut terminals = Vec::with_capacity(inst.terminals.len());
    for term in &inst.terminals {
        let name = format!("~{}", network.node_name(term.node));
        let twin = network.push_node(&name);
        balances.push(balances[term.node.0]);
        balances[term.node.0] = 0;
        match term.role {
            Role::Source => network.push_arc(twin, term.node, U_INF, 0),
            Role::Sink => network.push_arc(term.node, twin, U_INF, 0),
        };
        terminals.push(Terminal {
            node: twin,
            role: term.role,
            origin: TerminalOrigin::Drained { of: term.node },
        });
    }
    TransshipmentInstance {
        network,
        balances,
        terminals,
        horizon: inst.horizon,
        base_node_count: inst.base_node_count,
        base_max_capacity: inst.base_max_capacity,
    }
}

/// Strictly increasing chain of tight terminal sets from ∅ to the full set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TightChain {
    pub sets: Vec<TerminalSet>,
}

impl TightChain {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn is_complete(&self, terminal_count: usize) -> bool {
        self.sets.len() == terminal_count + 1
    }
}

/// Total order over the terminals whose every prefix is tight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TightOrder {
    pub sequence: Vec<TerminalId>,
}

/// One refinement iteration, with set members resolved to terminal names.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub branch: String,
    pub q: Vec<String>,
    pub r: Vec<String>,
    pub drained: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_star: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_star: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<String>>,
    pub chain: Vec<Vec<String>>,
}

/// A parametric context the pipeline ran, with the search outcome; kept for
/// benchmarking and verification.
#[derive(Debug, Clone)]
pub struct ContextRecord {
    pub label: String,
    pub context: ParametricContext,
    pub outcome: SearchOutcome,
}

pub struct RefineOutcome {
    pub instance: TransshipmentInstance,
    pub chain: TightChain,
    pub trace: Vec<IterationRecord>,
    pub contexts: Vec<ContextRecord>,
}

fn verify_chain(inst: &TransshipmentInstance, chain: &[TerminalSet]) -> Result<()> {
    let all = inst.all_terminals();
    if chain.first() != Some(&TerminalSet::EMPTY) || chain.last() != Some(&all) {
        return Err(Error::Internal("chain must run from ∅ to the full terminal set".into()));
    }
    for pair in chain.windows(2) {
        if !(pair[0].is_subset_of(pair[1]) && pair[0] != pair[1]) {
            return Err(Error::Internal(format!(
                "chain is not strictly increasing at {} ⊄ {}",
                pair[0], pair[1]
            )));
        }
    }
    let oracle = OutflowOracle::new(inst);
    for &set in chain {
        let v = oracle.violation(set)?;
        if v != 0 {
            return Err(Error::Internal(format!(
                "chain member {{{}}} is not tight: v = {v}",
                inst.set_names(set).join(",")
            )));
        }
    }
    Ok(())
}

/// Refines the initial chain (∅, S′) until every gap is a single terminal.
pub fn refine(lifted: &TransshipmentInstance, strategy: SearchStrategy) -> Result<RefineOutcome> {
    let mut inst = lifted.clone();
    let mut chain: Vec<TerminalSet> = if inst.terminals.is_empty() {
        vec![TerminalSet::EMPTY]
    } else {
        vec![TerminalSet::EMPTY, inst.all_terminals()]
    };
    let mut trace = Vec::new();
    let mut contexts = Vec::new();
    verify_chain(&inst, &chain)?;

    let mut iteration = 0usize;
    while chain.len() < inst.terminal_count() + 1 {
        iteration += 1;
        if iteration > inst.terminal_count() + 1 {
            return Err(Error::Internal("refinement exceeded its iteration bound".into()));
        }
        let gap = (0..chain.len() - 1)
            .find(|&i| chain[i + 1].difference(chain[i]).len() > 1)
            .expect("an incomplete chain has a wide gap");
        let q = chain[gap];
        let r = chain[gap + 1];
        let drained = chain[gap + 1].difference(chain[gap]).iter().next().expect("gap is nonempty");
        if !matches!(inst.terminal(drained).origin, TerminalOrigin::Drained { .. }) {
            return Err(Error::Internal("chain gaps may only contain drained terminals".into()));
        }
        let names = |set: TerminalSet, inst: &TransshipmentInstance| inst.set_names(set);
        let role = inst.terminal(drained).role;
        match role {
            Role::Source => {
                let q_ext = q.with(drained);
                if OutflowOracle::new(&inst).violation(q_ext)? == 0 {
                    chain.insert(gap + 1, q_ext);
                    verify_chain(&inst, &chain)?;
                    trace.push(IterationRecord {
                        branch: "source-shortcut".into(),
                        q: names(q, &inst),
                        r: names(r, &inst),
                        drained: inst.terminal_name(drained).to_string(),
                        alpha_star: None,
                        delta_star: None,
                        w: None,
                        chain: chain.iter().map(|&s| names(s, &inst)).collect(),
                    });
                    continue;
                }
                let ctx_a =
                    ParametricContext::new(inst.clone(), q, r, drained, ParamKind::Alpha)?;
                let out_a = run_search(&ctx_a, strategy)?;
                contexts.push(ContextRecord {
                    label: format!("{iteration}/alpha/source"),
                    context: ctx_a.clone(),
                    outcome: out_a.clone(),
                });
                let at_a = ctx_a.extend(out_a.optimum)?;
                let s1 = at_a.new_terminal;
                let inst_a = at_a.instance;
                let q1 = q.with(s1);

                let ctx_d = ParametricContext::new(
                    inst_a.clone(),
                    q1,
                    r.union(q1),
                    drained,
                    ParamKind::Delta,
                )?;
                let out_d = run_search(&ctx_d, strategy)?;
                contexts.push(ContextRecord {
                    label: format!("{iteration}/delta/source"),
                    context: ctx_d.clone(),
                    outcome: out_d.clone(),
                });
                if out_d.optimum < 1 {
                    return Err(Error::Internal(
                        "δ* = 0 although α* was maximal; upstream corruption".into(),
                    ));
                }
                let at_d = ctx_d.extend(out_d.optimum)?;
                let s2 = at_d.new_terminal;
                let inst_d = at_d.instance;
                let q2 = q1.with(s2);

                let (w_value, w_restricted) =
                    restricted_minimal_minimizer(&ctx_d, out_d.optimum - 1)?;
                if w_value >= 0 {
                    return Err(Error::Internal("ṽ at δ*−1 admits no violated set".into()));
                }
                let w_full = q2.union(w_restricted);
                let insert_set = q2.union(w_restricted.intersection(r));
                if insert_set == q2 || insert_set == r.union(q2) {
                    return Err(Error::Internal("chain surgery would not be strict".into()));
                }
                for member in chain.iter_mut().skip(gap + 1) {
                    if !member.intersection(q2.difference(q)).is_empty() {
                        return Err(Error::Internal(
                            "new terminals leaked into pre-existing chain members".into(),
                        ));
                    }
                    *member = member.union(q2);
                }
                chain.splice(gap + 1..gap + 1, [q1, q2, insert_set]);
                inst = inst_d;
                verify_chain(&inst, &chain)?;
                trace.push(IterationRecord {
                    branch: "source-surgery".into(),
                    q: names(q, &inst),
                    r: names(r, &inst),
                    drained: inst.terminal_name(drained).to_string(),
                    alpha_star: Some(out_a.optimum),
                    delta_star: Some(out_d.optimum),
                    w: Some(names(w_full, &inst)),
                    chain: chain.iter().map(|&s| names(s, &inst)).collect(),
                });
            }
            Role::Sink => {
                let r_minus = r.without(drained);
                if OutflowOracle::new(&inst).violation(r_minus)? == 0 {
                    chain.insert(gap + 1, r_minus);
                    verify_chain(&inst, &chain)?;
                    trace.push(IterationRecord {
                        branch: "sink-shortcut".into(),
                        q: names(q, &inst),
                        r: names(r, &inst),
                        drained: inst.terminal_name(drained).to_string(),
                        alpha_star: None,
                        delta_star: None,
                        w: None,
                        chain: chain.iter().map(|&s| names(s, &inst)).collect(),
                    });
                    continue;
                }
                let ctx_a =
                    ParametricContext::new(inst.clone(), q, r, drained, ParamKind::Alpha)?;
                let out_a = run_search(&ctx_a, strategy)?;
                contexts.push(ContextRecord {
                    label: format!("{iteration}/alpha/sink"),
                    context: ctx_a.clone(),
                    outcome: out_a.clone(),
                });
                let at_a = ctx_a.extend(out_a.optimum)?;
                let s1 = at_a.new_terminal;
                let inst_a = at_a.instance;

                let ctx_d =
                    ParametricContext::new(inst_a.clone(), q, r, drained, ParamKind::Delta)?;
                let out_d = run_search(&ctx_d, strategy)?;
                contexts.push(ContextRecord {
                    label: format!("{iteration}/delta/sink"),
                    context: ctx_d.clone(),
                    outcome: out_d.clone(),
                });
                if out_d.optimum < 1 {
                    return Err(Error::Internal(
                        "δ* = 0 although α* was maximal; upstream corruption".into(),
                    ));
                }
                let at_d = ctx_d.extend(out_d.optimum)?;
                let s2 = at_d.new_terminal;
                let inst_d = at_d.instance;

                let (w_value, w_restricted) =
                    restricted_minimal_minimizer(&ctx_d, out_d.optimum - 1)?;
                if w_value >= 0 {
                    return Err(Error::Internal("ṽ at δ*−1 admits no violated set".into()));
                }
                // sink-case violated sets contain the drained terminal
                let w_full = q.with(drained).union(w_restricted);
                let insert_set = q.union(w_full.intersection(r));
                if insert_set == q || insert_set == r {
                    return Err(Error::Internal("chain surgery would not be strict".into()));
                }
                let fresh = TerminalSet::from_ids([s1, s2]);
                for member in chain.iter_mut().skip(gap + 1) {
                    if !member.intersection(fresh).is_empty() {
                        return Err(Error::Internal(
                            "new terminals leaked into pre-existing chain members".into(),
                        ));
                    }
                    *member = member.union(fresh);
                }
                // q ⊂ insert ⊂ r ⊂ r∪{ŝ₂} ⊂ r∪{ŝ₁,ŝ₂} ⊂ …
                chain.splice(gap + 1..gap + 1, [insert_set, r, r.with(s2)]);
                inst = inst_d;
                verify_chain(&inst, &chain)?;
                trace.push(IterationRecord {
                    branch: "sink-surgery".into(),
                    q: names(q, &inst),
                    r: names(r, &inst),
                    drained: inst.terminal_name(drained).to_string(),
                    alpha_star: Some(out_a.optimum),
                    delta_star: Some(out_d.optimum),
                    w: Some(names(w_full, &inst)),
                    chain: chain.iter().map(|&s| names(s, &inst)).collect(),
                });
            }
        }
    }
    Ok(RefineOutcome { instance: inst, chain: TightChain { sets: chain }, trace, contexts })
}

/// Orders terminals by the chain set that first contains them. Requires a
/// complete chain, whose gaps are then all singletons.
pub fn tight_order(chain: &TightChain, inst: &TransshipmentInstance) -> Result<TightOrder> {
    if !chain.is_complete(inst.terminal_count()) {
        return Err(Error::Contract(format!(
            "chain with {} sets cannot order {} terminals",
            chain.len(),
            inst.terminal_count()
        )));
    }
    let mut sequence = Vec::with_capacity(inst.terminal_count());
    for pair in chain.sets.windows(2) {
        let diff = pair[1].difference(pair[0]);
        if diff.len() != 1 {
            return Err(Error::Contract("complete chains must grow one terminal at a time".into()));
        }
        sequence.push(diff.iter().next().unwrap());
    }
    Ok(TightOrder { sequence })
}
