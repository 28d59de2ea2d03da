//! Brute-force ground truth on time-expanded networks: out-flow values,
//! feasibility, integral solving, and verification of flows over time.
//!
//! Discrete time semantics throughout: a flow enters arc `a` during block
//! `θ ∈ {0..T-1}` and fully arrives in block `θ + τ_a`, so entries with
//! `θ + τ_a > T - 1` cannot complete by the horizon and are forbidden.
//! Holdover (storage) arcs exist at every node copy; the solver may store
//! flow anywhere, while strict verification rejects storage at
//! non-terminals.

use crate::lexmax::FlowOverTime;
use crate::model::{TerminalSet, TransshipmentInstance};
use crate::static_flow::{max_flow, StaticGraph};
use crate::{Error, Result, Role, Time, Value};

/// Default cap on time-expansion size; override with `QT_ORACLE_CAP`.
pub const DEFAULT_NODE_CAP: usize = 5000;

pub fn oracle_cap() -> usize {
    std::env::var("QT_ORACLE_CAP")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_NODE_CAP)
}

pub fn within_cap(inst: &TransshipmentInstance, horizon: Time) -> bool {
    let layers = horizon.max(0) as usize + 1;
    layers.saturating_mul(inst.network.node_count()) <= oracle_cap()
}

/// Static expansion of a dynamic network over `horizon` time blocks.
pub struct TimeExpandedGraph {
    pub graph: StaticGraph,
    pub horizon: Time,
    node_count: usize,
    /// (network arc index, entry block, static arc index)
    pub movement: Vec<(usize, Time, usize)>,
    pub super_source: usize,
    pub super_sink: usize,
    pub core_arc_count: usize,
}

impl TimeExpandedGraph {
    /// Index of the copy of `node` at time block `block` (0 ≤ block ≤ horizon).
    pub fn copy(&self, node: usize, block: Time) -> usize {
        block as usize * self.node_count + node
    }

    pub fn build(inst: &TransshipmentInstance, horizon: Time) -> Result<Self> {
        let n = inst.network.node_count();
        let layers = horizon.max(0) as usize + 1;
        let nodes = layers * n;
        let cap = oracle_cap();
        if nodes > cap {
            return Err(Error::ExpansionTooLarge { nodes, cap });
        }
        let mut graph = StaticGraph::new(nodes + 2);
        let surrogate = inst.capacity_surrogate();
        let mut te = TimeExpandedGraph {
            graph: StaticGraph::new(0),
            horizon,
            node_count: n,
            movement: Vec::new(),
            super_source: nodes,
            super_sink: nodes + 1,
            core_arc_count: 0,
        };
        // flows can pile up over time, so expansion-internal bounds scale with
        // the horizon
        let big = surrogate.saturating_mul(horizon + 1);
        for (idx, arc) in inst.network.arcs.iter().enumerate() {
            let capacity = if arc.is_infinite() { big } else { arc.capacity };
            // entry must complete within the horizon: θ + τ ≤ T - 1
            for theta in 0..(horizon - arc.transit).max(0) {
                let e = graph.add_arc(
                    te_index(n, arc.tail.0, theta),
                    te_index(n, arc.head.0, theta + arc.transit),
                    capacity,
                    arc.transit,
                );
                te.movement.push((idx, theta, e));
            }
        }
        for v in 0..n {
            for theta in 0..horizon {
                graph.add_arc(te_index(n, v, theta), te_index(n, v, theta + 1), big, 0);
            }
        }
        te.core_arc_count = graph.arcs.len();
        te.graph = graph;
        Ok(te)
    }
}

fn te_index(n: usize, node: usize, block: Time) -> usize {
    block as usize * n + node
}

/// Maximum out-flow of `x` evaluated on the time expansion: an independent
/// code path from the min-cost-circulation reduction.
pub fn outflow_te(inst: &TransshipmentInstance, x: TerminalSet, horizon: Time) -> Result<Value> {
    if !x.is_subset_of(inst.all_terminals()) {
        return Err(Error::Contract(format!("{x} is not a subset of the terminal universe")));
    }
    if horizon <= 0 {
        return Ok(0);
    }
    let mut te = TimeExpandedGraph::build(inst, horizon)?;
    let big = inst.capacity_surrogate().saturating_mul(horizon + 1);
    for t in inst.terminal_ids() {
        let term = inst.terminal(t);
        match term.role {
            Role::Source if x.contains(t) => {
                te.graph.add_arc(te.super_source, te.copy(term.node.0, 0), big, 0);
            }
            Role::Sink if !x.contains(t) => {
                for theta in 0..=horizon {
                    te.graph.add_arc(te.copy(term.node.0, theta), te.super_sink, big, 0);
                }
            }
            _ => {}
        }
    }
    Ok(max_flow(&te.graph, te.super_source, te.super_sink).value)
}

fn saturating_transshipment(
    inst: &TransshipmentInstance,
) -> Result<(TimeExpandedGraph, crate::static_flow::StaticFlow, Value)> {
    let horizon = inst.horizon_or_err()?;
    let mut te = TimeExpandedGraph::build(inst, horizon)?;
    let mut supply = 0;
    for t in inst.terminal_ids() {
        let term = inst.terminal(t);
        let b = inst.terminal_balance(t);
        match term.role {
            Role::Source if b > 0 => {
                te.graph.add_arc(te.super_source, te.copy(term.node.0, 0), b, 0);
                supply += b;
            }
            Role::Sink if b < 0 => {
                te.graph.add_arc(te.copy(term.node.0, horizon), te.super_sink, -b, 0);
            }
            _ => {}
        }
    }
    let flow = max_flow(&te.graph, te.super_source, te.super_sink);
    Ok((te, flow, supply))
}

/// Feasibility by a single max-flow on the expansion.
pub fn brute_feasibility(inst: &TransshipmentInstance) -> Result<bool> {
    let (_, flow, supply) = saturating_transshipment(inst)?;
    Ok(flow.value == supply)
}

/// Integral flow over time meeting all balances, read off the expansion.
/// The result may store flow at intermediate nodes.
pub fn solve_time_expanded(inst: &TransshipmentInstance) -> Result<FlowOverTime> {
    let (te, flow, supply) = saturating_transshipment(inst)?;
    if flow.value != supply {
        return Err(Error::Infeasible { witness: "time-expanded saturation failed".into() });
    }
    let mut out = FlowOverTime::empty(te.horizon, "time-expanded");
    for &(arc_idx, theta, e) in &te.movement {
        if flow.flow[e] > 0 {
            out.add(inst.network.arcs[arc_idx].id, theta, flow.flow[e]);
        }
    }
    Ok(out)
}

/// Conservation mode for [`verify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conservation {
    /// Flow may wait at any node.
    HoldoverAllowed,
    /// Flow must be forwarded immediately at non-terminals.
    Strict,
}

/// Checks capacity, horizon bounds, conservation and exact balance delivery.
/// Violations are data, not failures.
pub fn verify(
    flow: &FlowOverTime,
    inst: &TransshipmentInstance,
    mode: Conservation,
) -> Vec<String> {
    let mut out = Vec::new();
    let horizon = flow.horizon;
    if let Some(expected) = inst.horizon {
        if expected != horizon {
            out.push(format!("flow horizon {horizon} differs from instance horizon {expected}"));
        }
    }
    let n = inst.network.node_count();
    let blocks = horizon.max(0) as usize;
    // arrivals[v][β], departures[v][β]
    let mut arrivals = vec![vec![0 as Value; blocks]; n];
    let mut departures = vec![vec![0 as Value; blocks]; n];
    for (&(arc_id, theta), &f) in flow.expanded.iter() {
        let Some(arc) = inst.network.arc_by_id(arc_id) else {
            out.push(format!("flow on unknown arc id {arc_id}"));
            continue;
        };
        if f < 0 {
            out.push(format!("arc {arc_id} at block {theta}: negative flow {f}"));
            continue;
        }
        if theta < 0 || theta + arc.transit > horizon - 1 {
            out.push(format!(
                "arc {arc_id} at block {theta}: cannot complete within horizon {horizon}"
            ));
            continue;
        }
        if !arc.is_infinite() && f > arc.capacity {
            out.push(format!(
                "arc {arc_id} at block {theta}: flow {f} exceeds capacity {}",
                arc.capacity
            ));
        }
        if f > 0 {
            departures[arc.tail.0][theta as usize] += f;
            arrivals[arc.head.0][(theta + arc.transit) as usize] += f;
        }
    }
    let terminal_of: std::collections::HashMap<usize, crate::model::TerminalId> = inst
        .terminal_ids()
        .map(|t| (inst.terminal(t).node.0, t))
        .collect();
    for v in 0..n {
        let name = inst.network.node_name(crate::model::NodeId(v));
        match terminal_of.get(&v) {
            None => {
                let mut stored = 0;
                for beta in 0..blocks {
                    match mode {
                        Conservation::Strict => {
                            if departures[v][beta] != arrivals[v][beta] {
                                out.push(format!(
                                    "node {name} block {beta}: strict conservation violated \
                                     (in {} out {})",
                                    arrivals[v][beta], departures[v][beta]
                                ));
                            }
                        }
                        Conservation::HoldoverAllowed => {
                            stored += arrivals[v][beta] - departures[v][beta];
                            if stored < 0 {
                                out.push(format!(
                                    "node {name} block {beta}: departures outrun arrivals"
                                ));
                                stored = 0;
                            }
                        }
                    }
                }
                if mode == Conservation::HoldoverAllowed && stored != 0 {
                    out.push(format!("node {name}: {stored} units stranded at the horizon"));
                }
            }
            Some(&t) => {
                let b = inst.terminal_balance(t);
                let mut net_out = 0;
                for beta in 0..blocks {
                    net_out += departures[v][beta] - arrivals[v][beta];
                    if net_out > b.max(0) {
                        out.push(format!(
                            "terminal {name} block {beta}: emitted {net_out} exceeds supply {}",
                            b.max(0)
                        ));
                    }
                }
                if net_out != b {
                    out.push(format!(
                        "terminal {name}: net outflow {net_out} ≠ balance {b}"
                    ));
                }
            }
        }
    }
    out
}
