//! Integral flow-over-time extraction from an instance equipped with a tight
//! order, plus the flow-over-time representation shared with the oracle.
//!
//! Terminals are processed in the tight order, one min-cost flow computation
//! per terminal on the residual of everything committed so far. Sources push
//! their exact balance; sinks settle at their exact demand, diverting any
//! tentative overshoot to later sinks through residual paths. The committed
//! flow lives in an expanded per-block table (the authoritative
//! representation); temporally repeated path flows are peeled off the table
//! afterwards. Every extraction is re-verified under strict conservation
//! before it is returned.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{NodeId, TerminalId, TransshipmentInstance};
use crate::pipeline::TightOrder;
use crate::time_expanded::{verify, Conservation};
use crate::{Error, Result, Role, Time, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Forward,
    Backward,
}

/// A path flow: flow enters the first arc during `[start, end)` and traverses
/// the arcs with transit-consistent timing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathFlow {
    pub arcs: Vec<(usize, Orientation)>,
    pub value: Value,
    pub start: Time,
    pub end: Time,
}

impl PathFlow {
    /// Total flow units carried: value per block times window length.
    pub fn total(&self) -> Value {
        self.value * (self.end - self.start)
    }
}

/// Integral flow over time: path flows plus the authoritative per-arc,
/// per-block table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowOverTime {
    pub horizon: Time,
    pub method: String,
    pub paths: Vec<PathFlow>,
    /// (arc id, entry block) → flow entering during that block.
    pub expanded: BTreeMap<(usize, Time), Value>,
}

impl FlowOverTime {
    pub fn empty(horizon: Time, method: &str) -> Self {
        FlowOverTime { horizon, method: method.to_string(), paths: Vec::new(), expanded: BTreeMap::new() }
    }

    pub fn add(&mut self, arc_id: usize, theta: Time, flow: Value) {
        if flow != 0 {
            let cell = self.expanded.entry((arc_id, theta)).or_insert(0);
            *cell += flow;
            if *cell == 0 {
                self.expanded.remove(&(arc_id, theta));
            }
        }
    }

    pub fn flow_at(&self, arc_id: usize, theta: Time) -> Value {
        self.expanded.get(&(arc_id, theta)).copied().unwrap_or(0)
    }

    /// Net flow out of a node by the horizon (departures − arrivals).
    pub fn net_outflow(&self, inst: &TransshipmentInstance, node: NodeId) -> Value {
        let mut net = 0;
        for (&(arc_id, _), &f) in &self.expanded {
            if let Some(arc) = inst.network.arc_by_id(arc_id) {
                if arc.tail == node {
                    net += f;
                }
                if arc.head == node {
                    net -= f;
                }
            }
        }
        net
    }

    pub fn total_delivered(&self, inst: &TransshipmentInstance) -> Value {
        inst.terminal_ids()
            .filter(|&t| inst.terminal(t).role == Role::Source)
            .map(|t| self.net_outflow(inst, inst.terminal(t).node))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FlowFile::from_flow(self)).expect("flow serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FlowFile = serde_json::from_str(text)?;
        file.into_flow()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct FlowFile {
    horizon: Time,
    method: String,
    paths: Vec<PathFile>,
    expanded: Vec<ExpandedEntry>,
}

#[derive(Serialize, Deserialize)]
struct PathFile {
    arcs: Vec<(usize, String)>,
    value: Value,
    start: Time,
    end: Time,
}

#[derive(Serialize, Deserialize)]
struct ExpandedEntry {
    arc: usize,
    t: Time,
    flow: Value,
}

impl FlowFile {
    fn from_flow(flow: &FlowOverTime) -> Self {
        FlowFile {
            horizon: flow.horizon,
            method: flow.method.clone(),
            paths: flow
                .paths
                .iter()
                .map(|p| PathFile {
                    arcs: p
                        .arcs
                        .iter()
                        .map(|&(id, o)| {
                            (id, match o {
                                Orientation::Forward => "fwd".to_string(),
                                Orientation::Backward => "bwd".to_string(),
                            })
                        })
                        .collect(),
                    value: p.value,
                    start: p.start,
                    end: p.end,
                })
                .collect(),
            expanded: flow
                .expanded
                .iter()
                .map(|(&(arc, t), &f)| ExpandedEntry { arc, t, flow: f })
                .collect(),
        }
    }

    fn into_flow(self) -> Result<FlowOverTime> {
        let mut flow = FlowOverTime::empty(self.horizon, &self.method);
        for p in self.paths {
            let mut arcs = Vec::with_capacity(p.arcs.len());
            for (id, o) in p.arcs {
                let orientation = match o.as_str() {
                    "fwd" => Orientation::Forward,
                    "bwd" => Orientation::Backward,
                    other => return Err(Error::Parse(format!("bad orientation {other:?}"))),
                };
                arcs.push((id, orientation));
            }
            flow.paths.push(PathFlow { arcs, value: p.value, start: p.start, end: p.end });
        }
        for e in self.expanded {
            flow.add(e.arc, e.t, e.flow);
        }
        Ok(flow)
    }
}

/// Result of an extraction run, with instrumentation for the per-terminal
/// min-cost-flow budget.
pub struct Extraction {
    pub flow: FlowOverTime,
    pub mcf_calls: u64,
}

/// Residual network over (node, block) states used by the extractor.
struct Extractor {
    horizon: Time,
    n: usize,
    // edge storage in pairs, edge ^ 1 is the reverse
    to: Vec<usize>,
    residual: Vec<Value>,
    frozen: Vec<bool>,
    adjacency: Vec<Vec<usize>>,
    /// (network arc index, entry block) per movement edge pair.
    movement: Vec<(usize, Time, usize)>,
    supply_edge: Vec<Option<usize>>,
    absorb_edge: Vec<Option<usize>>,
    super_source: usize,
    super_sink: usize,
}

impl Extractor {
    fn copy(&self, node: usize, block: Time) -> usize {
        block as usize * self.n + node
    }

    fn add_edge(&mut self, from: usize, to: usize, capacity: Value) -> usize {
        let e = self.to.len();
        self.to.push(to);
        self.residual.push(capacity);
        self.frozen.push(false);
        self.to.push(from);
        self.residual.push(0);
        self.frozen.push(false);
        self.adjacency[from].push(e);
        self.adjacency[to].push(e + 1);
        e
    }

    fn build(inst: &TransshipmentInstance) -> Result<Self> {
        let horizon = inst.horizon_or_err()?;
        if horizon < 1 {
            return Err(Error::Contract(format!("horizon must be positive, got {horizon}")));
        }
        let n = inst.network.node_count();
        let blocks = horizon as usize;
        let cap = crate::time_expanded::oracle_cap();
        if blocks.saturating_mul(n) > cap {
            return Err(Error::ExpansionTooLarge { nodes: blocks * n, cap });
        }
        let node_total = blocks * n + 2;
        let mut ex = Extractor {
            horizon,
            n,
            to: Vec::new(),
            residual: Vec::new(),
            frozen: Vec::new(),
            adjacency: vec![Vec::new(); node_total],
            movement: Vec::new(),
            supply_edge: vec![None; inst.terminal_count()],
            absorb_edge: vec![None; inst.terminal_count()],
            super_source: blocks * n,
            super_sink: blocks * n + 1,
        };
        let surrogate = inst.capacity_surrogate();
        for (idx, arc) in inst.network.arcs.iter().enumerate() {
            let capacity = if arc.is_infinite() { surrogate } else { arc.capacity };
            for theta in 0..(horizon - arc.transit).max(0) {
                let e = ex.add_edge(
                    ex.copy(arc.tail.0, theta),
                    ex.copy(arc.head.0, theta + arc.transit),
                    capacity,
                );
                ex.movement.push((idx, theta, e));
            }
        }
        // storage is permitted at terminals only, keeping extractions strict
        // at every other node by construction
        for t in inst.terminal_ids() {
            let node = inst.terminal(t).node.0;
            for theta in 0..horizon - 1 {
                ex.add_edge(ex.copy(node, theta), ex.copy(node, theta + 1), surrogate);
            }
        }
        for t in inst.terminal_ids() {
            let term = inst.terminal(t);
            match term.role {
                Role::Source => {
                    let b = inst.terminal_balance(t);
                    if b > 0 {
                        let e = ex.add_edge(ex.super_source, ex.copy(term.node.0, 0), b);
                        ex.supply_edge[t.0] = Some(e);
                        // closed until the terminal's own step
                        ex.frozen[e] = true;
                        ex.frozen[e + 1] = true;
                    }
                }
                Role::Sink => {
                    let e = ex.add_edge(ex.copy(term.node.0, horizon - 1), ex.super_sink, surrogate);
                    ex.absorb_edge[t.0] = Some(e);
                }
            }
        }
        Ok(ex)
    }

    fn set_frozen(&mut self, edge: usize, frozen: bool) {
        self.frozen[edge] = frozen;
        self.frozen[edge ^ 1] = frozen;
    }

    fn flow_on(&self, edge: usize) -> Value {
        self.residual[edge ^ 1]
    }

    /// Shortest augmenting path by BFS from the seed states to `target`.
    /// Returns the bottleneck-augmented amount, 0 if no path exists.
    fn augment(&mut self, seeds: &[usize], target: usize, limit: Value) -> Value {
        use std::collections::VecDeque;
        let mut parent: Vec<Option<usize>> = vec![None; self.adjacency.len()];
        let mut seen = vec![false; self.adjacency.len()];
        let mut queue = VecDeque::new();
        for &node in seeds {
            if !seen[node] {
                seen[node] = true;
                queue.push_back(node);
            }
        }
        let mut found = false;
        'bfs: while let Some(u) = queue.pop_front() {
            for &e in &self.adjacency[u] {
                if self.frozen[e] || self.residual[e] <= 0 {
                    continue;
                }
                let v = self.to[e];
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                parent[v] = Some(e);
                if v == target {
                    found = true;
                    break 'bfs;
                }
                queue.push_back(v);
            }
        }
        if !found {
            return 0;
        }
        let mut bottleneck = limit;
        let mut v = target;
        while let Some(e) = parent[v] {
            bottleneck = bottleneck.min(self.residual[e]);
            v = self.to[e ^ 1];
        }
        debug_assert!(bottleneck > 0);
        let mut v = target;
        while let Some(e) = parent[v] {
            self.residual[e] -= bottleneck;
            self.residual[e ^ 1] += bottleneck;
            v = self.to[e ^ 1];
        }
        bottleneck
    }
}

/// Computes an integral transshipment meeting every balance by the horizon,
/// consuming the tight order front to back.
pub fn lex_max_transshipment(
    inst: &TransshipmentInstance,
    order: &TightOrder,
) -> Result<Extraction> {
    let all: Vec<TerminalId> = order.sequence.clone();
    {
        let mut seen = vec![false; inst.terminal_count()];
        for t in &all {
            if t.0 >= inst.terminal_count() || seen[t.0] {
                return Err(Error::Contract("order is not a permutation of the terminals".into()));
            }
            seen[t.0] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Contract("order does not cover all terminals".into()));
        }
    }
    let mut ex = Extractor::build(inst)?;
    let mut mcf_calls = 0u64;

    for &t in &all {
        let term = inst.terminal(t).clone();
        let b = inst.terminal_balance(t);
        match term.role {
            Role::Source => {
                if b > 0 {
                    let supply = ex.supply_edge[t.0].expect("positive sources have supply edges");
                    ex.set_frozen(supply, false);
                    mcf_calls += 1;
                    let mut remaining = b;
                    while remaining > 0 {
                        let pushed = ex.augment(&[ex.super_source], ex.super_sink, remaining);
                        if pushed == 0 {
                            return Err(Error::Internal(format!(
                                "source {} under-delivered: {remaining} of {b} unplaced",
                                inst.terminal_name(t)
                            )));
                        }
                        remaining -= pushed;
                    }
                    debug_assert_eq!(ex.flow_on(supply), b);
                    ex.set_frozen(supply, true);
                }
            }
            Role::Sink => {
                let absorb = ex.absorb_edge[t.0].expect("sinks have absorb edges");
                let demand = -b;
                let absorbed = ex.flow_on(absorb);
                if absorbed < demand {
                    return Err(Error::Internal(format!(
                        "sink {} under-supplied at its turn: {absorbed} < {demand}",
                        inst.terminal_name(t)
                    )));
                }
                if absorbed > demand {
                    mcf_calls += 1;
                    // The tentative overshoot is rerouted to still-active sinks.
                    // With the absorb edge frozen, augmenting from its tail state
                    // cannot re-absorb here; the edge flow is settled afterwards.
                    ex.set_frozen(absorb, true);
                    let seed = ex.to[absorb ^ 1];
                    let surplus = absorbed - demand;
                    let mut left = surplus;
                    while left > 0 {
                        let moved = ex.augment(&[seed], ex.super_sink, left);
                        if moved == 0 {
                            return Err(Error::Internal(format!(
                                "sink {} surplus is stuck: {left} units undivertable",
                                inst.terminal_name(t)
                            )));
                        }
                        left -= moved;
                    }
                    ex.residual[absorb ^ 1] -= surplus;
                    ex.residual[absorb] += surplus;
                    debug_assert_eq!(ex.flow_on(absorb), demand);
                } else {
                    ex.set_frozen(absorb, true);
                }
            }
        }
    }

    let mut flow = FlowOverTime::empty(ex.horizon, "lex-max");
    for &(arc_idx, theta, e) in &ex.movement {
        let f = ex.flow_on(e);
        if f > 0 {
            flow.add(inst.network.arcs[arc_idx].id, theta, f);
        }
    }
    cancel_zero_transit_cycles(&mut flow, inst);
    for t in inst.terminal_ids() {
        let node = inst.terminal(t).node;
        let net = flow.net_outflow(inst, node);
        if net != inst.terminal_balance(t) {
            return Err(Error::Internal(format!(
                "terminal {} delivered {net}, expected {}",
                inst.terminal_name(t),
                inst.terminal_balance(t)
            )));
        }
    }
    flow.paths = peel_paths(inst, &flow)?;
    let violations = verify(&flow, inst, Conservation::Strict);
    if !violations.is_empty() {
        return Err(Error::Internal(format!(
            "extracted flow failed strict verification: {}",
            violations.join("; ")
        )));
    }
    Ok(Extraction { flow, mcf_calls })
}

/// Removes flow circulating on zero-transit cycles within a single block.
/// Such cycles can appear when augmentations overlap; they carry no net flow
/// and would keep path peeling from terminating.
fn cancel_zero_transit_cycles(flow: &mut FlowOverTime, inst: &TransshipmentInstance) {
    use std::collections::BTreeSet;
    let zero_ids: Vec<usize> = inst
        .network
        .arcs
        .iter()
        .filter(|a| a.transit == 0)
        .map(|a| a.id)
        .collect();
    if zero_ids.is_empty() {
        return;
    }
    let blocks: BTreeSet<Time> = flow
        .expanded
        .keys()
        .filter(|(arc, _)| zero_ids.contains(arc))
        .map(|&(_, t)| t)
        .collect();
    for theta in blocks {
        while let Some(cycle) = find_zero_cycle(flow, inst, theta) {
            let q = cycle.iter().map(|&id| flow.flow_at(id, theta)).min().unwrap();
            for &id in &cycle {
                flow.add(id, theta, -q);
            }
        }
    }
}

fn find_zero_cycle(
    flow: &FlowOverTime,
    inst: &TransshipmentInstance,
    theta: Time,
) -> Option<Vec<usize>> {
    let n = inst.network.node_count();
    let mut out: Vec<Vec<&crate::model::Arc>> = vec![Vec::new(); n];
    for arc in &inst.network.arcs {
        if arc.transit == 0 && flow.flow_at(arc.id, theta) > 0 {
            out[arc.tail.0].push(arc);
        }
    }
    fn dfs<'a>(
        u: usize,
        out: &[Vec<&'a crate::model::Arc>],
        color: &mut [u8],
        path: &mut Vec<&'a crate::model::Arc>,
    ) -> Option<Vec<usize>> {
        color[u] = 1;
        for &arc in &out[u] {
            let v = arc.head.0;
            match color[v] {
                1 => {
                    let mut cycle = vec![arc.id];
                    if arc.tail.0 != v {
                        for prev in path.iter().rev() {
                            cycle.push(prev.id);
                            if prev.tail.0 == v {
                                break;
                            }
                        }
                    }
                    return Some(cycle);
                }
                0 => {
                    path.push(arc);
                    if let Some(c) = dfs(v, out, color, path) {
                        return Some(c);
                    }
                    path.pop();
                }
                _ => {}
            }
        }
        color[u] = 2;
        None
    }
    let mut color = vec![0u8; n];
    for root in 0..n {
        if color[root] == 0 {
            let mut path = Vec::new();
            if let Some(c) = dfs(root, &out, &mut color, &mut path) {
                return Some(c);
            }
        }
    }
    None
}

/// Decomposes the expanded table into forward path flows between terminals,
/// widening windows greedily so uniform flows come out as single temporally
/// repeated paths.
fn peel_paths(inst: &TransshipmentInstance, flow: &FlowOverTime) -> Result<Vec<PathFlow>> {
    let mut rem = flow.expanded.clone();
    let mut paths = Vec::new();
    let is_terminal: std::collections::HashSet<usize> =
        inst.terminal_ids().map(|t| inst.terminal(t).node.0).collect();
    // earliest positive cell, ties broken by arc id
    let next_cell = |rem: &BTreeMap<(usize, Time), Value>| {
        rem.iter()
            .filter(|(_, &f)| f > 0)
            .map(|(&(arc, theta), _)| (theta, arc))
            .min()
            .map(|(theta, arc)| (arc, theta))
    };

    while let Some((arc0, theta0)) = next_cell(&rem) {
        let mut seq: Vec<(usize, Time)> = vec![(arc0, theta0)];
        // extend backward to a terminal
        loop {
            let (first_arc, first_theta) = seq[0];
            let arc = inst.network.arc_by_id(first_arc).expect("known arc");
            if is_terminal.contains(&arc.tail.0) {
                break;
            }
            let prev = inst
                .network
                .arcs
                .iter()
                .filter(|a| a.head == arc.tail)
                .filter(|a| first_theta >= a.transit)
                .find(|a| rem.get(&(a.id, first_theta - a.transit)).copied().unwrap_or(0) > 0);
            let Some(prev) = prev else {
                return Err(Error::Internal(format!(
                    "path peeling stuck behind arc {first_arc} at block {first_theta}"
                )));
            };
            seq.insert(0, (prev.id, first_theta - prev.transit));
        }
        // extend forward to a terminal
        loop {
            let (last_arc, last_theta) = *seq.last().unwrap();
            let arc = inst.network.arc_by_id(last_arc).expect("known arc");
            if is_terminal.contains(&arc.head.0) {
                break;
            }
            let arrive = last_theta + arc.transit;
            let next = inst
                .network
                .arcs
                .iter()
                .filter(|a| a.tail == arc.head)
                .find(|a| rem.get(&(a.id, arrive)).copied().unwrap_or(0) > 0);
            let Some(next) = next else {
                return Err(Error::Internal(format!(
                    "path peeling stuck ahead of arc {last_arc} at block {arrive}"
                )));
            };
            seq.push((next.id, arrive));
        }
        let value = seq
            .iter()
            .map(|&(arc, theta)| rem.get(&(arc, theta)).copied().unwrap_or(0))
            .min()
            .unwrap();
        debug_assert!(value > 0);
        // widen the window while every arc still supports `value`
        let mut width = 1;
        'widen: loop {
            for &(arc, theta) in &seq {
                if rem.get(&(arc, theta + width)).copied().unwrap_or(0) < value {
                    break 'widen;
                }
            }
            width += 1;
        }
        for offset in 0..width {
            for &(arc, theta) in &seq {
                let cell = rem.get_mut(&(arc, theta + offset)).unwrap();
                *cell -= value;
            }
        }
        // the backward extension can only cross zero-transit arcs (an earlier
        // entry block would contradict the minimality of the starting cell),
        // so the first arc's entry block anchors the window
        let start = seq[0].1;
        debug_assert_eq!(start, theta0);
        paths.push(PathFlow {
            arcs: seq.iter().map(|&(arc, _)| (arc, Orientation::Forward)).collect(),
            value,
            start,
            end: start + width,
        });
    }
    Ok(paths)
}

/// Contracts artificial terminal-attachment arcs, yielding a flow on the
/// original instance. Zero-transit attachment arcs vanish; a transit-δ
/// attachment shifts the path's entry time by δ.
pub fn project(
    flow: &FlowOverTime,
    final_inst: &TransshipmentInstance,
    original: &TransshipmentInstance,
) -> Result<FlowOverTime> {
    let original_ids: std::collections::HashSet<usize> =
        original.network.arcs.iter().map(|a| a.id).collect();
    for arc in &original.network.arcs {
        match final_inst.network.arc_by_id(arc.id) {
            Some(kept) if kept.tail == arc.tail && kept.head == arc.head => {}
            _ => {
                return Err(Error::Contract(
                    "final instance does not extend the original network".into(),
                ))
            }
        }
    }
    let mut out = FlowOverTime::empty(flow.horizon, &flow.method);
    for (&(arc_id, theta), &f) in &flow.expanded {
        if original_ids.contains(&arc_id) {
            out.add(arc_id, theta, f);
        }
    }
    for path in &flow.paths {
        let mut start = path.start;
        let mut arcs = path.arcs.clone();
        while let Some(&(first, _)) = arcs.first() {
            if original_ids.contains(&first) {
                break;
            }
            let transit = final_inst.network.arc_by_id(first).map(|a| a.transit).unwrap_or(0);
            start += transit;
            arcs.remove(0);
        }
        while let Some(&(last, _)) = arcs.last() {
            if original_ids.contains(&last) {
                break;
            }
            arcs.pop();
        }
        if arcs.is_empty() {
            continue;
        }
        out.paths.push(PathFlow { arcs, value: path.value, start, end: start + (path.end - path.start) });
    }
    Ok(out)
}
