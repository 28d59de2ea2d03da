//! Dynamic networks, balances, terminal sets and instance validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Time, Value, U_INF};

/// Index of a node in [`DynamicNetwork::nodes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Index of a terminal in [`TransshipmentInstance::terminals`].
///
/// Terminal ids are stable across instance transformations: lifting and
/// parametric extension only append terminals, so sets built for an earlier
/// version remain valid on later ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TerminalId(pub usize);

/// A directed arc with capacity (flow units per time step) and transit time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arc {
    pub id: usize,
    pub tail: NodeId,
    pub head: NodeId,
    pub capacity: Value,
    pub transit: Time,
}

impl Arc {
    pub fn is_infinite(&self) -> bool {
        self.capacity == U_INF
    }
}

/// Directed graph with per-arc capacities and transit times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicNetwork {
    pub nodes: Vec<String>,
    /// Sorted by arc id ascending; ids are unique but need not be contiguous.
    pub arcs: Vec<Arc>,
}

impl DynamicNetwork {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn node_index(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n == name).map(NodeId)
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0]
    }

    /// Appends a node, uniquifying the suggested name if it collides.
    pub fn push_node(&mut self, suggested: &str) -> NodeId {
        let mut name = suggested.to_string();
        let mut salt = 0usize;
        while self.nodes.contains(&name) {
            salt += 1;
            name = format!("{suggested}#{salt}");
        }
        self.nodes.push(name);
        NodeId(self.nodes.len() - 1)
    }

    /// Appends an arc with the next free id and returns that id.
    pub fn push_arc(&mut self, tail: NodeId, head: NodeId, capacity: Value, transit: Time) -> usize {
        let id = self.arcs.last().map_or(0, |a| a.id + 1);
        self.arcs.push(Arc { id, tail, head, capacity, transit });
        id
    }

    pub fn arc_by_id(&self, id: usize) -> Option<&Arc> {
        self.arcs.iter().find(|a| a.id == id)
    }
}

/// Whether a terminal supplies or demands flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Source,
    Sink,
}

/// How a terminal came to exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TerminalOrigin {
    /// Declared by the input instance.
    Original,
    /// Twin added at lift time, carrying the balance of the node it drains.
    Drained { of: NodeId },
    /// Added by a parametric materialization; `generation` counts additions
    /// at the same attachment node.
    Filled { attach: NodeId, generation: u32 },
}

/// A terminal: a node with a declared supply/demand role.
///
/// Transformed instances may hold terminals whose balance has been drained
/// to zero; the role is therefore explicit rather than derived from the
/// balance sign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Terminal {
    pub node: NodeId,
    pub role: Role,
    pub origin: TerminalOrigin,
}

/// Subset of terminals as a fixed-width bitset keyed by terminal index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TerminalSet(pub u64);

pub const MAX_TERMINALS: usize = 64;

impl TerminalSet {
    pub const EMPTY: TerminalSet = TerminalSet(0);

    pub fn singleton(t: TerminalId) -> Self {
        TerminalSet(1u64 << t.0)
    }

    pub fn from_ids<I: IntoIterator<Item = TerminalId>>(ids: I) -> Self {
        let mut s = TerminalSet::EMPTY;
        for t in ids {
            s.insert(t);
        }
        s
    }

    pub fn contains(&self, t: TerminalId) -> bool {
        self.0 >> t.0 & 1 == 1
    }

    pub fn insert(&mut self, t: TerminalId) {
        self.0 |= 1u64 << t.0;
    }

    pub fn remove(&mut self, t: TerminalId) {
        self.0 &= !(1u64 << t.0);
    }

    pub fn union(&self, other: TerminalSet) -> TerminalSet {
        TerminalSet(self.0 | other.0)
    }

    pub fn intersection(&self, other: TerminalSet) -> TerminalSet {
        TerminalSet(self.0 & other.0)
    }

    pub fn difference(&self, other: TerminalSet) -> TerminalSet {
        TerminalSet(self.0 & !other.0)
    }

    pub fn is_subset_of(&self, other: TerminalSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = TerminalId> + '_ {
        let bits = self.0;
        (0..MAX_TERMINALS).filter(move |i| bits >> i & 1 == 1).map(TerminalId)
    }

    pub fn with(&self, t: TerminalId) -> TerminalSet {
        TerminalSet(self.0 | 1u64 << t.0)
    }

    pub fn without(&self, t: TerminalId) -> TerminalSet {
        TerminalSet(self.0 & !(1u64 << t.0))
    }
}

impl fmt::Display for TerminalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", t.0)?;
        }
        write!(f, "}}")
    }
}

/// A dynamic transshipment instance: network, balances and optional horizon.
///
/// Instances are immutable after construction; pipeline transformations
/// produce new instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransshipmentInstance {
    pub network: DynamicNetwork,
    /// Balance per node, indexed by `NodeId`.
    pub balances: Vec<Value>,
    pub terminals: Vec<Terminal>,
    pub horizon: Option<Time>,
    /// Node count of the instance this one was derived from, before any
    /// lifting or parametric extension. Parametric search bounds are
    /// computed against the base network.
    pub base_node_count: usize,
    /// Largest finite capacity among base-network arcs, or the total supply
    /// when every base arc is unbounded.
    pub base_max_capacity: Value,
}

impl TransshipmentInstance {
    /// Builds an instance from raw parts, deriving terminals from balance signs.
    pub fn from_parts(
        network: DynamicNetwork,
        balances: Vec<Value>,
        horizon: Option<Time>,
    ) -> Self {
        let terminals = balances
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| {
                if b > 0 {
                    Some(Terminal { node: NodeId(i), role: Role::Source, origin: TerminalOrigin::Original })
                } else if b < 0 {
                    Some(Terminal { node: NodeId(i), role: Role::Sink, origin: TerminalOrigin::Original })
                } else {
                    None
                }
            })
            .collect();
        let base_node_count = network.node_count();
        let base_max_capacity = base_max_capacity(&network, &balances);
        TransshipmentInstance { network, balances, terminals, horizon, base_node_count, base_max_capacity }
    }

    pub fn terminal(&self, t: TerminalId) -> &Terminal {
        &self.terminals[t.0]
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    /// The full terminal set S.
    pub fn all_terminals(&self) -> TerminalSet {
        TerminalSet(if self.terminals.is_empty() {
            0
        } else {
            u64::MAX >> (64 - self.terminals.len())
        })
    }

    pub fn terminal_ids(&self) -> impl Iterator<Item = TerminalId> {
        (0..self.terminals.len()).map(TerminalId)
    }

    pub fn terminal_balance(&self, t: TerminalId) -> Value {
        self.balances[self.terminal(t).node.0]
    }

    pub fn terminal_name(&self, t: TerminalId) -> &str {
        self.network.node_name(self.terminal(t).node)
    }

    pub fn set_names(&self, set: TerminalSet) -> Vec<String> {
        set.iter().map(|t| self.terminal_name(t).to_string()).collect()
    }

    /// Net balance b(X) = Σ_{v∈X} b(v).
    pub fn net_balance(&self, set: TerminalSet) -> Result<Value> {
        if !set.is_subset_of(self.all_terminals()) {
            return Err(Error::Contract(format!(
                "terminal set {set} contains indices outside the {}-terminal universe",
                self.terminals.len()
            )));
        }
        Ok(set.iter().map(|t| self.terminal_balance(t)).sum())
    }

    /// Total supply Σ b(v)⁺.
    pub fn total_supply(&self) -> Value {
        self.balances.iter().filter(|&&b| b > 0).sum()
    }

    /// Finite stand-in for unbounded capacities inside flow computations:
    /// total supply plus the sum of finite arc capacities. No optimum of the
    /// out-flow reductions routes more than this through a single arc.
    pub fn capacity_surrogate(&self) -> Value {
        let finite: Value = self
            .network
            .arcs
            .iter()
            .filter(|a| !a.is_infinite())
            .map(|a| a.capacity)
            .sum();
        (self.total_supply() + finite).max(1)
    }

    /// Checks all type invariants, returning one message per violation.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.network.node_count();
        for arc in &self.network.arcs {
            if arc.tail.0 >= n || arc.head.0 >= n {
                out.push(format!("arc {}: endpoint out of range", arc.id));
            }
            if arc.capacity < 0 {
                out.push(format!("arc {}: negative capacity {}", arc.id, arc.capacity));
            }
            if arc.transit < 0 {
                out.push(format!("arc {}: negative transit time {}", arc.id, arc.transit));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for arc in &self.network.arcs {
            if !seen.insert(arc.id) {
                out.push(format!("arc {}: duplicate id", arc.id));
            }
        }
        if self.balances.len() != n {
            out.push(format!("balance table has {} entries for {} nodes", self.balances.len(), n));
        }
        let sum: Value = self.balances.iter().sum();
        if sum != 0 {
            out.push(format!("balances sum to {sum} ≠ 0"));
        }
        if let Some(t) = self.horizon {
            if t < 1 {
                out.push(format!("horizon {t} is not positive"));
            }
        }
        for term in &self.terminals {
            let b = self.balances[term.node.0];
            match term.role {
                Role::Source if b < 0 => out.push(format!(
                    "terminal {}: source role with negative balance {b}",
                    self.network.node_name(term.node)
                )),
                Role::Sink if b > 0 => out.push(format!(
                    "terminal {}: sink role with positive balance {b}",
                    self.network.node_name(term.node)
                )),
                _ => {}
            }
        }
        if self.terminals.len() > MAX_TERMINALS {
            out.push(format!("{} terminals exceed the supported maximum {MAX_TERMINALS}", self.terminals.len()));
        }
        // Arithmetic headroom: every cost/value the solver forms stays within i64.
        let surrogate = self.capacity_surrogate() as i128;
        let horizon = self.horizon.unwrap_or(1).max(1) as i128;
        let tau: i128 = self
            .network
            .arcs
            .iter()
            .map(|a| a.transit as i128)
            .sum::<i128>()
            .max(1);
        let bound = surrogate
            .saturating_mul(horizon + tau)
            .saturating_mul(self.network.arc_count() as i128 + 2);
        if bound > (Value::MAX / 8) as i128 {
            out.push("instance magnitudes too large for exact 64-bit arithmetic".to_string());
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn horizon_or_err(&self) -> Result<Time> {
        self.horizon.ok_or_else(|| Error::Contract("instance has no time horizon".into()))
    }

    pub fn with_horizon(&self, horizon: Time) -> Self {
        let mut out = self.clone();
        out.horizon = Some(horizon);
        out
    }

    /// Loads an instance from the JSON file format.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile::from_instance(self);
        serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
    }
}

fn base_max_capacity(network: &DynamicNetwork, balances: &[Value]) -> Value {
    let finite_max = network
        .arcs
        .iter()
        .filter(|a| !a.is_infinite())
        .map(|a| a.capacity)
        .max();
    match finite_max {
        Some(u) if u > 0 => u,
        _ => balances.iter().filter(|&&b| b > 0).sum::<Value>().max(1),
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    nodes: Vec<String>,
    arcs: Vec<ArcFile>,
    balances: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<Time>,
}

#[derive(Serialize, Deserialize)]
struct ArcFile {
    id: usize,
    tail: String,
    head: String,
    capacity: CapacityField,
    transit: Time,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CapacityField {
    Finite(Value),
    Symbol(String),
}

impl InstanceFile {
    fn into_instance(self) -> Result<TransshipmentInstance> {
        let mut network = DynamicNetwork { nodes: self.nodes, arcs: Vec::new() };
        {
            let names: std::collections::HashSet<&String> = network.nodes.iter().collect();
            if names.len() != network.nodes.len() {
                return Err(Error::Parse("duplicate node names".into()));
            }
        }
        let mut arcs = Vec::with_capacity(self.arcs.len());
        for a in self.arcs {
            let tail = network
                .node_index(&a.tail)
                .ok_or_else(|| Error::Parse(format!("arc {}: unknown tail node {:?}", a.id, a.tail)))?;
            let head = network
                .node_index(&a.head)
                .ok_or_else(|| Error::Parse(format!("arc {}: unknown head node {:?}", a.id, a.head)))?;
            let capacity = match a.capacity {
                CapacityField::Finite(v) => v,
                CapacityField::Symbol(s) if s == "inf" => U_INF,
                CapacityField::Symbol(s) => {
                    return Err(Error::Parse(format!("arc {}: bad capacity {s:?}", a.id)))
                }
            };
            arcs.push(Arc { id: a.id, tail, head, capacity, transit: a.transit });
        }
        arcs.sort_by_key(|a| a.id);
        network.arcs = arcs;
        let mut balances = vec![0; network.node_count()];
        for (name, b) in self.balances {
            let node = network
                .node_index(&name)
                .ok_or_else(|| Error::Parse(format!("balance for unknown node {name:?}")))?;
            balances[node.0] = b;
        }
        Ok(TransshipmentInstance::from_parts(network, balances, self.horizon))
    }

    fn from_instance(inst: &TransshipmentInstance) -> InstanceFile {
        InstanceFile {
            nodes: inst.network.nodes.clone(),
            arcs: inst
                .network
                .arcs
                .iter()
                .map(|a| ArcFile {
                    id: a.id,
                    tail: inst.network.node_name(a.tail).to_string(),
                    head: inst.network.node_name(a.head).to_string(),
                    capacity: if a.is_infinite() {
                        CapacityField::Symbol("inf".into())
                    } else {
                        CapacityField::Finite(a.capacity)
                    },
                    transit: a.transit,
                })
                .collect(),
            balances: inst
                .network
                .nodes
                .iter()
                .enumerate()
                .filter(|(i, _)| inst.balances[*i] != 0)
                .map(|(i, n)| (n.clone(), inst.balances[i]))
                .collect(),
            horizon: inst.horizon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::instance_i1;

    #[test]
    fn empty_instance_validates() {
        let inst = TransshipmentInstance::from_parts(
            DynamicNetwork { nodes: vec!["a".into()], arcs: vec![] },
            vec![0],
            Some(1),
        );
        assert!(inst.validate().is_empty());
        assert!(inst.terminals.is_empty());
    }

    #[test]
    fn unbalanced_instance_is_flagged() {
        let inst = TransshipmentInstance::from_parts(
            DynamicNetwork { nodes: vec!["s".into(), "t".into()], arcs: vec![] },
            vec![3, -2],
            Some(1),
        );
        let violations = inst.validate();
        assert!(violations.iter().any(|v| v.contains("sum to 1")), "{violations:?}");
    }

    #[test]
    fn negative_capacity_is_flagged() {
        let mut inst = instance_i1(Some(4));
        inst.network.arcs[0].capacity = -1;
        let violations = inst.validate();
        assert!(violations.iter().any(|v| v.contains("negative capacity")), "{violations:?}");
    }

    #[test]
    fn net_balance_examples() {
        let inst = instance_i1(Some(4));
        assert_eq!(inst.net_balance(TerminalSet::EMPTY).unwrap(), 0);
        // terminal 0 is s (first node with nonzero balance), terminal 1 is t
        assert_eq!(inst.net_balance(TerminalSet::singleton(TerminalId(0))).unwrap(), 4);
        assert_eq!(inst.net_balance(inst.all_terminals()).unwrap(), 0);
    }

    #[test]
    fn net_balance_rejects_foreign_bits() {
        let inst = instance_i1(Some(4));
        let bad = TerminalSet(0b100); // only 2 terminals exist
        assert!(inst.net_balance(bad).is_err());
    }

    #[test]
    fn net_balance_is_additive_on_disjoint_sets() {
        let inst = instance_i1(Some(4));
        let a = TerminalSet::singleton(TerminalId(0));
        let b = TerminalSet::singleton(TerminalId(1));
        assert_eq!(
            inst.net_balance(a.union(b)).unwrap(),
            inst.net_balance(a).unwrap() + inst.net_balance(b).unwrap()
        );
    }

    #[test]
    fn json_round_trip_preserves_infinite_capacity() {
        let json = r#"{"nodes": ["a","b"],
            "arcs": [{"id":0,"tail":"a","head":"b","capacity":"inf","transit":0}],
            "balances": {"a":1,"b":-1}, "horizon": 2}"#;
        let inst = TransshipmentInstance::from_json(json).unwrap();
        assert!(inst.network.arcs[0].is_infinite());
        let back = TransshipmentInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn set_algebra_is_exact() {
        let a = TerminalSet::from_ids([TerminalId(0), TerminalId(2)]);
        let b = TerminalSet::from_ids([TerminalId(2), TerminalId(3)]);
        assert_eq!(a.union(b), TerminalSet::from_ids([TerminalId(0), TerminalId(2), TerminalId(3)]));
        assert_eq!(a.intersection(b), TerminalSet::singleton(TerminalId(2)));
        assert_eq!(a.difference(b), TerminalSet::singleton(TerminalId(0)));
        assert!(a.intersection(b).is_subset_of(a));
        assert_eq!(a.len(), 2);
    }
}
