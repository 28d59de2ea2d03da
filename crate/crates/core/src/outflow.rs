//! Maximum out-flow o(X) and the violation function v(X) = o(X) − b(X), the
//! evaluation oracle behind every submodular minimization.
//!
//! o(X) is the value of the maximum flow over time from the sources in X to
//! the sinks outside X. It is computed statically: super-source arcs feed the
//! selected sources, super-sink arcs drain the unselected sinks, and a return
//! arc of cost −T closes the circulation; the negated min-cost circulation
//! cost is the out-flow value.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::model::{TerminalSet, TransshipmentInstance};
use crate::static_flow::{min_cost_circulation, StaticGraph};
use crate::{Error, Result, Role, Time, Value};

/// Single out-flow evaluation, one min-cost circulation.
pub(crate) fn compute_outflow(inst: &TransshipmentInstance, x: TerminalSet, horizon: Time) -> Value {
    if horizon <= 0 {
        return 0;
    }
    let n = inst.network.node_count();
    let surrogate = inst.capacity_surrogate();
    // super and return arcs may carry the whole circulation
    let big = surrogate.saturating_mul(inst.network.arc_count() as Value + 1);
    let mut graph = StaticGraph::new(n + 2);
    let super_source = n;
    let super_sink = n + 1;
    for arc in &inst.network.arcs {
        let capacity = if arc.is_infinite() { surrogate } else { arc.capacity };
        graph.add_arc(arc.tail.0, arc.head.0, capacity, arc.transit);
    }
    for t in inst.terminal_ids() {
        let term = inst.terminal(t);
        match term.role {
            Role::Source if x.contains(t) => {
                graph.add_arc(super_source, term.node.0, big, 0);
            }
            Role::Sink if !x.contains(t) => {
                graph.add_arc(term.node.0, super_sink, big, 0);
            }
            _ => {}
        }
    }
    graph.add_arc(super_sink, super_source, big, -horizon);
    let circulation = min_cost_circulation(&graph);
    let value = -circulation.cost;
    debug_assert!(value >= 0, "out-flow values are nonnegative");
    value
}

/// Memoizing out-flow oracle for one immutable instance.
///
/// Values are cached per (terminal set, horizon); the shared call counter
/// counts actual min-cost-flow solves, not cache hits.
pub struct OutflowOracle<'a> {
    inst: &'a TransshipmentInstance,
    cache: RefCell<HashMap<(u64, Time), Value>>,
    mcf_calls: Rc<Cell<u64>>,
}

impl<'a> OutflowOracle<'a> {
    pub fn new(inst: &'a TransshipmentInstance) -> Self {
        Self::with_counter(inst, Rc::new(Cell::new(0)))
    }

    pub fn with_counter(inst: &'a TransshipmentInstance, mcf_calls: Rc<Cell<u64>>) -> Self {
        OutflowOracle { inst, cache: RefCell::new(HashMap::new()), mcf_calls }
    }

    pub fn instance(&self) -> &TransshipmentInstance {
        self.inst
    }

    pub fn mcf_calls(&self) -> u64 {
        self.mcf_calls.get()
    }

    /// o(X) at an explicit horizon.
    pub fn outflow_at(&self, x: TerminalSet, horizon: Time) -> Result<Value> {
        if !x.is_subset_of(self.inst.all_terminals()) {
            return Err(Error::Contract(format!(
                "{x} is not a subset of the terminal universe"
            )));
        }
        if let Some(&v) = self.cache.borrow().get(&(x.0, horizon)) {
            return Ok(v);
        }
        let v = compute_outflow(self.inst, x, horizon);
        self.mcf_calls.set(self.mcf_calls.get() + 1);
        self.cache.borrow_mut().insert((x.0, horizon), v);
        Ok(v)
    }

    /// o(X) at the instance horizon.
    pub fn outflow(&self, x: TerminalSet) -> Result<Value> {
        self.outflow_at(x, self.inst.horizon_or_err()?)
    }

    /// v(X) = o(X) − b(X) at an explicit horizon.
    pub fn violation_at(&self, x: TerminalSet, horizon: Time) -> Result<Value> {
        Ok(self.outflow_at(x, horizon)? - self.inst.net_balance(x)?)
    }

    pub fn violation(&self, x: TerminalSet) -> Result<Value> {
        self.violation_at(x, self.inst.horizon_or_err()?)
    }

    pub fn is_tight(&self, x: TerminalSet) -> Result<bool> {
        Ok(self.violation(x)? == 0)
    }
}

/// One-shot o(X) without an oracle.
pub fn max_outflow(inst: &TransshipmentInstance, x: TerminalSet, horizon: Time) -> Result<Value> {
    OutflowOracle::new(inst).outflow_at(x, horizon)
}

/// One-shot v(X) without an oracle.
pub fn violation(inst: &TransshipmentInstance, x: TerminalSet, horizon: Time) -> Result<Value> {
    OutflowOracle::new(inst).violation_at(x, horizon)
}
