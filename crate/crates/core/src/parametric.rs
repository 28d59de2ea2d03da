//! Capacity- and transit-parametric instances, the restricted violation
//! functions on the domain between two tight sets, and the parametric
//! searches that find the extreme feasible parameter.
//!
//! Two searches are provided per parameter: a strong-map walk whose check
//! step shrinks (source case) or grows (sink case) the minimal minimizer,
//! bounding the number of submodular minimizations by the domain size, and a
//! plain binary search baseline that pays one full minimization per probe.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::model::{NodeId, TerminalId, TerminalOrigin, TerminalSet, TransshipmentInstance};
use crate::outflow::{compute_outflow, OutflowOracle};
use crate::sfm::{self, SetFunction};
use crate::{Error, Result, Role, Time, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Arc capacity α on a zero-transit attachment arc.
    Alpha,
    /// Transit time δ on a unit-capacity attachment arc.
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStrategy {
    StrongMap,
    Baseline,
}

/// A parametric search problem: a feasible instance, two tight sets
/// Q ⊂ R ⊆ S, and a drained terminal in R∖Q whose balance is being shifted
/// onto a new filled terminal.
#[derive(Debug, Clone)]
pub struct ParametricContext {
    pub instance: TransshipmentInstance,
    pub q: TerminalSet,
    pub r: TerminalSet,
    pub drained: TerminalId,
    pub param: ParamKind,
}

impl ParametricContext {
    pub fn new(
        instance: TransshipmentInstance,
        q: TerminalSet,
        r: TerminalSet,
        drained: TerminalId,
        param: ParamKind,
    ) -> Result<Self> {
        let all = instance.all_terminals();
        if !r.is_subset_of(all) || !q.is_subset_of(r) || q == r {
            return Err(Error::Contract(format!("need Q ⊂ R ⊆ S, got Q={q} R={r}")));
        }
        if !r.contains(drained) || q.contains(drained) {
            return Err(Error::Contract(format!("drained terminal {} not in R∖Q", drained.0)));
        }
        let ctx = ParametricContext { instance, q, r, drained, param };
        if ctx.attach_node().is_none() {
            return Err(Error::Contract(
                "the drained terminal must be a lift-time twin with an attachment node".into(),
            ));
        }
        let oracle = OutflowOracle::new(&ctx.instance);
        for (set, name) in [(q, "Q"), (r, "R")] {
            let v = oracle.violation(set)?;
            if v != 0 {
                return Err(Error::Contract(format!("{name} is not tight: v = {v}")));
            }
        }
        let guard_set = match ctx.kind() {
            Role::Source => q.with(drained),
            Role::Sink => r.without(drained),
        };
        let v = oracle.violation(guard_set)?;
        if v <= 0 {
            return Err(Error::Contract(format!(
                "guard set must be slack (source: Q∪{{š}}, sink: R∖{{š}}), got v = {v}"
            )));
        }
        Ok(ctx)
    }

    pub fn kind(&self) -> Role {
        self.instance.terminal(self.drained).role
    }

    fn attach_node(&self) -> Option<NodeId> {
        match self.instance.terminal(self.drained).origin {
            TerminalOrigin::Drained { of } => Some(of),
            _ => None,
        }
    }

    pub fn attach(&self) -> NodeId {
        self.attach_node().expect("validated at construction")
    }

    /// Ground set of the restricted violation function: R∖Q without the
    /// drained terminal, which is implicitly excluded (source case) or
    /// implicitly added (sink case) by the evaluation base instead.
    pub fn domain_set(&self) -> TerminalSet {
        self.r.difference(self.q).without(self.drained)
    }

    pub fn domain(&self) -> Vec<TerminalId> {
        self.domain_set().iter().collect()
    }

    pub fn horizon(&self) -> Time {
        self.instance.horizon.expect("parametric contexts require a horizon")
    }

    /// Infeasible-or-maximal upper bound for α: node count times largest
    /// finite capacity, both taken from the base network the pipeline
    /// started from.
    pub fn alpha_max(&self) -> Value {
        (self.instance.base_node_count as Value) * self.instance.base_max_capacity
    }

    pub fn extend(&self, p: Value) -> Result<EvalAt> {
        self.extend_counted(p, Rc::new(Cell::new(0)))
    }

    /// Builds the parametric instance at parameter value `p`: a new filled
    /// terminal ŝ attached by an (α, 0) or (1, δ) arc, with the balance shift
    /// Δ = o(anchor ∪ {ŝ}) − o(anchor) applied (anchor is Q for sources and R
    /// for sinks). The input instance is never mutated.
    pub fn extend_counted(&self, p: Value, counter: Rc<Cell<u64>>) -> Result<EvalAt> {
        if p < 0 {
            return Err(Error::Contract(format!("parameter must be nonnegative, got {p}")));
        }
        let inst = &self.instance;
        let kind = self.kind();
        let attach = self.attach();
        let mut network = inst.network.clone();
        let generation = inst
            .terminals
            .iter()
            .filter(|t| matches!(t.origin, TerminalOrigin::Filled { attach: a, .. } if a == attach))
            .count() as u32
            + 1;
        let attach_name = network.node_name(attach).to_string();
        let node = network.push_node(&format!("+{attach_name}.{generation}"));
        let (capacity, transit) = match self.param {
            ParamKind::Alpha => (p, 0),
            ParamKind::Delta => (1, p),
        };
        match kind {
            Role::Source => network.push_arc(node, attach, capacity, transit),
            Role::Sink => network.push_arc(attach, node, capacity, transit),
        };
        let mut balances = inst.balances.clone();
        balances.push(0);
        let mut terminals = inst.terminals.clone();
        terminals.push(crate::model::Terminal {
            node,
            role: kind,
            origin: TerminalOrigin::Filled { attach, generation },
        });
        let new_terminal = TerminalId(terminals.len() - 1);
        let mut at = EvalAt {
            instance: TransshipmentInstance {
                network,
                balances,
                terminals,
                horizon: inst.horizon,
                base_node_count: inst.base_node_count,
                base_max_capacity: inst.base_max_capacity,
            },
            new_terminal,
            delta: 0,
            cache: RefCell::new(HashMap::new()),
            counter,
        };
        // Δ is balance-independent, so the cache stays valid across the shift
        let anchor = match kind {
            Role::Source => self.q,
            Role::Sink => self.r,
        };
        let delta = at.outflow(anchor.with(new_terminal))? - at.outflow(anchor)?;
        match kind {
            Role::Source if delta < 0 => {
                return Err(Error::Internal(format!("source shift Δ = {delta} < 0")))
            }
            Role::Sink if delta > 0 => {
                return Err(Error::Internal(format!("sink shift Δ = {delta} > 0")))
            }
            _ => {}
        }
        at.delta = delta;
        at.instance.balances[node.0] = delta;
        let drained_node = inst.terminal(self.drained).node;
        at.instance.balances[drained_node.0] -= delta;
        Ok(at)
    }

    /// Restricted violation ṽ(X): v(Q ∪ {ŝ} ∪ X) in the source case and
    /// v(Q ∪ {š} ∪ X) in the sink case, both on the parametric instance.
    /// Violated sets always contain ŝ and never š for sources, and the
    /// mirror for sinks, so the evaluation base bakes that structure in.
    pub fn restricted_v(&self, at: &EvalAt, x: TerminalSet) -> Result<Value> {
        if !x.is_subset_of(self.domain_set()) {
            return Err(Error::Contract(format!("{x} lies outside the restricted domain")));
        }
        let base = match self.kind() {
            Role::Source => self.q.with(at.new_terminal),
            Role::Sink => self.q.with(self.drained),
        };
        at.violation(base.union(x))
    }
}

/// A materialized parametric instance with its own out-flow cache.
pub struct EvalAt {
    pub instance: TransshipmentInstance,
    pub new_terminal: TerminalId,
    /// Balance shifted from the drained terminal onto the new one
    /// (nonnegative for sources, nonpositive for sinks).
    pub delta: Value,
    cache: RefCell<HashMap<u64, Value>>,
    counter: Rc<Cell<u64>>,
}

impl EvalAt {
    pub fn outflow(&self, x: TerminalSet) -> Result<Value> {
        if !x.is_subset_of(self.instance.all_terminals()) {
            return Err(Error::Contract(format!("{x} outside the parametric universe")));
        }
        if let Some(&v) = self.cache.borrow().get(&x.0) {
            return Ok(v);
        }
        let horizon = self.instance.horizon_or_err()?;
        let v = compute_outflow(&self.instance, x, horizon);
        self.counter.set(self.counter.get() + 1);
        self.cache.borrow_mut().insert(x.0, v);
        Ok(v)
    }

    pub fn violation(&self, x: TerminalSet) -> Result<Value> {
        Ok(self.outflow(x)? - self.instance.net_balance(x)?)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SearchStats {
    pub iterations: usize,
    pub sfm_calls: u64,
    pub mcf_calls: u64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub optimum: Value,
    pub stats: SearchStats,
    /// Minimal minimizers along the parameter walk (strong-map search only).
    pub minimizers: Vec<TerminalSet>,
}

struct Run<'a> {
    ctx: &'a ParametricContext,
    mcf: Rc<Cell<u64>>,
    sfm_calls: u64,
    memo: HashMap<Value, Rc<EvalAt>>,
}

impl<'a> Run<'a> {
    fn new(ctx: &'a ParametricContext) -> Self {
        Run { ctx, mcf: Rc::new(Cell::new(0)), sfm_calls: 0, memo: HashMap::new() }
    }

    fn at(&mut self, p: Value) -> Result<Rc<EvalAt>> {
        if !self.memo.contains_key(&p) {
            let at = self.ctx.extend_counted(p, self.mcf.clone())?;
            self.memo.insert(p, Rc::new(at));
        }
        Ok(self.memo[&p].clone())
    }

    fn rv(&mut self, p: Value, x: TerminalSet) -> Result<Value> {
        let at = self.at(p)?;
        self.ctx.restricted_v(&at, x)
    }

    /// One submodular minimization of ṽ at `p` over `base ∪ 2^ground`.
    fn minimize_over(
        &mut self,
        p: Value,
        base: TerminalSet,
        ground: &[TerminalId],
    ) -> Result<(Value, TerminalSet)> {
        let at = self.at(p)?;
        let ctx = self.ctx;
        let f = SetFunction::new(ground.to_vec(), move |x| {
            ctx.restricted_v(&at, base.union(x)).expect("domain subsets are valid")
        });
        let min = sfm::minimize(&f)?;
        self.sfm_calls += 1;
        Ok((min.value, base.union(min.minimal)))
    }

    fn full_feasible(&mut self, p: Value) -> Result<bool> {
        let domain = self.ctx.domain();
        let (v, _) = self.minimize_over(p, TerminalSet::EMPTY, &domain)?;
        Ok(v >= 0)
    }

    /// Check step: find the minimal minimizer at the new parameter, restricted
    /// by the nesting direction — subsets of the previous minimizer for
    /// sources, supersets within the domain for sinks.
    fn check_step(&mut self, p: Value, prev: TerminalSet) -> Result<(Value, TerminalSet)> {
        match self.ctx.kind() {
            Role::Source => {
                let ground: Vec<TerminalId> = prev.iter().collect();
                let (v, min) = self.minimize_over(p, TerminalSet::EMPTY, &ground)?;
                if v < 0 && !(min.is_subset_of(prev) && min != prev) {
                    return Err(Error::Internal(
                        "minimizer chain failed to shrink strictly".into(),
                    ));
                }
                Ok((v, min))
            }
            Role::Sink => {
                let ground: Vec<TerminalId> =
                    self.ctx.domain_set().difference(prev).iter().collect();
                let (v, min) = self.minimize_over(p, prev, &ground)?;
                if v < 0 && !(prev.is_subset_of(min) && min != prev) {
                    return Err(Error::Internal(
                        "minimizer chain failed to grow strictly".into(),
                    ));
                }
                Ok((v, min))
            }
        }
    }

    fn stats(&self, iterations: usize) -> SearchStats {
        SearchStats { iterations, sfm_calls: self.sfm_calls, mcf_calls: self.mcf.get() }
    }
}

fn binary_max_true(
    mut lo: Value,
    mut hi: Value,
    mut pred: impl FnMut(Value) -> Result<bool>,
) -> Result<Value> {
    // pred(lo) holds, pred(hi) does not
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn binary_min_true(
    mut lo: Value,
    mut hi: Value,
    mut pred: impl FnMut(Value) -> Result<bool>,
) -> Result<Value> {
    // pred(lo) does not hold, pred(hi) does
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Strong-map parametric search for the maximum feasible α.
///
/// Starts at the upper bound; while the current minimal minimizer is
/// violated, a jump (binary search, exploiting that ṽ^α(X) is non-increasing
/// in α on violated sets) finds the largest α keeping it nonnegative, and a
/// check minimizes at the new α over the nested sub-lattice only.
pub fn maximize_alpha(ctx: &ParametricContext) -> Result<SearchOutcome> {
    if ctx.param != ParamKind::Alpha {
        return Err(Error::Contract("maximize_alpha requires an α-parametric context".into()));
    }
    let mut run = Run::new(ctx);
    let domain = ctx.domain();
    let mut p = ctx.alpha_max();
    let (mut value, mut minimizer) = run.minimize_over(p, TerminalSet::EMPTY, &domain)?;
    let mut minimizers = vec![minimizer];
    let mut iterations = 0;
    while value < 0 {
        iterations += 1;
        if iterations > domain.len() + 1 {
            return Err(Error::Internal("parametric search exceeded its iteration bound".into()));
        }
        let anchor = minimizer;
        if run.rv(0, anchor)? < 0 {
            return Err(Error::Contract(
                "α = 0 is infeasible although the base instance was feasible".into(),
            ));
        }
        p = binary_max_true(0, p, |a| Ok(run.rv(a, anchor)? >= 0))?;
        let (v, min) = run.check_step(p, minimizer)?;
        value = v;
        minimizer = min;
        minimizers.push(minimizer);
    }
    Ok(SearchOutcome { optimum: p, stats: run.stats(iterations), minimizers })
}

/// Strong-map parametric search for the minimum feasible δ, mirroring
/// [`maximize_alpha`] with δ starting at 0 and jumping upward.
pub fn minimize_delta(ctx: &ParametricContext) -> Result<SearchOutcome> {
    if ctx.param != ParamKind::Delta {
        return Err(Error::Contract("minimize_delta requires a δ-parametric context".into()));
    }
    let mut run = Run::new(ctx);
    let domain = ctx.domain();
    let horizon = ctx.horizon();
    let mut p = 0;
    let (mut value, mut minimizer) = run.minimize_over(p, TerminalSet::EMPTY, &domain)?;
    let mut minimizers = vec![minimizer];
    let mut iterations = 0;
    while value < 0 {
        iterations += 1;
        if iterations > domain.len() + 1 {
            return Err(Error::Internal("parametric search exceeded its iteration bound".into()));
        }
        let anchor = minimizer;
        if run.rv(horizon, anchor)? < 0 {
            return Err(Error::Contract(
                "δ = T is infeasible although the attachment arc is unusable there".into(),
            ));
        }
        p = binary_min_true(p, horizon, |d| Ok(run.rv(d, anchor)? >= 0))?;
        let (v, min) = run.check_step(p, minimizer)?;
        value = v;
        minimizer = min;
        minimizers.push(minimizer);
    }
    Ok(SearchOutcome { optimum: p, stats: run.stats(iterations), minimizers })
}

/// Plain binary search on the parameter with one full restricted
/// minimization per probe. Same optimum as the strong-map searches.
pub fn baseline_search(ctx: &ParametricContext) -> Result<SearchOutcome> {
    let mut run = Run::new(ctx);
    let optimum = match ctx.param {
        ParamKind::Alpha => {
            let hi = ctx.alpha_max();
            if run.full_feasible(hi)? {
                hi
            } else {
                if !run.full_feasible(0)? {
                    return Err(Error::Contract(
                        "α = 0 is infeasible although the base instance was feasible".into(),
                    ));
                }
                binary_max_true(0, hi, |p| run.full_feasible(p))?
            }
        }
        ParamKind::Delta => {
            let horizon = ctx.horizon();
            if run.full_feasible(0)? {
                0
            } else {
                if !run.full_feasible(horizon)? {
                    return Err(Error::Contract(
                        "δ = T is infeasible although the attachment arc is unusable there".into(),
                    ));
                }
                binary_min_true(0, horizon, |p| run.full_feasible(p))?
            }
        }
    };
    Ok(SearchOutcome { optimum, stats: run.stats(0), minimizers: Vec::new() })
}

pub fn run_search(ctx: &ParametricContext, strategy: SearchStrategy) -> Result<SearchOutcome> {
    match strategy {
        SearchStrategy::StrongMap => match ctx.param {
            ParamKind::Alpha => maximize_alpha(ctx),
            ParamKind::Delta => minimize_delta(ctx),
        },
        SearchStrategy::Baseline => baseline_search(ctx),
    }
}

/// Minimal minimizer of the restricted function at parameter `p` over the
/// whole domain, with its value. Feeds the tight-chain surgery, which needs
/// the minimizer of ṽ at δ*−1.
pub fn restricted_minimal_minimizer(
    ctx: &ParametricContext,
    p: Value,
) -> Result<(Value, TerminalSet)> {
    let mut run = Run::new(ctx);
    let domain = ctx.domain();
    run.minimize_over(p, TerminalSet::EMPTY, &domain)
}

/// Exhaustive reference for tests and acceptance: scans every parameter in
/// the closed range and reports the extreme feasible value, where
/// feasibility is the restricted full-domain minimum being nonnegative.
pub fn exhaustive_optimum(ctx: &ParametricContext) -> Result<Value> {
    let mut run = Run::new(ctx);
    match ctx.param {
        ParamKind::Alpha => {
            let mut best = None;
            for p in 0..=ctx.alpha_max() {
                if run.full_feasible(p)? {
                    best = Some(p);
                } else if best.is_some() {
                    break; // feasibility is monotone decreasing in α
                }
            }
            best.ok_or_else(|| Error::Contract("no feasible α in range".into()))
        }
        ParamKind::Delta => {
            for p in 0..=ctx.horizon() {
                if run.full_feasible(p)? {
                    return Ok(p);
                }
            }
            Err(Error::Contract("no feasible δ in range".into()))
        }
    }
}
