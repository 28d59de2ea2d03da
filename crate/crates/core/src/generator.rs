//! Seeded random instances for tests and benchmarks, plus the running
//! 3-node example used throughout the test suite.
//!
//! Instances are built Erdős–Rényi-style over a connectivity backbone;
//! balances are distributed so that every source reaches a sink, and the
//! horizon is pinned to a value at which the instance is provably feasible
//! (capacities are scaled up in the rare case the sampled structure is too
//! tight). Identical seeds yield identical instances.

use crate::model::{DynamicNetwork, TransshipmentInstance};
use crate::sfm;
use crate::{Time, Value};

/// SplitMix64: tiny, fast, and stable across platforms and releases.
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    pub fn value_in(&mut self, lo: Value, hi: Value) -> Value {
        lo + self.below((hi - lo + 1) as u64) as Value
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorProfile {
    pub max_nodes: usize,
    pub max_arcs: usize,
    pub max_terminals: usize,
    pub capacity_range: (Value, Value),
    pub transit_range: (Time, Time),
    pub max_horizon: Time,
    pub max_supply_per_source: Value,
}

impl Default for GeneratorProfile {
    fn default() -> Self {
        GeneratorProfile {
            max_nodes: 8,
            max_arcs: 16,
            max_terminals: 4,
            capacity_range: (1, 10),
            transit_range: (0, 5),
            max_horizon: 10,
            max_supply_per_source: 6,
        }
    }
}

/// The running example: s→v→t with capacity 2 and transit 1 on both arcs,
/// b(s) = 4, b(t) = −4. Feasible exactly for horizons ≥ 4.
pub fn instance_i1(horizon: Option<Time>) -> TransshipmentInstance {
    let json = format!(
        r#"{{"nodes": ["s","v","t"],
             "arcs": [{{"id":0,"tail":"s","head":"v","capacity":2,"transit":1}},
                      {{"id":1,"tail":"v","head":"t","capacity":2,"transit":1}}],
             "balances": {{"s":4,"t":-4}}{}}}"#,
        horizon.map_or(String::new(), |t| format!(r#", "horizon": {t}"#))
    );
    TransshipmentInstance::from_json(&json).expect("fixture parses")
}

/// Deterministic random instance, feasible at its recorded horizon.
pub fn random_instance(seed: u64, profile: &GeneratorProfile) -> TransshipmentInstance {
    let mut rng = SplitMix64::new(seed.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(1));
    let n = 2 + rng.below(profile.max_nodes as u64 - 1) as usize;
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();

    let k = 2 + rng.below(profile.max_terminals.min(n) as u64 - 1) as usize;
    let mut picks: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut picks);
    let terminal_nodes: Vec<usize> = picks[..k].to_vec();
    // at least one source and one sink, the rest random
    let mut is_source: Vec<bool> = vec![true, false];
    for _ in 2..k {
        is_source.push(rng.below(2) == 0);
    }
    rng.shuffle(&mut is_source);

    let mut network = DynamicNetwork { nodes, arcs: Vec::new() };
    let sample_arc = |network: &mut DynamicNetwork, rng: &mut SplitMix64, tail: usize, head: usize| {
        let capacity = rng.value_in(profile.capacity_range.0, profile.capacity_range.1);
        let transit = rng.value_in(profile.transit_range.0, profile.transit_range.1);
        network.push_arc(crate::NodeId(tail), crate::NodeId(head), capacity, transit);
    };

    // backbone chain keeps the graph connected
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    for pair in perm.windows(2) {
        sample_arc(&mut network, &mut rng, pair[0], pair[1]);
    }
    let reserved_fixes = k;
    let extras_budget = profile.max_arcs.saturating_sub(n - 1 + reserved_fixes);
    let extras = if extras_budget == 0 { 0 } else { rng.below(extras_budget as u64 + 1) as usize };
    for _ in 0..extras {
        let tail = rng.below(n as u64) as usize;
        let head = rng.below(n as u64) as usize;
        if tail != head {
            sample_arc(&mut network, &mut rng, tail, head);
        }
    }
    // every source must reach some sink
    let sinks: Vec<usize> = terminal_nodes
        .iter()
        .zip(&is_source)
        .filter(|(_, &src)| !src)
        .map(|(&v, _)| v)
        .collect();
    for (&v, &src) in terminal_nodes.iter().zip(&is_source) {
        if src && !reaches_any(&network, v, &sinks) {
            let target = sinks[rng.below(sinks.len() as u64) as usize];
            sample_arc(&mut network, &mut rng, v, target);
        }
    }

    // supplies routed against demand the source can actually reach, so that
    // a feasible horizon exists once capacities are generous enough
    let mut balances = vec![0 as Value; n];
    for (&s, &src) in terminal_nodes.iter().zip(&is_source) {
        if !src {
            continue;
        }
        let reachable: Vec<usize> =
            sinks.iter().copied().filter(|&t| reaches_any(&network, s, &[t])).collect();
        debug_assert!(!reachable.is_empty(), "connectivity fixes ran first");
        let supply = rng.value_in(1, profile.max_supply_per_source);
        balances[s] += supply;
        for _ in 0..supply {
            let t = reachable[rng.below(reachable.len() as u64) as usize];
            balances[t] -= 1;
        }
    }

    let mut inst = TransshipmentInstance::from_parts(network, balances, None);
    // pin a horizon at which the instance is feasible, scaling capacities up
    // if the sampled structure is too tight
    for _round in 0..8 {
        if let Some(t) = minimal_feasible_horizon(&inst, profile.max_horizon) {
            let slack = rng.below(3) as Time;
            inst.horizon = Some((t + slack).min(profile.max_horizon));
            debug_assert!(inst.validate().is_empty(), "{:?}", inst.validate());
            return inst;
        }
        for arc in &mut inst.network.arcs {
            arc.capacity *= 2;
        }
    }
    // guaranteed-feasible fallback: instantaneous arcs wide enough for the
    // whole supply
    let total = inst.total_supply();
    for arc in &mut inst.network.arcs {
        arc.capacity = total;
        arc.transit = 0;
    }
    inst.horizon = Some(1);
    debug_assert!(sfm::is_feasible(&inst).expect("fallback is checkable").0);
    inst
}

fn minimal_feasible_horizon(inst: &TransshipmentInstance, cap: Time) -> Option<Time> {
    (1..=cap).find(|&t| {
        sfm::is_feasible(&inst.with_horizon(t)).map(|(ok, _)| ok).unwrap_or(false)
    })
}

fn reaches_any(network: &DynamicNetwork, from: usize, targets: &[usize]) -> bool {
    let n = network.node_count();
    let mut seen = vec![false; n];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(u) = stack.pop() {
        if targets.contains(&u) {
            return true;
        }
        for arc in &network.arcs {
            if arc.tail.0 == u && !seen[arc.head.0] {
                seen[arc.head.0] = true;
                stack.push(arc.head.0);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let profile = GeneratorProfile::default();
        let a = random_instance(42, &profile);
        let b = random_instance(42, &profile);
        assert_eq!(a, b);
        let c = random_instance(43, &profile);
        assert_ne!(a, c);
    }

    #[test]
    fn generated_instances_are_valid_and_feasible() {
        let profile = GeneratorProfile::default();
        for seed in 0..80 {
            let inst = random_instance(seed, &profile);
            assert!(inst.validate().is_empty(), "seed {seed}: {:?}", inst.validate());
            assert!(inst.network.node_count() <= profile.max_nodes);
            assert!(inst.terminal_count() <= profile.max_terminals);
            assert!(inst.horizon.unwrap() <= profile.max_horizon);
            assert!(
                sfm::is_feasible(&inst).unwrap().0,
                "seed {seed} generated an infeasible instance"
            );
        }
    }

    #[test]
    fn corpus_has_both_roles_first() {
        // the acceptance corpus needs both source-led and sink-led gaps
        let profile = GeneratorProfile::default();
        let mut source_first = 0;
        let mut sink_first = 0;
        for seed in 0..80 {
            let inst = random_instance(seed, &profile);
            match inst.terminals[0].role {
                crate::Role::Source => source_first += 1,
                crate::Role::Sink => sink_first += 1,
            }
        }
        assert!(source_first > 10 && sink_first > 10);
    }
}
