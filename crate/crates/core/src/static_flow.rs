//! Integral static min-cost circulation and max-flow, the building block for
//! every out-flow evaluation.
//!
//! Min-cost circulations use successive shortest paths with node potentials;
//! negative-cost arcs (the return arcs of out-flow reductions) are saturated
//! up front and the resulting excesses are drained along shortest residual
//! paths. Max flow is Dinic's algorithm. Both are exact on integers and
//! deterministic: adjacency is scanned in arc insertion order and shortest
//! path ties resolve by heap order over (distance, node).

use crate::{Value, U_INF};

#[derive(Debug, Clone)]
pub struct StaticArc {
    pub tail: usize,
    pub head: usize,
    pub capacity: Value,
    pub cost: Value,
}

#[derive(Debug, Clone)]
pub struct StaticGraph {
    pub node_count: usize,
    pub arcs: Vec<StaticArc>,
}

impl StaticGraph {
    pub fn new(node_count: usize) -> Self {
        StaticGraph { node_count, arcs: Vec::new() }
    }

    pub fn add_arc(&mut self, tail: usize, head: usize, capacity: Value, cost: Value) -> usize {
        assert!(tail < self.node_count && head < self.node_count, "arc endpoint out of range");
        assert!((0..U_INF).contains(&capacity), "static capacities must be finite and nonnegative");
        self.arcs.push(StaticArc { tail, head, capacity, cost });
        self.arcs.len() - 1
    }
}

/// An integral flow on a [`StaticGraph`].
#[derive(Debug, Clone)]
pub struct StaticFlow {
    /// Flow per arc, aligned with [`StaticGraph::arcs`].
    pub flow: Vec<Value>,
    /// s-t flow value, or total flow on negative-cost (return) arcs for circulations.
    pub value: Value,
    pub cost: Value,
}

struct Residual {
    // edges stored in pairs: 2i forward of arc i, 2i+1 its reverse
    to: Vec<usize>,
    residual: Vec<Value>,
    cost: Vec<Value>,
    adjacency: Vec<Vec<usize>>,
}

impl Residual {
    fn build(graph: &StaticGraph) -> Self {
        let m = graph.arcs.len();
        let mut to = Vec::with_capacity(2 * m);
        let mut residual = Vec::with_capacity(2 * m);
        let mut cost = Vec::with_capacity(2 * m);
        let mut adjacency = vec![Vec::new(); graph.node_count];
        for arc in &graph.arcs {
            let e = to.len();
            to.push(arc.head);
            residual.push(arc.capacity);
            cost.push(arc.cost);
            to.push(arc.tail);
            residual.push(0);
            cost.push(-arc.cost);
            adjacency[arc.tail].push(e);
            adjacency[arc.head].push(e + 1);
        }
        Residual { to, residual, cost, adjacency }
    }

    fn tail(&self, edge: usize) -> usize {
        self.to[edge ^ 1]
    }
}

const UNREACHED: Value = Value::MAX / 2;

/// Computes an integral min-cost circulation.
///
/// Negative costs are expected only on designated return arcs; the zero
/// circulation is always feasible, so this cannot fail.
pub fn min_cost_circulation(graph: &StaticGraph) -> StaticFlow {
    let n = graph.node_count;
    let mut res = Residual::build(graph);
    let mut excess = vec![0 as Value; n];

    for (i, arc) in graph.arcs.iter().enumerate() {
        if arc.cost < 0 && arc.capacity > 0 {
            res.residual[2 * i] = 0;
            res.residual[2 * i + 1] = arc.capacity;
            excess[arc.tail] -= arc.capacity;
            excess[arc.head] += arc.capacity;
        }
    }

    // After saturation every residual edge has nonnegative cost, so zero
    // potentials are valid.
    let mut pi = vec![0 as Value; n];
    let mut dist = vec![UNREACHED; n];
    let mut parent = vec![usize::MAX; n];

    while let Some(src) = (0..n).find(|&v| excess[v] > 0) {
        dijkstra(&res, &pi, src, &mut dist, &mut parent);
        let target = (0..n)
            .filter(|&v| excess[v] < 0 && dist[v] < UNREACHED)
            .min_by_key(|&v| (dist[v], v))
            .expect("excess always drains back along reverse arcs");

        let mut push = excess[src].min(-excess[target]);
        let mut v = target;
        while v != src {
            let e = parent[v];
            push = push.min(res.residual[e]);
            v = res.tail(e);
        }
        debug_assert!(push > 0);
        let mut v = target;
        while v != src {
            let e = parent[v];
            res.residual[e] -= push;
            res.residual[e ^ 1] += push;
            v = res.tail(e);
        }
        excess[src] -= push;
        excess[target] += push;

        let cut = dist[target];
        for v in 0..n {
            pi[v] += dist[v].min(cut);
        }
    }

    collect(graph, &res)
}

fn dijkstra(res: &Residual, pi: &[Value], src: usize, dist: &mut [Value], parent: &mut [usize]) {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    dist.fill(UNREACHED);
    parent.fill(usize::MAX);
    dist[src] = 0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0 as Value, src)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &e in &res.adjacency[u] {
            if res.residual[e] <= 0 {
                continue;
            }
            let v = res.to[e];
            let reduced = res.cost[e] + pi[u] - pi[v];
            debug_assert!(reduced >= 0, "potentials must keep reduced costs nonnegative");
            let nd = d + reduced;
            if nd < dist[v] {
                dist[v] = nd;
                parent[v] = e;
                heap.push(Reverse((nd, v)));
            }
        }
    }
}

fn collect(graph: &StaticGraph, res: &Residual) -> StaticFlow {
    let mut flow = vec![0 as Value; graph.arcs.len()];
    let mut cost = 0;
    let mut value = 0;
    for (i, arc) in graph.arcs.iter().enumerate() {
        flow[i] = res.residual[2 * i + 1];
        cost += flow[i] * arc.cost;
        if arc.cost < 0 {
            value += flow[i];
        }
    }
    StaticFlow { flow, value, cost }
}

/// Integral maximum s-t flow via Dinic's algorithm.
pub fn max_flow(graph: &StaticGraph, source: usize, sink: usize) -> StaticFlow {
    assert!(source < graph.node_count && sink < graph.node_count);
    let mut res = Residual::build(graph);
    let mut value = 0;
    if source != sink {
        let mut level = vec![u32::MAX; graph.node_count];
        let mut iter = vec![0usize; graph.node_count];
        loop {
            if !bfs_levels(&res, source, sink, &mut level) {
                break;
            }
            iter.fill(0);
            loop {
                let pushed = dfs_push(&mut res, &level, &mut iter, source, sink, U_INF);
                if pushed == 0 {
                    break;
                }
                value += pushed;
            }
        }
    }
    let mut out = collect(graph, &res);
    out.value = value;
    out
}

fn bfs_levels(res: &Residual, source: usize, sink: usize, level: &mut [u32]) -> bool {
    use std::collections::VecDeque;
    level.fill(u32::MAX);
    level[source] = 0;
    let mut queue = VecDeque::new();
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        for &e in &res.adjacency[u] {
            let v = res.to[e];
            if res.residual[e] > 0 && level[v] == u32::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    level[sink] != u32::MAX
}

fn dfs_push(
    res: &mut Residual,
    level: &[u32],
    iter: &mut [usize],
    u: usize,
    sink: usize,
    limit: Value,
) -> Value {
    if u == sink {
        return limit;
    }
    while iter[u] < res.adjacency[u].len() {
        let e = res.adjacency[u][iter[u]];
        let v = res.to[e];
        if res.residual[e] > 0 && level[v] == level[u] + 1 {
            let pushed = dfs_push(res, level, iter, v, sink, limit.min(res.residual[e]));
            if pushed > 0 {
                res.residual[e] -= pushed;
                res.residual[e ^ 1] += pushed;
                return pushed;
            }
        }
        iter[u] += 1;
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive reference: minimum cost over all integral circulations.
    /// Only usable on graphs with a handful of arcs and small capacities.
    pub fn brute_min_cost_circulation(graph: &StaticGraph) -> Value {
        fn rec(graph: &StaticGraph, i: usize, net: &mut [Value], cost: Value, best: &mut Value) {
            if i == graph.arcs.len() {
                if net.iter().all(|&x| x == 0) {
                    *best = (*best).min(cost);
                }
                return;
            }
            let arc = &graph.arcs[i];
            for f in 0..=arc.capacity {
                net[arc.tail] -= f;
                net[arc.head] += f;
                rec(graph, i + 1, net, cost + f * arc.cost, best);
                net[arc.tail] += f;
                net[arc.head] -= f;
            }
        }
        let mut net = vec![0; graph.node_count];
        let mut best = 0; // zero circulation
        rec(graph, 0, &mut net, 0, &mut best);
        best
    }

    /// Exhaustive reference: minimum capacity over all s-t cuts.
    pub fn brute_min_cut(graph: &StaticGraph, source: usize, sink: usize) -> Value {
        let n = graph.node_count;
        assert!(n <= 20);
        let mut best = Value::MAX;
        for mask in 0u32..(1 << n) {
            if mask >> source & 1 == 0 || mask >> sink & 1 == 1 {
                continue;
            }
            let cut: Value = graph
                .arcs
                .iter()
                .filter(|a| mask >> a.tail & 1 == 1 && mask >> a.head & 1 == 0)
                .map(|a| a.capacity)
                .sum();
            best = best.min(cut);
        }
        best
    }

    #[test]
    fn nonnegative_costs_mean_zero_circulation() {
        let mut g = StaticGraph::new(3);
        g.add_arc(0, 1, 5, 2);
        g.add_arc(1, 2, 5, 0);
        g.add_arc(2, 0, 5, 1);
        let out = min_cost_circulation(&g);
        assert_eq!(out.cost, 0);
        assert!(out.flow.iter().all(|&f| f == 0));
    }

    #[test]
    fn single_negative_return_arc() {
        // s -> t capacity 5 cost 1, return t -> s cost -3
        let mut g = StaticGraph::new(2);
        g.add_arc(0, 1, 5, 1);
        g.add_arc(1, 0, 100, -3);
        let out = min_cost_circulation(&g);
        assert_eq!(out.value, 5);
        assert_eq!(out.cost, 5 - 15);
        assert_eq!(brute_min_cost_circulation(&g), -10);
    }

    /// Out-flow reduction graph of the running 3-node example with X = {s}
    /// and horizon 4. The expected optimum is frozen from the exhaustive
    /// circulation enumeration below.
    #[test]
    fn running_example_outflow_graph() {
        // nodes: 0=s, 1=v, 2=t, 3=super-source, 4=super-sink
        let mut g = StaticGraph::new(5);
        g.add_arc(0, 1, 2, 1);
        g.add_arc(1, 2, 2, 1);
        g.add_arc(3, 0, 8, 0);
        g.add_arc(2, 4, 8, 0);
        g.add_arc(4, 3, 8, -4);
        let brute = brute_min_cost_circulation(&g);
        assert_eq!(brute, -4);
        let out = min_cost_circulation(&g);
        assert_eq!(out.cost, brute);
        assert_eq!(out.value, 2);
    }

    type ArcSpec = (usize, usize, Value, Value);

    #[test]
    fn circulation_matches_enumeration_on_small_graphs() {
        // a few fixed small graphs with negative return arcs
        let cases: Vec<(usize, Vec<ArcSpec>)> = vec![
            (3, vec![(0, 1, 2, 1), (1, 2, 3, 0), (2, 0, 3, -2)]),
            (4, vec![(0, 1, 2, 1), (0, 2, 1, 3), (1, 3, 2, 1), (2, 3, 2, 0), (3, 0, 3, -3)]),
            (4, vec![(0, 1, 3, 0), (1, 2, 2, 2), (2, 1, 2, 0), (2, 3, 3, 1), (3, 0, 2, -4), (1, 3, 1, 2)]),
        ];
        for (n, arcs) in cases {
            let mut g = StaticGraph::new(n);
            for (t, h, u, c) in arcs {
                g.add_arc(t, h, u, c);
            }
            let out = min_cost_circulation(&g);
            assert_eq!(out.cost, brute_min_cost_circulation(&g));
            assert!(out.flow.iter().zip(&g.arcs).all(|(&f, a)| f >= 0 && f <= a.capacity));
        }
    }

    #[test]
    fn max_flow_single_arc() {
        let mut g = StaticGraph::new(2);
        g.add_arc(0, 1, 7, 0);
        assert_eq!(max_flow(&g, 0, 1).value, 7);
    }

    #[test]
    fn max_flow_parallel_arcs() {
        let mut g = StaticGraph::new(2);
        g.add_arc(0, 1, 2, 0);
        g.add_arc(0, 1, 3, 0);
        assert_eq!(max_flow(&g, 0, 1).value, 5);
    }

    #[test]
    fn max_flow_diamond_matches_cut_enumeration() {
        let mut g = StaticGraph::new(4);
        g.add_arc(0, 1, 2, 0);
        g.add_arc(0, 2, 2, 0);
        g.add_arc(1, 3, 2, 0);
        g.add_arc(2, 3, 2, 0);
        g.add_arc(1, 2, 1, 0);
        assert_eq!(brute_min_cut(&g, 0, 3), 4);
        assert_eq!(max_flow(&g, 0, 3).value, 4);
    }

    #[test]
    fn max_flow_equals_min_cut_on_pseudorandom_graphs() {
        // deterministic splitmix-style sampling
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state = state.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^ (z >> 31)
        };
        for _ in 0..60 {
            let n = 3 + (next() % 6) as usize; // up to 8 nodes
            let m = 2 + (next() % 12) as usize;
            let mut g = StaticGraph::new(n);
            for _ in 0..m {
                let t = (next() % n as u64) as usize;
                let h = (next() % n as u64) as usize;
                let cap = (next() % 4) as Value;
                g.add_arc(t, h, cap, 0);
            }
            let flow = max_flow(&g, 0, n - 1);
            assert_eq!(flow.value, brute_min_cut(&g, 0, n - 1), "graph: {:?}", g.arcs);
            for (f, a) in flow.flow.iter().zip(&g.arcs) {
                assert!(*f >= 0 && *f <= a.capacity);
            }
        }
    }

    #[test]
    fn self_loops_carry_no_flow() {
        let mut g = StaticGraph::new(2);
        g.add_arc(0, 0, 5, 0);
        g.add_arc(0, 1, 3, 0);
        let out = max_flow(&g, 0, 1);
        assert_eq!(out.value, 3);
        assert_eq!(out.flow[0], 0);
    }
}
