//! Successive-shortest-path min-cost flow with Dijkstra and potentials.
//! Sized for small graphs (tie-breaking and cross-checks).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    rev: usize,
    cap: i64,
    cost: f64,
}

#[derive(Debug, Clone)]
pub struct MinCostFlow {
    graph: Vec<Vec<Arc>>,
}

#[derive(PartialEq)]
struct State {
    dist: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        Self { graph: vec![Vec::new(); nodes] }
    }

    /// Adds `from -> to`; returns a handle for [`MinCostFlow::flow_on`].
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> (usize, usize) {
        let rev_from = self.graph[to].len() + usize::from(from == to);
        let rev_to = self.graph[from].len();
        self.graph[from].push(Arc { to, rev: rev_from, cap, cost });
        self.graph[to].push(Arc { to: from, rev: rev_to, cap: 0, cost: -cost });
        (from, rev_to)
    }

    /// Flow currently carried by the edge returned from `add_edge`.
    pub fn flow_on(&self, handle: (usize, usize)) -> i64 {
        let arc = &self.graph[handle.0][handle.1];
        self.graph[arc.to][arc.rev].cap
    }

    /// Sends up to `limit` units from `s` to `t` at minimum cost.
    /// Returns `(flow, cost)`. Costs must be nonnegative.
    pub fn solve(&mut self, s: usize, t: usize, limit: i64) -> (i64, f64) {
        let n = self.graph.len();
        let mut potential = vec![0.0; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); n];
        let mut flow = 0i64;
        let mut cost = 0.0;
        let mut heap = BinaryHeap::new();
        while flow < limit {
            dist.fill(f64::INFINITY);
            dist[s] = 0.0;
            heap.push(State { dist: 0.0, node: s });
            while let Some(State { dist: d, node: u }) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for (k, arc) in self.graph[u].iter().enumerate() {
                    if arc.cap <= 0 {
                        continue;
                    }
                    let reduced = (arc.cost + potential[u] - potential[arc.to]).max(0.0);
                    let nd = d + reduced;
                    if nd < dist[arc.to] {
                        dist[arc.to] = nd;
                        prev[arc.to] = (u, k);
                        heap.push(State { dist: nd, node: arc.to });
                    }
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            let mut push = limit - flow;
            let mut v = t;
            while v != s {
                let (u, k) = prev[v];
                push = push.min(self.graph[u][k].cap);
                v = u;
            }
            let mut v = t;
            while v != s {
                let (u, k) = prev[v];
                let rev = self.graph[u][k].rev;
                self.graph[u][k].cap -= push;
                self.graph[v][rev].cap += push;
                cost += push as f64 * self.graph[u][k].cost;
                v = u;
            }
            flow += push;
        }
        (flow, cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transportation_instance() {
        // Two sources (3, 1) to two sinks (2, 2).
        let mut g = MinCostFlow::new(6);
        let (s, t) = (4, 5);
        g.add_edge(s, 0, 3, 0.0);
        g.add_edge(s, 1, 1, 0.0);
        let e00 = g.add_edge(0, 2, 10, 1.0);
        let e01 = g.add_edge(0, 3, 10, 3.0);
        let e10 = g.add_edge(1, 2, 10, 1.0);
        let e11 = g.add_edge(1, 3, 10, 1.0);
        g.add_edge(2, t, 2, 0.0);
        g.add_edge(3, t, 2, 0.0);
        let (f, c) = g.solve(s, t, 4);
        assert_eq!(f, 4);
        // Source 1 feeds sink 3 (cost 1); source 0 sends 2 to sink 2, 1 to sink 3.
        assert_eq!(c, 1.0 + 2.0 + 3.0);
        assert_eq!((g.flow_on(e00), g.flow_on(e01), g.flow_on(e10), g.flow_on(e11)), (2, 1, 0, 1));
    }
}
