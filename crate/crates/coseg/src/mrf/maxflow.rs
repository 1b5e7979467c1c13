//! Dinic max-flow / min-cut on small graphs with real capacities.

const EPS: f64 = 1e-12;

#[derive(Clone)]
struct Arc {
    to: u32,
    cap: f64,
}

/// Directed flow network; every `add_edge` also inserts the reverse arc so
/// residual capacities can be tracked in place.
pub(crate) struct FlowGraph {
    arcs: Vec<Arc>,
    adj: Vec<Vec<u32>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl FlowGraph {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adj: vec![Vec::new(); num_nodes],
            level: vec![-1; num_nodes],
            iter: vec![0; num_nodes],
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64, rev_cap: f64) {
        debug_assert!(cap >= 0.0 && rev_cap >= 0.0);
        let a = self.arcs.len() as u32;
        self.arcs.push(Arc {
            to: to as u32,
            cap,
        });
        self.arcs.push(Arc {
            to: from as u32,
            cap: rev_cap,
        });
        self.adj[from].push(a);
        self.adj[to].push(a + 1);
    }

    fn bfs(&mut self, source: usize, sink: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = std::collections::VecDeque::new();
        self.level[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for &a in &self.adj[v] {
                let arc = &self.arcs[a as usize];
                let to = arc.to as usize;
                if arc.cap > EPS && self.level[to] < 0 {
                    self.level[to] = self.level[v] + 1;
                    queue.push_back(to);
                }
            }
        }
        self.level[sink] >= 0
    }

    fn dfs(&mut self, v: usize, sink: usize, pushed: f64) -> f64 {
        if v == sink {
            return pushed;
        }
        while self.iter[v] < self.adj[v].len() {
            let a = self.adj[v][self.iter[v]] as usize;
            let (to, cap) = {
                let arc = &self.arcs[a];
                (arc.to as usize, arc.cap)
            };
            if cap > EPS && self.level[to] == self.level[v] + 1 {
                let got = self.dfs(to, sink, pushed.min(cap));
                if got > EPS {
                    self.arcs[a].cap -= got;
                    self.arcs[a ^ 1].cap += got;
                    return got;
                }
            }
            self.iter[v] += 1;
        }
        0.0
    }

    pub fn max_flow(&mut self, source: usize, sink: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(source, sink) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let pushed = self.dfs(source, sink, f64::INFINITY);
                if pushed <= EPS {
                    break;
                }
                flow += pushed;
            }
        }
        flow
    }

    /// Nodes reachable from `source` in the residual graph (the source side
    /// of a minimum cut). Call after `max_flow`.
    pub fn source_side(&self, source: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut queue = std::collections::VecDeque::new();
        seen[source] = true;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for &a in &self.adj[v] {
                let arc = &self.arcs[a as usize];
                let to = arc.to as usize;
                if arc.cap > EPS && !seen[to] {
                    seen[to] = true;
                    queue.push_back(to);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_bottleneck() {
        // s -> a -> t with capacities 3 and 2: flow 2, cut separates a|t.
        let mut g = FlowGraph::new(3);
        g.add_edge(0, 1, 3.0, 0.0);
        g.add_edge(1, 2, 2.0, 0.0);
        let flow = g.max_flow(0, 2);
        assert!((flow - 2.0).abs() < 1e-12);
        let side = g.source_side(0);
        assert_eq!(side, vec![true, true, false]);
    }

    #[test]
    fn parallel_paths() {
        let mut g = FlowGraph::new(4);
        g.add_edge(0, 1, 1.5, 0.0);
        g.add_edge(0, 2, 2.5, 0.0);
        g.add_edge(1, 3, 2.0, 0.0);
        g.add_edge(2, 3, 2.0, 0.0);
        let flow = g.max_flow(0, 3);
        assert!((flow - 3.5).abs() < 1e-12);
    }
}
