//! Dinic max-flow on real capacities, with access to the residual graph.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: f64,
    rev: usize,
}

#[derive(Debug, Clone)]
pub struct FlowGraph {
    adj: Vec<Vec<Arc>>,
    tol: f64,
}

impl FlowGraph {
    /// `tol` is the residual capacity below which an arc counts as saturated.
    pub fn new(n: usize, tol: f64) -> Self {
        FlowGraph {
            adj: vec![Vec::new(); n],
            tol,
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    /// Adds `from -> to` with capacity `cap` and `to -> from` with `back_cap`.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64, back_cap: f64) {
        let rf = self.adj[to].len() + usize::from(from == to);
        let rt = self.adj[from].len();
        self.adj[from].push(Arc { to, cap, rev: rf });
        self.adj[to].push(Arc {
            to: from,
            cap: back_cap,
            rev: rt,
        });
    }

    fn levels(&self, s: usize) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.adj.len()];
        let mut queue = VecDeque::new();
        level[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for a in &self.adj[v] {
                if a.cap > self.tol && level[a.to] == usize::MAX {
                    level[a.to] = level[v] + 1;
                    queue.push_back(a.to);
                }
            }
        }
        level
    }

    fn augment(
        &mut self,
        v: usize,
        t: usize,
        pushed: f64,
        level: &[usize],
        next: &mut [usize],
    ) -> f64 {
        if v == t {
            return pushed;
        }
        while next[v] < self.adj[v].len() {
            let i = next[v];
            let Arc { to, cap, rev } = self.adj[v][i];
            if cap > self.tol && level[to] == level[v] + 1 {
                let got = self.augment(to, t, pushed.min(cap), level, next);
                if got > 0.0 {
                    self.adj[v][i].cap -= got;
                    self.adj[to][rev].cap += got;
                    return got;
                }
            }
            next[v] += 1;
        }
        0.0
    }

    /// Pushes a maximum flow from `s` to `t` and returns its value.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        loop {
            let level = self.levels(s);
            if level[t] == usize::MAX {
                return total;
            }
            let mut next = vec![0; self.adj.len()];
            loop {
                let f = self.augment(s, t, f64::INFINITY, &level, &mut next);
                if f <= 0.0 {
                    break;
                }
                total += f;
            }
        }
    }

    /// Nodes reachable from `s` along unsaturated residual arcs.
    pub fn reachable_from(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        self.close(&mut seen, [s]);
        seen
    }

    /// Nodes that reach `t` along unsaturated residual arcs.
    pub fn reaching(&self, t: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![t];
        seen[t] = true;
        while let Some(v) = stack.pop() {
            // arc u -> v has residual cap stored at adj[u][rev of v's arc]
            for a in &self.adj[v] {
                let back = &self.adj[a.to][a.rev];
                if back.cap > self.tol && !seen[a.to] {
                    seen[a.to] = true;
                    stack.push(a.to);
                }
            }
        }
        seen
    }

    /// Extends `set` by everything reachable from `seeds` in the residual graph.
    pub fn close(&self, set: &mut [bool], seeds: impl IntoIterator<Item = usize>) {
        let mut stack: Vec<usize> = Vec::new();
        for s in seeds {
            if !set[s] {
                set[s] = true;
            }
            stack.push(s);
        }
        while let Some(v) = stack.pop() {
            for a in &self.adj[v] {
                if a.cap > self.tol && !set[a.to] {
                    set[a.to] = true;
                    stack.push(a.to);
                }
            }
        }
    }
}
