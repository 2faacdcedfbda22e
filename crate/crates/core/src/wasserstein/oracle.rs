//! Exact transport solve for small histograms.
//!
//! Successive shortest augmenting paths (Bellman-Ford on the residual graph) over
//! the dense bipartite transport network `source -> supply bins -> demand bins -> sink`
//! with ground cost `|x_i - x_j|` on the unit-interval grid. Only meant as an
//! independent reference for the closed-form CDF distance.

use crate::error::{Error, Result};
use crate::num::Scalar;

use super::Histogram;

/// Largest histogram length the oracle accepts.
pub const ORACLE_MAX_BINS: usize = 16;

const MASS_TOLERANCE: f64 = 1e-9;

struct Edge {
    to: usize,
    rev: usize,
    cap: f64,
    cost: f64,
}

struct FlowNetwork {
    adj: Vec<Vec<Edge>>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            adj: (0..nodes).map(|_| Vec::new()).collect(),
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        let rev_from = self.adj[to].len();
        let rev_to = self.adj[from].len();
        self.adj[from].push(Edge {
            to,
            rev: rev_from,
            cap,
            cost,
        });
        self.adj[to].push(Edge {
            to: from,
            rev: rev_to,
            cap: 0.0,
            cost: -cost,
        });
    }

    /// Returns `(flow, cost)` of a min-cost max-flow from `source` to `sink`.
    fn min_cost_flow(&mut self, source: usize, sink: usize, eps: f64) -> (f64, f64) {
        let n = self.adj.len();
        let mut flow = 0.0;
        let mut cost = 0.0;
        loop {
            let mut dist = vec![f64::INFINITY; n];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            dist[source] = 0.0;
            // Bellman-Ford; residual graph has negative reverse costs but no negative cycles.
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if !dist[u].is_finite() {
                        continue;
                    }
                    for (ei, e) in self.adj[u].iter().enumerate() {
                        if e.cap > eps && dist[u] + e.cost < dist[e.to] - 1e-15 {
                            dist[e.to] = dist[u] + e.cost;
                            prev[e.to] = Some((u, ei));
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if !dist[sink].is_finite() {
                return (flow, cost);
            }

            let mut push = f64::INFINITY;
            let mut v = sink;
            while let Some((u, ei)) = prev[v] {
                push = push.min(self.adj[u][ei].cap);
                v = u;
            }
            let mut v = sink;
            while let Some((u, ei)) = prev[v] {
                let rev = self.adj[u][ei].rev;
                self.adj[u][ei].cap -= push;
                self.adj[v][rev].cap += push;
                v = u;
            }
            flow += push;
            cost += push * dist[sink];
        }
    }
}

/// Exact Wasserstein-1 distance between two nonnegative, equal-mass histograms of
/// at most [`ORACLE_MAX_BINS`] bins.
pub fn lp_w1_oracle<S: Scalar>(a: &Histogram<S>, b: &Histogram<S>) -> Result<S> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let m = a.len();
    if m > ORACLE_MAX_BINS {
        return Err(Error::InvalidConfig(format!(
            "oracle supports at most {ORACLE_MAX_BINS} bins, got {m}"
        )));
    }
    let supply: Vec<f64> = a.weights().iter().map(|w| w.as_f64()).collect();
    let demand: Vec<f64> = b.weights().iter().map(|w| w.as_f64()).collect();
    if supply.iter().chain(&demand).any(|&w| w < 0.0) {
        return Err(Error::Precondition(
            "oracle requires nonnegative weights".into(),
        ));
    }
    let (mass_a, mass_b) = (supply.iter().sum::<f64>(), demand.iter().sum::<f64>());
    if (mass_a - mass_b).abs() > MASS_TOLERANCE {
        return Err(Error::Precondition(format!(
            "oracle requires equal masses, got {mass_a} and {mass_b}"
        )));
    }

    let position = |i: usize| i as f64 / (m - 1) as f64;
    let source = 0;
    let sink = 2 * m + 1;
    let mut net = FlowNetwork::new(2 * m + 2);
    for i in 0..m {
        net.add_edge(source, 1 + i, supply[i], 0.0);
        net.add_edge(1 + m + i, sink, demand[i], 0.0);
        for j in 0..m {
            let ground = (position(i) - position(j)).abs();
            net.add_edge(1 + i, 1 + m + j, f64::INFINITY, ground);
        }
    }
    let eps = 1e-15 * mass_a.max(1.0);
    let (flow, cost) = net.min_cost_flow(source, sink, eps);
    if (flow - mass_a.min(mass_b)).abs() > MASS_TOLERANCE {
        return Err(Error::Numerical(format!(
            "oracle routed {flow} of {mass_a} units"
        )));
    }
    Ok(S::of(cost))
}
