//! Exact transportation programs on finite supports: the discrete
//! Wasserstein distance as a small min-cost flow, and the primal/dual pair of
//! the worst-case expectation over a Wasserstein ball.

use super::instance::FiniteInstance;
use crate::error::{Error, Result};
use crate::numeric;
use serde::{Deserialize, Serialize};

const MAX_SUPPORT: usize = 12;
const FLOW_TOL: f64 = 1e-15;

fn check_marginal(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.len() > MAX_SUPPORT {
        return Err(Error::InstanceTooLarge {
            limit: MAX_SUPPORT,
            got: p.len(),
        });
    }
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::invalid(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "infeasible marginals: {what} sums to {total}, expected 1"
        )));
    }
    Ok(())
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
    flow: f64,
}

struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        FlowGraph {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        let id = self.edges.len();
        self.edges.push(Edge {
            to,
            cap,
            cost,
            flow: 0.0,
        });
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
            flow: 0.0,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
    }

    fn residual(&self, id: usize) -> f64 {
        self.edges[id].cap - self.edges[id].flow
    }

    /// Bellman-Ford shortest path by cost in the residual graph.
    fn shortest_path(&self, source: usize, sink: usize) -> Option<Vec<usize>> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        dist[source] = 0.0;
        for _ in 0..n {
            let mut improved = false;
            for (from, ids) in self.adj.iter().enumerate() {
                if !dist[from].is_finite() {
                    continue;
                }
                for &id in ids {
                    if self.residual(id) <= FLOW_TOL {
                        continue;
                    }
                    let e = &self.edges[id];
                    let cand = dist[from] + e.cost;
                    if cand < dist[e.to] - 1e-15 {
                        dist[e.to] = cand;
                        pred[e.to] = Some(id);
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        pred[sink]?;
        let mut path = Vec::new();
        let mut node = sink;
        while node != source {
            let id = pred[node]?;
            path.push(id);
            node = self.edges[id ^ 1].to;
        }
        path.reverse();
        Some(path)
    }
}

/// Exact optimum of the transportation program between two probability
/// tables, computed by successive shortest-path augmentation. Supports of up
/// to 12 points each.
#[allow(clippy::needless_range_loop)] // bipartite node arithmetic reads better indexed
pub fn discrete_wasserstein(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> Result<f64> {
    check_marginal(p, "p")?;
    check_marginal(q, "q")?;
    let (m, k) = (p.len(), q.len());
    if cost.len() != m {
        return Err(Error::Shape {
            expected: m,
            got: cost.len(),
        });
    }
    for row in cost {
        if row.len() != k {
            return Err(Error::Shape {
                expected: k,
                got: row.len(),
            });
        }
        if row.iter().any(|&c| !c.is_finite() || c < 0.0) {
            return Err(Error::invalid(
                "cost entries must be finite and nonnegative",
            ));
        }
    }
    // nodes: 0 source, 1..=m supplies, m+1..=m+k demands, m+k+1 sink
    let source = 0;
    let sink = m + k + 1;
    let mut graph = FlowGraph::new(m + k + 2);
    for (i, &pi) in p.iter().enumerate() {
        graph.add(source, 1 + i, pi, 0.0);
    }
    for i in 0..m {
        for j in 0..k {
            graph.add(1 + i, 1 + m + j, f64::INFINITY, cost[i][j]);
        }
    }
    for (j, &qj) in q.iter().enumerate() {
        graph.add(1 + m + j, sink, qj, 0.0);
    }
    let mut remaining = 1.0f64;
    let mut total_cost = 0.0;
    while remaining > 1e-12 {
        let Some(path) = graph.shortest_path(source, sink) else {
            break; // marginals consumed up to rounding
        };
        let mut push = remaining;
        for &id in &path {
            push = push.min(graph.residual(id));
        }
        if push <= FLOW_TOL {
            break;
        }
        for &id in &path {
            graph.edges[id].flow += push;
            graph.edges[id ^ 1].flow -= push;
            total_cost += push * graph.edges[id].cost;
        }
        remaining -= push;
    }
    Ok(total_cost)
}

/// Dense tableau simplex for the worst-case expectation LP
///
/// ```text
/// max Σ ℓ(z')·μ(z', z)
/// s.t. Σ_{z'} μ(z', z) = q0(z) for every z,   Σ c(z', z)·μ(z', z) ≤ ε
/// ```
///
/// The identity coupling plus a slack on the budget row is a feasible basis,
/// so no phase-1 is needed. Bland's rule guards against cycling.
#[allow(clippy::needless_range_loop)] // dense tableau addressing
fn primal_worst_case(ell: &[f64], q0: &[f64], cost: &[Vec<f64>], epsilon: f64) -> Result<f64> {
    let n = ell.len();
    let rows = n + 1; // n marginal rows + budget row
    let cols = n * n + 1; // couplings + budget slack
    let col_of = |target: usize, source: usize| target * n + source;
    let slack_col = n * n;

    let mut objective = vec![0.0; cols];
    for target in 0..n {
        for source in 0..n {
            objective[col_of(target, source)] = ell[target];
        }
    }
    // tableau[r][c], with rhs in the last slot
    let mut t = vec![vec![0.0; cols + 1]; rows];
    for source in 0..n {
        for target in 0..n {
            t[source][col_of(target, source)] = 1.0;
        }
        t[source][cols] = q0[source];
    }
    for target in 0..n {
        for source in 0..n {
            t[n][col_of(target, source)] = cost[target][source];
        }
    }
    t[n][slack_col] = 1.0;
    t[n][cols] = epsilon;

    // initial basis: the identity coupling and the budget slack; its matrix
    // is the identity because diagonal couplings have zero cost
    let mut basis: Vec<usize> = (0..n).map(|z| col_of(z, z)).collect();
    basis.push(slack_col);

    let tol = 1e-11;
    for _pivot in 0..20_000 {
        // reduced costs under the current basis
        let mut entering = None;
        for j in 0..cols {
            let mut reduced = objective[j];
            for r in 0..rows {
                reduced -= objective[basis[r]] * t[r][j];
            }
            if reduced > tol {
                entering = Some(j);
                break; // Bland: first improving column
            }
        }
        let Some(j) = entering else {
            let value = (0..rows).map(|r| objective[basis[r]] * t[r][cols]).sum();
            return Ok(value);
        };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..rows {
            if t[r][j] > tol {
                let ratio = t[r][cols] / t[r][j];
                if ratio < best_ratio - 1e-12
                    || (ratio < best_ratio + 1e-12 && leave.is_none_or(|l| basis[r] < basis[l]))
                {
                    best_ratio = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(r) = leave else {
            return Err(Error::invalid("worst-case LP is unbounded"));
        };
        let pivot = t[r][j];
        for c in 0..=cols {
            t[r][c] /= pivot;
        }
        for rr in 0..rows {
            if rr != r && t[rr][j].abs() > 0.0 {
                let factor = t[rr][j];
                for c in 0..=cols {
                    t[rr][c] -= factor * t[r][c];
                }
            }
        }
        basis[r] = j;
    }
    Err(Error::invalid("simplex did not converge"))
}

/// The dual objective γε + E_Q[ max_{z'} ℓ(z') − γ·c(z', z) ].
pub fn dual_objective(ell: &[f64], q0: &[f64], cost: &[Vec<f64>], epsilon: f64, gamma: f64) -> f64 {
    let n = ell.len();
    let mut value = gamma * epsilon;
    for source in 0..n {
        if q0[source] == 0.0 {
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        for target in 0..n {
            best = best.max(ell[target] - gamma * cost[target][source]);
        }
        value += q0[source] * best;
    }
    value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// Check the Lagrangian duality of the worst-case expectation on a finite
/// instance: primal by the coupling LP, dual by a γ-grid followed by
/// golden-section refinement around the grid minimizer (the dual is convex
/// in γ).
pub fn duality_check(
    inst: &FiniteInstance,
    ell_row: &[f64],
    q0: &[f64],
    epsilon: f64,
    gamma_grid: &[f64],
) -> Result<DualityReport> {
    let n = inst.num_points();
    if ell_row.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: ell_row.len(),
        });
    }
    if !numeric::all_finite(ell_row) {
        return Err(Error::invalid("loss values must be finite"));
    }
    check_marginal(q0, "q0")?;
    if q0.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: q0.len(),
        });
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::invalid("epsilon must be >= 0"));
    }
    if gamma_grid.is_empty() || gamma_grid.iter().any(|&g| !g.is_finite() || g < 0.0) {
        return Err(Error::invalid(
            "gamma grid must be non-empty and nonnegative",
        ));
    }
    let primal = primal_worst_case(ell_row, q0, &inst.cost, epsilon)?;

    let mut grid = gamma_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let eval = |g: f64| dual_objective(ell_row, q0, &inst.cost, epsilon, g);
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let v = eval(g);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    // golden-section refinement on the bracket around the grid minimizer
    let mut lo = if best_i == 0 {
        grid[0]
    } else {
        grid[best_i - 1]
    };
    let mut hi = if best_i + 1 == grid.len() {
        grid[best_i]
    } else {
        grid[best_i + 1]
    };
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = eval(x2);
        }
    }
    let dual = best.min(f1).min(f2);
    Ok(DualityReport {
        primal,
        dual,
        gap: dual - primal,
    })
}
