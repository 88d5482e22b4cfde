//! Communication topologies and doubly stochastic gossip weights.
//!
//! Agents exchange estimates over a strongly connected digraph whose weight
//! matrix has unit row and column sums. The experiment setup draws a
//! connected Erdos-Renyi graph and equips it with Metropolis-Hastings
//! weights, which are doubly stochastic by symmetry.

use std::io::Write;

use thiserror::Error;

use crate::rng;

/// Tolerance for the row/column sum invariants.
pub const STOCHASTIC_TOL: f64 = 1e-12;

const MAX_ER_ATTEMPTS: u64 = 10_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("need at least one agent")]
    NoAgents,
    #[error("edge probability {0} outside (0, 1]")]
    InvalidProbability(f64),
    #[error("no connected graph found after {0} attempts; increase the edge probability")]
    NeverConnected(u64),
    #[error("adjacency is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("graph is not connected")]
    NotConnected,
}

/// Boolean adjacency with self-loops, `entry (j, i)` meaning j sends to i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    edges: Vec<bool>, // row-major n*n
}

impl Adjacency {
    pub fn new(n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::NoAgents);
        }
        let mut adj = Self {
            n,
            edges: vec![false; n * n],
        };
        for i in 0..n {
            adj.set(i, i, true);
        }
        Ok(adj)
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges[from * self.n + to]
    }

    pub fn set(&mut self, from: usize, to: usize, present: bool) {
        self.edges[from * self.n + to] = present;
    }

    /// Neighbor count excluding the self-loop.
    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| j != i && self.has_edge(i, j)).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.has_edge(i, j) == self.has_edge(j, i)))
    }

    /// Breadth-first reachability from `start` along outgoing edges.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..self.n {
                if self.has_edge(u, v) && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Connectivity for symmetric graphs: every node reachable from node 0.
    pub fn is_connected(&self) -> bool {
        self.reachable_from(0).iter().all(|&r| r)
    }

    /// Strong connectivity: forward and reverse reachability from node 0.
    pub fn is_strongly_connected(&self) -> bool {
        if !self.is_connected() {
            return false;
        }
        let mut reversed = Self {
            n: self.n,
            edges: vec![false; self.n * self.n],
        };
        for i in 0..self.n {
            for j in 0..self.n {
                if self.has_edge(i, j) {
                    reversed.set(j, i, true);
                }
            }
        }
        reversed.is_connected()
    }
}

/// Strongly connected digraph with a doubly stochastic weight matrix.
#[derive(Debug, Clone)]
pub struct WeightedDigraph {
    adjacency: Adjacency,
    weights: Vec<f64>, // row-major n*n, weights[i*n + j] = w_ij
    /// Realized minimum positive weight (diagonal included).
    eta: f64,
}

impl WeightedDigraph {
    /// Wraps a row-major weight matrix, deriving the adjacency from its
    /// support (plus self-loops) and recording the minimum positive entry.
    /// Only the shape and entry signs are checked here; run
    /// [`validate_weights`] for the full invariant report.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::NoAgents);
        }
        assert_eq!(weights.len(), n * n, "weight matrix must be n x n");
        let mut adjacency = Adjacency::new(n)?;
        for i in 0..n {
            for j in 0..n {
                if weights[i * n + j] > 0.0 {
                    // w_ij > 0 marks j as an in-neighbor of i
                    adjacency.set(j, i, true);
                }
            }
        }
        let eta = weights
            .iter()
            .copied()
            .filter(|&w| w > 0.0)
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            adjacency,
            weights,
            eta,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.adjacency.n
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.adjacency.n + j]
    }

    /// Row `i` of the weight matrix (mixing coefficients used by agent `i`).
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.adjacency.n;
        &self.weights[i * n..(i + 1) * n]
    }

    /// Minimum positive weight observed when the matrix was built.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// In-neighbors of `i` (j with w_ij > 0), ascending, self included.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.adjacency.n;
        (0..n).filter(move |&j| self.weight(i, j) > 0.0)
    }

    /// Out-neighbors of `i` (j with w_ji > 0), ascending, self included.
    pub fn out_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.adjacency.n;
        (0..n).filter(move |&j| self.weight(j, i) > 0.0)
    }

    /// Writes one `i j w_ij` line per positive weight, row-major.
    pub fn write_edge_list(&self, mut out: impl Write) -> std::io::Result<()> {
        let n = self.adjacency.n;
        for i in 0..n {
            for j in 0..n {
                let w = self.weight(i, j);
                if w > 0.0 {
                    writeln!(out, "{i} {j} {w}")?;
                }
            }
        }
        Ok(())
    }
}

/// Draws a connected Erdos-Renyi graph with edge probability `p`.
///
/// Undirected (symmetric adjacency) with self-loops on every node. Redraws
/// with a derived sub-seed until connected, so the result is a deterministic
/// function of `(n, p, seed)`.
pub fn gen_connected_er(n: usize, p: f64, seed: u64) -> Result<Adjacency, GraphError> {
    if n == 0 {
        return Err(GraphError::NoAgents);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(GraphError::InvalidProbability(p));
    }
    for attempt in 0..MAX_ER_ATTEMPTS {
        let mut stream = rng::stream(seed, channel::ER_GRAPH, attempt);
        let mut adj = Adjacency::new(n)?;
        for i in 0..n {
            for j in (i + 1)..n {
                if rng::bernoulli(&mut stream, p) {
                    adj.set(i, j, true);
                    adj.set(j, i, true);
                }
            }
        }
        if adj.is_connected() {
            return Ok(adj);
        }
    }
    Err(GraphError::NeverConnected(MAX_ER_ATTEMPTS))
}

/// Metropolis-Hastings weights on a symmetric connected graph.
///
/// For an edge between distinct i and j, `w_ij = 1 / (1 + max(deg_i, deg_j))`
/// with degrees excluding self-loops; the diagonal takes up the slack so each
/// row sums to one. Symmetry of the rule makes the matrix doubly stochastic.
pub fn metropolis_weights(adj: &Adjacency) -> Result<WeightedDigraph, GraphError> {
    let n = adj.n_agents();
    for i in 0..n {
        for j in 0..n {
            if adj.has_edge(i, j) != adj.has_edge(j, i) {
                return Err(GraphError::NotSymmetric(i, j));
            }
        }
    }
    if !adj.is_connected() {
        return Err(GraphError::NotConnected);
    }
    let degrees: Vec<usize> = (0..n).map(|i| adj.degree(i)).collect();
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        let mut off_diagonal = 0.0;
        for j in 0..n {
            if j != i && adj.has_edge(i, j) {
                let w = 1.0 / (1.0 + degrees[i].max(degrees[j]) as f64);
                weights[i * n + j] = w;
                off_diagonal += w;
            }
        }
        weights[i * n + i] = 1.0 - off_diagonal;
    }
    let eta = weights
        .iter()
        .copied()
        .filter(|&w| w > 0.0)
        .fold(f64::INFINITY, f64::min);
    Ok(WeightedDigraph {
        adjacency: adj.clone(),
        weights,
        eta,
    })
}

/// A single violated weight-matrix invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightViolation {
    RowSum { row: usize, sum: f64 },
    ColumnSum { col: usize, sum: f64 },
    /// Weight support disagrees with the adjacency (edge without weight or
    /// weight without edge), or a negative entry.
    Support { from: usize, to: usize, weight: f64 },
    /// A positive weight or diagonal entry below the recorded floor.
    EtaFloor { from: usize, to: usize, weight: f64, eta: f64 },
    NotStronglyConnected,
}

impl std::fmt::Display for WeightViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Self::ColumnSum { col, sum } => write!(f, "column {col} sums to {sum}"),
            Self::Support { from, to, weight } => {
                write!(f, "support mismatch at ({from}, {to}): weight {weight}")
            }
            Self::EtaFloor {
                from,
                to,
                weight,
                eta,
            } => write!(f, "weight {weight} at ({from}, {to}) below floor {eta}"),
            Self::NotStronglyConnected => write!(f, "graph is not strongly connected"),
        }
    }
}

/// Checks every weight-matrix invariant and reports all violations.
///
/// An empty report means the digraph is valid.
pub fn validate_weights(g: &WeightedDigraph) -> Vec<WeightViolation> {
    let n = g.n_agents();
    let mut report = Vec::new();
    for i in 0..n {
        let sum: f64 = g.row(i).iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            report.push(WeightViolation::RowSum { row: i, sum });
        }
    }
    for j in 0..n {
        let sum: f64 = (0..n).map(|i| g.weight(i, j)).sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            report.push(WeightViolation::ColumnSum { col: j, sum });
        }
    }
    for i in 0..n {
        for j in 0..n {
            let w = g.weight(i, j);
            let adjacent = g.adjacency.has_edge(j, i) || i == j;
            if w < 0.0 || (w > 0.0) != adjacent {
                report.push(WeightViolation::Support {
                    from: i,
                    to: j,
                    weight: w,
                });
            } else if w > 0.0 && w < g.eta - STOCHASTIC_TOL {
                report.push(WeightViolation::EtaFloor {
                    from: i,
                    to: j,
                    weight: w,
                    eta: g.eta,
                });
            }
        }
    }
    if !(g.eta > 0.0) || !g.adjacency.is_strongly_connected() {
        report.push(WeightViolation::NotStronglyConnected);
    }
    report
}

/// Seed channels reserved by this module.
pub(crate) mod channel {
    pub const ER_GRAPH: u64 = 11;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn er_with_p_one_is_complete() {
        let adj = gen_connected_er(3, 1.0, 42).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(adj.has_edge(i, j));
            }
        }
    }

    #[test]
    fn er_single_node() {
        let adj = gen_connected_er(1, 0.5, 0).unwrap();
        assert_eq!(adj.n_agents(), 1);
        assert!(adj.has_edge(0, 0));
        assert!(adj.is_connected());
    }

    #[test]
    fn er_paper_scale_is_connected_and_deterministic() {
        let adj = gen_connected_er(48, 0.5, 0).unwrap();
        // independent check: breadth-first reachability from every node
        for start in 0..48 {
            assert!(adj.reachable_from(start).iter().all(|&r| r));
        }
        assert_eq!(adj, gen_connected_er(48, 0.5, 0).unwrap());
        assert_ne!(adj, gen_connected_er(48, 0.5, 1).unwrap());
    }

    #[test]
    fn er_rejects_bad_probability() {
        assert!(matches!(
            gen_connected_er(4, 0.0, 0),
            Err(GraphError::InvalidProbability(_))
        ));
        assert!(matches!(
            gen_connected_er(4, 1.5, 0),
            Err(GraphError::InvalidProbability(_))
        ));
    }

    fn path3() -> Adjacency {
        let mut adj = Adjacency::new(3).unwrap();
        adj.set(0, 1, true);
        adj.set(1, 0, true);
        adj.set(1, 2, true);
        adj.set(2, 1, true);
        adj
    }

    #[test]
    fn metropolis_on_path_matches_hand_computation() {
        // degrees 1, 2, 1; rule gives 1/3 on every edge, diagonal tops up.
        let g = metropolis_weights(&path3()).unwrap();
        let expected = [
            [2.0 / 3.0, 1.0 / 3.0, 0.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [0.0, 1.0 / 3.0, 2.0 / 3.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(g.weight(i, j), expected[i][j], epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(g.eta(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn metropolis_on_triangle() {
        // complete graph on 3 nodes: all degrees 2, every entry 1/3.
        let adj = gen_connected_er(3, 1.0, 7).unwrap();
        let g = metropolis_weights(&adj).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(g.weight(i, j), 1.0 / 3.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn metropolis_single_node() {
        let adj = Adjacency::new(1).unwrap();
        let g = metropolis_weights(&adj).unwrap();
        assert_eq!(g.weight(0, 0), 1.0);
        assert!(validate_weights(&g).is_empty());
    }

    #[test]
    fn metropolis_rejects_asymmetric_or_disconnected() {
        let mut asym = Adjacency::new(2).unwrap();
        asym.set(0, 1, true);
        assert!(matches!(
            metropolis_weights(&asym),
            Err(GraphError::NotSymmetric(_, _))
        ));

        let disconnected = Adjacency::new(2).unwrap();
        assert!(matches!(
            metropolis_weights(&disconnected),
            Err(GraphError::NotConnected)
        ));
    }

    #[test]
    fn validate_flags_column_sum_violation() {
        let mut adj = Adjacency::new(2).unwrap();
        adj.set(0, 1, true);
        adj.set(1, 0, true);
        let g = WeightedDigraph {
            adjacency: adj,
            weights: vec![0.5, 0.5, 0.9, 0.1],
            eta: 0.1,
        };
        let report = validate_weights(&g);
        let col_violations: Vec<_> = report
            .iter()
            .filter(|v| matches!(v, WeightViolation::ColumnSum { .. }))
            .collect();
        assert_eq!(col_violations.len(), 2, "{report:?}");
    }

    #[test]
    fn validate_flags_missing_support() {
        // connected 2-node graph carrying the identity matrix: the cross
        // edges exist but get zero weight.
        let mut adj = Adjacency::new(2).unwrap();
        adj.set(0, 1, true);
        adj.set(1, 0, true);
        let g = WeightedDigraph {
            adjacency: adj,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            eta: 1.0,
        };
        let report = validate_weights(&g);
        assert!(report
            .iter()
            .any(|v| matches!(v, WeightViolation::Support { .. })));
    }

    #[test]
    fn metropolis_is_valid_on_random_graphs() {
        //ceiling on the diagonal floor: w_ii >= 1/(1+n)
        for seed in 0..50 {
            let n = 2 + (seed as usize * 7) % 29;
            let adj = gen_connected_er(n, 0.4, seed).unwrap();
            let g = metropolis_weights(&adj).unwrap();
            let report = validate_weights(&g);
            assert!(report.is_empty(), "n={n} seed={seed}: {report:?}");
            for i in 0..n {
                assert!(g.weight(i, i) >= 1.0 / (1.0 + n as f64) - 1e-15);
            }
        }
    }

    #[test]
    fn weight_powers_flatten_to_uniform() {
        // gossip mixes to the uniform average: W^500 ~ 1/n entrywise
        for seed in [3u64, 11, 29] {
            let n = 4 + (seed as usize) % 7;
            let adj = gen_connected_er(n, 0.6, seed).unwrap();
            let g = metropolis_weights(&adj).unwrap();
            let mut power = vec![0.0; n * n];
            for i in 0..n {
                power[i * n + i] = 1.0;
            }
            for _ in 0..500 {
                let mut next = vec![0.0; n * n];
                for i in 0..n {
                    for k in 0..n {
                        let a = power[i * n + k];
                        if a != 0.0 {
                            for j in 0..n {
                                next[i * n + j] += a * g.weight(k, j);
                            }
                        }
                    }
                }
                power = next;
            }
            for entry in &power {
                assert!((entry - 1.0 / n as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn edge_list_format() {
        let g = metropolis_weights(&path3()).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, format!("0 0 {}", 1.0 - 1.0 / 3.0));
        assert_eq!(text.lines().count(), 7);
    }
}
