//! Interaction digraph and the matrices the consensus controller is built on.
//!
//! Edge `(i, j)` with weight `a(i, j) > 0` means agent `i` receives information
//! from agent `j`. The virtual leader is not a vertex: it only acts through the
//! diagonal pinning matrix `B`, whose entry is 1 for every agent that hears the
//! leader directly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pivot magnitude below which elimination treats a column as dependent.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("digraph must contain at least one agent")]
    Empty,
    #[error("adjacency matrix must be {expected}x{expected}, got {rows}x{cols}")]
    Shape { expected: usize, rows: usize, cols: usize },
    #[error("leader flags must have {expected} entries, got {got}")]
    LeaderFlags { expected: usize, got: usize },
    #[error("negative weight a({row},{col}) = {weight}")]
    NegativeWeight { row: usize, col: usize, weight: f64 },
    #[error("non-finite weight a({row},{col})")]
    NonFiniteWeight { row: usize, col: usize },
    #[error("self loop a({index},{index}) = {weight}; the diagonal must be zero")]
    SelfLoop { index: usize, weight: f64 },
    #[error("agent index {index} out of range for {n} agents")]
    OutOfRange { index: usize, n: usize },
}

/// Weighted interaction digraph plus the virtual-leader pinning flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Digraph {
    weights: Vec<Vec<f64>>,
    leader_flags: Vec<bool>,
}

/// One weighted edge: `receiver` listens to `sender`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub receiver: usize,
    pub sender: usize,
    pub weight: f64,
}

impl Digraph {
    /// Builds a digraph from a dense adjacency matrix (row = receiver).
    pub fn from_weights(weights: Vec<Vec<f64>>, leader_flags: Vec<bool>) -> Result<Self, GraphError> {
        let n = weights.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        for row in &weights {
            if row.len() != n {
                return Err(GraphError::Shape {
                    expected: n,
                    rows: n,
                    cols: row.len(),
                });
            }
        }
        if leader_flags.len() != n {
            return Err(GraphError::LeaderFlags {
                expected: n,
                got: leader_flags.len(),
            });
        }
        let g = Digraph { weights, leader_flags };
        g.validate()?;
        Ok(g)
    }

    /// Builds a digraph from an edge list with zero-based agent indices.
    pub fn from_edges(n_agents: usize, edges: &[Edge], leaders: &[usize]) -> Result<Self, GraphError> {
        if n_agents == 0 {
            return Err(GraphError::Empty);
        }
        let mut weights = vec![vec![0.0; n_agents]; n_agents];
        for e in edges {
            for index in [e.receiver, e.sender] {
                if index >= n_agents {
                    return Err(GraphError::OutOfRange { index, n: n_agents });
                }
            }
            weights[e.receiver][e.sender] += e.weight;
        }
        let mut flags = vec![false; n_agents];
        for &l in leaders {
            if l >= n_agents {
                return Err(GraphError::OutOfRange { index: l, n: n_agents });
            }
            flags[l] = true;
        }
        Self::from_weights(weights, flags)
    }

    /// The four-agent topology used in the reproduction scenarios: agent 1 hears
    /// agent 3, agent 3 hears agent 2, agent 4 hears agent 3, and agents 1 and 2
    /// are pinned to the virtual leader.
    pub fn four_agent_reference() -> Self {
        let edges = [
            Edge {
                receiver: 0,
                sender: 2,
                weight: 1.0,
            },
            Edge {
                receiver: 2,
                sender: 1,
                weight: 1.0,
            },
            Edge {
                receiver: 3,
                sender: 2,
                weight: 1.0,
            },
        ];
        Self::from_edges(4, &edges, &[0, 1]).expect("reference topology is valid")
    }

    fn validate(&self) -> Result<(), GraphError> {
        for (i, row) in self.weights.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if !w.is_finite() {
                    return Err(GraphError::NonFiniteWeight { row: i, col: j });
                }
                if w < 0.0 {
                    return Err(GraphError::NegativeWeight {
                        row: i,
                        col: j,
                        weight: w,
                    });
                }
                if i == j && w != 0.0 {
                    return Err(GraphError::SelfLoop { index: i, weight: w });
                }
            }
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, receiver: usize, sender: usize) -> f64 {
        self.weights[receiver][sender]
    }

    pub fn is_leader_fed(&self, agent: usize) -> bool {
        self.leader_flags[agent]
    }

    pub fn leader_flags(&self) -> &[bool] {
        &self.leader_flags
    }

    /// Senders agent `i` listens to, with their weights.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights[i]
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(j, &w)| (j, w))
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for (receiver, row) in self.weights.iter().enumerate() {
            for (sender, &weight) in row.iter().enumerate() {
                if weight > 0.0 {
                    out.push(Edge {
                        receiver,
                        sender,
                        weight,
                    });
                }
            }
        }
        out
    }
}

/// Dense graph matrices derived from a [`Digraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMatrices {
    pub adjacency: DMatrix<f64>,
    pub degree: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub incidence: DMatrix<f64>,
    /// `H = L + B`.
    pub coupling: DMatrix<f64>,
}

pub fn build_matrices(g: &Digraph) -> Result<GraphMatrices, GraphError> {
    g.validate()?;
    let n = g.n_agents();
    let adjacency = DMatrix::from_fn(n, n, |i, j| g.weights[i][j]);
    let degree = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| g.weights[i].iter().sum::<f64>()));
    let laplacian = &degree - &adjacency;
    let incidence = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| {
        if g.leader_flags[i] {
            1.0
        } else {
            0.0
        }
    }));
    let coupling = &laplacian + &incidence;
    Ok(GraphMatrices {
        adjacency,
        degree,
        laplacian,
        incidence,
        coupling,
    })
}

/// Where reachability starts from in [`has_spanning_tree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Root {
    Agent(usize),
    /// The virtual leader, feeding every agent whose leader flag is set.
    VirtualLeader,
}

/// True iff every agent is reachable from `root` along the direction information
/// flows (sender to receiver).
pub fn has_spanning_tree(g: &Digraph, root: Root) -> Result<bool, GraphError> {
    let n = g.n_agents();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    match root {
        Root::Agent(r) => {
            if r >= n {
                return Err(GraphError::OutOfRange { index: r, n });
            }
            seen[r] = true;
            stack.push(r);
        }
        Root::VirtualLeader => {
            for (i, &fed) in g.leader_flags.iter().enumerate() {
                if fed {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
    }
    while let Some(sender) = stack.pop() {
        for (receiver, row) in g.weights.iter().enumerate() {
            if !seen[receiver] && row[sender] > 0.0 {
                seen[receiver] = true;
                stack.push(receiver);
            }
        }
    }
    Ok(seen.into_iter().all(|s| s))
}

/// Numerical rank by Gaussian elimination with partial pivoting.
pub fn rank(m: &DMatrix<f64>) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot_row, pivot) = (rank..rows)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((rank, -1.0), |best, cand| if cand.1 > best.1 { cand } else { best });
        if pivot <= PIVOT_TOLERANCE {
            continue;
        }
        a.swap_rows(rank, pivot_row);
        for r in rank + 1..rows {
            let factor = a[(r, col)] / a[(rank, col)];
            if factor != 0.0 {
                for c in col..cols {
                    a[(r, c)] -= factor * a[(rank, c)];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Determinant by the same pivoted elimination used for [`rank`].
pub fn determinant(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "determinant of a non-square matrix");
    let mut a = m.clone();
    let n = a.nrows();
    let mut det = 1.0;
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((col, -1.0), |best, cand| if cand.1 > best.1 { cand } else { best });
        if pivot <= PIVOT_TOLERANCE {
            return 0.0;
        }
        if pivot_row != col {
            a.swap_rows(col, pivot_row);
            det = -det;
        }
        det *= a[(col, col)];
        for r in col + 1..n {
            let factor = a[(r, col)] / a[(col, col)];
            for c in col..n {
                a[(r, c)] -= factor * a[(col, c)];
            }
        }
    }
    det
}

pub fn h_is_nonsingular(m: &GraphMatrices) -> bool {
    rank(&m.coupling) == m.coupling.nrows()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }

    /// Laplace expansion along the first row.
    fn cofactor_det(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        let mut total = 0.0;
        for j in 0..n {
            if m[0][j] == 0.0 {
                continue;
            }
            let minor: Vec<Vec<f64>> = m[1..]
                .iter()
                .map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| *v).collect())
                .collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * m[0][j] * cofactor_det(&minor);
        }
        total
    }

    #[test]
    fn reference_topology_matches_displayed_matrices() {
        let m = build_matrices(&Digraph::four_agent_reference()).unwrap();
        assert_eq!(
            rows(&m.adjacency),
            vec![
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ]
        );
        assert_eq!(
            rows(&m.degree),
            vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ]
        );
        assert_eq!(
            rows(&m.laplacian),
            vec![
                vec![1.0, 0.0, -1.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.0, -1.0, 1.0, 0.0],
                vec![0.0, 0.0, -1.0, 1.0],
            ]
        );
        assert_eq!(
            rows(&m.incidence),
            vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
            ]
        );
        assert_eq!(
            rows(&m.coupling),
            vec![
                vec![2.0, 0.0, -1.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, -1.0, 1.0, 0.0],
                vec![0.0, 0.0, -1.0, 1.0],
            ]
        );
        assert!(h_is_nonsingular(&m));
        assert_eq!(cofactor_det(&rows(&m.coupling)), 2.0);
        assert!((determinant(&m.coupling) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn edgeless_leaderless_graph_has_zero_coupling() {
        let g = Digraph::from_edges(3, &[], &[]).unwrap();
        let m = build_matrices(&g).unwrap();
        assert_eq!(m.laplacian, DMatrix::zeros(3, 3));
        assert_eq!(m.coupling, DMatrix::zeros(3, 3));
        assert!(!h_is_nonsingular(&m));
        assert_eq!(rank(&m.coupling), 0);
    }

    #[test]
    fn rejects_negative_weights_and_self_loops() {
        assert!(matches!(
            Digraph::from_weights(vec![vec![0.0, -1.0], vec![0.0, 0.0]], vec![false; 2]),
            Err(GraphError::NegativeWeight { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            Digraph::from_weights(vec![vec![1.0, 0.0], vec![0.0, 0.0]], vec![false; 2]),
            Err(GraphError::SelfLoop { index: 0, .. })
        ));
        assert!(matches!(
            Digraph::from_edges(
                2,
                &[Edge {
                    receiver: 0,
                    sender: 5,
                    weight: 1.0
                }],
                &[]
            ),
            Err(GraphError::OutOfRange { index: 5, n: 2 })
        ));
    }

    #[test]
    fn spanning_tree_cases() {
        let g = Digraph::four_agent_reference();
        assert!(has_spanning_tree(&g, Root::VirtualLeader).unwrap());
        assert!(has_spanning_tree(&g, Root::Agent(1)).unwrap());
        assert!(!has_spanning_tree(&g, Root::Agent(0)).unwrap());

        let single = Digraph::from_edges(1, &[], &[]).unwrap();
        assert!(has_spanning_tree(&single, Root::Agent(0)).unwrap());

        let pair = Digraph::from_edges(2, &[], &[]).unwrap();
        assert!(!has_spanning_tree(&pair, Root::Agent(0)).unwrap());
        assert!(has_spanning_tree(&pair, Root::Agent(7)).is_err());
    }

    #[test]
    fn random_six_node_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let weights: Vec<Vec<f64>> = (0..6)
                .map(|i| {
                    (0..6)
                        .map(|j| {
                            if i != j && rng.random_bool(0.4) {
                                rng.random_range(0.1..3.0)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            let g = Digraph::from_weights(weights.clone(), vec![false; 6]).unwrap();
            let m = build_matrices(&g).unwrap();
            for (i, row) in weights.iter().enumerate() {
                let mut sum = 0.0;
                for j in 0..6 {
                    sum += m.laplacian[(i, j)];
                }
                assert!(sum.abs() < 1e-12, "row {i} sums to {sum}");
                let expected_degree: f64 = row.iter().sum();
                assert_eq!(m.degree[(i, i)], expected_degree);
            }
        }
    }

    fn arb_digraph(max_n: usize) -> impl Strategy<Value = Digraph> {
        (1..=max_n).prop_flat_map(|n| {
            (
                proptest::collection::vec(proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..4.0], n), n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(mut w, flags)| {
                    for (i, row) in w.iter_mut().enumerate() {
                        row[i] = 0.0;
                    }
                    Digraph::from_weights(w, flags).unwrap()
                })
        })
    }

    /// Random tree hanging off the virtual leader plus random extra edges.
    fn arb_rooted(max_n: usize) -> impl Strategy<Value = Digraph> {
        (1..=max_n).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<prop::sample::Index>(), n),
                proptest::collection::vec((0..n, 0..n, 0.1f64..3.0), 0..2 * n),
                proptest::collection::vec(0.2f64..3.0, n),
            )
                .prop_map(move |(parents, extra, tree_w)| {
                    let mut w = vec![vec![0.0; n]; n];
                    let mut flags = vec![false; n];
                    flags[0] = true;
                    for v in 1..n {
                        let parent = parents[v].index(v);
                        w[v][parent] = tree_w[v];
                    }
                    for (r, s, weight) in extra {
                        if r != s {
                            w[r][s] = weight;
                        }
                    }
                    Digraph::from_weights(w, flags).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn matrix_invariants_hold(g in arb_digraph(8)) {
            let m = build_matrices(&g).unwrap();
            let n = g.n_agents();
            for i in 0..n {
                let row_sum: f64 = (0..n).map(|j| m.laplacian[(i, j)]).sum();
                prop_assert!(row_sum.abs() < 1e-9);
                prop_assert!(m.degree[(i, i)] >= 0.0);
                prop_assert!(m.incidence[(i, i)] == 0.0 || m.incidence[(i, i)] == 1.0);
                for j in 0..n {
                    if i != j {
                        prop_assert_eq!(m.degree[(i, j)], 0.0);
                        prop_assert_eq!(m.incidence[(i, j)], 0.0);
                    }
                    prop_assert_eq!(m.coupling[(i, j)], m.laplacian[(i, j)] + m.incidence[(i, j)]);
                }
            }
        }

        #[test]
        fn leader_rooted_tree_gives_nonsingular_coupling(g in arb_rooted(8)) {
            prop_assert!(has_spanning_tree(&g, Root::VirtualLeader).unwrap());
            let m = build_matrices(&g).unwrap();
            prop_assert!(h_is_nonsingular(&m));
            prop_assert!(cofactor_det(&rows(&m.coupling)).abs() > 1e-9);
        }

        #[test]
        fn rank_agrees_with_cofactor_determinant(g in arb_digraph(6)) {
            let m = build_matrices(&g).unwrap();
            let det = cofactor_det(&rows(&m.coupling));
            prop_assert_eq!(h_is_nonsingular(&m), det.abs() > 1e-9);
        }
    }
}
