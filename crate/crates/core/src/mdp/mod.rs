//! Finite MDPs, softmax policies, and exact matrix-algebra oracles.

mod chain;
mod objectives;
pub(crate) mod policy;

pub use chain::{bellman_apply, induced_chain, projection_matrix, InducedChain};
pub use objectives::{exact_objectives, exact_policy_gradient, CriticMoments, Objectives};
pub use policy::{likelihood_ratio, ActorFeatures, FeatureTable, SoftmaxPolicy};

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Row-sum tolerance for transition matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Largest state count the dense oracles accept.
pub const MAX_STATES: usize = 10_000;

/// Finite state/action model with per-action transition matrices and
/// state-dependent rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp {
    transitions: Vec<DMatrix<f64>>,
    rewards: DVector<f64>,
}

impl FiniteMdp {
    pub fn new(transitions: Vec<DMatrix<f64>>, rewards: DVector<f64>) -> Result<Self> {
        let n = rewards.len();
        if n == 0 || n > MAX_STATES {
            return Err(Error::InvalidModel(format!(
                "state count {n} outside 1..={MAX_STATES}"
            )));
        }
        if transitions.is_empty() {
            return Err(Error::InvalidModel("no actions".into()));
        }
        if let Some(bad) = rewards.iter().position(|g| !g.is_finite()) {
            return Err(Error::InvalidModel(format!("reward at state {bad} is not finite")));
        }
        for (u, p) in transitions.iter().enumerate() {
            if p.nrows() != n || p.ncols() != n {
                return Err(Error::DimensionMismatch {
                    what: "transition matrix",
                    expected: n,
                    found: p.nrows().max(p.ncols()),
                });
            }
            for x in 0..n {
                let row = p.row(x);
                if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "row {x} of action {u} has a negative or non-finite entry"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidModel(format!(
                        "row {x} of action {u} sums to {sum}"
                    )));
                }
            }
        }
        Ok(Self {
            transitions,
            rewards,
        })
    }

    pub fn num_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn num_actions(&self) -> usize {
        self.transitions.len()
    }

    /// Transition matrix `P_u`.
    pub fn transition(&self, u: usize) -> &DMatrix<f64> {
        &self.transitions[u]
    }

    pub fn rewards(&self) -> &DVector<f64> {
        &self.rewards
    }

    /// Number of closed communicating classes of the union support graph.
    ///
    /// A softmax policy gives every action positive probability, so this is
    /// the class count of `P_θ` for every finite `θ`.
    pub fn closed_class_count(&self) -> usize {
        let n = self.num_states();
        let mut support = DMatrix::<f64>::zeros(n, n);
        for p in &self.transitions {
            support += p;
        }
        closed_class_count(&support)
    }

    /// True when every softmax policy induces a chain with a unique
    /// stationary distribution.
    pub fn has_unique_stationary(&self) -> bool {
        self.closed_class_count() == 1
    }
}

/// Counts closed strongly connected components of the graph `i → j` for
/// `p[(i, j)] > 0`.
pub(crate) fn closed_class_count(p: &DMatrix<f64>) -> usize {
    let n = p.nrows();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| p[(i, j)] > 0.0).collect())
        .collect();
    let component = strongly_connected_components(&adjacency);
    let count = component.iter().copied().max().map_or(0, |c| c + 1);
    let mut closed = vec![true; count];
    for (i, succ) in adjacency.iter().enumerate() {
        for &j in succ {
            if component[i] != component[j] {
                closed[component[i]] = false;
            }
        }
    }
    closed.into_iter().filter(|&c| c).count()
}

// Iterative Tarjan; returns the component index of each vertex.
fn strongly_connected_components(adjacency: &[Vec<usize>]) -> Vec<usize> {
    const UNVISITED: usize = usize::MAX;
    let n = adjacency.len();
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut component = vec![UNVISITED; n];
    let mut next_index = 0;
    let mut next_component = 0;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(top) = work.len().checked_sub(1) {
            let (v, edge) = work[top];
            if edge == 0 && index[v] == UNVISITED {
                index[v] = next_index;
                lowlink[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adjacency[v].get(edge) {
                work[top].1 += 1;
                if index[w] == UNVISITED {
                    work.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
            if lowlink[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    component[w] = next_component;
                    if w == v {
                        break;
                    }
                }
                next_component += 1;
            }
        }
    }
    component
}
