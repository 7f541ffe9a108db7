use crate::graph::NodeId;

/// Per-step record of one simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub seed: u64,
    pub config_digest: String,
    pub channel_digest: String,
    /// Last recorded step; records cover `0..=horizon`.
    pub horizon: u64,
    pub lambdas: Vec<f64>,
    /// Regular nodes, ascending; the node axis of every per-node record.
    pub nodes: Vec<NodeId>,
    /// `truth[k][j]`.
    pub truth: Vec<Vec<f64>>,
    /// `estimates[k][node][j]`.
    pub estimates: Vec<Vec<Vec<f64>>>,
    /// `errors[k][node][j] = estimate − truth`.
    pub errors: Vec<Vec<Vec<f64>>>,
    /// Euclidean norm of the state-space error, `state_errors[k][node]`.
    pub state_errors: Vec<Vec<f64>>,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.truth.len()
    }

    pub fn node_index(&self, node: NodeId) -> Option<usize> {
        self.nodes.binary_search(&node).ok()
    }

    pub fn error(&self, k: usize, node: NodeId, mode: usize) -> f64 {
        self.errors[k][self.node_index(node).expect("regular node")][mode]
    }

    /// Largest state-space error over regular nodes at step `k`.
    pub fn max_state_error(&self, k: usize) -> f64 {
        self.state_errors[k].iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn final_max_state_error(&self) -> f64 {
        self.max_state_error(self.steps() - 1)
    }

    /// Largest absolute modal error over regular nodes at step `k`.
    pub fn max_mode_error(&self, k: usize) -> f64 {
        self.errors[k]
            .iter()
            .flatten()
            .fold(0.0, |a, &b| a.max(b.abs()))
    }
}
