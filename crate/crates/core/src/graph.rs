//! Directed communication graphs, strong r-robustness and MEDAG construction.
//!
//! Nodes are 0-indexed internally. The text edge-list format and everything
//! user-facing is 1-indexed.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub type NodeId = usize;
pub type NodeSet = BTreeSet<NodeId>;

/// Largest non-source set the brute-force checker will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node {node} out of range for a {n}-node graph")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("set must be nonempty")]
    EmptySet,
    #[error("{nodes} non-source nodes exceed the brute-force limit of {BRUTE_FORCE_LIMIT}")]
    TooLarge { nodes: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("not strongly {threshold}-robust; stuck nodes {}", fmt_one_indexed(.residual))]
    NotRobust { threshold: usize, residual: NodeSet },
}

/// Formats a 0-indexed node set as `{1, 2, 3}` in 1-indexed form.
pub fn fmt_one_indexed(set: &NodeSet) -> String {
    let inner: Vec<String> = set.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", inner.join(", "))
}

/// A directed graph. An edge `(j, i)` means `j` can transmit to `i`.
#[derive(Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    edges: BTreeSet<(NodeId, NodeId)>,
    in_nbrs: Vec<Vec<NodeId>>,
    out_nbrs: Vec<Vec<NodeId>>,
    // In-neighbor bitmasks, only kept for graphs of at most 64 nodes.
    in_masks: Option<Vec<u64>>,
}

impl fmt::Debug for Digraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Digraph")
            .field("n", &self.n)
            .field("edges", &self.edges)
            .finish()
    }
}

impl Digraph {
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut set = BTreeSet::new();
        for (j, i) in edges {
            for node in [j, i] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            if j == i {
                return Err(GraphError::SelfLoop(i));
            }
            set.insert((j, i));
        }
        let mut in_nbrs = vec![Vec::new(); n];
        let mut out_nbrs = vec![Vec::new(); n];
        for &(j, i) in &set {
            in_nbrs[i].push(j);
            out_nbrs[j].push(i);
        }
        for list in in_nbrs.iter_mut() {
            list.sort_unstable();
        }
        let in_masks = (n <= 64).then(|| {
            in_nbrs
                .iter()
                .map(|list| list.iter().fold(0u64, |m, &j| m | (1 << j)))
                .collect()
        });
        Ok(Self {
            n,
            edges: set,
            in_nbrs,
            out_nbrs,
            in_masks,
        })
    }

    /// The complete digraph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (j, i)));
        Self::from_edges(n, edges).expect("complete graph is well formed")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.edges
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.edges.contains(&(from, to))
    }

    /// `N_i`, ascending.
    pub fn in_neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.in_nbrs[i]
    }

    pub fn out_neighbors(&self, j: NodeId) -> &[NodeId] {
        &self.out_nbrs[j]
    }

    pub fn nodes(&self) -> NodeSet {
        (0..self.n).collect()
    }

    fn check_set(&self, set: &NodeSet) -> Result<(), GraphError> {
        match set.iter().next_back() {
            Some(&node) if node >= self.n => Err(GraphError::NodeOutOfRange { node, n: self.n }),
            _ => Ok(()),
        }
    }

    /// Serializes to the edge-list format (1-indexed, one `j i` per line).
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {}\n", self.n);
        for &(j, i) in &self.edges {
            out.push_str(&format!("{} {}\n", j + 1, i + 1));
        }
        out
    }
}

/// Parses the 1-indexed edge-list format. Lines starting with `#` and blank
/// lines are ignored, except that a `# nodes N` line fixes the node count.
/// `nodes` overrides the count; otherwise it is the largest endpoint seen.
pub fn parse_edge_list(text: &str, nodes: Option<usize>) -> Result<Digraph, GraphError> {
    let mut edges = Vec::new();
    let mut declared = None;
    let mut max_node = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("nodes") {
                let count = words.next().and_then(|w| w.parse::<usize>().ok()).ok_or(
                    GraphError::Parse {
                        line: line_no,
                        msg: "expected `# nodes N`".into(),
                    },
                )?;
                declared = Some(count);
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(GraphError::Parse {
                line: line_no,
                msg: format!("expected two node ids, found {} fields", fields.len()),
            });
        }
        let mut ends = [0usize; 2];
        for (slot, field) in ends.iter_mut().zip(&fields) {
            *slot = match field.parse::<usize>() {
                Ok(v) if v >= 1 => v,
                _ => {
                    return Err(GraphError::Parse {
                        line: line_no,
                        msg: format!("`{field}` is not a 1-indexed node id"),
                    })
                }
            };
        }
        if ends[0] == ends[1] {
            return Err(GraphError::Parse {
                line: line_no,
                msg: format!("self-loop on node {}", ends[0]),
            });
        }
        max_node = max_node.max(ends[0]).max(ends[1]);
        edges.push((ends[0] - 1, ends[1] - 1));
    }
    let n = nodes.or(declared).unwrap_or(max_node);
    if max_node > n {
        return Err(GraphError::NodeOutOfRange { node: max_node - 1, n });
    }
    Digraph::from_edges(n, edges)
}

/// True iff some `i ∈ c` has at least `r` in-neighbors outside `c`.
pub fn is_r_reachable(g: &Digraph, c: &NodeSet, r: usize) -> Result<bool, GraphError> {
    if c.is_empty() {
        return Err(GraphError::EmptySet);
    }
    g.check_set(c)?;
    Ok(c.iter().any(|&i| {
        g.in_neighbors(i).iter().filter(|j| !c.contains(j)).count() >= r
    }))
}

/// Synchronized peeling from `sources` with threshold `r`. Returns the level
/// of each node, `None` for nodes never reached.
fn peel(g: &Digraph, sources: &NodeSet, r: usize) -> Vec<Option<usize>> {
    let n = g.node_count();
    let mut level = vec![None; n];
    for &s in sources {
        level[s] = Some(0);
    }
    if let Some(masks) = &g.in_masks {
        let mut reached = sources.iter().fold(0u64, |m, &s| m | (1 << s));
        let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut round = 0;
        loop {
            round += 1;
            let mut joined = 0u64;
            let mut rest = all & !reached;
            while rest != 0 {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                if (masks[i] & reached).count_ones() as usize >= r {
                    joined |= 1 << i;
                    level[i] = Some(round);
                }
            }
            if joined == 0 {
                return level;
            }
            reached |= joined;
        }
    }
    let mut round = 0;
    loop {
        round += 1;
        let joined: Vec<NodeId> = (0..n)
            .filter(|&i| level[i].is_none())
            .filter(|&i| {
                g.in_neighbors(i)
                    .iter()
                    .filter(|&&j| matches!(level[j], Some(l) if l < round))
                    .count()
                    >= r
            })
            .collect();
        if joined.is_empty() {
            return level;
        }
        for i in joined {
            level[i] = Some(round);
        }
    }
}

/// True iff every nonempty subset of `V \ sources` is r-reachable, decided by
/// peeling.
pub fn is_strongly_r_robust(g: &Digraph, sources: &NodeSet, r: usize) -> bool {
    if sources.iter().any(|&s| s >= g.node_count()) {
        return false;
    }
    peel(g, sources, r).iter().all(Option::is_some)
}

/// Exhaustive check of strong r-robustness over all nonempty subsets of
/// `V \ sources`.
pub fn brute_force_strongly_r_robust(
    g: &Digraph,
    sources: &NodeSet,
    r: usize,
) -> Result<bool, GraphError> {
    g.check_set(sources)?;
    let others: Vec<NodeId> = (0..g.node_count()).filter(|i| !sources.contains(i)).collect();
    let m = others.len();
    if m > BRUTE_FORCE_LIMIT {
        return Err(GraphError::TooLarge { nodes: m });
    }
    let mut from_sources = [0usize; BRUTE_FORCE_LIMIT];
    let mut local_mask = [0u32; BRUTE_FORCE_LIMIT];
    for (a, &i) in others.iter().enumerate() {
        for &j in g.in_neighbors(i) {
            match others.binary_search(&j) {
                Ok(b) => local_mask[a] |= 1 << b,
                Err(_) => from_sources[a] += 1,
            }
        }
    }
    let full: u32 = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
    for c in 1..=full {
        let mut members = c;
        let mut reachable = false;
        while members != 0 {
            let a = members.trailing_zeros() as usize;
            members &= members - 1;
            if from_sources[a] + (local_mask[a] & !c).count_ones() as usize >= r {
                reachable = true;
                break;
            }
        }
        if !reachable {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A mode estimation DAG: levels from the source set outward, and for each
/// node the restricted neighbor set it listens to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Medag {
    /// Index of the mode this MEDAG serves.
    pub mode: usize,
    /// Peeling threshold used to build it (`2f+1` or `mf+1`).
    pub threshold: usize,
    pub sources: NodeSet,
    /// Level of every node; sources sit at level 0.
    pub levels: Vec<usize>,
    /// Restricted neighbor sets, ascending. Empty for sources.
    pub neighbors: Vec<Vec<NodeId>>,
}

impl Medag {
    pub fn node_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, i: NodeId) -> usize {
        self.levels[i]
    }

    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.neighbors[i]
    }

    /// Deepest level index.
    pub fn depth(&self) -> usize {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    /// Nodes grouped by level.
    pub fn level_sets(&self) -> Vec<NodeSet> {
        let mut sets = vec![NodeSet::new(); self.depth() + 1];
        for (i, &l) in self.levels.iter().enumerate() {
            sets[l].insert(i);
        }
        sets
    }

    /// Edges `(l, i)` with `l ∈ N_i`.
    pub fn edges(&self) -> BTreeSet<(NodeId, NodeId)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().map(move |&l| (l, i)))
            .collect()
    }
}

/// Builds the MEDAG for `sources` with threshold `2f+1`.
pub fn build_medag(g: &Digraph, sources: &NodeSet, f: usize) -> Result<Medag, GraphError> {
    build_medag_with_threshold(g, sources, 2 * f + 1)
}

/// Builds a MEDAG by synchronized peeling with an arbitrary threshold.
pub fn build_medag_with_threshold(
    g: &Digraph,
    sources: &NodeSet,
    threshold: usize,
) -> Result<Medag, GraphError> {
    if sources.is_empty() {
        return Err(GraphError::EmptySet);
    }
    g.check_set(sources)?;
    let peeled = peel(g, sources, threshold);
    let residual: NodeSet = (0..g.node_count()).filter(|&i| peeled[i].is_none()).collect();
    if !residual.is_empty() {
        return Err(GraphError::NotRobust {
            threshold,
            residual,
        });
    }
    let levels: Vec<usize> = peeled.into_iter().map(|l| l.unwrap_or(0)).collect();
    let neighbors = (0..g.node_count())
        .map(|i| {
            g.in_neighbors(i)
                .iter()
                .copied()
                .filter(|&l| levels[l] < levels[i])
                .collect()
        })
        .collect();
    Ok(Medag {
        mode: 0,
        threshold,
        sources: sources.clone(),
        levels,
        neighbors,
    })
}

/// Why a MEDAG fails verification.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MedagViolation {
    #[error("adversary set is not {f}-local: node {} hears {count} adversaries", .node + 1)]
    NotFLocal { f: usize, node: NodeId, count: usize },
    #[error("MEDAG covers {got} nodes, graph has {expected}")]
    Size { expected: usize, got: usize },
    #[error("node {} lists {} which is not an in-neighbor", .node + 1, .neighbor + 1)]
    NotAnEdge { node: NodeId, neighbor: NodeId },
    #[error("node {} has {count} restricted neighbors, needs {needed}", .node + 1)]
    TooFewNeighbors { node: NodeId, count: usize, needed: usize },
    #[error("level 0 does not match the regular sources at node {}", .node + 1)]
    SourceLevel { node: NodeId },
    #[error("node {} at level {level} listens to regular node {} at level {neighbor_level}", .node + 1, .neighbor + 1)]
    LevelOrder {
        node: NodeId,
        level: usize,
        neighbor: NodeId,
        neighbor_level: usize,
    },
}

/// Checks `medag` against `g` for a given adversary set.
pub fn check_medag(
    g: &Digraph,
    medag: &Medag,
    sources: &NodeSet,
    f: usize,
    adversaries: &NodeSet,
) -> Result<(), MedagViolation> {
    let n = g.node_count();
    if medag.levels.len() != n || medag.neighbors.len() != n {
        return Err(MedagViolation::Size {
            expected: n,
            got: medag.levels.len().min(medag.neighbors.len()),
        });
    }
    for i in (0..n).filter(|i| !adversaries.contains(i)) {
        let count = g.in_neighbors(i).iter().filter(|j| adversaries.contains(j)).count();
        if count > f {
            return Err(MedagViolation::NotFLocal { f, node: i, count });
        }
    }
    for i in 0..n {
        if let Some(&l) = medag.neighbors[i].iter().find(|&&l| !g.has_edge(l, i)) {
            return Err(MedagViolation::NotAnEdge { node: i, neighbor: l });
        }
    }
    for i in (0..n).filter(|i| !adversaries.contains(i)) {
        let is_source = sources.contains(&i);
        if is_source != (medag.levels[i] == 0) {
            return Err(MedagViolation::SourceLevel { node: i });
        }
        if is_source {
            continue;
        }
        let count = medag.neighbors[i].len();
        if count < 2 * f + 1 {
            return Err(MedagViolation::TooFewNeighbors {
                node: i,
                count,
                needed: 2 * f + 1,
            });
        }
        for &l in medag.neighbors[i].iter().filter(|l| !adversaries.contains(l)) {
            if medag.levels[l] >= medag.levels[i] {
                return Err(MedagViolation::LevelOrder {
                    node: i,
                    level: medag.levels[i],
                    neighbor: l,
                    neighbor_level: medag.levels[l],
                });
            }
        }
    }
    Ok(())
}

/// Boolean form of [`check_medag`].
pub fn verify_medag(
    g: &Digraph,
    medag: &Medag,
    sources: &NodeSet,
    f: usize,
    adversaries: &NodeSet,
) -> bool {
    check_medag(g, medag, sources, f, adversaries).is_ok()
}

/// True iff no regular node has more than `f` adversarial in-neighbors.
pub fn f_local_check(g: &Digraph, adversaries: &NodeSet, f: usize) -> bool {
    (0..g.node_count())
        .filter(|i| !adversaries.contains(i))
        .all(|i| g.in_neighbors(i).iter().filter(|j| adversaries.contains(j)).count() <= f)
}
