//! Immutable undirected graphs and the set primitives every other module
//! consumes: neighborhoods `N(A)` and cuts `cut(A, B)`.

mod edge_list;
mod generate;

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

pub use edge_list::EdgeListBuilder;
pub use generate::{first_order_gap_instance, generate, grid_index, TopologySpec};

use crate::{Error, Result};

/// Dense internal node id, always `< node_count`.
pub type NodeId = u32;

/// An ordered set of node ids; iteration is ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct NodeSet(Vec<NodeId>);

impl NodeSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn singleton(v: NodeId) -> Self {
        Self(vec![v])
    }

    pub(crate) fn from_sorted(ids: Vec<NodeId>) -> Self {
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        Self(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[NodeId] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<NodeId> {
        self.0
    }

    pub fn insert(&mut self, v: NodeId) -> bool {
        match self.0.binary_search(&v) {
            Ok(_) => false,
            Err(at) => {
                self.0.insert(at, v);
                true
            }
        }
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        self.iter().chain(other.iter()).collect()
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        Self(self.iter().filter(|&v| !other.contains(v)).collect())
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        Self(self.iter().filter(|&v| other.contains(v)).collect())
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.iter().all(|v| !other.contains(v))
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.iter().all(|v| other.contains(v))
    }

    /// Checks that every id addresses a node of `g`.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        match self.0.last() {
            Some(&v) if v as usize >= g.node_count() => Err(Error::InvalidParameter(
                alloc::format!("node {v} out of range for {} nodes", g.node_count()),
            )),
            _ => Ok(()),
        }
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<T: IntoIterator<Item = NodeId>>(iter: T) -> Self {
        let mut ids: Vec<NodeId> = iter.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        Self(ids)
    }
}

impl<const N: usize> From<[NodeId; N]> for NodeSet {
    fn from(ids: [NodeId; N]) -> Self {
        ids.into_iter().collect()
    }
}

impl From<Vec<NodeId>> for NodeSet {
    fn from(ids: Vec<NodeId>) -> Self {
        ids.into_iter().collect()
    }
}

/// Root and per-node level (root is level 1) of a rooted tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedTree {
    pub root: NodeId,
    pub levels: Vec<u32>,
}

/// Undirected simple graph in compressed adjacency form.
///
/// Adjacency lists are sorted and symmetric, there are no self-loops or
/// parallel edges, and node ids run over `0..node_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    labels: Option<Vec<u64>>,
    tree: Option<RootedTree>,
    boundary: Option<Vec<bool>>,
}

impl Graph {
    /// Builds a graph on `node_count` nodes; self-loops are dropped and
    /// duplicate or reversed edges are merged.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        if node_count > NodeId::MAX as usize {
            return Err(Error::SizeOverflow);
        }
        let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
        for (u, v) in edges {
            if u as usize >= node_count || v as usize >= node_count {
                return Err(Error::InvalidParameter(alloc::format!(
                    "edge ({u}, {v}) out of range for {node_count} nodes"
                )));
            }
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; node_count + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..node_count {
            offsets[i + 1] += offsets[i];
        }
        let targets = pairs.into_iter().map(|(_, v)| v).collect();
        Ok(Self {
            offsets,
            targets,
            labels: None,
            tree: None,
            boundary: None,
        })
    }

    pub(crate) fn with_labels(mut self, labels: Vec<u64>) -> Self {
        debug_assert_eq!(labels.len(), self.node_count());
        self.labels = Some(labels);
        self
    }

    pub(crate) fn with_boundary(mut self, boundary: Vec<bool>) -> Self {
        self.boundary = Some(boundary);
        self
    }

    /// Marks the graph as a tree rooted at `root` and records node levels.
    pub fn rooted_at(mut self, root: NodeId) -> Result<Self> {
        let n = self.node_count();
        if root as usize >= n || self.edge_count() + 1 != n {
            return Err(Error::NotRootedTree);
        }
        let mut levels = vec![0u32; n];
        levels[root as usize] = 1;
        let mut queue = VecDeque::from([root]);
        let mut seen = 1usize;
        while let Some(v) = queue.pop_front() {
            for &u in self.neighbors(v) {
                if levels[u as usize] == 0 {
                    levels[u as usize] = levels[v as usize] + 1;
                    seen += 1;
                    queue.push_back(u);
                }
            }
        }
        if seen != n {
            return Err(Error::NotRootedTree);
        }
        self.tree = Some(RootedTree { root, levels });
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Largest adjacency length; 0 for an edgeless graph.
    pub fn max_degree(&self) -> usize {
        (0..self.node_count() as NodeId)
            .map(|v| self.degree(v))
            .max()
            .unwrap_or(0)
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count() as NodeId).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// External id of `v` when the graph was loaded from a file.
    pub fn label(&self, v: NodeId) -> u64 {
        match &self.labels {
            Some(labels) => labels[v as usize],
            None => u64::from(v),
        }
    }

    pub fn labels(&self) -> Option<&[u64]> {
        self.labels.as_deref()
    }

    /// Internal id for an external label.
    pub fn node_for_label(&self, label: u64) -> Option<NodeId> {
        match &self.labels {
            Some(labels) => labels.binary_search(&label).ok().map(|i| i as NodeId),
            None => (label < self.node_count() as u64).then_some(label as NodeId),
        }
    }

    pub fn tree(&self) -> Option<&RootedTree> {
        self.tree.as_ref()
    }

    /// Whether `v` lies on the generator's boundary (grid faces, tree leaves).
    pub fn is_boundary(&self, v: NodeId) -> bool {
        self.boundary.as_ref().is_some_and(|b| b[v as usize])
    }

    pub fn has_boundary(&self) -> bool {
        self.boundary.is_some()
    }
}

/// `N(A)`: nodes adjacent to `a` that are not in `a`.
pub fn neighborhood(g: &Graph, a: &NodeSet) -> NodeSet {
    a.iter()
        .flat_map(|v| g.neighbors(v).iter().copied())
        .filter(|&u| !a.contains(u))
        .collect()
}

/// `cut(A, B) = Σ_{v ∈ B} |{(u, v) ∈ E : u ∈ A}|`.
pub fn cut_between(g: &Graph, a: &NodeSet, b: &NodeSet) -> usize {
    b.iter()
        .map(|v| g.neighbors(v).iter().filter(|&&u| a.contains(u)).count())
        .sum()
}

/// `cut(A) = cut(A, N(A))`.
pub fn cut(g: &Graph, a: &NodeSet) -> usize {
    cut_between(g, a, &neighborhood(g, a))
}

pub fn max_degree(g: &Graph) -> usize {
    g.max_degree()
}
