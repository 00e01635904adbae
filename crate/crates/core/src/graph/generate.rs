use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Graph, NodeId};
use crate::rng::stream;
use crate::{Error, Result};

/// Synthetic topologies.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum TopologySpec {
    /// Every node, root included, has `children` children; `depth` levels
    /// with the root on level 1.
    RegularTree { children: usize, depth: usize },
    /// Finite `dim`-dimensional lattice with hard edges.
    Grid { dim: usize, side: usize },
    /// `G(n, s)`: every unordered pair is an edge with probability `s`.
    ErdosRenyi { n: usize, s: f64, seed: u64 },
    /// Barabási–Albert growth: each new node links to `m` distinct existing
    /// nodes chosen proportionally to degree.
    PreferentialAttachment { n: usize, m: usize, seed: u64 },
}

impl TopologySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        match *self {
            Self::RegularTree { children, depth } if children < 1 || depth < 1 => {
                bad("regular tree needs children >= 1 and depth >= 1")
            }
            Self::Grid { dim, side } if dim < 1 || side < 1 => {
                bad("grid needs dim >= 1 and side >= 1")
            }
            Self::ErdosRenyi { s, .. } if !(0.0..=1.0).contains(&s) => {
                bad("edge probability outside [0, 1]")
            }
            Self::PreferentialAttachment { n, m, .. } if m < 1 || n <= m => {
                bad("preferential attachment needs 1 <= m < n")
            }
            _ => Ok(()),
        }
    }
}

pub fn generate(spec: &TopologySpec) -> Result<Graph> {
    spec.validate()?;
    match *spec {
        TopologySpec::RegularTree { children, depth } => regular_tree(children, depth),
        TopologySpec::Grid { dim, side } => grid(dim, side),
        TopologySpec::ErdosRenyi { n, s, seed } => erdos_renyi(n, s, seed),
        TopologySpec::PreferentialAttachment { n, m, seed } => preferential_attachment(n, m, seed),
    }
}

fn checked_count(n: Option<usize>) -> Result<usize> {
    match n {
        Some(n) if n <= NodeId::MAX as usize => Ok(n),
        _ => Err(Error::SizeOverflow),
    }
}

// Breadth-first numbering: the children of v are d*v + 1 ..= d*v + d.
fn regular_tree(d: usize, depth: usize) -> Result<Graph> {
    let mut n = Some(0usize);
    let mut level_size = Some(1usize);
    for _ in 0..depth {
        n = n.zip(level_size).and_then(|(a, b)| a.checked_add(b));
        level_size = level_size.and_then(|s| s.checked_mul(d));
    }
    let n = checked_count(n)?;
    let edges = (1..n).map(|v| (((v - 1) / d) as NodeId, v as NodeId));
    let g = Graph::from_edges(n, edges)?.rooted_at(0)?;
    let levels = &g.tree().expect("rooted").levels;
    let boundary = levels.iter().map(|&l| l as usize == depth).collect();
    Ok(g.with_boundary(boundary))
}

/// Node id of lattice coordinates (first coordinate varies fastest).
pub fn grid_index(side: usize, coords: &[usize]) -> NodeId {
    coords.iter().rev().fold(0usize, |acc, &c| acc * side + c) as NodeId
}

fn grid(dim: usize, side: usize) -> Result<Graph> {
    let n = checked_count((0..dim).try_fold(1usize, |acc, _| acc.checked_mul(side)))?;
    let mut edges = Vec::with_capacity(n * dim);
    let mut boundary = vec![false; n];
    for v in 0..n {
        let mut rest = v;
        let mut stride = 1;
        for _ in 0..dim {
            let c = rest % side;
            rest /= side;
            if c == 0 || c + 1 == side {
                boundary[v] = true;
            }
            if c + 1 < side {
                edges.push((v as NodeId, (v + stride) as NodeId));
            }
            stride *= side;
        }
    }
    Ok(Graph::from_edges(n, edges)?.with_boundary(boundary))
}

/// Geometric skipping over the pair sequence (Batagelj & Brandes) so sparse
/// graphs cost O(n + m) draws.
fn erdos_renyi(n: usize, s: f64, seed: u64) -> Result<Graph> {
    let n = checked_count(Some(n))?;
    let mut edges = Vec::new();
    if s >= 1.0 {
        for u in 0..n {
            edges.extend((u + 1..n).map(|v| (u as NodeId, v as NodeId)));
        }
    } else if s > 0.0 && n > 1 {
        let mut rng = stream(seed, 0);
        let log_q = libm::log(1.0 - s);
        let (mut v, mut w) = (1usize, -1i64);
        while v < n {
            let r: f64 = rng.random();
            w += 1 + libm::floor(libm::log(1.0 - r) / log_q) as i64;
            while w >= v as i64 && v < n {
                w -= v as i64;
                v += 1;
            }
            if v < n {
                edges.push((v as NodeId, w as NodeId));
            }
        }
    }
    Graph::from_edges(n, edges)
}

fn preferential_attachment(n: usize, m: usize, seed: u64) -> Result<Graph> {
    let n = checked_count(Some(n))?;
    let mut rng = stream(seed, 0);
    let mut edges = Vec::with_capacity(n * m);
    // Endpoint multiset: sampling uniformly from it is degree-proportional.
    let mut ends: Vec<NodeId> = Vec::with_capacity(2 * n * m);
    for u in 0..=m {
        for v in u + 1..=m {
            edges.push((u as NodeId, v as NodeId));
            ends.extend([u as NodeId, v as NodeId]);
        }
    }
    let mut targets: Vec<NodeId> = Vec::with_capacity(m);
    for v in m + 1..n {
        targets.clear();
        while targets.len() < m {
            let t = ends[rng.random_range(0..ends.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((v as NodeId, t));
            ends.extend([v as NodeId, t]);
        }
    }
    Graph::from_edges(n, edges)
}

/// A graph on which every first-order policy is beaten: a source joined to
/// three level-2 nodes, each joined to both level-3 nodes, each of which is
/// joined to all `level4` leaves. Node 0 is the source, 1..=3 are level 2,
/// 4 and 5 are level 3 and the leaves follow.
pub fn first_order_gap_instance(level4: usize) -> Result<Graph> {
    if level4 == 0 {
        return Err(Error::InvalidParameter(format!(
            "need at least one level-4 node, got {level4}"
        )));
    }
    let mut edges = Vec::new();
    for l2 in 1..=3 {
        edges.push((0, l2));
        edges.extend([(l2, 4), (l2, 5)]);
    }
    for leaf in 6..6 + level4 as NodeId {
        edges.extend([(4, leaf), (5, leaf)]);
    }
    Graph::from_edges(6 + level4, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{cut, neighborhood, NodeSet};
    use rand::seq::IteratorRandom;

    #[test]
    fn tree_with_one_level_of_children() {
        let g = generate(&TopologySpec::RegularTree {
            children: 3,
            depth: 2,
        })
        .unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.neighbors(0), &[1, 2, 3]);
        let root = NodeSet::singleton(0);
        let deep = generate(&TopologySpec::RegularTree {
            children: 3,
            depth: 3,
        })
        .unwrap();
        assert_eq!(neighborhood(&deep, &root), NodeSet::from([1, 2, 3]));
        assert_eq!(deep.max_degree(), 4);
    }

    #[test]
    fn grid_3x3() {
        let g = generate(&TopologySpec::Grid { dim: 2, side: 3 }).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (9, 12));
        assert!(!g.is_boundary(grid_index(3, &[1, 1])));
        assert!(g.is_boundary(grid_index(3, &[0, 1])));
    }

    #[test]
    fn grid_3d_degrees() {
        let g = generate(&TopologySpec::Grid { dim: 3, side: 4 }).unwrap();
        assert_eq!(g.node_count(), 64);
        assert_eq!(g.degree(grid_index(4, &[1, 2, 1])), 6);
        assert_eq!(g.edge_count(), 3 * 3 * 16);
    }

    #[test]
    fn erdos_renyi_extremes() {
        let k4 = generate(&TopologySpec::ErdosRenyi {
            n: 4,
            s: 1.0,
            seed: 9,
        })
        .unwrap();
        assert_eq!(k4.edge_count(), 6);
        let empty = generate(&TopologySpec::ErdosRenyi {
            n: 5,
            s: 0.0,
            seed: 9,
        })
        .unwrap();
        assert_eq!(empty.edge_count(), 0);
    }

    #[test]
    fn erdos_renyi_is_reproducible_and_has_expected_density() {
        let spec = TopologySpec::ErdosRenyi {
            n: 400,
            s: 0.05,
            seed: 11,
        };
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        let expected = 0.05 * 400.0 * 399.0 / 2.0;
        let sd = libm::sqrt(expected * 0.95);
        assert!(
            (a.edge_count() as f64 - expected).abs() < 4.0 * sd,
            "{}",
            a.edge_count()
        );
    }

    #[test]
    fn preferential_attachment_edge_count() {
        let g = generate(&TopologySpec::PreferentialAttachment {
            n: 200,
            m: 2,
            seed: 1,
        })
        .unwrap();
        assert_eq!(g.edge_count(), 3 + 2 * (200 - 3));
        assert!(g.max_degree() > 10);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&TopologySpec::RegularTree {
            children: 0,
            depth: 3
        })
        .is_err());
        assert!(generate(&TopologySpec::ErdosRenyi {
            n: 3,
            s: 1.5,
            seed: 0
        })
        .is_err());
        assert_eq!(
            generate(&TopologySpec::RegularTree {
                children: 1000,
                depth: 9
            }),
            Err(Error::SizeOverflow)
        );
    }

    /// |N(A)| = cut(A) = |A|(d-1)+1 for connected root-containing A.
    #[test]
    fn tree_neighborhood_identity_on_random_connected_sets() {
        let mut rng = stream(42, 0);
        for d in 2..=4usize {
            let g = generate(&TopologySpec::RegularTree {
                children: d,
                depth: 7,
            })
            .unwrap();
            for _ in 0..100 {
                let size = rng.random_range(1..40usize);
                let mut a = NodeSet::singleton(0);
                while a.len() < size {
                    let frontier = neighborhood(&g, &a);
                    let v = frontier
                        .iter()
                        .filter(|&v| !g.is_boundary(v))
                        .choose(&mut rng)
                        .unwrap();
                    a.insert(v);
                }
                let expected = a.len() * (d - 1) + 1;
                assert_eq!(neighborhood(&g, &a).len(), expected);
                assert_eq!(cut(&g, &a), expected);
            }
        }
    }

    #[test]
    fn gap_instance_shape() {
        let g = first_order_gap_instance(2).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.edge_count(), 3 + 6 + 4);
    }
}
