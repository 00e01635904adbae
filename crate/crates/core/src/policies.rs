//! Vaccination policies behind one selection contract.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::dynamics::{InfectionState, Status};
use crate::graph::{Graph, NodeId, NodeSet};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PolicyKind {
    /// Vaccinate the `b` frontier nodes with the most infected neighbors.
    Cut,
    /// Uniform `b`-subset of the frontier.
    Random,
    /// Level-priority policy for regular trees.
    Tree,
    /// Fixed per-step sets; step `t` uses entry `t` (empty past the end).
    Scripted(Vec<NodeSet>),
    NoOp,
}

impl PolicyKind {
    /// Only ever vaccinates inside `N(s)`.
    pub fn is_first_order(&self) -> bool {
        matches!(self, Self::Cut | Self::Random | Self::Tree | Self::NoOp)
    }

    /// Output depends on the state alone.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Self::Random)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Cut => "cut",
            Self::Random => "random",
            Self::Tree => "tree",
            Self::Scripted(_) => "scripted",
            Self::NoOp => "noop",
        }
    }

    /// Scripted ids must exist in `g`.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        match self {
            Self::Scripted(steps) => steps.iter().try_for_each(|s| s.validate(g)),
            Self::Tree if g.tree().is_none() => Err(Error::NotRootedTree),
            _ => Ok(()),
        }
    }

    /// The set to vaccinate in state `s` at step `t` with budget `b`.
    pub fn select<R: Rng + ?Sized>(
        &self,
        g: &Graph,
        s: &InfectionState,
        b: usize,
        t: usize,
        rng: &mut R,
    ) -> Result<NodeSet> {
        match self {
            Self::Cut => Ok(cut_select(g, s, b)),
            Self::Random => Ok(random_select(g, s, b, rng)),
            Self::Tree => tree_select(g, s, b),
            Self::Scripted(steps) => scripted_select(steps, s, t),
            Self::NoOp => Ok(NodeSet::new()),
        }
    }
}

/// The `b` frontier nodes with the largest `cut(I, v)`, ties to lower ids.
///
/// The post-vaccination cut is a sum of per-node terms, so the top `b`
/// nodes minimize it exactly.
pub fn cut_select(_g: &Graph, s: &InfectionState, b: usize) -> NodeSet {
    let mut frontier: Vec<(usize, NodeId)> = s
        .frontier()
        .iter()
        .map(|v| (s.infected_neighbors(v), v))
        .collect();
    if frontier.len() > b {
        frontier.sort_unstable_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        frontier.truncate(b);
    }
    frontier.into_iter().map(|(_, v)| v).collect()
}

/// Uniform `min(b, |N(s)|)`-subset of the frontier.
pub fn random_select<R: Rng + ?Sized>(
    _g: &Graph,
    s: &InfectionState,
    b: usize,
    rng: &mut R,
) -> NodeSet {
    let frontier = s.frontier();
    if frontier.len() <= b {
        return frontier;
    }
    index::sample(rng, frontier.len(), b)
        .into_iter()
        .map(|i| frontier.as_slice()[i])
        .collect()
}

/// Applies the tree policy `b` times.
///
/// Each pick takes the lowest-level remaining frontier node, except that a
/// healthy root on the frontier is left for last while another candidate
/// exists. Ties go to the lowest id.
pub fn tree_select(g: &Graph, s: &InfectionState, b: usize) -> Result<NodeSet> {
    let tree = g.tree().ok_or(Error::NotRootedTree)?;
    let mut candidates: Vec<NodeId> = s.frontier().into_vec();
    candidates.sort_by_key(|&v| (tree.levels[v as usize], v));
    let mut chosen = NodeSet::new();
    for _ in 0..b.min(candidates.len()) {
        let first = candidates[0];
        let pick = if first == tree.root && candidates.len() >= 2 {
            1
        } else {
            0
        };
        chosen.insert(candidates.remove(pick));
    }
    Ok(chosen)
}

fn scripted_select(steps: &[NodeSet], s: &InfectionState, t: usize) -> Result<NodeSet> {
    let Some(step) = steps.get(t) else {
        return Ok(NodeSet::new());
    };
    if let Some(v) = step.iter().find(|&v| s.status(v) == Status::Infected) {
        return Err(Error::ContractViolation(format!(
            "scripted step {t} vaccinates infected node {v}"
        )));
    }
    Ok(step.iter().filter(|&v| s.is_healthy(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{cut_between, generate, TopologySpec};
    use crate::rng::stream;
    use proptest::prelude::*;

    fn state(g: &Graph, i: &[NodeId]) -> InfectionState {
        InfectionState::from_infected(g, &i.iter().copied().collect()).unwrap()
    }

    fn path(n: u32) -> Graph {
        Graph::from_edges(n as usize, (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }

    #[test]
    fn cut_examples() {
        let tri = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(
            cut_select(&tri, &state(&tri, &[0, 1]), 1),
            NodeSet::from([2])
        );
        let p5 = path(5);
        assert_eq!(cut_select(&p5, &state(&p5, &[2]), 1), NodeSet::from([1]));
        let pendant = Graph::from_edges(4, [(0, 1), (0, 2), (1, 2), (2, 3)]).unwrap();
        assert_eq!(
            cut_select(&pendant, &state(&pendant, &[0, 1]), 1),
            NodeSet::from([2])
        );
        let star = Graph::from_edges(5, (1..5).map(|v| (0, v))).unwrap();
        assert_eq!(
            cut_select(&star, &state(&star, &[1, 2]), 1),
            NodeSet::from([0])
        );
        assert_eq!(cut_select(&p5, &state(&p5, &[2]), 5), NodeSet::from([1, 3]));
    }

    #[test]
    fn noop_and_random_edges() {
        let p3 = path(3);
        let s = state(&p3, &[1]);
        let mut rng = stream(0, 0);
        assert!(PolicyKind::NoOp
            .select(&p3, &s, 4, 0, &mut rng)
            .unwrap()
            .is_empty());
        assert_eq!(random_select(&p3, &s, 2, &mut rng), NodeSet::from([0, 2]));
        let dead =
            InfectionState::new(&p3, &NodeSet::singleton(1), &NodeSet::from([0, 2])).unwrap();
        assert!(random_select(&p3, &dead, 2, &mut rng).is_empty());
    }

    #[test]
    fn random_is_uniform_on_p3() {
        let p3 = path(3);
        let s = state(&p3, &[1]);
        let mut rng = stream(11, 0);
        let draws = 10_000;
        let zeros = (0..draws)
            .filter(|_| random_select(&p3, &s, 1, &mut rng).contains(0))
            .count();
        let freq = zeros as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn tree_policy_examples() {
        let g = generate(&TopologySpec::RegularTree {
            children: 2,
            depth: 4,
        })
        .unwrap();
        assert_eq!(
            tree_select(&g, &state(&g, &[0]), 1).unwrap(),
            NodeSet::from([1])
        );
        // Seeded at child 1: frontier is {0, 3, 4}; the root waits.
        assert_eq!(
            tree_select(&g, &state(&g, &[1]), 1).unwrap(),
            NodeSet::from([3])
        );
        assert_eq!(
            tree_select(&g, &state(&g, &[1]), 2).unwrap(),
            NodeSet::from([3, 4])
        );
        assert_eq!(
            tree_select(&g, &state(&g, &[1]), 3).unwrap(),
            NodeSet::from([0, 3, 4])
        );
        let forced =
            InfectionState::new(&g, &NodeSet::singleton(1), &NodeSet::from([3, 4])).unwrap();
        assert_eq!(tree_select(&g, &forced, 1).unwrap(), NodeSet::from([0]));
        // Deeper seed: the parent is the unique lowest-level neighbor.
        assert_eq!(
            tree_select(&g, &state(&g, &[3]), 1).unwrap(),
            NodeSet::from([1])
        );
        let plain = path(4);
        assert_eq!(
            tree_select(&plain, &state(&plain, &[1]), 1),
            Err(Error::NotRootedTree)
        );
    }

    #[test]
    fn scripted_filters_and_rejects() {
        let p5 = path(5);
        let script = PolicyKind::Scripted(alloc::vec![NodeSet::from([1, 4]), NodeSet::from([2])]);
        let s = InfectionState::new(&p5, &NodeSet::singleton(2), &NodeSet::singleton(4)).unwrap();
        let mut rng = stream(0, 0);
        assert_eq!(
            script.select(&p5, &s, 2, 0, &mut rng).unwrap(),
            NodeSet::from([1])
        );
        assert!(matches!(
            script.select(&p5, &s, 2, 1, &mut rng),
            Err(Error::ContractViolation(_))
        ));
        assert!(script.select(&p5, &s, 2, 7, &mut rng).unwrap().is_empty());
        let bad = PolicyKind::Scripted(alloc::vec![NodeSet::from([9])]);
        assert!(bad.validate(&p5).is_err());
    }

    fn combinations(items: &[NodeId], k: usize) -> Vec<Vec<NodeId>> {
        if k == 0 {
            return alloc::vec![Vec::new()];
        }
        if items.len() < k {
            return Vec::new();
        }
        let mut out = Vec::new();
        for (i, &v) in items.iter().enumerate() {
            for mut rest in combinations(&items[i + 1..], k - 1) {
                rest.insert(0, v);
                out.push(rest);
            }
        }
        out
    }

    fn random_instance() -> impl Strategy<Value = (Graph, NodeSet, NodeSet, usize, u64)> {
        (4usize..13, 0.15f64..0.6, any::<u64>(), 0usize..4).prop_flat_map(|(n, s, seed, b)| {
            let g = generate(&TopologySpec::ErdosRenyi { n, s, seed }).unwrap();
            (
                Just(g),
                proptest::collection::vec(0u8..4, n),
                Just(b),
                any::<u64>(),
            )
                .prop_map(|(g, labels, b, rs)| {
                    let pick = |want: u8| {
                        labels
                            .iter()
                            .enumerate()
                            .filter(|&(_, &l)| l == want)
                            .map(|(v, _)| v as NodeId)
                            .collect::<NodeSet>()
                    };
                    (g, pick(1), pick(2), b, rs)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn first_order_full_budget((g, i, b_set, b, rs) in random_instance()) {
            let s = InfectionState::new(&g, &i, &b_set).unwrap();
            let frontier = s.frontier();
            let mut rng = stream(rs, 0);
            for policy in [PolicyKind::Cut, PolicyKind::Random] {
                let chosen = policy.select(&g, &s, b, 0, &mut rng).unwrap();
                prop_assert!(chosen.is_subset(&frontier));
                prop_assert_eq!(chosen.len(), b.min(frontier.len()));
            }
        }

        #[test]
        fn cut_select_is_optimal((g, i, b_set, b, _rs) in random_instance()) {
            let s = InfectionState::new(&g, &i, &b_set).unwrap();
            let frontier = s.frontier();
            prop_assume!(frontier.len() <= 12 && b <= 3);
            let k = b.min(frontier.len());
            let residual = |chosen: &NodeSet| cut_between(&g, &i, &frontier.difference(chosen));
            let best = combinations(frontier.as_slice(), k)
                .into_iter()
                .map(|c| residual(&c.into_iter().collect()))
                .min()
                .unwrap();
            prop_assert_eq!(residual(&cut_select(&g, &s, b)), best);
        }
    }

    #[test]
    fn tree_policy_is_first_order_on_trees() {
        let g = generate(&TopologySpec::RegularTree {
            children: 3,
            depth: 4,
        })
        .unwrap();
        let mut rng = stream(5, 0);
        for seed_node in 0..g.node_count() as NodeId {
            let s = state(&g, &[seed_node]);
            for b in 0..4 {
                let chosen = PolicyKind::Tree.select(&g, &s, b, 0, &mut rng).unwrap();
                assert!(chosen.is_subset(&s.frontier()));
                assert_eq!(chosen.len(), b.min(s.frontier_len()));
            }
        }
    }
}
