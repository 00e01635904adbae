//! Parsing of generator strings, initial infections and policy flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use fflab_core::dynamics::InfectionState;
use fflab_core::graph::{first_order_gap_instance, generate, grid_index, TopologySpec};
use fflab_core::policies::PolicyKind;
use fflab_core::rng::{derive_seed, stream};
use fflab_core::{Graph, NodeId, NodeSet};
use serde::{Deserialize, Serialize};

use crate::io;

/// Tag mixed into the master seed for initial-infection draws.
const INITIAL_TAG: u64 = 0x1d0;

/// `grid:DIM:SIDE`, `tree:CHILDREN:DEPTH`, `er:N:S:SEED`, `ba:N:M:SEED` or
/// `gap:LEVEL4`.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorSpec {
    Topology(TopologySpec),
    FirstOrderGap { level4: usize },
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<Graph> {
        Ok(match self {
            Self::Topology(t) => generate(t)?,
            Self::FirstOrderGap { level4 } => first_order_gap_instance(*level4)?,
        })
    }
}

impl FromStr for GeneratorSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts[i]
                .parse()
                .with_context(|| format!("generator {s:?}: field {} is not a count", i + 1))
        };
        let seed = |i: usize| -> Result<u64> {
            parts[i]
                .parse()
                .with_context(|| format!("generator {s:?}: field {} is not a seed", i + 1))
        };
        let spec = match (parts[0], parts.len()) {
            ("grid", 3) => Self::Topology(TopologySpec::Grid { dim: num(1)?, side: num(2)? }),
            ("tree", 3) => Self::Topology(TopologySpec::RegularTree { children: num(1)?, depth: num(2)? }),
            ("er", 4) => {
                let p: f64 = parts[2].parse().with_context(|| format!("generator {s:?}: bad edge probability"))?;
                Self::Topology(TopologySpec::ErdosRenyi { n: num(1)?, s: p, seed: seed(3)? })
            }
            ("ba", 4) => Self::Topology(TopologySpec::PreferentialAttachment { n: num(1)?, m: num(2)?, seed: seed(3)? }),
            ("gap", 2) => Self::FirstOrderGap { level4: num(1)? },
            _ => bail!("unknown generator {s:?} (expected grid:D:SIDE, tree:D:DEPTH, er:N:S:SEED, ba:N:M:SEED or gap:K)"),
        };
        if let Self::Topology(t) = &spec {
            t.validate()?;
        }
        Ok(spec)
    }
}

/// Where a graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    File(PathBuf),
    Generator(String),
}

impl GraphSource {
    pub fn from_flags(graph: Option<PathBuf>, generator: Option<String>) -> Result<Self> {
        match (graph, generator) {
            (Some(path), None) => Ok(Self::File(path)),
            (None, Some(g)) => Ok(Self::Generator(g)),
            (Some(_), Some(_)) => bail!("give either --graph or --generator, not both"),
            (None, None) => bail!("one of --graph or --generator is required"),
        }
    }

    pub fn generator(&self) -> Result<Option<GeneratorSpec>> {
        match self {
            Self::Generator(g) => g.parse().map(Some),
            Self::File(_) => Ok(None),
        }
    }

    pub fn load(&self) -> Result<Graph> {
        match self {
            Self::File(path) => io::read_edge_list(path),
            Self::Generator(g) => g.parse::<GeneratorSpec>()?.build(),
        }
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::File(p) => write!(f, "{}", p.display()),
            Self::Generator(g) => f.write_str(g),
        }
    }
}

/// `center`, `root`, `random:K` or a comma-separated list of node labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitialInfection {
    Center,
    Root,
    Random(usize),
    Nodes(Vec<u64>),
}

impl FromStr for InitialInfection {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(Self::Center),
            "root" => Ok(Self::Root),
            _ => {
                if let Some(k) = s.strip_prefix("random:") {
                    let k = k
                        .parse()
                        .with_context(|| format!("--i0 {s:?}: bad count"))?;
                    return Ok(Self::Random(k));
                }
                let nodes = s
                    .split(',')
                    .map(|t| t.trim().parse::<u64>())
                    .collect::<Result<Vec<_>, _>>()
                    .with_context(|| {
                        format!("--i0 {s:?}: expected center, root, random:K or a list of ids")
                    })?;
                if nodes.is_empty() {
                    bail!("--i0 is empty");
                }
                Ok(Self::Nodes(nodes))
            }
        }
    }
}

impl InitialInfection {
    /// Resolves to node ids; `sample` selects the draw for `random:K`.
    pub fn resolve(
        &self,
        g: &Graph,
        generator: Option<&GeneratorSpec>,
        seed: u64,
        sample: u64,
    ) -> Result<NodeSet> {
        match self {
            Self::Center => match generator {
                Some(GeneratorSpec::Topology(TopologySpec::Grid { dim, side })) => {
                    Ok(NodeSet::singleton(grid_index(*side, &vec![side / 2; *dim])))
                }
                _ => bail!("--i0 center needs a grid generator"),
            },
            Self::Root => g
                .tree()
                .map(|t| NodeSet::singleton(t.root))
                .ok_or_else(|| anyhow!("--i0 root needs a rooted tree")),
            Self::Random(k) => random_nodes(g, *k, seed, sample),
            Self::Nodes(labels) => labels
                .iter()
                .map(|&l| lookup(g, l))
                .collect::<Result<NodeSet>>(),
        }
    }
}

/// Node for an external label (identity when the graph keeps no labels).
pub fn lookup(g: &Graph, label: u64) -> Result<NodeId> {
    let id = match g.labels() {
        Some(_) => g.node_for_label(label),
        None => (label < g.node_count() as u64).then_some(label as NodeId),
    };
    id.ok_or_else(|| anyhow!("node {label} is not in the graph"))
}

/// `k` distinct nodes drawn uniformly on the stream `(derive(seed), sample)`.
pub fn random_nodes(g: &Graph, k: usize, seed: u64, sample: u64) -> Result<NodeSet> {
    let n = g.node_count();
    if k == 0 || k > n {
        bail!("cannot draw {k} initial nodes from {n}");
    }
    let mut rng = stream(derive_seed(seed, INITIAL_TAG), sample);
    Ok(rand::seq::index::sample(&mut rng, n, k)
        .iter()
        .map(|v| v as NodeId)
        .collect())
}

pub fn initial_state(g: &Graph, infected: &NodeSet) -> Result<InfectionState> {
    Ok(InfectionState::from_infected(g, infected)?)
}

/// `cut`, `random`, `tree`, `noop` or `scripted:FILE` (relative to `base`).
pub fn parse_policy(s: &str, base: &Path) -> Result<PolicyKind> {
    Ok(match s {
        "cut" => PolicyKind::Cut,
        "random" => PolicyKind::Random,
        "tree" => PolicyKind::Tree,
        "noop" => PolicyKind::NoOp,
        _ => match s.strip_prefix("scripted:") {
            Some(file) => PolicyKind::Scripted(io::read_script(&base.join(file))?),
            None => {
                bail!("unknown policy {s:?} (expected cut, random, tree, noop or scripted:FILE)")
            }
        },
    })
}

/// `inf` or an integer.
pub fn parse_theta(s: &str) -> Result<Option<usize>> {
    match s {
        "inf" | "infinity" => Ok(None),
        _ => s
            .parse()
            .map(Some)
            .with_context(|| format!("theta {s:?}: expected an integer or inf")),
    }
}
