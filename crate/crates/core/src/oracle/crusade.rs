//! Upward crusades and exact growth and stop rates.
//!
//! A crusade of length `k` is a state sequence `s_0..s_k` where each step
//! vaccinates the policy's choice (nothing, for empty crusades) and then
//! infects any subset of the exposed frontier. Rates are taken over the
//! final states grouped by infected cardinality. For policy crusades the
//! final state is read after the policy's decision at step `k`, so the
//! vaccinated set holds `b(k + 1)` nodes when every step spends the full
//! budget.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use hashbrown::HashMap;

use super::{for_each_combination, subsets_up_to, OracleConfig};
use crate::dynamics::{check_probability, growth_rate, infection_probability, InfectionState};
use crate::graph::{neighborhood, Graph, NodeId, NodeSet};
use crate::policies::PolicyKind;
use crate::rng::stream;
use crate::{Error, Result};

/// What vaccinates along a crusade.
#[derive(Clone, Copy, Debug)]
pub enum CrusadeSeed<'a> {
    /// Nothing is vaccinated.
    Empty,
    Policy {
        policy: &'a PolicyKind,
        budget: usize,
    },
}

impl CrusadeSeed<'_> {
    fn check(&self, g: &Graph) -> Result<()> {
        match self {
            Self::Empty => Ok(()),
            Self::Policy { policy, .. } if policy.is_deterministic() => policy.validate(g),
            Self::Policy { policy, .. } => Err(Error::InvalidParameter(format!(
                "crusades need a deterministic policy, got {}",
                policy.name()
            ))),
        }
    }

    fn choose(
        &self,
        g: &Graph,
        infected: &NodeSet,
        vaccinated: &NodeSet,
        t: usize,
    ) -> Result<NodeSet> {
        match *self {
            Self::Empty => Ok(NodeSet::new()),
            Self::Policy { policy, budget } => {
                let s = InfectionState::new(g, infected, vaccinated)?;
                policy.select(g, &s, budget, t, &mut stream(0, 0))
            }
        }
    }
}

/// States `s_0..s_k` of one crusade.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Crusade {
    pub infected: Vec<NodeSet>,
    pub vaccinated: Vec<NodeSet>,
}

impl Crusade {
    pub fn len(&self) -> usize {
        self.infected.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn final_infected(&self) -> &NodeSet {
        self.infected.last().expect("crusades hold s_0")
    }

    pub fn final_vaccinated(&self) -> &NodeSet {
        self.vaccinated.last().expect("crusades hold s_0")
    }
}

/// Exposed nodes after vaccinating `chosen`, with their infection
/// probabilities.
fn exposure(g: &Graph, infected: &NodeSet, vaccinated: &NodeSet, p: f64) -> Vec<(NodeId, f64)> {
    neighborhood(g, infected)
        .difference(vaccinated)
        .iter()
        .map(|v| {
            let c = g
                .neighbors(v)
                .iter()
                .filter(|&&u| infected.contains(u))
                .count();
            (v, infection_probability(p, c))
        })
        .collect()
}

/// Every infected subset of `exposed` of size at most `room` with its
/// probability.
fn growth_outcomes(
    exposed: &[(NodeId, f64)],
    room: usize,
    cfg: &OracleConfig,
    mut f: impl FnMut(NodeSet, f64) -> Result<()>,
) -> Result<()> {
    let count = subsets_up_to(exposed.len(), room);
    if count > cfg.outcome_cap {
        return Err(Error::CapExceeded {
            what: "infection outcomes",
            actual: count,
            cap: cfg.outcome_cap,
        });
    }
    let idx: Vec<usize> = (0..exposed.len()).collect();
    let mut result = Ok(());
    for size in 0..=room.min(exposed.len()) {
        for_each_combination(&idx, size, |pick| {
            if result.is_err() {
                return;
            }
            let mut prob = 1.0;
            let mut j = 0;
            for (i, &(_, q)) in exposed.iter().enumerate() {
                if j < pick.len() && pick[j] == i {
                    prob *= q;
                    j += 1;
                } else {
                    prob *= 1.0 - q;
                }
            }
            let set = pick.iter().map(|&i| exposed[i].0).collect();
            result = f(set, prob);
        });
    }
    result
}

fn check_states(count: usize, cfg: &OracleConfig) -> Result<()> {
    if count > cfg.state_cap {
        Err(Error::CapExceeded {
            what: "crusade states",
            actual: count,
            cap: cfg.state_cap,
        })
    } else {
        Ok(())
    }
}

/// All crusades of length `k` from `s0`.
pub fn enumerate_crusades(
    g: &Graph,
    s0: &InfectionState,
    seed: CrusadeSeed<'_>,
    k: usize,
    cfg: &OracleConfig,
) -> Result<Vec<Crusade>> {
    seed.check(g)?;
    let mut layer = alloc::vec![Crusade {
        infected: alloc::vec![s0.infected()],
        vaccinated: alloc::vec![s0.vaccinated()],
    }];
    for t in 0..k {
        let mut next = Vec::new();
        for c in &layer {
            let (i, b) = (c.final_infected(), c.final_vaccinated());
            let b_next = b.union(&seed.choose(g, i, b, t)?);
            let exposed = exposure(g, i, &b_next, 1.0);
            growth_outcomes(&exposed, exposed.len(), cfg, |grown, _| {
                let mut ext = c.clone();
                ext.infected.push(i.union(&grown));
                ext.vaccinated.push(b_next.clone());
                next.push(ext);
                check_states(next.len(), cfg)
            })?;
        }
        layer = next;
    }
    Ok(layer)
}

/// A distinct crusade end state with its probability under the model.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedState {
    pub infected: NodeSet,
    /// `B_k` before the final decision.
    pub vaccinated: NodeSet,
    /// The decision `π(s_k)`; empty for empty crusades.
    pub chosen: NodeSet,
    /// Zero when the state is reachable only through probability-zero
    /// outcomes (as with `p = 1`).
    pub probability: f64,
}

impl WeightedState {
    /// `B_k ∪ π(s_k)`.
    pub fn protected(&self) -> NodeSet {
        self.vaccinated.union(&self.chosen)
    }
}

/// Distinct end states of all crusades of length `k`, optionally dropping
/// states whose infected count exceeds `max_cardinality`. Dropping is exact
/// for rates at smaller cardinalities since `|I|` never decreases.
pub fn reachable_states(
    g: &Graph,
    s0: &InfectionState,
    seed: CrusadeSeed<'_>,
    k: usize,
    p: f64,
    max_cardinality: Option<usize>,
    cfg: &OracleConfig,
) -> Result<Vec<WeightedState>> {
    check_probability(p)?;
    seed.check(g)?;
    let limit = max_cardinality.unwrap_or(usize::MAX);
    let mut layer: HashMap<(NodeSet, NodeSet), f64> = HashMap::new();
    if s0.infected_count() <= limit {
        layer.insert((s0.infected(), s0.vaccinated()), 1.0);
    }
    for t in 0..k {
        let mut next: HashMap<(NodeSet, NodeSet), f64> = HashMap::new();
        let mut entries: Vec<_> = layer.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for ((i, b), prob) in entries {
            let b_next = b.union(&seed.choose(g, &i, &b, t)?);
            let exposed = exposure(g, &i, &b_next, p);
            growth_outcomes(&exposed, limit - i.len(), cfg, |grown, q| {
                *next.entry((i.union(&grown), b_next.clone())).or_insert(0.0) += prob * q;
                check_states(next.len(), cfg)
            })?;
        }
        layer = next;
    }
    let mut entries: Vec<_> = layer.into_iter().collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
        .into_iter()
        .enumerate()
        .map(|(_, ((infected, vaccinated), probability))| {
            let chosen = seed.choose(g, &infected, &vaccinated, k)?;
            Ok(WeightedState {
                infected,
                vaccinated,
                chosen,
                probability,
            })
        })
        .collect()
}

/// Max, min and conditional mean of a per-state functional.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StopRateRange {
    pub max: f64,
    pub min: f64,
    /// Absent when the cardinality has probability zero.
    pub expected: Option<f64>,
}

/// Rates at one infected cardinality.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateEntry {
    /// `MGR`: largest growth rate over end states.
    pub max_growth: f64,
    /// `mgr`.
    pub min_growth: f64,
    /// `EGR`: growth rate conditioned on `|I_k| = c`.
    pub expected_growth: Option<f64>,
    /// `MSR`, `msr` and `ESR` for policy crusades.
    pub stop: Option<StopRateRange>,
    /// Range of `|B_k ∪ π(s_k)|`.
    pub min_protected: usize,
    pub max_protected: usize,
    pub probability: f64,
    pub states: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExactRates {
    pub depth: usize,
    pub p: f64,
    pub entries: BTreeMap<usize, RateEntry>,
}

impl ExactRates {
    pub fn get(&self, cardinality: usize) -> Option<&RateEntry> {
        self.entries.get(&cardinality)
    }

    /// Rates over the given end states. Growth is measured after the final
    /// decision, `GR(I_k, N(I_k) \ (B_k ∪ π(s_k)))`.
    pub fn from_states(
        g: &Graph,
        states: &[WeightedState],
        depth: usize,
        p: f64,
        with_stop: bool,
    ) -> Self {
        struct Acc {
            entry: RateEntry,
            growth_mass: f64,
            stop_mass: f64,
        }
        let mut acc: BTreeMap<usize, Acc> = BTreeMap::new();
        for s in states {
            let protected = s.protected();
            let exposed = neighborhood(g, &s.infected).difference(&protected);
            let growth = growth_rate(g, &s.infected, &exposed, p);
            let stop = growth_rate(g, &s.infected, &protected, p);
            let a = acc.entry(s.infected.len()).or_insert_with(|| Acc {
                entry: RateEntry {
                    max_growth: f64::NEG_INFINITY,
                    min_growth: f64::INFINITY,
                    expected_growth: None,
                    stop: with_stop.then_some(StopRateRange {
                        max: f64::NEG_INFINITY,
                        min: f64::INFINITY,
                        expected: None,
                    }),
                    min_protected: usize::MAX,
                    max_protected: 0,
                    probability: 0.0,
                    states: 0,
                },
                growth_mass: 0.0,
                stop_mass: 0.0,
            });
            let e = &mut a.entry;
            e.max_growth = e.max_growth.max(growth);
            e.min_growth = e.min_growth.min(growth);
            e.min_protected = e.min_protected.min(protected.len());
            e.max_protected = e.max_protected.max(protected.len());
            e.probability += s.probability;
            e.states += 1;
            a.growth_mass += s.probability * growth;
            if let Some(r) = e.stop.as_mut() {
                r.max = r.max.max(stop);
                r.min = r.min.min(stop);
                a.stop_mass += s.probability * stop;
            }
        }
        let entries = acc
            .into_iter()
            .map(|(c, mut a)| {
                let prob = a.entry.probability;
                // Growth is a difference of counts and can come out as -0.0.
                a.entry.max_growth += 0.0;
                a.entry.min_growth += 0.0;
                if prob > 0.0 {
                    a.entry.expected_growth = Some(a.growth_mass / prob);
                    if let Some(r) = a.entry.stop.as_mut() {
                        r.expected = Some(a.stop_mass / prob);
                    }
                }
                (c, a.entry)
            })
            .collect();
        Self { depth, p, entries }
    }
}

/// Growth and (for policy crusades) stop rates at depth `k`.
pub fn exact_rates(
    g: &Graph,
    s0: &InfectionState,
    seed: CrusadeSeed<'_>,
    k: usize,
    p: f64,
    max_cardinality: Option<usize>,
    cfg: &OracleConfig,
) -> Result<ExactRates> {
    let states = reachable_states(g, s0, seed, k, p, max_cardinality, cfg)?;
    let with_stop = matches!(seed, CrusadeSeed::Policy { .. });
    Ok(ExactRates::from_states(g, &states, k, p, with_stop))
}

/// Empty-crusade stop rates `(msr, MSR)(c1, c2)` for every end-state
/// cardinality `c1`: the extremes of `GR(I_k, B)` over end states and over
/// every `c2`-subset `B` of `V \ I_k`. Cardinalities with fewer than `c2`
/// healthy nodes are omitted.
pub fn empty_stop_rates(
    g: &Graph,
    states: &[WeightedState],
    c2: usize,
    p: f64,
) -> BTreeMap<usize, (f64, f64)> {
    let mut out: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for s in states {
        let mut terms: Vec<f64> = (0..g.node_count() as NodeId)
            .filter(|&v| !s.infected.contains(v))
            .map(|v| {
                let c = g
                    .neighbors(v)
                    .iter()
                    .filter(|&&u| s.infected.contains(u))
                    .count();
                infection_probability(p, c)
            })
            .collect();
        if terms.len() < c2 {
            continue;
        }
        terms.sort_by(f64::total_cmp);
        let low: f64 = terms[..c2].iter().sum();
        let high: f64 = terms[terms.len() - c2..].iter().sum();
        let e = out
            .entry(s.infected.len())
            .or_insert((f64::INFINITY, f64::NEG_INFINITY));
        e.0 = e.0.min(low);
        e.1 = e.1.max(high);
    }
    out
}

/// Frontier sizes pooled over times `0..=depth` of the zero-budget process,
/// as seen by trajectory sampling: a state is counted at every time it is
/// occupied until absorption, and an absorbing state once.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PooledEntry {
    /// Smallest `|N(s)|` over states with positive probability.
    pub min_neighbors: usize,
    /// `Σ_t P(s_t = s)|N(s)| / Σ_t P(|I_t| = c)`.
    pub mean_neighbors: f64,
    /// Expected number of visits at this cardinality.
    pub weight: f64,
}

pub fn pooled_neighbor_profile(
    g: &Graph,
    s0: &InfectionState,
    p: f64,
    depth: usize,
    cfg: &OracleConfig,
) -> Result<BTreeMap<usize, PooledEntry>> {
    check_probability(p)?;
    let b0 = s0.vaccinated();
    let mut acc: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    let mut layer: HashMap<NodeSet, f64> = HashMap::new();
    layer.insert(s0.infected(), 1.0);
    for t in 0..=depth {
        let mut next: HashMap<NodeSet, f64> = HashMap::new();
        let mut entries: Vec<_> = layer.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for (i, prob) in entries {
            let exposed = exposure(g, &i, &b0, p);
            let e = acc.entry(i.len()).or_insert((usize::MAX, 0.0, 0.0));
            e.0 = e.0.min(exposed.len());
            e.1 += prob * exposed.len() as f64;
            e.2 += prob;
            if exposed.is_empty() || t == depth {
                continue;
            }
            growth_outcomes(&exposed, exposed.len(), cfg, |grown, q| {
                if q > 0.0 {
                    *next.entry(i.union(&grown)).or_insert(0.0) += prob * q;
                }
                check_states(next.len(), cfg)
            })?;
        }
        layer = next;
    }
    Ok(acc
        .into_iter()
        .map(|(c, (min, mass, weight))| {
            (
                c,
                PooledEntry {
                    min_neighbors: min,
                    mean_neighbors: mass / weight,
                    weight,
                },
            )
        })
        .collect())
}
