//! Monte-Carlo growth-rate profiles from zero-budget trajectories and the
//! affine fit used for budget allocation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::bounds::Phi;
use hashbrown::{HashMap, HashSet};
use rand::Rng;

use crate::dynamics::{
    check_probability, infection_probability, simulate_run, InfectionState, SimulationParams,
    Trajectory,
};
use crate::graph::{Graph, NodeId};
use crate::policies::PolicyKind;
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ProfileKind {
    /// `p · min |N(s)|` over sampled states.
    MgrLb,
    /// `p · mean |N(s)|` over sampled states.
    EgrLb,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProfileEntry {
    pub value: f64,
    pub samples: usize,
}

/// Growth-rate values by infected cardinality.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrowthProfile {
    pub kind: ProfileKind,
    pub entries: BTreeMap<usize, ProfileEntry>,
}

impl GrowthProfile {
    pub fn new(kind: ProfileKind) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Profile from `(cardinality, value)` pairs, one sample each.
    pub fn from_values(kind: ProfileKind, values: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let entries = values
            .into_iter()
            .map(|(k, value)| (k, ProfileEntry { value, samples: 1 }))
            .collect();
        Self { kind, entries }
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.entries.get(&k).map(|e| e.value)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Drops entries backed by fewer than `floor` samples, keeping `keep`.
    pub fn with_floor(mut self, floor: usize, keep: usize) -> Self {
        self.entries.retain(|&k, e| k == keep || e.samples >= floor);
        self
    }

    /// Piecewise-linear envelope through the entries.
    pub fn to_phi(&self) -> Phi {
        Phi::Tabulated(
            self.entries
                .iter()
                .map(|(&k, e)| (k as f64, e.value))
                .collect(),
        )
    }
}

/// `T` zero-budget runs of at most `depth` steps from `s`; run `i` draws
/// from the stream `(seed, i)`.
pub fn sample_trajectories(
    g: &Graph,
    s: &InfectionState,
    p: f64,
    count: usize,
    depth: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    check_sampling(count, depth)?;
    let params = SimulationParams::new(p, 0, seed).with_max_steps(depth);
    (0..count as u64)
        .map(|i| simulate_run(g, s, &PolicyKind::NoOp, &params, i))
        .collect()
}

pub(crate) fn check_sampling(count: usize, depth: usize) -> Result<()> {
    if count == 0 || depth == 0 {
        return Err(Error::InvalidParameter(format!(
            "sampling needs at least one trajectory and one step, got T={count} depth={depth}"
        )));
    }
    Ok(())
}

/// Per-cardinality frontier statistics pooled over sampled states.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrontierStats {
    /// `(min |N|, Σ|N|, count)` by `|I|`.
    pub by_cardinality: BTreeMap<usize, (usize, usize, usize)>,
}

impl FrontierStats {
    pub fn add(&mut self, traj: &Trajectory) {
        for (k, &n) in traj.infected_sizes().into_iter().zip(&traj.frontier_sizes) {
            let e = self.by_cardinality.entry(k).or_insert((usize::MAX, 0, 0));
            e.0 = e.0.min(n);
            e.1 += n;
            e.2 += 1;
        }
    }

    /// Merges `other` into `self`; order does not matter since sums are
    /// integers.
    pub fn merge(&mut self, other: &FrontierStats) {
        for (&k, &(min, sum, count)) in &other.by_cardinality {
            let e = self.by_cardinality.entry(k).or_insert((usize::MAX, 0, 0));
            e.0 = e.0.min(min);
            e.1 += sum;
            e.2 += count;
        }
    }

    pub fn from_samples(samples: &[Trajectory]) -> Self {
        let mut stats = Self::default();
        samples.iter().for_each(|t| stats.add(t));
        stats
    }

    pub fn profile(&self, kind: ProfileKind, p: f64) -> GrowthProfile {
        let entries = self
            .by_cardinality
            .iter()
            .map(|(&k, &(min, sum, count))| {
                let value = match kind {
                    ProfileKind::MgrLb => p * min as f64,
                    _ => p * sum as f64 / count as f64,
                };
                (
                    k,
                    ProfileEntry {
                        value,
                        samples: count,
                    },
                )
            })
            .collect();
        GrowthProfile { kind, entries }
    }
}

/// Frontier statistics and the largest infected degree over the same runs
/// as [`sample_trajectories`], without materialising them. Each rollout
/// overlays its changes on `s`, so the cost scales with the frontier rather
/// than the graph.
pub fn sample_frontier_stats(
    g: &Graph,
    s: &InfectionState,
    p: f64,
    count: usize,
    depth: usize,
    seed: u64,
) -> Result<(FrontierStats, usize)> {
    check_sampling(count, depth)?;
    check_probability(p)?;
    let mut stats = FrontierStats::default();
    let base_degree = s
        .infected_in_order()
        .iter()
        .map(|&v| g.degree(v))
        .max()
        .unwrap_or(0);
    let mut max_degree = base_degree;
    let mut rollout = Rollout::default();
    for i in 0..count as u64 {
        let mut rng = stream(seed, i);
        rollout.reset(s);
        let mut infected = s.infected_count();
        rollout.record(&mut stats, infected);
        for _ in 0..depth {
            if rollout.frontier.is_empty() {
                break;
            }
            let newly: Vec<NodeId> = rollout
                .frontier
                .iter()
                .copied()
                .filter(|&v| {
                    rng.random::<f64>() < infection_probability(p, rollout.pressure(s, v) as usize)
                })
                .collect();
            for &v in &newly {
                max_degree = max_degree.max(g.degree(v));
                rollout.infect(g, s, v);
            }
            infected += newly.len();
            rollout.compact(s);
            rollout.record(&mut stats, infected);
        }
    }
    Ok((stats, max_degree))
}

#[derive(Default)]
struct Rollout {
    extra_pressure: HashMap<NodeId, u32>,
    infected: HashSet<NodeId>,
    frontier: Vec<NodeId>,
}

impl Rollout {
    fn reset(&mut self, s: &InfectionState) {
        self.extra_pressure.clear();
        self.infected.clear();
        self.frontier.clear();
        self.frontier.extend(s.frontier().iter());
    }

    fn pressure(&self, s: &InfectionState, v: NodeId) -> u32 {
        s.infected_neighbors(v) as u32 + self.extra_pressure.get(&v).copied().unwrap_or(0)
    }

    fn is_healthy(&self, s: &InfectionState, v: NodeId) -> bool {
        s.is_healthy(v) && !self.infected.contains(&v)
    }

    fn infect(&mut self, g: &Graph, s: &InfectionState, v: NodeId) {
        self.infected.insert(v);
        for &u in g.neighbors(v) {
            *self.extra_pressure.entry(u).or_insert(0) += 1;
            if self.is_healthy(s, u) {
                self.frontier.push(u);
            }
        }
    }

    fn compact(&mut self, s: &InfectionState) {
        let mut frontier = core::mem::take(&mut self.frontier);
        frontier.retain(|&v| self.is_healthy(s, v));
        frontier.sort_unstable();
        frontier.dedup();
        self.frontier = frontier;
    }

    fn record(&self, stats: &mut FrontierStats, infected: usize) {
        let n = self.frontier.len();
        let e = stats
            .by_cardinality
            .entry(infected)
            .or_insert((usize::MAX, 0, 0));
        e.0 = e.0.min(n);
        e.1 += n;
        e.2 += 1;
    }
}

/// `m̂gr(k) = p · min |N(s)|` over sampled states with `|I| = k`.
pub fn estimate_mgr_lb(samples: &[Trajectory], p: f64) -> GrowthProfile {
    FrontierStats::from_samples(samples).profile(ProfileKind::MgrLb, p)
}

/// `ÊGR(k) = (p / n_k) Σ |N(s)|` over the `n_k` sampled states with
/// `|I| = k`.
pub fn estimate_egr_lb(samples: &[Trajectory], p: f64) -> GrowthProfile {
    FrontierStats::from_samples(samples).profile(ProfileKind::EgrLb, p)
}

/// The fitted line through `(start, LB(start))` and `(θ, LB(θ))`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AffineLB {
    pub slope: f64,
    pub intercept: f64,
    pub start: usize,
    pub theta: usize,
    pub p_tilde: f64,
}

/// `θ = argmax_{k > start} LB(k)` (smallest on ties),
/// `α = (LB(θ) − LB(start))/(θ − start)`, `β = LB(start)` and
/// `p̃ = min(1, Δ̃p)`.
pub fn fit_affine_lb(
    profile: &GrowthProfile,
    start: usize,
    p: f64,
    sampled_max_degree: usize,
) -> Result<AffineLB> {
    let base = profile.get(start).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "profile has no entry at the start cardinality {start}"
        ))
    })?;
    let mut best: Option<(usize, f64)> = None;
    for (&k, e) in profile.entries.range(start + 1..) {
        if best.is_none_or(|(_, v)| e.value > v) {
            best = Some((k, e.value));
        }
    }
    let (theta, top) = best.ok_or(Error::ProfileTooShallow { start })?;
    Ok(AffineLB {
        slope: (top - base) / (theta - start) as f64,
        intercept: base,
        start,
        theta,
        p_tilde: (sampled_max_degree as f64 * p).min(1.0),
    })
}
