//! The epidemic as a Markov decision process.
//!
//! A state is a pair `(I, B)` of disjoint infected and vaccinated sets. Each
//! step the policy first vaccinates up to `b` healthy nodes, then every
//! remaining healthy node `i` with `c_i` infected neighbors becomes infected
//! independently with probability `1 - (1 - p)^{c_i}`. Infected and
//! vaccinated nodes never change status. The process is absorbed once the
//! infected set has no healthy neighbor left.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::graph::{Graph, NodeId, NodeSet};
use crate::policies::PolicyKind;
use crate::rng::{stream, Stream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Healthy,
    Infected,
    Vaccinated,
}

/// `1 - (1 - p)^c`: probability that a healthy node with `c` infected
/// neighbors is infected in one step.
pub fn infection_probability(p: f64, c: usize) -> f64 {
    match c {
        0 => 0.0,
        1 => p,
        _ => 1.0 - libm::pow(1.0 - p, c as f64),
    }
}

/// Disjoint infected and vaccinated sets over a fixed graph.
///
/// Alongside the status vector the state keeps, for every node, the number
/// of infected neighbors (`cut(I, v)`) and a list of candidate frontier
/// nodes, so a step costs time proportional to the frontier rather than the
/// graph.
#[derive(Clone, Debug)]
pub struct InfectionState {
    status: Vec<Status>,
    pressure: Vec<u32>,
    infected: Vec<NodeId>,
    vaccinated: Vec<NodeId>,
    frontier: Vec<NodeId>,
}

impl PartialEq for InfectionState {
    fn eq(&self, other: &Self) -> bool {
        self.status == other.status
    }
}

impl Eq for InfectionState {}

impl InfectionState {
    pub fn new(g: &Graph, infected: &NodeSet, vaccinated: &NodeSet) -> Result<Self> {
        infected.validate(g)?;
        vaccinated.validate(g)?;
        if !infected.is_disjoint(vaccinated) {
            return Err(Error::ContractViolation(
                "infected and vaccinated sets overlap".into(),
            ));
        }
        let n = g.node_count();
        let mut state = Self {
            status: vec![Status::Healthy; n],
            pressure: vec![0; n],
            infected: Vec::with_capacity(infected.len()),
            vaccinated: Vec::with_capacity(vaccinated.len()),
            frontier: Vec::new(),
        };
        for v in vaccinated.iter() {
            state.status[v as usize] = Status::Vaccinated;
            state.vaccinated.push(v);
        }
        for v in infected.iter() {
            state.infect(g, v);
        }
        state.compact_frontier();
        Ok(state)
    }

    pub fn from_infected(g: &Graph, infected: &NodeSet) -> Result<Self> {
        Self::new(g, infected, &NodeSet::new())
    }

    pub fn status(&self, v: NodeId) -> Status {
        self.status[v as usize]
    }

    pub fn is_healthy(&self, v: NodeId) -> bool {
        self.status[v as usize] == Status::Healthy
    }

    /// `cut(I, v)`: infected neighbors of `v`.
    pub fn infected_neighbors(&self, v: NodeId) -> usize {
        self.pressure[v as usize] as usize
    }

    pub fn infected(&self) -> NodeSet {
        self.infected.iter().copied().collect()
    }

    pub fn vaccinated(&self) -> NodeSet {
        self.vaccinated.iter().copied().collect()
    }

    pub fn infected_count(&self) -> usize {
        self.infected.len()
    }

    pub fn vaccinated_count(&self) -> usize {
        self.vaccinated.len()
    }

    /// Infected nodes in infection order.
    pub fn infected_in_order(&self) -> &[NodeId] {
        &self.infected
    }

    /// `N(s) = N(I) \ B`, ascending.
    pub fn frontier(&self) -> NodeSet {
        self.frontier
            .iter()
            .copied()
            .filter(|&v| self.is_frontier(v))
            .collect()
    }

    pub fn frontier_len(&self) -> usize {
        self.frontier
            .iter()
            .filter(|&&v| self.is_frontier(v))
            .count()
    }

    /// No healthy node borders the infection.
    pub fn is_absorbing(&self) -> bool {
        self.frontier_len() == 0
    }

    /// Healthy nodes of the whole graph, ascending.
    pub fn healthy(&self) -> NodeSet {
        NodeSet::from_sorted(
            (0..self.status.len() as NodeId)
                .filter(|&v| self.is_healthy(v))
                .collect(),
        )
    }

    fn is_frontier(&self, v: NodeId) -> bool {
        self.status[v as usize] == Status::Healthy && self.pressure[v as usize] > 0
    }

    fn infect(&mut self, g: &Graph, v: NodeId) {
        debug_assert_eq!(self.status[v as usize], Status::Healthy);
        self.status[v as usize] = Status::Infected;
        self.infected.push(v);
        for &u in g.neighbors(v) {
            let c = &mut self.pressure[u as usize];
            *c += 1;
            if *c == 1 && self.status[u as usize] == Status::Healthy {
                self.frontier.push(u);
            }
        }
    }

    fn compact_frontier(&mut self) {
        let (status, pressure) = (&self.status, &self.pressure);
        self.frontier
            .retain(|&v| status[v as usize] == Status::Healthy && pressure[v as usize] > 0);
        self.frontier.sort_unstable();
        self.frontier.dedup();
    }

    /// Applies one transition in place and returns the newly infected nodes.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        g: &Graph,
        vaccinate: &NodeSet,
        p: f64,
        rng: &mut R,
    ) -> Result<NodeSet> {
        if let Some(v) = vaccinate.iter().find(|&v| !self.is_healthy(v)) {
            return Err(Error::ContractViolation(format!(
                "cannot vaccinate node {v}: it is {:?}",
                self.status(v)
            )));
        }
        vaccinate.validate(g)?;
        for v in vaccinate.iter() {
            self.status[v as usize] = Status::Vaccinated;
            self.vaccinated.push(v);
        }
        self.compact_frontier();
        let mut newly = Vec::new();
        for &v in &self.frontier {
            let prob = infection_probability(p, self.pressure[v as usize] as usize);
            if rng.random::<f64>() < prob {
                newly.push(v);
            }
        }
        for &v in &newly {
            self.infect(g, v);
        }
        self.compact_frontier();
        Ok(NodeSet::from_sorted(newly))
    }
}

/// One stochastic transition from `s`.
pub fn transition<R: Rng + ?Sized>(
    g: &Graph,
    s: &InfectionState,
    vaccinate: &NodeSet,
    p: f64,
    rng: &mut R,
) -> Result<InfectionState> {
    check_probability(p)?;
    let mut next = s.clone();
    next.step(g, vaccinate, p, rng)?;
    Ok(next)
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "infection probability {p} outside (0, 1]"
        )))
    }
}

/// `GR(A, T, p) = Σ_{v ∈ T} (1 - (1 - p)^{cut(A, v)})`.
pub fn growth_rate(g: &Graph, infected: &NodeSet, targets: &NodeSet, p: f64) -> f64 {
    targets
        .iter()
        .map(|v| {
            let c = g
                .neighbors(v)
                .iter()
                .filter(|&&u| infected.contains(u))
                .count();
            infection_probability(p, c)
        })
        .sum()
}

/// `GR(s) = GR(I, N(s))`: expected one-step growth with no vaccination.
pub fn state_growth_rate(s: &InfectionState, p: f64) -> f64 {
    s.frontier()
        .iter()
        .map(|v| infection_probability(p, s.infected_neighbors(v)))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationParams {
    pub p: f64,
    pub budget: usize,
    /// Defaults to the node count, an almost-sure bound on the absorption
    /// time whenever `budget >= 1`.
    pub max_steps: Option<usize>,
    pub master_seed: u64,
}

impl SimulationParams {
    pub fn new(p: f64, budget: usize, master_seed: u64) -> Self {
        Self {
            p,
            budget,
            max_steps: None,
            master_seed,
        }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = Some(max_steps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.p)
    }

    pub fn step_cap(&self, g: &Graph) -> usize {
        self.max_steps.unwrap_or(g.node_count())
    }
}

/// A simulated run: the initial state plus per-step deltas.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub initial_infected: NodeSet,
    pub initial_vaccinated: NodeSet,
    /// `vaccinated_at[t]`: nodes chosen by the policy in state `s_t`.
    pub vaccinated_at: Vec<NodeSet>,
    /// `newly_infected[t] = I_{t+1} \ I_t`.
    pub newly_infected: Vec<NodeSet>,
    /// Budget granted at each step.
    pub budgets: Vec<usize>,
    /// `|N(s_t)|` for every recorded state.
    pub frontier_sizes: Vec<usize>,
    /// Absorbed (`N(s) = ∅`) rather than cut off at the step cap.
    pub terminated: bool,
    /// Some infected node lies on the generator boundary.
    pub boundary_touched: bool,
    /// Largest degree over every node infected along the run.
    pub max_infected_degree: usize,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.vaccinated_at.len()
    }

    pub fn state_count(&self) -> usize {
        self.steps() + 1
    }

    pub fn infected_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.state_count());
        let mut size = self.initial_infected.len();
        sizes.push(size);
        for newly in &self.newly_infected {
            size += newly.len();
            sizes.push(size);
        }
        sizes
    }

    pub fn vaccinated_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.state_count());
        let mut size = self.initial_vaccinated.len();
        sizes.push(size);
        for v in &self.vaccinated_at {
            size += v.len();
            sizes.push(size);
        }
        sizes
    }

    pub fn final_infected_count(&self) -> usize {
        self.initial_infected.len() + self.newly_infected.iter().map(NodeSet::len).sum::<usize>()
    }

    pub fn total_vaccinated(&self) -> usize {
        self.vaccinated_at.iter().map(NodeSet::len).sum()
    }

    /// `(I_t, B_t)`.
    pub fn sets_at(&self, t: usize) -> (NodeSet, NodeSet) {
        assert!(t < self.state_count(), "state {t} beyond trajectory");
        let infected = self.newly_infected[..t]
            .iter()
            .fold(self.initial_infected.clone(), |acc, s| acc.union(s));
        let vaccinated = self.vaccinated_at[..t]
            .iter()
            .fold(self.initial_vaccinated.clone(), |acc, s| acc.union(s));
        (infected, vaccinated)
    }

    pub fn state_at(&self, g: &Graph, t: usize) -> Result<InfectionState> {
        let (i, b) = self.sets_at(t);
        InfectionState::new(g, &i, &b)
    }

    pub fn outcome(&self) -> RunOutcome {
        RunOutcome {
            final_infected: self.final_infected_count(),
            steps: self.steps(),
            terminated: self.terminated,
            boundary_touched: self.boundary_touched,
        }
    }
}

/// Runs the process from `s0`, asking `budget_for` for the step budget and
/// `policy` for the vaccination set, until absorption or `max_steps`.
pub(crate) fn drive<R, F>(
    g: &Graph,
    s0: &InfectionState,
    policy: &PolicyKind,
    p: f64,
    max_steps: usize,
    rng: &mut R,
    mut budget_for: F,
) -> Result<Trajectory>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &InfectionState) -> Result<usize>,
{
    check_probability(p)?;
    let mut state = s0.clone();
    let mut traj = Trajectory {
        initial_infected: s0.infected(),
        initial_vaccinated: s0.vaccinated(),
        vaccinated_at: Vec::new(),
        newly_infected: Vec::new(),
        budgets: Vec::new(),
        frontier_sizes: vec![s0.frontier_len()],
        terminated: false,
        boundary_touched: false,
        max_infected_degree: 0,
    };
    let note_infected = |traj: &mut Trajectory, nodes: &mut dyn Iterator<Item = NodeId>| {
        for v in nodes {
            traj.boundary_touched |= g.is_boundary(v);
            traj.max_infected_degree = traj.max_infected_degree.max(g.degree(v));
        }
    };
    note_infected(&mut traj, &mut s0.infected_in_order().iter().copied());
    for t in 0..=max_steps {
        if state.is_absorbing() {
            traj.terminated = true;
            break;
        }
        if t == max_steps {
            break;
        }
        let budget = budget_for(t, &state)?;
        let chosen = policy.select(g, &state, budget, t, rng)?;
        if chosen.len() > budget {
            return Err(Error::ContractViolation(format!(
                "policy chose {} nodes with budget {budget}",
                chosen.len()
            )));
        }
        let newly = state.step(g, &chosen, p, rng)?;
        note_infected(&mut traj, &mut newly.iter());
        traj.budgets.push(budget);
        traj.vaccinated_at.push(chosen);
        traj.newly_infected.push(newly);
        traj.frontier_sizes.push(state.frontier_len());
    }
    Ok(traj)
}

/// Simulates run 0 under `params`.
pub fn simulate(
    g: &Graph,
    s0: &InfectionState,
    policy: &PolicyKind,
    params: &SimulationParams,
) -> Result<Trajectory> {
    simulate_run(g, s0, policy, params, 0)
}

/// Simulates run `run` on the stream `(params.master_seed, run)`.
pub fn simulate_run(
    g: &Graph,
    s0: &InfectionState,
    policy: &PolicyKind,
    params: &SimulationParams,
    run: u64,
) -> Result<Trajectory> {
    params.validate()?;
    let mut rng: Stream = stream(params.master_seed, run);
    drive(
        g,
        s0,
        policy,
        params.p,
        params.step_cap(g),
        &mut rng,
        |_, _| Ok(params.budget),
    )
}

/// Summary of a single run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunOutcome {
    pub final_infected: usize,
    pub steps: usize,
    pub terminated: bool,
    pub boundary_touched: bool,
}

/// Monte-Carlo estimate of `L(π, s0) = E[|I_{T*}|]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub runs: usize,
    pub truncated_fraction: f64,
    /// Fraction of runs whose final infected count is at most θ.
    pub contained_fraction: f64,
}

impl LossEstimate {
    /// Aggregates outcomes in the given (run-index) order.
    pub fn from_outcomes(outcomes: &[RunOutcome], theta: usize) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidParameter("need at least one run".into()));
        }
        let n = outcomes.len() as f64;
        let mean = outcomes
            .iter()
            .map(|o| o.final_infected as f64)
            .sum::<f64>()
            / n;
        let var = if outcomes.len() > 1 {
            outcomes
                .iter()
                .map(|o| {
                    let d = o.final_infected as f64 - mean;
                    d * d
                })
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        let frac = |pred: &dyn Fn(&RunOutcome) -> bool| {
            outcomes.iter().filter(|o| pred(o)).count() as f64 / n
        };
        Ok(Self {
            mean,
            std_error: libm::sqrt(var / n),
            runs: outcomes.len(),
            truncated_fraction: frac(&|o| !o.terminated),
            contained_fraction: frac(&|o| o.final_infected <= theta),
        })
    }
}

/// Sequential loss estimate over runs `0..runs`.
pub fn estimate_loss(
    g: &Graph,
    s0: &InfectionState,
    policy: &PolicyKind,
    params: &SimulationParams,
    runs: usize,
    theta: usize,
) -> Result<LossEstimate> {
    let outcomes = (0..runs as u64)
        .map(|r| simulate_run(g, s0, policy, params, r).map(|t| t.outcome()))
        .collect::<Result<Vec<_>>>()?;
    LossEstimate::from_outcomes(&outcomes, theta)
}
