//! State-dependent budget allocation and the constant-budget comparator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::bounds::{affine_stop_value, k_threshold, l_value, threshold_infimum};
use crate::dynamics::{drive, InfectionState, Trajectory};
use crate::graph::Graph;
use crate::growth::{
    check_sampling, fit_affine_lb, sample_frontier_stats, AffineLB, FrontierStats, ProfileKind,
};
use crate::policies::PolicyKind;
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Step cap for the stop-value iteration used for flat fits.
const FLAT_FIT_STEPS: usize = 1 << 16;

/// Slopes at or below this are rounding noise from equal profile values and
/// are solved by direct iteration.
const FLAT_SLOPE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LowerBoundKind {
    Mgr,
    Egr,
}

impl LowerBoundKind {
    pub fn profile_kind(self) -> ProfileKind {
        match self {
            Self::Mgr => ProfileKind::MgrLb,
            Self::Egr => ProfileKind::EgrLb,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Mgr => "mgr",
            Self::Egr => "egr",
        }
    }
}

impl FromStr for LowerBoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mgr" => Ok(Self::Mgr),
            "egr" => Ok(Self::Egr),
            other => Err(Error::InvalidParameter(format!(
                "unknown lower bound type {other:?} (expected mgr or egr)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AllocatorConfig {
    pub lb_type: LowerBoundKind,
    pub trajectories: usize,
    pub depth: usize,
    /// Profile entries seen fewer times than this are dropped (except the
    /// start cardinality).
    pub sample_floor: usize,
    pub seed: u64,
}

impl AllocatorConfig {
    pub fn new(lb_type: LowerBoundKind, seed: u64) -> Self {
        Self {
            lb_type,
            trajectories: 200,
            depth: 3,
            sample_floor: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_sampling(self.trajectories, self.depth)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Allocation {
    pub budget: usize,
    /// Set when the budget is a fallback rather than a solved minimum.
    pub warning: Option<String>,
    pub fit: Option<AffineLB>,
}

impl Allocation {
    fn plain(budget: usize, fit: Option<AffineLB>) -> Self {
        Self {
            budget,
            warning: None,
            fit,
        }
    }
}

/// Budget for the state `s`.
pub fn allocate(g: &Graph, s: &InfectionState, p: f64, cfg: &AllocatorConfig) -> Result<usize> {
    allocate_detailed(g, s, p, cfg).map(|a| a.budget)
}

/// [`allocate`] with the fit and any fallback warning.
pub fn allocate_detailed(
    g: &Graph,
    s: &InfectionState,
    p: f64,
    cfg: &AllocatorConfig,
) -> Result<Allocation> {
    cfg.validate()?;
    if s.is_absorbing() {
        return Ok(Allocation::plain(0, None));
    }
    let (stats, max_degree) =
        sample_frontier_stats(g, s, p, cfg.trajectories, cfg.depth, cfg.seed)?;
    let fit = match fit_stats(&stats, max_degree, s.infected_count(), p, cfg) {
        Ok(fit) => fit,
        Err(Error::ProfileTooShallow { start }) => {
            return Ok(Allocation {
                budget: s.frontier_len(),
                warning: Some(format!(
                    "no sampled state grew beyond {start} infected nodes; allocating the whole frontier"
                )),
                fit: None,
            });
        }
        Err(e) => return Err(e),
    };
    let budget = solve_budget(&fit, fit.theta as f64)?;
    Ok(Allocation::plain(budget, Some(fit)))
}

/// Builds the configured profile from sampled statistics and fits it at
/// `start`.
pub fn fit_stats(
    stats: &FrontierStats,
    max_degree: usize,
    start: usize,
    p: f64,
    cfg: &AllocatorConfig,
) -> Result<AffineLB> {
    let profile = stats
        .profile(cfg.lb_type.profile_kind(), p)
        .with_floor(cfg.sample_floor, start);
    fit_affine_lb(&profile, start, p, max_degree)
}

/// The smallest integer `b` whose affine recursion from `fit.start` under
/// `fit.p_tilde` stops at or below `theta`.
pub fn solve_budget(fit: &AffineLB, theta: f64) -> Result<usize> {
    let (alpha, beta, pt) = (fit.slope, fit.intercept, fit.p_tilde);
    let i0 = fit.start as f64;
    if alpha == 0.0 && beta == 0.0 {
        return Ok(0);
    }
    if !(pt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "effective probability {pt} must be positive"
        )));
    }
    // At this budget the first increment is already non-positive.
    let top = libm::ceil((alpha.max(0.0) * i0 + beta).max(0.0) / pt) as usize;
    if alpha > FLAT_SLOPE {
        let low = libm::floor(threshold_infimum(alpha, beta, pt, i0)).max(0.0) as usize;
        for b in low..top {
            if let Some(k) = k_threshold(alpha, beta, pt, b as f64, i0)?.step() {
                if l_value(alpha, beta, pt, b as f64, k, i0)? <= theta {
                    return Ok(b);
                }
            }
        }
    } else {
        for b in 0..top {
            if affine_stop_value(alpha, beta, pt, b as f64, i0, FLAT_FIT_STEPS)
                .is_some_and(|(_, x)| x <= theta)
            {
                return Ok(b);
            }
        }
    }
    Ok(top)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdaptiveRun {
    pub trajectory: Trajectory,
    pub budget_series: Vec<usize>,
    pub total_budget: usize,
    pub contained: bool,
    /// Steps whose allocation fell back to the whole frontier.
    pub fallback_steps: usize,
}

impl AdaptiveRun {
    fn from_trajectory(trajectory: Trajectory, fallback_steps: usize) -> Self {
        let budget_series = trajectory.budgets.clone();
        Self {
            total_budget: budget_series.iter().sum(),
            contained: trajectory.terminated,
            budget_series,
            trajectory,
            fallback_steps,
        }
    }

    pub fn final_infected(&self) -> usize {
        self.trajectory.final_infected_count()
    }
}

/// Simulates run `run` with the budget re-allocated at every step. The
/// infection draws use the stream `(cfg.seed, run)`; step `t` samples under
/// a seed derived from `(cfg.seed, run, t)`.
pub fn run_adaptive(
    g: &Graph,
    s0: &InfectionState,
    p: f64,
    policy: &PolicyKind,
    cfg: &AllocatorConfig,
    max_steps: usize,
    run: u64,
) -> Result<AdaptiveRun> {
    if !policy.is_first_order() {
        return Err(Error::InvalidParameter(format!(
            "adaptive allocation needs a first-order policy, got {}",
            policy.name()
        )));
    }
    cfg.validate()?;
    policy.validate(g)?;
    let run_seed = derive_seed(cfg.seed, run);
    let mut fallback_steps = 0;
    let mut rng = stream(cfg.seed, run);
    let traj = drive(g, s0, policy, p, max_steps, &mut rng, |t, s| {
        let step_cfg = AllocatorConfig {
            seed: derive_seed(run_seed, t as u64),
            ..*cfg
        };
        let a = allocate_detailed(g, s, p, &step_cfg)?;
        fallback_steps += a.warning.is_some() as usize;
        Ok(a.budget)
    })?;
    Ok(AdaptiveRun::from_trajectory(traj, fallback_steps))
}

/// Budget at step `t` of a constant schedule with mean `b`: integer parts
/// that sum to `⌊(t+1)b⌋` after `t+1` steps.
pub fn constant_schedule(b: f64, t: usize) -> usize {
    (libm::floor((t + 1) as f64 * b) - libm::floor(t as f64 * b)) as usize
}

/// Simulates run `run` with the constant (possibly fractional) budget
/// `b_global`, on the same infection stream as [`run_adaptive`].
pub fn run_constant(
    g: &Graph,
    s0: &InfectionState,
    p: f64,
    policy: &PolicyKind,
    b_global: f64,
    max_steps: usize,
    seed: u64,
    run: u64,
) -> Result<AdaptiveRun> {
    if !(b_global >= 0.0 && b_global.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "constant budget {b_global} must be finite and non-negative"
        )));
    }
    policy.validate(g)?;
    let mut rng = stream(seed, run);
    let traj = drive(g, s0, policy, p, max_steps, &mut rng, |t, _| {
        Ok(constant_schedule(b_global, t))
    })?;
    Ok(AdaptiveRun::from_trajectory(traj, 0))
}

/// `max_i Σ_t max(egr_i(t), mgr_i(t)) / t_avg`; shorter series are padded
/// with zeros.
pub fn constant_budget_equivalent(runs: &[(Vec<usize>, Vec<usize>)], t_avg: f64) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::InvalidParameter("need at least one run".into()));
    }
    if !(t_avg > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "average iteration count {t_avg} must be positive"
        )));
    }
    let total = |(egr, mgr): &(Vec<usize>, Vec<usize>)| -> usize {
        (0..egr.len().max(mgr.len()))
            .map(|t| {
                egr.get(t)
                    .copied()
                    .unwrap_or(0)
                    .max(mgr.get(t).copied().unwrap_or(0))
            })
            .sum()
    };
    Ok(runs.iter().map(total).max().unwrap_or(0) as f64 / t_avg)
}

/// Mean over runs of the per-run average budget.
pub fn mean_average_budget(runs: &[AdaptiveRun]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::InvalidParameter("need at least one run".into()));
    }
    let avg = |r: &AdaptiveRun| {
        let steps = r.budget_series.len();
        if steps == 0 {
            0.0
        } else {
            r.total_budget as f64 / steps as f64
        }
    };
    Ok(runs.iter().map(avg).sum::<f64>() / runs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{containment_bounds, tree_spec, BudgetSearch};
    use crate::graph::{generate, NodeSet, TopologySpec};
    use alloc::vec;
    use proptest::prelude::*;

    fn path(n: u32) -> Graph {
        Graph::from_edges(n as usize, (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }

    fn source(g: &Graph, v: u32) -> InfectionState {
        InfectionState::from_infected(g, &NodeSet::singleton(v)).unwrap()
    }

    #[test]
    fn parse_lb_type() {
        assert_eq!("mgr".parse::<LowerBoundKind>(), Ok(LowerBoundKind::Mgr));
        assert_eq!("egr".parse::<LowerBoundKind>(), Ok(LowerBoundKind::Egr));
        assert!("xyz".parse::<LowerBoundKind>().is_err());
    }

    #[test]
    fn absorbing_state_needs_nothing() {
        let g = path(3);
        let s = InfectionState::new(&g, &NodeSet::singleton(0), &NodeSet::singleton(1)).unwrap();
        let cfg = AllocatorConfig::new(LowerBoundKind::Egr, 1);
        assert_eq!(allocate(&g, &s, 0.5, &cfg), Ok(0));
        let run = run_adaptive(&g, &s, 0.5, &PolicyKind::Cut, &cfg, 10, 0).unwrap();
        assert_eq!((run.trajectory.state_count(), run.total_budget), (1, 0));
        assert!(run.contained);
    }

    #[test]
    fn invalid_config() {
        let g = path(3);
        let mut cfg = AllocatorConfig::new(LowerBoundKind::Egr, 1);
        cfg.trajectories = 0;
        assert!(allocate(&g, &source(&g, 0), 0.5, &cfg).is_err());
        let cfg = AllocatorConfig::new(LowerBoundKind::Egr, 1);
        assert!(run_adaptive(&g, &source(&g, 0), 0.5, &PolicyKind::Tree, &cfg, 5, 0).is_err());
    }

    #[test]
    fn shallow_profile_falls_back_to_frontier() {
        // With p tiny nothing spreads in the sampled window.
        let g = generate(&TopologySpec::Grid { dim: 2, side: 5 }).unwrap();
        let s = source(&g, 12);
        let cfg = AllocatorConfig {
            trajectories: 10,
            depth: 1,
            ..AllocatorConfig::new(LowerBoundKind::Mgr, 3)
        };
        let a = allocate_detailed(&g, &s, 1e-12, &cfg).unwrap();
        assert_eq!(a.budget, 4);
        assert!(a.warning.is_some() && a.fit.is_none());
    }

    #[test]
    fn deterministic_chain() {
        let g = path(6);
        let s = source(&g, 0);
        let cfg = AllocatorConfig::new(LowerBoundKind::Mgr, 4);
        let a = allocate_detailed(&g, &s, 1.0, &cfg).unwrap();
        assert_eq!(a.budget, 1);
        let fit = a.fit.unwrap();
        assert_eq!(
            (fit.slope, fit.intercept, fit.theta, fit.p_tilde),
            (0.0, 1.0, 2, 1.0)
        );
        let run = run_adaptive(&g, &s, 1.0, &PolicyKind::Cut, &cfg, 10, 0).unwrap();
        assert_eq!(run.budget_series, [1]);
        assert_eq!(run.trajectory.vaccinated_at[0], NodeSet::singleton(1));
        assert!(run.contained);
        assert_eq!(run.final_infected(), 1);
    }

    #[test]
    fn tree_budget_matches_closed_form() {
        let g = generate(&TopologySpec::RegularTree {
            children: 3,
            depth: 8,
        })
        .unwrap();
        let s = source(&g, 0);
        for lb in [LowerBoundKind::Mgr, LowerBoundKind::Egr] {
            let cfg = AllocatorConfig {
                trajectories: 4000,
                ..AllocatorConfig::new(lb, 11)
            };
            let b = allocate(&g, &s, 0.5, &cfg).unwrap();
            assert!((1..=2).contains(&b), "{lb:?}: {b}");
        }
    }

    #[test]
    fn solve_budget_cases() {
        let fit = |slope, intercept, start, theta, p_tilde| AffineLB {
            slope,
            intercept,
            start,
            theta,
            p_tilde,
        };
        assert_eq!(solve_budget(&fit(0.0, 0.0, 3, 4, 1.0), 4.0), Ok(0));
        // Tree closed form: α = 1, β = 1.5, p̃ = 1 from the root.
        assert_eq!(solve_budget(&fit(1.0, 1.5, 1, 6, 1.0), 6.0), Ok(2));
        assert_eq!(solve_budget(&fit(1.0, 1.5, 1, 6, 1.0), 1.0), Ok(3));
        // Flat fit: budget must cover the intercept eventually.
        assert_eq!(solve_budget(&fit(0.0, 1.0, 1, 2, 1.0), 2.0), Ok(1));
        assert_eq!(solve_budget(&fit(0.0, 2.0, 1, 2, 0.5), 2.0), Ok(2));
        assert_eq!(solve_budget(&fit(-0.5, 2.0, 1, 2, 1.0), 2.0), Ok(1));
        assert!(solve_budget(&fit(1.0, 1.0, 1, 2, 0.0), 2.0).is_err());
        // Rounding-level slopes behave like flat ones.
        let noisy = solve_budget(&fit(1.1e-16, 2.1, 9, 13, 1.0), 13.0).unwrap();
        assert_eq!(
            noisy,
            solve_budget(&fit(0.0, 2.1, 9, 13, 1.0), 13.0).unwrap()
        );
    }

    fn tree_runs(runs: u64) -> Vec<AdaptiveRun> {
        let g = generate(&TopologySpec::RegularTree {
            children: 3,
            depth: 8,
        })
        .unwrap();
        let s = source(&g, 0);
        let cfg = AllocatorConfig::new(LowerBoundKind::Mgr, 5);
        (0..runs)
            .map(|r| run_adaptive(&g, &s, 0.5, &PolicyKind::Cut, &cfg, g.node_count(), r).unwrap())
            .collect()
    }

    #[test]
    fn adaptive_tree_is_contained() {
        let runs = tree_runs(300);
        assert!(runs.iter().all(|r| r.contained && r.budget_series[0] >= 2));
    }

    // Fails: the root-seeded tree has a convex clipped growth, so the affine
    // recursion underestimates the loss (exact loss at b = 2 is 2, bound 1.5).
    #[test]
    fn adaptive_tree_mean_within_upper_bound() {
        let runs = tree_runs(1000);
        assert!(runs.iter().all(|r| r.contained));
        let mean = runs.iter().map(|r| r.final_infected() as f64).sum::<f64>() / runs.len() as f64;
        let first = runs.iter().map(|r| r.budget_series[0]).min().unwrap() as f64;
        let report =
            containment_bounds(&tree_spec(3, 0.5, 1, None), BudgetSearch::Integer, &[first])
                .unwrap();
        let upper = report.loss_upper_at(first).unwrap();
        assert!(
            mean <= upper,
            "mean {mean} above upper bound {upper} at b = {first}"
        );
    }

    #[test]
    fn constant_schedule_sums() {
        let total: usize = (0..10).map(|t| constant_schedule(2.5, t)).sum();
        assert_eq!(total, 25);
        assert!((0..10).all(|t| constant_schedule(3.0, t) == 3));
        assert_eq!(constant_schedule(0.0, 4), 0);
    }

    #[test]
    fn paired_runs_share_the_infection_stream() {
        let g = generate(&TopologySpec::Grid { dim: 2, side: 9 }).unwrap();
        let s = source(&g, 40);
        let a = run_constant(&g, &s, 0.3, &PolicyKind::Cut, 0.0, 50, 9, 2).unwrap();
        let params = crate::dynamics::SimulationParams::new(0.3, 0, 9).with_max_steps(50);
        let b = crate::dynamics::simulate_run(&g, &s, &PolicyKind::Cut, &params, 2).unwrap();
        assert_eq!(a.trajectory, b);
        assert!(run_constant(&g, &s, 0.3, &PolicyKind::Cut, f64::NAN, 50, 9, 2).is_err());
    }

    #[test]
    fn constant_equivalent_examples() {
        assert_eq!(
            constant_budget_equivalent(&[(vec![3, 1], vec![2, 2])], 2.0),
            Ok(2.5)
        );
        assert_eq!(
            constant_budget_equivalent(&[(vec![2, 2], vec![2, 2])], 2.0),
            Ok(2.0)
        );
        let two = [(vec![4], vec![1]), (vec![3, 3], vec![0])];
        assert_eq!(constant_budget_equivalent(&two, 3.0), Ok(2.0));
        assert!(constant_budget_equivalent(&[], 1.0).is_err());
        assert!(constant_budget_equivalent(&two, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn budget_monotone_in_theta(
            slope in -1.0f64..3.0,
            intercept in 0.0f64..10.0,
            start in 1usize..50,
            extra in 1usize..40,
            cut in 0usize..40,
            p_tilde in 0.05f64..1.0,
        ) {
            let theta = start + extra;
            let f = AffineLB { slope, intercept, start, theta, p_tilde };
            let hi = solve_budget(&f, theta as f64).unwrap();
            let lo_theta = (start + extra.saturating_sub(cut)) as f64;
            prop_assert!(solve_budget(&f, lo_theta).unwrap() >= hi);
        }

        #[test]
        fn adaptive_budgets_follow_dynamics(seed in 0u64..1000, p in 0.1f64..0.9) {
            let g = generate(&TopologySpec::Grid { dim: 2, side: 6 }).unwrap();
            let s = source(&g, 14);
            let cfg = AllocatorConfig { trajectories: 20, ..AllocatorConfig::new(LowerBoundKind::Egr, seed) };
            let run = run_adaptive(&g, &s, p, &PolicyKind::Cut, &cfg, 100, 0).unwrap();
            prop_assert_eq!(run.total_budget, run.budget_series.iter().sum::<usize>());
            for (t, chosen) in run.trajectory.vaccinated_at.iter().enumerate() {
                prop_assert!(chosen.len() <= run.budget_series[t]);
            }
            prop_assert!(run.contained);
        }
    }
}
