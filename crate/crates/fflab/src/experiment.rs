//! Parallel drivers. Run `i` always reads the stream `(seed, i)` and results
//! are gathered in run order, so output does not depend on thread count.

use anyhow::{bail, Context, Result};
use fflab_core::allocator::{
    constant_budget_equivalent, mean_average_budget, run_adaptive, run_constant, AdaptiveRun,
    AllocatorConfig, LowerBoundKind,
};
use fflab_core::dynamics::{
    simulate_run, InfectionState, LossEstimate, RunOutcome, SimulationParams,
};
use fflab_core::policies::PolicyKind;
use fflab_core::{Graph, NodeSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::setup::random_nodes;

/// Thread pool sized by `FFLAB_THREADS` (all cores when unset).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("FFLAB_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("FFLAB_THREADS={v:?} is not a count"))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

/// Outcomes of runs `0..runs`, in run order.
pub fn run_outcomes(
    g: &Graph,
    s0: &InfectionState,
    policy: &PolicyKind,
    params: &SimulationParams,
    runs: usize,
) -> Result<Vec<RunOutcome>> {
    let pool = thread_pool()?;
    let outcomes = pool.install(|| {
        (0..runs as u64)
            .into_par_iter()
            .map(|r| simulate_run(g, s0, policy, params, r).map(|t| t.outcome()))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(outcomes)
}

/// Parallel counterpart of the sequential loss estimate; identical output.
pub fn estimate_loss_parallel(
    g: &Graph,
    s0: &InfectionState,
    policy: &PolicyKind,
    params: &SimulationParams,
    runs: usize,
    theta: usize,
) -> Result<LossEstimate> {
    let outcomes = run_outcomes(g, s0, policy, params, runs)?;
    Ok(LossEstimate::from_outcomes(&outcomes, theta)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Maximal total of the pointwise larger series over average iterations.
    Bglobal,
    /// Mean per-run average budget of the EGR allocation.
    Fig5EgrMean,
}

impl std::str::FromStr for Baseline {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bglobal" => Ok(Self::Bglobal),
            "fig5-egr-mean" => Ok(Self::Fig5EgrMean),
            _ => bail!("unknown baseline {s:?} (expected bglobal or fig5-egr-mean)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub p: f64,
    pub policy: PolicyKind,
    pub lb_types: Vec<LowerBoundKind>,
    pub trajectories: usize,
    pub depth: usize,
    pub sample_floor: usize,
    /// Initial states drawn uniformly at random.
    pub samples: usize,
    /// Runs per initial state.
    pub runs: usize,
    pub seed: u64,
    pub i0_size: usize,
    pub max_steps: Option<usize>,
    pub baseline: Baseline,
}

impl CompareConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            bail!("p = {} outside [0, 1]", self.p);
        }
        if self.lb_types.is_empty() {
            bail!("need at least one lower bound type");
        }
        if self.samples == 0 || self.runs == 0 {
            bail!("need at least one sample and one run");
        }
        if self.baseline == Baseline::Fig5EgrMean && !self.lb_types.contains(&LowerBoundKind::Egr) {
            bail!("the fig5-egr-mean baseline needs the egr allocation");
        }
        if !self.policy.is_first_order() {
            bail!("budget allocation needs a first-order policy");
        }
        self.allocator(LowerBoundKind::Egr).validate()?;
        Ok(())
    }

    pub fn allocator(&self, lb_type: LowerBoundKind) -> AllocatorConfig {
        AllocatorConfig {
            lb_type,
            trajectories: self.trajectories,
            depth: self.depth,
            sample_floor: self.sample_floor,
            seed: self.seed,
        }
    }
}

/// One paired test: the adaptive runs and the constant-budget run share the
/// infection stream of run index `index`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedTest {
    pub sample: usize,
    pub run: usize,
    pub index: u64,
    pub initial: NodeSet,
    /// One per configured lower bound type, in configuration order.
    pub adaptive: Vec<(LowerBoundKind, AdaptiveRun)>,
    pub constant: AdaptiveRun,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesStats {
    pub mean_final_infected: f64,
    pub std_final_infected: f64,
    pub mean_total_budget: f64,
    pub mean_steps: f64,
    pub contained_fraction: f64,
}

impl SeriesStats {
    fn from_runs<'a>(runs: impl Iterator<Item = &'a AdaptiveRun>) -> Self {
        let runs: Vec<&AdaptiveRun> = runs.collect();
        let n = runs.len() as f64;
        let mean = |f: &dyn Fn(&AdaptiveRun) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
        let m = mean(&|r| r.final_infected() as f64);
        let var = if runs.len() > 1 {
            runs.iter()
                .map(|r| (r.final_infected() as f64 - m).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean_final_infected: m,
            std_final_infected: var.sqrt(),
            mean_total_budget: mean(&|r| r.total_budget as f64),
            mean_steps: mean(&|r| r.budget_series.len() as f64),
            contained_fraction: mean(&|r| r.contained as u8 as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptiveSummary {
    pub lb_type: LowerBoundKind,
    pub stats: SeriesStats,
    /// Fraction of tests where the adaptive run ends with at most as many
    /// infected nodes as the constant run.
    pub dominance_fraction: f64,
    pub fallback_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareSummary {
    pub b_global: f64,
    pub t_avg: f64,
    pub baseline: Baseline,
    pub constant: SeriesStats,
    pub adaptive: Vec<AdaptiveSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub summary: CompareSummary,
    pub tests: Vec<PairedTest>,
}

impl Comparison {
    pub fn adaptive_summary(&self, lb: LowerBoundKind) -> Option<&AdaptiveSummary> {
        self.summary.adaptive.iter().find(|a| a.lb_type == lb)
    }
}

/// Adaptive allocation against the constant baseline over
/// `samples × runs` paired tests.
pub fn budget_compare(g: &Graph, cfg: &CompareConfig) -> Result<Comparison> {
    cfg.validate()?;
    let max_steps = cfg.max_steps.unwrap_or(g.node_count());
    let pool = thread_pool()?;
    let initial: Vec<InfectionState> = (0..cfg.samples as u64)
        .map(|s| {
            let set = random_nodes(g, cfg.i0_size, cfg.seed, s)?;
            Ok(InfectionState::from_infected(g, &set)?)
        })
        .collect::<Result<_>>()?;
    let index = |sample: usize, run: usize| (sample * cfg.runs + run) as u64;
    let cases: Vec<(usize, usize)> = (0..cfg.samples)
        .flat_map(|s| (0..cfg.runs).map(move |r| (s, r)))
        .collect();

    let adaptive: Vec<Vec<(LowerBoundKind, AdaptiveRun)>> = pool.install(|| {
        cases
            .par_iter()
            .map(|&(s, r)| {
                cfg.lb_types
                    .iter()
                    .map(|&lb| {
                        run_adaptive(
                            g,
                            &initial[s],
                            cfg.p,
                            &cfg.policy,
                            &cfg.allocator(lb),
                            max_steps,
                            index(s, r),
                        )
                        .map(|run| (lb, run))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let all_runs = || adaptive.iter().flat_map(|v| v.iter().map(|(_, r)| r));
    let t_avg = all_runs()
        .map(|r| r.budget_series.len() as f64)
        .sum::<f64>()
        / all_runs().count() as f64;
    let series = |v: &[(LowerBoundKind, AdaptiveRun)], lb| {
        v.iter()
            .find(|(k, _)| *k == lb)
            .map(|(_, r)| r.budget_series.clone())
    };
    let b_global = match cfg.baseline {
        Baseline::Bglobal if t_avg > 0.0 => {
            let pairs: Vec<(Vec<usize>, Vec<usize>)> = adaptive
                .iter()
                .map(|v| {
                    let egr = series(v, LowerBoundKind::Egr);
                    let mgr = series(v, LowerBoundKind::Mgr);
                    let (a, b) = (
                        egr.clone().or(mgr.clone()).unwrap_or_default(),
                        mgr.or(egr).unwrap_or_default(),
                    );
                    (a, b)
                })
                .collect();
            constant_budget_equivalent(&pairs, t_avg)?
        }
        Baseline::Bglobal => 0.0,
        Baseline::Fig5EgrMean => {
            let egr: Vec<AdaptiveRun> = adaptive
                .iter()
                .flat_map(|v| {
                    v.iter()
                        .filter(|(k, _)| *k == LowerBoundKind::Egr)
                        .map(|(_, r)| r.clone())
                })
                .collect();
            mean_average_budget(&egr)?
        }
    };

    let constant: Vec<AdaptiveRun> = pool.install(|| {
        cases
            .par_iter()
            .map(|&(s, r)| {
                run_constant(
                    g,
                    &initial[s],
                    cfg.p,
                    &cfg.policy,
                    b_global,
                    max_steps,
                    cfg.seed,
                    index(s, r),
                )
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let tests: Vec<PairedTest> = cases
        .iter()
        .zip(adaptive)
        .zip(constant)
        .map(|((&(s, r), adaptive), constant)| PairedTest {
            sample: s,
            run: r,
            index: index(s, r),
            initial: initial[s].infected(),
            adaptive,
            constant,
        })
        .collect();
    let adaptive_summaries = cfg
        .lb_types
        .iter()
        .enumerate()
        .map(|(i, &lb)| {
            let runs = || tests.iter().map(move |t| &t.adaptive[i].1);
            let wins = tests
                .iter()
                .filter(|t| t.adaptive[i].1.final_infected() <= t.constant.final_infected())
                .count();
            AdaptiveSummary {
                lb_type: lb,
                stats: SeriesStats::from_runs(runs()),
                dominance_fraction: wins as f64 / tests.len() as f64,
                fallback_steps: runs().map(|r| r.fallback_steps).sum(),
            }
        })
        .collect();
    Ok(Comparison {
        summary: CompareSummary {
            b_global,
            t_avg,
            baseline: cfg.baseline,
            constant: SeriesStats::from_runs(tests.iter().map(|t| &t.constant)),
            adaptive: adaptive_summaries,
        },
        tests,
    })
}

/// Rows `(sample, run, strategy, t, infected, budget)` for every test.
pub fn write_series_csv<W: std::io::Write>(cmp: &Comparison, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sample", "run", "strategy", "t", "infected", "budget"])?;
    for test in &cmp.tests {
        let strategies = test
            .adaptive
            .iter()
            .map(|(lb, r)| (lb.name(), r))
            .chain(std::iter::once(("constant", &test.constant)));
        for (name, run) in strategies {
            let sizes = run.trajectory.infected_sizes();
            for (t, size) in sizes.iter().enumerate() {
                let budget = run
                    .budget_series
                    .get(t)
                    .map(|b| b.to_string())
                    .unwrap_or_default();
                out.write_record([
                    test.sample.to_string(),
                    test.run.to_string(),
                    name.to_string(),
                    t.to_string(),
                    size.to_string(),
                    budget,
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fflab_core::dynamics::estimate_loss;
    use fflab_core::graph::{generate, TopologySpec};

    #[test]
    fn parallel_estimate_matches_sequential() {
        let g = generate(&TopologySpec::Grid { dim: 2, side: 9 }).unwrap();
        let s0 = InfectionState::from_infected(&g, &NodeSet::singleton(40)).unwrap();
        let params = SimulationParams::new(0.4, 1, 17);
        let seq = estimate_loss(&g, &s0, &PolicyKind::Random, &params, 300, 10).unwrap();
        let par = estimate_loss_parallel(&g, &s0, &PolicyKind::Random, &params, 300, 10).unwrap();
        assert_eq!(seq, par);
    }

    fn small_config() -> CompareConfig {
        CompareConfig {
            p: 0.2,
            policy: PolicyKind::Cut,
            lb_types: vec![LowerBoundKind::Egr, LowerBoundKind::Mgr],
            trajectories: 30,
            depth: 3,
            sample_floor: 5,
            samples: 2,
            runs: 3,
            seed: 4,
            i0_size: 5,
            max_steps: None,
            baseline: Baseline::Bglobal,
        }
    }

    #[test]
    fn comparison_is_reproducible_and_consistent() {
        let g = generate(&TopologySpec::PreferentialAttachment {
            n: 150,
            m: 2,
            seed: 3,
        })
        .unwrap();
        let cfg = small_config();
        let a = budget_compare(&g, &cfg).unwrap();
        assert_eq!(a, budget_compare(&g, &cfg).unwrap());
        assert_eq!(a.tests.len(), 6);
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = a
            .tests
            .iter()
            .map(|t| {
                (
                    t.adaptive[0].1.budget_series.clone(),
                    t.adaptive[1].1.budget_series.clone(),
                )
            })
            .collect();
        assert_eq!(
            a.summary.b_global,
            constant_budget_equivalent(&pairs, a.summary.t_avg).unwrap()
        );
        assert!(a
            .tests
            .iter()
            .all(|t| t.initial.len() == 5 && t.adaptive.len() == 2));
        assert_eq!(a.tests[0].initial, a.tests[2].initial);
        assert_ne!(a.tests[0].initial, a.tests[3].initial);
        let mut csv = Vec::new();
        write_series_csv(&a, &mut csv).unwrap();
        assert!(String::from_utf8(csv)
            .unwrap()
            .starts_with("sample,run,strategy,t,infected,budget\n"));
    }

    #[test]
    fn egr_mean_baseline_and_validation() {
        let g = generate(&TopologySpec::PreferentialAttachment {
            n: 120,
            m: 2,
            seed: 3,
        })
        .unwrap();
        let cfg = CompareConfig {
            baseline: Baseline::Fig5EgrMean,
            samples: 1,
            ..small_config()
        };
        let a = budget_compare(&g, &cfg).unwrap();
        let egr: Vec<AdaptiveRun> = a.tests.iter().map(|t| t.adaptive[0].1.clone()).collect();
        assert_eq!(a.summary.b_global, mean_average_budget(&egr).unwrap());
        let bad = CompareConfig {
            lb_types: vec![LowerBoundKind::Mgr],
            ..cfg.clone()
        };
        assert!(budget_compare(&g, &bad).is_err());
        let bad = CompareConfig {
            policy: PolicyKind::NoOp,
            ..cfg.clone()
        };
        assert!(budget_compare(
            &g,
            &CompareConfig {
                i0_size: 500,
                ..bad
            }
        )
        .is_err());
        assert!("fig5-egr-mean".parse::<Baseline>().is_ok() && "mean".parse::<Baseline>().is_err());
    }
}
