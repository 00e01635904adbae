//! The `fflab` command line.
//!
//! Every subcommand accepts `--config FILE` (JSON). Values come from flags,
//! then the config file, then built-in defaults. The config may hold the
//! subcommand's fields directly or under a key named after the subcommand.
//! Exit codes: 0 on success, 2 on configuration errors, 1 on runtime errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use fflab_core::allocator::LowerBoundKind;
use fflab_core::bounds::{
    containment_bounds, er_report, grid_spec, tree_spec, BoundSpec, BudgetSearch, ContainmentReport,
};
use fflab_core::dynamics::{simulate_run, LossEstimate, RunOutcome, SimulationParams};
use fflab_core::growth::{fit_affine_lb, sample_frontier_stats, AffineLB, GrowthProfile};
use fflab_core::oracle::{
    enumerate_crusades, exact_rates, optimal_loss_dp, policy_loss_dp, CrusadeSeed, OracleConfig,
    PolicyClass, RateEntry,
};
use fflab_core::{Graph, NodeId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::experiment::{
    budget_compare, run_outcomes, write_series_csv, CompareConfig, CompareSummary,
};
use crate::report::{write_json, RunReport};
use crate::setup::{lookup, parse_policy, parse_theta, GraphSource, InitialInfection};
use crate::{io, setup};

/// A failed invocation, split by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fflab",
    version,
    about = "Stochastic firefighter simulations, bounds and oracles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo loss of a vaccination policy.
    Simulate(SimulateArgs),
    /// Containment budget bounds for a topology or custom envelopes.
    Bounds(BoundsArgs),
    /// Exact values on tiny graphs.
    Oracle(OracleArgs),
    /// Sampled growth-rate lower-bound profiles and their affine fit.
    EstimateGr(EstimateArgs),
    /// State-dependent allocation against a constant budget.
    BudgetCompare(CompareArgs),
    /// Writes a generated graph as an edge list.
    GenGraph(GenGraphArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Bounds(_) => "bounds",
            Self::Oracle(_) => "oracle",
            Self::EstimateGr(_) => "estimate-gr",
            Self::BudgetCompare(_) => "budget-compare",
            Self::GenGraph(_) => "gen-graph",
        }
    }
}

/// Parses `args` (including the program name), runs, and reports.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(report) => {
            // A closed pipe downstream is not an error of the run.
            let text = serde_json::to_string_pretty(&report).unwrap_or_default();
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.exit_code())
        }
    }
}

/// Runs one subcommand and returns its report.
pub fn execute(command: Command) -> Result<Value, Failure> {
    let started = Instant::now();
    let name = command.name();
    match command {
        Command::Simulate(a) => simulate(layered(&a, a.config.as_deref(), name)?, started),
        Command::Bounds(a) => bounds(layered(&a, a.config.as_deref(), name)?, started),
        Command::Oracle(a) => oracle(layered(&a, a.config.as_deref(), name)?, started),
        Command::EstimateGr(a) => estimate_gr(layered(&a, a.config.as_deref(), name)?, started),
        Command::BudgetCompare(a) => compare(layered(&a, a.config.as_deref(), name)?, started),
        Command::GenGraph(a) => gen_graph(layered(&a, a.config.as_deref(), name)?, started),
    }
}

/// Overlays the flags that were given on the config file's values.
fn layered<T: Serialize + DeserializeOwned>(
    flags: &T,
    config: Option<&Path>,
    section: &str,
) -> Result<T, Failure> {
    let mut merged = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))
                .config()?;
            let value: Value = serde_json::from_str(&text)
                .with_context(|| format!("config {} is not valid JSON", path.display()))
                .config()?;
            match value {
                Value::Object(mut map) => match map.remove(section) {
                    Some(Value::Object(inner)) => inner,
                    Some(_) => {
                        return Err(Failure::Config(anyhow!(
                            "config section {section:?} must be an object"
                        )))
                    }
                    None => map,
                },
                _ => {
                    return Err(Failure::Config(anyhow!(
                        "config {} must be a JSON object",
                        path.display()
                    )))
                }
            }
        }
        None => serde_json::Map::new(),
    };
    if let Value::Object(given) = serde_json::to_value(flags).config()? {
        merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(Value::Object(merged))
        .with_context(|| format!("invalid configuration for {section}"))
        .config()
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::Config(anyhow!("--{flag} is required")))
}

fn check_probability(p: f64) -> Result<f64, Failure> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Failure::Config(anyhow!("--p {p} is outside [0, 1]")))
    }
}

fn prepare_out(out: &Option<PathBuf>) -> Result<Option<PathBuf>, Failure> {
    if let Some(dir) = out.as_deref() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))
            .runtime()?;
    }
    Ok(out.clone())
}

fn finish<C: Serialize, R: Serialize>(
    command: &'static str,
    config: C,
    results: R,
    started: Instant,
    out: Option<&Path>,
) -> Result<Value, Failure> {
    let report = RunReport::new(command, config, results, started);
    if let Some(dir) = out {
        write_json(&dir.join("report.json"), &report).runtime()?;
    }
    report.to_value().runtime()
}

fn csv_file(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .runtime()
}

/// Graph selection shared by the subcommands that read one.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphArgs {
    /// Edge-list file.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// grid:DIM:SIDE, tree:CHILDREN:DEPTH, er:N:S:SEED, ba:N:M:SEED or gap:K.
    #[arg(long)]
    pub generator: Option<String>,
    /// Roots a loaded tree at this node label (needed by the tree policy).
    #[arg(long)]
    pub root: Option<u64>,
}

/// A loaded graph together with the settings used to resolve nodes on it.
struct Loaded {
    graph: Graph,
    source: GraphSource,
}

impl Loaded {
    fn new(args: &GraphArgs) -> Result<Self, Failure> {
        let source =
            GraphSource::from_flags(args.graph.clone(), args.generator.clone()).config()?;
        let mut graph = source.load().config()?;
        if let Some(label) = args.root {
            let root = lookup(&graph, label).config()?;
            graph = graph.rooted_at(root).config()?;
        }
        Ok(Self { graph, source })
    }

    fn initial(&self, spec: &str, seed: u64) -> Result<fflab_core::NodeSet, Failure> {
        let i0: InitialInfection = spec.parse().config()?;
        let generator = self.source.generator().config()?;
        i0.resolve(&self.graph, generator.as_ref(), seed, 0)
            .config()
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphArgs,
    /// Infection probability per infected neighbor.
    #[arg(long)]
    pub p: Option<f64>,
    /// Vaccinations per step.
    #[arg(long)]
    pub b: Option<usize>,
    /// cut, random, tree, noop or scripted:FILE.
    #[arg(long)]
    pub policy: Option<String>,
    /// center, root, random:K or a comma-separated list of node ids.
    #[arg(long)]
    pub i0: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Containment threshold for the contained fraction (default: node count).
    #[arg(long)]
    pub theta: Option<usize>,
    /// Also write the first run's full sets as JSON.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub sets: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub graph: GraphArgs,
    pub p: f64,
    pub b: usize,
    pub policy: String,
    pub i0: String,
    pub runs: usize,
    pub seed: u64,
    pub max_steps: Option<usize>,
    pub theta: Option<usize>,
    pub sets: bool,
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn resolve(self) -> Result<SimulateConfig, Failure> {
        Ok(SimulateConfig {
            graph: self.graph,
            p: check_probability(require(self.p, "p")?)?,
            b: self.b.unwrap_or(0),
            policy: self.policy.unwrap_or_else(|| "cut".into()),
            i0: require(self.i0, "i0")?,
            runs: self.runs.unwrap_or(1).max(1),
            seed: self.seed.unwrap_or(0),
            max_steps: self.max_steps,
            theta: self.theta,
            sets: self.sets.unwrap_or(false),
            out: self.out,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstRun {
    pub final_infected: usize,
    pub steps: usize,
    pub terminated: bool,
    pub boundary_touched: bool,
    pub total_vaccinated: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateResults {
    pub nodes: usize,
    pub edges: usize,
    pub initial_infected: Vec<NodeId>,
    pub policy: &'static str,
    pub loss: LossEstimate,
    pub min_final_infected: usize,
    pub max_final_infected: usize,
    pub mean_steps: f64,
    pub first_run: FirstRun,
}

fn simulate(args: SimulateArgs, started: Instant) -> Result<Value, Failure> {
    let cfg = args.resolve()?;
    let loaded = Loaded::new(&cfg.graph)?;
    let g = &loaded.graph;
    let policy = parse_policy(&cfg.policy, Path::new(".")).config()?;
    policy.validate(g).config()?;
    let i0 = loaded.initial(&cfg.i0, cfg.seed)?;
    let s0 = setup::initial_state(g, &i0).config()?;
    let mut params = SimulationParams::new(cfg.p, cfg.b, cfg.seed);
    params.max_steps = cfg.max_steps;
    params.validate().config()?;
    let out = prepare_out(&cfg.out)?;

    let outcomes = run_outcomes(g, &s0, &policy, &params, cfg.runs).runtime()?;
    let theta = cfg.theta.unwrap_or(g.node_count());
    let loss = LossEstimate::from_outcomes(&outcomes, theta).runtime()?;
    let first = simulate_run(g, &s0, &policy, &params, 0).runtime()?;
    let results = SimulateResults {
        nodes: g.node_count(),
        edges: g.edge_count(),
        initial_infected: i0.as_slice().to_vec(),
        policy: policy.name(),
        loss,
        min_final_infected: outcomes.iter().map(|o| o.final_infected).min().unwrap_or(0),
        max_final_infected: outcomes.iter().map(|o| o.final_infected).max().unwrap_or(0),
        mean_steps: outcomes.iter().map(|o| o.steps as f64).sum::<f64>() / outcomes.len() as f64,
        first_run: FirstRun {
            final_infected: first.final_infected_count(),
            steps: first.steps(),
            terminated: first.terminated,
            boundary_touched: first.boundary_touched,
            total_vaccinated: first.total_vaccinated(),
        },
    };
    if let Some(dir) = out.as_deref() {
        io::write_trajectory_csv(&first, csv_file(dir, "trajectory.csv")?).runtime()?;
        write_outcomes_csv(&outcomes, csv_file(dir, "runs.csv")?).runtime()?;
        if cfg.sets {
            write_json(&dir.join("trajectory.json"), &first).runtime()?;
        }
    }
    finish("simulate", cfg.clone(), results, started, out.as_deref())
}

fn write_outcomes_csv<W: std::io::Write>(outcomes: &[RunOutcome], w: W) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "run",
        "final_infected",
        "steps",
        "terminated",
        "boundary_touched",
    ])?;
    for (r, o) in outcomes.iter().enumerate() {
        out.write_record([
            r.to_string(),
            o.final_infected.to_string(),
            o.steps.to_string(),
            o.terminated.to_string(),
            o.boundary_touched.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

// ------------------------------------------------------------------ bounds

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsArgs {
    /// tree, grid, er or custom.
    #[arg(long)]
    pub topology: Option<String>,
    /// Children per node (tree) or lattice dimension (grid).
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub i0: Option<usize>,
    /// Integer or inf.
    #[arg(long)]
    pub theta: Option<String>,
    /// Node count (er).
    #[arg(long)]
    pub n: Option<usize>,
    /// Mean degree (er).
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub p_tilde: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Budgets at which to report loss bounds.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<f64>>,
    /// integer or bisection.
    #[arg(long)]
    pub search: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErDetails {
    pub n: usize,
    pub c: f64,
    pub theta_max: usize,
    pub g_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsResults {
    pub b_upper: f64,
    pub b_lower: f64,
    pub report: ContainmentReport,
    pub er: Option<ErDetails>,
    pub warnings: Vec<String>,
}

fn bounds(a: BoundsArgs, started: Instant) -> Result<Value, Failure> {
    let topology = a.topology.clone().unwrap_or_else(|| "custom".into());
    let p = check_probability(require(a.p, "p")?)?;
    let i0 = a.i0.unwrap_or(1);
    let theta = parse_theta(a.theta.as_deref().unwrap_or("inf")).config()?;
    let budgets = a.budgets.clone().unwrap_or_default();
    let search = match a.search.as_deref().unwrap_or("integer") {
        "integer" => BudgetSearch::Integer,
        "bisection" => BudgetSearch::Bisection,
        s => {
            return Err(Failure::Config(anyhow!(
                "unknown search {s:?} (expected integer or bisection)"
            )))
        }
    };
    let out = prepare_out(&a.out)?;
    let mut er = None;
    let mut warnings = Vec::new();
    let report = match topology.as_str() {
        "tree" => {
            let spec = tree_spec(require(a.d, "d")?, p, i0, theta);
            containment_bounds(&spec, search, &budgets).config()?
        }
        "grid" => {
            let spec = grid_spec(require(a.d, "d")?, p, i0, theta).config()?;
            containment_bounds(&spec, search, &budgets).config()?
        }
        "er" => {
            let r = er_report(
                require(a.n, "n")?,
                require(a.c, "c")?,
                p,
                i0,
                theta,
                a.p_tilde,
                &budgets,
            )
            .config()?;
            er = Some(ErDetails {
                n: r.n,
                c: r.c,
                theta_max: r.theta_max,
                g_max: r.g_max,
            });
            warnings = r.warnings;
            r.report
        }
        "custom" => {
            let spec = BoundSpec {
                alpha: require(a.alpha, "alpha")?,
                beta: require(a.beta, "beta")?,
                gamma: a.gamma.unwrap_or(0.0),
                delta: a.delta.unwrap_or(0.0),
                p,
                p_tilde: a.p_tilde.unwrap_or(p),
                i0,
                theta,
            };
            containment_bounds(&spec, search, &budgets).config()?
        }
        t => {
            return Err(Failure::Config(anyhow!(
                "unknown topology {t:?} (expected tree, grid, er or custom)"
            )))
        }
    };
    let results = BoundsResults {
        b_upper: report.b_upper,
        b_lower: report.b_lower,
        report,
        er,
        warnings,
    };
    let config = BoundsArgs {
        topology: Some(topology),
        ..a
    };
    finish("bounds", config, results, started, out.as_deref())
}

// ------------------------------------------------------------------ oracle

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long)]
    pub i0: Option<String>,
    /// dp, crusades or rates.
    #[arg(long)]
    pub mode: Option<String>,
    /// Deterministic policy to evaluate (dp) or to drive crusades.
    #[arg(long)]
    pub policy: Option<String>,
    /// Crusade length.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Drops crusade states above this infected cardinality.
    #[arg(long)]
    pub max_cardinality: Option<usize>,
    #[arg(long)]
    pub node_cap: Option<usize>,
    #[arg(long)]
    pub outcome_cap: Option<usize>,
    #[arg(long)]
    pub state_cap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DpResults {
    pub optimal_all: f64,
    pub optimal_first_order: f64,
    pub policy: Option<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrusadeGroup {
    pub count: usize,
    /// Distinct final infected sets.
    pub final_infected: Vec<Vec<NodeId>>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum OracleResults {
    Dp(DpResults),
    Crusades(BTreeMap<usize, CrusadeGroup>),
    Rates(BTreeMap<usize, RateEntry>),
}

fn oracle(a: OracleArgs, started: Instant) -> Result<Value, Failure> {
    let loaded = Loaded::new(&a.graph)?;
    let g = &loaded.graph;
    let p = check_probability(require(a.p, "p")?)?;
    let b = a.b.unwrap_or(1);
    let i0 = loaded.initial(&require(a.i0.clone(), "i0")?, a.seed.unwrap_or(0))?;
    let s0 = setup::initial_state(g, &i0).config()?;
    let defaults = OracleConfig::default();
    let cfg = OracleConfig {
        node_cap: a.node_cap.unwrap_or(defaults.node_cap),
        outcome_cap: a.outcome_cap.unwrap_or(defaults.outcome_cap),
        state_cap: a.state_cap.unwrap_or(defaults.state_cap),
    };
    let policy = a
        .policy
        .as_deref()
        .map(|s| parse_policy(s, Path::new(".")))
        .transpose()
        .config()?;
    let mode = a.mode.clone().unwrap_or_else(|| "dp".into());
    let out = prepare_out(&a.out)?;
    let results = match mode.as_str() {
        "dp" => {
            let all = optimal_loss_dp(g, &s0, p, b, PolicyClass::All, &cfg).runtime()?;
            let first = optimal_loss_dp(g, &s0, p, b, PolicyClass::FirstOrder, &cfg).runtime()?;
            let policy = match &policy {
                Some(pol) => Some((
                    pol.name().to_string(),
                    policy_loss_dp(g, &s0, p, b, pol, &cfg).runtime()?,
                )),
                None => None,
            };
            OracleResults::Dp(DpResults {
                optimal_all: all,
                optimal_first_order: first,
                policy,
            })
        }
        "crusades" | "rates" => {
            let depth = require(a.depth, "depth")?;
            let seed = match &policy {
                Some(pol) if b > 0 => CrusadeSeed::Policy {
                    policy: pol,
                    budget: b,
                },
                _ => CrusadeSeed::Empty,
            };
            if mode == "rates" {
                let rates =
                    exact_rates(g, &s0, seed, depth, p, a.max_cardinality, &cfg).runtime()?;
                OracleResults::Rates(rates.entries)
            } else {
                let crusades = enumerate_crusades(g, &s0, seed, depth, &cfg).runtime()?;
                let mut groups: BTreeMap<usize, CrusadeGroup> = BTreeMap::new();
                for c in &crusades {
                    let fin = c.final_infected();
                    if a.max_cardinality.is_some_and(|m| fin.len() > m) {
                        continue;
                    }
                    let group = groups.entry(fin.len()).or_insert(CrusadeGroup {
                        count: 0,
                        final_infected: Vec::new(),
                    });
                    group.count += 1;
                    group.final_infected.push(fin.as_slice().to_vec());
                }
                for group in groups.values_mut() {
                    group.final_infected.sort();
                    group.final_infected.dedup();
                }
                OracleResults::Crusades(groups)
            }
        }
        m => {
            return Err(Failure::Config(anyhow!(
                "unknown mode {m:?} (expected dp, crusades or rates)"
            )))
        }
    };
    let config = OracleArgs {
        mode: Some(mode),
        b: Some(b),
        ..a
    };
    finish("oracle", config, results, started, out.as_deref())
}

// ------------------------------------------------------------- estimate-gr

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub i0: Option<String>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// mgr, egr or both.
    #[arg(long)]
    pub lb_type: Option<String>,
    /// Minimum samples for a cardinality to enter the fit.
    #[arg(long)]
    pub sample_floor: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatedProfile {
    pub lb_type: LowerBoundKind,
    pub profile: GrowthProfile,
    /// Absent when no sampled state grew past the start.
    pub fit: Option<AffineLB>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResults {
    pub start: usize,
    pub sampled_max_degree: usize,
    pub profiles: Vec<EstimatedProfile>,
}

fn lb_types(s: &str) -> anyhow::Result<Vec<LowerBoundKind>> {
    match s {
        "both" => Ok(vec![LowerBoundKind::Egr, LowerBoundKind::Mgr]),
        other => Ok(vec![other.parse()?]),
    }
}

fn estimate_gr(a: EstimateArgs, started: Instant) -> Result<Value, Failure> {
    let loaded = Loaded::new(&a.graph)?;
    let g = &loaded.graph;
    let p = check_probability(require(a.p, "p")?)?;
    let seed = a.seed.unwrap_or(0);
    let s0 =
        setup::initial_state(g, &loaded.initial(&require(a.i0.clone(), "i0")?, seed)?).config()?;
    let (trajectories, depth, floor) = (
        a.trajectories.unwrap_or(200),
        a.depth.unwrap_or(3),
        a.sample_floor.unwrap_or(5),
    );
    let kinds = lb_types(a.lb_type.as_deref().unwrap_or("both")).config()?;
    let out = prepare_out(&a.out)?;
    let (stats, max_degree) =
        sample_frontier_stats(g, &s0, p, trajectories, depth, seed).config()?;
    let start = s0.infected_count();
    let mut profiles = Vec::new();
    for lb in kinds {
        let profile = stats.profile(lb.profile_kind(), p);
        let fit = match fit_affine_lb(
            &profile.clone().with_floor(floor, start),
            start,
            p,
            max_degree,
        ) {
            Ok(fit) => Some(fit),
            Err(fflab_core::Error::ProfileTooShallow { .. }) => None,
            Err(e) => return Err(Failure::Runtime(e.into())),
        };
        if let Some(dir) = out.as_deref() {
            io::write_profile_csv(
                &profile,
                csv_file(dir, &format!("profile_{}.csv", lb.name()))?,
            )
            .runtime()?;
        }
        profiles.push(EstimatedProfile {
            lb_type: lb,
            profile,
            fit,
        });
    }
    let results = EstimateResults {
        start,
        sampled_max_degree: max_degree,
        profiles,
    };
    let config = EstimateArgs {
        seed: Some(seed),
        trajectories: Some(trajectories),
        depth: Some(depth),
        sample_floor: Some(floor),
        ..a
    };
    finish("estimate-gr", config, results, started, out.as_deref())
}

// ---------------------------------------------------------- budget-compare

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub p: Option<f64>,
    /// A first-order policy: cut, random or noop.
    #[arg(long)]
    pub policy: Option<String>,
    /// mgr, egr or both.
    #[arg(long)]
    pub lb_type: Option<String>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub sample_floor: Option<usize>,
    /// Initial states drawn uniformly at random.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Runs per initial state.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub i0_size: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// bglobal or fig5-egr-mean.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl CompareArgs {
    pub fn resolve(&self) -> Result<CompareConfig, Failure> {
        let policy =
            parse_policy(self.policy.as_deref().unwrap_or("cut"), Path::new(".")).config()?;
        let cfg = CompareConfig {
            p: check_probability(require(self.p, "p")?)?,
            policy,
            lb_types: lb_types(self.lb_type.as_deref().unwrap_or("both")).config()?,
            trajectories: self.trajectories.unwrap_or(200),
            depth: self.depth.unwrap_or(3),
            sample_floor: self.sample_floor.unwrap_or(5),
            samples: self.samples.unwrap_or(1),
            runs: self.runs.unwrap_or(1),
            seed: self.seed.unwrap_or(0),
            i0_size: require(self.i0_size, "i0-size")?,
            max_steps: self.max_steps,
            baseline: self
                .baseline
                .as_deref()
                .unwrap_or("bglobal")
                .parse()
                .config()?,
        };
        cfg.validate().config()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TestRow {
    pub sample: usize,
    pub run: usize,
    pub final_infected: BTreeMap<String, usize>,
    pub total_budget: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareResults {
    pub summary: CompareSummary,
    pub tests: Vec<TestRow>,
}

#[derive(Debug, Clone, Serialize)]
struct CompareEcho {
    #[serde(flatten)]
    args: CompareArgs,
    resolved: CompareConfig,
}

fn compare(a: CompareArgs, started: Instant) -> Result<Value, Failure> {
    let cfg = a.resolve()?;
    let loaded = Loaded::new(&a.graph)?;
    if cfg.i0_size > loaded.graph.node_count() {
        return Err(Failure::Config(anyhow!("--i0-size exceeds the node count")));
    }
    let out = prepare_out(&a.out)?;
    let cmp = budget_compare(&loaded.graph, &cfg).runtime()?;
    if let Some(dir) = out.as_deref() {
        write_series_csv(&cmp, csv_file(dir, "series.csv")?).runtime()?;
    }
    let tests = cmp
        .tests
        .iter()
        .map(|t| {
            let runs = t
                .adaptive
                .iter()
                .map(|(lb, r)| (lb.name().to_string(), r))
                .chain(std::iter::once(("constant".to_string(), &t.constant)));
            let (mut fin, mut tot) = (BTreeMap::new(), BTreeMap::new());
            for (name, r) in runs {
                fin.insert(name.clone(), r.final_infected());
                tot.insert(name, r.total_budget);
            }
            TestRow {
                sample: t.sample,
                run: t.run,
                final_infected: fin,
                total_budget: tot,
            }
        })
        .collect();
    let results = CompareResults {
        summary: cmp.summary,
        tests,
    };
    finish(
        "budget-compare",
        CompareEcho {
            args: a,
            resolved: cfg,
        },
        results,
        started,
        out.as_deref(),
    )
}

// --------------------------------------------------------------- gen-graph

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenGraphArgs {
    /// grid:DIM:SIDE, tree:CHILDREN:DEPTH, er:N:S:SEED, ba:N:M:SEED or gap:K.
    #[arg(long)]
    pub generator: Option<String>,
    /// Edge-list file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub max_degree: usize,
}

fn gen_graph(a: GenGraphArgs, started: Instant) -> Result<Value, Failure> {
    let spec = require(a.generator.clone(), "generator")?;
    let g = GraphSource::Generator(spec).load().config()?;
    let path = require(a.out.clone(), "out")?;
    let file = File::create(&path)
        .with_context(|| format!("cannot create {}", path.display()))
        .runtime()?;
    io::write_edge_list(&g, BufWriter::new(file)).runtime()?;
    let results = GraphSummary {
        nodes: g.node_count(),
        edges: g.edge_count(),
        max_degree: g.max_degree(),
    };
    finish("gen-graph", a, results, started, None)
}

/// Parses a full command line into a subcommand (for tests and embedding).
pub fn parse(args: &[&str]) -> anyhow::Result<Command> {
    let argv = std::iter::once("fflab").chain(args.iter().copied());
    match Cli::try_parse_from(argv) {
        Ok(cli) => Ok(cli.command),
        Err(e) => bail!("{e}"),
    }
}
