//! Exact expected loss by memoized recursion over `(I, B)` bitmasks.

use alloc::format;
use alloc::vec::Vec;

use hashbrown::HashMap;

use super::{for_each_combination, OracleConfig};
use crate::dynamics::{check_probability, infection_probability, InfectionState};
use crate::graph::{Graph, NodeId, NodeSet};
use crate::policies::PolicyKind;
use crate::rng::stream;
use crate::{Error, Result};

/// Which vaccination sets the optimum ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PolicyClass {
    /// Any healthy nodes.
    All,
    /// Frontier nodes only.
    FirstOrder,
}

type Mask = u64;

fn bits(mask: Mask) -> impl Iterator<Item = usize> {
    let mut m = mask;
    core::iter::from_fn(move || {
        (m != 0).then(|| {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            i
        })
    })
}

fn to_mask(set: &NodeSet) -> Mask {
    set.iter().fold(0, |m, v| m | 1 << v)
}

fn to_set(mask: Mask) -> NodeSet {
    bits(mask).map(|i| i as NodeId).collect()
}

struct Model {
    nbr: Vec<Mask>,
    all: Mask,
    p: f64,
    outcome_cap: usize,
}

impl Model {
    fn new(g: &Graph, p: f64, cfg: &OracleConfig) -> Result<Self> {
        check_probability(p)?;
        let n = g.node_count();
        let cap = cfg.node_cap.min(Mask::BITS as usize);
        if n > cap {
            return Err(Error::CapExceeded {
                what: "nodes",
                actual: n,
                cap,
            });
        }
        let nbr = (0..n as NodeId)
            .map(|v| g.neighbors(v).iter().fold(0, |m, &u| m | 1 << u))
            .collect();
        let all = if n == 64 { Mask::MAX } else { (1 << n) - 1 };
        Ok(Self {
            nbr,
            all,
            p,
            outcome_cap: cfg.outcome_cap,
        })
    }

    fn frontier(&self, infected: Mask, vaccinated: Mask) -> Mask {
        bits(infected).fold(0, |m, v| m | self.nbr[v]) & !infected & !vaccinated
    }

    /// Healthy nodes connected to the infection through healthy nodes.
    fn reachable(&self, infected: Mask, vaccinated: Mask) -> Mask {
        let healthy = self.all & !infected & !vaccinated;
        let mut seen = self.frontier(infected, vaccinated);
        let mut todo = seen;
        while todo != 0 {
            let v = todo.trailing_zeros() as usize;
            todo &= todo - 1;
            let fresh = self.nbr[v] & healthy & !seen;
            seen |= fresh;
            todo |= fresh;
        }
        seen
    }

    /// Infection outcomes of the exposed nodes as `(probability, newly
    /// infected)` pairs with nonzero probability.
    fn outcomes(&self, infected: Mask, exposed: Mask) -> Result<Vec<(f64, Mask)>> {
        let exposed: Vec<(usize, f64)> = bits(exposed)
            .map(|v| {
                (
                    v,
                    infection_probability(self.p, (self.nbr[v] & infected).count_ones() as usize),
                )
            })
            .collect();
        let certain: Mask = exposed
            .iter()
            .filter(|e| e.1 >= 1.0)
            .fold(0, |m, e| m | 1 << e.0);
        let random: Vec<(usize, f64)> = exposed.into_iter().filter(|e| e.1 < 1.0).collect();
        if random.len() >= usize::BITS as usize || 1usize << random.len() > self.outcome_cap {
            return Err(Error::CapExceeded {
                what: "infection outcomes",
                actual: random.len(),
                cap: self.outcome_cap,
            });
        }
        let mut out = Vec::with_capacity(1 << random.len());
        for pattern in 0u64..1 << random.len() {
            let mut prob = 1.0;
            let mut newly = certain;
            for (j, &(v, q)) in random.iter().enumerate() {
                if pattern >> j & 1 == 1 {
                    prob *= q;
                    newly |= 1 << v;
                } else {
                    prob *= 1.0 - q;
                }
            }
            if prob != 0.0 {
                out.push((prob, newly));
            }
        }
        Ok(out)
    }
}

/// Expected next-state value. Without a vaccination the empty outcome maps
/// back to the current state, so its mass is solved for rather than
/// recursed into.
fn expectation(
    outcomes: &[(f64, Mask)],
    infected: Mask,
    self_loop: bool,
    mut value: impl FnMut(Mask) -> Result<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut stay = 0.0;
    for &(prob, newly) in outcomes {
        if newly == 0 && self_loop {
            stay += prob;
        } else {
            total += prob * value(infected | newly)?;
        }
    }
    Ok(if self_loop {
        total / (1.0 - stay)
    } else {
        total
    })
}

struct Optimal {
    model: Model,
    budget: usize,
    class: PolicyClass,
    memo: HashMap<(Mask, Mask), f64>,
}

impl Optimal {
    fn value(&mut self, infected: Mask, vaccinated: Mask) -> Result<f64> {
        let frontier = self.model.frontier(infected, vaccinated);
        if frontier == 0 {
            return Ok(infected.count_ones() as f64);
        }
        // Healthy nodes the infection can never reach behave as vaccinated.
        let reachable = self.model.reachable(infected, vaccinated);
        let sealed = self.model.all & !infected & !reachable;
        if let Some(&v) = self.memo.get(&(infected, sealed)) {
            return Ok(v);
        }
        let pool: Vec<usize> = match self.class {
            PolicyClass::All => bits(reachable).collect(),
            PolicyClass::FirstOrder => bits(frontier).collect(),
        };
        let k = self.budget.min(pool.len());
        let mut actions = Vec::new();
        for_each_combination(&pool, k, |c| {
            actions.push(c.iter().fold(0 as Mask, |m, &v| m | 1 << v))
        });
        let mut best = f64::INFINITY;
        for action in actions {
            let next_vacc = sealed | action;
            let exposed = frontier & !action;
            let outcomes = self.model.outcomes(infected, exposed)?;
            let v = expectation(&outcomes, infected, action == 0, |i| {
                self.value(i, next_vacc)
            })?;
            best = best.min(v);
        }
        self.memo.insert((infected, sealed), best);
        Ok(best)
    }
}

/// `inf_π L(π, s0)` over policies in `class` vaccinating `min(b, candidates)`
/// nodes per step.
pub fn optimal_loss_dp(
    g: &Graph,
    s0: &InfectionState,
    p: f64,
    budget: usize,
    class: PolicyClass,
    cfg: &OracleConfig,
) -> Result<f64> {
    let model = Model::new(g, p, cfg)?;
    let mut dp = Optimal {
        model,
        budget,
        class,
        memo: HashMap::new(),
    };
    dp.value(to_mask(&s0.infected()), to_mask(&s0.vaccinated()))
}

struct Evaluation<'a> {
    model: Model,
    g: &'a Graph,
    policy: &'a PolicyKind,
    budget: usize,
    memo: HashMap<(Mask, Mask), f64>,
}

impl Evaluation<'_> {
    fn value(&mut self, infected: Mask, vaccinated: Mask) -> Result<f64> {
        let frontier = self.model.frontier(infected, vaccinated);
        if frontier == 0 {
            return Ok(infected.count_ones() as f64);
        }
        if let Some(&v) = self.memo.get(&(infected, vaccinated)) {
            return Ok(v);
        }
        let state = InfectionState::new(self.g, &to_set(infected), &to_set(vaccinated))?;
        let chosen = self
            .policy
            .select(self.g, &state, self.budget, 0, &mut stream(0, 0))?;
        if chosen.len() > self.budget {
            return Err(Error::ContractViolation(format!(
                "policy chose {} nodes with budget {}",
                chosen.len(),
                self.budget
            )));
        }
        let action = to_mask(&chosen);
        let next_vacc = vaccinated | action;
        let outcomes = self.model.outcomes(infected, frontier & !action)?;
        let v = expectation(&outcomes, infected, action == 0, |i| {
            self.value(i, next_vacc)
        })?;
        self.memo.insert((infected, vaccinated), v);
        Ok(v)
    }
}

/// Exact `L(π, s0)` for a stationary deterministic policy.
pub fn policy_loss_dp(
    g: &Graph,
    s0: &InfectionState,
    p: f64,
    budget: usize,
    policy: &PolicyKind,
    cfg: &OracleConfig,
) -> Result<f64> {
    if !policy.is_deterministic() || matches!(policy, PolicyKind::Scripted(_)) {
        return Err(Error::InvalidParameter(format!(
            "policy evaluation needs a stationary deterministic policy, got {}",
            policy.name()
        )));
    }
    policy.validate(g)?;
    let model = Model::new(g, p, cfg)?;
    let mut eval = Evaluation {
        model,
        g,
        policy,
        budget,
        memo: HashMap::new(),
    };
    eval.value(to_mask(&s0.infected()), to_mask(&s0.vaccinated()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{estimate_loss, SimulationParams};
    use crate::graph::{first_order_gap_instance, generate, TopologySpec};
    use proptest::prelude::*;

    fn source(g: &Graph, v: NodeId) -> InfectionState {
        InfectionState::from_infected(g, &NodeSet::singleton(v)).unwrap()
    }

    #[test]
    fn path_of_three() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let cfg = OracleConfig::default();
        for class in [PolicyClass::All, PolicyClass::FirstOrder] {
            assert_eq!(
                optimal_loss_dp(&g, &source(&g, 1), 1.0, 1, class, &cfg).unwrap(),
                2.0
            );
        }
        assert_eq!(
            policy_loss_dp(&g, &source(&g, 1), 1.0, 1, &PolicyKind::Cut, &cfg).unwrap(),
            2.0
        );
    }

    #[test]
    fn gap_instance_at_p_one() {
        let g = first_order_gap_instance(2).unwrap();
        let s0 = source(&g, 0);
        let cfg = OracleConfig::default();
        assert_eq!(
            optimal_loss_dp(&g, &s0, 1.0, 1, PolicyClass::All, &cfg).unwrap(),
            4.0
        );
        assert_eq!(
            optimal_loss_dp(&g, &s0, 1.0, 1, PolicyClass::FirstOrder, &cfg).unwrap(),
            5.0
        );
    }

    #[test]
    fn zero_budget_self_loops_resolve() {
        // Two nodes: the healthy one is eventually infected.
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let v = optimal_loss_dp(
            &g,
            &source(&g, 0),
            0.2,
            0,
            PolicyClass::All,
            &OracleConfig::default(),
        )
        .unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let noop = policy_loss_dp(
            &g,
            &source(&g, 0),
            0.2,
            0,
            &PolicyKind::NoOp,
            &OracleConfig::default(),
        )
        .unwrap();
        assert!((noop - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_star() {
        // Star centered at 0 seeded at leaf 1, b = 1: vaccinating the center
        // contains at once.
        let g = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        let v = optimal_loss_dp(
            &g,
            &source(&g, 1),
            0.5,
            1,
            PolicyClass::All,
            &OracleConfig::default(),
        )
        .unwrap();
        assert_eq!(v, 1.0);
        // Seeded at the center, one leaf is vaccinated per step: the first
        // step saves one leaf, the remaining two race.
        let v = optimal_loss_dp(
            &g,
            &source(&g, 0),
            0.5,
            1,
            PolicyClass::All,
            &OracleConfig::default(),
        )
        .unwrap();
        // After step 0 two leaves are exposed; each is infected w.p. 1/2.
        // If neither is, one is vaccinated next and the other faces 1/2 again.
        let expected = 1.0 + (0.5 + 0.5) + 0.25 * 0.5;
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn caps_and_parameters() {
        let g = generate(&TopologySpec::Grid { dim: 2, side: 4 }).unwrap();
        let s0 = source(&g, 5);
        let err = optimal_loss_dp(&g, &s0, 0.5, 1, PolicyClass::All, &OracleConfig::default())
            .unwrap_err();
        assert!(matches!(
            err,
            Error::CapExceeded {
                what: "nodes",
                actual: 16,
                cap: 14
            }
        ));
        let small = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert!(optimal_loss_dp(
            &small,
            &source(&small, 0),
            0.0,
            1,
            PolicyClass::All,
            &OracleConfig::default()
        )
        .is_err());
        assert!(optimal_loss_dp(
            &small,
            &source(&small, 0),
            1.5,
            1,
            PolicyClass::All,
            &OracleConfig::default()
        )
        .is_err());
        assert!(policy_loss_dp(
            &small,
            &source(&small, 0),
            0.5,
            1,
            &PolicyKind::Random,
            &OracleConfig::default()
        )
        .is_err());
    }

    #[test]
    fn policy_evaluation_matches_monte_carlo() {
        let g = generate(&TopologySpec::ErdosRenyi {
            n: 9,
            s: 0.4,
            seed: 3,
        })
        .unwrap();
        let s0 = source(&g, 0);
        let exact =
            policy_loss_dp(&g, &s0, 0.4, 1, &PolicyKind::Cut, &OracleConfig::default()).unwrap();
        let est = estimate_loss(
            &g,
            &s0,
            &PolicyKind::Cut,
            &SimulationParams::new(0.4, 1, 8),
            20_000,
            9,
        )
        .unwrap();
        assert!(
            (est.mean - exact).abs() <= 4.0 * est.std_error,
            "{} vs {exact}",
            est.mean
        );
    }

    #[test]
    fn tree_policy_is_optimal_on_small_binary_tree() {
        let g = generate(&TopologySpec::RegularTree {
            children: 2,
            depth: 4,
        })
        .unwrap();
        let cfg = OracleConfig::default().with_node_cap(15);
        let s0 = source(&g, 0);
        let opt = optimal_loss_dp(&g, &s0, 0.3, 1, PolicyClass::All, &cfg).unwrap();
        let tree = policy_loss_dp(&g, &s0, 0.3, 1, &PolicyKind::Tree, &cfg).unwrap();
        assert!((opt - tree).abs() < 1e-9);
    }

    fn tiny() -> impl Strategy<Value = (Graph, NodeId, f64, usize)> {
        (
            3usize..8,
            0.2f64..0.7,
            any::<u64>(),
            0.05f64..=1.0,
            1usize..3,
        )
            .prop_map(|(n, s, seed, p, b)| {
                let g = generate(&TopologySpec::ErdosRenyi { n, s, seed }).unwrap();
                (g, (seed % n as u64) as NodeId, p, b)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn class_ordering((g, v, p, b) in tiny()) {
            let s0 = source(&g, v);
            let cfg = OracleConfig::default();
            let all = optimal_loss_dp(&g, &s0, p, b, PolicyClass::All, &cfg).unwrap();
            let first = optimal_loss_dp(&g, &s0, p, b, PolicyClass::FirstOrder, &cfg).unwrap();
            let cut = policy_loss_dp(&g, &s0, p, b, &PolicyKind::Cut, &cfg).unwrap();
            prop_assert!(all <= first + 1e-9);
            prop_assert!(first <= cut + 1e-9);
            prop_assert!(all >= 1.0 - 1e-12);
        }
    }
}
