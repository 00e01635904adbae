//! Exhaustive ground truth for tiny instances.
//!
//! Everything here is exponential in the instance size and guarded by
//! [`OracleConfig`] caps.

mod crusade;
mod dp;

pub use crusade::{
    empty_stop_rates, enumerate_crusades, exact_rates, pooled_neighbor_profile, reachable_states,
    Crusade, CrusadeSeed, ExactRates, PooledEntry, RateEntry, StopRateRange, WeightedState,
};
pub use dp::{optimal_loss_dp, policy_loss_dp, PolicyClass};

/// Size guards for the exhaustive routines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleConfig {
    /// Largest graph the loss DPs accept (at most 64).
    pub node_cap: usize,
    /// Largest number of infection outcomes enumerated from one state.
    pub outcome_cap: usize,
    /// Largest number of crusades or distinct states kept per depth.
    pub state_cap: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            node_cap: 14,
            outcome_cap: 1 << 20,
            state_cap: 1 << 21,
        }
    }
}

impl OracleConfig {
    pub fn with_node_cap(mut self, node_cap: usize) -> Self {
        self.node_cap = node_cap;
        self
    }
}

/// Calls `f` with every `k`-subset of `items` in lexicographic order.
pub(crate) fn for_each_combination<T: Copy>(items: &[T], k: usize, mut f: impl FnMut(&[T])) {
    let n = items.len();
    if k > n {
        return;
    }
    let mut idx: alloc::vec::Vec<usize> = (0..k).collect();
    let mut buf: alloc::vec::Vec<T> = idx.iter().map(|&i| items[i]).collect();
    loop {
        f(&buf);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
        for j in pos..k {
            buf[j] = items[idx[j]];
        }
    }
}

/// `Σ_{j ≤ k} C(n, j)`, saturating.
pub(crate) fn subsets_up_to(n: usize, k: usize) -> usize {
    let mut total = 0usize;
    let mut c = 1usize;
    for j in 0..=k.min(n) {
        total = total.saturating_add(c);
        c = c.saturating_mul(n - j) / (j + 1);
    }
    total
}
