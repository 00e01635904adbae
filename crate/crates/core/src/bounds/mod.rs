//! Closed-form containment bounds.
//!
//! With an affine growth envelope `αz + β` and a budget of `b` per step the
//! growth recursion `X(k+1) = X(k) + αX(k) + β − pb(k+1)` has the closed
//! form [`l_value`]. Growth stops at [`k_threshold`]; the value there is the
//! loss bound, and the smallest budget keeping it within `θ` is the
//! containment budget.

mod recursion;
mod topology;

pub use recursion::{
    recursion_bound, Envelope, Phi, RecursionOutput, RecursionSpec, Shape, StopReason,
};
pub use topology::{
    ball_cardinality, er_report, g_n, grid_mgr_lb, grid_spec, nu, theta_max, tree_spec, ErReport,
    GridLine,
};

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `l_{α,β}(p, b, k)` with `X(0) = i0`.
pub fn l_value(alpha: f64, beta: f64, p: f64, b: f64, k: usize, i0: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "l needs a positive finite slope, got {alpha}"
        )));
    }
    let pb = p * b;
    let fixed = (pb - beta) / alpha + pb / (alpha * alpha);
    let k1 = (k + 1) as f64;
    Ok((pb * k1 - beta) / alpha
        + pb / (alpha * alpha)
        + (i0 - fixed) * libm::pow(1.0 + alpha, k as f64))
}

/// First step at which the budget overtakes the affine growth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum KThreshold {
    At(usize),
    Never,
}

impl KThreshold {
    pub fn step(self) -> Option<usize> {
        match self {
            Self::At(k) => Some(k),
            Self::Never => None,
        }
    }
}

/// `(α/p)(α i0 + β)(1+α)^k / ((1+α)^{k+1} − 1)`, the budget needed for the
/// growth to stop by step `k`.
pub fn threshold_expression(alpha: f64, beta: f64, p: f64, k: usize, i0: f64) -> f64 {
    let a1 = 1.0 + alpha;
    (alpha / p) * (alpha * i0 + beta) / (a1 - libm::pow(a1, -(k as f64)))
}

/// `inf_k` of [`threshold_expression`]: `(α/p)(α i0 + β)/(1 + α)`.
pub fn threshold_infimum(alpha: f64, beta: f64, p: f64, i0: f64) -> f64 {
    (alpha / p) * (alpha * i0 + beta) / (1.0 + alpha)
}

/// `k_{b,p}`: the smallest `k ≥ 0` with `threshold_expression(k) ≤ b`.
pub fn k_threshold(alpha: f64, beta: f64, p: f64, b: f64, i0: f64) -> Result<KThreshold> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "k threshold needs a positive finite slope, got {alpha}"
        )));
    }
    if b.is_nan() || b < 0.0 {
        return Err(Error::InvalidParameter(format!("budget {b} is negative")));
    }
    if b <= threshold_infimum(alpha, beta, p, i0) {
        return Ok(KThreshold::Never);
    }
    // (1+α)^{-k} ≤ (1+α) − C/b, solved for k and then fixed up against the
    // direct comparison.
    let a1 = 1.0 + alpha;
    let c = (alpha / p) * (alpha * i0 + beta);
    let room = a1 - c / b;
    let guess = if room >= 1.0 {
        0.0
    } else {
        libm::ceil(-libm::log(room) / libm::log1p(alpha))
    };
    let mut k = if guess.is_finite() && guess > 0.0 {
        guess as usize
    } else {
        0
    };
    while k > 0 && threshold_expression(alpha, beta, p, k - 1, i0) <= b {
        k -= 1;
    }
    while threshold_expression(alpha, beta, p, k, i0) > b {
        k += 1;
    }
    Ok(KThreshold::At(k))
}

/// Runs `X(k+1) = X(k) + [αX(k) + β − pb(k+1)]⁺` until the increment
/// vanishes and returns `(k, X(k))` at that step. Unlike [`l_value`] this
/// accepts `α = 0`. `None` when growth has not stopped after `max_steps`.
pub fn affine_stop_value(
    alpha: f64,
    beta: f64,
    p: f64,
    b: f64,
    i0: f64,
    max_steps: usize,
) -> Option<(usize, f64)> {
    let mut x = i0;
    for k in 0..=max_steps {
        let inc = alpha * x + beta - p * b * (k + 1) as f64;
        if inc <= 0.0 {
            return Some((k, x));
        }
        x += inc;
    }
    None
}

/// How finite-`θ` budgets are searched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BudgetSearch {
    /// Smallest integer budget.
    #[default]
    Integer,
    /// Real-valued budget by bisection.
    Bisection,
}

/// Affine growth envelopes: `MGR ≤ αz + β` and `mgr ≥ γz + δ` on
/// `[i0, θ]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub p: f64,
    /// Stop-rate cap per vaccinated node used by the lower bound.
    pub p_tilde: f64,
    pub i0: usize,
    /// `None` is `θ = ∞`.
    pub theta: Option<usize>,
}

impl BoundSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        let coeffs = [self.alpha, self.beta, self.gamma, self.delta];
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return bad("envelope coefficients must be finite and nonnegative");
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p must lie in (0, 1]");
        }
        if !(self.p_tilde >= self.p && self.p_tilde <= 1.0) {
            return bad("p_tilde must lie in [p, 1]");
        }
        if self.i0 < 1 {
            return bad("i0 must be at least 1");
        }
        if self.theta.is_some_and(|t| t < self.i0) {
            return bad("theta must be at least i0");
        }
        if self.alpha == 0.0 {
            return bad("the upper envelope needs a positive slope");
        }
        Ok(())
    }

    pub fn with_theta(mut self, theta: Option<usize>) -> Self {
        self.theta = theta;
        self
    }
}

/// Loss bounds at one budget. Absent where the budget does not contain the
/// corresponding envelope.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossRow {
    pub budget: f64,
    pub k_upper: Option<usize>,
    pub loss_upper: Option<f64>,
    pub k_lower: Option<usize>,
    pub loss_lower: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContainmentReport {
    pub spec: BoundSpec,
    pub search: BudgetSearch,
    /// Weak upper bound on the containment budget.
    pub b_upper: f64,
    /// Weak lower bound on the containment budget.
    pub b_lower: f64,
    pub rows: Vec<LossRow>,
}

impl ContainmentReport {
    pub fn loss_upper_at(&self, b: f64) -> Option<f64> {
        upper_side(&self.spec).loss_at(b).map(|(_, l)| l)
    }

    pub fn loss_lower_at(&self, b: f64) -> Option<f64> {
        lower_side(&self.spec).loss_at(b).map(|(_, l)| l)
    }
}

/// One envelope and the infection probability it runs with.
#[derive(Clone, Copy)]
struct Side {
    slope: f64,
    intercept: f64,
    p: f64,
    i0: f64,
}

const STOP_SCAN: usize = 1 << 20;

fn upper_side(spec: &BoundSpec) -> Side {
    Side {
        slope: spec.alpha,
        intercept: spec.beta,
        p: spec.p,
        i0: spec.i0 as f64,
    }
}

fn lower_side(spec: &BoundSpec) -> Side {
    Side {
        slope: spec.gamma,
        intercept: spec.delta,
        p: spec.p_tilde,
        i0: spec.i0 as f64,
    }
}

impl Side {
    /// `(k_{b,p}, l(p, b, k_{b,p}))`, or `None` when `b` never stops growth.
    fn loss_at(&self, b: f64) -> Option<(usize, f64)> {
        if self.slope > 0.0 {
            let k = k_threshold(self.slope, self.intercept, self.p, b, self.i0)
                .ok()?
                .step()?;
            Some((
                k,
                l_value(self.slope, self.intercept, self.p, b, k, self.i0).ok()?,
            ))
        } else {
            affine_stop_value(0.0, self.intercept, self.p, b, self.i0, STOP_SCAN)
        }
    }

    fn infimum(&self) -> f64 {
        threshold_infimum(self.slope, self.intercept, self.p, self.i0)
    }

    /// Budget that stops growth at step 0.
    fn immediate(&self) -> f64 {
        (self.slope * self.i0 + self.intercept) / self.p
    }

    fn contains(&self, b: f64, theta: f64) -> bool {
        self.loss_at(b).is_some_and(|(_, l)| l <= theta)
    }

    fn budget(&self, theta: Option<usize>, search: BudgetSearch) -> f64 {
        let Some(theta) = theta else {
            return self.infimum();
        };
        let theta = theta as f64;
        match search {
            BudgetSearch::Integer => {
                let top = libm::ceil(self.immediate()) as u64;
                (0..=top)
                    .find(|&b| self.contains(b as f64, theta))
                    .unwrap_or(top) as f64
            }
            BudgetSearch::Bisection => {
                let (mut lo, mut hi) = (self.infimum(), self.immediate().max(self.infimum()));
                if self.contains(lo, theta) {
                    return lo;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.contains(mid, theta) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    }
}

/// Weak upper and lower containment budgets for `spec`, with loss bounds
/// tabulated at `budgets`.
pub fn containment_bounds(
    spec: &BoundSpec,
    search: BudgetSearch,
    budgets: &[f64],
) -> Result<ContainmentReport> {
    spec.validate()?;
    let (upper, lower) = (upper_side(spec), lower_side(spec));
    let b_upper = upper.budget(spec.theta, search);
    let b_lower = if spec.gamma == 0.0 && spec.delta == 0.0 {
        0.0
    } else {
        lower.budget(spec.theta, search)
    };
    let rows = budgets
        .iter()
        .map(|&b| {
            let up = upper.loss_at(b);
            let low = lower.loss_at(b);
            LossRow {
                budget: b,
                k_upper: up.map(|x| x.0),
                loss_upper: up.map(|x| x.1),
                k_lower: low.map(|x| x.0),
                loss_lower: low.map(|x| x.1),
            }
        })
        .collect();
    Ok(ContainmentReport {
        spec: *spec,
        search,
        b_upper,
        b_lower,
        rows,
    })
}
