//! Envelopes and containment budgets for regular trees, lattices and
//! sparse Erdős–Rényi graphs.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use super::{containment_bounds, BoundSpec, BudgetSearch, ContainmentReport};
use crate::{Error, Result};

/// Regular tree with `d` children per node, infection seeded at the root:
/// every connected infected set `A` has `|A|(d−1)+1` healthy neighbors each
/// cut once, so both envelopes are `p((d−1)z + 1)`.
///
/// The lower side keeps `p̃ = p`: vaccinated frontier nodes each have one
/// infected neighbor.
pub fn tree_spec(d: usize, p: f64, i0: usize, theta: Option<usize>) -> BoundSpec {
    let a = p * (d as f64 - 1.0);
    BoundSpec {
        alpha: a,
        beta: p,
        gamma: a,
        delta: p,
        p,
        p_tilde: p,
        i0,
        theta,
    }
}

/// `ν_d(r)`: healthy neighbors of the L1 ball holding `C_{d,r}` nodes.
/// `ν_d(0) = 0` so that `C_{d,1} = 1`.
pub fn nu(d: usize, r: usize) -> u64 {
    assert!(d >= 2, "lattice dimension must be at least 2");
    let mut row: Vec<u64> = (0..=r as u64).map(|i| 4 * i).collect();
    for _ in 3..=d {
        let mut next = vec![0u64; r + 1];
        let mut prefix = 0u64;
        for i in 1..=r {
            prefix = prefix.saturating_add(row[i - 1]);
            next[i] = row[i].saturating_add(2u64.saturating_mul(1u64.saturating_add(prefix)));
        }
        row = next;
    }
    row[r]
}

/// `C_{d,r} = 1 + Σ_{i<r} ν_d(i)`.
pub fn ball_cardinality(d: usize, r: usize) -> u64 {
    assert!(r >= 1, "ball radius index starts at 1");
    (0..r).fold(1u64, |acc, i| acc.saturating_add(nu(d, i)))
}

/// `r_z`: the smallest `r ≥ 1` with `z ≤ C_{d,r}`.
fn ball_index(d: usize, z: u64) -> usize {
    let mut r = 1;
    while ball_cardinality(d, r) < z {
        r += 1;
    }
    r
}

/// Affine lower envelope `c ↦ p(m(c − a) + offset)` of the minimal growth
/// rate on the `d`-lattice over `[a, θ]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridLine {
    pub slope: f64,
    pub offset: f64,
    pub anchor: usize,
}

impl GridLine {
    pub fn eval(&self, c: f64, p: f64) -> f64 {
        p * (self.slope * (c - self.anchor as f64) + self.offset)
    }

    /// `(γ, δ)` of the same line in `γc + δ` form.
    pub fn affine(&self, p: f64) -> (f64, f64) {
        (
            p * self.slope,
            p * (self.offset - self.slope * self.anchor as f64),
        )
    }
}

/// Chord of the ball-perimeter staircase between `a` and `θ`:
/// `m = (ν(r_θ) − ν(r_a)) / Σ_{i=r_a−1}^{r_θ−1} ν(i)`, with slope 0 when
/// both ends fall in the same shell.
pub fn grid_mgr_lb(d: usize, a: usize, theta: usize) -> Result<GridLine> {
    if d < 2 || a < 1 || a >= theta {
        return Err(Error::InvalidParameter(format!(
            "grid envelope needs d >= 2 and 1 <= a < theta, got d={d} a={a} theta={theta}"
        )));
    }
    let (ra, rt) = (ball_index(d, a as u64), ball_index(d, theta as u64));
    let offset = nu(d, ra) as f64;
    let denom: u64 = (ra - 1..rt).map(|i| nu(d, i)).sum();
    let slope = if ra == rt || denom == 0 {
        0.0
    } else {
        (nu(d, rt) - nu(d, ra)) as f64 / denom as f64
    };
    Ok(GridLine {
        slope,
        offset,
        anchor: a,
    })
}

/// `d`-lattice with a connected initial infection.
///
/// The upper envelope uses the largest possible cut `2(d−1)z + 2`. The
/// lower envelope is [`grid_mgr_lb`] anchored at `i0`; with `θ = ∞` the
/// chord flattens to slope 0 and the lower budget to 0. Negative
/// intercepts are raised to 0, which keeps the envelope below the rate.
pub fn grid_spec(d: usize, p: f64, i0: usize, theta: Option<usize>) -> Result<BoundSpec> {
    let (gamma, delta) = match theta {
        Some(t) if t > i0 => grid_mgr_lb(d, i0, t)?.affine(p),
        _ => (0.0, p * nu(d, ball_index(d, i0 as u64)) as f64),
    };
    Ok(BoundSpec {
        alpha: 2.0 * p * (d as f64 - 1.0),
        beta: 2.0 * p,
        gamma,
        delta: delta.max(0.0),
        p,
        p_tilde: (2.0 * d as f64 * p).min(1.0),
        i0,
        theta,
    })
}

/// `g_n(z) = (n − z)(1 − (1 − c/n)^z)`: expected neighborhood size of a
/// `z`-set in `G(n, c/n)`.
pub fn g_n(n: usize, c: f64, z: usize) -> f64 {
    (n as f64 - z as f64) * (1.0 - libm::pow(1.0 - c / n as f64, z as f64))
}

/// `argmax_{1 ≤ z ≤ n} g_n(z)`, smallest on ties.
pub fn theta_max(n: usize, c: f64) -> usize {
    let mut best = (1, g_n(n, c, 1));
    for z in 2..=n {
        let v = g_n(n, c, z);
        if v > best.1 {
            best = (z, v);
        }
    }
    best.0
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErReport {
    pub n: usize,
    pub c: f64,
    pub theta_max: usize,
    pub g_max: f64,
    pub report: ContainmentReport,
    pub warnings: Vec<String>,
}

/// Sparse `G(n, c/n)`: `EGR ≤ cpz` above and the chord
/// `(g_n(θ_max)/θ_max)·pz` below on `[1, θ_max]`. The lower side uses
/// `p_tilde`, which defaults to 1 since the maximum degree is not part of
/// the model's parameters.
pub fn er_report(
    n: usize,
    c: f64,
    p: f64,
    i0: usize,
    theta: Option<usize>,
    p_tilde: Option<f64>,
    budgets: &[f64],
) -> Result<ErReport> {
    if n < 2 || !(c > 1.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sparse regime needs n >= 2 and c > 1, got n={n} c={c}"
        )));
    }
    let tm = theta_max(n, c);
    let g_max = g_n(n, c, tm);
    let spec = BoundSpec {
        alpha: c * p,
        beta: 0.0,
        gamma: g_max / tm as f64 * p,
        delta: 0.0,
        p,
        p_tilde: p_tilde.unwrap_or(1.0),
        i0,
        theta,
    };
    let report = containment_bounds(&spec, BudgetSearch::Integer, budgets)?;
    let mut warnings = Vec::new();
    if theta.is_none_or(|t| t > tm) {
        warnings.push(format!("lower envelope holds only up to theta_max = {tm}"));
    }
    Ok(ErReport {
        n,
        c,
        theta_max: tm,
        g_max,
        report,
        warnings,
    })
}
