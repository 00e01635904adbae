//! Numerical solution of the growth recursion
//! `X(k+1) = X(k) + φ(X(k), k)`, `X(0) = i0`, with
//! `φ(z, k) = [f(z) − p·b·(k+1)]⁺` for a growth envelope `f`.
//!
//! Whether the sequence bounds `E|I_k|` depends on the shape of `φ` over the
//! visited range: a concave nondecreasing envelope of the maximal growth
//! rate gives an upper bound, a convex nondecreasing envelope of the minimal
//! rate a lower bound, and an expected-rate envelope either one.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Growth envelope `f(z)`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phi {
    Affine {
        alpha: f64,
        beta: f64,
    },
    /// `(cardinality, value)` points, strictly increasing in cardinality,
    /// linearly interpolated and held flat outside the table.
    Tabulated(Vec<(f64, f64)>),
}

impl Phi {
    fn eval(&self, z: f64) -> f64 {
        match self {
            Self::Affine { alpha, beta } => alpha * z + beta,
            Self::Tabulated(pts) => {
                let (first, last) = (pts[0], pts[pts.len() - 1]);
                if z <= first.0 {
                    return first.1;
                }
                if z >= last.0 {
                    return last.1;
                }
                let j = pts.partition_point(|&(x, _)| x <= z);
                let ((x0, y0), (x1, y1)) = (pts[j - 1], pts[j]);
                y0 + (y1 - y0) * (z - x0) / (x1 - x0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Affine { alpha, beta } if alpha.is_finite() && beta.is_finite() => Ok(()),
            Self::Tabulated(pts)
                if !pts.is_empty()
                    && pts.iter().all(|(x, y)| x.is_finite() && y.is_finite())
                    && pts.windows(2).all(|w| w[0].0 < w[1].0) =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParameter(
                "growth envelope must be finite and strictly ordered".into(),
            )),
        }
    }

    fn last_point(&self) -> Option<f64> {
        match self {
            Self::Affine { .. } => None,
            Self::Tabulated(pts) => pts.last().map(|p| p.0),
        }
    }

    /// Right end of the region where `[f(z) − shift]⁺` can bend for shifts
    /// up to `max_shift`.
    fn bend_limit(&self, max_shift: f64) -> f64 {
        match self {
            Self::Affine { alpha, beta } if *alpha > 0.0 => (max_shift - beta) / alpha + 1.0,
            Self::Affine { .. } => 0.0,
            Self::Tabulated(pts) => pts[pts.len() - 1].0,
        }
    }
}

/// Which growth-rate functional the envelope stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Envelope {
    /// Maximal growth rate.
    Max,
    /// Minimal growth rate.
    Min,
    /// Expected growth rate.
    Expected,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecursionSpec {
    pub phi: Phi,
    pub envelope: Envelope,
    pub p: f64,
    /// Per-step budget subtracted as `p·b·(k+1)`; zero for none.
    pub budget: f64,
    pub i0: f64,
    pub theta: Option<f64>,
    pub steps: usize,
}

/// Numerical shape of `φ(·, k)` over the visited range, for every visited
/// `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Shape {
    pub nondecreasing: bool,
    pub concave: bool,
    pub convex: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    /// `φ` vanished; the sequence stays put from here on.
    Stalled,
    /// `X` exceeded `θ`.
    Theta,
    /// Step limit reached.
    Steps,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecursionOutput {
    /// `X(0), X(1), …`.
    pub values: Vec<f64>,
    pub stop: StopReason,
    pub shape: Shape,
    /// The sequence bounds `E|I_k|` from above.
    pub certified_upper: bool,
    /// The sequence bounds `E|I_k|` from below.
    pub certified_lower: bool,
    pub warnings: Vec<String>,
}

const SHAPE_TOL: f64 = 1e-9;
const SHAPE_POINTS: usize = 4096;
const SHAPE_EVALS: usize = 1 << 16;

fn phi_at(spec: &RecursionSpec, z: f64, k: usize) -> f64 {
    (spec.phi.eval(z) - spec.p * spec.budget * (k + 1) as f64).max(0.0)
}

/// Second-difference shape test of `φ(·, k)` on a uniform grid of
/// cardinalities over `[lo, hi]` (unit spacing when it fits).
fn shape_on(spec: &RecursionSpec, lo: f64, hi: f64, ks: core::ops::Range<usize>) -> Shape {
    let mut shape = Shape {
        nondecreasing: true,
        concave: true,
        convex: true,
    };
    let span = (hi - lo).max(0.0);
    let cap = (SHAPE_EVALS / ks.len().max(1)).clamp(16, SHAPE_POINTS);
    let n = (libm::ceil(span) as usize).clamp(2, cap);
    let h = if span > 0.0 { span / n as f64 } else { 1.0 };
    for k in ks {
        let ys: Vec<f64> = (0..=n)
            .map(|j| phi_at(spec, lo + h * j as f64, k))
            .collect();
        for w in ys.windows(2) {
            shape.nondecreasing &= w[1] - w[0] >= -SHAPE_TOL;
        }
        for w in ys.windows(3) {
            let second = w[2] - 2.0 * w[1] + w[0];
            shape.concave &= second <= SHAPE_TOL;
            shape.convex &= second >= -SHAPE_TOL;
        }
    }
    shape
}

/// Iterates the recursion and reports which bound the output certifies.
pub fn recursion_bound(spec: &RecursionSpec) -> Result<RecursionOutput> {
    spec.phi.validate()?;
    if !(spec.p > 0.0 && spec.p <= 1.0) || spec.budget < 0.0 || !spec.i0.is_finite() {
        return Err(Error::InvalidParameter(
            "recursion needs p in (0, 1], b ≥ 0 and finite i0".into(),
        ));
    }
    let mut values = Vec::with_capacity(spec.steps.min(1024) + 1);
    values.push(spec.i0);
    let mut x = spec.i0;
    let mut stop = StopReason::Steps;
    for k in 0..spec.steps {
        let inc = phi_at(spec, x, k);
        if inc <= 0.0 {
            stop = StopReason::Stalled;
            break;
        }
        x += inc;
        values.push(x);
        if spec.theta.is_some_and(|t| x > t) {
            stop = StopReason::Theta;
            break;
        }
    }
    if spec.steps == 0 {
        stop = StopReason::Steps;
    }
    let top = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(spec.i0, f64::max);
    // The shape conditions must hold on all of [i0, θ], not only where the
    // iterate went: the process itself spreads around it.
    let max_shift = spec.p * spec.budget * values.len() as f64;
    let reach = top.max(spec.phi.bend_limit(max_shift));
    let hi = spec.theta.map_or(reach, |t| t.max(spec.i0));
    let shape = shape_on(spec, spec.i0, hi, 0..values.len());
    let mut warnings = Vec::new();
    if let Some(last) = spec.phi.last_point() {
        if top > last {
            warnings.push(format!(
                "sequence reached {top:.3}, beyond the last tabulated cardinality {last}"
            ));
        }
    }
    let (upper, lower) = match spec.envelope {
        Envelope::Max => (shape.nondecreasing && shape.concave, false),
        Envelope::Min => (false, shape.nondecreasing && shape.convex),
        Envelope::Expected => (
            shape.nondecreasing && shape.concave,
            shape.nondecreasing && shape.convex,
        ),
    };
    if !upper && !lower {
        warnings.push(format!(
            "shape check failed ({:?} envelope, nondecreasing={}, concave={}, convex={}); \
             supply a concave or convex substitute envelope",
            spec.envelope, shape.nondecreasing, shape.concave, shape.convex
        ));
    }
    Ok(RecursionOutput {
        values,
        stop,
        shape,
        certified_upper: upper,
        certified_lower: lower,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{k_threshold, l_value, KThreshold};
    use proptest::prelude::*;

    fn affine(alpha: f64, beta: f64, p: f64, b: f64, i0: f64, envelope: Envelope) -> RecursionSpec {
        RecursionSpec {
            phi: Phi::Affine { alpha, beta },
            envelope,
            p,
            budget: b,
            i0,
            theta: None,
            steps: 10_000,
        }
    }

    #[test]
    fn zero_envelope_is_constant() {
        let spec = RecursionSpec {
            phi: Phi::Tabulated(alloc::vec![(1.0, 0.0), (5.0, 0.0)]),
            ..affine(0.0, 0.0, 0.5, 0.0, 3.0, Envelope::Expected)
        };
        let out = recursion_bound(&spec).unwrap();
        assert_eq!(out.values, [3.0]);
        assert_eq!(out.stop, StopReason::Stalled);
        assert!(out.certified_upper && out.certified_lower);
    }

    #[test]
    fn tree_envelope_matches_closed_form() {
        // d = 3, p = 0.5, b = 2: f(z) = p(2z + 1).
        let out = recursion_bound(&affine(1.0, 0.5, 0.5, 2.0, 1.0, Envelope::Expected)).unwrap();
        assert_eq!(out.values, [1.0, 1.5]);
        // The clip at zero makes φ convex in z, so only the lower side holds.
        assert!(out.shape.convex && !out.shape.concave);
        assert!(out.certified_lower && !out.certified_upper);
        let max = recursion_bound(&affine(1.0, 0.5, 0.5, 2.0, 1.0, Envelope::Max)).unwrap();
        assert!(!max.certified_upper && !max.warnings.is_empty());
    }

    #[test]
    fn without_budget_affine_is_both() {
        let mut spec = affine(0.5, 1.0, 0.5, 0.0, 1.0, Envelope::Expected);
        spec.theta = Some(20.0);
        let out = recursion_bound(&spec).unwrap();
        assert_eq!(out.stop, StopReason::Theta);
        assert!(out.certified_upper && out.certified_lower);
        assert!(*out.values.last().unwrap() > 20.0);
    }

    #[test]
    fn tabulated_interpolation_and_warnings() {
        let phi = Phi::Tabulated(alloc::vec![(1.0, 1.0), (3.0, 2.0)]);
        assert_eq!(phi.eval(2.0), 1.5);
        assert_eq!(phi.eval(0.0), 1.0);
        assert_eq!(phi.eval(9.0), 2.0);
        let spec = RecursionSpec {
            phi,
            ..affine(0.0, 0.0, 0.5, 0.0, 1.0, Envelope::Max)
        };
        let out = recursion_bound(&RecursionSpec { steps: 3, ..spec }).unwrap();
        assert_eq!(out.values, [1.0, 2.0, 3.5, 5.5]);
        assert!(out.warnings.iter().any(|w| w.contains("beyond")));
        let bad = Phi::Tabulated(alloc::vec![(2.0, 1.0), (1.0, 2.0)]);
        assert!(recursion_bound(&RecursionSpec {
            phi: bad,
            ..affine(0.0, 0.0, 0.5, 0.0, 1.0, Envelope::Max)
        })
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn affine_recursion_is_the_closed_form(a in 0.05f64..3.0, beta in 0.0f64..5.0, p in 0.05f64..=1.0, b in 0.0f64..30.0, i0 in 1.0f64..20.0) {
            let out = recursion_bound(&affine(a, beta, p, b, i0, Envelope::Expected)).unwrap();
            if let KThreshold::At(k) = k_threshold(a, beta, p, b, i0).unwrap() {
                prop_assert_eq!(out.stop, StopReason::Stalled);
                prop_assert_eq!(out.values.len(), k + 1);
                for (j, x) in out.values.iter().enumerate() {
                    let l = l_value(a, beta, p, b, j, i0).unwrap();
                    prop_assert!((l - x).abs() <= 1e-9 * (1.0 + l.abs()), "k={} {} vs {}", j, l, x);
                }
            }
        }
    }
}
