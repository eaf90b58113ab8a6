//! Elastic tree distance and straight-line geodesics in ESRVF space.
//!
//! Once two trees share a slot structure (after registration and null
//! padding) their squared distance is a weighted sum of squared L2 norms:
//!
//! ```text
//! D(a, b) = λm·‖a.main − b.main‖² + Σ_i [ λp·(a.s_i − b.s_i)² + λs·D(a_i, b_i) ]
//! ```
//!
//! where the branch norm includes the radius channel weighted by `radius`.
//! Straight lines in these coordinates are therefore geodesics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esrvf::{trapezoid, EsrvfBranch, EsrvfChild, EsrvfTree};
use crate::spatreg::{align, RegistrationMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    /// Main-branch deformation weight.
    pub lambda_m: f64,
    /// Subtree deformation weight.
    pub lambda_s: f64,
    /// Bifurcation sliding weight.
    pub lambda_p: f64,
    /// Weight of the radius channel inside the branch term.
    #[serde(default = "one")]
    pub radius: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights {
            lambda_m: 1.0,
            lambda_s: 1.0,
            lambda_p: 0.5,
            radius: 1.0,
        }
    }
}

impl MetricWeights {
    pub fn new(lambda_m: f64, lambda_s: f64, lambda_p: f64, radius: f64) -> Result<Self> {
        let w = MetricWeights {
            lambda_m,
            lambda_s,
            lambda_p,
            radius,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_m", self.lambda_m),
            ("lambda_s", self.lambda_s),
            ("lambda_p", self.lambda_p),
            ("radius", self.radius),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("weight must be finite and >= 0, got {v}")));
            }
        }
        if self.lambda_m == 0.0 && self.lambda_s == 0.0 && self.lambda_p == 0.0 {
            return Err(Error::Argument("metric weights cannot all be zero".into()));
        }
        Ok(())
    }
}

/// `∫ ‖v₁ − v₂‖² + w_rad·(rad₁ − rad₂)² ds` by the trapezoidal rule.
pub fn branch_dist_sq(q1: &EsrvfBranch, q2: &EsrvfBranch, w_rad: f64) -> Result<f64> {
    if q1.len() != q2.len() {
        return Err(Error::Mismatch(format!(
            "branches have {} and {} samples",
            q1.len(),
            q2.len()
        )));
    }
    Ok(branch_dist_sq_unchecked(q1, q2, w_rad))
}

pub(crate) fn branch_dist_sq_unchecked(q1: &EsrvfBranch, q2: &EsrvfBranch, w_rad: f64) -> f64 {
    let integrand: Vec<f64> = q1
        .v
        .iter()
        .zip(&q2.v)
        .zip(q1.rad.iter().zip(&q2.rad))
        .map(|((a, b), (r1, r2))| (a - b).norm_squared() + w_rad * (r1 - r2) * (r1 - r2))
        .collect();
    trapezoid(&integrand)
}

/// Squared branch norm (distance to the zero branch).
pub fn branch_norm_sq(q: &EsrvfBranch, w_rad: f64) -> f64 {
    let integrand: Vec<f64> = q
        .v
        .iter()
        .zip(&q.rad)
        .map(|(v, r)| v.norm_squared() + w_rad * r * r)
        .collect();
    trapezoid(&integrand)
}

/// Distance of a subtree to the empty tree: the cost of growing it from, or
/// collapsing it to, nothing.
pub fn tree_norm_sq(q: &EsrvfTree, w: &MetricWeights) -> f64 {
    w.lambda_m * branch_norm_sq(&q.main, w.radius)
        + q.children
            .iter()
            .map(|c| w.lambda_s * tree_norm_sq(&c.subtree, w))
            .sum::<f64>()
}

/// Squared distance between two trees that already share a slot structure.
pub fn flat_dist_sq(a: &EsrvfTree, b: &EsrvfTree, w: &MetricWeights) -> Result<f64> {
    if a.main.len() != b.main.len() || a.children.len() != b.children.len() {
        return Err(Error::Mismatch(
            "trees do not share a topology; register and pad them first".into(),
        ));
    }
    let mut total = w.lambda_m * branch_dist_sq_unchecked(&a.main, &b.main, w.radius);
    for (ca, cb) in a.children.iter().zip(&b.children) {
        let ds = ca.s - cb.s;
        total += w.lambda_p * ds * ds + w.lambda_s * flat_dist_sq(&ca.subtree, &cb.subtree, w)?;
    }
    Ok(total)
}

/// Applies `map` to `q2` and evaluates the elastic distance to `q1`,
/// charging null-match costs for unmatched subtrees.
pub fn tree_dist_sq_aligned(
    q1: &EsrvfTree,
    q2: &EsrvfTree,
    map: &RegistrationMap,
    w: &MetricWeights,
) -> Result<f64> {
    let (a, b) = align(q1, q2, map)?;
    flat_dist_sq(&a, &b, w)
}

/// `(1 − τ)·a + τ·b` on every component, including bifurcation parameters.
pub fn lerp_tree(a: &EsrvfTree, b: &EsrvfTree, tau: f64) -> Result<EsrvfTree> {
    combine(a, b, 1.0 - tau, tau)
}

/// `fa·a + fb·b` on every component of two same-topology trees.
pub fn combine(a: &EsrvfTree, b: &EsrvfTree, fa: f64, fb: f64) -> Result<EsrvfTree> {
    if a.main.len() != b.main.len() || a.children.len() != b.children.len() {
        return Err(Error::Mismatch("geodesic endpoints differ in topology".into()));
    }
    let main = EsrvfBranch {
        v: a.main
            .v
            .iter()
            .zip(&b.main.v)
            .map(|(x, y)| x * fa + y * fb)
            .collect(),
        rad: a.main
            .rad
            .iter()
            .zip(&b.main.rad)
            .map(|(x, y)| (x * fa + y * fb).max(0.0))
            .collect(),
        origin: a.main.origin * fa + b.main.origin * fb,
    };
    let children = a
        .children
        .iter()
        .zip(&b.children)
        .map(|(ca, cb)| {
            Ok(EsrvfChild {
                s: (ca.s * fa + cb.s * fb).clamp(0.0, 1.0),
                subtree: combine(&ca.subtree, &cb.subtree, fa, fb)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EsrvfTree { main, children })
}

/// Samples the straight line from `q1` to `q2_aligned` at `steps` equispaced
/// times; the endpoints are returned unchanged.
pub fn geodesic(q1: &EsrvfTree, q2_aligned: &EsrvfTree, steps: usize) -> Result<Vec<EsrvfTree>> {
    if steps < 2 {
        return Err(Error::Argument(format!("a geodesic needs at least 2 steps, got {steps}")));
    }
    if !q1.same_topology(q2_aligned) {
        return Err(Error::Mismatch("geodesic endpoints differ in topology".into()));
    }
    (0..steps)
        .map(|j| {
            if j == 0 {
                Ok(q1.clone())
            } else if j == steps - 1 {
                Ok(q2_aligned.clone())
            } else {
                lerp_tree(q1, q2_aligned, j as f64 / (steps - 1) as f64)
            }
        })
        .collect()
}
