//! Spatial registration of tree shapes: optimal rotation, per-branch
//! reparameterization and subtree matching, solved by block-coordinate
//! descent.

mod cycle;
mod dp;
mod hungarian;
mod io;
mod sequence;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::warp::Diffeo;
pub use cycle::{cycle_consistency, point_correspondences, CycleReport};
pub use dp::{
    coprime_stencil, default_stencil, optimal_path, optimal_reparam_branch,
    optimal_reparam_branch_with, BranchAlignmentCost,
};
pub use hungarian::{assign, match_subtrees, match_subtrees_exact, matching_cost, Matching};
pub use io::{parse_registration, serialize_registration, REG_FORMAT};
pub use sequence::{pad_to_template, register_sequence, SequenceRegistration};

use crate::error::{Error, Result};
use crate::esrvf::{
    apply_reparam, apply_rotation, trapezoid_weights, EsrvfChild, EsrvfTree, Rotation, Vec3,
};
use crate::metric::{branch_dist_sq, flat_dist_sq, tree_norm_sq, MetricWeights};

/// Per-branch part of a registration map.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMap {
    /// Reparameterization applied to the tree-2 branch.
    pub warp: Diffeo,
    pub matching: Matching,
    /// One entry per `matching.pairs`, in the same order.
    pub children: Vec<NodeMap>,
}

impl NodeMap {
    /// Identity warps and positional matching, mirroring both trees.
    pub fn positional(q1: &EsrvfTree, q2: &EsrvfTree) -> NodeMap {
        let matching = Matching::positional(q1.children.len(), q2.children.len());
        let children = matching
            .pairs
            .iter()
            .map(|&(i, j)| NodeMap::positional(&q1.children[i].subtree, &q2.children[j].subtree))
            .collect();
        NodeMap {
            warp: Diffeo::identity(q1.main.len()),
            matching,
            children,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.warp.is_identity()
            && self.matching.unmatched1.is_empty()
            && self.matching.unmatched2.is_empty()
            && self.matching.pairs.iter().all(|(i, j)| i == j)
            && self.children.iter().all(NodeMap::is_identity)
    }
}

/// Rotation, warps and matchings carrying tree 2 onto tree 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationMap {
    pub rotation: Rotation,
    pub root: NodeMap,
}

impl RegistrationMap {
    pub fn identity(q1: &EsrvfTree, q2: &EsrvfTree) -> Self {
        RegistrationMap {
            rotation: Rotation::identity(),
            root: NodeMap::positional(q1, q2),
        }
    }

    pub fn is_identity(&self) -> bool {
        (self.rotation.matrix() - Matrix3::identity()).norm() < 1e-12 && self.root.is_identity()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegOptions {
    /// DP grid size; `None` uses the branch sample count.
    pub grid: Option<usize>,
    /// Largest step of the coprime slope stencil.
    pub max_step: usize,
    pub rounds: usize,
    /// Relative cost decrease below which the rounds stop.
    pub tolerance: f64,
    /// Pair as many children as possible instead of allowing free nulls.
    pub exact_permutation: bool,
    /// Solve for a rotation; when false only warps and matchings are used.
    pub rotate: bool,
}

impl Default for RegOptions {
    fn default() -> Self {
        RegOptions {
            grid: None,
            max_step: 3,
            rounds: 3,
            tolerance: 1e-6,
            exact_permutation: false,
            rotate: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub map: RegistrationMap,
    /// Elastic distance after registration.
    pub distance: f64,
    /// Squared distance of each outer round, in order.
    pub history: Vec<f64>,
    /// Squared distance under the identity map.
    pub identity_cost: f64,
    pub degenerate_rotation: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct RotationFit {
    pub rotation: Rotation,
    pub degenerate: bool,
}

/// Weighted Kabsch solution for `argmin_O Σ w‖a − O b‖²`.
pub fn kabsch(pairs: &[(Vec3, Vec3, f64)]) -> RotationFit {
    let mut m = Matrix3::zeros();
    for (a, b, w) in pairs {
        m += a * b.transpose() * *w;
    }
    let svd = m.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => {
            return RotationFit { rotation: Rotation::identity(), degenerate: true };
        }
    };
    let mut sv: Vec<(usize, f64)> = svd.singular_values.iter().copied().enumerate().collect();
    sv.sort_by(|a, b| b.1.total_cmp(&a.1));
    if !(sv[0].1 > 0.0) || sv[1].1 <= 1e-12 * sv[0].1 {
        return RotationFit { rotation: Rotation::identity(), degenerate: true };
    }
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(sv[2].0, sv[2].0)] = -1.0;
    }
    let r = u * d * vt;
    match Rotation::new(r) {
        Ok(rotation) => RotationFit { rotation, degenerate: false },
        Err(_) => RotationFit { rotation: Rotation::identity(), degenerate: true },
    }
}

/// Optimal rotation of `q2` onto `q1` over corresponding velocity samples,
/// weighted by the trapezoidal rule and each branch's metric coefficient.
/// Correspondences come from `map` when given, else from positional pairing
/// with identity warps.
pub fn optimal_rotation(
    q1: &EsrvfTree,
    q2: &EsrvfTree,
    map: Option<&NodeMap>,
    w: &MetricWeights,
) -> Result<RotationFit> {
    let positional;
    let node = match map {
        Some(n) => n,
        None => {
            positional = NodeMap::positional(q1, q2);
            &positional
        }
    };
    let mut pairs = Vec::new();
    collect_pairs(q1, q2, node, w.lambda_m, w, &mut pairs)?;
    Ok(kabsch(&pairs))
}

fn collect_pairs(
    q1: &EsrvfTree,
    q2: &EsrvfTree,
    node: &NodeMap,
    coef: f64,
    w: &MetricWeights,
    out: &mut Vec<(Vec3, Vec3, f64)>,
) -> Result<()> {
    check_node(q1, q2, node)?;
    let warped = apply_reparam(&q2.main, &node.warp);
    let tw = trapezoid_weights(q1.main.len());
    for ((a, b), t) in q1.main.v.iter().zip(&warped.v).zip(&tw) {
        out.push((*a, *b, t * coef));
    }
    for (&(i, j), sub) in node.matching.pairs.iter().zip(&node.children) {
        collect_pairs(
            &q1.children[i].subtree,
            &q2.children[j].subtree,
            sub,
            coef * w.lambda_s,
            w,
            out,
        )?;
    }
    Ok(())
}

fn check_node(q1: &EsrvfTree, q2: &EsrvfTree, node: &NodeMap) -> Result<()> {
    if q1.main.len() != q2.main.len() {
        return Err(Error::Mismatch(format!(
            "branches have {} and {} samples",
            q1.main.len(),
            q2.main.len()
        )));
    }
    if !node.matching.is_consistent(q1.children.len(), q2.children.len())
        || node.children.len() != node.matching.pairs.len()
    {
        return Err(Error::Mismatch(
            "registration map does not fit the trees".into(),
        ));
    }
    Ok(())
}

/// Closest candidate to `s`, or `s` itself when there is none.
pub(crate) fn nearest(s: f64, candidates: &[f64]) -> f64 {
    let mut best = s;
    let mut gap = f64::INFINITY;
    for &c in candidates {
        let g = (c - s).abs();
        if g < gap {
            gap = g;
            best = c;
        }
    }
    best
}

/// Applies `map` to `q2` and pads both trees with null subtrees so they
/// share one slot structure. Children follow tree-1 order, followed by
/// tree-2 children left unmatched. A null placeholder sits at the closest
/// bifurcation parameter on its own side.
pub fn align(q1: &EsrvfTree, q2: &EsrvfTree, map: &RegistrationMap) -> Result<(EsrvfTree, EsrvfTree)> {
    let rotated = apply_rotation(q2, &map.rotation);
    align_node(q1, &rotated, &map.root)
}

fn align_node(q1: &EsrvfTree, q2: &EsrvfTree, node: &NodeMap) -> Result<(EsrvfTree, EsrvfTree)> {
    check_node(q1, q2, node)?;
    let main2 = apply_reparam(&q2.main, &node.warp);
    let s1: Vec<f64> = q1.children.iter().map(|c| c.s).collect();
    let s2: Vec<f64> = q2
        .children
        .iter()
        .map(|c| node.warp.inverse_eval(c.s))
        .collect();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, c1) in q1.children.iter().enumerate() {
        match node.matching.pairs.iter().position(|p| p.0 == i) {
            Some(k) => {
                let j = node.matching.pairs[k].1;
                let (x, y) = align_node(&c1.subtree, &q2.children[j].subtree, &node.children[k])?;
                a.push(EsrvfChild { s: c1.s, subtree: x });
                b.push(EsrvfChild { s: s2[j], subtree: y });
            }
            None => {
                a.push(c1.clone());
                b.push(EsrvfChild {
                    s: nearest(c1.s, &s2),
                    subtree: c1.subtree.null_like(),
                });
            }
        }
    }
    let mut extra = node.matching.unmatched2.clone();
    extra.sort_unstable();
    for j in extra {
        let c2 = &q2.children[j];
        a.push(EsrvfChild {
            s: nearest(s2[j], &s1),
            subtree: c2.subtree.null_like(),
        });
        b.push(EsrvfChild { s: s2[j], subtree: c2.subtree.clone() });
    }
    Ok((
        EsrvfTree { main: q1.main.clone(), children: a },
        EsrvfTree { main: main2, children: b },
    ))
}

/// Grid used to compare starting rotations.
const COARSE_GRID: usize = 24;
/// Starts closer than this (Frobenius) are treated as one.
const START_SEPARATION: f64 = 0.05;

struct Ctx<'a> {
    w: &'a MetricWeights,
    grid: usize,
    stencil: Vec<(usize, usize)>,
    exact: bool,
}

/// One bottom-up pass for a fixed rotation: matches children using
/// recursive pair costs, warps the main branch, and returns the node's cost.
fn register_node(q1: &EsrvfTree, q2: &EsrvfTree, ctx: &Ctx) -> Result<(NodeMap, f64)> {
    let w = ctx.w;
    let n = q1.main.len();
    if q2.main.len() != n {
        return Err(Error::Mismatch(format!(
            "branches have {n} and {} samples",
            q2.main.len()
        )));
    }
    let grid = ctx.grid.min(n);
    let (candidate, _) = optimal_reparam_branch_with(&q1.main, &q2.main, grid, w.radius, &ctx.stencil)?;
    let warped = apply_reparam(&q2.main, &candidate);
    let warp_cost = branch_dist_sq(&q1.main, &warped, w.radius)?;
    let id_cost = branch_dist_sq(&q1.main, &q2.main, w.radius)?;
    let (warp, main_cost) = if warp_cost < id_cost {
        (candidate, warp_cost)
    } else {
        (Diffeo::identity(n), id_cost)
    };

    let k1 = q1.children.len();
    let k2 = q2.children.len();
    let s1: Vec<f64> = q1.children.iter().map(|c| c.s).collect();
    let s2: Vec<f64> = q2.children.iter().map(|c| warp.inverse_eval(c.s)).collect();

    let jobs: Vec<(usize, usize)> = (0..k1).flat_map(|i| (0..k2).map(move |j| (i, j))).collect();
    let results: Vec<Result<(NodeMap, f64)>> = jobs
        .par_iter()
        .map(|&(i, j)| register_node(&q1.children[i].subtree, &q2.children[j].subtree, ctx))
        .collect();
    let mut sub: Vec<Vec<Option<NodeMap>>> = vec![vec![None; k2]; k1];
    let mut cost = vec![vec![0.0; k2]; k1];
    for (&(i, j), r) in jobs.iter().zip(results) {
        let (m, c) = r?;
        let ds = s1[i] - s2[j];
        cost[i][j] = w.lambda_p * ds * ds + w.lambda_s * c;
        sub[i][j] = Some(m);
    }
    let null1: Vec<f64> = q1
        .children
        .iter()
        .map(|c| {
            let ds = c.s - nearest(c.s, &s2);
            w.lambda_s * tree_norm_sq(&c.subtree, w) + w.lambda_p * ds * ds
        })
        .collect();
    let null2: Vec<f64> = q2
        .children
        .iter()
        .zip(&s2)
        .map(|(c, s)| {
            let ds = s - nearest(*s, &s1);
            w.lambda_s * tree_norm_sq(&c.subtree, w) + w.lambda_p * ds * ds
        })
        .collect();
    let matching = if ctx.exact {
        match_subtrees_exact(&cost, &null1, &null2)
    } else {
        match_subtrees(&cost, &null1, &null2)
    };
    let total = w.lambda_m * main_cost + matching_cost(&cost, &null1, &null2, &matching);
    let children = matching
        .pairs
        .iter()
        .map(|&(i, j)| sub[i][j].take().expect("pair cost computed"))
        .collect();
    Ok((NodeMap { warp, matching, children }, total))
}

/// Registers `q2` onto `q1` and returns the map with the elastic distance.
/// The result is never worse than the identity map.
pub fn register_trees(
    q1: &EsrvfTree,
    q2: &EsrvfTree,
    w: &MetricWeights,
    opts: &RegOptions,
) -> Result<Registration> {
    w.validate()?;
    if opts.max_step < 1 {
        return Err(Error::Argument("stencil step must be at least 1".into()));
    }
    let ctx = Ctx {
        w,
        grid: opts.grid.unwrap_or(q1.main.len()).max(2),
        stencil: coprime_stencil(opts.max_step),
        exact: opts.exact_permutation,
    };
    let identity = RegistrationMap::identity(q1, q2);
    let identity_cost = match align(q1, q2, &identity) {
        Ok((a, b)) => flat_dist_sq(&a, &b, w)?,
        Err(e) => return Err(e),
    };

    let mut degenerate = false;
    let mut rotation = Rotation::identity();
    if opts.rotate {
        let positional = optimal_rotation(q1, q2, None, w)?;
        degenerate = positional.degenerate;
        let main_only = NodeMap {
            warp: Diffeo::identity(q1.main.len()),
            matching: Matching {
                pairs: Vec::new(),
                unmatched1: (0..q1.children.len()).collect(),
                unmatched2: (0..q2.children.len()).collect(),
            },
            children: Vec::new(),
        };
        let main = optimal_rotation(q1, q2, Some(&main_only), w)?;
        // Child order says nothing about correspondence, so score a few
        // starting rotations on a coarse grid and keep the cheapest.
        let mut starts = vec![Rotation::identity()];
        for fit in [positional, main] {
            if !fit.degenerate && starts.iter().all(|r| (r.matrix() - fit.rotation.matrix()).norm() > START_SEPARATION) {
                starts.push(fit.rotation);
            }
        }
        rotation = *starts.last().unwrap();
        if starts.len() > 1 {
            let coarse = Ctx { grid: ctx.grid.min(COARSE_GRID), stencil: ctx.stencil.clone(), ..ctx };
            let mut best_start = f64::INFINITY;
            for r in starts.iter().rev() {
                let (_, c) = register_node(q1, &apply_rotation(q2, r), &coarse)?;
                if c < best_start {
                    best_start = c;
                    rotation = *r;
                }
            }
        }
    }
    let mut history = Vec::new();
    let mut best: Option<(RegistrationMap, f64)> = None;
    for _ in 0..opts.rounds.max(1) {
        let rotated = apply_rotation(q2, &rotation);
        let (root, cost) = register_node(q1, &rotated, &ctx)?;
        let prev = history.last().copied();
        history.push(cost);
        let improved = best.as_ref().is_none_or(|(_, c)| cost < *c);
        if improved {
            best = Some((RegistrationMap { rotation, root: root.clone() }, cost));
        }
        if let Some(p) = prev {
            if p - cost <= opts.tolerance * p.abs() {
                break;
            }
        }
        if !opts.rotate {
            break;
        }
        let fit = optimal_rotation(q1, q2, Some(&root), w)?;
        if fit.degenerate {
            degenerate = true;
            break;
        }
        rotation = fit.rotation;
    }
    let (mut map, _) = best.expect("at least one round");
    let (a, b) = align(q1, q2, &map)?;
    let mut cost = flat_dist_sq(&a, &b, w)?;
    if identity_cost <= cost {
        map = identity;
        cost = identity_cost;
    }
    Ok(Registration {
        map,
        distance: cost.max(0.0).sqrt(),
        history,
        identity_cost,
        degenerate_rotation: degenerate,
    })
}
