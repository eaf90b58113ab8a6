//! Brute-force reference implementations used by the integration and
//! acceptance tests.
#![allow(dead_code)]

use arbor4d::esrvf::{EsrvfBranch, EsrvfTree};
use arbor4d::metric::MetricWeights;

/// Minimum over every monotone lattice path from `(0,0)` to `(m-1,m-1)`
/// built from `stencil` steps. Costs accumulate from the start of the path.
pub fn brute_force_path(
    m: usize,
    stencil: &[(usize, usize)],
    segment: &impl Fn(usize, usize, usize, usize) -> f64,
) -> f64 {
    fn go(
        i: usize,
        j: usize,
        acc: f64,
        m: usize,
        stencil: &[(usize, usize)],
        segment: &impl Fn(usize, usize, usize, usize) -> f64,
        best: &mut f64,
    ) {
        if i == m - 1 && j == m - 1 {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        for &(a, b) in stencil {
            if i + a < m && j + b < m {
                go(i + a, j + b, acc + segment(i, j, a, b), m, stencil, segment, best);
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, 0, 0.0, m, stencil, segment, &mut best);
    best
}

/// Cheapest partial matching: every child of side 1 is paired with a
/// distinct child of side 2 or left unmatched. Summed as pairs by row, then
/// unmatched rows, then unmatched columns.
pub fn brute_force_matching(cost: &[Vec<f64>], null1: &[f64], null2: &[f64]) -> f64 {
    fn go(
        i: usize,
        assignment: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        cost: &[Vec<f64>],
        null1: &[f64],
        null2: &[f64],
        best: &mut f64,
    ) {
        if i == null1.len() {
            let mut total = 0.0;
            for (r, a) in assignment.iter().enumerate() {
                if let Some(c) = a {
                    total += cost[r][*c];
                }
            }
            for (r, a) in assignment.iter().enumerate() {
                if a.is_none() {
                    total += null1[r];
                }
            }
            for (c, u) in used.iter().enumerate() {
                if !u {
                    total += null2[c];
                }
            }
            if total < *best {
                *best = total;
            }
            return;
        }
        assignment.push(None);
        go(i + 1, assignment, used, cost, null1, null2, best);
        assignment.pop();
        for c in 0..null2.len() {
            if !used[c] {
                used[c] = true;
                assignment.push(Some(c));
                go(i + 1, assignment, used, cost, null1, null2, best);
                assignment.pop();
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, &mut Vec::new(), &mut vec![false; null2.len()], cost, null1, null2, &mut best);
    best
}

fn trapezoid(f: &[f64]) -> f64 {
    let n = f.len();
    let h = 1.0 / (n - 1) as f64;
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]))
}

fn branch_sq(a: &EsrvfBranch, b: Option<&EsrvfBranch>, w_rad: f64) -> f64 {
    let f: Vec<f64> = (0..a.v.len())
        .map(|k| {
            let (v, r) = match b {
                Some(b) => (a.v[k] - b.v[k], a.rad[k] - b.rad[k]),
                None => (a.v[k], a.rad[k]),
            };
            v.x * v.x + v.y * v.y + v.z * v.z + w_rad * r * r
        })
        .collect();
    trapezoid(&f)
}

/// Squared elastic distance of two trees sharing a slot structure.
pub fn flat_distance_sq(a: &EsrvfTree, b: &EsrvfTree, w: &MetricWeights) -> f64 {
    assert_eq!(a.children.len(), b.children.len());
    let mut d = w.lambda_m * branch_sq(&a.main, Some(&b.main), w.radius);
    for (x, y) in a.children.iter().zip(&b.children) {
        d += w.lambda_p * (x.s - y.s).powi(2) + w.lambda_s * flat_distance_sq(&x.subtree, &y.subtree, w);
    }
    d
}

/// Squared distance of a subtree to nothing.
pub fn norm_sq(q: &EsrvfTree, w: &MetricWeights) -> f64 {
    w.lambda_m * branch_sq(&q.main, None, w.radius)
        + q.children.iter().map(|c| w.lambda_s * norm_sq(&c.subtree, w)).sum::<f64>()
}

/// Every coordinate of a tree (velocities, radii, bifurcation parameters)
/// in depth-first order.
pub fn flatten(q: &EsrvfTree) -> Vec<f64> {
    let mut out = Vec::new();
    fn go(q: &EsrvfTree, out: &mut Vec<f64>) {
        for v in &q.main.v {
            out.extend([v.x, v.y, v.z]);
        }
        out.extend(&q.main.rad);
        for c in &q.children {
            out.push(c.s);
            go(&c.subtree, out);
        }
    }
    go(q, &mut out);
    out
}
