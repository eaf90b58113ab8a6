use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{register_trees, NodeMap, RegOptions, RegistrationMap};
use crate::error::Result;
use crate::esrvf::tree_forward;
use crate::metric::MetricWeights;
use crate::treemodel::{normalize_scale, normalize_translation, Tree};
use crate::warp::Diffeo;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub samples: usize,
    pub thresholds: Vec<f64>,
    /// Percentage of samples whose round-trip error exceeds each threshold.
    pub violation_percent: Vec<f64>,
    pub mean_error: f64,
    pub max_error: f64,
}

/// Branch correspondences of a map: `(path in tree 1, path in tree 2, γ)`
/// where parameter `t` on the tree-1 branch corresponds to `γ(t)` on the
/// tree-2 branch.
pub fn point_correspondences(map: &RegistrationMap) -> Vec<(Vec<usize>, Vec<usize>, Diffeo)> {
    fn walk(
        n: &NodeMap,
        p1: &mut Vec<usize>,
        p2: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, Vec<usize>, Diffeo)>,
    ) {
        out.push((p1.clone(), p2.clone(), n.warp.clone()));
        for (&(i, j), sub) in n.matching.pairs.iter().zip(&n.children) {
            p1.push(i);
            p2.push(j);
            walk(sub, p1, p2, out);
            p1.pop();
            p2.pop();
        }
    }
    let mut out = Vec::new();
    walk(&map.root, &mut Vec::new(), &mut Vec::new(), &mut out);
    out
}

fn subtree<'a>(t: &'a Tree, path: &[usize]) -> &'a Tree {
    path.iter().fold(t, |node, &i| &node.children[i].subtree)
}

/// Registers `a → b` and `b → a` and measures how far each skeleton sample
/// of `a` lands from its start after the round trip. Both trees are
/// translation- and scale-normalized and resampled to `n` points per branch
/// first; unmatched samples count as violations at every threshold.
pub fn cycle_consistency(
    a: &Tree,
    b: &Tree,
    n: usize,
    w: &MetricWeights,
    opts: &RegOptions,
    thresholds: &[f64],
) -> Result<CycleReport> {
    let prep = |t: &Tree| -> Result<Tree> {
        let (s, _) = normalize_scale(&normalize_translation(t))?;
        s.resampled(n)
    };
    let ta = prep(a)?;
    let tb = prep(b)?;
    let qa = tree_forward(&ta);
    let qb = tree_forward(&tb);
    let ab = register_trees(&qa, &qb, w, opts)?;
    let ba = register_trees(&qb, &qa, w, opts)?;
    let back: HashMap<Vec<usize>, (Vec<usize>, Diffeo)> = point_correspondences(&ba.map)
        .into_iter()
        .map(|(pb, pa, g)| (pb, (pa, g)))
        .collect();
    let forward: HashMap<Vec<usize>, (Vec<usize>, Diffeo)> = point_correspondences(&ab.map)
        .into_iter()
        .map(|(pa, pb, g)| (pa, (pb, g)))
        .collect();

    let mut errors = Vec::new();
    ta.visit(&mut |path, node| {
        let branch = &node.main;
        for k in 0..branch.len() {
            let t = k as f64 / (branch.len() - 1) as f64;
            let x = branch.point_at(t);
            let err = forward
                .get(path)
                .and_then(|(pb, g)| {
                    let u = g.eval(t);
                    back.get(pb).map(|(pa, g2)| {
                        let x2 = subtree(&ta, pa).main.point_at(g2.eval(u));
                        (x - x2).norm()
                    })
                })
                .unwrap_or(f64::INFINITY);
            errors.push(err);
        }
    });
    let total = errors.len();
    let violation_percent = thresholds
        .iter()
        .map(|eps| 100.0 * errors.iter().filter(|e| **e > *eps).count() as f64 / total as f64)
        .collect();
    let finite: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
    let mean_error = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    Ok(CycleReport {
        samples: total,
        thresholds: thresholds.to_vec(),
        violation_percent,
        mean_error,
        max_error: errors.iter().copied().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treemodel::{Branch, Child, Point};

    #[test]
    fn self_cycle_is_exact() {
        let n = 30;
        let main = Branch::new(
            (0..n).map(|i| Point::new(0.0, 0.1 * (i as f64 / 5.0).sin(), i as f64 / (n - 1) as f64)).collect(),
            vec![0.02; n],
        )
        .unwrap();
        let kid = Branch::new(
            (0..n).map(|i| main.point_at(0.4) + Point::new(0.3 * i as f64 / (n - 1) as f64, 0.0, 0.05)).collect(),
            vec![0.01; n],
        )
        .unwrap();
        let t = Tree::new(main, vec![Child { s: 0.4, subtree: Tree::leaf(kid) }]).unwrap();
        let r = cycle_consistency(&t, &t, n, &MetricWeights::default(), &RegOptions::default(), &[0.01]).unwrap();
        assert_eq!(r.samples, 2 * n);
        assert_eq!(r.violation_percent, vec![0.0]);
        assert!(r.max_error < 1e-12);
    }
}
