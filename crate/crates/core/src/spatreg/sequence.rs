use super::{align, register_trees, RegOptions, RegistrationMap};
use crate::error::{Error, Result};
use crate::esrvf::{EsrvfChild, EsrvfTree};
use crate::metric::MetricWeights;

#[derive(Debug, Clone)]
pub struct SequenceRegistration {
    /// Registered frames sharing one slot structure; branches not yet born
    /// or already gone are null.
    pub frames: Vec<EsrvfTree>,
    /// `maps[i]` carries frame `i + 1` onto registered frame `i`.
    pub maps: Vec<RegistrationMap>,
    /// Residual distance of each step.
    pub distances: Vec<f64>,
}

/// Registers each frame onto its registered predecessor. New branches get
/// fresh slots appended after the existing ones, so slot labels persist
/// along the whole sequence.
pub fn register_sequence(
    frames: &[EsrvfTree],
    w: &MetricWeights,
    opts: &RegOptions,
) -> Result<SequenceRegistration> {
    if frames.is_empty() {
        return Err(Error::Argument("cannot register an empty sequence".into()));
    }
    let mut reg: Vec<EsrvfTree> = vec![frames[0].clone()];
    let mut maps = Vec::with_capacity(frames.len() - 1);
    let mut distances = Vec::with_capacity(frames.len() - 1);
    for next in &frames[1..] {
        let prev = reg.last().expect("nonempty");
        let r = register_trees(prev, next, w, opts)?;
        let (extended, aligned) = align(prev, next, &r.map)?;
        *reg.last_mut().expect("nonempty") = extended;
        reg.push(aligned);
        maps.push(r.map);
        distances.push(r.distance);
    }
    let template = reg.last().expect("nonempty").clone();
    let frames = reg
        .iter()
        .map(|f| pad_to_template(f, &template))
        .collect::<Result<Vec<_>>>()?;
    Ok(SequenceRegistration { frames, maps, distances })
}

/// Appends null slots so `t` gains every slot of `template`; existing slots
/// must be a prefix of the template's at every node.
pub fn pad_to_template(t: &EsrvfTree, template: &EsrvfTree) -> Result<EsrvfTree> {
    if t.children.len() > template.children.len() || t.main.len() != template.main.len() {
        return Err(Error::Mismatch("tree has slots missing from the template".into()));
    }
    let mut children = Vec::with_capacity(template.children.len());
    for (k, tc) in template.children.iter().enumerate() {
        match t.children.get(k) {
            Some(c) => children.push(EsrvfChild {
                s: c.s,
                subtree: pad_to_template(&c.subtree, &tc.subtree)?,
            }),
            None => children.push(EsrvfChild {
                s: tc.s,
                subtree: tc.subtree.null_like(),
            }),
        }
    }
    Ok(EsrvfTree { main: t.main.clone(), children })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esrvf::{apply_rotation, tree_forward, Rotation, Vec3};
    use crate::treemodel::{Branch, Child, Point, Tree};

    fn line(n: usize, from: Point, dir: Point, bend: f64) -> Branch {
        let pts = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                from + dir * s + Point::new(0.0, bend * s * s, 0.05 * (3.0 * s).sin())
            })
            .collect();
        Branch::new(pts, vec![0.03; n]).unwrap()
    }

    fn trunk(n: usize) -> Branch {
        line(n, Point::zeros(), Point::new(0.0, 0.0, 1.0), 0.2)
    }

    fn with_kids(n: usize, kids: &[(f64, f64)]) -> Tree {
        let main = trunk(n);
        let children = kids
            .iter()
            .map(|&(s, len)| Child {
                s,
                subtree: Tree::leaf(line(n, main.point_at(s), Point::new(len, 0.2 * len, 0.1), -0.1)),
            })
            .collect();
        Tree::new(main, children).unwrap()
    }

    #[test]
    fn constant_sequence_gives_identity_maps() {
        let q = tree_forward(&with_kids(25, &[(0.3, 0.4), (0.7, 0.3)]));
        let r = register_sequence(&[q.clone(), q.clone(), q.clone()], &MetricWeights::default(), &RegOptions::default())
            .unwrap();
        assert!(r.maps.iter().all(|m| m.root.is_identity()));
        assert!(r.distances.iter().all(|d| *d < 1e-8));
    }

    #[test]
    fn rotating_sequence_has_small_residuals() {
        let q = tree_forward(&with_kids(25, &[(0.3, 0.4), (0.7, 0.3)]));
        let step = Rotation::about_axis(&Vec3::new(0.2, 1.0, 0.1), 0.3);
        let mut frames = vec![q.clone()];
        for _ in 0..3 {
            let last = frames.last().unwrap().clone();
            frames.push(apply_rotation(&last, &step));
        }
        let r = register_sequence(&frames, &MetricWeights::default(), &RegOptions::default()).unwrap();
        assert!(r.distances.iter().all(|d| *d < 1e-6), "{:?}", r.distances);
    }

    #[test]
    fn born_branch_is_null_before_birth() {
        let before = tree_forward(&with_kids(25, &[(0.3, 0.4)]));
        let after = tree_forward(&with_kids(25, &[(0.3, 0.4), (0.7, 0.3)]));
        let frames = vec![before.clone(), before, after.clone(), after];
        let r = register_sequence(&frames, &MetricWeights::default(), &RegOptions::default()).unwrap();
        for f in &r.frames {
            assert_eq!(f.children.len(), 2);
        }
        assert!(r.frames[0].children[1].subtree.is_null());
        assert!(r.frames[1].children[1].subtree.is_null());
        assert!(!r.frames[2].children[1].subtree.is_null());
        assert!(!r.frames[3].children[1].subtree.is_null());
    }

    #[test]
    fn empty_sequence_is_an_error() {
        assert!(register_sequence(&[], &MetricWeights::default(), &RegOptions::default()).is_err());
    }
}
