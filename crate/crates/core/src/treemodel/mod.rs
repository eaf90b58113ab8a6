//! Layered tree model: sampled skeleton+radius branches, recursive trees with
//! bifurcation parameters, and time-indexed sequences of trees.

pub(crate) mod io;
mod mesh;

pub use io::{
    parse_sequence, parse_tree, parse_tree_document, serialize_sequence, serialize_tree,
    serialize_tree_with, SEQ_FORMAT, TREE_FORMAT,
};
pub use mesh::export_mesh;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Default number of samples per branch.
pub const DEFAULT_SAMPLES: usize = 100;
/// Default maximum number of layers in a tree.
pub const DEFAULT_MAX_DEPTH: usize = 6;

/// A sampled branch: skeleton points with a radius at each point, implicitly
/// parameterized uniformly over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    points: Vec<Point>,
    radii: Vec<f64>,
}

impl Branch {
    pub fn new(points: Vec<Point>, radii: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid(
                "samples",
                format!("a branch needs at least 2 samples, got {}", points.len()),
            ));
        }
        if points.len() != radii.len() {
            return Err(Error::Mismatch(format!(
                "{} points but {} radii",
                points.len(),
                radii.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("samples[{i}]"), "non-finite coordinate"));
        }
        if let Some(i) = radii.iter().position(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::invalid(
                format!("samples[{i}]"),
                format!("radius must be finite and >= 0, got {}", radii[i]),
            ));
        }
        Ok(Branch { points, radii })
    }

    /// A zero-length branch sitting at `at` with zero radius.
    pub fn degenerate(at: Point, n: usize) -> Self {
        Branch {
            points: vec![at; n.max(2)],
            radii: vec![0.0; n.max(2)],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn start(&self) -> Point {
        self.points[0]
    }

    pub fn end(&self) -> Point {
        self.points[self.points.len() - 1]
    }

    /// Polyline arc length.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Skeleton point at parameter `s`, linear between uniform samples.
    pub fn point_at(&self, s: f64) -> Point {
        let (i, t) = locate(s, self.points.len());
        if t == 0.0 {
            self.points[i]
        } else {
            self.points[i] * (1.0 - t) + self.points[i + 1] * t
        }
    }

    pub fn radius_at(&self, s: f64) -> f64 {
        let (i, t) = locate(s, self.radii.len());
        if t == 0.0 {
            self.radii[i]
        } else {
            self.radii[i] * (1.0 - t) + self.radii[i + 1] * t
        }
    }

    pub fn translated(&self, by: &Point) -> Branch {
        Branch {
            points: self.points.iter().map(|p| p + by).collect(),
            radii: self.radii.clone(),
        }
    }

    /// Scales coordinates about the origin and radii by the same factor.
    pub fn scaled(&self, factor: f64) -> Branch {
        Branch {
            points: self.points.iter().map(|p| p * factor).collect(),
            radii: self.radii.iter().map(|r| r * factor).collect(),
        }
    }

    /// True for zero-length, zero-radius branches ("null" placeholders).
    pub fn is_null(&self) -> bool {
        let p0 = self.points[0];
        self.radii.iter().all(|r| *r == 0.0) && self.points.iter().all(|p| *p == p0)
    }
}

/// Maps `s` in `[0,1]` to a segment index and fractional offset on an
/// `n`-sample uniform grid.
pub(crate) fn locate(s: f64, n: usize) -> (usize, f64) {
    let x = s.clamp(0.0, 1.0) * (n - 1) as f64;
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        let k = nearest as usize;
        return if k >= n - 1 { (n - 2, 1.0) } else { (k, 0.0) };
    }
    let i = (x.floor() as usize).min(n - 2);
    let t = x - i as f64;
    if t <= 0.0 {
        (i, 0.0)
    } else {
        (i, t.min(1.0))
    }
}

/// Resamples a branch to `n` samples spaced uniformly in arc length; radii
/// are interpolated linearly at the same parameters and endpoints are kept
/// exactly. A zero-length branch yields `n` copies of its point.
pub fn resample_branch(b: &Branch, n: usize) -> Result<Branch> {
    if n < 2 {
        return Err(Error::Argument(format!("sample count must be >= 2, got {n}")));
    }
    let m = b.len();
    let mut cum = Vec::with_capacity(m);
    cum.push(0.0);
    for w in b.points.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + (w[1] - w[0]).norm());
    }
    let total = cum[m - 1];
    if total <= 0.0 {
        let radii = (0..n)
            .map(|k| b.radius_at(k as f64 / (n - 1) as f64))
            .collect();
        return Ok(Branch {
            points: vec![b.points[0]; n],
            radii,
        });
    }
    let mut points = Vec::with_capacity(n);
    let mut radii = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        if k == 0 {
            points.push(b.points[0]);
            radii.push(b.radii[0]);
            continue;
        }
        if k == n - 1 {
            points.push(b.points[m - 1]);
            radii.push(b.radii[m - 1]);
            continue;
        }
        let target = total * k as f64 / (n - 1) as f64;
        while seg + 1 < m - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 {
            ((target - cum[seg]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        points.push(b.points[seg] * (1.0 - t) + b.points[seg + 1] * t);
        radii.push(b.radii[seg] * (1.0 - t) + b.radii[seg + 1] * t);
    }
    Ok(Branch { points, radii })
}

/// A subtree attached to its parent's main branch at parameter `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Child {
    pub s: f64,
    pub subtree: Tree,
}

/// Recursive layered tree: a main branch plus subtrees attached along it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub main: Branch,
    pub children: Vec<Child>,
}

impl Tree {
    /// Builds a tree, checking bifurcation parameters and putting children
    /// in canonical order.
    pub fn new(main: Branch, children: Vec<Child>) -> Result<Self> {
        for (i, c) in children.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.s) {
                return Err(Error::invalid(
                    format!("children[{i}].s"),
                    format!("bifurcation parameter {} outside [0, 1]", c.s),
                ));
            }
        }
        let mut t = Tree { main, children };
        t.canonicalize();
        Ok(t)
    }

    pub fn leaf(main: Branch) -> Self {
        Tree {
            main,
            children: Vec::new(),
        }
    }

    /// Orders children by `s` ascending, ties by main-branch length
    /// descending.
    pub fn canonicalize(&mut self) {
        self.children.sort_by(|a, b| {
            a.s.total_cmp(&b.s).then_with(|| {
                b.subtree
                    .main
                    .length()
                    .total_cmp(&a.subtree.main.length())
            })
        });
    }

    /// Number of layers (a single branch has depth 1).
    pub fn depth(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| c.subtree.depth())
            .max()
            .unwrap_or(0)
    }

    pub fn branch_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| c.subtree.branch_count())
            .sum::<usize>()
    }

    pub fn total_length(&self) -> f64 {
        self.main.length()
            + self
                .children
                .iter()
                .map(|c| c.subtree.total_length())
                .sum::<f64>()
    }

    pub fn validate_depth(&self, max_depth: usize) -> Result<()> {
        let d = self.depth();
        if d > max_depth {
            return Err(Error::invalid(
                "root",
                format!("tree depth {d} exceeds the maximum of {max_depth}"),
            ));
        }
        Ok(())
    }

    /// Depth-first visit of every branch with its child-index path.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&[usize], &'a Tree)) {
        fn go<'a>(t: &'a Tree, path: &mut Vec<usize>, f: &mut impl FnMut(&[usize], &'a Tree)) {
            f(path, t);
            for (i, c) in t.children.iter().enumerate() {
                path.push(i);
                go(&c.subtree, path, f);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f);
    }

    /// Applies `f` to every branch, keeping structure and `s` values.
    pub fn map_branches(&self, f: &impl Fn(&Branch) -> Branch) -> Tree {
        Tree {
            main: f(&self.main),
            children: self
                .children
                .iter()
                .map(|c| Child {
                    s: c.s,
                    subtree: c.subtree.map_branches(f),
                })
                .collect(),
        }
    }

    pub fn translated(&self, by: &Point) -> Tree {
        self.map_branches(&|b| b.translated(by))
    }

    pub fn scaled(&self, factor: f64) -> Tree {
        self.map_branches(&|b| b.scaled(factor))
    }

    pub fn resampled(&self, n: usize) -> Result<Tree> {
        let children = self
            .children
            .iter()
            .map(|c| {
                Ok(Child {
                    s: c.s,
                    subtree: c.subtree.resampled(n)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Tree {
            main: resample_branch(&self.main, n)?,
            children,
        })
    }

    /// Drops null placeholder subtrees (zero length and radius throughout).
    pub fn pruned(&self) -> Tree {
        Tree {
            main: self.main.clone(),
            children: self
                .children
                .iter()
                .filter(|c| !c.subtree.is_null())
                .map(|c| Child {
                    s: c.s,
                    subtree: c.subtree.pruned(),
                })
                .collect(),
        }
    }

    pub fn is_null(&self) -> bool {
        self.main.is_null() && self.children.iter().all(|c| c.subtree.is_null())
    }
}

/// Moves the tree so the first sample of the main branch sits at the origin.
pub fn normalize_translation(t: &Tree) -> Tree {
    let shift = -t.main.start();
    if shift == Point::zeros() {
        return t.clone();
    }
    t.translated(&shift)
}

/// Scales the tree about the origin so its total skeleton length is 1.
/// Returns the applied factor.
pub fn normalize_scale(t: &Tree) -> Result<(Tree, f64)> {
    let total = t.total_length();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Degenerate(
            "cannot scale-normalize a tree of zero total length".into(),
        ));
    }
    let factor = 1.0 / total;
    if factor == 1.0 {
        return Ok((t.clone(), 1.0));
    }
    Ok((t.scaled(factor), factor))
}

/// A time-indexed sequence of trees.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree4D {
    times: Vec<f64>,
    frames: Vec<Tree>,
}

impl Tree4D {
    /// Builds a sequence from strictly increasing timestamps, rescaling them
    /// onto `[0, 1]`.
    pub fn new(times: Vec<f64>, frames: Vec<Tree>) -> Result<Self> {
        if times.len() != frames.len() {
            return Err(Error::Mismatch(format!(
                "{} timestamps for {} frames",
                times.len(),
                frames.len()
            )));
        }
        if frames.len() < 2 {
            return Err(Error::invalid("frames", "a 4D tree needs at least 2 frames"));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite() {
                return Err(Error::invalid(
                    format!("times[{}]", i + 1),
                    "timestamps must be finite and strictly increasing",
                ));
            }
        }
        let t0 = times[0];
        let span = times[times.len() - 1] - t0;
        let last = times.len() - 1;
        let times = times
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if i == 0 {
                    0.0
                } else if i == last {
                    1.0
                } else {
                    (t - t0) / span
                }
            })
            .collect();
        Ok(Tree4D { times, frames })
    }

    /// Frames at uniformly spaced times on `[0, 1]`.
    pub fn uniform(frames: Vec<Tree>) -> Result<Self> {
        let n = frames.len();
        let times = (0..n).map(|i| i as f64 / (n.max(2) - 1) as f64).collect();
        Tree4D::new(times, frames)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[Tree] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn map_frames(&self, f: impl Fn(&Tree) -> Result<Tree>) -> Result<Tree4D> {
        Ok(Tree4D {
            times: self.times.clone(),
            frames: self.frames.iter().map(f).collect::<Result<_>>()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, len: f64) -> Branch {
        let pts = (0..n)
            .map(|i| Point::new(len * i as f64 / (n - 1) as f64, 0.0, 0.0))
            .collect();
        Branch::new(pts, vec![0.1; n]).unwrap()
    }

    fn max_point_gap(a: &Tree, b: &Tree) -> f64 {
        let mut gap: f64 = 0.0;
        let mut pts_b = Vec::new();
        b.visit(&mut |_, n| pts_b.extend(n.main.points().iter().copied()));
        let mut k = 0;
        a.visit(&mut |_, n| {
            for p in n.main.points() {
                gap = gap.max((p - pts_b[k]).norm());
                k += 1;
            }
        });
        gap
    }

    #[test]
    fn branch_rejects_bad_input() {
        assert!(Branch::new(vec![Point::zeros()], vec![0.0]).is_err());
        assert!(Branch::new(vec![Point::zeros(); 2], vec![0.0, -1.0]).is_err());
        assert!(Branch::new(vec![Point::zeros(); 2], vec![0.0]).is_err());
    }

    #[test]
    fn resample_straight_segment() {
        let b = Branch::new(
            vec![Point::zeros(), Point::new(1.0, 0.0, 0.0)],
            vec![0.2, 0.2],
        )
        .unwrap();
        let r = resample_branch(&b, 5).unwrap();
        let xs: Vec<f64> = r.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn resample_uniform_is_identity() {
        let b = line(11, 2.0);
        let r = resample_branch(&b, 11).unwrap();
        for (p, q) in b.points().iter().zip(r.points()) {
            assert!((p - q).norm() < 1e-15);
        }
        assert_eq!(b.radii(), r.radii());
    }

    #[test]
    fn resample_nonuniform_spacing_becomes_uniform() {
        let xs = [0.0, 0.05, 0.1, 0.7, 0.71, 1.3, 2.0];
        let pts: Vec<Point> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| Point::new(x, (i as f64 * 0.3).sin(), 0.0))
            .collect();
        let b = Branch::new(pts, vec![0.1; xs.len()]).unwrap();
        let n = 37;
        let r = resample_branch(&b, n).unwrap();
        // Arc length of the output measured along the input polyline.
        let cum = |p: &Point| -> f64 {
            let mut acc = 0.0;
            for w in b.points().windows(2) {
                let seg = w[1] - w[0];
                let t = (p - w[0]).dot(&seg) / seg.norm_squared();
                let proj = w[0] + seg * t.clamp(0.0, 1.0);
                if (proj - p).norm() < 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&t) {
                    return acc + seg.norm() * t.clamp(0.0, 1.0);
                }
                acc += seg.norm();
            }
            panic!("point not on polyline");
        };
        let step = b.length() / (n - 1) as f64;
        for (k, p) in r.points().iter().enumerate() {
            assert!((cum(p) - step * k as f64).abs() < 1e-9, "sample {k}");
        }
        assert_eq!(r.start(), b.start());
        assert_eq!(r.end(), b.end());
    }

    #[test]
    fn resample_zero_length_branch() {
        let p = Point::new(1.0, 2.0, 3.0);
        let b = Branch::new(vec![p; 3], vec![0.3, 0.3, 0.3]).unwrap();
        let r = resample_branch(&b, 6).unwrap();
        assert_eq!(r.len(), 6);
        assert!(r.points().iter().all(|q| *q == p));
        assert!(r.radii().iter().all(|x| (*x - 0.3).abs() < 1e-15));
    }

    #[test]
    fn children_canonical_order() {
        let short = Tree::leaf(line(3, 1.0));
        let long = Tree::leaf(line(3, 2.0));
        let t = Tree::new(
            line(3, 5.0),
            vec![
                Child { s: 0.7, subtree: short.clone() },
                Child { s: 0.2, subtree: short.clone() },
                Child { s: 0.7, subtree: long.clone() },
            ],
        )
        .unwrap();
        let order: Vec<(f64, f64)> = t
            .children
            .iter()
            .map(|c| (c.s, c.subtree.main.length()))
            .collect();
        assert_eq!(order, vec![(0.2, 1.0), (0.7, 2.0), (0.7, 1.0)]);
    }

    #[test]
    fn normalize_scale_factor() {
        let t = Tree::leaf(line(5, 4.0));
        let (n, f) = normalize_scale(&t).unwrap();
        assert_eq!(f, 0.25);
        assert!((n.total_length() - 1.0).abs() < 1e-15);
        assert!((n.main.radii()[0] - 0.025).abs() < 1e-15);
        let (u, f1) = normalize_scale(&n).unwrap();
        assert_eq!(f1, 1.0);
        assert_eq!(u, n);
        let zero = Tree::leaf(Branch::degenerate(Point::zeros(), 4));
        assert!(normalize_scale(&zero).is_err());
    }

    #[test]
    fn normalize_translation_shifts_everything() {
        let base = Tree::new(
            line(4, 2.0),
            vec![Child { s: 0.5, subtree: Tree::leaf(line(4, 1.0)) }],
        )
        .unwrap();
        let shifted = base.translated(&Point::new(5.0, -2.0, 3.0));
        let a = normalize_translation(&shifted);
        assert_eq!(a.main.start(), Point::zeros());
        assert!(max_point_gap(&a, &base) < 1e-14);
        assert_eq!(normalize_translation(&base), base);
        let twice = normalize_translation(&a);
        assert_eq!(twice, a);
    }

    #[test]
    fn sequence_times_are_normalized() {
        let f = Tree::leaf(line(3, 1.0));
        let h = Tree4D::new(vec![2.0, 3.0, 6.0], vec![f.clone(), f.clone(), f.clone()]).unwrap();
        assert_eq!(h.times(), &[0.0, 0.25, 1.0]);
        assert!(Tree4D::new(vec![0.0, 0.0], vec![f.clone(), f.clone()]).is_err());
        assert!(Tree4D::new(vec![0.0], vec![f]).is_err());
    }
}
