//! Extended square-root velocity representation of branches and trees.
//!
//! A branch `β = (f, r)` maps to `(f'/√‖f'‖, r)` sampled on the same uniform
//! grid as the branch. The discrete velocity is chosen so that trapezoidal
//! integration of `v‖v‖` reproduces the sampled skeleton exactly, which makes
//! `inverse ∘ forward` the identity up to rounding.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::treemodel::{Branch, Child, Point, Tree};
use crate::warp::{interpolate_cubic, Diffeo};

pub type Vec3 = Vector3<f64>;

/// Velocity magnitudes below this are treated as zero.
pub const ZERO_SPEED: f64 = 1e-12;

/// ESRVF of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct EsrvfBranch {
    pub v: Vec<Vec3>,
    pub rad: Vec<f64>,
    /// Start point of the skeleton, kept for exact inversion.
    pub origin: Point,
}

impl EsrvfBranch {
    pub fn new(v: Vec<Vec3>, rad: Vec<f64>, origin: Point) -> Result<Self> {
        if v.len() < 2 || v.len() != rad.len() {
            return Err(Error::Mismatch(format!(
                "ESRVF needs matching sample counts >= 2 (v: {}, rad: {})",
                v.len(),
                rad.len()
            )));
        }
        if rad.iter().any(|r| *r < 0.0) {
            return Err(Error::invalid("rad", "negative radius"));
        }
        Ok(EsrvfBranch { v, rad, origin })
    }

    /// The zero element: no velocity, no thickness.
    pub fn zero(n: usize, origin: Point) -> Self {
        EsrvfBranch {
            v: vec![Vec3::zeros(); n],
            rad: vec![0.0; n],
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.v.iter().all(|x| *x == Vec3::zeros()) && self.rad.iter().all(|r| *r == 0.0)
    }

    /// Skeleton length encoded by the velocity field, `∫‖v‖²`.
    pub fn length(&self) -> f64 {
        trapezoid(&self.v.iter().map(|x| x.norm_squared()).collect::<Vec<_>>())
    }
}

/// Trapezoidal integral over `[0,1]` of uniformly sampled values.
pub fn trapezoid(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let h = 1.0 / (n - 1) as f64;
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Trapezoidal quadrature weights on an `n`-sample grid.
pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect()
}

/// Second-order finite-difference derivative on the uniform grid: central
/// in the interior, one-sided at the ends.
fn central_derivative(p: &[Point]) -> Vec<Vec3> {
    let n = p.len();
    let h = 1.0 / (n - 1) as f64;
    if n == 2 {
        let d = (p[1] - p[0]) / h;
        return vec![d, d];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                (p[0] * -3.0 + p[1] * 4.0 - p[2]) / (2.0 * h)
            } else if i == n - 1 {
                (p[n - 1] * 3.0 - p[n - 2] * 4.0 + p[n - 3]) / (2.0 * h)
            } else {
                (p[i + 1] - p[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Velocity samples `g` whose trapezoidal integral reproduces `p` exactly
/// and which are closest (least squares) to the central-difference
/// derivative. The constraint set is `particular + c·(-1)^i`, so the
/// projection has a closed form per coordinate.
fn consistent_derivative(p: &[Point]) -> Vec<Vec3> {
    let n = p.len();
    let h = 1.0 / (n - 1) as f64;
    let d = central_derivative(p);
    let mut g = Vec::with_capacity(n);
    g.push(d[0]);
    for i in 0..n - 1 {
        let next = (p[i + 1] - p[i]) * (2.0 / h) - g[i];
        g.push(next);
    }
    let mut c = Vec3::zeros();
    for i in 0..n {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        c -= (g[i] - d[i]) * sign;
    }
    c /= n as f64;
    for (i, gi) in g.iter_mut().enumerate() {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        *gi += c * sign;
    }
    g
}

fn to_srv(g: &Vec3) -> Vec3 {
    let speed = g.norm();
    if speed < ZERO_SPEED {
        Vec3::zeros()
    } else {
        g / speed.sqrt()
    }
}

pub fn esrvf_forward(b: &Branch) -> EsrvfBranch {
    let g = consistent_derivative(b.points());
    EsrvfBranch {
        v: g.iter().map(to_srv).collect(),
        rad: b.radii().to_vec(),
        origin: b.start(),
    }
}

/// Integrates `v‖v‖` from the stored origin by the trapezoidal rule.
pub fn esrvf_inverse(q: &EsrvfBranch) -> Branch {
    let n = q.v.len();
    let h = 1.0 / (n - 1) as f64;
    let vel: Vec<Vec3> = q.v.iter().map(|x| x * x.norm()).collect();
    let mut pts = Vec::with_capacity(n);
    pts.push(q.origin);
    for i in 0..n - 1 {
        let next = pts[i] + (vel[i] + vel[i + 1]) * (0.5 * h);
        pts.push(next);
    }
    let radii = q.rad.iter().map(|r| r.max(0.0)).collect();
    Branch::new(pts, radii).expect("inverse of a valid ESRVF is a valid branch")
}

/// A subtree in ESRVF form attached at parameter `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct EsrvfChild {
    pub s: f64,
    pub subtree: EsrvfTree,
}

/// ESRVF image of a tree. Child order is slot order and is not re-sorted,
/// so registered trees can share a labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct EsrvfTree {
    pub main: EsrvfBranch,
    pub children: Vec<EsrvfChild>,
}

impl EsrvfTree {
    pub fn leaf(main: EsrvfBranch) -> Self {
        EsrvfTree {
            main,
            children: Vec::new(),
        }
    }

    pub fn branch_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| c.subtree.branch_count())
            .sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| c.subtree.depth())
            .max()
            .unwrap_or(0)
    }

    /// A same-shaped tree of zero branches; `s` values are kept so a null
    /// placeholder has no internal sliding cost.
    pub fn null_like(&self) -> EsrvfTree {
        EsrvfTree {
            main: EsrvfBranch::zero(self.main.len(), self.main.origin),
            children: self
                .children
                .iter()
                .map(|c| EsrvfChild {
                    s: c.s,
                    subtree: c.subtree.null_like(),
                })
                .collect(),
        }
    }

    pub fn is_null(&self) -> bool {
        self.main.is_zero() && self.children.iter().all(|c| c.subtree.is_null())
    }

    pub fn map_branches(&self, f: &impl Fn(&EsrvfBranch) -> EsrvfBranch) -> EsrvfTree {
        EsrvfTree {
            main: f(&self.main),
            children: self
                .children
                .iter()
                .map(|c| EsrvfChild {
                    s: c.s,
                    subtree: c.subtree.map_branches(f),
                })
                .collect(),
        }
    }

    /// True when both trees have the same slot structure and sample counts.
    pub fn same_topology(&self, other: &EsrvfTree) -> bool {
        self.main.len() == other.main.len()
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.subtree.same_topology(&b.subtree))
    }
}

pub fn tree_forward(t: &Tree) -> EsrvfTree {
    EsrvfTree {
        main: esrvf_forward(&t.main),
        children: t
            .children
            .iter()
            .map(|c| EsrvfChild {
                s: c.s,
                subtree: tree_forward(&c.subtree),
            })
            .collect(),
    }
}

/// Inverts every branch; each child is re-attached at its parent's
/// reconstructed skeleton point at `s`, overriding the stored child origin.
pub fn tree_inverse(q: &EsrvfTree) -> Tree {
    invert_at(q, q.main.origin)
}

fn invert_at(q: &EsrvfTree, origin: Point) -> Tree {
    let mut main_q = q.main.clone();
    main_q.origin = origin;
    let main = esrvf_inverse(&main_q);
    let children = q
        .children
        .iter()
        .map(|c| Child {
            s: c.s.clamp(0.0, 1.0),
            subtree: invert_at(&c.subtree, main.point_at(c.s)),
        })
        .collect();
    let mut t = Tree { main, children };
    t.canonicalize();
    t
}

/// A proper rotation of 3-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if !(err <= Self::TOLERANCE) {
            return Err(Error::Argument(format!(
                "matrix is not orthogonal (deviation {err:e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::Argument(format!(
                "rotation must have determinant +1, got {det}"
            )));
        }
        Ok(Rotation(m))
    }

    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn about_axis(axis: &Vec3, angle: f64) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Rotation(*r.matrix())
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn then(&self, after: &Rotation) -> Rotation {
        Rotation(after.0 * self.0)
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.0 * x
    }
}

pub fn rotate_branch(q: &EsrvfBranch, o: &Rotation) -> EsrvfBranch {
    EsrvfBranch {
        v: q.v.iter().map(|x| o.apply(x)).collect(),
        rad: q.rad.clone(),
        origin: o.apply(&q.origin),
    }
}

pub fn apply_rotation(q: &EsrvfTree, o: &Rotation) -> EsrvfTree {
    q.map_branches(&|b| rotate_branch(b, o))
}

/// Validating variant taking a raw matrix.
pub fn apply_rotation_matrix(q: &EsrvfTree, m: &Matrix3<f64>) -> Result<EsrvfTree> {
    Ok(apply_rotation(q, &Rotation::new(*m)?))
}

/// Reparameterizes a branch: `v ↦ (v∘γ)·√γ'`, `rad ↦ rad∘γ`, resampled on
/// the branch's own uniform grid with four-point cubic interpolation.
pub fn apply_reparam(q: &EsrvfBranch, g: &Diffeo) -> EsrvfBranch {
    if g.is_identity() {
        return q.clone();
    }
    let n = q.len();
    let mut v = Vec::with_capacity(n);
    let mut rad = Vec::with_capacity(n);
    for i in 0..n {
        let s = i as f64 / (n - 1) as f64;
        let x = g.eval(s);
        let scale = g.derivative(s).max(0.0).sqrt();
        v.push(interpolate_cubic(&q.v, x) * scale);
        rad.push(interpolate_cubic(&q.rad, x).max(0.0));
    }
    EsrvfBranch {
        v,
        rad,
        origin: q.origin,
    }
}
