//! Seeded synthetic trees, growth sequences and random time warps.
//!
//! Every generator draws from a single `ChaCha20Rng` seeded with
//! `seed_from_u64`. Trees consume the stream depth first: per branch the
//! length, radius, four curvature coefficients, two direction angles and a
//! bending angle, then the child count, then for each child its `s` followed
//! by the child's own draws.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esrvf::Rotation;
use crate::treemodel::{Branch, Child, Point, Tree, Tree4D, DEFAULT_MAX_DEPTH};
use crate::warp::Diffeo;

pub const SPEC_FORMAT: &str = "arbor4d-spec/1";

/// A branch that only appears from `frame` on. `path` lists child indices
/// from the root in generation order (before canonical `s` ordering).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Birth {
    pub path: Vec<usize>,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowthSpec {
    pub format: String,
    pub depth: usize,
    pub children_min: usize,
    pub children_max: usize,
    pub length_min: f64,
    pub length_max: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Amplitude of the cubic perturbation, relative to branch length.
    pub curvature: f64,
    pub frames: usize,
    /// Frame `f` of `F` is scaled by `((f + 1) / F)^growth_exponent`.
    pub growth_exponent: f64,
    /// Largest bending angle (radians), reached in the first frame and
    /// fading out as the tree reaches full size.
    pub bending: f64,
    pub births: Vec<Birth>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for GrowthSpec {
    fn default() -> Self {
        GrowthSpec {
            format: SPEC_FORMAT.into(),
            depth: 3,
            children_min: 2,
            children_max: 3,
            length_min: 0.8,
            length_max: 1.2,
            radius_min: 0.02,
            radius_max: 0.05,
            curvature: 0.15,
            frames: 10,
            growth_exponent: 1.0,
            bending: 0.3,
            births: Vec::new(),
            samples: 100,
            seed: 0,
        }
    }
}

impl GrowthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.format != SPEC_FORMAT {
            return Err(Error::Format {
                expected: SPEC_FORMAT.into(),
                found: self.format.clone(),
            });
        }
        if self.depth == 0 || self.depth > DEFAULT_MAX_DEPTH {
            return Err(Error::invalid("depth", format!("must be in 1..={DEFAULT_MAX_DEPTH}, got {}", self.depth)));
        }
        if self.children_min == 0 || self.children_max < self.children_min {
            return Err(Error::invalid("children_min", "child range must be positive and ordered"));
        }
        let ranges = [
            ("length_min", self.length_min, self.length_max),
            ("radius_min", self.radius_min, self.radius_max),
        ];
        for (name, lo, hi) in ranges {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::invalid(name, format!("range [{lo}, {hi}] must be positive and ordered")));
            }
        }
        for (name, v) in [("curvature", self.curvature), ("growth_exponent", self.growth_exponent), ("bending", self.bending)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.samples < 2 {
            return Err(Error::invalid("samples", "at least 2 samples per branch"));
        }
        for (i, b) in self.births.iter().enumerate() {
            if b.path.is_empty() {
                return Err(Error::invalid(format!("births[{i}].path"), "the root cannot be born later"));
            }
        }
        Ok(())
    }
}

pub fn parse_spec(bytes: &[u8]) -> Result<GrowthSpec> {
    crate::treemodel::io::check_format(bytes, SPEC_FORMAT)?;
    let spec: GrowthSpec = serde_json::from_slice(bytes)?;
    spec.validate()?;
    Ok(spec)
}

pub fn serialize_spec(spec: &GrowthSpec) -> Vec<u8> {
    serde_json::to_vec_pretty(spec).expect("spec serializes")
}

/// Random parameters of one branch and its descendants.
struct Blueprint {
    dir: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    length: f64,
    radius: f64,
    coef: [f64; 4],
    bend: f64,
    birth: usize,
    children: Vec<(f64, Blueprint)>,
}

fn frame_for(dir: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if dir.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = dir.cross(&helper).normalize();
    let e2 = dir.cross(&e1);
    (e1, e2)
}

fn draw(
    spec: &GrowthSpec,
    rng: &mut ChaCha20Rng,
    level: usize,
    parent: Option<&Vector3<f64>>,
    path: &mut Vec<usize>,
) -> Blueprint {
    let shrink = 0.6f64.powi(level as i32);
    let length = rng.random_range(spec.length_min..=spec.length_max) * shrink;
    let radius = rng.random_range(spec.radius_min..=spec.radius_max) * 0.5f64.powi(level as i32);
    let mut coef = [0.0; 4];
    for c in &mut coef {
        *c = spec.curvature * rng.random_range(-1.0..=1.0);
    }
    let tilt: f64 = rng.random_range(0.5..=1.1);
    let spin: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let bend = spec.bending * rng.random_range(-1.0..=1.0);
    let dir = match parent {
        None => Vector3::z(),
        Some(p) => {
            let (a, b) = frame_for(p);
            (p * tilt.cos() + (a * spin.cos() + b * spin.sin()) * tilt.sin()).normalize()
        }
    };
    let (e1, e2) = frame_for(&dir);
    let birth = spec
        .births
        .iter()
        .filter(|b| b.path == *path)
        .map(|b| b.frame)
        .max()
        .unwrap_or(0);
    let mut children = Vec::new();
    if level + 1 < spec.depth {
        let count = rng.random_range(spec.children_min..=spec.children_max);
        for i in 0..count {
            let s = rng.random_range(0.1..=0.9);
            path.push(i);
            children.push((s, draw(spec, rng, level + 1, Some(&dir), path)));
            path.pop();
        }
    }
    Blueprint { dir, e1, e2, length, radius, coef, bend, birth, children }
}

fn blueprint(spec: &GrowthSpec, seed: u64) -> Result<Blueprint> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(draw(spec, &mut rng, 0, None, &mut Vec::new()))
}

/// Realizes a blueprint at growth `factor` in frame `frame`.
fn realize(bp: &Blueprint, start: Point, factor: f64, frame: usize, n: usize) -> Result<Tree> {
    let bend = Rotation::about_axis(&bp.e1, bp.bend * (1.0 - factor));
    let (dir, e1, e2) = (bend.apply(&bp.dir), bend.apply(&bp.e1), bend.apply(&bp.e2));
    let len = bp.length * factor;
    let [a, b, c, d] = bp.coef;
    let mut points = Vec::with_capacity(n);
    let mut radii = Vec::with_capacity(n);
    for i in 0..n {
        let u = i as f64 / (n - 1) as f64;
        let offset = dir * u + e1 * (a * u * u + b * u * u * u) + e2 * (c * u * u + d * u * u * u);
        points.push(start + offset * len);
        radii.push(bp.radius * factor * (1.0 - 0.7 * u));
    }
    let main = Branch::new(points, radii)?;
    let children = bp
        .children
        .iter()
        .filter(|(_, child)| child.birth <= frame)
        .map(|(s, child)| {
            Ok(Child {
                s: *s,
                subtree: realize(child, main.point_at(*s), factor, frame, n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Tree::new(main, children)
}

/// A full-grown tree: smooth cubic-perturbed branches, radii tapering
/// linearly toward the tip, children at uniform random `s`.
pub fn gen_tree(spec: &GrowthSpec, seed: u64) -> Result<Tree> {
    let bp = blueprint(spec, seed)?;
    realize(&bp, Point::zeros(), 1.0, usize::MAX, spec.samples)
}

/// A growth sequence sharing one blueprint: sizes scale monotonically,
/// branches bend back toward their final pose, scheduled births appear.
pub fn gen_tree4d(spec: &GrowthSpec, seed: u64) -> Result<Tree4D> {
    if spec.frames < 2 {
        return Err(Error::invalid("frames", "a sequence needs at least 2 frames"));
    }
    let bp = blueprint(spec, seed)?;
    let f = spec.frames;
    let frames = (0..f)
        .into_par_iter()
        .map(|i| {
            let factor = ((i + 1) as f64 / f as f64).powf(spec.growth_exponent);
            realize(&bp, Point::zeros(), factor, i, spec.samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Tree4D::uniform(frames)
}

/// Random time warp on `knots` knots: the normalized cumulative sum of
/// increments `(1 - roughness) + roughness * Exp(1)`.
pub fn random_diffeo(seed: u64, roughness: f64, knots: usize) -> Result<Diffeo> {
    if !(0.0..=1.0).contains(&roughness) {
        return Err(Error::Argument(format!("roughness must be in [0, 1], got {roughness}")));
    }
    if knots < 2 {
        return Err(Error::Argument(format!("a warp needs at least 2 knots, got {knots}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(knots);
    values.push(0.0);
    let mut acc = 0.0;
    for _ in 1..knots {
        let e: f64 = Exp1.sample(&mut rng);
        acc += (1.0 - roughness) + roughness * e;
        values.push(acc);
    }
    let last = knots - 1;
    for (i, v) in values.iter_mut().enumerate() {
        *v = if i == last { 1.0 } else { *v / acc };
    }
    Diffeo::from_values(values)
}

fn lerp_branch(a: &Branch, b: &Branch, w: f64) -> Result<Branch> {
    let b = if b.len() == a.len() { b.clone() } else { crate::treemodel::resample_branch(b, a.len())? };
    let points = a.points().iter().zip(b.points()).map(|(p, q)| p * (1.0 - w) + q * w).collect();
    let radii = a.radii().iter().zip(b.radii()).map(|(p, q)| p * (1.0 - w) + q * w).collect();
    Branch::new(points, radii)
}

/// Blend of two frames. Children are paired by nearest `s`; a child
/// without partner in `b` is kept as is, one only in `b` is left out.
fn lerp_tree(a: &Tree, b: &Tree, w: f64) -> Result<Tree> {
    let main = lerp_branch(&a.main, &b.main, w)?;
    let mut used = vec![false; b.children.len()];
    let mut children = Vec::with_capacity(a.children.len());
    for c in &a.children {
        let partner = b
            .children
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .min_by(|x, y| (x.1.s - c.s).abs().total_cmp(&(y.1.s - c.s).abs()))
            .filter(|(_, o)| (o.s - c.s).abs() < 0.05);
        let child = match partner {
            Some((j, o)) => {
                used[j] = true;
                Child { s: c.s * (1.0 - w) + o.s * w, subtree: lerp_tree(&c.subtree, &o.subtree, w)? }
            }
            None => c.clone(),
        };
        children.push(child);
    }
    Tree::new(main, children)
}

/// Resamples `h` at `γ(t_i)` of a uniform grid with as many frames as `h`,
/// interpolating linearly between the bracketing frames.
pub fn warp_tree4d(h: &Tree4D, g: &Diffeo) -> Result<Tree4D> {
    let n = h.len();
    let times = h.times();
    let frames = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = g.eval(i as f64 / (n - 1) as f64);
            let j = times.partition_point(|t| *t <= x).clamp(1, n - 1) - 1;
            let w = ((x - times[j]) / (times[j + 1] - times[j])).clamp(0.0, 1.0);
            if w == 0.0 {
                Ok(h.frames()[j].clone())
            } else if w == 1.0 {
                Ok(h.frames()[j + 1].clone())
            } else {
                lerp_tree(&h.frames()[j], &h.frames()[j + 1], w)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Tree4D::uniform(frames)
}
