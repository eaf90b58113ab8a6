use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::{fit_basis_aligned, BasisOptions, TreeShapeBasis};
use super::srvf::{
    pca_srvf, pca_srvf_inverse, temporal_register, trajectory_dist_sq, PcaTrajectory,
    TemporalOptions, TemporalRegistration, TrajectorySrvf,
};
use crate::error::{Error, Result};
use crate::esrvf::{tree_forward, tree_inverse, EsrvfTree};
use crate::metric::MetricWeights;
use crate::spatreg::{align, pad_to_template, register_sequence, register_trees, RegOptions};
use crate::treemodel::{normalize_scale, normalize_translation, Tree, Tree4D, DEFAULT_SAMPLES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    /// Samples per branch after resampling.
    pub samples: usize,
    /// Trajectory samples after re-discretization.
    pub trajectory_samples: usize,
    pub scale_normalize: bool,
    pub registration: RegOptions,
    pub basis: BasisOptions,
    pub temporal: TemporalOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            samples: DEFAULT_SAMPLES,
            trajectory_samples: 30,
            scale_normalize: false,
            registration: RegOptions::default(),
            basis: BasisOptions::default(),
            temporal: TemporalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineResult {
    pub basis: TreeShapeBasis,
    /// First sequence after cross-sequence spatial registration.
    pub trajectory1: PcaTrajectory,
    pub trajectory2: PcaTrajectory,
    pub srvf1: TrajectorySrvf,
    pub srvf2: TrajectorySrvf,
    pub temporal: TemporalRegistration,
    /// `‖w₁ − w₂‖` before and after temporal registration.
    pub distance_before: f64,
    pub distance_after: f64,
}

/// Translation (and optionally scale) normalization plus resampling.
pub fn prepare_tree(t: &Tree, samples: usize, scale: bool) -> Result<Tree> {
    let t = normalize_translation(t);
    let t = if scale { normalize_scale(&t)?.0 } else { t };
    t.resampled(samples)
}

pub fn prepare_sequence(h: &Tree4D, samples: usize, scale: bool) -> Result<Vec<EsrvfTree>> {
    h.frames()
        .par_iter()
        .map(|t| prepare_tree(t, samples, scale).map(|t| tree_forward(&t)))
        .collect()
}

/// Spatial then temporal registration of two 4D trees: within-sequence
/// registration, one registration of the last frames carrying sequence 2
/// onto sequence 1, a shared PCA basis, re-discretization of both PCA
/// trajectories, per-time cross registration of reconstructed frames, and
/// dynamic-programming time warping of the trajectory SRVFs.
pub fn spatiotemporal_pipeline(
    h1: &Tree4D,
    h2: &Tree4D,
    w: &MetricWeights,
    opts: &PipelineOptions,
) -> Result<PipelineResult> {
    w.validate()?;
    let d = opts.trajectory_samples;
    if d < 3 {
        return Err(Error::Argument(format!("trajectory samples must be >= 3, got {d}")));
    }
    let mut within = opts.registration.clone();
    within.exact_permutation = false;

    let q1 = prepare_sequence(h1, opts.samples, opts.scale_normalize)?;
    let q2 = prepare_sequence(h2, opts.samples, opts.scale_normalize)?;
    let (s1, s2) = rayon::join(
        || register_sequence(&q1, w, &within),
        || register_sequence(&q2, w, &within),
    );
    let (s1, s2) = (s1?, s2?);
    // Frames of each sequence share its last frame's template, so one
    // registration of the last frames carries sequence 2 onto sequence 1.
    let (last1, last2) = (&s1.frames[s1.frames.len() - 1], &s2.frames[s2.frames.len() - 1]);
    let joint = register_trees(last1, last2, w, &within)?;
    let (template, _) = align(last1, last2, &joint.map)?;
    let aligned = s1
        .frames
        .par_iter()
        .map(|f| pad_to_template(f, &template))
        .chain(s2.frames.par_iter().map(|f| {
            let (_, moved) = align(last1, f, &joint.map)?;
            pad_to_template(&moved, &template)
        }))
        .collect::<Result<Vec<_>>>()?;
    let basis = fit_basis_aligned(&aligned, &opts.basis)?;
    let coeffs = aligned
        .iter()
        .map(|q| basis.project(q))
        .collect::<Result<Vec<_>>>()?;
    let f1 = h1.len();
    let a1 = PcaTrajectory::from_samples(h1.times(), &coeffs[..f1], d)?;
    let a2 = PcaTrajectory::from_samples(h2.times(), &coeffs[f1..], d)?;

    let a1 = if basis.k == 0 {
        a1
    } else {
        cross_register(&a1, &a2, &basis, w, &opts.registration)?
    };
    let w1 = pca_srvf(&a1);
    let w2 = pca_srvf(&a2);
    let (temporal, before) = if basis.k == 0 {
        let r = TemporalRegistration {
            warp: crate::warp::Diffeo::identity(d).values().to_vec(),
            aligned: w2.clone(),
            cost: 0.0,
            identity_cost: 0.0,
            lattice_cost: 0.0,
        };
        (r, 0.0)
    } else {
        let r = temporal_register(&w1, &w2, &opts.temporal)?;
        let before = trajectory_dist_sq(&w1, &w2)?;
        (r, before)
    };
    let after = temporal.cost;
    Ok(PipelineResult {
        basis,
        trajectory1: a1,
        trajectory2: a2,
        srvf1: w1,
        srvf2: w2,
        temporal,
        distance_before: before.max(0.0).sqrt(),
        distance_after: after.max(0.0).sqrt(),
    })
}

/// Registers the reconstructed frame of `a1` onto that of `a2` at every
/// time sample (full permutations only, so the template is preserved) and
/// re-projects it. Both trajectories already share one frame, so the
/// rotation stays fixed.
fn cross_register(
    a1: &PcaTrajectory,
    a2: &PcaTrajectory,
    basis: &TreeShapeBasis,
    w: &MetricWeights,
    reg: &RegOptions,
) -> Result<PcaTrajectory> {
    let mut reg = reg.clone();
    reg.exact_permutation = true;
    reg.rotate = false;
    let points = a1
        .points
        .par_iter()
        .zip(&a2.points)
        .map(|(p1, p2)| {
            if p1 == p2 {
                return Ok(p1.clone());
            }
            let (t1, _) = basis.reconstruct(p1)?;
            let (t2, _) = basis.reconstruct(p2)?;
            let r = register_trees(&t2, &t1, w, &reg)?;
            if r.map.is_identity() {
                return Ok(p1.clone());
            }
            let (_, moved) = align(&t2, &t1, &r.map)?;
            basis.project(&moved)
        })
        .collect::<Result<Vec<_>>>()?;
    PcaTrajectory::new(points)
}

/// 4D tree for a trajectory SRVF: SRVF inversion, inverse PCA, ESRVF
/// inversion frame by frame.
pub fn invert_trajectory(w: &TrajectorySrvf, basis: &TreeShapeBasis) -> Result<(Tree4D, usize)> {
    let alpha = pca_srvf_inverse(w);
    let frames: Vec<(Tree, usize)> = alpha
        .points
        .par_iter()
        .map(|p| {
            let (q, clamped) = basis.reconstruct(p)?;
            Ok((tree_inverse(&q), clamped))
        })
        .collect::<Result<Vec<_>>>()?;
    let clamped = frames.iter().map(|f| f.1).sum();
    Ok((Tree4D::uniform(frames.into_iter().map(|f| f.0).collect())?, clamped))
}

/// Straight line between two aligned trajectory SRVFs, each sample mapped
/// back to a 4D tree.
pub fn geodesic4d(
    w1: &TrajectorySrvf,
    w2_aligned: &TrajectorySrvf,
    basis: &TreeShapeBasis,
    steps: usize,
) -> Result<Vec<Tree4D>> {
    geodesic4d_srvf(w1, w2_aligned, steps)?
        .iter()
        .map(|w| invert_trajectory(w, basis).map(|r| r.0))
        .collect()
}

/// The geodesic samples in SRVF form, endpoints returned unchanged.
pub fn geodesic4d_srvf(
    w1: &TrajectorySrvf,
    w2_aligned: &TrajectorySrvf,
    steps: usize,
) -> Result<Vec<TrajectorySrvf>> {
    if steps < 2 {
        return Err(Error::Argument(format!("a geodesic needs at least 2 steps, got {steps}")));
    }
    (0..steps)
        .map(|j| {
            if j == 0 {
                super::srvf::check_compatible(w1, w2_aligned)?;
                Ok(w1.clone())
            } else if j == steps - 1 {
                Ok(w2_aligned.clone())
            } else {
                let tau = j as f64 / (steps - 1) as f64;
                TrajectorySrvf::combine(w1, w2_aligned, 1.0 - tau, tau)
            }
        })
        .collect()
}
