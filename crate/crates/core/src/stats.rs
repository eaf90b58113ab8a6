//! Karcher means, modes of variation and random synthesis of 4D trees.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esrvf::EsrvfTree;
use crate::metric::{combine, MetricWeights};
use crate::spatreg::{align, register_sequence, register_trees, RegOptions, RegistrationMap};
use crate::trajectory::{
    fit_basis, gram_pca, invert_trajectory, pca_srvf, prepare_sequence, temporal_register,
    trajectory_dist_sq, BasisOptions, PcaTrajectory, TemporalOptions, TimeWarp, TrajectorySrvf,
    TreeShapeBasis,
};
use crate::treemodel::Tree4D;
use crate::warp::Diffeo;

pub const MODEL_FORMAT: &str = "arbor4d-model/1";

#[derive(Debug, Clone)]
pub struct TreeMean {
    pub mean: EsrvfTree,
    /// Map of each input onto the running mean at the time it was absorbed
    /// (last pass).
    pub maps: Vec<RegistrationMap>,
}

/// `μ ← Q₁`, then for each further tree register it onto `μ` and set
/// `μ ← ½(μ + Q̃ᵢ)`. Extra passes revisit every tree.
pub fn karcher_mean_trees(
    qs: &[EsrvfTree],
    w: &MetricWeights,
    opts: &RegOptions,
    passes: usize,
) -> Result<TreeMean> {
    if qs.is_empty() {
        return Err(Error::Argument("cannot average an empty set of trees".into()));
    }
    let mut mu = qs[0].clone();
    let mut maps = vec![RegistrationMap::identity(&qs[0], &qs[0]); qs.len()];
    for pass in 0..passes.max(1) {
        let first = if pass == 0 { 1 } else { 0 };
        for (i, q) in qs.iter().enumerate().skip(first) {
            let r = register_trees(&mu, q, w, opts)?;
            let (ext, aligned) = align(&mu, q, &r.map)?;
            mu = combine(&ext, &aligned, 0.5, 0.5)?;
            maps[i] = r.map;
        }
    }
    Ok(TreeMean { mean: mu, maps })
}

/// `Σ d²(μ, Qᵢ)` with each distance taken after registration.
pub fn karcher_objective_trees(
    mu: &EsrvfTree,
    qs: &[EsrvfTree],
    w: &MetricWeights,
    opts: &RegOptions,
) -> Result<f64> {
    let d: Vec<f64> = qs
        .par_iter()
        .map(|q| register_trees(mu, q, w, opts).map(|r| r.distance * r.distance))
        .collect::<Result<Vec<_>>>()?;
    Ok(d.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MeanRule {
    /// `w̄ ← ((i−1)·w̄ + w̃ᵢ)/i`.
    #[default]
    Running,
    /// `w̄ ← (w̄ + w̃ᵢ)/i` for `i ≥ 2`, as printed in the source algorithm.
    Printed,
}

#[derive(Debug, Clone)]
pub struct TrajectoryMean {
    pub mean: TrajectorySrvf,
    pub warps: Vec<TimeWarp>,
    pub aligned: Vec<TrajectorySrvf>,
}

/// Temporal Karcher mean. The first pass follows the sequential update;
/// further passes register every trajectory onto the current mean and
/// average the aligned set.
pub fn karcher_mean_trajectories(
    ws: &[TrajectorySrvf],
    opts: &TemporalOptions,
    rule: MeanRule,
    passes: usize,
) -> Result<TrajectoryMean> {
    if ws.is_empty() {
        return Err(Error::Argument("cannot average an empty set of trajectories".into()));
    }
    for x in &ws[1..] {
        crate::trajectory::check_compatible(&ws[0], x)?;
    }
    let n = ws.len();
    let mut mean = ws[0].clone();
    let mut warps = vec![Diffeo::identity(ws[0].samples()); n];
    let mut aligned = ws.to_vec();
    for (i, w) in ws.iter().enumerate().skip(1) {
        let r = temporal_register(&mean, w, opts)?;
        let k = (i + 1) as f64;
        mean = match rule {
            MeanRule::Running => TrajectorySrvf::combine(&mean, &r.aligned, (k - 1.0) / k, 1.0 / k)?,
            MeanRule::Printed => TrajectorySrvf::combine(&mean, &r.aligned, 1.0 / k, 1.0 / k)?,
        };
        warps[i] = r.time_warp();
        aligned[i] = r.aligned;
    }
    for _ in 1..passes.max(1) {
        let regs = ws
            .par_iter()
            .map(|w| temporal_register(&mean, w, opts))
            .collect::<Result<Vec<_>>>()?;
        let mut acc = regs[0].aligned.clone();
        for r in &regs[1..] {
            acc = TrajectorySrvf::combine(&acc, &r.aligned, 1.0, 1.0)?;
        }
        mean = TrajectorySrvf::combine(&acc, &acc, 1.0 / n as f64, 0.0)?;
        warps = regs.iter().map(|r| r.time_warp()).collect();
        aligned = regs.into_iter().map(|r| r.aligned).collect();
    }
    Ok(TrajectoryMean { mean, warps, aligned })
}

/// `Σ ‖w̄ − w̃ᵢ‖²` over an aligned set.
pub fn trajectory_objective(mean: &TrajectorySrvf, aligned: &[TrajectorySrvf]) -> Result<f64> {
    let mut total = 0.0;
    for a in aligned {
        total += trajectory_dist_sq(mean, a)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modes {
    /// Orthonormal directions in flattened SRVF coordinates.
    pub vectors: Vec<Vec<f64>>,
    /// Nonincreasing variances along each direction.
    pub variances: Vec<f64>,
    pub total_variance: f64,
}

/// Top-`k` eigenpairs of `1/(n−1)·Σ (w̃ᵢ − w̄)(w̃ᵢ − w̄)ᵀ`.
pub fn modes_of_variation(aligned: &[TrajectorySrvf], mean: &TrajectorySrvf, k: usize) -> Result<Modes> {
    if aligned.len() < 2 {
        return Err(Error::Argument("modes of variation need at least 2 trajectories".into()));
    }
    let m = mean.flatten();
    let rows = aligned
        .iter()
        .map(|a| {
            crate::trajectory::check_compatible(mean, a)?;
            Ok(a.flatten().iter().zip(&m).map(|(x, y)| x - y).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let (mut variances, mut vectors, total_variance) = gram_pca(&rows);
    let cap = aligned.len() - 1;
    if k > cap {
        log::warn!("requested {k} modes but only {cap} are available; truncating");
    }
    let k = k.min(cap);
    variances.truncate(k);
    vectors.truncate(k);
    Ok(Modes { vectors, variances, total_variance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory4DModel {
    pub format: String,
    pub mean: TrajectorySrvf,
    pub modes: Modes,
    pub basis: TreeShapeBasis,
    /// Coefficient bound in standard deviations.
    pub clamp: f64,
}

pub fn build_model(
    aligned: &[TrajectorySrvf],
    mean: &TrajectorySrvf,
    basis: TreeShapeBasis,
    k: usize,
    clamp: f64,
) -> Result<Trajectory4DModel> {
    if !(clamp > 0.0) {
        return Err(Error::invalid("clamp", format!("must be positive, got {clamp}")));
    }
    if mean.dim() != basis.k {
        return Err(Error::Mismatch("trajectory dimension differs from the basis".into()));
    }
    Ok(Trajectory4DModel {
        format: MODEL_FORMAT.into(),
        mean: mean.clone(),
        modes: modes_of_variation(aligned, mean, k)?,
        basis,
        clamp,
    })
}

impl Trajectory4DModel {
    pub fn k(&self) -> usize {
        self.modes.variances.len()
    }

    /// `w̄ + Σ aᵢ·√δᵢ·eᵢ` with the coefficients taken as given.
    pub fn srvf_for(&self, a: &[f64]) -> Result<TrajectorySrvf> {
        if a.len() != self.k() {
            return Err(Error::Argument(format!(
                "model has {} modes, got {} coefficients",
                self.k(),
                a.len()
            )));
        }
        let mut flat = self.mean.flatten();
        for (i, c) in a.iter().enumerate() {
            let f = c * self.modes.variances[i].sqrt();
            for (x, e) in flat.iter_mut().zip(&self.modes.vectors[i]) {
                *x += f * e;
            }
        }
        TrajectorySrvf::from_flat(&flat, self.mean.start.clone())
    }

    /// Coefficients of `w` along each mode, in standard deviations.
    pub fn project(&self, w: &TrajectorySrvf) -> Result<Vec<f64>> {
        crate::trajectory::check_compatible(&self.mean, w)?;
        let d: Vec<f64> = w.flatten().iter().zip(self.mean.flatten()).map(|(a, b)| a - b).collect();
        Ok(self
            .modes
            .vectors
            .iter()
            .zip(&self.modes.variances)
            .map(|(e, v)| d.iter().zip(e).map(|(x, y)| x * y).sum::<f64>() / v.sqrt())
            .collect())
    }

    /// 4D tree `τ` standard deviations along mode `i` (1-based).
    pub fn sample_mode(&self, i: usize, tau: f64) -> Result<(Tree4D, usize)> {
        if i == 0 || i > self.k() {
            return Err(Error::Argument(format!("mode index {i} outside 1..={}", self.k())));
        }
        let mut a = vec![0.0; self.k()];
        a[i - 1] = tau;
        invert_trajectory(&self.srvf_for(&a)?, &self.basis)
    }

    /// Clamps coefficients to `±clamp`, or draws them from the standard
    /// normal with a ChaCha20 stream seeded by `seed` when none are given.
    pub fn coefficients(&self, a: Option<&[f64]>, seed: u64) -> Result<Vec<f64>> {
        let raw: Vec<f64> = match a {
            Some(a) => {
                if a.len() != self.k() {
                    return Err(Error::Argument(format!(
                        "model has {} modes, got {} coefficients",
                        self.k(),
                        a.len()
                    )));
                }
                a.to_vec()
            }
            None => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                (0..self.k()).map(|_| StandardNormal.sample(&mut rng)).collect()
            }
        };
        Ok(raw.iter().map(|x| x.clamp(-self.clamp, self.clamp)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub coefficients: Vec<f64>,
    pub srvf: TrajectorySrvf,
    pub tree: Tree4D,
    /// Negative radii set to zero during reconstruction.
    pub clamped_radii: usize,
}

pub fn synthesize(model: &Trajectory4DModel, a: Option<&[f64]>, seed: u64) -> Result<Synthesis> {
    let coefficients = model.coefficients(a, seed)?;
    let srvf = model.srvf_for(&coefficients)?;
    let (tree, clamped_radii) = invert_trajectory(&srvf, &model.basis)?;
    Ok(Synthesis { coefficients, srvf, tree, clamped_radii })
}

pub fn serialize_model(m: &Trajectory4DModel) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(m)?)
}

pub fn parse_model(bytes: &[u8]) -> Result<Trajectory4DModel> {
    crate::treemodel::io::check_format(bytes, MODEL_FORMAT)?;
    let m: Trajectory4DModel = serde_json::from_slice(bytes)?;
    let len = m.mean.flatten().len();
    if m.modes.vectors.len() != m.modes.variances.len() || m.modes.vectors.iter().any(|v| v.len() != len) {
        return Err(Error::invalid("modes", "shape does not match the mean"));
    }
    if m.mean.dim() != m.basis.k {
        return Err(Error::invalid("mean.start", "dimension differs from the basis"));
    }
    Ok(m)
}

/// Trajectory SRVFs of several 4D trees in one shared shape basis: each
/// sequence is registered internally, every frame is registered onto a
/// common template, and the projected trajectories are re-discretized at
/// `d` samples.
#[derive(Debug, Clone)]
pub struct Population {
    pub basis: TreeShapeBasis,
    pub trajectories: Vec<PcaTrajectory>,
    pub srvfs: Vec<TrajectorySrvf>,
}

pub fn build_population(
    seqs: &[Tree4D],
    w: &MetricWeights,
    samples: usize,
    scale: bool,
    d: usize,
    reg: &RegOptions,
    basis_opts: &BasisOptions,
) -> Result<Population> {
    if seqs.is_empty() {
        return Err(Error::Argument("no sequences given".into()));
    }
    let mut reg = reg.clone();
    reg.exact_permutation = false;
    let registered = seqs
        .par_iter()
        .map(|h| {
            let q = prepare_sequence(h, samples, scale)?;
            register_sequence(&q, w, &reg).map(|r| r.frames)
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<EsrvfTree> = registered.iter().flatten().cloned().collect();
    let fit = fit_basis(&all, w, &reg, basis_opts)?;
    let basis = fit.basis;
    let coeffs = fit
        .aligned
        .iter()
        .map(|q| basis.project(q))
        .collect::<Result<Vec<_>>>()?;
    let mut offset = 0;
    let mut trajectories = Vec::with_capacity(seqs.len());
    for h in seqs {
        let f = h.len();
        let a = if basis.k == 0 {
            PcaTrajectory { points: vec![Vec::new(); d] }
        } else {
            PcaTrajectory::from_samples(h.times(), &coeffs[offset..offset + f], d)?
        };
        trajectories.push(a);
        offset += f;
    }
    let srvfs = trajectories.iter().map(pca_srvf).collect();
    Ok(Population { basis, trajectories, srvfs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esrvf::{EsrvfBranch, EsrvfChild, Vec3};
    use crate::treemodel::Point;

    fn srvf(f: impl Fn(f64) -> Vec<f64>, d: usize) -> TrajectorySrvf {
        pca_srvf(&PcaTrajectory::new((0..d).map(|i| f(i as f64 / (d - 1) as f64)).collect()).unwrap())
    }

    #[test]
    fn two_sample_modes() {
        let a = srvf(|t| vec![t, t * t], 10);
        let b = srvf(|t| vec![t.sin(), 0.5 * t], 10);
        let mean = TrajectorySrvf::combine(&a, &b, 0.5, 0.5).unwrap();
        let m = modes_of_variation(&[a.clone(), b.clone()], &mean, 3).unwrap();
        assert_eq!(m.variances.len(), 1);
        let diff: f64 = a.flatten().iter().zip(b.flatten()).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!((m.variances[0] - 0.5 * diff).abs() < 1e-12);
        assert!((m.variances.iter().sum::<f64>() - m.total_variance).abs() < 1e-9);
    }

    #[test]
    fn trajectory_mean_fixed_points() {
        let a = srvf(|t| vec![t, (2.0 * t).sin()], 12);
        let single = karcher_mean_trajectories(std::slice::from_ref(&a), &TemporalOptions::default(), MeanRule::Running, 1).unwrap();
        assert_eq!(single.mean, a);
        let many = karcher_mean_trajectories(&[a.clone(), a.clone(), a.clone()], &TemporalOptions::default(), MeanRule::Running, 1)
            .unwrap();
        for (x, y) in many.mean.flatten().iter().zip(a.flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn second_pass_does_not_increase_objective() {
        let ws: Vec<TrajectorySrvf> = (0..4)
            .map(|i| {
                let p = 0.2 * i as f64;
                srvf(move |t| vec![(t + p * t * (1.0 - t)).sin(), t * (1.0 + p)], 15)
            })
            .collect();
        let one = karcher_mean_trajectories(&ws, &TemporalOptions::default(), MeanRule::Running, 1).unwrap();
        let two = karcher_mean_trajectories(&ws, &TemporalOptions::default(), MeanRule::Running, 2).unwrap();
        let o1 = trajectory_objective(&one.mean, &one.aligned).unwrap();
        let o2 = trajectory_objective(&two.mean, &two.aligned).unwrap();
        assert!(o2 <= o1 + 1e-12, "{o2} > {o1}");
    }

    fn leafy(r: f64) -> EsrvfTree {
        let n = 12;
        let b = |f: f64| EsrvfBranch {
            v: (0..n).map(|i| Vec3::new(1.0, 0.3 * (i as f64).sin(), 0.1)).collect(),
            rad: vec![f; n],
            origin: Point::zeros(),
        };
        EsrvfTree { main: b(r), children: vec![EsrvfChild { s: 0.5, subtree: EsrvfTree::leaf(b(0.5 * r)) }] }
    }

    #[test]
    fn tree_mean_cases() {
        let w = MetricWeights::default();
        let o = RegOptions::default();
        let a = leafy(0.1);
        assert_eq!(karcher_mean_trees(std::slice::from_ref(&a), &w, &o, 1).unwrap().mean, a);
        let b = leafy(0.3);
        let m = karcher_mean_trees(&[a.clone(), b.clone()], &w, &o, 1).unwrap().mean;
        let mid = combine(&a, &b, 0.5, 0.5).unwrap();
        assert!(crate::metric::flat_dist_sq(&m, &mid, &w).unwrap() < 1e-18);
        let same = karcher_mean_trees(&[a.clone(), a.clone(), a.clone()], &w, &o, 1).unwrap().mean;
        assert!(crate::metric::flat_dist_sq(&same, &a, &w).unwrap() < 1e-18);
    }
}
