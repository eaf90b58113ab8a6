use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatreg::{coprime_stencil, optimal_path};
use crate::warp::{interpolate_cubic, Diffeo};

pub type TimeWarp = Diffeo;

/// A trajectory in PCA space sampled at `d` uniform times on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaTrajectory {
    pub points: Vec<Vec<f64>>,
}

impl PcaTrajectory {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Argument("a trajectory needs at least 2 samples".into()));
        }
        let k = points[0].len();
        if points.iter().any(|p| p.len() != k || p.iter().any(|x| !x.is_finite())) {
            return Err(Error::Argument("trajectory samples must be finite and equally sized".into()));
        }
        Ok(PcaTrajectory { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Linear interpolation at `t ∈ [0, 1]`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let (i, u) = crate::treemodel::locate(t, self.points.len());
        if u == 0.0 {
            return self.points[i].clone();
        }
        self.points[i]
            .iter()
            .zip(&self.points[i + 1])
            .map(|(a, b)| a * (1.0 - u) + b * u)
            .collect()
    }

    /// Resamples at `d` uniform times.
    pub fn resampled(&self, d: usize) -> PcaTrajectory {
        PcaTrajectory {
            points: (0..d).map(|i| self.at(i as f64 / (d - 1) as f64)).collect(),
        }
    }

    /// Linear interpolation of samples taken at increasing `times` onto `d`
    /// uniform times.
    pub fn from_samples(times: &[f64], samples: &[Vec<f64>], d: usize) -> Result<Self> {
        if times.len() != samples.len() || times.len() < 2 || d < 2 {
            return Err(Error::Argument("need at least 2 timed samples and d >= 2".into()));
        }
        let points = (0..d)
            .map(|i| {
                let t = times[0] + (times[times.len() - 1] - times[0]) * i as f64 / (d - 1) as f64;
                let k = times.partition_point(|x| *x <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[k - 1], times[k]);
                let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                samples[k - 1]
                    .iter()
                    .zip(&samples[k])
                    .map(|(a, b)| a * (1.0 - u) + b * u)
                    .collect()
            })
            .collect();
        PcaTrajectory::new(points)
    }
}

/// SRVF of a PCA trajectory: one value per cell of the uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySrvf {
    pub w: Vec<Vec<f64>>,
    pub start: Vec<f64>,
}

impl TrajectorySrvf {
    /// Number of time samples of the underlying trajectory.
    pub fn samples(&self) -> usize {
        self.w.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.w.iter().flatten().copied().collect()
    }

    pub fn from_flat(flat: &[f64], start: Vec<f64>) -> Result<Self> {
        let k = start.len();
        if k == 0 || !flat.len().is_multiple_of(k) {
            return Err(Error::Mismatch("flat SRVF does not match the start dimension".into()));
        }
        Ok(TrajectorySrvf {
            w: flat.chunks(k).map(|c| c.to_vec()).collect(),
            start,
        })
    }

    /// `fa·a + fb·b`, starts included.
    pub fn combine(a: &TrajectorySrvf, b: &TrajectorySrvf, fa: f64, fb: f64) -> Result<Self> {
        check_compatible(a, b)?;
        let lin = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(p, q)| fa * p + fb * q).collect()
        };
        Ok(TrajectorySrvf {
            w: a.w.iter().zip(&b.w).map(|(x, y)| lin(x, y)).collect(),
            start: lin(&a.start, &b.start),
        })
    }
}

pub(crate) fn check_compatible(a: &TrajectorySrvf, b: &TrajectorySrvf) -> Result<()> {
    if a.w.len() != b.w.len() || a.dim() != b.dim() || a.w.iter().chain(&b.w).any(|c| c.len() != a.dim()) {
        return Err(Error::Mismatch(format!(
            "trajectory SRVFs differ in shape ({}x{} vs {}x{})",
            a.w.len(),
            a.dim(),
            b.w.len(),
            b.dim()
        )));
    }
    Ok(())
}

const ZERO_SPEED: f64 = 1e-12;

pub fn pca_srvf(a: &PcaTrajectory) -> TrajectorySrvf {
    let d = a.points.len();
    let scale = (d - 1) as f64;
    let w = a
        .points
        .windows(2)
        .map(|p| {
            let vel: Vec<f64> = p[1].iter().zip(&p[0]).map(|(x, y)| (x - y) * scale).collect();
            let speed = vel.iter().map(|x| x * x).sum::<f64>().sqrt();
            if speed < ZERO_SPEED {
                vec![0.0; vel.len()]
            } else {
                let f = 1.0 / speed.sqrt();
                vel.iter().map(|x| x * f).collect()
            }
        })
        .collect();
    TrajectorySrvf { w, start: a.points[0].clone() }
}

/// Integrates `w‖w‖` cell by cell from the start point.
pub fn pca_srvf_inverse(w: &TrajectorySrvf) -> PcaTrajectory {
    let h = 1.0 / w.w.len() as f64;
    let mut points = Vec::with_capacity(w.w.len() + 1);
    points.push(w.start.clone());
    for cell in &w.w {
        let norm = cell.iter().map(|x| x * x).sum::<f64>().sqrt();
        let last = points.last().expect("nonempty");
        let next: Vec<f64> = last.iter().zip(cell).map(|(p, x)| p + x * norm * h).collect();
        points.push(next);
    }
    PcaTrajectory { points }
}

/// `∫ ‖w₁ − w₂‖² dt` for piecewise-constant SRVFs.
pub fn trajectory_dist_sq(a: &TrajectorySrvf, b: &TrajectorySrvf) -> Result<f64> {
    check_compatible(a, b)?;
    let h = 1.0 / a.w.len() as f64;
    Ok(a.w
        .iter()
        .zip(&b.w)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() * h)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalOptions {
    pub max_step: usize,
    /// Lattice nodes per trajectory cell along each axis.
    pub refine: usize,
    /// Number of doubling knot-smoothing levels tried after the DP.
    pub smoothing: usize,
    /// Coordinate-descent sweeps over the warp knots after the DP.
    pub polish_sweeps: usize,
    /// Compose without the `√γ'` factor.
    pub literal: bool,
}

impl Default for TemporalOptions {
    fn default() -> Self {
        TemporalOptions { max_step: 3, refine: 4, smoothing: 6, polish_sweeps: 8, literal: false }
    }
}

/// Lattice cost on an `m × m` node grid over `[0, 1]²`, where `m − 1` is
/// a multiple of the number of SRVF cells. A move `(i, j) → (i + a, j + b)`
/// maps its time span linearly with slope `b/a`; the span is cut at every
/// cell boundary of either SRVF, so each piece integrates a constant and the
/// integral is exact.
pub struct TrajectoryAlignmentCost<'a> {
    w1: &'a TrajectorySrvf,
    w2: &'a TrajectorySrvf,
    literal: bool,
    refine: usize,
}

impl<'a> TrajectoryAlignmentCost<'a> {
    pub fn new(w1: &'a TrajectorySrvf, w2: &'a TrajectorySrvf, literal: bool, refine: usize) -> Self {
        TrajectoryAlignmentCost { w1, w2, literal, refine: refine.max(1) }
    }

    /// Number of lattice nodes per axis.
    pub fn grid(&self) -> usize {
        self.w1.w.len() * self.refine + 1
    }

    pub fn segment(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let cells = self.w1.w.len();
        let r = self.refine;
        let c = if self.literal { 1.0 } else { (b as f64 / a as f64).sqrt() };
        if r == 1 {
            // Pieces of length 1/b in lattice units: both SRVFs are constant
            // on each.
            let piece = 1.0 / (cells * b) as f64;
            let mut sum = 0.0;
            for u in 0..a * b {
                sum += piece * self.residual(i + u / b, j + u / a, c);
            }
            return sum;
        }
        // Work in lattice units; cell boundaries sit at multiples of `r`.
        let slope = b as f64 / a as f64;
        let mut cuts = vec![0.0, a as f64];
        for k in (i / r + 1)..=((i + a - 1) / r) {
            cuts.push((k * r - i) as f64);
        }
        for k in (j / r + 1)..=((j + b - 1) / r) {
            cuts.push((k * r - j) as f64 / slope);
        }
        cuts.sort_by(f64::total_cmp);
        let unit = 1.0 / (cells * r) as f64;
        let mut sum = 0.0;
        for p in cuts.windows(2) {
            let len = p[1] - p[0];
            if len <= 0.0 {
                continue;
            }
            let mid = 0.5 * (p[0] + p[1]);
            let c1 = ((i as f64 + mid) / r as f64).floor() as usize;
            let c2 = ((j as f64 + mid * slope) / r as f64).floor() as usize;
            sum += len * unit * self.residual(c1.min(cells - 1), c2.min(cells - 1), c);
        }
        sum
    }

    fn residual(&self, c1: usize, c2: usize, c: f64) -> f64 {
        self.w1.w[c1]
            .iter()
            .zip(&self.w2.w[c2])
            .map(|(p, q)| (p - c * q) * (p - c * q))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalRegistration {
    pub warp: Vec<f64>,
    pub aligned: TrajectorySrvf,
    /// `‖w₁ − w̃₂‖²` after alignment.
    pub cost: f64,
    /// `‖w₁ − w₂‖²` under the identity warp.
    pub identity_cost: f64,
    /// Optimal lattice cost found by the DP.
    pub lattice_cost: f64,
}

impl TemporalRegistration {
    pub fn time_warp(&self) -> TimeWarp {
        Diffeo::from_values(self.warp.clone()).expect("stored warp is valid")
    }
}

/// Applies a time warp: the trajectory is recomposed as `α₂∘γ` on the
/// uniform grid and mapped back to SRVF form (isometric action), or `w₂` is
/// composed directly without the Jacobian factor (literal action).
pub fn apply_time_warp(w2: &TrajectorySrvf, g: &TimeWarp, literal: bool) -> TrajectorySrvf {
    let cells = w2.w.len();
    if literal {
        let w = (0..cells)
            .map(|c| {
                let mid = (c as f64 + 0.5) / cells as f64;
                let x = g.eval(mid) * cells as f64;
                w2.w[(x.floor() as usize).min(cells - 1)].clone()
            })
            .collect();
        return TrajectorySrvf { w, start: w2.start.clone() };
    }
    let alpha = pca_srvf_inverse(w2);
    let k = w2.dim();
    let columns: Vec<Vec<f64>> = (0..k).map(|c| alpha.points.iter().map(|p| p[c]).collect()).collect();
    let warped = PcaTrajectory {
        points: (0..=cells)
            .map(|i| {
                let x = g.eval(i as f64 / cells as f64);
                columns.iter().map(|col| interpolate_cubic(col, x)).collect()
            })
            .collect(),
    };
    pca_srvf(&warped)
}

fn golden_min(f: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `passes` rounds of `[¼, ½, ¼]` smoothing with fixed endpoints; keeps the
/// knots strictly increasing.
fn smooth_knots(v: &mut [f64], passes: usize) {
    let n = v.len();
    for _ in 0..passes {
        let prev = v.to_vec();
        for i in 1..n - 1 {
            v[i] = 0.25 * prev[i - 1] + 0.5 * prev[i] + 0.25 * prev[i + 1];
        }
    }
}

/// Optimal time warp of `w2` onto `w1` by dynamic programming. The result
/// never has a larger residual than the identity warp.
pub fn temporal_register(
    w1: &TrajectorySrvf,
    w2: &TrajectorySrvf,
    opts: &TemporalOptions,
) -> Result<TemporalRegistration> {
    check_compatible(w1, w2)?;
    let d = w1.samples();
    if d < 3 {
        return Err(Error::Argument(format!("temporal registration needs d >= 3, got {d}")));
    }
    let cost = TrajectoryAlignmentCost::new(w1, w2, opts.literal, opts.refine);
    let m = cost.grid();
    let (path, lattice_cost) =
        optimal_path(m, &coprime_stencil(opts.max_step), |i, j, a, b| cost.segment(i, j, a, b))?;
    let raw = Diffeo::from_path(&path, m)?;
    let objective = |g: &Diffeo| -> Result<f64> {
        trajectory_dist_sq(w1, &apply_time_warp(w2, g, opts.literal))
    };
    // The lattice quantizes slopes: smooth the knots, then polish them one
    // at a time on the trajectory grid.
    let mut warp = raw.clone();
    let mut achieved = objective(&warp)?;
    let mut values = raw.values().to_vec();
    for level in 1..=opts.smoothing {
        smooth_knots(&mut values, 1 << (level - 1));
        let g = Diffeo::from_values(values.clone())?;
        let c = objective(&g)?;
        if c < achieved {
            warp = g;
            achieved = c;
        }
    }
    if opts.polish_sweeps > 0 {
        let mut knots = warp.resampled(d).values().to_vec();
        let mut best = objective(&Diffeo::from_values(knots.clone())?)?;
        let h = 1.0 / (d - 1) as f64;
        for _ in 0..opts.polish_sweeps {
            let before = best;
            // Hat-shaped knot moves, coarse to fine.
            let mut stride = (d - 1).next_power_of_two() / 2;
            while stride >= 1 {
                let mut centre = stride;
                while centre < d - 1 {
                    let bump = |delta: f64| -> Vec<f64> {
                        let mut trial = knots.clone();
                        for (j, v) in trial.iter_mut().enumerate() {
                            let r = (j as f64 - centre as f64).abs() / stride as f64;
                            if r < 1.0 && j > 0 && j < d - 1 {
                                *v += delta * (1.0 - r);
                            }
                        }
                        trial
                    };
                    let mut eval = |delta: f64| -> f64 {
                        let trial = bump(delta);
                        if trial.windows(2).any(|p| p[1] <= p[0]) {
                            return f64::INFINITY;
                        }
                        Diffeo::from_values(trial).and_then(|g| objective(&g)).unwrap_or(f64::INFINITY)
                    };
                    let reach = 0.5 * stride as f64 * h;
                    let delta = golden_min(&mut eval, -reach, reach, 1e-4 * reach);
                    let c = eval(delta);
                    if c < best {
                        knots = bump(delta);
                        best = c;
                    }
                    centre += stride;
                }
                stride /= 2;
            }
            if before - best <= 1e-9 * before.abs() {
                break;
            }
        }
        if best < achieved {
            warp = Diffeo::from_values(knots)?;
            achieved = best;
        }
    }
    let aligned = apply_time_warp(w2, &warp, opts.literal);
    let identity_cost = trajectory_dist_sq(w1, w2)?;
    let (warp, aligned, achieved) = if achieved <= identity_cost {
        (warp, aligned, achieved)
    } else {
        (Diffeo::identity(d), w2.clone(), identity_cost)
    };
    Ok(TemporalRegistration {
        warp: warp.values().to_vec(),
        aligned,
        cost: achieved,
        identity_cost,
        lattice_cost,
    })
}
