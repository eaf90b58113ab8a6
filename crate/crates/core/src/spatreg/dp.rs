//! Dynamic programming over monotone lattice paths.

use crate::error::{Error, Result};
use crate::esrvf::EsrvfBranch;
use crate::warp::{interpolate_cubic, Diffeo};

/// All coprime steps `(a, b)` with `1 ≤ a, b ≤ max_step`.
pub fn coprime_stencil(max_step: usize) -> Vec<(usize, usize)> {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let mut out = Vec::new();
    for a in 1..=max_step {
        for b in 1..=max_step {
            if gcd(a, b) == 1 {
                out.push((a, b));
            }
        }
    }
    out.sort_by_key(|&(a, b)| (a + b, a));
    out
}

pub fn default_stencil() -> Vec<(usize, usize)> {
    coprime_stencil(3)
}

/// Cheapest monotone path from `(0,0)` to `(m-1,m-1)` where a move from
/// `(i,j)` to `(i+a,j+b)` costs `segment(i, j, a, b)`. Ties keep the first
/// minimizing predecessor in stencil order. Returns the path nodes and the
/// accumulated cost.
pub fn optimal_path(
    m: usize,
    stencil: &[(usize, usize)],
    segment: impl Fn(usize, usize, usize, usize) -> f64,
) -> Result<(Vec<(usize, usize)>, f64)> {
    if m < 2 {
        return Err(Error::Argument(format!("DP grid needs at least 2 nodes, got {m}")));
    }
    if stencil.is_empty() {
        return Err(Error::Argument("empty DP stencil".into()));
    }
    let idx = |i: usize, j: usize| i * m + j;
    let mut cost = vec![f64::INFINITY; m * m];
    let mut from = vec![usize::MAX; m * m];
    cost[0] = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i == 0 && j == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut arg = usize::MAX;
            for (k, &(a, b)) in stencil.iter().enumerate() {
                if a > i || b > j {
                    continue;
                }
                let prev = cost[idx(i - a, j - b)];
                if !prev.is_finite() {
                    continue;
                }
                let c = prev + segment(i - a, j - b, a, b);
                if c < best {
                    best = c;
                    arg = k;
                }
            }
            cost[idx(i, j)] = best;
            from[idx(i, j)] = arg;
        }
    }
    let total = cost[idx(m - 1, m - 1)];
    if !total.is_finite() {
        return Err(Error::Numeric("no admissible lattice path".into()));
    }
    let mut path = vec![(m - 1, m - 1)];
    let (mut i, mut j) = (m - 1, m - 1);
    while (i, j) != (0, 0) {
        let (a, b) = stencil[from[idx(i, j)]];
        i -= a;
        j -= b;
        path.push((i, j));
    }
    path.reverse();
    Ok((path, total))
}

/// Lattice cost for aligning two branch ESRVFs sampled on a common grid of
/// `m` nodes. Tree 2 is evaluated at fractional nodes with cubic
/// interpolation; each move integrates the squared residual by the
/// trapezoidal rule over its unit sub-steps in tree-1 time.
pub struct BranchAlignmentCost {
    v1: Vec<[f64; 3]>,
    r1: Vec<f64>,
    v2: Vec<[f64; 3]>,
    r2: Vec<f64>,
    w_rad: f64,
    h: f64,
    /// Tree-2 values at `j + 1/2`, `j + 1/3` and `j + 2/3`.
    fractions: [Vec<([f64; 3], f64)>; 3],
}

impl BranchAlignmentCost {
    pub fn new(q1: &EsrvfBranch, q2: &EsrvfBranch, m: usize, w_rad: f64) -> Self {
        let on_grid = |q: &EsrvfBranch| -> (Vec<[f64; 3]>, Vec<f64>) {
            if q.len() == m {
                (q.v.iter().map(|v| [v.x, v.y, v.z]).collect(), q.rad.clone())
            } else {
                (0..m)
                    .map(|i| {
                        let x = i as f64 / (m - 1) as f64;
                        let v = interpolate_cubic(&q.v, x);
                        ([v.x, v.y, v.z], interpolate_cubic(&q.rad, x))
                    })
                    .unzip()
            }
        };
        let (v1, r1) = on_grid(q1);
        let (v2, r2) = on_grid(q2);
        let mut cost = BranchAlignmentCost {
            v1,
            r1,
            v2,
            r2,
            w_rad,
            h: 1.0 / (m - 1) as f64,
            fractions: Default::default(),
        };
        let table = |num: usize, den: usize| (0..m - 1).map(|j| cost.interpolate(j, num, den)).collect();
        let fractions = [table(1, 2), table(1, 3), table(2, 3)];
        cost.fractions = fractions;
        cost
    }

    pub fn grid(&self) -> usize {
        self.v1.len()
    }

    fn tree2_at(&self, j: usize, num: usize, den: usize) -> ([f64; 3], f64) {
        let whole = j + num / den;
        let slot = match (den, num % den) {
            (_, 0) => return (self.v2[whole], self.r2[whole]),
            (2, 1) => 0,
            (3, 1) => 1,
            (3, 2) => 2,
            _ => return self.interpolate(j, num, den),
        };
        self.fractions[slot][whole]
    }

    fn interpolate(&self, j: usize, num: usize, den: usize) -> ([f64; 3], f64) {
        let whole = j + num / den;
        let rem = num % den;
        if rem == 0 {
            return (self.v2[whole], self.r2[whole]);
        }
        let n = self.v2.len();
        let u_pos = rem as f64 / den as f64;
        if n < 4 {
            let t = u_pos;
            let a = self.v2[whole];
            let b = self.v2[whole + 1];
            return (
                [0, 1, 2].map(|c| a[c] * (1.0 - t) + b[c] * t),
                self.r2[whole] * (1.0 - t) + self.r2[whole + 1] * t,
            );
        }
        let i0 = whole.saturating_sub(1).min(n - 4);
        let w = crate::warp::cubic_weights((whole - i0) as f64 + u_pos);
        let mut v = [0.0; 3];
        let mut r = 0.0;
        for k in 0..4 {
            let s = self.v2[i0 + k];
            for c in 0..3 {
                v[c] += w[k] * s[c];
            }
            r += w[k] * self.r2[i0 + k];
        }
        (v, r)
    }

    /// Cost of the move `(i, j) → (i + a, j + b)`.
    pub fn segment(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let c = (b as f64 / a as f64).sqrt();
        let residual = |k: usize| {
            let (v2, r2) = self.tree2_at(j, k * b, a);
            let v1 = self.v1[i + k];
            let mut e = 0.0;
            for d in 0..3 {
                let x = v1[d] - c * v2[d];
                e += x * x;
            }
            let dr = self.r1[i + k] - r2;
            e + self.w_rad * dr * dr
        };
        let mut sum = 0.0;
        let mut prev = residual(0);
        for k in 1..=a {
            let next = residual(k);
            sum += 0.5 * (prev + next);
            prev = next;
        }
        sum * self.h
    }
}

/// Warp minimizing the lattice cost of aligning `q2` to `q1`, together with
/// that cost. A grid coarser than the branch sampling resamples both
/// signals first.
pub fn optimal_reparam_branch(
    q1: &EsrvfBranch,
    q2: &EsrvfBranch,
    m: usize,
    w_rad: f64,
) -> Result<(Diffeo, f64)> {
    optimal_reparam_branch_with(q1, q2, m, w_rad, &default_stencil())
}

pub fn optimal_reparam_branch_with(
    q1: &EsrvfBranch,
    q2: &EsrvfBranch,
    m: usize,
    w_rad: f64,
    stencil: &[(usize, usize)],
) -> Result<(Diffeo, f64)> {
    if q1.len() != q2.len() {
        return Err(Error::Mismatch(format!(
            "branches have {} and {} samples",
            q1.len(),
            q2.len()
        )));
    }
    if m < 2 {
        return Err(Error::Argument(format!("DP grid needs at least 2 nodes, got {m}")));
    }
    if m > q1.len() {
        return Err(Error::Argument(format!(
            "DP grid ({m}) cannot exceed branch sampling ({})",
            q1.len()
        )));
    }
    let cost = BranchAlignmentCost::new(q1, q2, m, w_rad);
    let (path, total) = optimal_path(m, stencil, |i, j, a, b| cost.segment(i, j, a, b))?;
    Ok((Diffeo::from_path(&path, m)?, total))
}
