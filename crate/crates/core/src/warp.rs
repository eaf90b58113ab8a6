//! Piecewise-linear diffeomorphisms of `[0, 1]`.

use std::ops::{Add, Mul};

use crate::error::{Error, Result};
use crate::treemodel::locate;

/// A boundary-preserving, strictly increasing warp `γ: [0,1] → [0,1]`
/// stored as its values at `M` uniform knots and interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct Diffeo {
    values: Vec<f64>,
}

impl Diffeo {
    pub fn identity(knots: usize) -> Self {
        let m = knots.max(2);
        Diffeo {
            values: (0..m).map(|i| i as f64 / (m - 1) as f64).collect(),
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Argument("a warp needs at least 2 knots".into()));
        }
        if values[0] != 0.0 || values[values.len() - 1] != 1.0 {
            return Err(Error::Argument("a warp must fix 0 and 1".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("warp knots must be strictly increasing".into()));
        }
        Ok(Diffeo { values })
    }

    /// Builds a warp from a monotone lattice path on an `m × m` grid; path
    /// nodes are `(i, j)` meaning `γ(i/(m-1)) = j/(m-1)`.
    pub fn from_path(path: &[(usize, usize)], m: usize) -> Result<Self> {
        let h = 1.0 / (m - 1) as f64;
        let mut values = vec![0.0; m];
        for w in path.windows(2) {
            let (i0, j0) = w[0];
            let (i1, j1) = w[1];
            for i in i0..=i1 {
                let t = (i - i0) as f64 / (i1 - i0) as f64;
                values[i] = (j0 as f64 + t * (j1 - j0) as f64) * h;
            }
        }
        values[0] = 0.0;
        values[m - 1] = 1.0;
        Diffeo::from_values(values)
    }

    pub fn knots(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_identity(&self) -> bool {
        let m = self.values.len();
        self.values
            .iter()
            .enumerate()
            .all(|(i, v)| (v - i as f64 / (m - 1) as f64).abs() < 1e-15)
    }

    pub fn eval(&self, x: f64) -> f64 {
        interpolate(&self.values, x)
    }

    /// Derivative at `x`; at an interior knot the mean of the one-sided
    /// slopes.
    pub fn derivative(&self, x: f64) -> f64 {
        let m = self.values.len();
        let scale = (m - 1) as f64;
        let slope = |k: usize| (self.values[k + 1] - self.values[k]) * scale;
        let (i, t) = locate(x, m);
        if t > 0.0 {
            return slope(i);
        }
        if i == 0 {
            slope(0)
        } else if i >= m - 1 {
            slope(m - 2)
        } else {
            0.5 * (slope(i - 1) + slope(i))
        }
    }

    /// `γ⁻¹(y)`, exact for the piecewise-linear warp.
    pub fn inverse_eval(&self, y: f64) -> f64 {
        let m = self.values.len();
        let y = y.clamp(0.0, 1.0);
        let k = self.values.partition_point(|v| *v < y);
        if k == 0 {
            return 0.0;
        }
        if k >= m {
            return 1.0;
        }
        let (a, b) = (self.values[k - 1], self.values[k]);
        let t = ((y - a) / (b - a)).clamp(0.0, 1.0);
        (k as f64 - 1.0 + t) / (m - 1) as f64
    }

    /// The inverse warp sampled on the same number of knots.
    pub fn inverse(&self) -> Diffeo {
        let m = self.values.len();
        let mut out = Vec::with_capacity(m);
        let mut seg = 0;
        for k in 0..m {
            let y = k as f64 / (m - 1) as f64;
            if k == 0 {
                out.push(0.0);
                continue;
            }
            if k == m - 1 {
                out.push(1.0);
                continue;
            }
            while seg + 1 < m - 1 && self.values[seg + 1] < y {
                seg += 1;
            }
            let (a, b) = (self.values[seg], self.values[seg + 1]);
            let t = ((y - a) / (b - a)).clamp(0.0, 1.0);
            out.push((seg as f64 + t) / (m - 1) as f64);
        }
        enforce_increasing(&mut out);
        Diffeo { values: out }
    }

    /// `self ∘ inner`, sampled on `inner`'s knots.
    pub fn compose(&self, inner: &Diffeo) -> Diffeo {
        let mut values: Vec<f64> = inner.values.iter().map(|x| self.eval(*x)).collect();
        let m = values.len();
        values[0] = 0.0;
        values[m - 1] = 1.0;
        enforce_increasing(&mut values);
        Diffeo { values }
    }

    /// Resamples onto `m` uniform knots.
    pub fn resampled(&self, m: usize) -> Diffeo {
        let m = m.max(2);
        let mut values: Vec<f64> = (0..m)
            .map(|i| self.eval(i as f64 / (m - 1) as f64))
            .collect();
        values[0] = 0.0;
        values[m - 1] = 1.0;
        enforce_increasing(&mut values);
        Diffeo { values }
    }

    /// Largest deviation from `other`, evaluated on the union of both knot
    /// sets.
    pub fn sup_distance(&self, other: &Diffeo) -> f64 {
        let mut xs: Vec<f64> = Vec::new();
        for m in [self.values.len(), other.values.len()] {
            xs.extend((0..m).map(|i| i as f64 / (m - 1) as f64));
        }
        xs.iter()
            .map(|x| (self.eval(*x) - other.eval(*x)).abs())
            .fold(0.0, f64::max)
    }
}

/// Floating-point nudge keeping knots strictly increasing after resampling.
fn enforce_increasing(v: &mut [f64]) {
    let m = v.len();
    for i in 1..m {
        if v[i] <= v[i - 1] {
            v[i] = f64::min(v[i - 1] + 1e-15, 1.0);
        }
    }
    for i in (1..m - 1).rev() {
        if v[i] >= v[i + 1] {
            v[i] = v[i + 1] - 1e-15;
        }
    }
}

/// Linear interpolation of uniformly sampled values at `x ∈ [0, 1]`.
pub fn interpolate<T>(values: &[T], x: f64) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let (i, t) = locate(x, values.len());
    if t == 0.0 {
        values[i]
    } else if t == 1.0 {
        values[i + 1]
    } else {
        values[i] * (1.0 - t) + values[i + 1] * t
    }
}

/// Four-point Lagrange interpolation of uniformly sampled values at
/// `x ∈ [0, 1]`; exact at the samples, linear when fewer than 4 samples.
pub fn interpolate_cubic<T>(values: &[T], x: f64) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let n = values.len();
    if n < 4 {
        return interpolate(values, x);
    }
    let (i, t) = locate(x, n);
    if t == 0.0 {
        return values[i];
    }
    let i0 = i.saturating_sub(1).min(n - 4);
    let u = (i - i0) as f64 + t;
    let w = cubic_weights(u);
    values[i0] * w[0] + values[i0 + 1] * w[1] + values[i0 + 2] * w[2] + values[i0 + 3] * w[3]
}

/// Lagrange weights for nodes 0..=3 evaluated at `u`.
pub(crate) fn cubic_weights(u: f64) -> [f64; 4] {
    [
        -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
        u * (u - 2.0) * (u - 3.0) / 2.0,
        -u * (u - 1.0) * (u - 3.0) / 2.0,
        u * (u - 1.0) * (u - 2.0) / 6.0,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(m: usize) -> Diffeo {
        let f = |x: f64| x + 0.15 * (std::f64::consts::PI * x).sin() * x;
        let v: Vec<f64> = (0..m)
            .map(|i| f(i as f64 / (m - 1) as f64) / f(1.0))
            .collect();
        Diffeo::from_values(v).unwrap()
    }

    #[test]
    fn rejects_invalid_knots() {
        assert!(Diffeo::from_values(vec![0.0, 0.5, 0.4, 1.0]).is_err());
        assert!(Diffeo::from_values(vec![0.1, 1.0]).is_err());
        assert!(Diffeo::from_values(vec![0.0]).is_err());
    }

    #[test]
    fn cubic_is_exact_on_cubics() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 3.0 * x * x * x;
        let vals: Vec<f64> = (0..9).map(|i| f(i as f64 / 8.0)).collect();
        for k in 0..=40 {
            let x = k as f64 / 40.0;
            assert!((interpolate_cubic(&vals, x) - f(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn identity_behaviour() {
        let id = Diffeo::identity(11);
        assert!(id.is_identity());
        assert_eq!(id.eval(0.37), 0.37);
        assert!((id.derivative(0.5) - 1.0).abs() < 1e-12);
        assert!(id.inverse().is_identity());
    }

    #[test]
    fn inverse_round_trip() {
        let g = smooth(201);
        let back = g.compose(&g.inverse());
        assert!(back.sup_distance(&Diffeo::identity(201)) < 1e-4);
    }

    #[test]
    fn from_path_interpolates() {
        let g = Diffeo::from_path(&[(0, 0), (2, 1), (3, 3), (4, 4)], 5).unwrap();
        assert_eq!(g.values(), &[0.0, 0.125, 0.25, 0.75, 1.0]);
        assert!((g.derivative(0.1) - 0.5).abs() < 1e-12);
        assert!((g.derivative(0.5) - 1.25).abs() < 1e-12);
    }
}
