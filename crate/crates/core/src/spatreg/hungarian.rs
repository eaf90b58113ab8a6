//! Minimum-cost assignment with optional null matches.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Matching {
    /// `(i, j)`: child `i` of tree 1 corresponds to child `j` of tree 2.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched1: Vec<usize>,
    pub unmatched2: Vec<usize>,
}

impl Matching {
    /// Pairs `i ↔ i` up to the shorter side; the rest are unmatched.
    pub fn positional(k1: usize, k2: usize) -> Self {
        let k = k1.min(k2);
        Matching {
            pairs: (0..k).map(|i| (i, i)).collect(),
            unmatched1: (k..k1).collect(),
            unmatched2: (k..k2).collect(),
        }
    }

    pub fn is_consistent(&self, k1: usize, k2: usize) -> bool {
        let mut seen1 = vec![false; k1];
        let mut seen2 = vec![false; k2];
        let mark = |seen: &mut Vec<bool>, i: usize| -> bool {
            if i >= seen.len() || seen[i] {
                return false;
            }
            seen[i] = true;
            true
        };
        for &(i, j) in &self.pairs {
            if !mark(&mut seen1, i) || !mark(&mut seen2, j) {
                return false;
            }
        }
        for &i in &self.unmatched1 {
            if !mark(&mut seen1, i) {
                return false;
            }
        }
        for &j in &self.unmatched2 {
            if !mark(&mut seen2, j) {
                return false;
            }
        }
        seen1.iter().all(|b| *b) && seen2.iter().all(|b| *b)
    }

    /// Partner of child `i` of tree 1, if any.
    pub fn partner_of(&self, i: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == i).map(|p| p.1)
    }
}

/// Total cost of a matching, summed in canonical order: pairs by increasing
/// `i`, then unmatched of side 1, then unmatched of side 2.
pub fn matching_cost(cost: &[Vec<f64>], null1: &[f64], null2: &[f64], m: &Matching) -> f64 {
    let mut pairs = m.pairs.clone();
    pairs.sort_unstable();
    let mut u1 = m.unmatched1.clone();
    u1.sort_unstable();
    let mut u2 = m.unmatched2.clone();
    u2.sort_unstable();
    let mut total = 0.0;
    for (i, j) in pairs {
        total += cost[i][j];
    }
    for i in u1 {
        total += null1[i];
    }
    for j in u2 {
        total += null2[j];
    }
    total
}

/// Square assignment problem: returns `col[row]` minimizing the summed cost.
/// Infinite entries are forbidden; a finite perfect assignment must exist.
pub fn assign(a: &[Vec<f64>]) -> Vec<usize> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    // Shortest augmenting paths with potentials; rows and columns are
    // 1-based internally with 0 as the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == 0 {
                // Every remaining column is forbidden for this row set.
                break;
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            col[p[j] - 1] = j - 1;
        }
    }
    col
}

/// Minimum-cost partial matching: every child either pairs with a child of
/// the other tree (`cost[i][j]`) or takes its null cost.
pub fn match_subtrees(cost: &[Vec<f64>], null1: &[f64], null2: &[f64]) -> Matching {
    let k1 = null1.len();
    let k2 = null2.len();
    let n = k1 + k2;
    if n == 0 {
        return Matching::default();
    }
    let inf = f64::INFINITY;
    let mut a = vec![vec![inf; n]; n];
    for i in 0..k1 {
        for j in 0..k2 {
            a[i][j] = cost[i][j];
        }
        a[i][k2 + i] = null1[i];
    }
    for j in 0..k2 {
        a[k1 + j][j] = null2[j];
        for i in 0..k1 {
            a[k1 + j][k2 + i] = 0.0;
        }
    }
    let col = assign(&a);
    let mut m = Matching::default();
    for (i, &c) in col.iter().enumerate().take(k1) {
        if c < k2 {
            m.pairs.push((i, c));
        } else {
            m.unmatched1.push(i);
        }
    }
    for j in 0..k2 {
        if col[k1 + j] == j {
            m.unmatched2.push(j);
        }
    }
    m
}

/// Matching that pairs as many children as possible (`min(k1, k2)` pairs);
/// only the surplus side takes null costs.
pub fn match_subtrees_exact(cost: &[Vec<f64>], null1: &[f64], null2: &[f64]) -> Matching {
    let k1 = null1.len();
    let k2 = null2.len();
    let n = k1.max(k2);
    if n == 0 {
        return Matching::default();
    }
    let mut a = vec![vec![0.0; n]; n];
    for (r, row) in a.iter_mut().enumerate() {
        for (c, x) in row.iter_mut().enumerate() {
            *x = match (r < k1, c < k2) {
                (true, true) => cost[r][c],
                (true, false) => null1[r],
                (false, true) => null2[c],
                (false, false) => 0.0,
            };
        }
    }
    let col = assign(&a);
    let mut m = Matching::default();
    for (i, &c) in col.iter().enumerate().take(k1) {
        if c < k2 {
            m.pairs.push((i, c));
        } else {
            m.unmatched1.push(i);
        }
    }
    for &c in col.iter().skip(k1) {
        if c < k2 {
            m.unmatched2.push(c);
        }
    }
    m.unmatched2.sort_unstable();
    m
}
