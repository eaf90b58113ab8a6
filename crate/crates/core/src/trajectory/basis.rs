use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::yj::{yj_fit, yj_forward, yj_inverse};
use crate::error::{Error, Result};
use crate::esrvf::{EsrvfBranch, EsrvfChild, EsrvfTree, Vec3};
use crate::metric::MetricWeights;
use crate::spatreg::{align, pad_to_template, register_trees, RegOptions, RegistrationMap};
use crate::stats::karcher_mean_trees;
use crate::treemodel::Point;

pub const BASIS_FORMAT: &str = "arbor4d-basis/1";

/// Slot structure shared by all vectorized trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Template>,
}

impl Template {
    pub fn of(q: &EsrvfTree) -> Template {
        Template {
            samples: q.main.len(),
            children: q.children.iter().map(|c| Template::of(&c.subtree)).collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        4 * self.samples + self.children.iter().map(|c| 1 + c.dimension()).sum::<usize>()
    }

    pub fn fits(&self, q: &EsrvfTree) -> bool {
        q.main.len() == self.samples
            && q.children.len() == self.children.len()
            && self.children.iter().zip(&q.children).all(|(t, c)| t.fits(&c.subtree))
    }
}

/// Flattens a tree in depth-first slot order: velocity samples, radii,
/// then each child's `s` followed by its subtree.
pub fn vectorize(q: &EsrvfTree, template: &Template) -> Result<Vec<f64>> {
    if !template.fits(q) {
        return Err(Error::Mismatch("tree does not fit the basis template".into()));
    }
    let mut out = Vec::with_capacity(template.dimension());
    push_tree(q, &mut out);
    Ok(out)
}

fn push_tree(q: &EsrvfTree, out: &mut Vec<f64>) {
    for v in &q.main.v {
        out.extend_from_slice(&[v.x, v.y, v.z]);
    }
    out.extend_from_slice(&q.main.rad);
    for c in &q.children {
        out.push(c.s);
        push_tree(&c.subtree, out);
    }
}

/// Inverse of [`vectorize`]; negative radii are clamped to zero and
/// counted, bifurcation parameters are clamped into `[0, 1]`.
pub fn devectorize(x: &[f64], template: &Template) -> Result<(EsrvfTree, usize)> {
    if x.len() != template.dimension() {
        return Err(Error::Mismatch(format!(
            "vector has {} entries, template needs {}",
            x.len(),
            template.dimension()
        )));
    }
    let mut pos = 0;
    let mut clamped = 0;
    let t = read_tree(x, template, &mut pos, &mut clamped);
    Ok((t, clamped))
}

fn read_tree(x: &[f64], t: &Template, pos: &mut usize, clamped: &mut usize) -> EsrvfTree {
    let n = t.samples;
    let v: Vec<Vec3> = (0..n)
        .map(|i| Vec3::new(x[*pos + 3 * i], x[*pos + 3 * i + 1], x[*pos + 3 * i + 2]))
        .collect();
    *pos += 3 * n;
    let rad: Vec<f64> = x[*pos..*pos + n]
        .iter()
        .map(|r| {
            if *r < 0.0 {
                *clamped += 1;
                0.0
            } else {
                *r
            }
        })
        .collect();
    *pos += n;
    let mut children = Vec::with_capacity(t.children.len());
    for ct in &t.children {
        let s = x[*pos].clamp(0.0, 1.0);
        *pos += 1;
        children.push(EsrvfChild {
            s,
            subtree: read_tree(x, ct, pos, clamped),
        });
    }
    EsrvfTree {
        main: EsrvfBranch { v, rad, origin: Point::zeros() },
        children,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasisOptions {
    /// Fraction of variance the retained components must reach.
    pub energy: f64,
    pub max_components: Option<usize>,
    /// Gaussianize each coordinate with a fitted Yeo-Johnson exponent.
    pub yeo_johnson: bool,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions { energy: 0.99, max_components: None, yeo_johnson: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeShapeBasis {
    pub format: String,
    pub template: Template,
    pub mean: Vec<f64>,
    /// One Yeo-Johnson exponent per coordinate (`1` is the identity).
    pub lambdas: Vec<f64>,
    /// Full retained spectrum, nonincreasing.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    /// Number of components used by `project` and `reconstruct`.
    pub k: usize,
    pub total_variance: f64,
}

impl TreeShapeBasis {
    /// Cumulative explained-variance fraction for 1, 2, … components.
    pub fn energy_curve(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|l| {
                acc += l;
                if self.total_variance > 0.0 {
                    (acc / self.total_variance).min(1.0)
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Uses the first `k` components (capped at the spectrum size).
    pub fn with_components(&self, k: usize) -> TreeShapeBasis {
        let mut b = self.clone();
        b.k = k.min(self.eigenvalues.len());
        b
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.lambdas).map(|(x, l)| yj_forward(*x, *l)).collect()
    }

    pub fn project_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Mismatch("vector does not match the basis dimension".into()));
        }
        let y: Vec<f64> = self.transform(x).iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        Ok((0..self.k)
            .map(|i| dot(&y, &self.eigenvectors[i]) / self.eigenvalues[i].sqrt())
            .collect())
    }

    pub fn reconstruct_vector(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.k {
            return Err(Error::Mismatch(format!(
                "coefficient vector has {} entries, basis has {}",
                p.len(),
                self.k
            )));
        }
        let mut y = self.mean.clone();
        for (i, a) in p.iter().enumerate() {
            let f = a * self.eigenvalues[i].sqrt();
            for (yy, e) in y.iter_mut().zip(&self.eigenvectors[i]) {
                *yy += f * e;
            }
        }
        Ok(y.iter().zip(&self.lambdas).map(|(y, l)| yj_inverse(*y, *l)).collect())
    }

    /// Coefficients of a tree already registered to the template.
    pub fn project(&self, q: &EsrvfTree) -> Result<Vec<f64>> {
        self.project_vector(&vectorize(q, &self.template)?)
    }

    /// Tree for the given coefficients, with the number of clamped radii.
    pub fn reconstruct(&self, p: &[f64]) -> Result<(EsrvfTree, usize)> {
        devectorize(&self.reconstruct_vector(p)?, &self.template)
    }

    pub fn mean_tree(&self) -> Result<EsrvfTree> {
        Ok(self.reconstruct(&vec![0.0; self.k])?.0)
    }

    /// Registers `q` onto the mean tree, pads it to the template and projects.
    pub fn register_and_project(
        &self,
        q: &EsrvfTree,
        w: &MetricWeights,
        opts: &RegOptions,
    ) -> Result<Vec<f64>> {
        if self.template.fits(q) {
            return self.project(q);
        }
        let mean = self.mean_tree()?;
        let mut reg_opts = opts.clone();
        reg_opts.exact_permutation = false;
        let r = register_trees(&mean, q, w, &reg_opts)?;
        let (ext, aligned) = align(&mean, q, &r.map)?;
        if !self.template.fits(&ext) {
            return Err(Error::Mismatch(
                "tree has branches with no slot in the basis template".into(),
            ));
        }
        self.project(&aligned)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// PCA basis of trees that already share one slot structure.
pub fn fit_basis_aligned(trees: &[EsrvfTree], opts: &BasisOptions) -> Result<TreeShapeBasis> {
    if trees.len() < 2 {
        return Err(Error::Argument("a shape basis needs at least 2 trees".into()));
    }
    if !(opts.energy > 0.0 && opts.energy <= 1.0) {
        return Err(Error::invalid("energy", format!("must lie in (0, 1], got {}", opts.energy)));
    }
    let template = Template::of(&trees[0]);
    let raw = trees
        .iter()
        .map(|q| vectorize(q, &template))
        .collect::<Result<Vec<_>>>()?;
    let n = raw.len();
    let dim = template.dimension();
    let lambdas: Vec<f64> = if opts.yeo_johnson {
        (0..dim)
            .into_par_iter()
            .map(|j| {
                let col: Vec<f64> = raw.iter().map(|x| x[j]).collect();
                yj_fit(&col, -5.0, 5.0, 1e-4)
            })
            .collect()
    } else {
        vec![1.0; dim]
    };
    let ys: Vec<Vec<f64>> = raw
        .iter()
        .map(|x| x.iter().zip(&lambdas).map(|(x, l)| yj_forward(*x, *l)).collect())
        .collect();
    let mut mean = vec![0.0; dim];
    for y in &ys {
        for (m, v) in mean.iter_mut().zip(y) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = ys
        .iter()
        .map(|y| y.iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    let (eigenvalues, eigenvectors, total_variance) = gram_pca(&centered);
    let k = components_for(&eigenvalues, total_variance, opts.energy)
        .min(opts.max_components.unwrap_or(usize::MAX));
    Ok(TreeShapeBasis {
        format: BASIS_FORMAT.into(),
        template,
        mean,
        lambdas,
        eigenvalues,
        eigenvectors,
        k,
        total_variance,
    })
}

/// Eigenpairs of the sample covariance `YᵀY/(n−1)` of the centered rows,
/// through the `n × n` Gram matrix. Returns (values, orthonormal vectors,
/// total variance).
pub(crate) fn gram_pca(centered: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>, f64) {
    let n = centered.len();
    let denom = (n.max(2) - 1) as f64;
    let gram = DMatrix::from_fn(n, n, |i, j| dot(&centered[i], &centered[j]) / denom);
    let total: f64 = (0..n).map(|i| gram[(i, i)]).sum();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let top = order.first().map(|i| eig.eigenvalues[*i]).unwrap_or(0.0);
    let mut values = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let dim = centered.first().map_or(0, |c| c.len());
    for i in order {
        let l = eig.eigenvalues[i];
        if !(l > 1e-13 * top) || l <= 1e-20 {
            break;
        }
        let mut e = vec![0.0; dim];
        for (r, row) in centered.iter().enumerate() {
            let c = eig.eigenvectors[(r, i)];
            for (x, y) in e.iter_mut().zip(row) {
                *x += c * y;
            }
        }
        // Gram-Schmidt against earlier vectors to remove round-off drift.
        for prev in &vectors {
            let p = dot(&e, prev);
            for (x, y) in e.iter_mut().zip(prev) {
                *x -= p * y;
            }
        }
        let norm = dot(&e, &e).sqrt();
        if norm == 0.0 {
            break;
        }
        for x in &mut e {
            *x /= norm;
        }
        vectors.push(e);
        values.push(l);
    }
    let total = if values.is_empty() { 0.0 } else { total };
    (values, vectors, total)
}

pub(crate) fn components_for(values: &[f64], total: f64, energy: f64) -> usize {
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, l) in values.iter().enumerate() {
        acc += l;
        if acc >= energy * total * (1.0 - 1e-12) {
            return i + 1;
        }
    }
    values.len()
}

#[derive(Debug, Clone)]
pub struct BasisFit {
    pub basis: TreeShapeBasis,
    /// Inputs registered and padded to the basis template.
    pub aligned: Vec<EsrvfTree>,
    pub maps: Vec<RegistrationMap>,
}

/// Karcher mean of the trees, registration of every tree onto it (the
/// template grows by a slot whenever a tree brings an unmatched subtree),
/// then PCA of the Yeo-Johnson-transformed vectors.
pub fn fit_basis(
    trees: &[EsrvfTree],
    w: &MetricWeights,
    reg: &RegOptions,
    opts: &BasisOptions,
) -> Result<BasisFit> {
    if trees.len() < 2 {
        return Err(Error::Argument("a shape basis needs at least 2 trees".into()));
    }
    let mut reg = reg.clone();
    reg.exact_permutation = false;
    let karcher = karcher_mean_trees(trees, w, &reg, 1)?;
    let mut template = karcher.mean;
    let mut aligned = Vec::with_capacity(trees.len());
    let mut maps = Vec::with_capacity(trees.len());
    for q in trees {
        let r = register_trees(&template, q, w, &reg)?;
        let (ext, a) = align(&template, q, &r.map)?;
        template = ext;
        aligned.push(a);
        maps.push(r.map);
    }
    let aligned = aligned
        .iter()
        .map(|a| pad_to_template(a, &template))
        .collect::<Result<Vec<_>>>()?;
    let basis = fit_basis_aligned(&aligned, opts)?;
    Ok(BasisFit { basis, aligned, maps })
}

pub fn serialize_basis(b: &TreeShapeBasis) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(b)?)
}

pub fn parse_basis(bytes: &[u8]) -> Result<TreeShapeBasis> {
    crate::treemodel::io::check_format(bytes, BASIS_FORMAT)?;
    let b: TreeShapeBasis = serde_json::from_slice(bytes)?;
    let dim = b.template.dimension();
    if b.mean.len() != dim || b.lambdas.len() != dim {
        return Err(Error::invalid("mean", "length does not match the template"));
    }
    if b.eigenvectors.len() != b.eigenvalues.len() || b.eigenvectors.iter().any(|e| e.len() != dim) {
        return Err(Error::invalid("eigenvectors", "shape does not match the template"));
    }
    if b.k > b.eigenvalues.len() {
        return Err(Error::invalid("k", "exceeds the number of eigenpairs"));
    }
    Ok(b)
}
