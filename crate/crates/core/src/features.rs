//! Node feature matrices, row-shuffle corruption and SVD initialization of
//! learnable features for graphs that ship without attributes.

use crate::error::{input, Result};
use crate::graph::StaticGraph;
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub values: Matrix<T>,
    /// Learnable features are optimized together with the encoder weights.
    pub learnable: bool,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn fixed(values: Matrix<T>) -> Result<Self> {
        if !values.is_finite() {
            return input("feature matrix contains non-finite entries");
        }
        Ok(Self { values, learnable: false })
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

/// Uniformly random permutation of `0..n` (identity included).
pub fn corruption_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Row-shuffled copy of `f`: the corrupted input used to produce negative embeddings.
pub fn corrupt<T: Scalar, R: Rng + ?Sized>(f: &FeatureMatrix<T>, rng: &mut R) -> FeatureMatrix<T> {
    let perm = corruption_permutation(f.rows(), rng);
    FeatureMatrix { values: f.values.permute_rows(&perm), learnable: f.learnable }
}

/// Singular triplets of the row-normalized adjacency `D⁻¹A`, largest first.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub left: Matrix<f64>,
    pub singular_values: Vec<f64>,
    pub right: Matrix<f64>,
}

impl TruncatedSvd {
    /// `U Σ Vᵀ`.
    pub fn reconstruct(&self) -> Matrix<f64> {
        let mut us = self.left.clone();
        for i in 0..us.rows() {
            for (x, &s) in us.row_mut(i).iter_mut().zip(&self.singular_values) {
                *x *= s;
            }
        }
        us.matmul(&self.right.transpose())
    }
}

pub fn row_normalized_adjacency(g: &StaticGraph) -> Matrix<f64> {
    let n = g.node_count();
    let mut a = Matrix::zeros(n, n);
    for u in 0..n {
        let deg = g.degree(u);
        if deg == 0 {
            continue;
        }
        let w = 1.0 / deg as f64;
        for &v in g.neighbors(u) {
            a[(u, v)] = w;
        }
    }
    a
}

/// Top-`d` singular triplets of `D⁻¹A`.
pub fn truncated_svd(g: &StaticGraph, d: usize) -> Result<TruncatedSvd> {
    let n = g.node_count();
    if d > n {
        return input(format!("feature dimension {d} exceeds node count {n}"));
    }
    let a = row_normalized_adjacency(g);
    let dm = DMatrix::from_row_slice(n, n, a.as_slice());
    let svd = dm.svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    // stable sort keeps nalgebra's order among equal singular values
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    order.truncate(d);
    Ok(TruncatedSvd {
        left: Matrix::from_fn(n, d, |r, c| u[(r, order[c])]),
        singular_values: order.iter().map(|&i| svd.singular_values[i]).collect(),
        right: Matrix::from_fn(n, d, |r, c| vt[(order[c], r)]),
    })
}

/// Learnable features `U_d Σ_d` from the SVD of the row-normalized adjacency.
/// Zero-degree nodes get zero rows.
pub fn svd_init<T: Scalar>(g: &StaticGraph, d: usize) -> Result<FeatureMatrix<T>> {
    let svd = truncated_svd(g, d)?;
    let n = g.node_count();
    let values = Matrix::from_fn(n, d, |r, c| {
        if g.degree(r) == 0 {
            T::zero()
        } else {
            T::of(svd.left[(r, c)] * svd.singular_values[c])
        }
    });
    Ok(FeatureMatrix { values, learnable: true })
}
