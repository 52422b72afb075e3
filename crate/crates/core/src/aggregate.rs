//! Permutation-invariant fusion of projected views.
//!
//! Views are always accumulated in ascending `view_id` order, so the pooled
//! tensor is bitwise identical for any input ordering.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::warp::ProjectedFeatureMap;

/// Pooled `C × H_g × W_g` ground-plane representation.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundFeatures<T> {
    pub data: Tensor<T>,
    pub n_views_used: usize,
    /// Per-cell count of covering views; present for coverage-normalized pooling.
    pub coverage: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PoolMode {
    /// Plain mean over the N views.
    #[default]
    Mean,
    /// Each cell divided by the number of views whose mask covers it.
    CoverageNormalized,
}

/// Indices of `stack` sorted by view id; rejects duplicates.
fn canonical_order<T>(stack: &[&ProjectedFeatureMap<T>]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..stack.len()).collect();
    order.sort_by_key(|&i| stack[i].view_id);
    if order.windows(2).any(|w| stack[w[0]].view_id == stack[w[1]].view_id) {
        return Err(Error::Shape("duplicate view id in pooling stack".into()));
    }
    Ok(order)
}

pub fn average_pool<T: Scalar>(stack: &[ProjectedFeatureMap<T>]) -> Result<GroundFeatures<T>> {
    let refs: Vec<_> = stack.iter().collect();
    pool(&refs, PoolMode::Mean)
}

pub fn pool<T: Scalar>(stack: &[&ProjectedFeatureMap<T>], mode: PoolMode) -> Result<GroundFeatures<T>> {
    let first = stack.first().ok_or(Error::EmptyInput("average_pool needs at least one view"))?;
    for fm in stack {
        fm.data.check_same_shape(&first.data)?;
        if fm.mask.len() != first.mask.len() {
            return Err(Error::Shape("mask length mismatch".into()));
        }
    }
    let order = canonical_order(stack)?;
    let mut acc = stack[order[0]].data.clone();
    for &i in &order[1..] {
        acc.add_assign(&stack[i].data)?;
    }
    let n = stack.len();
    match mode {
        PoolMode::Mean => {
            let n_t = T::from_usize_lossy(n);
            acc.data_mut().iter_mut().for_each(|v| *v = *v / n_t);
            Ok(GroundFeatures {
                data: acc,
                n_views_used: n,
                coverage: None,
            })
        }
        PoolMode::CoverageNormalized => {
            let cells = first.mask.len();
            let mut count = vec![0usize; cells];
            for fm in stack {
                for (c, &m) in count.iter_mut().zip(&fm.mask) {
                    *c += m as usize;
                }
            }
            for plane in acc.data_mut().chunks_exact_mut(cells) {
                for (v, &k) in plane.iter_mut().zip(&count) {
                    *v = if k == 0 { T::zero() } else { *v / T::from_usize_lossy(k) };
                }
            }
            Ok(GroundFeatures {
                data: acc,
                n_views_used: n,
                coverage: Some(count),
            })
        }
    }
}

/// Gradient reaching one projected view from the pooled gradient. Identical
/// for every view, since pooling is linear with equal weights.
pub fn pool_backward<T: Scalar>(pooled: &GroundFeatures<T>, grad_pooled: &Tensor<T>) -> Result<Tensor<T>> {
    pooled.data.check_same_shape(grad_pooled)?;
    match &pooled.coverage {
        None => {
            let n = T::from_usize_lossy(pooled.n_views_used);
            Ok(grad_pooled.map(|g| g / n))
        }
        Some(count) => {
            let cells = count.len();
            let mut g = grad_pooled.clone();
            for plane in g.data_mut().chunks_exact_mut(cells) {
                for (v, &k) in plane.iter_mut().zip(count) {
                    *v = if k == 0 { T::zero() } else { *v / T::from_usize_lossy(k) };
                }
            }
            Ok(g)
        }
    }
}

/// Removes one uniformly chosen view when at least two are present.
pub fn drop_view<V, R: Rng + ?Sized>(mut views: Vec<V>, rng: &mut R) -> Vec<V> {
    if views.len() >= 2 {
        let k = rng.gen_range(0..views.len());
        views.remove(k);
    }
    views
}
