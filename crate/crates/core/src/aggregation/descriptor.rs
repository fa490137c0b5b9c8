use nalgebra::DMatrix;

use super::epn::{check_alpha, epn_backward, power};
use super::pool::{pool_backward, second_order_pool, PooledMatrix};
use super::svd::{svd_square, Svd};
use crate::encoder::FeatureMap;
use crate::error::Result;

/// Unit-norm flattened descriptor. `degenerate` marks the all-zero
/// descriptor produced from an all-zero pooled matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalDescriptor {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

impl GlobalDescriptor {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &GlobalDescriptor) -> f64 {
        self.distance2(other).sqrt()
    }

    pub fn distance2(&self, other: &GlobalDescriptor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Row-major flatten followed by division by the Frobenius norm.
pub fn flatten_normalize(m: &DMatrix<f64>) -> GlobalDescriptor {
    let (g, _) = flatten_with_norm(m);
    g
}

fn flatten_with_norm(m: &DMatrix<f64>) -> (GlobalDescriptor, f64) {
    let flat: Vec<f64> = m.transpose().as_slice().to_vec();
    let norm = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return (
            GlobalDescriptor {
                values: vec![0.0; flat.len()],
                degenerate: true,
            },
            0.0,
        );
    }
    (GlobalDescriptor::new(flat.iter().map(|v| v / norm).collect()), norm)
}

/// Intermediate values needed by [`aggregate_backward`].
#[derive(Clone, Debug)]
pub struct AggregateCache {
    pub pooled: PooledMatrix,
    pub svd: Svd,
    pub alpha: f64,
    pub norm: f64,
    pub descriptor: GlobalDescriptor,
}

pub fn aggregate(fm: &FeatureMap, alpha: f64) -> Result<GlobalDescriptor> {
    aggregate_with_cache(fm, alpha).map(|c| c.descriptor)
}

pub fn aggregate_with_cache(fm: &FeatureMap, alpha: f64) -> Result<AggregateCache> {
    check_alpha(alpha)?;
    let pooled = second_order_pool(fm)?;
    let svd = svd_square(&pooled.matrix)?;
    let powered = power(&svd, alpha);
    let (descriptor, norm) = flatten_with_norm(&powered);
    Ok(AggregateCache {
        pooled,
        svd,
        alpha,
        norm,
        descriptor,
    })
}

/// `d loss / d features` given `d loss / d g`.
pub fn aggregate_backward(fm: &FeatureMap, cache: &AggregateCache, upstream: &[f64]) -> FeatureMap {
    let d = fm.dim();
    assert_eq!(upstream.len(), d * d, "upstream gradient must have d² entries");
    if cache.descriptor.degenerate {
        return FeatureMap::zeros(fm.len(), d);
    }
    let g = &cache.descriptor.values;
    let proj: f64 = g.iter().zip(upstream).map(|(a, b)| a * b).sum();
    let flat_grad: Vec<f64> = upstream
        .iter()
        .zip(g)
        .map(|(u, gi)| (u - gi * proj) / cache.norm)
        .collect();
    let powered_grad = DMatrix::from_row_slice(d, d, &flat_grad);
    let pooled_grad = epn_backward(&cache.svd, cache.alpha, &powered_grad);
    pool_backward(fm, &cache.pooled, &pooled_grad)
}
