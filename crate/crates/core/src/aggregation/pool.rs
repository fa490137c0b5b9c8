use nalgebra::DMatrix;

use crate::encoder::FeatureMap;
use crate::error::{Error, Result};

/// `F[x][y] = max_p f_x(p)·f_y(p)` together with the point attaining each
/// maximum (lowest index on ties).
#[derive(Clone, Debug, PartialEq)]
pub struct PooledMatrix {
    pub matrix: DMatrix<f64>,
    /// Row-major `d × d` argmax point indices.
    pub argmax: Vec<usize>,
}

impl PooledMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn argmax_at(&self, x: usize, y: usize) -> usize {
        self.argmax[x * self.dim() + y]
    }
}

pub fn second_order_pool(fm: &FeatureMap) -> Result<PooledMatrix> {
    if fm.is_empty() {
        return Err(Error::InvalidInput("cannot pool an empty feature map".into()));
    }
    let d = fm.dim();
    let mut best = vec![f64::NEG_INFINITY; d * d];
    let mut arg = vec![0usize; d * d];
    for (p, f) in fm.rows().enumerate() {
        for x in 0..d {
            for y in x..d {
                let v = f[x] * f[y];
                let k = x * d + y;
                if v > best[k] {
                    best[k] = v;
                    arg[k] = p;
                }
            }
        }
    }
    for x in 0..d {
        for y in 0..x {
            best[x * d + y] = best[y * d + x];
            arg[x * d + y] = arg[y * d + x];
        }
    }
    Ok(PooledMatrix {
        matrix: DMatrix::from_row_slice(d, d, &best),
        argmax: arg,
    })
}

/// Routes `d loss / dF` to the argmax point of every element.
pub fn pool_backward(fm: &FeatureMap, pooled: &PooledMatrix, upstream: &DMatrix<f64>) -> FeatureMap {
    let d = fm.dim();
    let mut grad = FeatureMap::zeros(fm.len(), d);
    for x in 0..d {
        for y in 0..d {
            let u = upstream[(x, y)];
            if u == 0.0 {
                continue;
            }
            let p = pooled.argmax_at(x, y);
            let (fx, fy) = (fm.row(p)[x], fm.row(p)[y]);
            let row = grad.row_mut(p);
            row[x] += u * fy;
            row[y] += u * fx;
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn single_point_outer_product() {
        let fm = FeatureMap::new(2, vec![1.0, 2.0]).unwrap();
        let p = second_order_pool(&fm).unwrap();
        assert_eq!(p.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
    }

    #[test]
    fn two_orthogonal_points() {
        let fm = FeatureMap::new(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let p = second_order_pool(&fm).unwrap();
        assert_eq!(p.matrix, DMatrix::identity(2, 2));
        // off-diagonal products tie at 0: lowest index wins
        assert_eq!(p.argmax_at(0, 1), 0);
        assert_eq!(p.argmax_at(1, 1), 1);
    }

    #[test]
    fn empty_is_error() {
        assert!(second_order_pool(&FeatureMap::zeros(0, 3)).is_err());
    }

    #[test]
    fn matches_brute_force_and_is_symmetric() {
        let mut r = rng::seeded(4);
        let data: Vec<f64> = (0..50 * 4).map(|_| r.random_range(-2.0..2.0)).collect();
        let fm = FeatureMap::new(4, data).unwrap();
        let p = second_order_pool(&fm).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for (i, f) in fm.rows().enumerate() {
                    if f[x] * f[y] > best {
                        best = f[x] * f[y];
                        arg = i;
                    }
                }
                assert_eq!(p.matrix[(x, y)], best);
                assert_eq!(p.argmax_at(x, y), arg);
                assert_eq!(p.matrix[(x, y)].to_bits(), p.matrix[(y, x)].to_bits());
            }
        }
    }
}
