use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// `M = U · diag(s) · Vᵀ` with `s` non-negative and descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn recompose(&self) -> DMatrix<f64> {
        self.recompose_with(|s| s)
    }

    /// `U · diag(f(s)) · Vᵀ`.
    pub fn recompose_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= f(self.s[j]);
        }
        us * self.v.transpose()
    }
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix.
///
/// Columns of `A·V` are orthogonalized by plane rotations until every pair
/// is orthogonal to working precision; singular values are the column
/// norms. Columns belonging to zero singular values are completed to an
/// orthonormal basis.
pub fn svd_square(m: &DMatrix<f64>) -> Result<Svd> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidInput(format!("expected a square matrix, got {}x{}", n, m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let eps = f64::EPSILON;
    // columns below this squared norm are numerically zero
    let negligible = (n as f64 * eps * m.norm()).powi(2);
    let tol = n as f64 * eps;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == 0.0
                    || alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!("Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")));
    }

    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let smax = norms.iter().copied().fold(0.0, f64::max);
    let tiny = smax * n as f64 * eps;

    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut vs = DMatrix::<f64>::zeros(n, n);
    let mut s = DVector::<f64>::zeros(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        vs.set_column(k, &v.column(j));
        if norms[j] > tiny && norms[j] > 0.0 {
            s[k] = norms[j];
            u.set_column(k, &(a.column(j) / norms[j]));
        } else {
            s[k] = 0.0;
            missing.push(k);
        }
    }
    complete_basis(&mut u, &missing);
    Ok(Svd { u, s, v: vs })
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all
/// other columns (Gram-Schmidt over the standard basis).
fn complete_basis(u: &mut DMatrix<f64>, missing: &[usize]) {
    let n = u.nrows();
    let mut filled: Vec<bool> = (0..n).map(|k| !missing.contains(&k)).collect();
    for &k in missing {
        let mut best: Option<DVector<f64>> = None;
        for e in 0..n {
            let mut cand = DVector::<f64>::zeros(n);
            cand[e] = 1.0;
            for _ in 0..2 {
                for j in (0..n).filter(|&j| filled[j]) {
                    let col = u.column(j);
                    let proj = col.dot(&cand);
                    cand -= col * proj;
                }
            }
            let norm = cand.norm();
            if best.as_ref().is_none_or(|b| norm > b.norm()) {
                best = Some(cand);
            }
        }
        let b = best.expect("n > 0");
        let norm = b.norm();
        u.set_column(k, &(b / norm));
        filled[k] = true;
    }
}
