use nalgebra::DMatrix;

use super::svd::{svd_square, Svd};
use crate::error::{Error, Result};

/// Default singular-value exponent.
pub const DEFAULT_EPN_ALPHA: f64 = 0.5;

/// Lower bound on `|s_j² − s_i²|` in the backward cross terms.
const GAP_FLOOR: f64 = 1e-6;
/// Lower bound on singular values in the `α·s^(α−1)` backward term.
const SINGULAR_FLOOR: f64 = 1e-12;

/// `U · diag(s^α) · Vᵀ`.
pub fn epn(m: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    check_alpha(alpha)?;
    let svd = svd_square(m)?;
    Ok(power(&svd, alpha))
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("ePN exponent must be in (0, 1], got {alpha}")));
    }
    Ok(())
}

pub(crate) fn power(svd: &Svd, alpha: f64) -> DMatrix<f64> {
    if alpha == 1.0 {
        svd.recompose()
    } else {
        svd.recompose_with(|s| s.powf(alpha))
    }
}

/// Pulls `d loss / d(U diag(s^α) Vᵀ)` back to `d loss / dM` through the
/// SVD of `M`.
///
/// With `P = Uᵀ dM V` the differentials are `ds_i = P_ii` and the rotation
/// generators `Ω_U = Uᵀ dU`, `Ω_V = Vᵀ dV` have off-diagonal entries
/// `(s_j P_ij + s_i P_ji) / (s_j² − s_i²)` and
/// `(s_i P_ij + s_j P_ji) / (s_j² − s_i²)`. Collecting the coefficients of
/// `P` in `⟨Uᵀ Ḡ V, Ω_U T + dT − T Ω_V⟩` (with `T = diag(s^α)`) gives a
/// matrix `K` and `dM̄ = U K Vᵀ`.
pub fn epn_backward(svd: &Svd, alpha: f64, upstream: &DMatrix<f64>) -> DMatrix<f64> {
    let n = svd.s.len();
    let h = svd.u.transpose() * upstream * &svd.v;
    let s = &svd.s;
    let t: Vec<f64> = s.iter().map(|&v| v.powf(alpha)).collect();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let si = s[i].max(SINGULAR_FLOOR);
        k[(i, i)] += h[(i, i)] * alpha * si.powf(alpha - 1.0);
        for j in 0..n {
            if i == j || h[(i, j)] == 0.0 {
                continue;
            }
            let mut gap = s[j] * s[j] - s[i] * s[i];
            if gap.abs() < GAP_FLOOR {
                let sign = if gap != 0.0 {
                    gap.signum()
                } else if i < j {
                    -1.0
                } else {
                    1.0
                };
                gap = sign * GAP_FLOOR;
            }
            let hij = h[(i, j)];
            k[(i, j)] += hij * (t[j] * s[j] - t[i] * s[i]) / gap;
            k[(j, i)] += hij * (t[j] * s[i] - t[i] * s[j]) / gap;
        }
    }
    &svd.u * k * svd.v.transpose()
}
