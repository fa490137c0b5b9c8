use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointConfig {
    /// Weight of the local consistency loss.
    pub omega: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self { omega: 1.0 }
    }
}

/// A scalar loss with its gradient over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LossWithGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// `L_g + ω · L_lc` for both the value and the gradient. With `ω = 0` the
/// scene-level loss is returned unchanged.
pub fn joint_loss(global: &LossWithGrad, local: &LossWithGrad, cfg: &JointConfig) -> Result<LossWithGrad> {
    if !(cfg.omega >= 0.0) {
        return Err(Error::Config(format!("omega must be non-negative, got {}", cfg.omega)));
    }
    if cfg.omega == 0.0 {
        return Ok(global.clone());
    }
    if global.grad.len() != local.grad.len() {
        return Err(Error::InvalidInput("gradient lengths differ".into()));
    }
    Ok(LossWithGrad {
        value: global.value + cfg.omega * local.value,
        grad: global
            .grad
            .iter()
            .zip(&local.grad)
            .map(|(g, l)| g + cfg.omega * l)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighting() {
        let g = LossWithGrad { value: 2.0, grad: vec![1.0, -1.0] };
        let l = LossWithGrad { value: 3.0, grad: vec![0.5, 2.0] };
        assert_eq!(joint_loss(&g, &l, &JointConfig { omega: 0.0 }).unwrap(), g);
        let j = joint_loss(&g, &l, &JointConfig { omega: 1.0 }).unwrap();
        assert_eq!(j.value, 5.0);
        assert_eq!(j.grad, vec![1.5, 1.0]);
        assert!(joint_loss(&g, &l, &JointConfig { omega: -1.0 }).is_err());
    }
}
