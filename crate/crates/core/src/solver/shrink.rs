use crate::error::{Error, Result};

#[inline]
pub(crate) fn shrink(v: f64, theta: f64) -> f64 {
    if v > theta {
        v - theta
    } else if v < -theta {
        v + theta
    } else {
        0.0
    }
}

/// Elementwise `sign(v) · max(|v| − θ, 0)`.
pub fn soft_threshold(v: &[f64], theta: f64) -> Result<Vec<f64>> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be non-negative, got {theta}")));
    }
    Ok(v.iter().map(|&e| shrink(e, theta)).collect())
}
