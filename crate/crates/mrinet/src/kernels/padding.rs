use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial padding rule for convolution and pooling windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output size is `ceil(in / stride)`; input is zero-padded as needed,
    /// with the extra pixel (for odd totals) on the bottom/right.
    Same,
    /// No padding; output size is `floor((in - k) / stride) + 1`.
    Valid,
}

/// Output size along one spatial axis.
pub fn out_dim(op: &'static str, in_dim: usize, k: usize, stride: usize, padding: Padding) -> Result<usize> {
    debug_assert!(stride >= 1);
    match padding {
        Padding::Same => Ok(in_dim.div_ceil(stride)),
        Padding::Valid => {
            if k > in_dim {
                return Err(Error::Dimension { op, axis: "window", expected: in_dim, got: k });
            }
            Ok((in_dim - k) / stride + 1)
        }
    }
}

/// Padding inserted before the first element (top or left) along one axis.
/// Zero for valid padding.
pub fn pad_before(in_dim: usize, k: usize, stride: usize, padding: Padding) -> usize {
    match padding {
        Padding::Valid => 0,
        Padding::Same => {
            let out = in_dim.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(in_dim);
            total / 2
        }
    }
}
