use candle_core::Tensor;

use crate::error::{invalid, Result};

/// Channel Gram matrix normalized by the number of spatial positions.
///
/// Accepts `(C, H, W)` giving `(C, C)`, or `(B, C, H, W)` giving `(B, C, C)`.
pub fn gram(features: &Tensor) -> Result<Tensor> {
    match features.rank() {
        3 => Ok(gram(&features.unsqueeze(0)?)?.squeeze(0)?),
        4 => {
            let (b, c, h, w) = features.dims4()?;
            if h * w == 0 || c == 0 {
                return Err(invalid("gram of an empty feature map"));
            }
            let f = features.reshape((b, c, h * w))?;
            Ok(f.matmul(&f.t()?)?.affine(1.0 / (h * w) as f64, 0.0)?)
        }
        r => Err(invalid(format!("gram expects rank 3 or 4, got {r}"))),
    }
}
