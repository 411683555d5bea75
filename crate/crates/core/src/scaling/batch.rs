use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Critical token batch size B* = d · D^(−γ), reduced by a safety margin and
/// rounded down to a power of two.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchSizeLaw {
    pub d: f64,
    pub gamma: f64,
    pub safety_reduction: f64,
}

impl Default for BatchSizeLaw {
    fn default() -> Self {
        BatchSizeLaw {
            d: 22.91,
            gamma: -0.47,
            safety_reduction: 0.20,
        }
    }
}

impl BatchSizeLaw {
    pub fn critical(&self, tokens: f64) -> f64 {
        self.d * tokens.powf(-self.gamma)
    }
}

/// Largest power of two not above `x` (at least 1).
pub fn floor_pow2(x: f64) -> u64 {
    if x < 2.0 {
        return 1;
    }
    let mut p = 1u64 << (x.log2().floor() as u32).min(63);
    while p > 1 && p as f64 > x {
        p >>= 1;
    }
    while p < (1 << 63) && (p << 1) as f64 <= x {
        p <<= 1;
    }
    p
}

/// Tokens per batch for a run of `tokens` training tokens.
pub fn select_batch_size(tokens: f64, law: &BatchSizeLaw) -> Result<u64> {
    if !(tokens > 0.0 && tokens.is_finite()) {
        return Err(Error::invalid(format!(
            "tokens must be positive, got {tokens}"
        )));
    }
    if !(0.0..1.0).contains(&law.safety_reduction) || !(law.d > 0.0) {
        return Err(Error::invalid(
            "batch law needs d > 0 and safety_reduction in [0, 1)",
        ));
    }
    Ok(floor_pow2(
        law.critical(tokens) * (1.0 - law.safety_reduction),
    ))
}
