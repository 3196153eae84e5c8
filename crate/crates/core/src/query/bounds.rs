use serde::Serialize;

use crate::error::{invalid, Result};
use crate::spectral::SpectralWeights;

/// `P(W = k)` against the revealment-predictability bound `2 eps + 2 delta k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSlack {
    pub k: usize,
    pub weight: f64,
    pub bound: f64,
    pub slack: f64,
}

/// One row per level `k = 1..=|B|`; a negative slack is a violation.
pub fn ss_bound_check(weights: &SpectralWeights, delta: f64, epsilon: f64) -> Vec<BoundSlack> {
    let levels = (weights.num_bits() as usize).max(weights.weights().len());
    (1..=levels)
        .map(|k| {
            let weight = weights.weight(k);
            let bound = 2.0 * epsilon + 2.0 * delta * k as f64;
            BoundSlack {
                k,
                weight,
                bound,
                slack: bound - weight,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorollaryBounds {
    pub delta: f64,
    pub epsilon: f64,
    /// Upper bound on the discrete integrated time.
    pub tau: f64,
}

impl CorollaryBounds {
    /// Upper bound on the continuous-time autocorrelation at time `t > 0`.
    pub fn rho(&self, t: f64) -> f64 {
        2.0 * (self.epsilon / t + self.delta / (t * t))
    }
}

/// `tau <= 5 n ln(n) eps + 3 n sqrt(delta)` and
/// `rho~(t) <= 2 (eps / t + delta / t^2)`.
pub fn corollary_bounds(delta: f64, epsilon: f64, num_bits: usize) -> Result<CorollaryBounds> {
    if num_bits < 2 {
        return Err(invalid("n", "need at least two bits"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1], got {delta}")));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(invalid("epsilon", format!("must lie in [0, 1], got {epsilon}")));
    }
    let n = num_bits as f64;
    Ok(CorollaryBounds {
        delta,
        epsilon,
        tau: 5.0 * n * n.ln() * epsilon + 3.0 * n * delta.sqrt(),
    })
}
