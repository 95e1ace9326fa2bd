//! How far back a setting conspiracy is pushed: log₁₀(lookback / latency).

use serde::{Deserialize, Serialize};

use crate::cosmology::{lookback_time, CosmologyParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementFactor {
    pub lookback_s: f64,
    pub qrng_latency_s: f64,
    pub orders_of_magnitude: f64,
    /// whole orders, rounded down
    pub whole_orders: i64,
}

pub fn improvement_factor(lookback_s: f64, qrng_latency_s: f64) -> Result<ImprovementFactor> {
    if !(lookback_s > 0.0 && qrng_latency_s > 0.0)
        || !lookback_s.is_finite()
        || !qrng_latency_s.is_finite()
    {
        return Err(Error::invalid(
            "lookback and latency must be positive and finite",
        ));
    }
    let orders = (lookback_s / qrng_latency_s).log10();
    Ok(ImprovementFactor {
        lookback_s,
        qrng_latency_s,
        orders_of_magnitude: orders,
        whole_orders: orders.floor() as i64,
    })
}

/// As [`improvement_factor`] with the proper lookback time to redshift `z`.
pub fn improvement_factor_at_redshift(
    z: f64,
    qrng_latency_s: f64,
    params: &CosmologyParams,
) -> Result<ImprovementFactor> {
    improvement_factor(lookback_time(z, params)?, qrng_latency_s)
}
