//! Locally generated trigger events (sky glow, dark counts) against the
//! noise-loophole budgets.

use serde::{Deserialize, Serialize};

use crate::bellsim::TestKind;
use crate::error::{Error, Result};

/// Largest tolerable local fraction of setting triggers, CHSH.
pub const CHSH_NOISE_LIMIT: f64 = 0.046;
/// Largest tolerable local fraction of setting triggers, GHZ.
pub const GHZ_NOISE_LIMIT: f64 = 0.415;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// airglow, light pollution, zodiacal light and scattered starlight, events/s
    #[serde(default)]
    pub background_rate: f64,
    /// events/s
    #[serde(default)]
    pub dark_count_rate: f64,
}

impl NoiseModel {
    pub fn new(background_rate: f64, dark_count_rate: f64) -> Result<Self> {
        let m = Self {
            background_rate,
            dark_count_rate,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background_rate >= 0.0 && self.dark_count_rate >= 0.0)
            || !self.total_rate().is_finite()
        {
            return Err(Error::invalid("noise rates must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn total_rate(&self) -> f64 {
        self.background_rate + self.dark_count_rate
    }
}

/// Probability that a trigger is of local origin: noise / (signal + noise).
pub fn local_fraction(signal_rate: f64, noise: &NoiseModel) -> Result<f64> {
    noise.validate()?;
    if !(signal_rate.is_finite() && signal_rate >= 0.0) {
        return Err(Error::invalid("signal rate must be finite and >= 0"));
    }
    let total = signal_rate + noise.total_rate();
    if total <= 0.0 {
        return Err(Error::invalid("signal and noise rates are both zero"));
    }
    Ok(noise.total_rate() / total)
}

pub fn noise_limit(kind: TestKind) -> f64 {
    match kind {
        TestKind::Chsh => CHSH_NOISE_LIMIT,
        TestKind::Ghz => GHZ_NOISE_LIMIT,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetVerdict {
    pub test_kind: TestKind,
    pub fraction: f64,
    pub limit: f64,
    pub pass: bool,
    /// limit − fraction
    pub margin: f64,
}

/// Passes iff the local fraction is strictly below the budget.
pub fn budget_check(fraction: f64, test_kind: TestKind) -> Result<BudgetVerdict> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "fraction {fraction} outside [0, 1]"
        )));
    }
    let limit = noise_limit(test_kind);
    Ok(BudgetVerdict {
        test_kind,
        fraction,
        limit,
        pass: fraction < limit,
        margin: limit - fraction,
    })
}
