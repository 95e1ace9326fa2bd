//! Photon rates and coincidence probabilities for setting triggers.
//!
//! Arrivals are modeled as uncorrelated Poisson events (no bunching).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact SI speed of light, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Below this mean count per arm the P ∝ μ asymptotics are labelled valid.
pub const LOW_FLUX_MU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelescopeConfig {
    pub diameter_m: f64,
    pub detector_efficiency: f64,
}

impl TelescopeConfig {
    pub fn new(diameter_m: f64, detector_efficiency: f64) -> Result<Self> {
        let t = Self {
            diameter_m,
            detector_efficiency,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.diameter_m.is_finite() && self.diameter_m > 0.0) {
            return Err(Error::invalid("telescope diameter must be positive"));
        }
        if !(0.0..=1.0).contains(&self.detector_efficiency) {
            return Err(Error::invalid("detector efficiency must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn collecting_area_m2(&self) -> f64 {
        PI * (0.5 * self.diameter_m).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkGeometry {
    /// Source-to-detector distance L.
    pub baseline_km: f64,
    /// Electronics plus switching time.
    #[serde(default)]
    pub setting_latency_s: f64,
}

impl LinkGeometry {
    pub fn new(baseline_km: f64, setting_latency_s: f64) -> Result<Self> {
        let l = Self {
            baseline_km,
            setting_latency_s,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.baseline_km.is_finite() && self.baseline_km > 0.0) {
            return Err(Error::invalid("baseline must be positive"));
        }
        if !(self.setting_latency_s.is_finite() && self.setting_latency_s >= 0.0) {
            return Err(Error::invalid("setting latency must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceFlux {
    /// photons s⁻¹ m⁻²
    pub photons_per_s_m2: f64,
}

impl SourceFlux {
    pub fn new(photons_per_s_m2: f64) -> Result<Self> {
        if !(photons_per_s_m2.is_finite() && photons_per_s_m2 >= 0.0) {
            return Err(Error::invalid("flux must be finite and >= 0"));
        }
        Ok(Self { photons_per_s_m2 })
    }
}

/// r = F·π·(d/2)², photons/s.
pub fn photon_rate(flux: SourceFlux, scope: &TelescopeConfig) -> f64 {
    flux.photons_per_s_m2 * scope.collecting_area_m2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingWindow {
    pub window_s: f64,
    /// window − setting latency
    pub slack_s: f64,
    pub valid: bool,
}

/// Δt = L/c and the slack left after the setting latency.
pub fn timing_window(link: &LinkGeometry) -> Result<TimingWindow> {
    link.validate()?;
    let window_s = link.baseline_km * 1e3 / SPEED_OF_LIGHT_M_S;
    let slack_s = window_s - link.setting_latency_s;
    Ok(TimingWindow {
        window_s,
        slack_s,
        valid: slack_s >= 0.0,
    })
}

/// μ = η·r·Δt.
pub fn expected_detections(rate: f64, efficiency: f64, window_s: f64) -> Result<f64> {
    if [rate, efficiency, window_s]
        .iter()
        .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::invalid(
            "rate, efficiency and window must be finite and >= 0",
        ));
    }
    Ok(efficiency * rate * window_s)
}

/// P = 1 − e^{−μ}.
pub fn detection_probability(mu: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::invalid(format!("mean count must be >= 0, got {mu}")));
    }
    Ok(-(-mu).exp_m1())
}

/// ∏ᵢ (1 − e^{−μᵢ}).
pub fn coincidence_probability(mus: &[f64]) -> Result<f64> {
    if mus.is_empty() {
        return Err(Error::invalid("at least one arm is required"));
    }
    mus.iter()
        .try_fold(1.0, |acc, &mu| Ok(acc * detection_probability(mu)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunsEstimate {
    pub expected_runs: f64,
    pub poisson_std: f64,
}

pub fn runs_estimate(coincidence_rate_hz: f64, duration_s: f64) -> Result<RunsEstimate> {
    if !(coincidence_rate_hz >= 0.0 && duration_s >= 0.0) {
        return Err(Error::invalid("rate and duration must be >= 0"));
    }
    let expected_runs = coincidence_rate_hz * duration_s;
    Ok(RunsEstimate {
        expected_runs,
        poisson_std: expected_runs.sqrt(),
    })
}

/// One detector arm: telescope, link and the flux it sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub telescope: TelescopeConfig,
    pub link: LinkGeometry,
    pub flux: SourceFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmStatistics {
    pub photon_rate_hz: f64,
    pub detected_rate_hz: f64,
    pub window_s: f64,
    pub slack_s: f64,
    pub mean_detections: f64,
    pub detection_probability: f64,
}

impl Arm {
    pub fn statistics(&self) -> Result<ArmStatistics> {
        self.telescope.validate()?;
        let photon_rate_hz = photon_rate(self.flux, &self.telescope);
        let window = timing_window(&self.link)?;
        let mean_detections = expected_detections(
            photon_rate_hz,
            self.telescope.detector_efficiency,
            window.window_s,
        )?;
        Ok(ArmStatistics {
            photon_rate_hz,
            detected_rate_hz: photon_rate_hz * self.telescope.detector_efficiency,
            window_s: window.window_s,
            slack_s: window.slack_s,
            mean_detections,
            detection_probability: detection_probability(mean_detections)?,
        })
    }

    pub fn mean_detections(&self) -> Result<f64> {
        Ok(self.statistics()?.mean_detections)
    }
}

/// Telescope and link of one arm, without a source attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmGeometry {
    pub telescope: TelescopeConfig,
    pub link: LinkGeometry,
}

impl ArmGeometry {
    pub fn with_flux(&self, flux: SourceFlux) -> Arm {
        Arm {
            telescope: self.telescope,
            link: self.link,
            flux,
        }
    }
}

/// Per-arm geometry used to rank candidate sources. A single arm is
/// reused for every member (symmetric arrangement).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGeometry {
    pub arms: Vec<ArmGeometry>,
}

impl ExperimentGeometry {
    pub fn symmetric(telescope: TelescopeConfig, link: LinkGeometry) -> Self {
        Self {
            arms: vec![ArmGeometry { telescope, link }],
        }
    }

    pub fn arm(&self, index: usize) -> Result<&ArmGeometry> {
        match self.arms.len() {
            0 => Err(Error::invalid("experiment geometry has no arms")),
            1 => Ok(&self.arms[0]),
            n if index < n => Ok(&self.arms[index]),
            n => Err(Error::invalid(format!(
                "geometry has {n} arms, arm {index} requested"
            ))),
        }
    }

    /// Coincidence probability when arm i sees `fluxes[i]`.
    pub fn coincidence_for(&self, fluxes: &[f64]) -> Result<f64> {
        let mus = fluxes
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                self.arm(i)?
                    .with_flux(SourceFlux::new(f)?)
                    .mean_detections()
            })
            .collect::<Result<Vec<_>>>()?;
        coincidence_probability(&mus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxRegime {
    /// every μ below [`LOW_FLUX_MU`]
    LowFlux,
    NonAsymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    /// Number of arms in coincidence.
    pub order: usize,
    pub base_probability: f64,
    pub scaled_probability: f64,
    pub exact_ratio: f64,
    /// (area_factor · baseline_factor)^order
    pub asymptotic_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub area_factor: f64,
    pub baseline_factor: f64,
    pub base_mus: Vec<f64>,
    pub scaled_mus: Vec<f64>,
    pub regime: FluxRegime,
    pub rows: Vec<ScalingRow>,
}

/// Coincidence probabilities of the first k arms (k = 2..=n) before and
/// after scaling every collecting area and baseline.
pub fn scaling_report(
    base: &[Arm],
    area_factor: f64,
    baseline_factor: f64,
) -> Result<ScalingReport> {
    let base_mus = base
        .iter()
        .map(Arm::mean_detections)
        .collect::<Result<Vec<_>>>()?;
    scaling_report_from_mus(&base_mus, area_factor, baseline_factor)
}

/// As [`scaling_report`], starting from per-arm mean counts.
pub fn scaling_report_from_mus(
    base_mus: &[f64],
    area_factor: f64,
    baseline_factor: f64,
) -> Result<ScalingReport> {
    if !(area_factor > 0.0 && baseline_factor > 0.0) {
        return Err(Error::invalid("scaling factors must be positive"));
    }
    if base_mus.len() < 2 {
        return Err(Error::invalid("scaling report needs at least two arms"));
    }
    let factor = area_factor * baseline_factor;
    let scaled_mus: Vec<f64> = base_mus.iter().map(|mu| mu * factor).collect();
    let regime = if base_mus
        .iter()
        .chain(&scaled_mus)
        .all(|&mu| mu < LOW_FLUX_MU)
    {
        FluxRegime::LowFlux
    } else {
        FluxRegime::NonAsymptotic
    };
    let rows = (2..=base_mus.len())
        .map(|order| {
            let base_probability = coincidence_probability(&base_mus[..order])?;
            let scaled_probability = coincidence_probability(&scaled_mus[..order])?;
            Ok(ScalingRow {
                order,
                base_probability,
                scaled_probability,
                exact_ratio: scaled_probability / base_probability,
                asymptotic_ratio: factor.powi(order as i32),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingReport {
        area_factor,
        baseline_factor,
        base_mus: base_mus.to_vec(),
        scaled_mus,
        regime,
        rows,
    })
}
