//! Global configuration and experiment specifications (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bellsim::TestKind;
use crate::catalog::PhotometricSystem;
use crate::cosmology::CosmologyParams;
use crate::error::{Error, Result};
use crate::noisebudget::NoiseModel;
use crate::photonstat::{LinkGeometry, TelescopeConfig};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "COSMIC_BELL_CONFIG";

/// Cosmology section with every field optional; a missing `omega_lambda`
/// closes the universe (flat).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosmologySection {
    pub hubble_constant: Option<f64>,
    pub omega_matter: Option<f64>,
    pub omega_lambda: Option<f64>,
    pub omega_radiation: Option<f64>,
}

impl CosmologySection {
    /// Fields of `other` take precedence.
    pub fn overlay(self, other: CosmologySection) -> Self {
        Self {
            hubble_constant: other.hubble_constant.or(self.hubble_constant),
            omega_matter: other.omega_matter.or(self.omega_matter),
            omega_lambda: other.omega_lambda.or(self.omega_lambda),
            omega_radiation: other.omega_radiation.or(self.omega_radiation),
        }
    }

    pub fn resolve(&self) -> Result<CosmologyParams> {
        let d = CosmologyParams::default();
        let omega_matter = self.omega_matter.unwrap_or(d.omega_matter);
        let omega_radiation = self.omega_radiation.unwrap_or(d.omega_radiation);
        let omega_lambda = self
            .omega_lambda
            .unwrap_or(1.0 - omega_matter - omega_radiation);
        CosmologyParams::new(
            self.hubble_constant.unwrap_or(d.hubble_constant),
            omega_matter,
            omega_lambda,
            omega_radiation,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub cosmology: CosmologySection,
    #[serde(default)]
    pub photometry: PhotometricSystem,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        c.cosmology.resolve()?;
        c.photometry.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Loads `explicit`, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn discover(explicit: Option<&Path>) -> Result<Self> {
        if let Some(p) = explicit {
            return Self::load(p);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(PathBuf::from(p)),
            _ => Ok(Self::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Quantum,
    /// every deterministic strategy, equally weighted
    Lhv,
    Conspiracy,
}

/// One detector arm of an experiment specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub diameter_m: f64,
    pub detector_efficiency: f64,
    pub baseline_km: f64,
    #[serde(default)]
    pub setting_latency_s: f64,
    /// photons s⁻¹ m⁻²; alternative to `catalog` + `source_id`
    pub flux: Option<f64>,
    pub catalog: Option<PathBuf>,
    pub source_id: Option<String>,
}

impl ArmSpec {
    pub fn telescope(&self) -> Result<TelescopeConfig> {
        TelescopeConfig::new(self.diameter_m, self.detector_efficiency)
    }

    pub fn link(&self) -> Result<LinkGeometry> {
        LinkGeometry::new(self.baseline_km, self.setting_latency_s)
    }
}

fn default_seed() -> u64 {
    42
}

fn default_trials() -> usize {
    100_000
}

fn default_bin_width() -> f64 {
    crate::randomness::DEFAULT_BIN_WIDTH_S
}

fn default_angles() -> [f64; 4] {
    [0.0, 45.0, 22.5, 67.5]
}

/// Full description of a simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub test_kind: TestKind,
    #[serde(default)]
    pub cosmology: CosmologySection,
    pub arms: Vec<ArmSpec>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub conspiracy_fraction: f64,
    /// setting windows (one Bell trial each)
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_bin_width")]
    pub bin_width_s: f64,
    /// (a, a′, b, b′) in degrees, CHSH only
    #[serde(default = "default_angles")]
    pub angles_deg: [f64; 4],
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::invalid(format!("experiment spec: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arms.len() != self.test_kind.detectors() {
            return Err(Error::invalid(format!(
                "{:?} needs {} arms, spec has {}",
                self.test_kind,
                self.test_kind.detectors(),
                self.arms.len()
            )));
        }
        for (i, arm) in self.arms.iter().enumerate() {
            arm.telescope()?;
            arm.link()?;
            match (&arm.flux, &arm.catalog, &arm.source_id) {
                (Some(f), None, None) if f.is_finite() && *f >= 0.0 => {}
                (None, Some(_), Some(_)) => {}
                _ => return Err(Error::invalid(format!(
                    "arm {i}: give either a non-negative `flux` or both `catalog` and `source_id`"
                ))),
            }
        }
        self.cosmology.resolve()?;
        self.noise.validate()?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if !(self.bin_width_s > 0.0) {
            return Err(Error::invalid("bin_width_s must be positive"));
        }
        if !(0.0..=1.0).contains(&self.conspiracy_fraction) {
            return Err(Error::invalid("conspiracy_fraction must be in [0, 1]"));
        }
        Ok(())
    }

    /// Two-arm spec with the reference CHSH numbers: d = 1 m, η = 0.5,
    /// L = 50 km, F = 2×10⁴ photons s⁻¹ m⁻².
    pub fn reference_chsh() -> Self {
        Self::symmetric(TestKind::Chsh, 2e4, 50.0)
    }

    /// Three-arm spec with a third of the CHSH flux and L = 150 km.
    pub fn reference_ghz() -> Self {
        Self::symmetric(TestKind::Ghz, 2e4 / 3.0, 150.0)
    }

    fn symmetric(test_kind: TestKind, flux: f64, baseline_km: f64) -> Self {
        let arm = ArmSpec {
            diameter_m: 1.0,
            detector_efficiency: 0.5,
            baseline_km,
            setting_latency_s: 78e-9,
            flux: Some(flux),
            catalog: None,
            source_id: None,
        };
        Self {
            test_kind,
            cosmology: CosmologySection::default(),
            arms: vec![arm; test_kind.detectors()],
            noise: NoiseModel::default(),
            model: ModelKind::Quantum,
            conspiracy_fraction: 0.0,
            trials: default_trials(),
            seed: default_seed(),
            bin_width_s: default_bin_width(),
            angles_deg: default_angles(),
        }
    }
}
