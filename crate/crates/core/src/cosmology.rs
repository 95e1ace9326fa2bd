//! FLRW background: Hubble rate, comoving distance, conformal time and
//! lookback time as functions of redshift.
//!
//! Distances and times are in comoving Mpc with c = 1; the Hubble rate is in
//! 1/Mpc. Conformal time is measured from the hot big bang (a → 0) of the
//! radiation-including model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate, QuadratureTolerance};

/// Speed of light, km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;
/// One megaparsec in km.
pub const MPC_KM: f64 = 3.085_677_581_491_367e19;
/// Seconds per Julian year.
pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

const FLAT_TOLERANCE: f64 = 1e-6;

/// Density parameters and Hubble constant of the background cosmology.
///
/// `omega_curvature` is not stored; it is always `1 − Ωm − ΩΛ − Ωr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosmologyParams {
    /// km/s/Mpc
    pub hubble_constant: f64,
    pub omega_matter: f64,
    pub omega_lambda: f64,
    pub omega_radiation: f64,
}

impl Default for CosmologyParams {
    /// Planck-like flat ΛCDM: h = 0.673, Ωm = 0.315, Ωr = 9.2e-5 (photons
    /// and neutrinos), ΩΛ closing the universe.
    fn default() -> Self {
        let omega_matter = 0.315;
        let omega_radiation = 9.2e-5;
        Self {
            hubble_constant: 67.3,
            omega_matter,
            omega_lambda: 1.0 - omega_matter - omega_radiation,
            omega_radiation,
        }
    }
}

impl CosmologyParams {
    pub fn new(
        hubble_constant: f64,
        omega_matter: f64,
        omega_lambda: f64,
        omega_radiation: f64,
    ) -> Result<Self> {
        let p = Self {
            hubble_constant,
            omega_matter,
            omega_lambda,
            omega_radiation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hubble_constant.is_finite() && self.hubble_constant > 0.0) {
            return Err(Error::invalid("hubble_constant must be positive"));
        }
        if !(self.omega_matter.is_finite() && self.omega_matter >= 0.0) {
            return Err(Error::invalid("omega_matter must be non-negative"));
        }
        if !(self.omega_radiation.is_finite() && self.omega_radiation >= 0.0) {
            return Err(Error::invalid("omega_radiation must be non-negative"));
        }
        if !self.omega_lambda.is_finite() {
            return Err(Error::invalid("omega_lambda must be finite"));
        }
        Ok(())
    }

    pub fn omega_curvature(&self) -> f64 {
        1.0 - self.omega_matter - self.omega_lambda - self.omega_radiation
    }

    pub fn is_flat(&self) -> bool {
        self.omega_curvature().abs() < FLAT_TOLERANCE
    }

    /// H₀ in 1/Mpc (c = 1).
    pub fn hubble_constant_per_mpc(&self) -> f64 {
        km_s_mpc_to_per_mpc(self.hubble_constant)
    }

    /// H₀ in 1/s.
    pub fn hubble_constant_per_second(&self) -> f64 {
        self.hubble_constant / MPC_KM
    }

    /// E(z)² expressed in the scale factor and multiplied by a⁴, so that
    /// it stays finite as a → 0: Ωr + Ωm a + Ωk a² + ΩΛ a⁴.
    fn radicand_a4(&self, a: f64) -> f64 {
        let a2 = a * a;
        self.omega_radiation
            + self.omega_matter * a
            + self.omega_curvature() * a2
            + self.omega_lambda * a2 * a2
    }

    fn e_squared(&self, z: f64) -> f64 {
        let x = 1.0 + z;
        let x2 = x * x;
        self.omega_radiation * x2 * x2
            + self.omega_matter * x2 * x
            + self.omega_curvature() * x2
            + self.omega_lambda
    }
}

/// Converts km/s/Mpc to 1/Mpc (c = 1).
pub fn km_s_mpc_to_per_mpc(h: f64) -> f64 {
    h / SPEED_OF_LIGHT_KM_S
}

/// Converts 1/Mpc (c = 1) back to km/s/Mpc.
pub fn per_mpc_to_km_s_mpc(h: f64) -> f64 {
    h * SPEED_OF_LIGHT_KM_S
}

fn check_redshift(z: f64) -> Result<()> {
    if z.is_nan() || z < 0.0 {
        Err(Error::invalid(format!("redshift must be >= 0, got {z}")))
    } else {
        Ok(())
    }
}

fn tolerance() -> QuadratureTolerance {
    QuadratureTolerance {
        relative: 1e-8,
        absolute: 1e-12,
        ..Default::default()
    }
}

/// H(z) in 1/Mpc.
pub fn hubble_rate(z: f64, params: &CosmologyParams) -> Result<f64> {
    check_redshift(z)?;
    params.validate()?;
    if z.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let e2 = params.e_squared(z);
    if !(e2 > 0.0) {
        return Err(Error::invalid(format!(
            "expansion rate undefined at z = {z}: E(z)^2 = {e2}"
        )));
    }
    Ok(params.hubble_constant_per_mpc() * e2.sqrt())
}

fn inverse_hubble(z: f64, params: &CosmologyParams) -> f64 {
    let e2 = params.e_squared(z);
    if e2 > 0.0 {
        1.0 / (params.hubble_constant_per_mpc() * e2.sqrt())
    } else {
        f64::NAN
    }
}

/// d(z) = ∫₀^z dz′/H(z′), comoving Mpc.
pub fn comoving_distance(z: f64, params: &CosmologyParams) -> Result<f64> {
    check_redshift(z)?;
    params.validate()?;
    if z == 0.0 {
        return Ok(0.0);
    }
    if z.is_infinite() {
        return conformal_age_unanchored(0.0, params);
    }
    integrate(|x| inverse_hubble(x, params), 0.0, z, tolerance())
}

/// η(z) = ∫_z^∞ dz′/H(z′), comoving Mpc, evaluated as ∫₀^{1/(1+z)} da/(a²H).
///
/// Rejects models without radiation: their conformal age is finite but the
/// a → 0 limit is not a hot big bang.
pub fn conformal_time(z: f64, params: &CosmologyParams) -> Result<f64> {
    if params.omega_radiation == 0.0 {
        return Err(Error::NoRadiation);
    }
    conformal_age_unanchored(z, params)
}

/// Same integral as [`conformal_time`] without the radiation requirement.
pub fn conformal_age_unanchored(z: f64, params: &CosmologyParams) -> Result<f64> {
    check_redshift(z)?;
    params.validate()?;
    if z.is_infinite() {
        return Ok(0.0);
    }
    let a_max = 1.0 / (1.0 + z);
    let h0 = params.hubble_constant_per_mpc();
    let integrand = |a: f64| {
        let r = params.radicand_a4(a);
        if r > 0.0 {
            1.0 / (h0 * r.sqrt())
        } else {
            f64::NAN
        }
    };
    integrate(integrand, 0.0, a_max, tolerance())
}

/// Proper lookback time to redshift z, seconds.
pub fn lookback_time(z: f64, params: &CosmologyParams) -> Result<f64> {
    check_redshift(z)?;
    params.validate()?;
    if z == 0.0 {
        return Ok(0.0);
    }
    let h0 = params.hubble_constant_per_second();
    // dt = da / (a H); in units of 1/H0.
    let a_min = if z.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + z)
    };
    let integrand = |a: f64| {
        let r = params.radicand_a4(a);
        if r > 0.0 {
            a / r.sqrt()
        } else {
            f64::NAN
        }
    };
    Ok(integrate(integrand, a_min, 1.0, tolerance())? / h0)
}

/// A point of the conformal diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalCoordinate {
    pub conformal_time: f64,
    pub comoving_distance: f64,
}

impl ConformalCoordinate {
    /// Coordinates of an event on our past light cone at redshift z.
    pub fn at_redshift(z: f64, params: &CosmologyParams) -> Result<Self> {
        Ok(Self {
            conformal_time: conformal_time(z, params)?,
            comoving_distance: comoving_distance(z, params)?,
        })
    }
}
