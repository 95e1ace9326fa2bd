//! Past-light-cone disjointness of cosmic emission events in flat FLRW.
//!
//! In conformal coordinates the past light cone of an event at conformal
//! time ηᵢ and comoving position xᵢ, cut at the hot big bang (η = 0), is a
//! ball of radius ηᵢ around xᵢ. Two cones share no past iff their balls are
//! disjoint; a cone avoids Earth's worldline (the origin) iff dᵢ ≥ ηᵢ.

use serde::{Deserialize, Serialize};

use crate::cosmology::{comoving_distance, conformal_time, CosmologyParams};
use crate::error::{Error, Result};
use crate::numerics::bisect;

/// Upper end of the redshift search for thresholds.
pub const MAX_SEARCH_REDSHIFT: f64 = 1e4;
/// Default last-scattering redshift.
pub const CMB_REDSHIFT: f64 = 1090.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkyPosition {
    /// degrees, [0, 360)
    pub right_ascension: f64,
    /// degrees, [−90, 90]
    pub declination: f64,
}

impl SkyPosition {
    pub fn new(right_ascension: f64, declination: f64) -> Result<Self> {
        if !(right_ascension.is_finite() && (0.0..360.0).contains(&right_ascension)) {
            return Err(Error::invalid(format!(
                "right ascension {right_ascension} outside [0, 360)"
            )));
        }
        if !(declination.is_finite() && (-90.0..=90.0).contains(&declination)) {
            return Err(Error::invalid(format!(
                "declination {declination} outside [-90, 90]"
            )));
        }
        Ok(Self {
            right_ascension,
            declination,
        })
    }

    /// Builds a position from any RA (wrapped into [0, 360)).
    pub fn wrapped(right_ascension: f64, declination: f64) -> Result<Self> {
        Self::new(right_ascension.rem_euclid(360.0) % 360.0, declination)
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (sr, cr) = self.right_ascension.to_radians().sin_cos();
        let (sd, cd) = self.declination.to_radians().sin_cos();
        [cd * cr, cd * sr, sd]
    }

    pub fn from_unit_vector(v: [f64; 3]) -> Result<Self> {
        let norm = dot(v, v).sqrt();
        if !(norm > 0.0) {
            return Err(Error::invalid("zero direction vector"));
        }
        let dec = (v[2] / norm).clamp(-1.0, 1.0).asin().to_degrees();
        let ra = v[1].atan2(v[0]).to_degrees();
        Self::wrapped(ra, dec)
    }
}

/// Great-circle separation in degrees, Vincenty form (stable at 0° and 180°).
pub fn angular_separation(p1: &SkyPosition, p2: &SkyPosition) -> f64 {
    let (s1, c1) = p1.declination.to_radians().sin_cos();
    let (s2, c2) = p2.declination.to_radians().sin_cos();
    let (sdl, cdl) = (p2.right_ascension - p1.right_ascension)
        .to_radians()
        .sin_cos();
    let num1 = c2 * sdl;
    let num2 = c1 * s2 - s1 * c2 * cdl;
    let den = s1 * s2 + c1 * c2 * cdl;
    num1.hypot(num2).atan2(den).to_degrees()
}

/// An event in conformal coordinates; Earth's worldline is the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeEvent {
    /// comoving Mpc
    pub conformal_time: f64,
    /// comoving Mpc
    pub comoving_position: [f64; 3],
}

impl SpacetimeEvent {
    pub fn new(conformal_time: f64, comoving_position: [f64; 3]) -> Result<Self> {
        if !(conformal_time.is_finite() && conformal_time >= 0.0) {
            return Err(Error::invalid("conformal_time must be finite and >= 0"));
        }
        if comoving_position.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("comoving_position must be finite"));
        }
        Ok(Self {
            conformal_time,
            comoving_position,
        })
    }

    pub fn distance_from_earth(&self) -> f64 {
        norm(self.comoving_position)
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

fn require_flat(params: &CosmologyParams) -> Result<()> {
    if params.is_flat() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "light-cone geometry requires a flat model, omega_curvature = {:e}",
            params.omega_curvature()
        )))
    }
}

/// The event on our past light cone at redshift `z` in direction `p`.
pub fn emission_event(z: f64, p: &SkyPosition, params: &CosmologyParams) -> Result<SpacetimeEvent> {
    require_flat(params)?;
    let d = comoving_distance(z, params)?;
    let eta = conformal_time(z, params)?;
    let u = p.unit_vector();
    SpacetimeEvent::new(eta, [d * u[0], d * u[1], d * u[2]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub first: usize,
    pub second: usize,
    pub separation_mpc: f64,
    pub disjoint: bool,
    /// |xᵢ − xⱼ| − (ηᵢ + ηⱼ)
    pub margin_mpc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarthVerdict {
    pub index: usize,
    pub disjoint: bool,
    /// dᵢ − ηᵢ
    pub margin_mpc: f64,
}

/// Per-constraint outcome of [`lightcones_disjoint`]; margins are positive
/// when satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalVerdict {
    pub pairs: Vec<PairVerdict>,
    pub earth: Vec<EarthVerdict>,
    pub all_disjoint: bool,
}

impl CausalVerdict {
    /// Smallest margin over every constraint.
    pub fn binding_margin(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| p.margin_mpc)
            .chain(self.earth.iter().map(|e| e.margin_mpc))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn lightcones_disjoint(events: &[SpacetimeEvent]) -> Result<CausalVerdict> {
    if events.is_empty() {
        return Err(Error::invalid("at least one event is required"));
    }
    let earth: Vec<EarthVerdict> = events
        .iter()
        .enumerate()
        .map(|(index, e)| {
            let margin_mpc = e.distance_from_earth() - e.conformal_time;
            EarthVerdict {
                index,
                disjoint: margin_mpc >= 0.0,
                margin_mpc,
            }
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..events.len() {
        for j in i + 1..events.len() {
            let separation_mpc = distance(events[i].comoving_position, events[j].comoving_position);
            let margin_mpc = separation_mpc - (events[i].conformal_time + events[j].conformal_time);
            pairs.push(PairVerdict {
                first: i,
                second: j,
                separation_mpc,
                disjoint: margin_mpc >= 0.0,
                margin_mpc,
            });
        }
    }
    let all_disjoint = earth.iter().all(|e| e.disjoint) && pairs.iter().all(|p| p.disjoint);
    Ok(CausalVerdict {
        pairs,
        earth,
        all_disjoint,
    })
}

/// `n` sky positions with every pairwise separation equal to `alpha`
/// degrees, arranged on a small circle around the north pole.
pub fn equiangular_positions(alpha: f64, n: usize) -> Result<Vec<SkyPosition>> {
    match n {
        1 => Ok(vec![SkyPosition::new(0.0, 90.0)?]),
        2 => {
            if !(0.0..=180.0).contains(&alpha) {
                return Err(Error::invalid(format!(
                    "separation {alpha} outside [0, 180]"
                )));
            }
            Ok(vec![
                SkyPosition::new(0.0, 0.0)?,
                SkyPosition::wrapped(alpha, 0.0)?,
            ])
        }
        3 => {
            if !(0.0..=120.0).contains(&alpha) {
                return Err(Error::invalid(format!(
                    "three mutually equidistant sources need separation in [0, 120], got {alpha}"
                )));
            }
            // cos α = cos²θ − sin²θ/2 for polar angle θ and azimuths 120° apart.
            let sin2 = (2.0 / 3.0) * (1.0 - alpha.to_radians().cos());
            let theta = sin2.sqrt().min(1.0).asin();
            let dec = 90.0 - theta.to_degrees();
            (0..3)
                .map(|k| SkyPosition::new(120.0 * k as f64, dec))
                .collect()
        }
        _ => Err(Error::invalid("n_sources must be 1, 2 or 3")),
    }
}

/// Binding margin for `n` symmetric sources at redshift `z` separated by
/// `alpha` degrees: min(chord − 2η, d − η).
fn symmetric_margin(z: f64, alpha: f64, params: &CosmologyParams) -> Result<f64> {
    let d = comoving_distance(z, params)?;
    let eta = conformal_time(z, params)?;
    let chord = 2.0 * d * (0.5 * alpha.to_radians()).sin();
    Ok((chord - 2.0 * eta).min(d - eta))
}

/// Smallest common redshift at which `n_sources` sources mutually separated
/// by `alpha` degrees have pairwise-disjoint past light cones that also
/// avoid Earth's worldline.
pub fn threshold_redshift(alpha: f64, n_sources: usize, params: &CosmologyParams) -> Result<f64> {
    require_flat(params)?;
    match n_sources {
        2 if (0.0..=180.0).contains(&alpha) => {}
        3 if (0.0..=120.0).contains(&alpha) => {}
        2 | 3 => {
            return Err(Error::invalid(format!(
                "separation {alpha} not realizable for {n_sources} sources"
            )))
        }
        _ => return Err(Error::invalid("n_sources must be 2 or 3")),
    }
    let top = symmetric_margin(MAX_SEARCH_REDSHIFT, alpha, params)?;
    if top < 0.0 {
        return Err(Error::Infeasible(format!(
            "separation {alpha} deg never decouples below z = {MAX_SEARCH_REDSHIFT}"
        )));
    }
    bisect(
        |z| symmetric_margin(z, alpha, params),
        0.0,
        MAX_SEARCH_REDSHIFT,
        1e-9,
    )
}

/// Smallest separation (degrees) at which two emission events at `z_cmb`
/// have disjoint past light cones, found by bisection on the chord condition.
pub fn cmb_min_separation(params: &CosmologyParams, z_cmb: f64) -> Result<f64> {
    require_flat(params)?;
    if !(z_cmb > 0.0) {
        return Err(Error::invalid("z_cmb must be positive"));
    }
    if z_cmb.is_infinite() {
        return Ok(0.0);
    }
    let d = comoving_distance(z_cmb, params)?;
    let eta = conformal_time(z_cmb, params)?;
    let margin = |alpha: f64| Ok(2.0 * d * (0.5 * alpha.to_radians()).sin() - 2.0 * eta);
    bisect(margin, 0.0, 180.0, 1e-7)
}

/// Closed form of [`cmb_min_separation`]: sin(α/2) = η/d.
pub fn cmb_min_separation_closed_form(params: &CosmologyParams, z_cmb: f64) -> Result<f64> {
    let d = comoving_distance(z_cmb, params)?;
    let eta = conformal_time(z_cmb, params)?;
    if eta > d {
        return Err(Error::Infeasible(format!(
            "z = {z_cmb} lies inside Earth's past cone overlap (eta > d)"
        )));
    }
    Ok(2.0 * (eta / d).asin().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(ra: f64, dec: f64) -> SkyPosition {
        SkyPosition::new(ra, dec).unwrap()
    }

    #[test]
    fn separation_examples() {
        assert_eq!(angular_separation(&pos(10.0, 20.0), &pos(10.0, 20.0)), 0.0);
        assert!((angular_separation(&pos(0.0, 0.0), &pos(180.0, 0.0)) - 180.0).abs() < 1e-12);
        assert!((angular_separation(&pos(0.0, 90.0), &pos(123.0, 0.0)) - 90.0).abs() < 1e-12);
    }

    #[test]
    fn position_ranges() {
        assert!(SkyPosition::new(360.0, 0.0).is_err());
        assert!(SkyPosition::new(0.0, 95.0).is_err());
        assert!(SkyPosition::new(-1.0, 0.0).is_err());
        assert_eq!(
            SkyPosition::wrapped(-90.0, 0.0).unwrap().right_ascension,
            270.0
        );
    }

    #[test]
    fn event_at_zero_redshift() {
        let p = CosmologyParams::default();
        let e = emission_event(0.0, &pos(12.0, 34.0), &p).unwrap();
        assert_eq!(e.comoving_position, [0.0, 0.0, 0.0]);
        let eta0 = conformal_time(0.0, &p).unwrap();
        assert_eq!(e.conformal_time, eta0);
    }

    #[test]
    fn antipodal_chord_is_twice_distance() {
        let p = CosmologyParams::default();
        let a = emission_event(3.65, &pos(0.0, 0.0), &p).unwrap();
        let b = emission_event(3.65, &pos(180.0, 0.0), &p).unwrap();
        let d = comoving_distance(3.65, &p).unwrap();
        let v = lightcones_disjoint(&[a, b]).unwrap();
        assert!((v.pairs[0].separation_mpc - 2.0 * d).abs() < 1e-9 * d);
    }

    #[test]
    fn nonflat_rejected() {
        let p = CosmologyParams::new(70.0, 0.3, 0.6, 1e-4).unwrap();
        assert!(emission_event(1.0, &pos(0.0, 0.0), &p).is_err());
        assert!(threshold_redshift(180.0, 2, &p).is_err());
    }

    #[test]
    fn coincident_sight_lines_overlap() {
        let p = CosmologyParams::default();
        let a = emission_event(5.0, &pos(40.0, 10.0), &p).unwrap();
        let b = emission_event(8.0, &pos(40.0, 10.0), &p).unwrap();
        assert!(!lightcones_disjoint(&[a, b]).unwrap().pairs[0].disjoint);
    }

    #[test]
    fn ground_pair_at_4_2_is_disjoint() {
        let p = CosmologyParams::default();
        let a = emission_event(4.2, &pos(0.0, 0.0), &p).unwrap();
        let b = emission_event(4.2, &pos(130.0, 0.0), &p).unwrap();
        let v = lightcones_disjoint(&[a, b]).unwrap();
        assert!(v.pairs[0].disjoint);
        assert!(v.all_disjoint);
    }

    #[test]
    fn empty_event_list_rejected() {
        assert!(lightcones_disjoint(&[]).is_err());
    }

    #[test]
    fn equiangular_triple() {
        for alpha in [30.0, 105.0, 120.0] {
            let ps = equiangular_positions(alpha, 3).unwrap();
            for i in 0..3 {
                for j in i + 1..3 {
                    assert!((angular_separation(&ps[i], &ps[j]) - alpha).abs() < 1e-9);
                }
            }
        }
        assert!(equiangular_positions(130.0, 3).is_err());
    }

    #[test]
    fn threshold_input_validation() {
        let p = CosmologyParams::default();
        assert!(matches!(
            threshold_redshift(130.0, 3, &p),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            threshold_redshift(181.0, 2, &p),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            threshold_redshift(90.0, 4, &p),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            threshold_redshift(0.0, 2, &p),
            Err(Error::Infeasible(_))
        ));
        let floor = cmb_min_separation(&p, MAX_SEARCH_REDSHIFT).unwrap();
        assert!(matches!(
            threshold_redshift(0.99 * floor, 2, &p),
            Err(Error::Infeasible(_))
        ));
        assert!(threshold_redshift(1.01 * floor, 2, &p).unwrap() < MAX_SEARCH_REDSHIFT);
    }

    #[test]
    fn cmb_limits() {
        let p = CosmologyParams::default();
        assert_eq!(cmb_min_separation(&p, f64::INFINITY).unwrap(), 0.0);
        let a = cmb_min_separation(&p, 1e6).unwrap();
        assert!(a < 0.2);
        let bisected = cmb_min_separation(&p, CMB_REDSHIFT).unwrap();
        let closed = cmb_min_separation_closed_form(&p, CMB_REDSHIFT).unwrap();
        assert!((bisected - closed).abs() < 1e-3);
    }
}
