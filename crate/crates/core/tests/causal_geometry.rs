//! Light-cone verdicts against a brute-force sampled-sphere oracle, plus
//! threshold consistency and symmetry properties.

use cosmic_bell::causal::{
    angular_separation, cmb_min_separation, cmb_min_separation_closed_form, emission_event,
    equiangular_positions, lightcones_disjoint, threshold_redshift, SkyPosition, CMB_REDSHIFT,
};
use cosmic_bell::cosmology::{comoving_distance, conformal_time, CosmologyParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            [r * t.cos(), y, r * t.sin()]
        })
        .collect()
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Balls overlap iff a sampled boundary point of one lies in the other, or
/// one center lies inside the other ball (nesting).
fn balls_overlap_sampled(
    c1: [f64; 3],
    r1: f64,
    c2: [f64; 3],
    r2: f64,
    sphere: &[[f64; 3]],
) -> bool {
    if dist(c1, c2) < r1.max(r2) {
        return true;
    }
    let hits = |c: [f64; 3], r: f64, other: [f64; 3], ro: f64| {
        sphere
            .iter()
            .any(|u| dist([c[0] + r * u[0], c[1] + r * u[1], c[2] + r * u[2]], other) < ro)
    };
    hits(c1, r1, c2, r2) || hits(c2, r2, c1, r1)
}

fn random_position(rng: &mut ChaCha8Rng) -> SkyPosition {
    let ra = rng.random_range(0.0..360.0);
    let dec = rng.random_range(-1.0f64..1.0).asin().to_degrees();
    SkyPosition::new(ra, dec).unwrap()
}

#[test]
fn analytic_verdict_matches_sampled_oracle() {
    let p = CosmologyParams::default();
    let sphere = fibonacci_sphere(10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(2014);
    let mut checked = 0;
    let (mut disjoint, mut overlapping) = (0, 0);
    while checked < 100 {
        let a =
            emission_event(rng.random_range(0.5..12.0), &random_position(&mut rng), &p).unwrap();
        let b =
            emission_event(rng.random_range(0.5..12.0), &random_position(&mut rng), &p).unwrap();
        let v = lightcones_disjoint(&[a, b]).unwrap();
        let pair = &v.pairs[0];
        // Sampling cannot resolve near-tangent balls.
        if pair.margin_mpc.abs() < 0.02 * (a.conformal_time + b.conformal_time) {
            continue;
        }
        let sampled = balls_overlap_sampled(
            a.comoving_position,
            a.conformal_time,
            b.comoving_position,
            b.conformal_time,
            &sphere,
        );
        assert_eq!(pair.disjoint, !sampled, "margin {}", pair.margin_mpc);
        if pair.disjoint {
            disjoint += 1;
        } else {
            overlapping += 1;
        }
        checked += 1;
    }
    assert!(
        disjoint > 10 && overlapping > 10,
        "{disjoint}/{overlapping}"
    );
}

#[test]
fn thresholds_plug_back_to_zero_margin() {
    let p = CosmologyParams::default();
    for (alpha, n) in [(180.0, 2), (130.0, 2), (120.0, 3), (105.0, 3), (90.0, 2)] {
        let z = threshold_redshift(alpha, n, &p).unwrap();
        let events: Vec<_> = equiangular_positions(alpha, n)
            .unwrap()
            .iter()
            .map(|pos| emission_event(z, pos, &p).unwrap())
            .collect();
        let v = lightcones_disjoint(&events).unwrap();
        assert!(
            v.binding_margin().abs() < 1e-2,
            "{alpha}/{n}: {}",
            v.binding_margin()
        );
    }
}

#[test]
fn threshold_decreases_with_separation() {
    let p = CosmologyParams::default();
    let zs: Vec<f64> = (0..=18)
        .map(|k| threshold_redshift(90.0 + 5.0 * k as f64, 2, &p).unwrap())
        .collect();
    assert!(zs.windows(2).all(|w| w[1] < w[0]), "{zs:?}");
}

#[test]
fn antipodal_pair_margin_is_twice_earth_margin() {
    let p = CosmologyParams::default();
    for z in [1.0, 3.0, 3.65, 5.0, 20.0] {
        let a = emission_event(z, &SkyPosition::new(10.0, 20.0).unwrap(), &p).unwrap();
        let b = emission_event(z, &SkyPosition::new(190.0, -20.0).unwrap(), &p).unwrap();
        let v = lightcones_disjoint(&[a, b]).unwrap();
        let scale = comoving_distance(z, &p).unwrap();
        assert!((v.pairs[0].margin_mpc - 2.0 * v.earth[0].margin_mpc).abs() < 1e-9 * scale);
    }
}

#[test]
fn boundary_pair_has_zero_margins() {
    let p = CosmologyParams::default();
    let z = threshold_redshift(180.0, 2, &p).unwrap();
    assert!((comoving_distance(z, &p).unwrap() - conformal_time(z, &p).unwrap()).abs() < 1e-2);
    let a = emission_event(z, &SkyPosition::new(0.0, 0.0).unwrap(), &p).unwrap();
    let b = emission_event(z, &SkyPosition::new(180.0, 0.0).unwrap(), &p).unwrap();
    let v = lightcones_disjoint(&[a, b]).unwrap();
    assert!(v.pairs[0].margin_mpc.abs() < 1e-2);
    assert!(v.earth.iter().all(|e| e.margin_mpc.abs() < 1e-2));
}

#[test]
fn infinite_redshift_event_sits_on_eta0_sphere() {
    let p = CosmologyParams::default();
    let e = emission_event(f64::INFINITY, &SkyPosition::new(0.0, 0.0).unwrap(), &p).unwrap();
    let eta0 = conformal_time(0.0, &p).unwrap();
    assert_eq!(e.conformal_time, 0.0);
    assert!((e.distance_from_earth() - eta0).abs() < 1e-6 * eta0);
}

#[test]
fn cmb_bisection_matches_closed_form() {
    let p = CosmologyParams::default();
    for z in [500.0, CMB_REDSHIFT, 3000.0] {
        let a = cmb_min_separation(&p, z).unwrap();
        let b = cmb_min_separation_closed_form(&p, z).unwrap();
        assert!((a - b).abs() < 1e-3);
    }
}

fn rotate(pos: &SkyPosition, axis: [f64; 3], angle: f64) -> SkyPosition {
    // Rodrigues rotation of the unit vector.
    let v = pos.unit_vector();
    let n = (axis[0].powi(2) + axis[1].powi(2) + axis[2].powi(2)).sqrt();
    let k = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let kxv = [
        k[1] * v[2] - k[2] * v[1],
        k[2] * v[0] - k[0] * v[2],
        k[0] * v[1] - k[1] * v[0],
    ];
    let kdv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
    let r = [0, 1, 2].map(|i| v[i] * c + kxv[i] * s + k[i] * kdv * (1.0 - c));
    SkyPosition::from_unit_vector(r).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn verdict_invariant_under_rotation(
        ra1 in 0.0f64..360.0, dec1 in -89.0f64..89.0,
        ra2 in 0.0f64..360.0, dec2 in -89.0f64..89.0,
        z1 in 0.5f64..10.0, z2 in 0.5f64..10.0,
        ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in 0.1f64..1.0, angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let p = CosmologyParams::default();
        let p1 = SkyPosition::new(ra1, dec1).unwrap();
        let p2 = SkyPosition::new(ra2, dec2).unwrap();
        let v = lightcones_disjoint(&[
            emission_event(z1, &p1, &p).unwrap(),
            emission_event(z2, &p2, &p).unwrap(),
        ]).unwrap();
        let r1 = rotate(&p1, [ax, ay, az], angle);
        let r2 = rotate(&p2, [ax, ay, az], angle);
        prop_assert!((angular_separation(&p1, &p2) - angular_separation(&r1, &r2)).abs() < 1e-7);
        let w = lightcones_disjoint(&[
            emission_event(z1, &r1, &p).unwrap(),
            emission_event(z2, &r2, &p).unwrap(),
        ]).unwrap();
        prop_assert!((v.pairs[0].margin_mpc - w.pairs[0].margin_mpc).abs() < 1e-6);
        if v.pairs[0].margin_mpc.abs() > 1e-3 {
            prop_assert_eq!(v.all_disjoint, w.all_disjoint);
        }
    }

    #[test]
    fn separation_symmetric_and_bounded(
        ra1 in 0.0f64..360.0, dec1 in -90.0f64..=90.0,
        ra2 in 0.0f64..360.0, dec2 in -90.0f64..=90.0,
    ) {
        let a = SkyPosition::new(ra1, dec1).unwrap();
        let b = SkyPosition::new(ra2, dec2).unwrap();
        let ab = angular_separation(&a, &b);
        prop_assert!((0.0..=180.0).contains(&ab));
        prop_assert!((ab - angular_separation(&b, &a)).abs() < 1e-12);
    }
}
