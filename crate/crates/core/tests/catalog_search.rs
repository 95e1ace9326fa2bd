//! Catalog parsing and causally independent pair/triple search.

use std::io::Write;

use cosmic_bell::catalog::{
    find_pairs, find_triples, load_catalog, magnitude_to_photon_flux, parse_catalog,
    PhotometricSystem, QuasarRecord, SearchOptions,
};
use cosmic_bell::causal::{
    emission_event, equiangular_positions, lightcones_disjoint, SkyPosition,
};
use cosmic_bell::cosmology::CosmologyParams;
use cosmic_bell::photonstat::{ExperimentGeometry, LinkGeometry, TelescopeConfig};
use proptest::prelude::*;

fn geometry() -> ExperimentGeometry {
    ExperimentGeometry::symmetric(
        TelescopeConfig::new(1.0, 0.5).unwrap(),
        LinkGeometry::new(50.0, 78e-9).unwrap(),
    )
}

fn record(id: &str, ra: f64, dec: f64, z: f64, r_mag: f64) -> QuasarRecord {
    QuasarRecord {
        id: id.into(),
        position: SkyPosition::new(ra, dec).unwrap(),
        z,
        magnitudes: [None, None, Some(r_mag), None, None],
    }
}

fn search<T>(catalog: &[QuasarRecord], f: impl Fn(&[QuasarRecord], &SearchOptions) -> T) -> T {
    let params = CosmologyParams::default();
    let photometry = PhotometricSystem::default();
    let geometry = geometry();
    let opts = SearchOptions {
        min_z: 0.0,
        params: &params,
        photometry: &photometry,
        geometry: &geometry,
    };
    f(catalog, &opts)
}

#[test]
fn fixture_file_loads_with_diagnostics() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "ID,RA,Dec,z,u,g,r,i,z_mag").unwrap();
    writeln!(file, "Q1,10.0,5.0,3.7,18.1,17.9,17.5,17.4,17.3").unwrap();
    writeln!(file, "Q2,190.0,-5.0,3.7,,,18.0,,").unwrap();
    writeln!(file, "Q3,20.0,95.0,2.0,,,19.0,,").unwrap();
    writeln!(file, "Q4,oops,0.0,2.0,,,19.0,,").unwrap();
    let load = load_catalog(file.path()).unwrap();
    assert_eq!(load.accepted(), 2);
    assert_eq!(load.rejected.len(), 2);
    assert!(load.rejected.iter().any(|d| d.line == 4));
    assert_eq!(load.records[1].magnitudes[2], Some(18.0));
    assert_eq!(load.records[1].magnitudes[0], None);
}

#[test]
fn tab_separated_is_accepted() {
    let text = "id\tra\tdec\tz\tr\nA\t0\t0\t4.0\t18\n";
    let load = parse_catalog(text.as_bytes()).unwrap();
    assert_eq!(load.accepted(), 1);
}

#[test]
fn missing_mandatory_column_is_an_error() {
    assert!(parse_catalog("id,ra,z\nA,0,1\n".as_bytes()).is_err());
}

#[test]
fn antipodal_pair_above_threshold_is_found() {
    let cat = vec![
        record("A", 0.0, 0.0, 3.7, 18.0),
        record("B", 180.0, 0.0, 3.7, 18.5),
    ];
    let pairs = search(&cat, find_pairs).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].ids, ["A", "B"]);
    assert!((pairs[0].separations_deg[0].2 - 180.0).abs() < 1e-9);
    let below = vec![
        record("A", 0.0, 0.0, 3.6, 18.0),
        record("B", 180.0, 0.0, 3.6, 18.5),
    ];
    assert!(search(&below, find_pairs).unwrap().is_empty());
}

#[test]
fn close_pair_is_excluded() {
    let cat = vec![
        record("A", 0.0, 0.0, 4.0, 18.0),
        record("B", 60.0, 0.0, 4.0, 18.0),
    ];
    assert!(search(&cat, find_pairs).unwrap().is_empty());
}

fn triple_at(z: f64) -> Vec<QuasarRecord> {
    equiangular_positions(120.0, 3)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, p)| record(&format!("T{i}"), p.right_ascension, p.declination, z, 18.0))
        .collect()
}

#[test]
fn equilateral_triple_respects_threshold() {
    let found = search(&triple_at(4.5), find_triples).unwrap();
    assert_eq!(found.len(), 1);
    assert!(found[0].verdict.all_disjoint);
    assert!(search(&triple_at(4.2), find_triples).unwrap().is_empty());
}

#[test]
fn brighter_pairs_rank_first() {
    let cat = vec![
        record("A", 0.0, 0.0, 4.0, 20.0),
        record("B", 180.0, 0.0, 4.0, 20.0),
        record("C", 90.0, 10.0, 4.0, 17.0),
        record("D", 270.0, -10.0, 4.0, 17.0),
    ];
    let pairs = search(&cat, find_pairs).unwrap();
    assert_eq!(pairs[0].ids, ["C", "D"]);
    assert!(pairs
        .windows(2)
        .all(|w| w[0].coincidence_probability >= w[1].coincidence_probability));
    for p in &pairs {
        let events: Vec<_> = p
            .ids
            .iter()
            .map(|id| {
                let r = cat.iter().find(|r| &r.id == id).unwrap();
                emission_event(r.z, &r.position, &CosmologyParams::default()).unwrap()
            })
            .collect();
        assert!(lightcones_disjoint(&events).unwrap().all_disjoint);
    }
}

#[test]
fn flux_decreases_with_magnitude() {
    let sys = PhotometricSystem::default();
    let mut prev = f64::INFINITY;
    for m in [14.0, 16.0, 18.0, 20.0, 22.0] {
        let f = magnitude_to_photon_flux(m, &sys.r);
        assert!(f < prev);
        prev = f;
    }
    // 5 magnitudes is a factor 100.
    let ratio = magnitude_to_photon_flux(15.0, &sys.r) / magnitude_to_photon_flux(20.0, &sys.r);
    assert!((ratio - 100.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn search_independent_of_row_order(
        sources in prop::collection::vec((0.0f64..360.0, -80.0f64..80.0, 3.0f64..8.0, 16.0f64..21.0), 4..9),
        rotation in 0usize..8,
    ) {
        let cat: Vec<QuasarRecord> = sources
            .iter()
            .enumerate()
            .map(|(i, &(ra, dec, z, m))| record(&format!("S{i:02}"), ra, dec, z, m))
            .collect();
        let mut shuffled = cat.clone();
        shuffled.reverse();
        let len = shuffled.len();
        shuffled.rotate_left(rotation % len);
        prop_assert_eq!(search(&cat, find_pairs).unwrap(), search(&shuffled, find_pairs).unwrap());
        prop_assert_eq!(search(&cat, find_triples).unwrap(), search(&shuffled, find_triples).unwrap());
    }
}
