//! Quasar catalog ingestion, AB-magnitude photon fluxes and the search for
//! causally independent pairs and triples.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{
    angular_separation, emission_event, lightcones_disjoint, CausalVerdict, SkyPosition,
};
use crate::cosmology::{comoving_distance, conformal_time, CosmologyParams};
use crate::error::{Error, Result};
use crate::photonstat::ExperimentGeometry;

/// Planck constant, J·s.
pub const PLANCK_J_S: f64 = 6.626_070_15e-34;
/// AB zero point, Jy.
pub const AB_ZERO_POINT_JY: f64 = 3631.0;
const JANSKY_SI: f64 = 1e-26;
const SPEED_OF_LIGHT_M_S: f64 = crate::photonstat::SPEED_OF_LIGHT_M_S;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    U,
    G,
    R,
    I,
    Z,
}

impl Band {
    pub const ALL: [Band; 5] = [Band::U, Band::G, Band::R, Band::I, Band::Z];

    pub fn name(self) -> &'static str {
        match self {
            Band::U => "u",
            Band::G => "g",
            Band::R => "r",
            Band::I => "i",
            Band::Z => "z",
        }
    }

    /// Catalog column carrying this band; `z` is taken by redshift.
    pub fn column(self) -> &'static str {
        match self {
            Band::Z => "z_mag",
            other => other.name(),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandDefinition {
    pub effective_wavelength_nm: f64,
    pub bandwidth_nm: f64,
}

impl BandDefinition {
    pub fn new(effective_wavelength_nm: f64, bandwidth_nm: f64) -> Result<Self> {
        if !(effective_wavelength_nm > 0.0 && bandwidth_nm > 0.0)
            || !effective_wavelength_nm.is_finite()
            || !bandwidth_nm.is_finite()
        {
            return Err(Error::invalid(
                "band wavelength and bandwidth must be positive",
            ));
        }
        Ok(Self {
            effective_wavelength_nm,
            bandwidth_nm,
        })
    }
}

/// Effective wavelengths and widths of the five survey bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotometricSystem {
    pub u: BandDefinition,
    pub g: BandDefinition,
    pub r: BandDefinition,
    pub i: BandDefinition,
    pub z: BandDefinition,
}

impl Default for PhotometricSystem {
    fn default() -> Self {
        let b = |l, w| BandDefinition {
            effective_wavelength_nm: l,
            bandwidth_nm: w,
        };
        Self {
            u: b(355.0, 60.0),
            g: b(477.0, 138.0),
            r: b(623.0, 137.0),
            i: b(764.0, 152.0),
            z: b(906.0, 95.0),
        }
    }
}

impl PhotometricSystem {
    pub fn band(&self, band: Band) -> &BandDefinition {
        match band {
            Band::U => &self.u,
            Band::G => &self.g,
            Band::R => &self.r,
            Band::I => &self.i,
            Band::Z => &self.z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for band in Band::ALL {
            let d = self.band(band);
            BandDefinition::new(d.effective_wavelength_nm, d.bandwidth_nm)?;
        }
        Ok(())
    }
}

/// Photons s⁻¹ m⁻² for AB magnitude `m`, treating the spectrum as flat in
/// f_ν across the band: f_ν·Δν / (h·ν_eff).
pub fn magnitude_to_photon_flux(m: f64, band: &BandDefinition) -> f64 {
    let lambda = band.effective_wavelength_nm * 1e-9;
    let width = band.bandwidth_nm * 1e-9;
    let f_nu = AB_ZERO_POINT_JY * JANSKY_SI * 10f64.powf(-0.4 * m);
    let nu = SPEED_OF_LIGHT_M_S / lambda;
    let d_nu = SPEED_OF_LIGHT_M_S * width / (lambda * lambda);
    f_nu * d_nu / (PLANCK_J_S * nu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasarRecord {
    pub id: String,
    pub position: SkyPosition,
    pub z: f64,
    /// AB magnitudes indexed u, g, r, i, z.
    pub magnitudes: [Option<f64>; 5],
}

impl QuasarRecord {
    pub fn magnitude(&self, band: Band) -> Option<f64> {
        self.magnitudes[band.index()]
    }

    /// Photon flux summed over every band with a magnitude.
    pub fn photon_flux(&self, system: &PhotometricSystem) -> f64 {
        Band::ALL
            .iter()
            .filter_map(|&b| {
                self.magnitude(b)
                    .map(|m| magnitude_to_photon_flux(m, system.band(b)))
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    /// 1-based line number in the file (header is line 1).
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogLoad {
    pub records: Vec<QuasarRecord>,
    pub rejected: Vec<RowDiagnostic>,
}

impl CatalogLoad {
    pub fn accepted(&self) -> usize {
        self.records.len()
    }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<CatalogLoad> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_catalog(file)
}

/// Parses comma- or tab-delimited catalog text; the delimiter is taken from
/// the header line.
pub fn parse_catalog<R: Read>(mut reader: R) -> Result<CatalogLoad> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::Catalog(format!("not valid UTF-8 text: {e}")))?;
    let header_line = text.lines().next().unwrap_or("");
    let delimiter = if header_line.contains('\t') {
        b'\t'
    } else {
        b','
    };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = rdr
        .headers()
        .map_err(|e| Error::Catalog(format!("unreadable header: {e}")))?
        .clone();
    let columns: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_ascii_lowercase(), i))
        .collect();
    let required = |name: &str| {
        columns
            .get(name)
            .copied()
            .ok_or_else(|| Error::Catalog(format!("missing mandatory column '{name}'")))
    };
    let id_col = required("id")?;
    let ra_col = required("ra")?;
    let dec_col = required("dec")?;
    let z_col = required("z")?;
    let band_cols: Vec<(Band, usize)> = Band::ALL
        .iter()
        .filter_map(|&b| columns.get(b.column()).map(|&c| (b, c)))
        .collect();

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                rejected.push(RowDiagnostic {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row, id_col, ra_col, dec_col, z_col, &band_cols) {
            Ok(rec) => records.push(rec),
            Err(message) => rejected.push(RowDiagnostic { line, message }),
        }
    }
    Ok(CatalogLoad { records, rejected })
}

fn parse_row(
    row: &csv::StringRecord,
    id_col: usize,
    ra_col: usize,
    dec_col: usize,
    z_col: usize,
    band_cols: &[(Band, usize)],
) -> std::result::Result<QuasarRecord, String> {
    let field = |col: usize, name: &str| {
        row.get(col)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("missing value for '{name}'"))
    };
    let number = |col: usize, name: &str| -> std::result::Result<f64, String> {
        let raw = field(col, name)?;
        let v: f64 = raw
            .parse()
            .map_err(|_| format!("cannot parse '{raw}' as a number in column '{name}'"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite value in column '{name}'"))
        }
    };
    let id = field(id_col, "id")?.to_string();
    let ra = number(ra_col, "ra")?;
    let dec = number(dec_col, "dec")?;
    let position = SkyPosition::new(ra, dec).map_err(|e| e.to_string())?;
    let z = number(z_col, "z")?;
    if z < 0.0 {
        return Err(format!("negative redshift {z}"));
    }
    let mut magnitudes = [None; 5];
    for &(band, col) in band_cols {
        if row.get(col).is_some_and(|s| !s.is_empty()) {
            magnitudes[band.index()] = Some(number(col, band.column())?);
        }
    }
    Ok(QuasarRecord {
        id,
        position,
        z,
        magnitudes,
    })
}

/// A causally independent set of sources with its ranking data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub ids: Vec<String>,
    pub redshifts: Vec<f64>,
    /// (first, second, degrees) for each member pair
    pub separations_deg: Vec<(usize, usize, f64)>,
    pub member_flux: Vec<f64>,
    pub coincidence_probability: f64,
    pub verdict: CausalVerdict,
}

impl CandidateSet {
    pub fn min_flux(&self) -> f64 {
        self.member_flux
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Search configuration shared by [`find_pairs`] and [`find_triples`].
#[derive(Debug, Clone)]
pub struct SearchOptions<'a> {
    pub min_z: f64,
    pub params: &'a CosmologyParams,
    pub photometry: &'a PhotometricSystem,
    pub geometry: &'a ExperimentGeometry,
}

struct Prepared<'a> {
    record: &'a QuasarRecord,
    distance: f64,
    eta: f64,
    flux: f64,
}

fn prepare<'a>(catalog: &'a [QuasarRecord], opts: &SearchOptions) -> Result<Vec<Prepared<'a>>> {
    let mut prepared = catalog
        .par_iter()
        .filter(|r| r.z >= opts.min_z)
        .map(|record| {
            Ok(Prepared {
                record,
                distance: comoving_distance(record.z, opts.params)?,
                eta: conformal_time(record.z, opts.params)?,
                flux: record.photon_flux(opts.photometry),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // Sources whose own cone reaches Earth's worldline can never qualify.
    prepared.retain(|p| p.distance >= p.eta);
    prepared.sort_by(|a, b| a.record.id.cmp(&b.record.id));
    Ok(prepared)
}

/// Cheap necessary condition: the separation of two sources is at most
/// 180° − |δ₁ + δ₂|, so their chord cannot exceed that of the bound.
fn declination_allows(a: &Prepared, b: &Prepared) -> bool {
    let max_sep = (180.0 - (a.record.position.declination + b.record.position.declination).abs())
        .to_radians();
    let max_chord = (a.distance.powi(2) + b.distance.powi(2)
        - 2.0 * a.distance * b.distance * max_sep.cos())
    .max(0.0)
    .sqrt();
    // Small slack so rounding never drops a boundary case; the full check follows.
    max_chord * (1.0 + 1e-9) >= a.eta + b.eta
}

fn build_candidate(members: &[&Prepared], opts: &SearchOptions) -> Result<Option<CandidateSet>> {
    let events = members
        .iter()
        .map(|m| emission_event(m.record.z, &m.record.position, opts.params))
        .collect::<Result<Vec<_>>>()?;
    let verdict = lightcones_disjoint(&events)?;
    if !verdict.all_disjoint {
        return Ok(None);
    }
    let mut separations_deg = Vec::new();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            separations_deg.push((
                i,
                j,
                angular_separation(&members[i].record.position, &members[j].record.position),
            ));
        }
    }
    let member_flux: Vec<f64> = members.iter().map(|m| m.flux).collect();
    Ok(Some(CandidateSet {
        ids: members.iter().map(|m| m.record.id.clone()).collect(),
        redshifts: members.iter().map(|m| m.record.z).collect(),
        separations_deg,
        coincidence_probability: opts.geometry.coincidence_for(&member_flux)?,
        member_flux,
        verdict,
    }))
}

fn rank(sets: &mut [CandidateSet]) {
    sets.sort_by(|a, b| {
        b.coincidence_probability
            .total_cmp(&a.coincidence_probability)
            .then_with(|| b.min_flux().total_cmp(&a.min_flux()))
            .then_with(|| a.ids.cmp(&b.ids))
    });
}

fn flatten(chunks: Vec<Result<Vec<CandidateSet>>>) -> Result<Vec<CandidateSet>> {
    let mut out = Vec::new();
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// All unordered pairs with mutually disjoint past light cones that also
/// avoid Earth's worldline, ranked by descending two-fold coincidence
/// probability, then descending minimum member flux, then ids.
pub fn find_pairs(catalog: &[QuasarRecord], opts: &SearchOptions) -> Result<Vec<CandidateSet>> {
    let prepared = prepare(catalog, opts)?;
    let chunks: Vec<Result<Vec<CandidateSet>>> = (0..prepared.len())
        .into_par_iter()
        .map(|i| {
            let mut found = Vec::new();
            for j in i + 1..prepared.len() {
                if !declination_allows(&prepared[i], &prepared[j]) {
                    continue;
                }
                if let Some(c) = build_candidate(&[&prepared[i], &prepared[j]], opts)? {
                    found.push(c);
                }
            }
            Ok(found)
        })
        .collect();
    let mut sets = flatten(chunks)?;
    rank(&mut sets);
    Ok(sets)
}

/// As [`find_pairs`] for triples, ranked by three-fold coincidence probability.
pub fn find_triples(catalog: &[QuasarRecord], opts: &SearchOptions) -> Result<Vec<CandidateSet>> {
    let prepared = prepare(catalog, opts)?;
    let n = prepared.len();
    if n < 3 {
        return Ok(Vec::new());
    }
    // Pairwise compatibility from the same margin the verdict uses; the
    // final candidate is re-validated as a whole.
    let compatible: Vec<Vec<bool>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j || !declination_allows(&prepared[i], &prepared[j]) {
                        return false;
                    }
                    let sep = angular_separation(
                        &prepared[i].record.position,
                        &prepared[j].record.position,
                    )
                    .to_radians();
                    let (a, b) = (&prepared[i], &prepared[j]);
                    let chord = (a.distance.powi(2) + b.distance.powi(2)
                        - 2.0 * a.distance * b.distance * sep.cos())
                    .max(0.0)
                    .sqrt();
                    chord * (1.0 + 1e-9) >= a.eta + b.eta
                })
                .collect()
        })
        .collect();
    let chunks: Vec<Result<Vec<CandidateSet>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut found = Vec::new();
            for j in i + 1..n {
                if !compatible[i][j] {
                    continue;
                }
                for k in j + 1..n {
                    if !(compatible[i][k] && compatible[j][k]) {
                        continue;
                    }
                    let members = [&prepared[i], &prepared[j], &prepared[k]];
                    if let Some(c) = build_candidate(&members, opts)? {
                        found.push(c);
                    }
                }
            }
            Ok(found)
        })
        .collect();
    let mut sets = flatten(chunks)?;
    rank(&mut sets);
    Ok(sets)
}
