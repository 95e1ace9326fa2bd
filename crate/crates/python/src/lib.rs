//! Python bindings. Structured results come back as plain dicts and lists
//! (serialized through JSON), scalars as floats.

use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use cosmic_bell::bellsim::{
    classify_runs, conspiracy_model, mutual_information_audit, no_signaling_check, run_chsh,
    run_ghz, ChshAngles, Model, SettingSource, StrategyTable, TestKind, MIN_AUDIT_SAMPLES,
};
use cosmic_bell::catalog::{
    find_pairs, find_triples, load_catalog, PhotometricSystem, SearchOptions,
};
use cosmic_bell::causal::{
    angular_separation as separation, cmb_min_separation, emission_event, lightcones_disjoint,
    threshold_redshift, SkyPosition, CMB_REDSHIFT,
};
use cosmic_bell::config::{Config, ExperimentSpec};
use cosmic_bell::cosmology::{
    comoving_distance, conformal_time, hubble_rate, lookback_time, CosmologyParams,
};
use cosmic_bell::improvement;
use cosmic_bell::noisebudget::{self, NoiseModel};
use cosmic_bell::photonstat::{self, ExperimentGeometry, LinkGeometry, TelescopeConfig};
use cosmic_bell::pipeline;
use cosmic_bell::randomness::{self, ArrivalStream};
use cosmic_bell::Error;

create_exception!(cosmic_bell, InfeasibleError, PyValueError);

fn py_err(e: Error) -> PyErr {
    match e.root() {
        Error::Infeasible(_) => InfeasibleError::new_err(e.to_string()),
        Error::Integration { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_kind(kind: &str) -> PyResult<TestKind> {
    match kind.to_ascii_lowercase().as_str() {
        "chsh" => Ok(TestKind::Chsh),
        "ghz" => Ok(TestKind::Ghz),
        other => Err(PyValueError::new_err(format!(
            "unknown test kind '{other}'"
        ))),
    }
}

/// Flat ΛCDM parameters; ΩΛ defaults to closing the universe.
#[pyclass(name = "Cosmology", frozen)]
struct PyCosmology {
    params: CosmologyParams,
}

#[pymethods]
impl PyCosmology {
    #[new]
    #[pyo3(signature = (hubble_constant=67.3, omega_matter=0.315, omega_lambda=None, omega_radiation=9.2e-5))]
    fn new(
        hubble_constant: f64,
        omega_matter: f64,
        omega_lambda: Option<f64>,
        omega_radiation: f64,
    ) -> PyResult<Self> {
        let omega_lambda = omega_lambda.unwrap_or(1.0 - omega_matter - omega_radiation);
        let params =
            CosmologyParams::new(hubble_constant, omega_matter, omega_lambda, omega_radiation)
                .map_err(py_err)?;
        Ok(Self { params })
    }

    #[getter]
    fn hubble_constant(&self) -> f64 {
        self.params.hubble_constant
    }

    #[getter]
    fn omega_matter(&self) -> f64 {
        self.params.omega_matter
    }

    #[getter]
    fn omega_lambda(&self) -> f64 {
        self.params.omega_lambda
    }

    #[getter]
    fn omega_radiation(&self) -> f64 {
        self.params.omega_radiation
    }

    /// H(z) in 1/Mpc.
    fn hubble_rate(&self, z: f64) -> PyResult<f64> {
        hubble_rate(z, &self.params).map_err(py_err)
    }

    fn comoving_distance(&self, z: f64) -> PyResult<f64> {
        comoving_distance(z, &self.params).map_err(py_err)
    }

    fn conformal_time(&self, z: f64) -> PyResult<f64> {
        conformal_time(z, &self.params).map_err(py_err)
    }

    /// Seconds.
    fn lookback_time(&self, z: f64) -> PyResult<f64> {
        lookback_time(z, &self.params).map_err(py_err)
    }

    #[pyo3(signature = (alpha_deg, n_sources=2))]
    fn threshold_redshift(&self, alpha_deg: f64, n_sources: usize) -> PyResult<f64> {
        threshold_redshift(alpha_deg, n_sources, &self.params).map_err(py_err)
    }

    #[pyo3(signature = (z_cmb=CMB_REDSHIFT))]
    fn cmb_min_separation(&self, z_cmb: f64) -> PyResult<f64> {
        cmb_min_separation(&self.params, z_cmb).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let p = &self.params;
        format!(
            "Cosmology(hubble_constant={}, omega_matter={}, omega_lambda={}, omega_radiation={})",
            p.hubble_constant, p.omega_matter, p.omega_lambda, p.omega_radiation
        )
    }
}

fn params_of(cosmology: Option<&PyCosmology>) -> CosmologyParams {
    cosmology.map_or_else(CosmologyParams::default, |c| c.params)
}

#[pyfunction]
fn angular_separation(ra1: f64, dec1: f64, ra2: f64, dec2: f64) -> PyResult<f64> {
    let a = SkyPosition::new(ra1, dec1).map_err(py_err)?;
    let b = SkyPosition::new(ra2, dec2).map_err(py_err)?;
    Ok(separation(&a, &b))
}

/// Verdict for sources given as (z, ra_deg, dec_deg) tuples.
#[pyfunction]
#[pyo3(signature = (sources, cosmology=None))]
fn causal_verdict<'py>(
    py: Python<'py>,
    sources: Vec<(f64, f64, f64)>,
    cosmology: Option<PyRef<'py, PyCosmology>>,
) -> PyResult<Bound<'py, PyAny>> {
    let params = params_of(cosmology.as_deref());
    let events = sources
        .iter()
        .map(|&(z, ra, dec)| emission_event(z, &SkyPosition::new(ra, dec)?, &params))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    to_py(py, &lightcones_disjoint(&events).map_err(py_err)?)
}

#[pyfunction]
fn detection_probability(mu: f64) -> PyResult<f64> {
    photonstat::detection_probability(mu).map_err(py_err)
}

#[pyfunction]
fn coincidence_probability(mus: Vec<f64>) -> PyResult<f64> {
    photonstat::coincidence_probability(&mus).map_err(py_err)
}

#[pyfunction]
fn improvement_factor<'py>(
    py: Python<'py>,
    lookback_s: f64,
    qrng_latency_s: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &improvement::improvement_factor(lookback_s, qrng_latency_s).map_err(py_err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (signal_rate, background_rate=0.0, dark_count_rate=0.0))]
fn local_fraction(signal_rate: f64, background_rate: f64, dark_count_rate: f64) -> PyResult<f64> {
    let noise = NoiseModel::new(background_rate, dark_count_rate).map_err(py_err)?;
    noisebudget::local_fraction(signal_rate, &noise).map_err(py_err)
}

#[pyfunction]
fn budget_check<'py>(
    py: Python<'py>,
    fraction: f64,
    test_kind: &str,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &noisebudget::budget_check(fraction, parse_kind(test_kind)?).map_err(py_err)?,
    )
}

/// Poisson arrival times (s) on [0, duration_s).
#[pyfunction]
#[pyo3(signature = (rate, duration_s, seed=42))]
fn simulate_arrivals(rate: f64, duration_s: f64, seed: u64) -> PyResult<Vec<f64>> {
    Ok(randomness::simulate_arrivals(rate, duration_s, seed)
        .map_err(py_err)?
        .arrival_times)
}

// The nominal rate only matters when no rate is supplied elsewhere; use the
// empirical one.
fn stream(times: Vec<f64>) -> PyResult<ArrivalStream> {
    let n = times.len();
    let nominal = if n >= 2 && times[n - 1] > times[0] {
        (n - 1) as f64 / (times[n - 1] - times[0])
    } else {
        1.0
    };
    ArrivalStream::new(times, nominal).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (arrival_times, bin_width_s=randomness::DEFAULT_BIN_WIDTH_S))]
fn parity_bits(arrival_times: Vec<f64>, bin_width_s: f64) -> PyResult<Vec<u8>> {
    Ok(
        randomness::parity_bits(&stream(arrival_times)?, bin_width_s)
            .map_err(py_err)?
            .bits,
    )
}

#[pyfunction]
#[pyo3(signature = (arrival_times, k=8, rate=None))]
fn whitened_bits(arrival_times: Vec<f64>, k: u32, rate: Option<f64>) -> PyResult<Vec<u8>> {
    Ok(randomness::whitened_bits(&stream(arrival_times)?, k, rate)
        .map_err(py_err)?
        .bits)
}

#[pyfunction]
fn randomness_report<'py>(py: Python<'py>, bits: Vec<u8>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &randomness::randomness_report(&bits).map_err(py_err)?)
}

fn model(name: &str, f: f64, kind: TestKind) -> PyResult<Model> {
    match name {
        "quantum" => Ok(Model::Quantum),
        "lhv" => Ok(Model::DeterministicLhv(StrategyTable::all(
            kind.detectors(),
        ))),
        "lhv-best" | "lhv_best" => Ok(Model::DeterministicLhv(match kind {
            TestKind::Chsh => StrategyTable::best_chsh(),
            TestKind::Ghz => StrategyTable::best_mermin(),
        })),
        "conspiracy" => conspiracy_model(f).map_err(py_err),
        other => Err(PyValueError::new_err(format!("unknown model '{other}'"))),
    }
}

#[derive(Serialize)]
struct SimulationSummary<S> {
    statistics: S,
    no_signaling: Option<cosmic_bell::bellsim::NoSignalingReport>,
    mutual_information: Option<cosmic_bell::bellsim::MutualInfoBudget>,
    classes: Vec<cosmic_bell::bellsim::RunClassSummary>,
}

/// CHSH run with fair-coin settings; angles (a, a′, b, b′) in degrees.
#[pyfunction]
#[pyo3(signature = (model="quantum", f=0.0, trials=100_000, seed=42, angles_deg=None))]
fn simulate_chsh<'py>(
    py: Python<'py>,
    model: &str,
    f: f64,
    trials: usize,
    seed: u64,
    angles_deg: Option<[f64; 4]>,
) -> PyResult<Bound<'py, PyAny>> {
    let m = self::model(model, f, TestKind::Chsh)?;
    let angles = angles_deg.map_or_else(ChshAngles::canonical, ChshAngles::from_degrees);
    let run = py
        .detach(|| run_chsh(&m, &SettingSource::FairCoins, angles, trials, seed))
        .map_err(py_err)?;
    let mutual_information = if run.records.len() >= MIN_AUDIT_SAMPLES {
        Some(mutual_information_audit(&run.records, TestKind::Chsh).map_err(py_err)?)
    } else {
        None
    };
    to_py(
        py,
        &SimulationSummary {
            no_signaling: Some(no_signaling_check(&run.records)),
            mutual_information,
            classes: classify_runs(&run.records),
            statistics: run.statistics,
        },
    )
}

#[pyfunction]
#[pyo3(signature = (model="quantum", f=0.0, trials=100_000, seed=42))]
fn simulate_ghz<'py>(
    py: Python<'py>,
    model: &str,
    f: f64,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let m = self::model(model, f, TestKind::Ghz)?;
    let run = py
        .detach(|| run_ghz(&m, &SettingSource::FairCoins, trials, seed))
        .map_err(py_err)?;
    let mutual_information = if run.records.len() >= MIN_AUDIT_SAMPLES {
        Some(mutual_information_audit(&run.records, TestKind::Ghz).map_err(py_err)?)
    } else {
        None
    };
    to_py(
        py,
        &SimulationSummary {
            no_signaling: None,
            mutual_information,
            classes: classify_runs(&run.records),
            statistics: run.statistics,
        },
    )
}

/// Ranked causally independent pairs (n=2) or triples (n=3) from a catalog file.
#[pyfunction]
#[pyo3(signature = (catalog_path, n=2, min_z=0.0, diameter_m=1.0, detector_efficiency=0.5, baseline_km=50.0, cosmology=None))]
#[allow(clippy::too_many_arguments)]
fn find_candidates<'py>(
    py: Python<'py>,
    catalog_path: &str,
    n: usize,
    min_z: f64,
    diameter_m: f64,
    detector_efficiency: f64,
    baseline_km: f64,
    cosmology: Option<PyRef<'py, PyCosmology>>,
) -> PyResult<Bound<'py, PyAny>> {
    let params = params_of(cosmology.as_deref());
    let load = load_catalog(catalog_path).map_err(py_err)?;
    let geometry = ExperimentGeometry::symmetric(
        TelescopeConfig::new(diameter_m, detector_efficiency).map_err(py_err)?,
        LinkGeometry::new(baseline_km, 0.0).map_err(py_err)?,
    );
    let photometry = PhotometricSystem::default();
    let opts = SearchOptions {
        min_z,
        params: &params,
        photometry: &photometry,
        geometry: &geometry,
    };
    let found = py
        .detach(|| match n {
            2 => find_pairs(&load.records, &opts),
            3 => find_triples(&load.records, &opts),
            _ => Err(Error::InvalidInput("n must be 2 or 3".into())),
        })
        .map_err(py_err)?;
    to_py(py, &found)
}

/// Full pipeline from an experiment spec given as TOML text.
#[pyfunction]
#[pyo3(signature = (spec_toml, base_dir="."))]
fn end_to_end<'py>(
    py: Python<'py>,
    spec_toml: &str,
    base_dir: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = ExperimentSpec::from_toml_str(spec_toml).map_err(py_err)?;
    let report = py
        .detach(|| pipeline::end_to_end(&spec, &Config::default(), Path::new(base_dir)))
        .map_err(py_err)?;
    to_py(py, &report)
}

#[pymodule]
#[pyo3(name = "cosmic_bell")]
fn cosmic_bell_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_class::<PyCosmology>()?;
    m.add_function(wrap_pyfunction!(angular_separation, m)?)?;
    m.add_function(wrap_pyfunction!(causal_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(detection_probability, m)?)?;
    m.add_function(wrap_pyfunction!(coincidence_probability, m)?)?;
    m.add_function(wrap_pyfunction!(improvement_factor, m)?)?;
    m.add_function(wrap_pyfunction!(local_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(budget_check, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_arrivals, m)?)?;
    m.add_function(wrap_pyfunction!(parity_bits, m)?)?;
    m.add_function(wrap_pyfunction!(whitened_bits, m)?)?;
    m.add_function(wrap_pyfunction!(randomness_report, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_chsh, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_ghz, m)?)?;
    m.add_function(wrap_pyfunction!(find_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(end_to_end, m)?)?;
    Ok(())
}
