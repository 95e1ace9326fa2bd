//! End-to-end simulation: source flux → coincidence statistics → simulated
//! arrivals → setting bits → Bell experiment → run classification → noise
//! budget, collected into one report.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bellsim::{
    classify_runs, conspiracy_model, mutual_information_audit, run_chsh, run_ghz, ChshAngles,
    ExperimentStatistics, Model, MutualInfoBudget, RunClass, RunClassSummary, SettingSource,
    SettingSourceTag, StrategyTable, TaggedSetting, TestKind, MIN_AUDIT_SAMPLES,
};
use crate::catalog::load_catalog;
use crate::causal::{emission_event, lightcones_disjoint, CausalVerdict};
use crate::config::{Config, ExperimentSpec, ModelKind};
use crate::error::{Error, Result};
use crate::noisebudget::{budget_check, local_fraction, BudgetVerdict};
use crate::photonstat::{coincidence_probability, Arm, ArmStatistics, SourceFlux};
use crate::randomness::{
    parity_bit, parity_bits, randomness_report, simulate_arrivals, whitened_bits, ArrivalStream,
    RandomnessReport, MIN_REPORT_BITS,
};

const WHITENED_BITS_PER_GAP: u32 = 8;

/// Sub-seeds derived from the spec seed, recorded for reproduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub signal_arrivals: Vec<u64>,
    pub noise_arrivals: Vec<u64>,
    pub fallback_generator: u64,
    pub bell: u64,
}

impl StageSeeds {
    fn derive(seed: u64, arms: usize) -> Self {
        let mix = |k: u64| seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        Self {
            signal_arrivals: (0..arms as u64).map(|i| mix(1 + i)).collect(),
            noise_arrivals: (0..arms as u64).map(|i| mix(101 + i)).collect(),
            fallback_generator: mix(201),
            bell: mix(301),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSource {
    pub source_id: Option<String>,
    pub redshift: Option<f64>,
    pub flux_photons_per_s_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceStage {
    pub arms: Vec<ArmStatistics>,
    pub coincidence_probability: f64,
    /// trials × coincidence probability
    pub expected_all_cosmic_runs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmArrivals {
    pub signal_arrivals: usize,
    pub noise_arrivals: usize,
    pub duration_s: f64,
    pub cosmic_settings: usize,
    pub local_noise_settings: usize,
    pub fallback_settings: usize,
    pub parity_report: Option<RandomnessReport>,
    pub whitened_report: Option<RandomnessReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellStage {
    pub statistics: ExperimentStatistics,
    pub mutual_information: Option<MutualInfoBudget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationStage {
    pub classes: Vec<RunClassSummary>,
    pub all_cosmic_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStage {
    pub per_arm: Vec<Option<BudgetVerdict>>,
    pub all_pass: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndReport {
    pub spec: ExperimentSpec,
    pub config: Config,
    pub seeds: StageSeeds,
    pub sources: Vec<ArmSource>,
    pub causal: Option<CausalVerdict>,
    pub coincidence: CoincidenceStage,
    pub arrivals: Vec<ArmArrivals>,
    pub bell: BellStage,
    pub classification: ClassificationStage,
    pub noise: NoiseStage,
}

fn resolve_sources(
    spec: &ExperimentSpec,
    config: &Config,
    base_dir: &Path,
) -> Result<(Vec<ArmSource>, Option<CausalVerdict>)> {
    let params = config.cosmology.overlay(spec.cosmology).resolve()?;
    let mut sources = Vec::new();
    let mut events = Vec::new();
    for arm in &spec.arms {
        match (&arm.flux, &arm.catalog, &arm.source_id) {
            (Some(flux), _, _) => sources.push(ArmSource {
                source_id: None,
                redshift: None,
                flux_photons_per_s_m2: *flux,
            }),
            (None, Some(path), Some(id)) => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let load = load_catalog(&path)?;
                let rec = load.records.iter().find(|r| &r.id == id).ok_or_else(|| {
                    Error::Catalog(format!("source '{id}' not in {}", path.display()))
                })?;
                events.push(emission_event(rec.z, &rec.position, &params)?);
                sources.push(ArmSource {
                    source_id: Some(id.clone()),
                    redshift: Some(rec.z),
                    flux_photons_per_s_m2: rec.photon_flux(&config.photometry),
                });
            }
            _ => return Err(Error::invalid("arm needs a flux or a catalog source")),
        }
    }
    let causal = if events.len() == spec.arms.len() {
        Some(lightcones_disjoint(&events)?)
    } else {
        None
    };
    Ok((sources, causal))
}

/// Time of the first arrival in each window [k·w, (k+1)·w).
fn first_times(stream: Option<&ArrivalStream>, window_s: f64, n: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; n];
    if let Some(s) = stream {
        for &t in &s.arrival_times {
            let k = (t / window_s).floor() as usize;
            if k >= n {
                break;
            }
            if out[k].is_none() {
                out[k] = Some(t);
            }
        }
    }
    out
}

fn maybe_report(bits: Result<Vec<u8>>) -> Option<RandomnessReport> {
    bits.ok()
        .filter(|b| b.len() >= MIN_REPORT_BITS)
        .and_then(|b| randomness_report(&b).ok())
}

/// Runs every stage of `spec`. Relative catalog paths resolve against `base_dir`.
pub fn end_to_end(
    spec: &ExperimentSpec,
    config: &Config,
    base_dir: &Path,
) -> Result<EndToEndReport> {
    spec.validate().map_err(|e| e.at_stage("spec"))?;
    let kind = spec.test_kind;
    let n_arms = spec.arms.len();
    let n = spec.trials;
    let seeds = StageSeeds::derive(spec.seed, n_arms);

    let (sources, causal) =
        resolve_sources(spec, config, base_dir).map_err(|e| e.at_stage("sources"))?;

    let arms: Vec<Arm> = spec
        .arms
        .iter()
        .zip(&sources)
        .map(|(a, s)| {
            Ok(Arm {
                telescope: a.telescope()?,
                link: a.link()?,
                flux: SourceFlux::new(s.flux_photons_per_s_m2)?,
            })
        })
        .collect::<Result<_>>()
        .map_err(|e| e.at_stage("coincidence"))?;
    let arm_stats: Vec<ArmStatistics> = arms
        .iter()
        .map(Arm::statistics)
        .collect::<Result<_>>()
        .map_err(|e| e.at_stage("coincidence"))?;
    let mus: Vec<f64> = arm_stats.iter().map(|s| s.mean_detections).collect();
    let p_all = coincidence_probability(&mus).map_err(|e| e.at_stage("coincidence"))?;
    let coincidence = CoincidenceStage {
        arms: arm_stats.clone(),
        coincidence_probability: p_all,
        expected_all_cosmic_runs: p_all * n as f64,
    };

    // Setting per window: parity of the first photon (cosmic or local), else a fallback coin.
    let mut fallback_rng = ChaCha8Rng::seed_from_u64(seeds.fallback_generator);
    let mut per_arm_settings: Vec<Vec<TaggedSetting>> = Vec::with_capacity(n_arms);
    let mut arrivals = Vec::with_capacity(n_arms);
    for (i, stats) in arm_stats.iter().enumerate() {
        let window = stats.window_s;
        let duration = window * n as f64;
        let stage = |e: Error| e.at_stage("arrivals");
        let signal = if stats.detected_rate_hz > 0.0 {
            Some(
                simulate_arrivals(stats.detected_rate_hz, duration, seeds.signal_arrivals[i])
                    .map_err(stage)?,
            )
        } else {
            None
        };
        let noise_rate = spec.noise.total_rate();
        let noise = if noise_rate > 0.0 {
            Some(simulate_arrivals(noise_rate, duration, seeds.noise_arrivals[i]).map_err(stage)?)
        } else {
            None
        };
        let first_signal = first_times(signal.as_ref(), window, n);
        let first_noise = first_times(noise.as_ref(), window, n);
        let mut settings = Vec::with_capacity(n);
        let (mut cosmic, mut local, mut fallback) = (0, 0, 0);
        for k in 0..n {
            let s = match (first_signal[k], first_noise[k]) {
                (Some(ts), Some(tn)) if tn < ts => {
                    local += 1;
                    TaggedSetting {
                        bit: parity_bit(tn, spec.bin_width_s),
                        tag: SettingSourceTag::LocalNoise,
                    }
                }
                (Some(ts), _) => {
                    cosmic += 1;
                    TaggedSetting {
                        bit: parity_bit(ts, spec.bin_width_s),
                        tag: SettingSourceTag::Cosmic,
                    }
                }
                (None, Some(tn)) => {
                    local += 1;
                    TaggedSetting {
                        bit: parity_bit(tn, spec.bin_width_s),
                        tag: SettingSourceTag::LocalNoise,
                    }
                }
                (None, None) => {
                    fallback += 1;
                    TaggedSetting {
                        bit: fallback_rng.random::<bool>() as u8,
                        tag: SettingSourceTag::FallbackGenerator,
                    }
                }
            };
            settings.push(s);
        }
        per_arm_settings.push(settings);
        arrivals.push(ArmArrivals {
            signal_arrivals: signal.as_ref().map_or(0, ArrivalStream::len),
            noise_arrivals: noise.as_ref().map_or(0, ArrivalStream::len),
            duration_s: duration,
            cosmic_settings: cosmic,
            local_noise_settings: local,
            fallback_settings: fallback,
            parity_report: signal
                .as_ref()
                .and_then(|s| maybe_report(parity_bits(s, spec.bin_width_s).map(|b| b.bits))),
            whitened_report: signal.as_ref().and_then(|s| {
                maybe_report(whitened_bits(s, WHITENED_BITS_PER_GAP, None).map(|b| b.bits))
            }),
        });
    }

    let source = SettingSource::Explicit(
        (0..n)
            .map(|k| per_arm_settings.iter().map(|a| a[k]).collect())
            .collect(),
    );
    let model = match spec.model {
        ModelKind::Quantum => Model::Quantum,
        ModelKind::Lhv => Model::DeterministicLhv(StrategyTable::all(kind.detectors())),
        ModelKind::Conspiracy => {
            conspiracy_model(spec.conspiracy_fraction).map_err(|e| e.at_stage("bell"))?
        }
    };
    let (statistics, records) = match kind {
        TestKind::Chsh => {
            let run = run_chsh(
                &model,
                &source,
                ChshAngles::from_degrees(spec.angles_deg),
                n,
                seeds.bell,
            )
            .map_err(|e| e.at_stage("bell"))?;
            (ExperimentStatistics::Chsh(run.statistics), run.records)
        }
        TestKind::Ghz => {
            let run = run_ghz(&model, &source, n, seeds.bell).map_err(|e| e.at_stage("bell"))?;
            (ExperimentStatistics::Ghz(run.statistics), run.records)
        }
    };
    let mutual_information = if records.len() >= MIN_AUDIT_SAMPLES {
        Some(mutual_information_audit(&records, kind).map_err(|e| e.at_stage("bell"))?)
    } else {
        None
    };

    let classes = classify_runs(&records);
    let all_cosmic_fraction = classes
        .iter()
        .find(|c| c.class == RunClass::AllCosmic)
        .map_or(0.0, |c| c.fraction);

    let mut notes = Vec::new();
    let mut per_arm = Vec::with_capacity(n_arms);
    for (i, stats) in arm_stats.iter().enumerate() {
        if stats.detected_rate_hz <= 0.0 {
            notes.push(format!(
                "arm {i}: no cosmic signal, noise budget not evaluated"
            ));
            per_arm.push(None);
            continue;
        }
        let fraction =
            local_fraction(stats.detected_rate_hz, &spec.noise).map_err(|e| e.at_stage("noise"))?;
        per_arm.push(Some(
            budget_check(fraction, kind).map_err(|e| e.at_stage("noise"))?,
        ));
    }
    let all_pass = per_arm.iter().all(|v| v.is_some_and(|v| v.pass));

    Ok(EndToEndReport {
        spec: spec.clone(),
        config: config.clone(),
        seeds,
        sources,
        causal,
        coincidence,
        arrivals,
        bell: BellStage {
            statistics,
            mutual_information,
        },
        classification: ClassificationStage {
            classes,
            all_cosmic_fraction,
        },
        noise: NoiseStage {
            per_arm,
            all_pass,
            notes,
        },
    })
}
