//! Monte Carlo CHSH and GHZ experiments under quantum, deterministic
//! local-hidden-variable and setting-correlated ("conspiracy") models, with
//! mutual-information accounting of how much the hidden state knows about
//! the settings.
//!
//! CHSH statistic: S = −[E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)], oriented so
//! that the anticorrelated singlet E = −cos 2(θa − θb) at the canonical angles
//! (a, a′, b, b′) = (0°, 45°, 22.5°, 67.5°) gives +2√2.
//!
//! Mermin statistic: M = ⟨XXX⟩ − ⟨XYY⟩ − ⟨YXY⟩ − ⟨YYX⟩, setting 0 = X, 1 = Y.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::SettingBitstream;

/// Mutual information (bits) sufficient to mimic singlet CHSH correlations.
pub const CHSH_INFORMATION_THRESHOLD_BITS: f64 = 0.046;
/// Mutual information (bits) sufficient to mimic GHZ correlations.
pub const GHZ_INFORMATION_THRESHOLD_BITS: f64 = 0.415;
pub const MIN_AUDIT_SAMPLES: usize = 10_000;

const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Chsh,
    Ghz,
}

impl TestKind {
    pub fn detectors(self) -> usize {
        match self {
            TestKind::Chsh => 2,
            TestKind::Ghz => 3,
        }
    }

    pub fn information_threshold_bits(self) -> f64 {
        match self {
            TestKind::Chsh => CHSH_INFORMATION_THRESHOLD_BITS,
            TestKind::Ghz => GHZ_INFORMATION_THRESHOLD_BITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingSourceTag {
    Cosmic,
    LocalNoise,
    FallbackGenerator,
}

impl SettingSourceTag {
    fn as_str(self) -> &'static str {
        match self {
            SettingSourceTag::Cosmic => "cosmic",
            SettingSourceTag::LocalNoise => "local_noise",
            SettingSourceTag::FallbackGenerator => "fallback_generator",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "cosmic" => Ok(SettingSourceTag::Cosmic),
            "local_noise" => Ok(SettingSourceTag::LocalNoise),
            "fallback_generator" => Ok(SettingSourceTag::FallbackGenerator),
            other => Err(Error::invalid(format!("unknown setting tag '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSetting {
    pub bit: u8,
    pub tag: SettingSourceTag,
}

/// Where detector settings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SettingSource {
    /// Independent fair coins, tagged as fallback-generator settings.
    FairCoins,
    /// Settings per trial, per detector.
    Explicit(Vec<Vec<TaggedSetting>>),
}

impl SettingSource {
    /// Consumes one bit per trial from each detector's bitstream, tagged cosmic.
    pub fn from_bitstreams(streams: &[SettingBitstream]) -> Result<Self> {
        if streams.is_empty() {
            return Err(Error::invalid("at least one bitstream is required"));
        }
        let n = streams.iter().map(|s| s.len()).min().unwrap_or(0);
        Ok(SettingSource::Explicit(
            (0..n)
                .map(|t| {
                    streams
                        .iter()
                        .map(|s| TaggedSetting {
                            bit: s.bits[t],
                            tag: SettingSourceTag::Cosmic,
                        })
                        .collect()
                })
                .collect(),
        ))
    }

    fn check(&self, n_trials: usize, detectors: usize) -> Result<()> {
        if let SettingSource::Explicit(rows) = self {
            if rows.len() < n_trials {
                return Err(Error::invalid(format!(
                    "setting source has {} trials, {n_trials} requested",
                    rows.len()
                )));
            }
            if rows[..n_trials]
                .iter()
                .any(|r| r.len() != detectors || r.iter().any(|s| s.bit > 1))
            {
                return Err(Error::invalid(format!(
                    "every trial needs {detectors} binary settings"
                )));
            }
        }
        Ok(())
    }
}

/// Hidden state retained for the mutual-information audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenState {
    /// Quantum model: no hidden variable.
    None,
    /// Index into the LHV strategy table.
    Strategy(u32),
    /// Conspiracy active; carries the settings it was generated from.
    Conspiracy { settings: u8 },
}

impl HiddenState {
    fn encode(self) -> String {
        match self {
            HiddenState::None => "none".into(),
            HiddenState::Strategy(i) => format!("strategy:{i}"),
            HiddenState::Conspiracy { settings } => format!("conspiracy:{settings}"),
        }
    }

    fn decode(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unknown hidden state '{s}'"));
        match s.split_once(':') {
            None if s == "none" => Ok(HiddenState::None),
            Some(("strategy", i)) => Ok(HiddenState::Strategy(i.parse().map_err(|_| bad())?)),
            Some(("conspiracy", i)) => Ok(HiddenState::Conspiracy {
                settings: i.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub settings: Vec<u8>,
    /// ±1
    pub outcomes: Vec<i8>,
    pub tags: Vec<SettingSourceTag>,
    pub hidden_state: HiddenState,
}

impl TrialRecord {
    /// Settings packed as bits, first detector most significant.
    pub fn settings_index(&self) -> u8 {
        self.settings.iter().fold(0, |acc, &s| (acc << 1) | s)
    }
}

/// Deterministic local strategy: an outcome for each detector and setting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LhvStrategy {
    pub outcomes: Vec<[i8; 2]>,
}

impl LhvStrategy {
    /// Decodes bit 2·d + s of `code` as the outcome (1 → −1) of detector d at setting s.
    pub fn from_code(code: u32, detectors: usize) -> Self {
        Self {
            outcomes: (0..detectors)
                .map(|d| {
                    let o = |s: usize| if code >> (2 * d + s) & 1 == 1 { -1 } else { 1 };
                    [o(0), o(1)]
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTable {
    pub strategies: Vec<LhvStrategy>,
    pub weights: Vec<f64>,
}

impl StrategyTable {
    pub fn new(strategies: Vec<LhvStrategy>, weights: Vec<f64>) -> Result<Self> {
        let t = Self {
            strategies,
            weights,
        };
        t.validate(None)?;
        Ok(t)
    }

    /// Every deterministic strategy for `detectors` detectors, equally weighted.
    pub fn all(detectors: usize) -> Self {
        let count = 1u32 << (2 * detectors);
        Self {
            strategies: (0..count)
                .map(|c| LhvStrategy::from_code(c, detectors))
                .collect(),
            weights: vec![1.0; count as usize],
        }
    }

    pub fn single(strategy: LhvStrategy) -> Self {
        Self {
            strategies: vec![strategy],
            weights: vec![1.0],
        }
    }

    /// A strategy reaching S = 2: A = +1, B = −1 at both settings.
    pub fn best_chsh() -> Self {
        Self::single(LhvStrategy {
            outcomes: vec![[1, 1], [-1, -1]],
        })
    }

    /// A strategy reaching M = 2: X = (+,+,+), Y = (+,+,−).
    pub fn best_mermin() -> Self {
        Self::single(LhvStrategy {
            outcomes: vec![[1, 1], [1, 1], [1, -1]],
        })
    }

    fn validate(&self, detectors: Option<usize>) -> Result<()> {
        if self.strategies.is_empty() || self.strategies.len() != self.weights.len() {
            return Err(Error::invalid(
                "strategy table needs one weight per strategy",
            ));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::invalid(
                "strategy weights must be non-negative with positive sum",
            ));
        }
        let d = detectors.unwrap_or(self.strategies[0].outcomes.len());
        if self
            .strategies
            .iter()
            .any(|s| s.outcomes.len() != d || s.outcomes.iter().flatten().any(|o| o.abs() != 1))
        {
            return Err(Error::invalid(format!(
                "every strategy needs ±1 outcomes for {d} detectors"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Singlet for CHSH, GHZ state for the three-particle test.
    Quantum,
    DeterministicLhv(StrategyTable),
    /// With probability f the hidden variable is generated knowing every
    /// setting of the run and reaches the algebraic optimum; otherwise the
    /// best deterministic strategy is played.
    Conspiracy {
        f: f64,
    },
}

pub fn conspiracy_model(f: f64) -> Result<Model> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::invalid(format!(
            "conspiracy fraction must be in [0, 1], got {f}"
        )));
    }
    Ok(Model::Conspiracy { f })
}

/// Expected CHSH value of [`conspiracy_model`]: 2 + 2f.
pub fn conspiracy_expected_chsh(f: f64) -> f64 {
    2.0 + 2.0 * f
}

/// Setting information carried by the conspiracy hidden state: f bits per
/// detector, since it reveals all uniform settings with probability f.
pub fn conspiracy_information_bits(f: f64, kind: TestKind) -> f64 {
    f * kind.detectors() as f64
}

/// Analyzer angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshAngles {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshAngles {
    pub fn canonical() -> Self {
        Self::from_degrees([0.0, 45.0, 22.5, 67.5])
    }

    /// Order (a, a′, b, b′).
    pub fn from_degrees(deg: [f64; 4]) -> Self {
        Self {
            a: deg[0].to_radians(),
            a_prime: deg[1].to_radians(),
            b: deg[2].to_radians(),
            b_prime: deg[3].to_radians(),
        }
    }

    fn alice(&self, s: u8) -> f64 {
        if s == 0 {
            self.a
        } else {
            self.a_prime
        }
    }

    fn bob(&self, s: u8) -> f64 {
        if s == 0 {
            self.b
        } else {
            self.b_prime
        }
    }
}

/// Polarization-singlet correlator.
pub fn singlet_correlator(theta_a: f64, theta_b: f64) -> f64 {
    -(2.0 * (theta_a - theta_b)).cos()
}

/// Exact singlet CHSH value for the given angles.
pub fn singlet_chsh(angles: &ChshAngles) -> f64 {
    let e = |x: u8, y: u8| singlet_correlator(angles.alice(x), angles.bob(y));
    -(e(0, 0) - e(0, 1) + e(1, 0) + e(1, 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellStatistics {
    /// E(a,b), E(a,b′), E(a′,b), E(a′,b′)
    pub correlators: [f64; 4],
    pub counts: [u64; 4],
    pub s: f64,
    pub standard_error: f64,
    pub n_trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MerminStatistics {
    /// ⟨XXX⟩, ⟨XYY⟩, ⟨YXY⟩, ⟨YYX⟩
    pub correlators: [f64; 4],
    pub counts: [u64; 4],
    pub m: f64,
    pub standard_error: f64,
    pub n_trials: u64,
    /// trials whose settings enter M
    pub n_used: u64,
}

fn correlator_and_variance(sum: i64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, f64::INFINITY);
    }
    let e = sum as f64 / n as f64;
    (e, (1.0 - e * e).max(0.0) / n as f64)
}

pub fn chsh_statistics(records: &[TrialRecord]) -> BellStatistics {
    let mut counts = [0u64; 4];
    let mut sums = [0i64; 4];
    for r in records {
        let k = r.settings_index() as usize;
        counts[k] += 1;
        sums[k] += (r.outcomes[0] * r.outcomes[1]) as i64;
    }
    let mut correlators = [0.0; 4];
    let mut var = 0.0;
    for k in 0..4 {
        let (e, v) = correlator_and_variance(sums[k], counts[k]);
        correlators[k] = e;
        var += v;
    }
    BellStatistics {
        s: -(correlators[0] - correlators[1] + correlators[2] + correlators[3]),
        standard_error: var.sqrt(),
        correlators,
        counts,
        n_trials: records.len() as u64,
    }
}

// Settings indices (first detector most significant) of XXX, XYY, YXY, YYX.
const MERMIN_SETTINGS: [u8; 4] = [0b000, 0b011, 0b101, 0b110];
const MERMIN_SIGNS: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

pub fn mermin_statistics(records: &[TrialRecord]) -> MerminStatistics {
    let mut counts = [0u64; 4];
    let mut sums = [0i64; 4];
    for r in records {
        let idx = r.settings_index();
        if let Some(k) = MERMIN_SETTINGS.iter().position(|&s| s == idx) {
            counts[k] += 1;
            sums[k] += r.outcomes.iter().map(|&o| o as i64).product::<i64>();
        }
    }
    let mut correlators = [0.0; 4];
    let mut m = 0.0;
    let mut var = 0.0;
    for k in 0..4 {
        let (e, v) = correlator_and_variance(sums[k], counts[k]);
        correlators[k] = e;
        m += MERMIN_SIGNS[k] * e;
        var += v;
    }
    MerminStatistics {
        correlators,
        counts,
        m,
        standard_error: var.sqrt(),
        n_trials: records.len() as u64,
        n_used: counts.iter().sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshRun {
    pub statistics: BellStatistics,
    pub records: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhzRun {
    pub statistics: MerminStatistics,
    pub records: Vec<TrialRecord>,
}

fn sign(rng: &mut ChaCha8Rng) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// Target outcome product for a conspiracy that knows the settings.
fn conspiracy_product(kind: TestKind, settings_index: u8) -> i8 {
    match kind {
        // E(a,b′) = +1, the rest −1, maximizes the oriented S.
        TestKind::Chsh => {
            if settings_index == 0b01 {
                1
            } else {
                -1
            }
        }
        TestKind::Ghz => {
            if settings_index == 0b000 {
                1
            } else if MERMIN_SETTINGS.contains(&settings_index) {
                -1
            } else {
                1
            }
        }
    }
}

struct Simulator<'a> {
    kind: TestKind,
    model: &'a Model,
    source: &'a SettingSource,
    angles: ChshAngles,
    strategy_picker: Option<WeightedIndex<f64>>,
    seed: u64,
}

impl Simulator<'_> {
    fn trial(&self, index: usize, rng: &mut ChaCha8Rng) -> TrialRecord {
        let n = self.kind.detectors();
        let (settings, tags): (Vec<u8>, Vec<SettingSourceTag>) = match self.source {
            SettingSource::FairCoins => (0..n)
                .map(|_| {
                    (
                        rng.random::<bool>() as u8,
                        SettingSourceTag::FallbackGenerator,
                    )
                })
                .unzip(),
            SettingSource::Explicit(rows) => rows[index].iter().map(|s| (s.bit, s.tag)).unzip(),
        };
        let settings_index = settings.iter().fold(0u8, |acc, &s| (acc << 1) | s);
        let (outcomes, hidden_state) = match self.model {
            Model::Quantum => (
                self.quantum_outcomes(&settings, settings_index, rng),
                HiddenState::None,
            ),
            Model::DeterministicLhv(table) => {
                let picker = self.strategy_picker.as_ref().expect("picker built for LHV");
                let k = picker.sample(rng);
                let strategy = &table.strategies[k];
                let outcomes = settings
                    .iter()
                    .enumerate()
                    .map(|(d, &s)| strategy.outcomes[d][s as usize])
                    .collect();
                (outcomes, HiddenState::Strategy(k as u32))
            }
            Model::Conspiracy { f } => {
                if rng.random::<f64>() < *f {
                    let mut outcomes = vec![1i8; n];
                    outcomes[n - 1] = conspiracy_product(self.kind, settings_index);
                    (
                        outcomes,
                        HiddenState::Conspiracy {
                            settings: settings_index,
                        },
                    )
                } else {
                    let best = match self.kind {
                        TestKind::Chsh => StrategyTable::best_chsh(),
                        TestKind::Ghz => StrategyTable::best_mermin(),
                    };
                    let outcomes = settings
                        .iter()
                        .enumerate()
                        .map(|(d, &s)| best.strategies[0].outcomes[d][s as usize])
                        .collect();
                    (outcomes, HiddenState::Strategy(0))
                }
            }
        };
        TrialRecord {
            settings,
            outcomes,
            tags,
            hidden_state,
        }
    }

    fn quantum_outcomes(
        &self,
        settings: &[u8],
        settings_index: u8,
        rng: &mut ChaCha8Rng,
    ) -> Vec<i8> {
        match self.kind {
            TestKind::Chsh => {
                let e = singlet_correlator(
                    self.angles.alice(settings[0]),
                    self.angles.bob(settings[1]),
                );
                let a = sign(rng);
                let same = rng.random::<f64>() < 0.5 * (1.0 + e);
                vec![a, if same { a } else { -a }]
            }
            TestKind::Ghz => {
                let o1 = sign(rng);
                let o2 = sign(rng);
                if let Some(k) = MERMIN_SETTINGS.iter().position(|&s| s == settings_index) {
                    let product = MERMIN_SIGNS[k] as i8;
                    vec![o1, o2, product * o1 * o2]
                } else {
                    vec![o1, o2, sign(rng)]
                }
            }
        }
    }

    fn run(&self, n_trials: usize) -> Vec<TrialRecord> {
        let chunks = n_trials.div_ceil(CHUNK);
        let parts: Vec<Vec<TrialRecord>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(c as u64);
                let start = c * CHUNK;
                let end = (start + CHUNK).min(n_trials);
                (start..end).map(|i| self.trial(i, &mut rng)).collect()
            })
            .collect();
        parts.into_iter().flatten().collect()
    }
}

fn build_simulator<'a>(
    kind: TestKind,
    model: &'a Model,
    source: &'a SettingSource,
    angles: ChshAngles,
    n_trials: usize,
    seed: u64,
) -> Result<Simulator<'a>> {
    if n_trials == 0 {
        return Err(Error::invalid("n_trials must be >= 1"));
    }
    source.check(n_trials, kind.detectors())?;
    let strategy_picker = match model {
        Model::Quantum => None,
        Model::Conspiracy { f } => {
            conspiracy_model(*f)?;
            None
        }
        Model::DeterministicLhv(table) => {
            table.validate(Some(kind.detectors()))?;
            Some(
                WeightedIndex::new(table.weights.iter().copied())
                    .map_err(|e| Error::invalid(e.to_string()))?,
            )
        }
    };
    Ok(Simulator {
        kind,
        model,
        source,
        angles,
        strategy_picker,
        seed,
    })
}

/// Two-setting, two-outcome CHSH experiment.
pub fn run_chsh(
    model: &Model,
    setting_source: &SettingSource,
    angles: ChshAngles,
    n_trials: usize,
    seed: u64,
) -> Result<ChshRun> {
    if [angles.a, angles.a_prime, angles.b, angles.b_prime]
        .iter()
        .any(|x| !x.is_finite())
    {
        return Err(Error::invalid("analyzer angles must be finite"));
    }
    let sim = build_simulator(
        TestKind::Chsh,
        model,
        setting_source,
        angles,
        n_trials,
        seed,
    )?;
    let records = sim.run(n_trials);
    Ok(ChshRun {
        statistics: chsh_statistics(&records),
        records,
    })
}

/// Three-particle GHZ experiment measuring X or Y on each particle.
pub fn run_ghz(
    model: &Model,
    setting_source: &SettingSource,
    n_trials: usize,
    seed: u64,
) -> Result<GhzRun> {
    let sim = build_simulator(
        TestKind::Ghz,
        model,
        setting_source,
        ChshAngles::canonical(),
        n_trials,
        seed,
    )?;
    let records = sim.run(n_trials);
    Ok(GhzRun {
        statistics: mermin_statistics(&records),
        records,
    })
}

/// Per-detector outcome marginals split by the other detectors' settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoSignalingReport {
    /// Largest |z| over detectors and own settings of the difference in
    /// P(outcome = +1) between the other detector's two settings.
    pub max_abs_z: f64,
    pub pass: bool,
}

/// Two-detector no-signaling check at 3σ.
pub fn no_signaling_check(records: &[TrialRecord]) -> NoSignalingReport {
    let mut plus = [[[0u64; 2]; 2]; 2];
    let mut total = [[[0u64; 2]; 2]; 2];
    for r in records {
        for d in 0..2 {
            let own = r.settings[d] as usize;
            let other = r.settings[1 - d] as usize;
            total[d][own][other] += 1;
            if r.outcomes[d] == 1 {
                plus[d][own][other] += 1;
            }
        }
    }
    let mut max_abs_z: f64 = 0.0;
    for d in 0..2 {
        for own in 0..2 {
            let n0 = total[d][own][0] as f64;
            let n1 = total[d][own][1] as f64;
            if n0 == 0.0 || n1 == 0.0 {
                continue;
            }
            let p0 = plus[d][own][0] as f64 / n0;
            let p1 = plus[d][own][1] as f64 / n1;
            let pooled = (plus[d][own][0] + plus[d][own][1]) as f64 / (n0 + n1);
            let se = (pooled * (1.0 - pooled) * (1.0 / n0 + 1.0 / n1)).sqrt();
            if se > 0.0 {
                max_abs_z = max_abs_z.max(((p0 - p1) / se).abs());
            } else if p0 != p1 {
                max_abs_z = f64::INFINITY;
            }
        }
    }
    NoSignalingReport {
        max_abs_z,
        pass: max_abs_z < 3.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInfoBudget {
    pub measured_bits: f64,
    pub threshold_bits: f64,
    /// Miller–Madow first-order bias of the plug-in estimate.
    pub bias_bound_bits: f64,
    pub exceeds_threshold: bool,
    /// measured − threshold
    pub gap_bits: f64,
    pub n_samples: usize,
}

/// Plug-in estimate of I(settings; hidden state) in bits from empirical
/// joint frequencies, compared against the budget for `kind`.
pub fn mutual_information_audit(
    records: &[TrialRecord],
    kind: TestKind,
) -> Result<MutualInfoBudget> {
    let n = records.len();
    if n < MIN_AUDIT_SAMPLES {
        return Err(Error::invalid(format!(
            "mutual information audit needs >= {MIN_AUDIT_SAMPLES} records, got {n}"
        )));
    }
    let mut joint: HashMap<(u8, HiddenState), u64> = HashMap::new();
    let mut by_setting: HashMap<u8, u64> = HashMap::new();
    let mut by_hidden: HashMap<HiddenState, u64> = HashMap::new();
    for r in records {
        let s = r.settings_index();
        *joint.entry((s, r.hidden_state)).or_default() += 1;
        *by_setting.entry(s).or_default() += 1;
        *by_hidden.entry(r.hidden_state).or_default() += 1;
    }
    let nf = n as f64;
    let mut info = 0.0;
    for (&(s, h), &c) in &joint {
        let pj = c as f64 / nf;
        let ps = by_setting[&s] as f64 / nf;
        let ph = by_hidden[&h] as f64 / nf;
        info += pj * (pj / (ps * ph)).log2();
    }
    let info = info.max(0.0);
    let cells = (by_setting.len().saturating_sub(1) * by_hidden.len().saturating_sub(1)) as f64;
    let threshold_bits = kind.information_threshold_bits();
    Ok(MutualInfoBudget {
        measured_bits: info,
        threshold_bits,
        bias_bound_bits: cells / (2.0 * nf * std::f64::consts::LN_2),
        exceeds_threshold: info > threshold_bits,
        gap_bits: info - threshold_bits,
        n_samples: n,
    })
}

/// Returns the records with their settings permuted among trials, breaking
/// any settings–hidden-state correlation.
pub fn shuffle_settings(records: &[TrialRecord], seed: u64) -> Vec<TrialRecord> {
    let mut settings: Vec<Vec<u8>> = records.iter().map(|r| r.settings.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    settings.shuffle(&mut rng);
    records
        .iter()
        .zip(settings)
        .map(|(r, s)| TrialRecord {
            settings: s,
            ..r.clone()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunClass {
    AllCosmic,
    Mixed,
    AllFallback,
}

impl RunClass {
    pub fn of(record: &TrialRecord) -> Self {
        let cosmic = record
            .tags
            .iter()
            .filter(|&&t| t == SettingSourceTag::Cosmic)
            .count();
        if cosmic == record.tags.len() {
            RunClass::AllCosmic
        } else if cosmic == 0 {
            RunClass::AllFallback
        } else {
            RunClass::Mixed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentStatistics {
    Chsh(BellStatistics),
    Ghz(MerminStatistics),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunClassSummary {
    pub class: RunClass,
    pub count: usize,
    pub fraction: f64,
    pub statistics: ExperimentStatistics,
}

/// Splits runs into all-cosmic, mixed and all-fallback classes (runs where
/// no setting came from a cosmic photon) with statistics for each non-empty
/// class.
pub fn classify_runs(records: &[TrialRecord]) -> Vec<RunClassSummary> {
    let total = records.len();
    [RunClass::AllCosmic, RunClass::Mixed, RunClass::AllFallback]
        .into_iter()
        .filter_map(|class| {
            let members: Vec<TrialRecord> = records
                .iter()
                .filter(|r| RunClass::of(r) == class)
                .cloned()
                .collect();
            if members.is_empty() {
                return None;
            }
            let statistics = if members[0].settings.len() == 3 {
                ExperimentStatistics::Ghz(mermin_statistics(&members))
            } else {
                ExperimentStatistics::Chsh(chsh_statistics(&members))
            };
            Some(RunClassSummary {
                class,
                count: members.len(),
                fraction: members.len() as f64 / total as f64,
                statistics,
            })
        })
        .collect()
}

/// Writes one trial per line: settings, outcomes, tags, hidden state.
pub fn write_records<W: Write>(records: &[TrialRecord], mut w: W) -> Result<()> {
    let n = records.first().map_or(0, |r| r.settings.len());
    let mut header: Vec<String> = Vec::new();
    header.extend((1..=n).map(|i| format!("setting_{i}")));
    header.extend((1..=n).map(|i| format!("outcome_{i}")));
    header.extend((1..=n).map(|i| format!("tag_{i}")));
    header.push("hidden_state".into());
    writeln!(w, "{}", header.join(","))?;
    for r in records {
        let mut fields: Vec<String> = Vec::with_capacity(3 * n + 1);
        fields.extend(r.settings.iter().map(|s| s.to_string()));
        fields.extend(r.outcomes.iter().map(|o| format!("{o:+}")));
        fields.extend(r.tags.iter().map(|t| t.as_str().to_string()));
        fields.push(r.hidden_state.encode());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<TrialRecord>> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Ok(Vec::new()),
    };
    let columns = header.split(',').count();
    if columns < 4 || (columns - 1) % 3 != 0 {
        return Err(Error::invalid("malformed trial record header"));
    }
    let n = (columns - 1) / 3;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::invalid(format!("line {}: {what}", i + 2));
        if f.len() != columns {
            return Err(bad("wrong field count"));
        }
        let settings = f[..n]
            .iter()
            .map(|s| match *s {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(bad("setting must be 0 or 1")),
            })
            .collect::<Result<Vec<u8>>>()?;
        let outcomes = f[n..2 * n]
            .iter()
            .map(|s| match *s {
                "+1" | "1" => Ok(1),
                "-1" => Ok(-1),
                _ => Err(bad("outcome must be ±1")),
            })
            .collect::<Result<Vec<i8>>>()?;
        let tags = f[2 * n..3 * n]
            .iter()
            .map(|s| SettingSourceTag::parse(s))
            .collect::<Result<Vec<_>>>()?;
        out.push(TrialRecord {
            settings,
            outcomes,
            tags,
            hidden_state: HiddenState::decode(f[3 * n])?,
        });
    }
    Ok(out)
}
