//! Simulated Poisson photon streams and setting-bit extraction.
//!
//! Two extractors are provided: the parity of the microsecond bin an arrival
//! falls in, and whitening of the exponential inter-arrival gaps through
//! their CDF, u = 1 − e^{−rτ}, which is uniform under the Poisson model.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BIN_WIDTH_S: f64 = 1e-6;
/// Bits of u beyond this are not resolved by an f64 mantissa after the CDF.
pub const MAX_WHITENED_BITS: u32 = 40;
pub const MIN_REPORT_BITS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalStream {
    /// seconds, strictly increasing
    pub arrival_times: Vec<f64>,
    /// photons/s
    pub nominal_rate: f64,
}

impl ArrivalStream {
    pub fn new(arrival_times: Vec<f64>, nominal_rate: f64) -> Result<Self> {
        if !(nominal_rate.is_finite() && nominal_rate > 0.0) {
            return Err(Error::invalid("stream rate must be positive"));
        }
        if arrival_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("arrival times must be finite and >= 0"));
        }
        if arrival_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("arrival times must be strictly increasing"));
        }
        Ok(Self {
            arrival_times,
            nominal_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.arrival_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrival_times.is_empty()
    }

    /// Gaps per second over the observed span, (n − 1)/(t_last − t_first).
    pub fn empirical_rate(&self) -> Option<f64> {
        let n = self.arrival_times.len();
        if n < 2 {
            return None;
        }
        let span = self.arrival_times[n - 1] - self.arrival_times[0];
        (span > 0.0).then(|| (n - 1) as f64 / span)
    }

    /// One timestamp per line, written so that it reads back bit-exact.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.arrival_times {
            writeln!(w, "{t:e}")?;
        }
        Ok(())
    }

    /// Reads one timestamp per line; blank lines and `#` comments are skipped.
    pub fn read_text<R: BufRead>(r: R, nominal_rate: Option<f64>) -> Result<Self> {
        let mut times = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let t: f64 = line
                .parse()
                .map_err(|_| Error::invalid(format!("line {}: bad timestamp '{line}'", n + 1)))?;
            times.push(t);
        }
        let rate = match nominal_rate {
            Some(r) => r,
            None => {
                let probe = ArrivalStream {
                    arrival_times: times.clone(),
                    nominal_rate: 1.0,
                };
                probe
                    .empirical_rate()
                    .ok_or_else(|| Error::invalid("need two or more arrivals to infer a rate"))?
            }
        };
        Self::new(times, rate)
    }
}

/// Homogeneous Poisson arrivals on [0, duration) built from exponential gaps.
pub fn simulate_arrivals(rate: f64, duration_s: f64, seed: u64) -> Result<ArrivalStream> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::invalid("rate must be positive"));
    }
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(Error::invalid("duration must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps = Exp::new(rate).map_err(|e| Error::invalid(e.to_string()))?;
    let mut times = Vec::with_capacity((rate * duration_s * 1.01) as usize + 16);
    let mut t = 0.0;
    loop {
        let next = t + gaps.sample(&mut rng);
        if next >= duration_s {
            break;
        }
        // A zero-length gap at f64 resolution is dropped to keep times strictly increasing.
        if next > t || times.is_empty() {
            times.push(next);
        }
        t = next;
    }
    Ok(ArrivalStream {
        arrival_times: times,
        nominal_rate: rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitProvenance {
    Parity,
    Whitened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingBitstream {
    pub bits: Vec<u8>,
    pub provenance: Vec<BitProvenance>,
    pub source_rate: f64,
}

impl SettingBitstream {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// One bit per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for b in &self.bits {
            writeln!(w, "{b}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(
        r: R,
        provenance: BitProvenance,
        source_rate: f64,
    ) -> Result<Self> {
        let mut bits = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            match line.trim() {
                "" => continue,
                "0" => bits.push(0),
                "1" => bits.push(1),
                other => {
                    return Err(Error::invalid(format!(
                        "line {}: '{other}' is not a bit",
                        n + 1
                    )))
                }
            }
        }
        Ok(Self {
            provenance: vec![provenance; bits.len()],
            bits,
            source_rate,
        })
    }
}

/// Parity of the bin index of a single timestamp.
pub fn parity_bit(t: f64, bin_width_s: f64) -> u8 {
    ((t / bin_width_s).floor() as i64).rem_euclid(2) as u8
}

/// One bit per arrival: ⌊t / bin_width⌋ mod 2.
pub fn parity_bits(stream: &ArrivalStream, bin_width_s: f64) -> Result<SettingBitstream> {
    if !(bin_width_s.is_finite() && bin_width_s > 0.0) {
        return Err(Error::invalid("bin width must be positive"));
    }
    let bits: Vec<u8> = stream
        .arrival_times
        .iter()
        .map(|&t| parity_bit(t, bin_width_s))
        .collect();
    Ok(SettingBitstream {
        provenance: vec![BitProvenance::Parity; bits.len()],
        bits,
        source_rate: stream.nominal_rate,
    })
}

/// Leading `k` bits of the binary expansion of u ∈ [0, 1).
pub fn leading_bits(u: f64, k: u32) -> impl Iterator<Item = u8> {
    let mut frac = u;
    (0..k).map(move |_| {
        frac *= 2.0;
        if frac >= 1.0 {
            frac -= 1.0;
            1
        } else {
            0
        }
    })
}

/// k bits per inter-arrival gap from u = 1 − e^{−rate·τ}. The rate defaults
/// to the stream's empirical rate.
pub fn whitened_bits(
    stream: &ArrivalStream,
    k: u32,
    rate: Option<f64>,
) -> Result<SettingBitstream> {
    if k == 0 || k > MAX_WHITENED_BITS {
        return Err(Error::invalid(format!(
            "bits per arrival must be in 1..={MAX_WHITENED_BITS}, got {k}"
        )));
    }
    if stream.len() < 2 {
        return Err(Error::invalid("whitening needs at least two arrivals"));
    }
    let rate = match rate {
        Some(r) if r.is_finite() && r > 0.0 => r,
        Some(r) => {
            return Err(Error::invalid(format!(
                "whitening rate must be positive, got {r}"
            )))
        }
        None => stream
            .empirical_rate()
            .ok_or_else(|| Error::invalid("cannot estimate rate from stream"))?,
    };
    let mut bits = Vec::with_capacity((stream.len() - 1) * k as usize);
    for w in stream.arrival_times.windows(2) {
        let tau = w[1] - w[0];
        let u = -(-rate * tau).exp_m1();
        bits.extend(leading_bits(u.min(1.0 - f64::EPSILON), k));
    }
    Ok(SettingBitstream {
        provenance: vec![BitProvenance::Whitened; bits.len()],
        bits,
        source_rate: rate,
    })
}

/// Setting bit per window [k·w, (k+1)·w): parity of the first arrival in the
/// window, or `None` when no photon arrived. Later arrivals in a window are
/// discarded.
pub fn first_arrival_bits(
    stream: &ArrivalStream,
    window_s: f64,
    n_windows: usize,
    bin_width_s: f64,
) -> Result<Vec<Option<u8>>> {
    if !(window_s > 0.0 && bin_width_s > 0.0) {
        return Err(Error::invalid("window and bin width must be positive"));
    }
    let mut out = vec![None; n_windows];
    for &t in &stream.arrival_times {
        let w = (t / window_s).floor() as usize;
        if w >= n_windows {
            break;
        }
        if out[w].is_none() {
            out[w] = Some(parity_bit(t, bin_width_s));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Frequency, serial-correlation, runs and min-entropy checks, each judged
/// at 3σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomnessReport {
    pub n_bits: usize,
    pub ones_fraction: f64,
    /// z-score of the count of ones
    pub monobit: TestOutcome,
    /// lag-1 autocorrelation
    pub serial_correlation: TestOutcome,
    /// Wald–Wolfowitz z-score
    pub runs: TestOutcome,
    /// bits per bit; threshold is the smallest value consistent with a fair coin
    pub min_entropy: TestOutcome,
    pub all_pass: bool,
}

pub fn randomness_report(bits: &[u8]) -> Result<RandomnessReport> {
    let n = bits.len();
    if n < MIN_REPORT_BITS {
        return Err(Error::invalid(format!(
            "need at least {MIN_REPORT_BITS} bits, got {n}"
        )));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::invalid("bits must be 0 or 1"));
    }
    let nf = n as f64;
    let ones = bits.iter().filter(|&&b| b == 1).count() as f64;
    let zeros = nf - ones;
    let p1 = ones / nf;

    let z_mono = (2.0 * ones - nf) / nf.sqrt();
    let monobit = TestOutcome {
        statistic: z_mono,
        threshold: 3.0,
        pass: z_mono.abs() < 3.0,
    };

    let mean = p1;
    let var: f64 = bits.iter().map(|&b| (b as f64 - mean).powi(2)).sum();
    let cov: f64 = bits
        .windows(2)
        .map(|w| (w[0] as f64 - mean) * (w[1] as f64 - mean))
        .sum();
    let rho = if var > 0.0 { cov / var } else { f64::NAN };
    let serial_threshold = 3.0 / nf.sqrt();
    let serial_correlation = TestOutcome {
        statistic: rho,
        threshold: serial_threshold,
        pass: rho.abs() < serial_threshold,
    };

    let runs_count = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let runs_z = if ones > 0.0 && zeros > 0.0 {
        let mu = 2.0 * ones * zeros / nf + 1.0;
        let var = (mu - 1.0) * (mu - 2.0) / (nf - 1.0);
        (runs_count as f64 - mu) / var.sqrt()
    } else {
        f64::NAN
    };
    let runs = TestOutcome {
        statistic: runs_z,
        threshold: 3.0,
        pass: runs_z.abs() < 3.0,
    };

    let p_max = p1.max(1.0 - p1);
    let h_min = -p_max.log2();
    let h_threshold = -(0.5 + 1.5 / nf.sqrt()).log2();
    let min_entropy = TestOutcome {
        statistic: h_min,
        threshold: h_threshold,
        pass: h_min > h_threshold,
    };

    let all_pass = monobit.pass && serial_correlation.pass && runs.pass && min_entropy.pass;
    Ok(RandomnessReport {
        n_bits: n,
        ones_fraction: p1,
        monobit,
        serial_correlation,
        runs,
        min_entropy,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_examples() {
        assert_eq!(parity_bit(7.000_001_5, 1e-6), 1);
        assert_eq!(parity_bit(3.000_000_5, 1e-6), 0);
        let s = ArrivalStream::new(vec![1e-7], 1.0).unwrap();
        assert!(parity_bits(&s, 0.0).is_err());
    }

    #[test]
    fn whitening_examples() {
        let s = ArrivalStream::new(vec![0.0, std::f64::consts::LN_2], 1.0).unwrap();
        let b = whitened_bits(&s, 4, Some(1.0)).unwrap();
        assert_eq!(b.bits, vec![1, 0, 0, 0]);
        let tiny = ArrivalStream::new(vec![0.0, 1e-12], 1.0).unwrap();
        assert_eq!(whitened_bits(&tiny, 8, Some(1.0)).unwrap().bits, vec![0; 8]);
        assert!(whitened_bits(&s, 41, Some(1.0)).is_err());
        assert!(whitened_bits(&s, 0, Some(1.0)).is_err());
        let one = ArrivalStream::new(vec![0.5], 1.0).unwrap();
        assert!(whitened_bits(&one, 4, Some(1.0)).is_err());
    }

    #[test]
    fn empty_when_no_duration() {
        assert!(simulate_arrivals(1e4, 0.0, 1).unwrap().is_empty());
        assert!(simulate_arrivals(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn simulation_is_seeded() {
        let a = simulate_arrivals(1e3, 2.0, 7).unwrap();
        let b = simulate_arrivals(1e3, 2.0, 7).unwrap();
        let c = simulate_arrivals(1e3, 2.0, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(ArrivalStream::new(a.arrival_times.clone(), a.nominal_rate).is_ok());
    }

    #[test]
    fn stream_validation() {
        assert!(ArrivalStream::new(vec![1.0, 1.0], 1.0).is_err());
        assert!(ArrivalStream::new(vec![-1.0], 1.0).is_err());
        assert!(ArrivalStream::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn first_arrival_latching() {
        let s = ArrivalStream::new(vec![0.5e-6, 1.5e-6, 10.5e-6, 31.5e-6], 1.0).unwrap();
        let bits = first_arrival_bits(&s, 10e-6, 3, 1e-6).unwrap();
        assert_eq!(bits, vec![Some(0), Some(0), None]);
    }

    #[test]
    fn report_negative_cases() {
        let zeros = vec![0u8; 1000];
        let r = randomness_report(&zeros).unwrap();
        assert!(!r.monobit.pass && !r.min_entropy.pass && !r.all_pass);

        let alternating: Vec<u8> = (0..1000).map(|i| (i % 2) as u8).collect();
        let r = randomness_report(&alternating).unwrap();
        assert!(r.monobit.pass);
        assert!(!r.serial_correlation.pass);
        assert!(!r.runs.pass);

        assert!(randomness_report(&[0, 1, 1]).is_err());
        assert!(randomness_report(&[2u8; 200]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let s = simulate_arrivals(100.0, 1.0, 3).unwrap();
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        let back = ArrivalStream::read_text(buf.as_slice(), Some(100.0)).unwrap();
        assert_eq!(back.len(), s.len());
        for (a, b) in back.arrival_times.iter().zip(&s.arrival_times) {
            assert!((a - b).abs() < 1e-11);
        }
        let bits = parity_bits(&s, 1e-6).unwrap();
        let mut buf = Vec::new();
        bits.write_text(&mut buf).unwrap();
        let back =
            SettingBitstream::read_text(buf.as_slice(), BitProvenance::Parity, 100.0).unwrap();
        assert_eq!(back.bits, bits.bits);
    }
}
