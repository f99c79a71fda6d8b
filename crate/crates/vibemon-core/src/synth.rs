//! Seeded synthetic run-to-failure vibration generator.
//!
//! Healthy snapshots are a fixed set of tones plus white noise. From the
//! fault onset a resonance tone and a periodic impulse train appear, both
//! growing linearly with snapshot index, so ground truth (onset index and a
//! per-snapshot severity) is known exactly. Each (snapshot, channel) pair
//! draws from its own RNG stream derived from the profile seed, making
//! output byte-identical across runs and independent of generation order.

use crate::error::{Error, Result};
use crate::ingest::VibrationRecord;
use chrono::NaiveDateTime;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Stationary part of the signal: (frequency Hz, amplitude) tones plus
/// Gaussian noise of the given sigma.
#[derive(Debug, Clone, PartialEq)]
pub struct HealthySpec {
    pub tones: Vec<(f64, f64)>,
    pub noise_sigma: f64,
}

/// Degradation signature added from the onset snapshot on. Severity at
/// post-onset snapshot i is (i - onset + 1) * amplitude_growth; the
/// resonance tone has that amplitude and each impulse peaks at
/// severity * impulsiveness.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSpec {
    pub resonance_hz: f64,
    pub amplitude_growth: f64,
    pub impulse_rate_hz: f64,
    pub impulsiveness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunProfile {
    pub n_snapshots: usize,
    pub samples_per_snapshot: usize,
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub healthy: HealthySpec,
    /// 1-based snapshot index where the fault first appears.
    pub fault_onset_index: usize,
    pub fault: FaultSpec,
    pub seed: u64,
    pub start: NaiveDateTime,
    pub interval_secs: i64,
}

impl Default for RunProfile {
    fn default() -> Self {
        RunProfile {
            n_snapshots: 600,
            samples_per_snapshot: 20480,
            channels: 1,
            sample_rate_hz: 20000.0,
            healthy: HealthySpec {
                tones: vec![(1200.0, 0.9), (3100.0, 0.6)],
                noise_sigma: 0.35,
            },
            fault_onset_index: 400,
            fault: FaultSpec {
                resonance_hz: 4600.0,
                amplitude_growth: 0.12,
                impulse_rate_hz: 120.0,
                impulsiveness: 1.2,
            },
            seed: 42,
            start: NaiveDateTime::parse_from_str(
                "2003.10.22.12.06.24",
                crate::ingest::STAMP_FORMAT,
            )
            .unwrap(),
            interval_secs: 600,
        }
    }
}

/// Exponential decay constant of the impulse ring-down, in samples.
const IMPULSE_DECAY: f64 = 40.0;
/// RNG streams pack the channel into the low byte of the stream id.
const MAX_CHANNELS: usize = 255;

impl RunProfile {
    pub fn validate(&self) -> Result<()> {
        if self.n_snapshots == 0 || self.samples_per_snapshot == 0 {
            return Err(Error::dim("profile needs at least one snapshot and one sample"));
        }
        if self.channels == 0 || self.channels > MAX_CHANNELS {
            return Err(Error::dim(format!(
                "channels must be in 1..={MAX_CHANNELS}, got {}",
                self.channels
            )));
        }
        if !self.sample_rate_hz.is_finite() || self.sample_rate_hz <= 0.0 {
            return Err(Error::numerical("sample rate must be positive"));
        }
        if self.fault_onset_index < 1 || self.fault_onset_index > self.n_snapshots {
            return Err(Error::dim(format!(
                "fault onset {} outside 1..={}",
                self.fault_onset_index, self.n_snapshots
            )));
        }
        let finite = self
            .healthy
            .tones
            .iter()
            .all(|&(f, a)| f.is_finite() && a.is_finite())
            && self.healthy.noise_sigma.is_finite()
            && self.fault.resonance_hz.is_finite()
            && self.fault.amplitude_growth.is_finite()
            && self.fault.impulse_rate_hz.is_finite()
            && self.fault.impulsiveness.is_finite();
        if !finite
            || self.healthy.noise_sigma < 0.0
            || self.fault.amplitude_growth < 0.0
            || self.fault.impulse_rate_hz < 0.0
            || self.fault.impulsiveness < 0.0
        {
            return Err(Error::numerical("signal amplitudes must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Fault amplitude at 1-based snapshot index; zero before onset.
    pub fn severity(&self, snapshot_index: usize) -> f64 {
        if snapshot_index >= self.fault_onset_index {
            (snapshot_index - self.fault_onset_index + 1) as f64 * self.fault.amplitude_growth
        } else {
            0.0
        }
    }

    pub fn timestamp(&self, snapshot_index: usize) -> NaiveDateTime {
        self.start + chrono::Duration::seconds(self.interval_secs * (snapshot_index as i64 - 1))
    }

    fn filename(&self, snapshot_index: usize) -> String {
        self.timestamp(snapshot_index)
            .format(crate::ingest::STAMP_FORMAT)
            .to_string()
    }
}

/// One standard normal draw (Box-Muller, cosine branch).
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let mut u1: f64 = rng.gen();
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.gen();
    }
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Samples for one snapshot (rows) across all channels (columns).
/// Every (snapshot, channel) pair owns RNG stream (index << 8) | channel, so
/// snapshots can be generated in any order or in parallel. The resonance
/// phase is drawn even before onset to keep post-onset streams aligned with
/// healthy ones.
pub fn generate_snapshot(profile: &RunProfile, snapshot_index: usize) -> Array2<f64> {
    let n = profile.samples_per_snapshot;
    let fs = profile.sample_rate_hz;
    let severity = profile.severity(snapshot_index);
    let mut samples = Array2::zeros((n, profile.channels));
    for c in 0..profile.channels {
        let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
        rng.set_stream(((snapshot_index as u64) << 8) | (c as u64 + 1));
        let phases: Vec<f64> = profile
            .healthy
            .tones
            .iter()
            .map(|_| rng.gen::<f64>() * TAU)
            .collect();
        let resonance_phase = rng.gen::<f64>() * TAU;
        let mut column = samples.column_mut(c);
        for i in 0..n {
            let t = i as f64 / fs;
            let mut x = 0.0;
            for (&(freq, amp), &phase) in profile.healthy.tones.iter().zip(&phases) {
                x += amp * (TAU * freq * t + phase).sin();
            }
            x += profile.healthy.noise_sigma * standard_normal(&mut rng);
            if severity > 0.0 {
                x += severity * (TAU * profile.fault.resonance_hz * t + resonance_phase).sin();
            }
            column[i] = x;
        }
        if severity > 0.0 && profile.fault.impulse_rate_hz > 0.0 {
            let period = fs / profile.fault.impulse_rate_hz;
            let peak = severity * profile.fault.impulsiveness;
            let ring_len = (IMPULSE_DECAY * 6.0) as usize;
            let mut k = 0usize;
            loop {
                let pos = (k as f64 * period).round() as usize;
                if pos >= n {
                    break;
                }
                for j in 0..ring_len.min(n - pos) {
                    let envelope = peak * (-(j as f64) / IMPULSE_DECAY).exp();
                    column[pos + j] +=
                        envelope * (TAU * profile.fault.resonance_hz * j as f64 / fs).sin();
                }
                k += 1;
            }
        }
    }
    samples
}

/// A generated run plus its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub records: Vec<VibrationRecord>,
    /// Fault severity per snapshot; 0.0 marks healthy ground truth.
    pub severities: Vec<f64>,
    pub timestamps: Vec<NaiveDateTime>,
}

pub fn generate_run(profile: &RunProfile) -> Result<SyntheticRun> {
    profile.validate()?;
    let channels: Vec<usize> = (1..=profile.channels).collect();
    let records: Vec<VibrationRecord> = (1..=profile.n_snapshots)
        .into_par_iter()
        .map(|i| VibrationRecord {
            samples: generate_snapshot(profile, i),
            sample_rate_hz: profile.sample_rate_hz,
            channels: channels.clone(),
        })
        .collect();
    Ok(SyntheticRun {
        records,
        severities: (1..=profile.n_snapshots).map(|i| profile.severity(i)).collect(),
        timestamps: (1..=profile.n_snapshots).map(|i| profile.timestamp(i)).collect(),
    })
}

/// Writes the run to `dir` in the snapshot text format: one file per
/// snapshot named by its timestamp, tab-separated columns, one row per
/// sample, shortest lossless number formatting. Returns the paths in
/// reading order.
pub fn write_run(profile: &RunProfile, dir: &Path) -> Result<Vec<PathBuf>> {
    profile.validate()?;
    std::fs::create_dir_all(dir)?;
    (1..=profile.n_snapshots)
        .into_par_iter()
        .map(|i| {
            let samples = generate_snapshot(profile, i);
            let path = dir.join(profile.filename(i));
            let file = std::fs::File::create(&path)?;
            let mut out = std::io::BufWriter::new(file);
            let mut line = String::new();
            for row in samples.rows() {
                line.clear();
                for (c, v) in row.iter().enumerate() {
                    if c > 0 {
                        line.push('\t');
                    }
                    line.push_str(&v.to_string());
                }
                line.push('\n');
                out.write_all(line.as_bytes())?;
            }
            out.flush()?;
            Ok(path)
        })
        .collect()
}
