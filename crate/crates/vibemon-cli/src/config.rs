//! Configuration for the pipeline and the synthetic generator. Both load
//! from TOML; every missing key falls back to the built-in default, so an
//! empty file is a complete configuration.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use vibemon_core::synth::{FaultSpec, HealthySpec, RunProfile};

/// Everything `train`, `monitor`, and `elbow` need. The defaults reproduce
/// the reference parameterization: 512-sample windows with hop 32, 10
/// components per channel, cluster counts 1..10 by the elbow rule, alarm
/// threshold -2.33 with 3 consecutive alarms counting as sustained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: Option<PathBuf>,
    pub bearing: Option<String>,
    /// bearing name -> 1-based file columns
    pub channel_map: BTreeMap<String, Vec<usize>>,
    pub sample_rate_hz: f64,
    pub window_len: usize,
    pub hop: usize,
    /// retained principal components per channel
    pub p: usize,
    pub center: bool,
    pub k_min: usize,
    pub k_max: usize,
    /// fixed state count; skips the elbow selection when set
    pub states: Option<usize>,
    pub seed: u64,
    pub restarts: usize,
    pub kmeans_max_iter: usize,
    pub hmm_tol: f64,
    pub hmm_max_iter: usize,
    pub threshold: f64,
    pub sustained: usize,
    /// training-range override; both ends or neither
    pub train_first: Option<usize>,
    pub train_last: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: None,
            bearing: None,
            channel_map: BTreeMap::from([
                ("bearing2".to_string(), vec![3, 4]),
                ("bearing3".to_string(), vec![5, 6]),
            ]),
            sample_rate_hz: 20000.0,
            window_len: 512,
            hop: 32,
            p: 10,
            center: true,
            k_min: 1,
            k_max: 10,
            states: None,
            seed: 42,
            restarts: 8,
            kmeans_max_iter: 300,
            hmm_tol: 1e-6,
            hmm_max_iter: 200,
            threshold: -2.33,
            sustained: 3,
            train_first: None,
            train_last: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: PipelineConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.window_len == 0 || self.hop == 0 || self.hop > self.window_len {
            bail!(
                "window/hop must satisfy 1 <= hop <= window_len, got window_len={} hop={}",
                self.window_len,
                self.hop
            );
        }
        if self.p == 0 || self.p > self.window_len {
            bail!("p must be in 1..=window_len, got {}", self.p);
        }
        if self.states.is_none() && self.k_min > self.k_max {
            bail!("k_min {} exceeds k_max {}", self.k_min, self.k_max);
        }
        if self.restarts == 0 || self.kmeans_max_iter == 0 || self.hmm_max_iter == 0 {
            bail!("restarts and iteration limits must be at least 1");
        }
        if !self.sample_rate_hz.is_finite() || self.sample_rate_hz <= 0.0 {
            bail!("sample_rate_hz must be positive");
        }
        if self.sustained == 0 {
            bail!("sustained must be at least 1");
        }
        match (self.train_first, self.train_last) {
            (Some(f), Some(l)) if f >= 1 && f <= l => {}
            (None, None) => {}
            _ => bail!("train_first/train_last must be set together with 1 <= first <= last"),
        }
        Ok(())
    }

    /// The bearing to process: the explicit setting, or the only map entry.
    pub fn resolve_bearing(&self) -> anyhow::Result<String> {
        if let Some(b) = &self.bearing {
            if !self.channel_map.contains_key(b) {
                bail!("bearing {b:?} is not in the channel map");
            }
            return Ok(b.clone());
        }
        if self.channel_map.len() == 1 {
            return Ok(self.channel_map.keys().next().unwrap().clone());
        }
        bail!(
            "config maps {} bearings; pick one with --bearing",
            self.channel_map.len()
        );
    }
}

/// Synthetic-run profile as configuration; mirrors `RunProfile` field by
/// field with the same defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_snapshots: usize,
    pub samples_per_snapshot: usize,
    pub channels: usize,
    pub sample_rate_hz: f64,
    /// (frequency Hz, amplitude) pairs
    pub tones: Vec<(f64, f64)>,
    pub noise_sigma: f64,
    pub fault_onset_index: usize,
    pub resonance_hz: f64,
    pub amplitude_growth: f64,
    pub impulse_rate_hz: f64,
    pub impulsiveness: f64,
    pub seed: u64,
    /// first snapshot timestamp, `YYYY.MM.DD.HH.MM.SS`
    pub start: String,
    pub interval_secs: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let p = RunProfile::default();
        SynthConfig {
            n_snapshots: p.n_snapshots,
            samples_per_snapshot: p.samples_per_snapshot,
            channels: p.channels,
            sample_rate_hz: p.sample_rate_hz,
            tones: p.healthy.tones.clone(),
            noise_sigma: p.healthy.noise_sigma,
            fault_onset_index: p.fault_onset_index,
            resonance_hz: p.fault.resonance_hz,
            amplitude_growth: p.fault.amplitude_growth,
            impulse_rate_hz: p.fault.impulse_rate_hz,
            impulsiveness: p.fault.impulsiveness,
            seed: p.seed,
            start: "2003.10.22.12.06.24".to_string(),
            interval_secs: p.interval_secs,
        }
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read profile {}", path.display()))?;
        let config: SynthConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse profile {}", path.display()))?;
        Ok(config)
    }

    pub fn to_profile(&self) -> anyhow::Result<RunProfile> {
        let start = chrono::NaiveDateTime::parse_from_str(&self.start, "%Y.%m.%d.%H.%M.%S")
            .with_context(|| format!("start {:?} is not YYYY.MM.DD.HH.MM.SS", self.start))?;
        let profile = RunProfile {
            n_snapshots: self.n_snapshots,
            samples_per_snapshot: self.samples_per_snapshot,
            channels: self.channels,
            sample_rate_hz: self.sample_rate_hz,
            healthy: HealthySpec {
                tones: self.tones.clone(),
                noise_sigma: self.noise_sigma,
            },
            fault_onset_index: self.fault_onset_index,
            fault: FaultSpec {
                resonance_hz: self.resonance_hz,
                amplitude_growth: self.amplitude_growth,
                impulse_rate_hz: self.impulse_rate_hz,
                impulsiveness: self.impulsiveness,
            },
            seed: self.seed,
            start,
            interval_secs: self.interval_secs,
        };
        profile.validate()?;
        Ok(profile)
    }
}

/// Parses `--channels` overrides like `bearing2=3,4;bearing3=5,6`.
pub fn parse_channel_map(text: &str) -> anyhow::Result<BTreeMap<String, Vec<usize>>> {
    let mut map = BTreeMap::new();
    for part in text.split(';').filter(|p| !p.trim().is_empty()) {
        let (name, list) = part
            .split_once('=')
            .with_context(|| format!("expected name=channels in {part:?}"))?;
        let channels: Vec<usize> = list
            .split(',')
            .map(|c| c.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("bad channel list in {part:?}"))?;
        if channels.is_empty() {
            bail!("empty channel list in {part:?}");
        }
        map.insert(name.trim().to_string(), channels);
    }
    if map.is_empty() {
        bail!("no bearings in channel map {text:?}");
    }
    Ok(map)
}
