//! Health baseline and alarm logic: fit mean/std of healthy log-likelihoods
//! (with a Shapiro-Wilk normality check), then flag monitored snapshots whose
//! Z-score falls below the alarm threshold.

use crate::error::{Error, Result};
use crate::hmm::{forward_loglik, HmmModel};
use crate::ingest::{load_snapshot, DatasetCatalog, VibrationRecord};
use crate::pca::{concat_features, project, ProjectionMatrix};
use crate::segment::{segment, SegmentSpec};
use crate::shapiro::{shapiro_wilk, MAX_SAMPLES};
use chrono::NaiveDateTime;
use rayon::prelude::*;

/// Left-tail Z-score below which a reading alarms (strictly below).
pub const DEFAULT_THRESHOLD: f64 = -2.33;
/// Consecutive alarms that count as sustained degradation.
pub const DEFAULT_SUSTAINED: usize = 3;
/// Shapiro-Wilk p-value above which the baseline is considered normal.
const NORMALITY_ALPHA: f64 = 0.05;
/// Smallest run the training-range formula accepts.
const MIN_READINGS: usize = 15;

/// 1-based inclusive reading range used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingRange {
    pub first: usize,
    pub last: usize,
}

impl TrainingRange {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, reading_index: usize) -> bool {
        (self.first..=self.last).contains(&reading_index)
    }
}

/// Picks the healthy training readings: the first third of the run with the
/// earliest 20% of that third omitted (run-in transients). In integer
/// arithmetic: last = round(total/3) and first = floor(last/5) + 1.
pub fn select_training_range(total_readings: usize) -> Result<TrainingRange> {
    if total_readings < MIN_READINGS {
        return Err(Error::TooFewReadings {
            total: total_readings,
            min: MIN_READINGS,
        });
    }
    // (total + 1) / 3 rounds total/3 to nearest; the fraction is never 1/2
    let last = (total_readings + 1) / 3;
    let first = last / 5 + 1;
    Ok(TrainingRange { first, last })
}

/// Healthy log-likelihood statistics the Z-score is computed against.
#[derive(Debug, Clone, PartialEq)]
pub struct HealthBaseline {
    pub mean_ll: f64,
    pub std_ll: f64,
    pub n: usize,
    pub shapiro_w: f64,
    pub shapiro_p: f64,
    /// Shapiro-Wilk p >= 0.05; recorded for the report, never blocking.
    pub normality_ok: bool,
}

/// Sample mean and standard deviation (n-1 denominator) of the training
/// log-likelihoods plus the normality check. For n beyond the Shapiro-Wilk
/// limit the test runs on an evenly strided subsample; mean and std always
/// use every value.
pub fn fit_baseline(train_lls: &[f64]) -> Result<HealthBaseline> {
    let n = train_lls.len();
    if n < 3 {
        return Err(Error::SampleSize {
            n,
            min: 3,
            max: usize::MAX,
        });
    }
    if train_lls.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite training log-likelihood"));
    }
    let mean = train_lls.iter().sum::<f64>() / n as f64;
    let var = train_lls
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1) as f64;
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sw = if n <= MAX_SAMPLES {
        shapiro_wilk(train_lls)?
    } else {
        let stride = n.div_ceil(MAX_SAMPLES);
        let subsample: Vec<f64> = train_lls.iter().step_by(stride).copied().collect();
        shapiro_wilk(&subsample)?
    };
    Ok(HealthBaseline {
        mean_ll: mean,
        std_ll: var.sqrt(),
        n,
        shapiro_w: sw.w,
        shapiro_p: sw.p_value,
        normality_ok: sw.p_value >= NORMALITY_ALPHA,
    })
}

/// Outcome for one monitored reading.
#[derive(Debug, Clone, PartialEq)]
pub struct HealthVerdict {
    pub reading_index: usize,
    pub loglik: f64,
    pub zscore: f64,
    pub alarm: bool,
    /// Unusually high likelihood (z above |threshold|); a warning, not an alarm.
    pub high_outlier: bool,
    pub threshold: f64,
}

/// Z-scores a log-likelihood against the baseline. Alarms strictly below the
/// threshold: z exactly at the threshold does not alarm. Only the left tail
/// alarms; the right tail sets `high_outlier`.
pub fn classify(
    reading_index: usize,
    loglik: f64,
    baseline: &HealthBaseline,
    threshold: f64,
) -> HealthVerdict {
    let zscore = (loglik - baseline.mean_ll) / baseline.std_ll;
    HealthVerdict {
        reading_index,
        loglik,
        zscore,
        alarm: zscore < threshold,
        high_outlier: zscore > threshold.abs(),
        threshold,
    }
}

/// Everything needed to score a snapshot: segmentation geometry, one
/// projection per channel, the sequence model, and the healthy baseline.
#[derive(Debug, Clone)]
pub struct BearingModel {
    pub spec: SegmentSpec,
    pub projections: Vec<ProjectionMatrix>,
    pub hmm: HmmModel,
    pub baseline: HealthBaseline,
}

impl BearingModel {
    /// Checks the dimension chain window_len -> p per channel -> feature dim.
    pub fn validate(&self) -> Result<()> {
        if self.projections.is_empty() {
            return Err(Error::dim("model has no channel projections"));
        }
        for (c, proj) in self.projections.iter().enumerate() {
            if proj.m != self.spec.window_len {
                return Err(Error::dim(format!(
                    "projection for channel {c} expects windows of {}, segment spec produces {}",
                    proj.m, self.spec.window_len
                )));
            }
        }
        let d: usize = self.projections.iter().map(|p| p.p).sum();
        if d != self.hmm.dim() {
            return Err(Error::dim(format!(
                "projections emit {d}-dimensional features, model expects {}",
                self.hmm.dim()
            )));
        }
        self.hmm.validate()?;
        // reject NaN and infinities from hand-edited model files too
        if !self.baseline.std_ll.is_finite() || self.baseline.std_ll <= 0.0 {
            return Err(Error::ZeroVariance);
        }
        Ok(())
    }

    /// Segments every channel, projects, concatenates, and returns the
    /// sequence log-likelihood. The record's column count must match the
    /// number of projections.
    pub fn evaluate_record(&self, record: &VibrationRecord) -> Result<f64> {
        if record.samples.ncols() != self.projections.len() {
            return Err(Error::dim(format!(
                "record has {} channels, model has {} projections",
                record.samples.ncols(),
                self.projections.len()
            )));
        }
        let mut per_channel = Vec::with_capacity(self.projections.len());
        for (c, proj) in self.projections.iter().enumerate() {
            let signal = record.samples.column(c).to_vec();
            let u = segment(&signal, self.spec)?;
            per_channel.push(project(proj, &u)?);
        }
        let features = concat_features(&per_channel)?;
        forward_loglik(&self.hmm, &features)
    }
}

/// One reading's monitoring result: a verdict, or the error that kept the
/// snapshot from being evaluated (the run continues either way).
#[derive(Debug, Clone)]
pub enum MonitorOutcome {
    Verdict(HealthVerdict),
    Failed { detail: String },
}

#[derive(Debug, Clone)]
pub struct MonitorEntry {
    pub reading_index: usize,
    pub timestamp: NaiveDateTime,
    pub outcome: MonitorOutcome,
}

/// Scores every snapshot in the catalog for one bearing, in reading order.
/// Snapshots are evaluated in parallel; per-snapshot failures become
/// `Failed` entries instead of aborting the run.
pub fn monitor_run(
    catalog: &DatasetCatalog,
    model: &BearingModel,
    bearing: &str,
    threshold: f64,
    sample_rate_hz: f64,
) -> Result<Vec<MonitorEntry>> {
    let channels = catalog
        .channel_map
        .get(bearing)
        .ok_or_else(|| Error::UnknownBearing {
            bearing: bearing.to_string(),
        })?;
    if channels.len() != model.projections.len() {
        return Err(Error::dim(format!(
            "bearing {bearing:?} maps to {} channels, model has {} projections",
            channels.len(),
            model.projections.len()
        )));
    }
    model.validate()?;
    let entries = catalog
        .snapshots
        .par_iter()
        .map(|snap| {
            let outcome = match load_snapshot(&snap.path, channels, sample_rate_hz)
                .and_then(|record| model.evaluate_record(&record))
            {
                Ok(ll) => {
                    MonitorOutcome::Verdict(classify(snap.reading_index, ll, &model.baseline, threshold))
                }
                Err(e) => MonitorOutcome::Failed {
                    detail: e.to_string(),
                },
            };
            MonitorEntry {
                reading_index: snap.reading_index,
                timestamp: snap.timestamp,
                outcome,
            }
        })
        .collect();
    Ok(entries)
}

/// Reading index of the first run of `sustained` consecutive alarmed
/// verdicts. Failed readings and non-alarmed verdicts both break a streak.
pub fn first_sustained_alarm(entries: &[MonitorEntry], sustained: usize) -> Option<usize> {
    let needed = sustained.max(1);
    let mut streak = 0;
    let mut start = 0;
    for entry in entries {
        let alarmed = matches!(&entry.outcome, MonitorOutcome::Verdict(v) if v.alarm);
        if alarmed {
            if streak == 0 {
                start = entry.reading_index;
            }
            streak += 1;
            if streak == needed {
                return Some(start);
            }
        } else {
            streak = 0;
        }
    }
    None
}
