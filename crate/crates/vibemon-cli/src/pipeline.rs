//! Orchestration for the subcommands: the full training pipeline
//! (ingest -> segment -> per-channel PCA -> features -> cluster count ->
//! initial model -> EM -> baseline) and the monitoring pass.
//!
//! Training streams the dataset three times instead of holding raw signals
//! in memory: once for window means, once for covariances, once to project
//! features. Snapshots are processed in parallel inside each pass and the
//! partial results are folded in reading order, so results do not depend on
//! thread scheduling.

use crate::config::PipelineConfig;
use crate::model::{
    dataset_fingerprint, BaselineDto, HmmDto, ModelFile, ProjectionDto, RangeDto,
    MODEL_FORMAT_VERSION,
};
use anyhow::{bail, Context};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use std::path::Path;
use vibemon_core::cluster::{elbow_with_clusterings, kmeans, Clustering, ElbowCurve};
use vibemon_core::detector::{
    first_sustained_alarm, fit_baseline, select_training_range, MonitorEntry, TrainingRange,
};
use vibemon_core::hmm::{baum_welch, forward_loglik, init_from_clusters, TrainingTrace};
use vibemon_core::ingest::{load_snapshot, scan_dataset, DatasetCatalog, SnapshotPath};
use vibemon_core::pca::{
    concat_features, fit_pca_from_covariance, project, variance_retained, CovAccumulator,
    FeatureSequence, MeanAccumulator, ProjectionMatrix,
};
use vibemon_core::segment::{segment, SegmentSpec};

/// Everything the feature-extraction front half produces; `train` finishes
/// from here and `elbow` stops at the curve.
pub struct FeaturePrep {
    pub catalog: DatasetCatalog,
    pub bearing: String,
    pub channels: Vec<usize>,
    pub range: TrainingRange,
    pub projections: Vec<ProjectionMatrix>,
    pub sequences: Vec<FeatureSequence>,
    /// all training feature vectors stacked in sequence order
    pub pooled: Array2<f64>,
    pub seq_lens: Vec<usize>,
}

pub struct TrainArtifacts {
    pub model: ModelFile,
    pub elbow: Option<ElbowCurve>,
    pub trace: TrainingTrace,
    /// (1-based channel, retained variance fraction)
    pub variance: Vec<(usize, f64)>,
    pub selected_states: usize,
}

pub struct MonitorReport {
    pub bearing: String,
    pub entries: Vec<MonitorEntry>,
    pub onset: Option<usize>,
    pub threshold: f64,
    pub sustained: usize,
}

fn resolve_range(config: &PipelineConfig, total: usize) -> anyhow::Result<TrainingRange> {
    match (config.train_first, config.train_last) {
        (Some(first), Some(last)) => {
            if !(1 <= first && first <= last && last <= total) {
                bail!("training range [{first}, {last}] does not fit a run of {total} readings");
            }
            Ok(TrainingRange { first, last })
        }
        (None, None) => Ok(select_training_range(total)?),
        _ => bail!("train_first/train_last must be set together"),
    }
}

/// Segments every requested channel of one snapshot.
fn channel_segments(
    snap: &SnapshotPath,
    channels: &[usize],
    spec: SegmentSpec,
    sample_rate_hz: f64,
) -> anyhow::Result<Vec<vibemon_core::segment::SegmentMatrix>> {
    let record = load_snapshot(&snap.path, channels, sample_rate_hz)
        .with_context(|| format!("reading {}", snap.reading_index))?;
    (0..channels.len())
        .map(|c| {
            let signal = record.samples.column(c).to_vec();
            segment(&signal, spec)
                .with_context(|| format!("reading {} channel {}", snap.reading_index, channels[c]))
        })
        .collect()
}

/// Runs ingest through feature extraction over the training range.
pub fn prepare_features(config: &PipelineConfig) -> anyhow::Result<FeaturePrep> {
    config.validate()?;
    let root = config
        .dataset
        .as_ref()
        .context("no dataset directory configured; set dataset= or pass --dataset")?;
    let bearing = config.resolve_bearing()?;
    let catalog = scan_dataset(root, config.channel_map.clone()).context("scanning dataset")?;
    let channels = catalog.channel_map[&bearing].clone();
    if channels.is_empty() {
        bail!("bearing {bearing:?} maps to no channels");
    }
    let total = catalog.snapshots.len();
    let range = resolve_range(config, total)?;
    let spec = SegmentSpec::new(config.window_len, config.hop)?;
    let train_snaps = &catalog.snapshots[range.first - 1..range.last];
    let n_channels = channels.len();

    // pass 1: pooled window mean per channel (identically zero when
    // centering is off, matching the uncentered covariance convention)
    let means: Vec<Array1<f64>> = if config.center {
        let partials: Vec<anyhow::Result<Vec<MeanAccumulator>>> = train_snaps
            .par_iter()
            .map(|snap| {
                let mut accs: Vec<MeanAccumulator> = (0..n_channels)
                    .map(|_| MeanAccumulator::new(config.window_len))
                    .collect();
                for (c, u) in channel_segments(snap, &channels, spec, config.sample_rate_hz)?
                    .iter()
                    .enumerate()
                {
                    accs[c].push(u)?;
                }
                Ok(accs)
            })
            .collect();
        let mut totals: Vec<MeanAccumulator> = (0..n_channels)
            .map(|_| MeanAccumulator::new(config.window_len))
            .collect();
        for partial in partials {
            for (total_acc, part) in totals.iter_mut().zip(partial?.iter()) {
                total_acc.merge(part)?;
            }
        }
        totals.iter().map(|t| t.mean()).collect()
    } else {
        (0..n_channels)
            .map(|_| Array1::zeros(config.window_len))
            .collect()
    };

    // pass 2: scatter around the fixed means, then the projections
    let partials: Vec<anyhow::Result<Vec<CovAccumulator>>> = train_snaps
        .par_iter()
        .map(|snap| {
            let mut accs: Vec<CovAccumulator> =
                means.iter().map(|m| CovAccumulator::new(m.clone())).collect();
            for (c, u) in channel_segments(snap, &channels, spec, config.sample_rate_hz)?
                .iter()
                .enumerate()
            {
                accs[c].push(u)?;
            }
            Ok(accs)
        })
        .collect();
    let mut scatters: Vec<CovAccumulator> =
        means.iter().map(|m| CovAccumulator::new(m.clone())).collect();
    for partial in partials {
        for (total_acc, part) in scatters.iter_mut().zip(partial?.iter()) {
            total_acc.merge(part)?;
        }
    }
    let projections: Vec<ProjectionMatrix> = scatters
        .iter()
        .enumerate()
        .map(|(c, acc)| {
            let r = acc.covariance()?;
            let mean = config.center.then(|| means[c].clone());
            fit_pca_from_covariance(&r, mean, config.p, &format!("ch{}", channels[c]))
        })
        .collect::<vibemon_core::Result<_>>()
        .context("fitting projections")?;

    // pass 3: project every training snapshot into feature sequences
    let sequences: Vec<FeatureSequence> = train_snaps
        .par_iter()
        .map(|snap| {
            let segments = channel_segments(snap, &channels, spec, config.sample_rate_hz)?;
            let per_channel: Vec<FeatureSequence> = segments
                .iter()
                .zip(&projections)
                .map(|(u, proj)| project(proj, u))
                .collect::<vibemon_core::Result<_>>()?;
            Ok(concat_features(&per_channel)?.with_source(snap.reading_index))
        })
        .collect::<anyhow::Result<_>>()?;

    let seq_lens: Vec<usize> = sequences.iter().map(|s| s.len()).collect();
    let d = sequences[0].dim();
    let n_total: usize = seq_lens.iter().sum();
    let mut pooled = Array2::zeros((n_total, d));
    let mut row = 0;
    for seq in &sequences {
        pooled
            .slice_mut(ndarray::s![row..row + seq.len(), ..])
            .assign(&seq.vectors);
        row += seq.len();
    }

    Ok(FeaturePrep {
        catalog,
        bearing,
        channels,
        range,
        projections,
        sequences,
        pooled,
        seq_lens,
    })
}

/// Elbow curve over the configured k range (or the fixed state count).
pub fn elbow(config: &PipelineConfig) -> anyhow::Result<ElbowCurve> {
    let prep = prepare_features(config)?;
    let (curve, _) = elbow_with_clusterings(
        &prep.pooled.view(),
        config.k_min,
        config.k_max,
        config.seed,
        config.restarts,
        config.kmeans_max_iter,
    )?;
    Ok(curve)
}

fn pick_states(
    config: &PipelineConfig,
    prep: &FeaturePrep,
) -> anyhow::Result<(Option<ElbowCurve>, Clustering)> {
    match config.states {
        Some(s) => {
            let clustering = kmeans(
                &prep.pooled.view(),
                s,
                config.seed,
                config.restarts,
                config.kmeans_max_iter,
            )?;
            Ok((None, clustering))
        }
        None => {
            let (curve, mut clusterings) = elbow_with_clusterings(
                &prep.pooled.view(),
                config.k_min,
                config.k_max,
                config.seed,
                config.restarts,
                config.kmeans_max_iter,
            )?;
            let idx = curve.selected_k - config.k_min;
            let clustering = clusterings.swap_remove(idx);
            Ok((Some(curve), clustering))
        }
    }
}

pub fn train(config: &PipelineConfig) -> anyhow::Result<TrainArtifacts> {
    let prep = prepare_features(config)?;
    let (elbow, clustering) = pick_states(config, &prep)?;
    let init = init_from_clusters(&clustering, &prep.pooled.view(), &prep.seq_lens)?;
    let (hmm, trace) = baum_welch(&init, &prep.sequences, config.hmm_tol, config.hmm_max_iter)
        .context("training the sequence model")?;
    let lls: Vec<f64> = prep
        .sequences
        .par_iter()
        .map(|s| forward_loglik(&hmm, s))
        .collect::<vibemon_core::Result<_>>()
        .context("scoring training sequences")?;
    let baseline = fit_baseline(&lls).context("fitting the healthy baseline")?;

    let variance: Vec<(usize, f64)> = prep
        .projections
        .iter()
        .zip(&prep.channels)
        .map(|(proj, &ch)| (ch, variance_retained(proj)))
        .collect();
    let selected_states = clustering.k;

    let model = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        created_utc: chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        dataset_fingerprint: dataset_fingerprint(&prep.catalog)?,
        bearing: prep.bearing.clone(),
        config: config.clone(),
        training_range: RangeDto {
            first: prep.range.first,
            last: prep.range.last,
        },
        projections: prep
            .projections
            .iter()
            .zip(&prep.channels)
            .map(|(proj, &ch)| ProjectionDto::from_core(proj, ch))
            .collect(),
        hmm: HmmDto::from_core(&hmm),
        baseline: BaselineDto::from_core(&baseline),
    };

    Ok(TrainArtifacts {
        model,
        elbow,
        trace,
        variance,
        selected_states,
    })
}

pub fn monitor(
    model: &ModelFile,
    dataset: &Path,
    bearing_override: Option<&str>,
    threshold_override: Option<f64>,
    sustained_override: Option<usize>,
) -> anyhow::Result<MonitorReport> {
    let bearing = bearing_override.unwrap_or(&model.bearing).to_string();
    let core_model = model.to_bearing_model().context("model file is inconsistent")?;
    let catalog = scan_dataset(dataset, model.config.channel_map.clone())
        .context("scanning dataset")?;
    let threshold = threshold_override.unwrap_or(model.config.threshold);
    let sustained = sustained_override.unwrap_or(model.config.sustained);
    let entries = monitor_entries(&catalog, &core_model, &bearing, threshold, model)?;
    let onset = first_sustained_alarm(&entries, sustained);
    Ok(MonitorReport {
        bearing,
        entries,
        onset,
        threshold,
        sustained,
    })
}

fn monitor_entries(
    catalog: &DatasetCatalog,
    core_model: &vibemon_core::detector::BearingModel,
    bearing: &str,
    threshold: f64,
    model: &ModelFile,
) -> anyhow::Result<Vec<MonitorEntry>> {
    Ok(vibemon_core::detector::monitor_run(
        catalog,
        core_model,
        bearing,
        threshold,
        model.config.sample_rate_hz,
    )?)
}
