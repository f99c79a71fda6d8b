//! End-to-end library test: generate a run-to-failure recording in memory,
//! fit the whole chain (segment -> PCA -> clustering -> HMM -> baseline) on
//! its early life, then score every snapshot and check that the detector
//! stays quiet while the machine is healthy and raises a sustained alarm
//! shortly after the seeded fault begins to grow.

use ndarray::Array2;
use vibemon_core::cluster::elbow_with_clusterings;
use vibemon_core::detector::{
    classify, first_sustained_alarm, fit_baseline, select_training_range, HealthBaseline,
    HealthVerdict, MonitorEntry, MonitorOutcome,
};
use vibemon_core::hmm::{baum_welch, forward_loglik, init_from_clusters};
use vibemon_core::pca::{
    fit_pca_from_covariance, project, CovAccumulator, FeatureSequence, MeanAccumulator,
};
use vibemon_core::segment::{segment, SegmentSpec};
use vibemon_core::synth::{generate_run, RunProfile, SyntheticRun};

const WINDOW: usize = 64;
const HOP: usize = 16;
const COMPONENTS: usize = 4;
const THRESHOLD: f64 = -2.33;
const SUSTAINED: usize = 3;

fn fast_failing_profile() -> RunProfile {
    let mut profile = RunProfile {
        n_snapshots: 60,
        samples_per_snapshot: 2048,
        fault_onset_index: 40,
        seed: 11,
        ..RunProfile::default()
    };
    profile.fault.amplitude_growth = 1.0;
    profile
}

struct RunScore {
    baseline: HealthBaseline,
    verdicts: Vec<HealthVerdict>,
    entries: Vec<MonitorEntry>,
}

/// The full training + scoring chain on a single-channel in-memory run.
fn score_run(run: &SyntheticRun) -> RunScore {
    let spec = SegmentSpec::new(WINDOW, HOP).unwrap();
    let segments: Vec<_> = run
        .records
        .iter()
        .map(|rec| segment(&rec.samples.column(0).to_vec(), spec).unwrap())
        .collect();

    let range = select_training_range(run.records.len()).unwrap();
    let train = &segments[range.first - 1..range.last];

    let mut mean_acc = MeanAccumulator::new(WINDOW);
    for u in train {
        mean_acc.push(u).unwrap();
    }
    let mean = mean_acc.mean();
    let mut cov_acc = CovAccumulator::new(mean.clone());
    for u in train {
        cov_acc.push(u).unwrap();
    }
    let proj = fit_pca_from_covariance(
        &cov_acc.covariance().unwrap(),
        Some(mean),
        COMPONENTS,
        "ch1",
    )
    .unwrap();

    let features: Vec<FeatureSequence> = segments
        .iter()
        .enumerate()
        .map(|(i, u)| project(&proj, u).unwrap().with_source(i + 1))
        .collect();
    let train_feats = &features[range.first - 1..range.last];

    let seq_lens: Vec<usize> = train_feats.iter().map(|s| s.len()).collect();
    let n_rows: usize = seq_lens.iter().sum();
    let mut pooled = Array2::zeros((n_rows, COMPONENTS));
    let mut row = 0;
    for seq in train_feats {
        pooled
            .slice_mut(ndarray::s![row..row + seq.len(), ..])
            .assign(&seq.vectors);
        row += seq.len();
    }

    let (curve, mut clusterings) =
        elbow_with_clusterings(&pooled.view(), 1, 4, 13, 4, 300).unwrap();
    let clustering = clusterings.swap_remove(curve.selected_k - 1);
    let init = init_from_clusters(&clustering, &pooled.view(), &seq_lens).unwrap();
    let (model, trace) = baum_welch(&init, train_feats, 1e-6, 60).unwrap();
    assert!(trace.iterations > 0);

    let train_lls: Vec<f64> = train_feats
        .iter()
        .map(|s| forward_loglik(&model, s).unwrap())
        .collect();
    let baseline = fit_baseline(&train_lls).unwrap();

    let verdicts: Vec<HealthVerdict> = features
        .iter()
        .enumerate()
        .map(|(i, seq)| {
            let ll = forward_loglik(&model, seq).unwrap();
            classify(i + 1, ll, &baseline, THRESHOLD)
        })
        .collect();
    let entries: Vec<MonitorEntry> = verdicts
        .iter()
        .zip(&run.timestamps)
        .map(|(v, &ts)| MonitorEntry {
            reading_index: v.reading_index,
            timestamp: ts,
            outcome: MonitorOutcome::Verdict(v.clone()),
        })
        .collect();
    RunScore {
        baseline,
        verdicts,
        entries,
    }
}

#[test]
fn detector_raises_a_sustained_alarm_soon_after_the_fault_starts() {
    let profile = fast_failing_profile();
    let onset = profile.fault_onset_index;
    let run = generate_run(&profile).unwrap();
    let score = score_run(&run);

    assert!(
        score.baseline.std_ll > 0.0 && score.baseline.n == 16,
        "range [5, 20] of a 60-reading run holds 16 training sequences"
    );

    let detected = first_sustained_alarm(&score.entries, SUSTAINED)
        .expect("a growing fault must eventually sustain an alarm");
    // allow 10% of the run length for the fault to rise out of the noise
    assert!(
        (onset..=onset + 6).contains(&detected),
        "sustained alarm at {detected}, expected within [{onset}, {}]",
        onset + 6
    );
}

#[test]
fn healthy_life_stays_quiet() {
    let run = generate_run(&fast_failing_profile()).unwrap();
    let score = score_run(&run);

    // at most 5% isolated alarms inside the training range itself
    let range = select_training_range(run.records.len()).unwrap();
    let train_alarms = score
        .verdicts
        .iter()
        .filter(|v| range.contains(v.reading_index) && v.alarm)
        .count();
    assert!(
        (train_alarms as f64) <= 0.05 * range.len() as f64,
        "{train_alarms} alarms inside the {}-reading training range",
        range.len()
    );

    // held-out healthy readings (after training, before the fault): allow a
    // single outlier among the 19 readings
    let held_out: Vec<&HealthVerdict> = score
        .verdicts
        .iter()
        .filter(|v| v.reading_index > range.last && v.reading_index < 40)
        .collect();
    assert_eq!(held_out.len(), 19);
    let outliers = held_out.iter().filter(|v| v.zscore.abs() >= 2.33).count();
    assert!(
        outliers <= 1,
        "{outliers} of {} held-out healthy readings left the normal band",
        held_out.len()
    );

    // no sustained alarm before the seeded onset
    let healthy_entries = &score.entries[..39];
    assert_eq!(first_sustained_alarm(healthy_entries, SUSTAINED), None);
}

#[test]
fn late_life_scores_collapse() {
    let run = generate_run(&fast_failing_profile()).unwrap();
    let score = score_run(&run);
    for v in &score.verdicts[55..] {
        assert!(
            v.zscore < -10.0,
            "reading {} near end of life scored z = {:.2}, expected far below -10",
            v.reading_index,
            v.zscore
        );
    }
}

#[test]
fn scoring_is_deterministic_end_to_end() {
    let profile = fast_failing_profile();
    let first = score_run(&generate_run(&profile).unwrap());
    let second = score_run(&generate_run(&profile).unwrap());
    for (a, b) in first.verdicts.iter().zip(&second.verdicts) {
        assert_eq!(a.loglik.to_bits(), b.loglik.to_bits());
        assert_eq!(a.zscore.to_bits(), b.zscore.to_bits());
        assert_eq!(a.alarm, b.alarm);
    }
}
