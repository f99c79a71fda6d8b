//! Plain-text outputs: the verdict CSV, the elbow CSV, and the run
//! summaries. Numbers use shortest lossless formatting so reports can be
//! re-parsed without precision loss.

use crate::pipeline::{MonitorReport, TrainArtifacts};
use std::fmt::Write;
use vibemon_core::cluster::ElbowCurve;
use vibemon_core::detector::{MonitorEntry, MonitorOutcome};

const STAMP_FORMAT: &str = "%Y.%m.%d.%H.%M.%S";

/// One row per reading. Readings that failed to evaluate keep their place
/// with NaN values and `error` in the alarm column.
pub fn verdict_csv(entries: &[MonitorEntry]) -> String {
    let mut out = String::from("reading_index,timestamp,loglik,zscore,alarm\n");
    for entry in entries {
        let stamp = entry.timestamp.format(STAMP_FORMAT);
        match &entry.outcome {
            MonitorOutcome::Verdict(v) => {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    entry.reading_index, stamp, v.loglik, v.zscore, v.alarm
                )
                .unwrap();
            }
            MonitorOutcome::Failed { .. } => {
                writeln!(out, "{},{},NaN,NaN,error", entry.reading_index, stamp).unwrap();
            }
        }
    }
    out
}

pub fn elbow_csv(curve: &ElbowCurve) -> String {
    let mut out = String::from("k,wcss\n");
    for (k, wcss) in curve.k_values.iter().zip(&curve.wcss_values) {
        writeln!(out, "{k},{wcss}").unwrap();
    }
    out
}

pub fn monitor_summary(report: &MonitorReport) -> String {
    let evaluated = report
        .entries
        .iter()
        .filter(|e| matches!(e.outcome, MonitorOutcome::Verdict(_)))
        .count();
    let failed = report.entries.len() - evaluated;
    let alarms = report
        .entries
        .iter()
        .filter(|e| matches!(&e.outcome, MonitorOutcome::Verdict(v) if v.alarm))
        .count();
    let last = report.entries.last().map(|e| e.reading_index).unwrap_or(0);
    let mut out = String::new();
    writeln!(out, "bearing:             {}", report.bearing).unwrap();
    writeln!(out, "readings:            {last}").unwrap();
    writeln!(out, "evaluated:           {evaluated} ({failed} failed)").unwrap();
    writeln!(
        out,
        "alarms:              {alarms} (z < {} strictly)",
        report.threshold
    )
    .unwrap();
    match report.onset {
        Some(reading) => writeln!(
            out,
            "degradation onset:   reading {reading} ({} consecutive alarms)",
            report.sustained
        )
        .unwrap(),
        None => writeln!(out, "degradation onset:   none detected").unwrap(),
    }
    out
}

pub fn train_summary(artifacts: &TrainArtifacts) -> String {
    let model = &artifacts.model;
    let mut out = String::new();
    writeln!(out, "bearing:             {}", model.bearing).unwrap();
    writeln!(
        out,
        "training readings:   {}..{} ({} snapshots)",
        model.training_range.first,
        model.training_range.last,
        model.training_range.last - model.training_range.first + 1
    )
    .unwrap();
    for (ch, vr) in &artifacts.variance {
        writeln!(
            out,
            "variance retained:   channel {ch}: {:.1}% over {} components",
            100.0 * vr,
            model.config.p
        )
        .unwrap();
    }
    match &artifacts.elbow {
        Some(curve) => writeln!(
            out,
            "states:              {} (elbow over k = {}..{})",
            curve.selected_k,
            curve.k_values.first().unwrap(),
            curve.k_values.last().unwrap()
        )
        .unwrap(),
        None => writeln!(out, "states:              {} (fixed)", artifacts.selected_states)
            .unwrap(),
    }
    let ll = artifacts.trace.ll_history.last().copied().unwrap_or(f64::NAN);
    writeln!(
        out,
        "EM:                  {} iterations, {}, final LL {ll:.3}",
        artifacts.trace.iterations,
        if artifacts.trace.converged { "converged" } else { "stopped at limit" }
    )
    .unwrap();
    writeln!(
        out,
        "baseline:            mean {:.3}, std {:.3} over {} sequences",
        model.baseline.mean_ll, model.baseline.std_ll, model.baseline.n
    )
    .unwrap();
    writeln!(
        out,
        "normality:           Shapiro-Wilk W = {:.4}, p = {:.4} ({})",
        model.baseline.shapiro_w,
        model.baseline.shapiro_p,
        if model.baseline.normality_ok {
            "looks normal"
        } else {
            "non-normal; baseline still usable"
        }
    )
    .unwrap();
    out
}
