//! Run-to-failure dataset ingestion: a directory of plain-text vibration
//! snapshots, one file per reading, named by timestamp
//! (`YYYY.MM.DD.HH.MM.SS`, optionally with an extension).
//!
//! Rows are sampling instants, whitespace- or tab-separated columns are
//! accelerometer channels. Channel selection is 1-based and comes from
//! configuration, as does the sample rate; neither is ever inferred from the
//! file.

use crate::error::{Error, Result};
use chrono::NaiveDateTime;
use ndarray::Array2;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub(crate) const STAMP_FORMAT: &str = "%Y.%m.%d.%H.%M.%S";
const STAMP_LEN: usize = 19;

/// One snapshot file, its parsed timestamp, and its 1-based reading ordinal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotPath {
    pub path: PathBuf,
    pub timestamp: NaiveDateTime,
    pub reading_index: usize,
}

/// Samples from the selected channels of one snapshot. Rows are time
/// instants, columns follow the requested channel order; every value is
/// finite.
#[derive(Debug, Clone, PartialEq)]
pub struct VibrationRecord {
    pub samples: Array2<f64>,
    pub sample_rate_hz: f64,
    /// 1-based channel labels, in column order.
    pub channels: Vec<usize>,
}

/// Every snapshot of one run, sorted by timestamp with reading indices
/// 1..n, plus the bearing-name to channel-list mapping.
#[derive(Debug, Clone)]
pub struct DatasetCatalog {
    pub snapshots: Vec<SnapshotPath>,
    pub channel_map: BTreeMap<String, Vec<usize>>,
}

/// Parses the timestamp from a snapshot filename: the first 19 characters
/// must match the stamp format and must end the name or be followed by an
/// extension dot.
fn parse_stamp(path: &Path) -> Result<NaiveDateTime> {
    let err = || Error::UnparseableFilename {
        path: path.to_path_buf(),
    };
    let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(err)?;
    if name.len() < STAMP_LEN {
        return Err(err());
    }
    if name.len() > STAMP_LEN && !name[STAMP_LEN..].starts_with('.') {
        return Err(err());
    }
    NaiveDateTime::parse_from_str(&name[..STAMP_LEN], STAMP_FORMAT).map_err(|_| err())
}

/// Lists every snapshot in `root`, sorted ascending by timestamp (filename
/// as tiebreaker is never needed: equal timestamps are an error). Dotfiles
/// and subdirectories are ignored; any other file must carry a parseable
/// timestamp name.
pub fn scan_dataset(
    root: &Path,
    channel_map: BTreeMap<String, Vec<usize>>,
) -> Result<DatasetCatalog> {
    let mut stamped: Vec<(NaiveDateTime, String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        let path = entry.path();
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n.to_string(),
            None => {
                return Err(Error::UnparseableFilename { path });
            }
        };
        if name.starts_with('.') {
            continue;
        }
        let stamp = parse_stamp(&path)?;
        stamped.push((stamp, name, path));
    }
    if stamped.is_empty() {
        return Err(Error::EmptyDataset {
            dir: root.to_path_buf(),
        });
    }
    stamped.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    for pair in stamped.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateTimestamp {
                first: pair[0].1.clone(),
                second: pair[1].1.clone(),
            });
        }
    }
    let snapshots = stamped
        .into_iter()
        .enumerate()
        .map(|(i, (timestamp, _, path))| SnapshotPath {
            path,
            timestamp,
            reading_index: i + 1,
        })
        .collect();
    Ok(DatasetCatalog {
        snapshots,
        channel_map,
    })
}

/// Loads the requested 1-based channels from one snapshot file. Trailing
/// blank lines are tolerated; interior blank lines, ragged rows, non-numeric
/// tokens, and non-finite values are hard errors naming the line.
pub fn load_snapshot(path: &Path, channels: &[usize], sample_rate_hz: f64) -> Result<VibrationRecord> {
    if channels.is_empty() {
        return Err(Error::dim("no channels requested"));
    }
    let content = std::fs::read_to_string(path)?;
    let mut lines: Vec<(usize, &str)> = content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .collect();
    while matches!(lines.last(), Some((_, l)) if l.trim().is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(Error::EmptySnapshot {
            path: path.to_path_buf(),
        });
    }

    let mut columns = 0;
    let mut rows: Vec<f64> = Vec::new();
    for (row_idx, &(lineno, line)) in lines.iter().enumerate() {
        let parse_err = |detail: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            detail,
        };
        if line.trim().is_empty() {
            return Err(parse_err("blank line inside the data block".into()));
        }
        let mut count = 0;
        for token in line.split_whitespace() {
            let value: f64 = token
                .parse()
                .map_err(|_| parse_err(format!("cannot parse {token:?} as a number")))?;
            if !value.is_finite() {
                return Err(parse_err(format!("non-finite value {token:?}")));
            }
            rows.push(value);
            count += 1;
        }
        if row_idx == 0 {
            columns = count;
        } else if count != columns {
            return Err(parse_err(format!(
                "row has {count} columns, expected {columns}"
            )));
        }
    }

    for &ch in channels {
        if ch < 1 || ch > columns {
            return Err(Error::ChannelOutOfRange {
                path: path.to_path_buf(),
                channel: ch,
                columns,
            });
        }
    }

    let n_rows = lines.len();
    let full = Array2::from_shape_vec((n_rows, columns), rows)
        .expect("row-major token count matches rows x columns");
    let mut samples = Array2::zeros((n_rows, channels.len()));
    for (out_col, &ch) in channels.iter().enumerate() {
        samples.column_mut(out_col).assign(&full.column(ch - 1));
    }
    Ok(VibrationRecord {
        samples,
        sample_rate_hz,
        channels: channels.to_vec(),
    })
}
