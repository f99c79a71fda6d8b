//! PCA over segment matrices: covariance of the windows, eigendecomposition,
//! and projection onto the dominant eigenvectors.
//!
//! Windows are the observations: with N windows of length M the covariance is
//! the M x M matrix R = 1/(N-1) * sum (u_n - mean)(u_n - mean)^T. The
//! projection W keeps the p eigenvectors with the largest eigenvalues, one
//! ProjectionMatrix per measured channel. Training pools windows from many
//! snapshots, so the covariance is built incrementally with the accumulators
//! below and the fit itself runs on the finished covariance.

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::segment::SegmentMatrix;
use ndarray::{Array1, Array2, Axis};

/// Frozen projection for one channel: rows of `w` are orthonormal
/// eigenvectors of the training covariance, eigenvalues keep the full
/// descending spectrum for diagnostics.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    pub channel_label: String,
    /// retained component count (rows of `w`)
    pub p: usize,
    /// window length (columns of `w`)
    pub m: usize,
    pub w: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    /// training window mean, present when the fit centered the data
    pub mean: Option<Array1<f64>>,
}

/// Per-window feature vectors of one snapshot; row n is the feature of
/// window n. `source` carries the snapshot's reading index through the
/// pipeline so concatenation can refuse to mix snapshots.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    /// N rows x d columns
    pub vectors: Array2<f64>,
    pub source: usize,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn with_source(mut self, source: usize) -> Self {
        self.source = source;
        self
    }
}

/// Streaming mean of pooled windows (pass 1 of a multi-snapshot fit).
#[derive(Debug, Clone)]
pub struct MeanAccumulator {
    sum: Array1<f64>,
    count: usize,
}

impl MeanAccumulator {
    pub fn new(window_len: usize) -> Self {
        MeanAccumulator {
            sum: Array1::zeros(window_len),
            count: 0,
        }
    }

    pub fn push(&mut self, u: &SegmentMatrix) -> Result<()> {
        if u.window_len() != self.sum.len() {
            return Err(Error::dim(format!(
                "mean accumulator expects windows of {}, got {}",
                self.sum.len(),
                u.window_len()
            )));
        }
        self.sum += &u.u.sum_axis(Axis(1));
        self.count += u.window_count();
        Ok(())
    }

    /// Folds another accumulator in; partials may be built in parallel as
    /// long as the merge order is fixed.
    pub fn merge(&mut self, other: &MeanAccumulator) -> Result<()> {
        if other.sum.len() != self.sum.len() {
            return Err(Error::dim(format!(
                "cannot merge accumulators over windows of {} and {}",
                self.sum.len(),
                other.sum.len()
            )));
        }
        self.sum += &other.sum;
        self.count += other.count;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Array1<f64> {
        if self.count == 0 {
            self.sum.clone()
        } else {
            &self.sum / self.count as f64
        }
    }
}

/// Streaming scatter matrix around a fixed mean (pass 2).
#[derive(Debug, Clone)]
pub struct CovAccumulator {
    mean: Array1<f64>,
    scatter: Array2<f64>,
    count: usize,
}

impl CovAccumulator {
    pub fn new(mean: Array1<f64>) -> Self {
        let m = mean.len();
        CovAccumulator {
            mean,
            scatter: Array2::zeros((m, m)),
            count: 0,
        }
    }

    pub fn push(&mut self, u: &SegmentMatrix) -> Result<()> {
        if u.window_len() != self.mean.len() {
            return Err(Error::dim(format!(
                "covariance accumulator expects windows of {}, got {}",
                self.mean.len(),
                u.window_len()
            )));
        }
        let centered = &u.u - &self.mean.view().insert_axis(Axis(1));
        self.scatter += &centered.dot(&centered.t());
        self.count += u.window_count();
        Ok(())
    }

    /// Folds another accumulator in; both must share the same fixed mean.
    pub fn merge(&mut self, other: &CovAccumulator) -> Result<()> {
        if other.mean != self.mean {
            return Err(Error::dim(
                "cannot merge scatter accumulators centered on different means",
            ));
        }
        self.scatter += &other.scatter;
        self.count += other.count;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Sample covariance with the n-1 denominator.
    pub fn covariance(&self) -> Result<Array2<f64>> {
        if self.count < 2 {
            return Err(Error::dim(format!(
                "covariance needs at least 2 windows, got {}",
                self.count
            )));
        }
        Ok(&self.scatter / (self.count - 1) as f64)
    }
}

/// Fits the projection from a finished covariance matrix.
///
/// `mean` must be the vector the covariance was centered on, or `None` for
/// the uncentered variant; it is stored and re-applied by [`project`].
pub fn fit_pca_from_covariance(
    r: &Array2<f64>,
    mean: Option<Array1<f64>>,
    p: usize,
    channel_label: &str,
) -> Result<ProjectionMatrix> {
    let m = r.nrows();
    if r.ncols() != m {
        return Err(Error::dim(format!(
            "covariance must be square, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    if p == 0 || p >= m {
        return Err(Error::dim(format!(
            "retained components p={p} must satisfy 1 <= p < window_len={m}"
        )));
    }
    if let Some(mu) = &mean {
        if mu.len() != m {
            return Err(Error::dim(format!(
                "mean length {} does not match covariance size {m}",
                mu.len()
            )));
        }
    }
    let (eigenvalues, vectors) = symmetric_eigen(r);
    let w = vectors.slice(ndarray::s![..p, ..]).to_owned();
    Ok(ProjectionMatrix {
        channel_label: channel_label.to_string(),
        p,
        m,
        w,
        eigenvalues,
        mean,
    })
}

/// Fits the projection from a single segment matrix.
///
/// `center` subtracts the window mean before the covariance (the default in
/// the pipeline); the uncentered variant uses the raw second moment.
pub fn fit_pca(u: &SegmentMatrix, p: usize, center: bool) -> Result<ProjectionMatrix> {
    let m = u.window_len();
    let n = u.window_count();
    if n <= m {
        return Err(Error::TooFewWindows {
            window_len: m,
            windows: n,
        });
    }
    let mean = if center {
        let mut acc = MeanAccumulator::new(m);
        acc.push(u)?;
        acc.mean()
    } else {
        Array1::zeros(m)
    };
    let mut cov = CovAccumulator::new(mean.clone());
    cov.push(u)?;
    let r = cov.covariance()?;
    fit_pca_from_covariance(&r, center.then_some(mean), p, "")
}

/// Projects each window of `u` onto the retained eigenvectors: row n of the
/// result is W (u_n - mean). The caller tags the snapshot via
/// [`FeatureSequence::with_source`].
pub fn project(w: &ProjectionMatrix, u: &SegmentMatrix) -> Result<FeatureSequence> {
    if u.window_len() != w.m {
        return Err(Error::dim(format!(
            "projection is {}x{} but windows have length {}",
            w.p,
            w.m,
            u.window_len()
        )));
    }
    let projected = match &w.mean {
        Some(mu) => {
            let centered = &u.u - &mu.view().insert_axis(Axis(1));
            w.w.dot(&centered)
        }
        None => w.w.dot(&u.u),
    };
    Ok(FeatureSequence {
        vectors: projected.t().to_owned(),
        source: 0,
    })
}

/// Fraction of total variance captured by the retained components; 1 by
/// convention when the spectrum is all zero. Round-off negatives clamp to 0.
pub fn variance_retained(w: &ProjectionMatrix) -> f64 {
    let clamped: Vec<f64> = w.eigenvalues.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total == 0.0 {
        return 1.0;
    }
    let kept: f64 = clamped[..w.p].iter().sum();
    kept / total
}

/// Concatenates per-channel features window-by-window, in channel order.
pub fn concat_features(per_channel: &[FeatureSequence]) -> Result<FeatureSequence> {
    let first = per_channel
        .first()
        .ok_or_else(|| Error::dim("concat_features needs at least one channel".to_string()))?;
    let n = first.len();
    let source = first.source;
    for (i, seq) in per_channel.iter().enumerate() {
        if seq.len() != n {
            return Err(Error::dim(format!(
                "channel {i} has {} windows, expected {n}",
                seq.len()
            )));
        }
        if seq.source != source {
            return Err(Error::dim(format!(
                "channel {i} comes from snapshot {}, expected {source}",
                seq.source
            )));
        }
    }
    let d: usize = per_channel.iter().map(|s| s.dim()).sum();
    let mut vectors = Array2::zeros((n, d));
    let mut offset = 0;
    for seq in per_channel {
        vectors
            .slice_mut(ndarray::s![.., offset..offset + seq.dim()])
            .assign(&seq.vectors);
        offset += seq.dim();
    }
    Ok(FeatureSequence { vectors, source })
}
