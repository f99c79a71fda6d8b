//! Slicing a single-channel signal into the M x N matrix of overlapping
//! windows.
//!
//! Column n of the matrix is the window starting at sample n * hop; samples
//! past the last full window are discarded. Downstream covariance estimation
//! requires strictly more windows than window samples (M < N), so `segment`
//! rejects inputs where that fails.

use crate::error::{Error, Result};
use ndarray::Array2;

/// Window length and hop, both in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSpec {
    pub window_len: usize,
    pub hop: usize,
}

impl SegmentSpec {
    /// Requires 1 <= hop <= window_len.
    pub fn new(window_len: usize, hop: usize) -> Result<Self> {
        if window_len == 0 || hop == 0 || hop > window_len {
            return Err(Error::BadSegmentSpec { window_len, hop });
        }
        Ok(SegmentSpec { window_len, hop })
    }

    /// Number of full windows in a signal of `len` samples, 0 when none fit.
    pub fn window_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }
}

/// M x N matrix whose column n is window n of the source signal.
#[derive(Debug, Clone)]
pub struct SegmentMatrix {
    /// window_len rows x window-count columns.
    pub u: Array2<f64>,
    pub spec: SegmentSpec,
}

impl SegmentMatrix {
    /// Window length M.
    pub fn window_len(&self) -> usize {
        self.u.nrows()
    }

    /// Window count N.
    pub fn window_count(&self) -> usize {
        self.u.ncols()
    }
}

/// Decomposes `signal` into overlapping windows.
///
/// Fails when the signal cannot fill one window or when the resulting window
/// count N does not exceed the window length M.
pub fn segment(signal: &[f64], spec: SegmentSpec) -> Result<SegmentMatrix> {
    let m = spec.window_len;
    if signal.len() < m {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            window_len: m,
        });
    }
    let n = spec.window_count(signal.len());
    if n <= m {
        return Err(Error::TooFewWindows {
            window_len: m,
            windows: n,
        });
    }
    let mut u = Array2::zeros((m, n));
    for col in 0..n {
        let start = col * spec.hop;
        for row in 0..m {
            u[(row, col)] = signal[start + row];
        }
    }
    Ok(SegmentMatrix { u, spec })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ims_shape_gives_625_windows() {
        let spec = SegmentSpec::new(512, 32).unwrap();
        assert_eq!(spec.window_count(20480), 625);
        let signal: Vec<f64> = (0..20480).map(|i| i as f64).collect();
        let mat = segment(&signal, spec).unwrap();
        assert_eq!(mat.u.shape(), &[512, 625]);
    }

    #[test]
    fn hand_enumerated_windows() {
        // L=10, M=2, h=2: columns (s1,s2),(s3,s4),(s5,s6),(s7,s8),(s9,s10)
        let signal: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let mat = segment(&signal, SegmentSpec::new(2, 2).unwrap()).unwrap();
        assert_eq!(mat.u.shape(), &[2, 5]);
        let expected = [
            [1.0, 3.0, 5.0, 7.0, 9.0],
            [2.0, 4.0, 6.0, 8.0, 10.0],
        ];
        for (row, want) in expected.iter().enumerate() {
            for (col, value) in want.iter().enumerate() {
                assert_eq!(mat.u[(row, col)], *value);
            }
        }
    }

    #[test]
    fn single_window_is_rejected() {
        // L=M=4, h=1 yields N=1 <= M
        let signal = [0.0; 4];
        let err = segment(&signal, SegmentSpec::new(4, 1).unwrap()).unwrap_err();
        match err {
            Error::TooFewWindows {
                window_len,
                windows,
            } => {
                assert_eq!(window_len, 4);
                assert_eq!(windows, 1);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn short_signal_is_rejected() {
        let signal = [1.0, 2.0, 3.0];
        let err = segment(&signal, SegmentSpec::new(8, 2).unwrap()).unwrap_err();
        assert!(matches!(err, Error::SignalTooShort { len: 3, window_len: 8 }));
    }

    #[test]
    fn bad_spec_is_rejected() {
        assert!(SegmentSpec::new(4, 0).is_err());
        assert!(SegmentSpec::new(4, 5).is_err());
        assert!(SegmentSpec::new(0, 1).is_err());
        assert!(SegmentSpec::new(4, 4).is_ok());
    }

    #[test]
    fn hop_equal_to_window_partitions_prefix() {
        let signal: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let mat = segment(&signal, SegmentSpec::new(3, 3).unwrap()).unwrap();
        // no shared samples: concatenated columns reproduce the signal prefix
        let mut flat = Vec::new();
        for col in 0..mat.window_count() {
            for row in 0..mat.window_len() {
                flat.push(mat.u[(row, col)]);
            }
        }
        assert_eq!(flat, signal[..flat.len()]);
    }

    proptest! {
        // every entry U[i,n] equals signal[n*hop + i]
        #[test]
        fn coverage(len in 20usize..200, window in 1usize..6, hop_off in 0usize..6) {
            let window_len = window;
            let hop = 1 + hop_off % window_len;
            let signal: Vec<f64> = (0..len).map(|i| (i as f64) * 0.5 - 3.0).collect();
            let spec = SegmentSpec::new(window_len, hop).unwrap();
            if let Ok(mat) = segment(&signal, spec) {
                prop_assert!(mat.window_count() > mat.window_len());
                for col in 0..mat.window_count() {
                    for row in 0..mat.window_len() {
                        prop_assert_eq!(mat.u[(row, col)], signal[col * hop + row]);
                    }
                }
            }
        }
    }
}
