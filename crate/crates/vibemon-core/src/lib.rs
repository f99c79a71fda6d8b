//! Vibration-based bearing degradation detection.
//!
//! The pipeline turns raw accelerometer snapshots into a health verdict:
//!
//! 1. [`ingest`] loads run-to-failure snapshot files into channel signals.
//! 2. [`segment`] slices each signal into a matrix of overlapping windows.
//! 3. [`pca`] projects windows onto the dominant eigenvectors of their
//!    covariance, compressing each snapshot into a short feature vector.
//! 4. [`cluster`] groups healthy feature vectors with k-means and picks the
//!    state count via the elbow of the WCSS curve.
//! 5. [`hmm`] fits a Gaussian-emission hidden Markov model to the healthy
//!    features with Baum-Welch.
//! 6. [`detector`] scores later snapshots by HMM log-likelihood, normalizes
//!    against the healthy baseline, and raises alarms on the left tail.
//! 7. [`synth`] generates synthetic run-to-failure datasets for testing.

pub mod cluster;
pub mod detector;
pub mod eigen;
pub mod error;
pub mod hmm;
pub mod ingest;
pub mod pca;
pub mod segment;
pub mod shapiro;
pub mod synth;

pub use error::{Error, Result};
