//! On-disk model artifact. JSON with shortest-round-trip number formatting,
//! so every f64 survives save/load bit-exactly. Writes go through a
//! temporary file and an atomic rename; a failed save never leaves a
//! partial model behind.

use crate::config::PipelineConfig;
use anyhow::{bail, Context};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use vibemon_core::detector::{BearingModel, HealthBaseline};
use vibemon_core::hmm::HmmModel;
use vibemon_core::ingest::DatasetCatalog;
use vibemon_core::pca::ProjectionMatrix;
use vibemon_core::segment::SegmentSpec;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeDto {
    pub first: usize,
    pub last: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDto {
    /// 1-based file column this projection was fit on
    pub channel: usize,
    pub p: usize,
    pub m: usize,
    /// training window mean; absent when centering was off
    pub mean: Option<Vec<f64>>,
    /// full covariance spectrum, descending
    pub eigenvalues: Vec<f64>,
    /// p rows of m loadings each
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmDto {
    pub a: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
    pub var_floor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineDto {
    pub mean_ll: f64,
    pub std_ll: f64,
    pub n: usize,
    pub shapiro_w: f64,
    pub shapiro_p: f64,
    pub normality_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub tool_version: String,
    pub created_utc: String,
    /// SHA-256 over the sorted (filename, size) list of the training dataset
    pub dataset_fingerprint: String,
    pub bearing: String,
    pub config: PipelineConfig,
    pub training_range: RangeDto,
    pub projections: Vec<ProjectionDto>,
    pub hmm: HmmDto,
    pub baseline: BaselineDto,
}

fn matrix_to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> anyhow::Result<Array2<f64>> {
    if rows.is_empty() {
        bail!("{what} has no rows");
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        bail!("{what} rows are ragged");
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), cols), flat)?)
}

impl ProjectionDto {
    pub fn from_core(proj: &ProjectionMatrix, channel: usize) -> Self {
        ProjectionDto {
            channel,
            p: proj.p,
            m: proj.m,
            mean: proj.mean.as_ref().map(|m| m.to_vec()),
            eigenvalues: proj.eigenvalues.to_vec(),
            rows: matrix_to_rows(&proj.w),
        }
    }

    pub fn to_core(&self) -> anyhow::Result<ProjectionMatrix> {
        let w = rows_to_matrix(&self.rows, "projection")?;
        if w.nrows() != self.p || w.ncols() != self.m {
            bail!(
                "projection for channel {} declares {}x{} but stores {}x{}",
                self.channel,
                self.p,
                self.m,
                w.nrows(),
                w.ncols()
            );
        }
        Ok(ProjectionMatrix {
            channel_label: format!("ch{}", self.channel),
            p: self.p,
            m: self.m,
            w,
            eigenvalues: Array1::from_vec(self.eigenvalues.clone()),
            mean: self.mean.as_ref().map(|m| Array1::from_vec(m.clone())),
        })
    }
}

impl HmmDto {
    pub fn from_core(model: &HmmModel) -> Self {
        HmmDto {
            a: matrix_to_rows(&model.a),
            pi: model.pi.to_vec(),
            means: matrix_to_rows(&model.means),
            vars: matrix_to_rows(&model.vars),
            var_floor: model.var_floor.to_vec(),
        }
    }

    pub fn to_core(&self) -> anyhow::Result<HmmModel> {
        Ok(HmmModel::new(
            rows_to_matrix(&self.a, "transition matrix")?,
            Array1::from_vec(self.pi.clone()),
            rows_to_matrix(&self.means, "emission means")?,
            rows_to_matrix(&self.vars, "emission variances")?,
            Array1::from_vec(self.var_floor.clone()),
        )?)
    }
}

impl BaselineDto {
    pub fn from_core(b: &HealthBaseline) -> Self {
        BaselineDto {
            mean_ll: b.mean_ll,
            std_ll: b.std_ll,
            n: b.n,
            shapiro_w: b.shapiro_w,
            shapiro_p: b.shapiro_p,
            normality_ok: b.normality_ok,
        }
    }

    pub fn to_core(&self) -> HealthBaseline {
        HealthBaseline {
            mean_ll: self.mean_ll,
            std_ll: self.std_ll,
            n: self.n,
            shapiro_w: self.shapiro_w,
            shapiro_p: self.shapiro_p,
            normality_ok: self.normality_ok,
        }
    }
}

impl ModelFile {
    /// Rebuilds the runtime model and re-validates the full dimension chain.
    pub fn to_bearing_model(&self) -> anyhow::Result<BearingModel> {
        let spec = SegmentSpec::new(self.config.window_len, self.config.hop)?;
        let projections = self
            .projections
            .iter()
            .map(|p| p.to_core())
            .collect::<anyhow::Result<Vec<_>>>()?;
        let model = BearingModel {
            spec,
            projections,
            hmm: self.hmm.to_core()?,
            baseline: self.baseline.to_core(),
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(path: &Path, model: &ModelFile) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(model)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .context("model path has no file name")?;
    let tmp = match dir {
        Some(d) => d.join(format!(".{file_name}.tmp")),
        None => Path::new(&format!(".{file_name}.tmp")).to_path_buf(),
    };
    std::fs::write(&tmp, json.as_bytes())
        .with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move model into place at {}", path.display()))?;
    Ok(())
}

pub fn load_model(path: &Path) -> anyhow::Result<ModelFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read model {}", path.display()))?;
    let model: ModelFile = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse model {}", path.display()))?;
    if model.format_version != MODEL_FORMAT_VERSION {
        bail!(
            "model {} has format version {}, this build reads {}",
            path.display(),
            model.format_version,
            MODEL_FORMAT_VERSION
        );
    }
    Ok(model)
}

/// SHA-256 over the catalog's (filename, size) pairs in catalog order;
/// identifies the dataset a model was trained on without hashing gigabytes.
pub fn dataset_fingerprint(catalog: &DatasetCatalog) -> anyhow::Result<String> {
    let mut hasher = Sha256::new();
    for snap in &catalog.snapshots {
        let name = snap
            .path
            .file_name()
            .and_then(|n| n.to_str())
            .context("snapshot path has no file name")?;
        let size = std::fs::metadata(&snap.path)?.len();
        hasher.update(name.as_bytes());
        hasher.update(b":");
        hasher.update(size.to_string().as_bytes());
        hasher.update(b"\n");
    }
    Ok(format!("{:x}", hasher.finalize()))
}
