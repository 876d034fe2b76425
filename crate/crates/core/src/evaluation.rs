//! Localization error against ground truth, success rates and reports.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::LesionSet;
use crate::geodesics::{distance_between, GeodesicBackend, GeodesicError};
use crate::mesh::TexturedMesh;
use crate::pipeline::CorrespondenceRecord;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("no localization errors to summarize")]
    Empty,
    #[error("criterion must be positive, got {0}")]
    InvalidCriterion(f64),
    #[error("lesion `{0}` has no ground-truth entry")]
    MissingGroundTruth(String),
    #[error("ground-truth lesion `{0}` has no correspondence record")]
    MissingRecord(String),
    #[error("lesion `{0}` appears in more than one record")]
    DuplicateRecord(String),
    #[error("reports use different criteria and cannot be aggregated")]
    CriteriaMismatch,
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse report: {0}")]
    Json(#[from] serde_json::Error),
}

/// Serializes non-finite values (an unreachable match) as `null`.
mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Correspondence localization error: geodesic distance on the target
/// between the estimated and the true vertex.
pub fn cle(
    target: &TexturedMesh,
    estimated: usize,
    ground_truth: usize,
    backend: GeodesicBackend,
) -> Result<f64, GeodesicError> {
    distance_between(target, estimated, ground_truth, backend)
}

/// Fraction of errors strictly below `criterion`.
pub fn success_rate(cles: &[f64], criterion: f64) -> Result<f64, EvaluationError> {
    if cles.is_empty() {
        return Err(EvaluationError::Empty);
    }
    if criterion.is_nan() || criterion <= 0.0 {
        return Err(EvaluationError::InvalidCriterion(criterion));
    }
    let hits = cles.iter().filter(|&&c| c < criterion).count();
    Ok(hits as f64 / cles.len() as f64)
}

/// 1, 2, ..., 50 mm.
pub fn default_criteria() -> Vec<f64> {
    (1..=50).map(f64::from).collect()
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoiError {
    pub label: String,
    #[serde(with = "finite_or_null")]
    pub cle_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessPoint {
    pub criterion_mm: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// The pipeline config that produced the records.
    pub config: serde_json::Value,
    /// Geodesic backend used for the errors.
    pub backend: GeodesicBackend,
    pub per_loi: Vec<LoiError>,
    #[serde(with = "finite_or_null")]
    pub mean_cle_mm: f64,
    #[serde(with = "finite_or_null")]
    pub std_cle_mm: f64,
    pub success: Vec<SuccessPoint>,
}

fn io_error(path: &Path, e: std::io::Error) -> EvaluationError {
    EvaluationError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Curve as `criterion_mm,rate` lines with a header.
pub fn curve_csv(points: &[SuccessPoint]) -> String {
    let mut out = String::from("criterion_mm,rate\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.criterion_mm, p.rate));
    }
    out
}

impl EvaluationReport {
    /// Scores `records` against `ground_truth`, whose labels must match the
    /// record labels one-to-one.
    pub fn build(
        records: &[CorrespondenceRecord],
        ground_truth: &LesionSet,
        target: &TexturedMesh,
        criteria: &[f64],
        backend: GeodesicBackend,
        config: serde_json::Value,
    ) -> Result<Self, EvaluationError> {
        if records.is_empty() {
            return Err(EvaluationError::Empty);
        }
        let mut seen = BTreeSet::new();
        for r in records {
            if !seen.insert(r.loi_label.as_str()) {
                return Err(EvaluationError::DuplicateRecord(r.loi_label.clone()));
            }
        }
        let truth: HashMap<&str, usize> = ground_truth
            .entries()
            .iter()
            .map(|e| (e.label.as_str(), e.vertex))
            .collect();
        if let Some(r) = records
            .iter()
            .find(|r| !truth.contains_key(r.loi_label.as_str()))
        {
            return Err(EvaluationError::MissingGroundTruth(r.loi_label.clone()));
        }
        if let Some(e) = ground_truth
            .entries()
            .iter()
            .find(|e| !seen.contains(e.label.as_str()))
        {
            return Err(EvaluationError::MissingRecord(e.label.clone()));
        }
        let per_loi = records
            .par_iter()
            .map(|r| {
                let gt = truth[r.loi_label.as_str()];
                Ok(LoiError {
                    label: r.loi_label.clone(),
                    cle_mm: cle(target, r.target_vertex, gt, backend)?,
                })
            })
            .collect::<Result<Vec<_>, EvaluationError>>()?;
        Self::from_errors(per_loi, criteria, backend, config)
    }

    pub fn from_errors(
        per_loi: Vec<LoiError>,
        criteria: &[f64],
        backend: GeodesicBackend,
        config: serde_json::Value,
    ) -> Result<Self, EvaluationError> {
        let cles: Vec<f64> = per_loi.iter().map(|e| e.cle_mm).collect();
        let success = criteria
            .iter()
            .map(|&c| {
                Ok(SuccessPoint {
                    criterion_mm: c,
                    rate: success_rate(&cles, c)?,
                })
            })
            .collect::<Result<Vec<_>, EvaluationError>>()?;
        let (mean_cle_mm, std_cle_mm) = mean_std(&cles);
        Ok(Self {
            config,
            backend,
            per_loi,
            mean_cle_mm,
            std_cle_mm,
            success,
        })
    }

    pub fn rate_at(&self, criterion: f64) -> Option<f64> {
        self.success
            .iter()
            .find(|p| p.criterion_mm == criterion)
            .map(|p| p.rate)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvaluationError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), EvaluationError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| io_error(path, e))
    }

    pub fn write_curve_csv(&self, path: impl AsRef<Path>) -> Result<(), EvaluationError> {
        let path = path.as_ref();
        std::fs::write(path, curve_csv(&self.success)).map_err(|e| io_error(path, e))
    }
}

/// Success rate at one criterion across several scan pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub criterion_mm: f64,
    pub mean_rate: f64,
    pub std_rate: f64,
}

/// Cross-pair summary: mean and standard deviation of the per-pair values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub pairs: usize,
    #[serde(with = "finite_or_null")]
    pub mean_cle_mm: f64,
    #[serde(with = "finite_or_null")]
    pub std_cle_mm: f64,
    pub success: Vec<AggregatePoint>,
}

pub fn aggregate(reports: &[EvaluationReport]) -> Result<AggregateReport, EvaluationError> {
    let first = reports.first().ok_or(EvaluationError::Empty)?;
    let criteria: Vec<f64> = first.success.iter().map(|p| p.criterion_mm).collect();
    for r in reports {
        let c: Vec<f64> = r.success.iter().map(|p| p.criterion_mm).collect();
        if c != criteria {
            return Err(EvaluationError::CriteriaMismatch);
        }
    }
    let success = criteria
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let rates: Vec<f64> = reports.iter().map(|r| r.success[i].rate).collect();
            let (mean_rate, std_rate) = mean_std(&rates);
            AggregatePoint {
                criterion_mm: c,
                mean_rate,
                std_rate,
            }
        })
        .collect();
    let means: Vec<f64> = reports.iter().map(|r| r.mean_cle_mm).collect();
    let (mean_cle_mm, std_cle_mm) = mean_std(&means);
    Ok(AggregateReport {
        pairs: reports.len(),
        mean_cle_mm,
        std_cle_mm,
        success,
    })
}
