//! Landmark and lesion annotations.
//!
//! Both kinds share one JSON schema:
//!
//! ```json
//! {"landmarks": [{"label": "left_wrist", "vertex": 123},
//!                {"label": "navel", "point": [10.0, 4.5, 900.0]}],
//!  "lesions":   [{"label": "m3", "vertex": 4711}]}
//! ```
//!
//! Entries given as a 3D point are snapped to the nearest vertex.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Point3, TexturedMesh};

/// Snaps farther than this are rejected unless the caller overrides it.
pub const DEFAULT_SNAP_LIMIT_MM: f64 = 5.0;

/// Minimum number of landmarks accepted by the pipeline.
pub const MIN_LANDMARKS: usize = 4;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid annotation JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("entry {label:?} must have exactly one of \"vertex\" or \"point\"")]
    AmbiguousEntry { label: String },
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("entry {label:?} references vertex {vertex}, but the mesh has {count} vertices")]
    VertexOutOfRange {
        label: String,
        vertex: usize,
        count: usize,
    },
    #[error(
        "entry {label:?} snapped {distance:.3} mm from its point, beyond the {limit} mm limit"
    )]
    SnapTooFar {
        label: String,
        distance: f64,
        limit: f64,
    },
    #[error("{count} landmarks given; at least {MIN_LANDMARKS} are required")]
    TooFewLandmarks { count: usize },
    #[error("landmark vertex {0} appears more than once")]
    DuplicateLandmark(usize),
    #[error("source has {source_count} landmarks but target has {target_count}")]
    LandmarkCountMismatch {
        source_count: usize,
        target_count: usize,
    },
    #[error("landmark {index} is labelled {source_label:?} on the source but {target_label:?} on the target")]
    LandmarkLabelMismatch {
        index: usize,
        source_label: String,
        target_label: String,
    },
    #[error("mesh has no vertices")]
    EmptyMesh,
}

/// One JSON entry: a label plus either a vertex index or a 3D point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Point3>,
}

impl AnnotationEntry {
    pub fn at_vertex(label: impl Into<String>, vertex: usize) -> Self {
        Self {
            label: label.into(),
            vertex: Some(vertex),
            point: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    #[serde(default)]
    pub landmarks: Vec<AnnotationEntry>,
    #[serde(default)]
    pub lesions: Vec<AnnotationEntry>,
}

impl AnnotationFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| AnnotationError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AnnotationError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("annotations serialize");
        fs::write(path, text + "\n").map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn from_sets(landmarks: Option<&LandmarkSet>, lesions: Option<&LesionSet>) -> Self {
        let landmarks = landmarks
            .map(|l| {
                l.vertices()
                    .iter()
                    .zip(l.labels())
                    .map(|(&v, label)| AnnotationEntry::at_vertex(label.clone(), v))
                    .collect()
            })
            .unwrap_or_default();
        let lesions = lesions
            .map(|l| {
                l.entries()
                    .iter()
                    .map(|e| AnnotationEntry::at_vertex(e.label.clone(), e.vertex))
                    .collect()
            })
            .unwrap_or_default();
        Self { landmarks, lesions }
    }
}

/// How an annotated vertex was specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Vertex,
    Snapped { point: Point3, distance_mm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedEntry {
    pub label: String,
    pub vertex: usize,
    pub provenance: Provenance,
}

fn resolve_entries(
    entries: &[AnnotationEntry],
    mesh: &TexturedMesh,
    snap_limit: f64,
) -> Result<Vec<ResolvedEntry>, AnnotationError> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        if !seen.insert(e.label.as_str()) {
            return Err(AnnotationError::DuplicateLabel(e.label.clone()));
        }
        let resolved = match (e.vertex, e.point) {
            (Some(vertex), None) => {
                if vertex >= mesh.vertex_count() {
                    return Err(AnnotationError::VertexOutOfRange {
                        label: e.label.clone(),
                        vertex,
                        count: mesh.vertex_count(),
                    });
                }
                ResolvedEntry {
                    label: e.label.clone(),
                    vertex,
                    provenance: Provenance::Vertex,
                }
            }
            (None, Some(point)) => {
                let snap = mesh
                    .snap_point_to_vertex(point)
                    .map_err(|_| AnnotationError::EmptyMesh)?;
                if snap.distance > snap_limit {
                    return Err(AnnotationError::SnapTooFar {
                        label: e.label.clone(),
                        distance: snap.distance,
                        limit: snap_limit,
                    });
                }
                ResolvedEntry {
                    label: e.label.clone(),
                    vertex: snap.vertex,
                    provenance: Provenance::Snapped {
                        point,
                        distance_mm: snap.distance,
                    },
                }
            }
            _ => {
                return Err(AnnotationError::AmbiguousEntry {
                    label: e.label.clone(),
                })
            }
        };
        out.push(resolved);
    }
    Ok(out)
}

/// Lesions of interest (on a source scan) or their ground-truth positions (on a target scan).
#[derive(Debug, Clone, PartialEq)]
pub struct LesionSet {
    entries: Vec<ResolvedEntry>,
}

impl LesionSet {
    pub fn resolve(
        entries: &[AnnotationEntry],
        mesh: &TexturedMesh,
        snap_limit: f64,
    ) -> Result<Self, AnnotationError> {
        Ok(Self {
            entries: resolve_entries(entries, mesh, snap_limit)?,
        })
    }

    /// Builds a set from `(label, vertex)` pairs already known to be valid for
    /// some mesh. Labels must be unique.
    pub fn from_vertices(
        items: impl IntoIterator<Item = (String, usize)>,
    ) -> Result<Self, AnnotationError> {
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for (label, vertex) in items {
            if !seen.insert(label.clone()) {
                return Err(AnnotationError::DuplicateLabel(label));
            }
            entries.push(ResolvedEntry {
                label,
                vertex,
                provenance: Provenance::Vertex,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ResolvedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&ResolvedEntry> {
        self.entries.iter().find(|e| e.label == label)
    }
}

/// Ordered landmark vertices. Position `i` on a source set and position `i` on
/// the matching target set denote the same anatomical landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    vertices: Vec<usize>,
    labels: Vec<String>,
}

impl LandmarkSet {
    pub fn new(vertices: Vec<usize>, vertex_count: usize) -> Result<Self, AnnotationError> {
        let labels = (0..vertices.len())
            .map(|i| format!("landmark_{i}"))
            .collect();
        Self::with_labels(vertices, labels, vertex_count)
    }

    pub fn with_labels(
        vertices: Vec<usize>,
        labels: Vec<String>,
        vertex_count: usize,
    ) -> Result<Self, AnnotationError> {
        assert_eq!(vertices.len(), labels.len(), "one label per landmark");
        if vertices.len() < MIN_LANDMARKS {
            return Err(AnnotationError::TooFewLandmarks {
                count: vertices.len(),
            });
        }
        if vertices.len() < 10 {
            log::warn!(
                "only {} landmarks; coarse matching is unreliable below 10",
                vertices.len()
            );
        }
        let mut seen = HashSet::new();
        for (&v, label) in vertices.iter().zip(&labels) {
            if v >= vertex_count {
                return Err(AnnotationError::VertexOutOfRange {
                    label: label.clone(),
                    vertex: v,
                    count: vertex_count,
                });
            }
            if !seen.insert(v) {
                return Err(AnnotationError::DuplicateLandmark(v));
            }
        }
        Ok(Self { vertices, labels })
    }

    pub fn resolve(
        entries: &[AnnotationEntry],
        mesh: &TexturedMesh,
        snap_limit: f64,
    ) -> Result<Self, AnnotationError> {
        let resolved = resolve_entries(entries, mesh, snap_limit)?;
        let (labels, vertices) = resolved.into_iter().map(|e| (e.label, e.vertex)).unzip();
        Self::with_labels(vertices, labels, mesh.vertex_count())
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, vertex: usize) -> bool {
        self.vertices.contains(&vertex)
    }

    /// Checks that two sets can be used together: equal length, and equal
    /// labels wherever both carry user-supplied labels.
    pub fn check_aligned(&self, target: &LandmarkSet) -> Result<(), AnnotationError> {
        if self.len() != target.len() {
            return Err(AnnotationError::LandmarkCountMismatch {
                source_count: self.len(),
                target_count: target.len(),
            });
        }
        for (i, (a, b)) in self.labels.iter().zip(&target.labels).enumerate() {
            if a != b {
                return Err(AnnotationError::LandmarkLabelMismatch {
                    index: i,
                    source_label: a.clone(),
                    target_label: b.clone(),
                });
            }
        }
        Ok(())
    }
}
