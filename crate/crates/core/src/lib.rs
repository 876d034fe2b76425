//! Matching skin lesions between two textured 3D scans of the same person.
//!
//! Corresponding landmarks on both scans give every vertex a position
//! signature (its geodesic distances to the landmarks). A lesion is first
//! matched by that signature, then refined by comparing local skin texture
//! inside a geodesic neighborhood of the first guess. Confident matches are
//! promoted to landmarks and the remaining lesions are matched again.

pub mod annotations;
pub mod correspondence;
pub mod descriptors;
pub mod evaluation;
pub mod geodesics;
pub mod mesh;
pub mod obj;
pub mod pipeline;
pub mod synth;

pub use annotations::{AnnotationEntry, AnnotationFile, LandmarkSet, LesionSet};
pub use geodesics::{GeodesicBackend, GeodesicField};
pub use mesh::TexturedMesh;
pub use pipeline::{CorrespondenceRecord, Method, PipelineConfig, ScanPair};
