//! Per-vertex feature vectors.
//!
//! Two families: landmark features (reciprocal geodesic distance to each
//! landmark) locate a vertex relative to the landmarks; texture descriptors
//! summarize the surrounding skin texture at several geodesic radii. Both are
//! nonnegative and compared with cosine similarity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesics::{GeodesicBackend, GeodesicField, SearchWorkspace};
use crate::mesh::TexturedMesh;

/// Number of texture radii per vertex.
pub const RADII: usize = 3;

pub const DEFAULT_D_FLOOR_MM: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("vectors have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("descriptor radii differ: {source_mm} mm vs {target_mm} mm")]
    RadiusMismatch { source_mm: f64, target_mm: f64 },
    #[error("descriptor radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("mesh vertex colors have not been resolved")]
    ColorsUnresolved,
    #[error("vertex {index} out of range for a mesh with {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },
    #[error("no landmark fields given")]
    NoLandmarks,
}

/// Cosine similarity of two nonnegative vectors, in [0, 1]. A zero vector has
/// similarity 0 with everything.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, DescriptorError> {
    if a.len() != b.len() {
        return Err(DescriptorError::LengthMismatch(a.len(), b.len()));
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    Ok(cosine_from_parts(ab, aa, bb))
}

/// `ab / sqrt(aa * bb)`. For identical inputs `sqrt(aa * aa) == aa` exactly, so
/// self-similarity is exactly 1.
#[inline]
pub(crate) fn cosine_from_parts(ab: f64, aa: f64, bb: f64) -> f64 {
    if aa <= 0.0 || bb <= 0.0 {
        return 0.0;
    }
    (ab / (aa * bb).sqrt()).clamp(0.0, 1.0)
}

/// Reciprocal geodesic distances from one vertex to every landmark (1/mm).
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFeature {
    pub values: Vec<f64>,
    /// False when no landmark reaches the vertex; all entries are then 0.
    pub reachable: bool,
}

impl LandmarkFeature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Entry `i` is `1 / max(D(v, l_i), d_floor)`; an unreachable landmark
/// contributes 0.
pub fn landmark_feature(
    fields: &[GeodesicField],
    v: usize,
    d_floor: f64,
) -> Result<LandmarkFeature, DescriptorError> {
    if fields.is_empty() {
        return Err(DescriptorError::NoLandmarks);
    }
    let count = fields[0].distances().len();
    if v >= count {
        return Err(DescriptorError::VertexOutOfRange { index: v, count });
    }
    let values: Vec<f64> = fields
        .iter()
        .map(|f| reciprocal(f.distance(v), d_floor))
        .collect();
    let reachable = fields.iter().any(|f| f.is_reachable(v));
    if !reachable {
        log::warn!("vertex {v} is unreachable from every landmark");
    }
    Ok(LandmarkFeature { values, reachable })
}

#[inline]
fn reciprocal(d: f64, d_floor: f64) -> f64 {
    if d.is_finite() {
        1.0 / d.max(d_floor)
    } else {
        0.0
    }
}

/// Landmark features of every vertex of a mesh, stored row-major with the
/// squared norm of each row.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    dim: usize,
    values: Vec<f64>,
    sq_norms: Vec<f64>,
}

impl FeatureTable {
    pub fn build(fields: &[GeodesicField], d_floor: f64) -> Result<Self, DescriptorError> {
        if fields.is_empty() {
            return Err(DescriptorError::NoLandmarks);
        }
        let n = fields[0].distances().len();
        let dim = fields.len();
        let mut values = vec![0.0; n * dim];
        for (i, f) in fields.iter().enumerate() {
            for (v, &d) in f.distances().iter().enumerate() {
                values[v * dim + i] = reciprocal(d, d_floor);
            }
        }
        let sq_norms = values
            .chunks_exact(dim)
            .map(|row| row.iter().map(|x| x * x).sum())
            .collect();
        Ok(Self {
            dim,
            values,
            sq_norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.sq_norms.len()
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.values[v * self.dim..(v + 1) * self.dim]
    }

    /// Vertices reached by at least one landmark.
    pub fn is_reachable(&self, v: usize) -> bool {
        self.sq_norms[v] > 0.0
    }

    /// Cosine similarity between a query vector (with precomputed squared
    /// norm) and row `v`. Same arithmetic as [`cosine_similarity`].
    #[inline]
    pub fn similarity_to(&self, query: &[f64], query_sq_norm: f64, v: usize) -> f64 {
        let ab: f64 = query.iter().zip(self.row(v)).map(|(x, y)| x * y).sum();
        cosine_from_parts(ab, query_sq_norm, self.sq_norms[v])
    }

    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        self.similarity_to(self.row(a), self.sq_norms[a], b)
    }

    pub fn feature(&self, v: usize) -> LandmarkFeature {
        LandmarkFeature {
            values: self.row(v).to_vec(),
            reachable: self.is_reachable(v),
        }
    }
}

/// Histogram over one geodesic patch, L1-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureDescriptor {
    pub radius_mm: f64,
    pub values: Vec<f64>,
}

impl TextureDescriptor {
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// What the intensity axis of the histogram measures.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorChannels {
    /// Rec. 709 luminance.
    #[default]
    Luminance,
    /// Separate R, G and B histograms side by side.
    Rgb,
}

impl fmt::Display for ColorChannels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Luminance => "luminance",
            Self::Rgb => "rgb",
        })
    }
}

impl FromStr for ColorChannels {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "luminance" => Ok(Self::Luminance),
            "rgb" => Ok(Self::Rgb),
            other => Err(format!("unknown color channel mode {other:?}")),
        }
    }
}

pub fn luminance(c: [f64; 3]) -> f64 {
    0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]
}

/// Bin counts of the radial-shell × intensity histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBins {
    pub radial: usize,
    pub intensity: usize,
}

impl Default for HistogramBins {
    fn default() -> Self {
        Self {
            radial: 4,
            intensity: 16,
        }
    }
}

/// A local texture descriptor evaluated at three radii. Implementations must
/// be deterministic, nonnegative and invariant under vertex renumbering.
pub trait LocalTextureDescriptor: Send + Sync {
    fn radii(&self) -> [f64; RADII];

    fn describe(
        &self,
        mesh: &TexturedMesh,
        v: usize,
        ws: &mut SearchWorkspace,
    ) -> Result<[TextureDescriptor; RADII], DescriptorError>;
}

/// Rotation-invariant reference descriptor: a 2D histogram over (radial
/// shell, intensity bin) of the geodesic disk around the vertex, each vertex
/// weighted by its Voronoi area and every nonempty shell carrying equal
/// mass. No angular binning, so no reference direction is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialHistogram {
    pub radii: [f64; RADII],
    pub bins: HistogramBins,
    pub channels: ColorChannels,
    pub backend: GeodesicBackend,
}

impl RadialHistogram {
    pub fn dimension(&self) -> usize {
        let per_channel = self.bins.radial * self.bins.intensity;
        match self.channels {
            ColorChannels::Luminance => per_channel,
            ColorChannels::Rgb => per_channel * 3,
        }
    }

    fn histogram(
        &self,
        mesh: &TexturedMesh,
        patch: &[(usize, f64)],
        radius: f64,
        colors: &[[f64; 3]],
    ) -> TextureDescriptor {
        let HistogramBins { radial, intensity } = self.bins;
        let areas = mesh.vertex_areas();
        let mut values = vec![0.0; self.dimension()];
        let bin = |x: f64| ((x * intensity as f64) as usize).min(intensity - 1);
        for &(u, d) in patch {
            if d > radius {
                break;
            }
            let shell = ((d / radius * radial as f64) as usize).min(radial - 1);
            let area = areas[u];
            match self.channels {
                ColorChannels::Luminance => {
                    values[shell * intensity + bin(luminance(colors[u]))] += area;
                }
                ColorChannels::Rgb => {
                    for (ch, &x) in colors[u].iter().enumerate() {
                        values[(shell * 3 + ch) * intensity + bin(x)] += area / 3.0;
                    }
                }
            }
        }
        // Each shell is normalized on its own so that the small inner shells,
        // where a lesion shows, weigh as much as the large outer ones.
        let shell_len = values.len() / radial;
        for shell in values.chunks_mut(shell_len) {
            let mass: f64 = shell.iter().sum();
            if mass > 0.0 {
                shell.iter_mut().for_each(|x| *x /= mass);
            }
        }
        let total: f64 = values.iter().sum();
        if total > 0.0 {
            for x in &mut values {
                *x /= total;
            }
        }
        TextureDescriptor {
            radius_mm: radius,
            values,
        }
    }

    /// Patch of `v` up to the largest radius, sorted by distance.
    fn patch(
        &self,
        mesh: &TexturedMesh,
        v: usize,
        radius: f64,
        ws: &mut SearchWorkspace,
    ) -> Result<Vec<(usize, f64)>, DescriptorError> {
        if v >= mesh.vertex_count() {
            return Err(DescriptorError::VertexOutOfRange {
                index: v,
                count: mesh.vertex_count(),
            });
        }
        let mut patch = Vec::new();
        ws.propagate(mesh, &[v], radius, self.backend, |u, d| patch.push((u, d)));
        Ok(patch)
    }
}

impl LocalTextureDescriptor for RadialHistogram {
    fn radii(&self) -> [f64; RADII] {
        self.radii
    }

    fn describe(
        &self,
        mesh: &TexturedMesh,
        v: usize,
        ws: &mut SearchWorkspace,
    ) -> Result<[TextureDescriptor; RADII], DescriptorError> {
        for &r in &self.radii {
            if r.is_nan() || r <= 0.0 {
                return Err(DescriptorError::InvalidRadius(r));
            }
        }
        let colors = mesh
            .vertex_colors()
            .ok_or(DescriptorError::ColorsUnresolved)?;
        let max_radius = self.radii.iter().copied().fold(0.0, f64::max);
        let patch = self.patch(mesh, v, max_radius, ws)?;
        Ok(self.radii.map(|r| self.histogram(mesh, &patch, r, colors)))
    }
}

/// Single-radius descriptor of vertex `v` with the reference histogram.
pub fn texture_descriptor(
    mesh: &TexturedMesh,
    v: usize,
    radius: f64,
    bins: HistogramBins,
) -> Result<TextureDescriptor, DescriptorError> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(DescriptorError::InvalidRadius(radius));
    }
    let colors = mesh
        .vertex_colors()
        .ok_or(DescriptorError::ColorsUnresolved)?;
    let h = RadialHistogram {
        radii: [radius; RADII],
        bins,
        channels: ColorChannels::Luminance,
        backend: GeodesicBackend::Dijkstra,
    };
    let mut ws = SearchWorkspace::new(mesh.vertex_count());
    let patch = h.patch(mesh, v, radius, &mut ws)?;
    Ok(h.histogram(mesh, &patch, radius, colors))
}

/// Weighted sum of per-radius cosine similarities, in [0, 1] for convex weights.
pub fn texture_score(
    source: &[TextureDescriptor; RADII],
    target: &[TextureDescriptor; RADII],
    weights: [f64; RADII],
) -> Result<f64, DescriptorError> {
    let mut score = 0.0;
    for i in 0..RADII {
        if source[i].radius_mm != target[i].radius_mm {
            return Err(DescriptorError::RadiusMismatch {
                source_mm: source[i].radius_mm,
                target_mm: target[i].radius_mm,
            });
        }
        score += weights[i] * cosine_similarity(&source[i].values, &target[i].values)?;
    }
    Ok(score.clamp(0.0, 1.0))
}
