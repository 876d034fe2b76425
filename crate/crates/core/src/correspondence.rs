//! Source-to-target vertex matching.
//!
//! * [`coarse_match`]: the target vertex whose landmark feature is most similar.
//! * [`build_region`]: target vertices near the coarse match, or with a landmark
//!   feature similar to it.
//! * [`refine_match`]: the region member with the best texture score.
//! * [`combined_match`]: the region member maximizing a weighted sum of a
//!   Gaussian geometric score and the texture score.
//!
//! Every argmax breaks ties toward the lowest vertex index.

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{
    texture_score, DescriptorError, FeatureTable, LandmarkFeature, TextureDescriptor, RADII,
};
use crate::geodesics::{single_source_field_with, GeodesicBackend, GeodesicError, GeodesicField};
use crate::mesh::TexturedMesh;

#[derive(Debug, Error, PartialEq)]
pub enum CorrespondenceError {
    #[error("no target vertex is reachable from the landmarks")]
    EmptyTarget,
    #[error("source feature has {source_dim} entries but target features have {target_dim}")]
    FeatureDimension {
        source_dim: usize,
        target_dim: usize,
    },
    #[error("expected {expected} scores (one per region member), got {actual}")]
    ScoreCount { expected: usize, actual: usize },
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

/// Candidate target vertices for one source vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub anchor: usize,
    /// Sorted ascending.
    pub members: Vec<usize>,
    pub epsilon1: f64,
    pub epsilon2: f64,
}

impl SearchRegion {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }

    pub fn position(&self, v: usize) -> Option<usize> {
        self.members.binary_search(&v).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub vertex: usize,
    pub texture_score: f64,
    pub geometric_score: f64,
    pub combined_score: f64,
}

/// Argmax of landmark-feature cosine similarity over reachable target vertices.
pub fn coarse_match(
    source_feature: &LandmarkFeature,
    target: &FeatureTable,
) -> Result<usize, CorrespondenceError> {
    if source_feature.len() != target.dim() {
        return Err(CorrespondenceError::FeatureDimension {
            source_dim: source_feature.len(),
            target_dim: target.dim(),
        });
    }
    let query = &source_feature.values;
    let query_sq: f64 = query.iter().map(|x| x * x).sum();
    let mut best: Option<(usize, f64)> = None;
    for v in 0..target.vertex_count() {
        if !target.is_reachable(v) {
            continue;
        }
        let s = target.similarity_to(query, query_sq, v);
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((v, s)),
        }
    }
    best.map(|(v, _)| v).ok_or(CorrespondenceError::EmptyTarget)
}

/// Region from a precomputed field rooted at the anchor: members are within
/// geodesic distance `epsilon1` of the anchor, or have landmark-feature
/// similarity to the anchor above `epsilon2`. Unreachable vertices never join.
pub fn region_from_field(
    anchor_field: &GeodesicField,
    features: &FeatureTable,
    epsilon1: f64,
    epsilon2: f64,
) -> SearchRegion {
    let anchor = anchor_field.source();
    let distances = anchor_field.distances();
    let anchor_row = features.row(anchor);
    let anchor_sq: f64 = anchor_row.iter().map(|x| x * x).sum();
    let members = (0..distances.len())
        .filter(|&v| {
            distances[v] < epsilon1
                || (features.is_reachable(v)
                    && features.similarity_to(anchor_row, anchor_sq, v) > epsilon2)
        })
        .collect();
    SearchRegion {
        anchor,
        members,
        epsilon1,
        epsilon2,
    }
}

pub fn build_region(
    target: &TexturedMesh,
    anchor: usize,
    features: &FeatureTable,
    epsilon1: f64,
    epsilon2: f64,
    backend: GeodesicBackend,
) -> Result<SearchRegion, CorrespondenceError> {
    let field = single_source_field_with(target, anchor, backend)?;
    Ok(region_from_field(&field, features, epsilon1, epsilon2))
}

/// Index into `region.members` of the highest score; first wins on ties.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_scores(region: &SearchRegion, scores: &[f64]) -> Result<(), CorrespondenceError> {
    if scores.len() != region.len() || region.is_empty() {
        return Err(CorrespondenceError::ScoreCount {
            expected: region.len(),
            actual: scores.len(),
        });
    }
    Ok(())
}

/// Texture score of every region member against the source descriptors.
pub fn member_texture_scores<D>(
    source: &[TextureDescriptor; RADII],
    member_descriptors: &[D],
    weights: [f64; RADII],
) -> Result<Vec<f64>, CorrespondenceError>
where
    D: Borrow<[TextureDescriptor; RADII]>,
{
    member_descriptors
        .iter()
        .map(|d| Ok(texture_score(source, d.borrow(), weights)?))
        .collect()
}

/// Best member by precomputed texture score.
pub fn refine_from_scores(
    region: &SearchRegion,
    texture_scores: &[f64],
) -> Result<MatchCandidate, CorrespondenceError> {
    check_scores(region, texture_scores)?;
    let i = argmax(texture_scores);
    Ok(MatchCandidate {
        vertex: region.members[i],
        texture_score: texture_scores[i],
        geometric_score: f64::NAN,
        combined_score: texture_scores[i],
    })
}

/// Region member whose descriptors best match the source descriptors.
/// `member_descriptors[i]` belongs to `region.members[i]`.
pub fn refine_match<D>(
    source: &[TextureDescriptor; RADII],
    region: &SearchRegion,
    member_descriptors: &[D],
    weights: [f64; RADII],
) -> Result<MatchCandidate, CorrespondenceError>
where
    D: Borrow<[TextureDescriptor; RADII]>,
{
    let scores = member_texture_scores(source, member_descriptors, weights)?;
    refine_from_scores(region, &scores)
}

/// `exp(-d² / 2σ²)`. A degenerate `sigma` (all members on the anchor) scores 1.
#[inline]
pub fn gaussian_score(d: f64, sigma: f64) -> f64 {
    if sigma.is_nan() || sigma <= 0.0 {
        return 1.0;
    }
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Geometric score of `v` given the field rooted at the coarse match.
pub fn geometric_score(coarse_field: &GeodesicField, v: usize, sigma: f64) -> f64 {
    gaussian_score(coarse_field.distance(v), sigma)
}

/// Largest member distance from the anchor.
pub fn region_sigma(member_distances: &[f64]) -> f64 {
    member_distances.iter().copied().fold(0.0, f64::max)
}

/// Argmax over the region of `w_geo * geometric + w_tex * texture`.
pub fn combined_match(
    region: &SearchRegion,
    texture_scores: &[f64],
    geometric_scores: &[f64],
    w_geo: f64,
    w_tex: f64,
) -> Result<MatchCandidate, CorrespondenceError> {
    check_scores(region, texture_scores)?;
    check_scores(region, geometric_scores)?;
    let combined: Vec<f64> = geometric_scores
        .iter()
        .zip(texture_scores)
        .map(|(g, t)| w_geo * g + w_tex * t)
        .collect();
    let i = argmax(&combined);
    Ok(MatchCandidate {
        vertex: region.members[i],
        texture_score: texture_scores[i],
        geometric_score: geometric_scores[i],
        combined_score: combined[i],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesics::single_source_field;
    use approx::assert_relative_eq;

    fn region(members: Vec<usize>) -> SearchRegion {
        SearchRegion {
            anchor: members[0],
            members,
            epsilon1: 1.0,
            epsilon2: 0.5,
        }
    }

    #[test]
    fn gaussian_closed_forms() {
        assert_eq!(gaussian_score(0.0, 5.0), 1.0);
        assert_relative_eq!(gaussian_score(5.0, 5.0), (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(
            gaussian_score(10.0, 5.0),
            0.1353352832366127,
            epsilon = 1e-15
        );
        assert_eq!(gaussian_score(3.0, 0.0), 1.0);
    }

    #[test]
    fn singleton_region_returns_anchor() {
        let r = region(vec![7]);
        assert_eq!(refine_from_scores(&r, &[0.01]).unwrap().vertex, 7);
        assert_eq!(
            combined_match(&r, &[0.0], &[0.0], 0.5, 0.5).unwrap().vertex,
            7
        );
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let r = region(vec![2, 5, 9]);
        assert_eq!(refine_from_scores(&r, &[0.3, 0.9, 0.9]).unwrap().vertex, 5);
        let c = combined_match(&r, &[0.2, 0.4, 0.4], &[0.6, 0.4, 0.4], 0.5, 0.5).unwrap();
        assert_eq!(c.vertex, 2);
    }

    #[test]
    fn combined_degenerate_weights() {
        let r = region(vec![1, 2, 3]);
        let tex = [0.2, 0.9, 0.5];
        let geo = [1.0, 0.3, 0.8];
        assert_eq!(combined_match(&r, &tex, &geo, 1.0, 0.0).unwrap().vertex, 1);
        assert_eq!(combined_match(&r, &tex, &geo, 0.0, 1.0).unwrap().vertex, 2);
        assert!(combined_match(&r, &tex[..2], &geo, 0.5, 0.5).is_err());
    }

    #[test]
    fn coarse_match_singleton_and_empty() {
        let m = TexturedMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let fields = vec![single_source_field(&m, 1).unwrap()];
        let table = FeatureTable::build(&fields, 0.1).unwrap();
        let f = LandmarkFeature {
            values: vec![2.0],
            reachable: true,
        };
        // All three vertices have a one-entry feature: every similarity is 1.
        assert_eq!(coarse_match(&f, &table).unwrap(), 0);
        let bad = LandmarkFeature {
            values: vec![1.0, 2.0],
            reachable: true,
        };
        assert!(matches!(
            coarse_match(&bad, &table),
            Err(CorrespondenceError::FeatureDimension { .. })
        ));
    }
}
