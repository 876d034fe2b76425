//! The iterative anchor loop.
//!
//! Each iteration matches every unresolved lesion against the target using the
//! current landmarks, accepts the confident matches, and appends them to both
//! landmark sets before the next iteration. Whatever is left after the last
//! iteration is resolved with the combined geometric and texture score.

mod config;

pub use config::{ConfidenceMode, ConfigError, DiameterMetric, PipelineConfig, Thresholds};

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{AnnotationError, LandmarkSet, LesionSet};
use crate::correspondence::{
    coarse_match, combined_match, gaussian_score, refine_from_scores, region_from_field,
    region_sigma, CorrespondenceError, SearchRegion,
};
use crate::descriptors::{
    landmark_feature, texture_score, DescriptorError, FeatureTable, LocalTextureDescriptor,
    RadialHistogram, TextureDescriptor, RADII,
};
use crate::geodesics::{field_in, landmark_fields, GeodesicError, GeodesicField, SearchWorkspace};
use crate::mesh::{distance, TexturedMesh};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("no lesions of interest given")]
    NoLesions,
    #[error("{0} mesh has no vertex colors")]
    ColorsUnresolved(&'static str),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Correspondence(#[from] CorrespondenceError),
}

/// How a lesion's target vertex is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Confident matches become landmarks; the rest fall back to `SinglePass`.
    #[default]
    Iterative,
    /// Combined geometric and texture score in one pass.
    SinglePass,
    /// Landmark-feature match only.
    ShapeOnly,
    /// Best texture score inside the search region, one pass.
    TextureOnly,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Iterative => "iterative",
            Self::SinglePass => "single-pass",
            Self::ShapeOnly => "shape-only",
            Self::TextureOnly => "texture-only",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            Self::Iterative,
            Self::SinglePass,
            Self::ShapeOnly,
            Self::TextureOnly,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// The matched pair of scans.
#[derive(Debug, Clone, Copy)]
pub struct ScanPair<'a> {
    pub source: &'a TexturedMesh,
    pub source_landmarks: &'a LandmarkSet,
    pub lesions: &'a LesionSet,
    pub target: &'a TexturedMesh,
    pub target_landmarks: &'a LandmarkSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceRecord {
    pub loi_label: String,
    pub source_vertex: usize,
    pub target_vertex: usize,
    /// Landmark-feature match the search region was built around.
    pub coarse_vertex: usize,
    pub texture_score: f64,
    /// Present for matches resolved by the combined score.
    pub geometric_score: Option<f64>,
    pub confident: bool,
    pub anchored_at_iteration: Option<usize>,
    pub uniqueness_diameter_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub method: Method,
    /// In lesion input order.
    pub records: Vec<CorrespondenceRecord>,
    pub iterations: usize,
    /// Landmark pairs added by promotion.
    pub promoted_landmarks: usize,
}

/// Inputs to the confidence test for one lesion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInputs {
    pub texture_score: f64,
    /// Geodesic distance between the coarse and the refined match.
    pub match_distance: f64,
    pub uniqueness_diameter: f64,
}

/// Whether a match is trusted enough to become a landmark.
pub fn confidence(inputs: &ConfidenceInputs, t: &Thresholds, mode: ConfidenceMode) -> bool {
    let clauses = [
        inputs.texture_score > t.eps3,
        inputs.match_distance < t.eps4,
        inputs.uniqueness_diameter < t.eps5,
    ];
    match mode {
        ConfidenceMode::Any => clauses.iter().any(|&c| c),
        ConfidenceMode::All => clauses.iter().all(|&c| c),
    }
}

/// Region members whose texture score exceeds `delta`.
fn similar_members<'r>(
    region: &'r SearchRegion,
    scores: &'r [f64],
    delta: f64,
) -> impl Iterator<Item = usize> + 'r {
    region
        .members
        .iter()
        .zip(scores)
        .filter(move |(_, &s)| s > delta)
        .map(|(&v, _)| v)
}

fn centroid(mesh: &TexturedMesh, set: &[usize]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for &v in set {
        let p = mesh.position(v);
        for i in 0..3 {
            c[i] += p[i];
        }
    }
    c.map(|x| x / set.len() as f64)
}

/// Spread of the region members that look like the lesion: the mean
/// straight-line distance of those members from their centroid. Zero when at
/// most one member qualifies.
pub fn uniqueness_diameter(
    region: &SearchRegion,
    scores: &[f64],
    delta: f64,
    target: &TexturedMesh,
) -> f64 {
    let set: Vec<usize> = similar_members(region, scores, delta).collect();
    if set.len() <= 1 {
        return 0.0;
    }
    let c = centroid(target, &set);
    set.iter()
        .map(|&v| distance(&target.position(v), &c))
        .sum::<f64>()
        / set.len() as f64
}

/// Geodesic variant: mean geodesic distance of the similar members from the
/// member nearest their centroid.
pub fn geodesic_uniqueness_diameter(
    region: &SearchRegion,
    scores: &[f64],
    delta: f64,
    target: &TexturedMesh,
    backend: crate::geodesics::GeodesicBackend,
    ws: &mut SearchWorkspace,
) -> f64 {
    let set: Vec<usize> = similar_members(region, scores, delta).collect();
    if set.len() <= 1 {
        return 0.0;
    }
    let c = centroid(target, &set);
    let mut center = set[0];
    let mut best = f64::INFINITY;
    for &v in &set {
        let d = distance(&target.position(v), &c);
        if d < best {
            best = d;
            center = v;
        }
    }
    let field = field_in(ws, target, center, backend).expect("member index is in range");
    set.iter().map(|&v| field.distance(v)).sum::<f64>() / set.len() as f64
}

/// Target descriptors computed on first use and shared across lesions and
/// iterations.
struct DescriptorCache<'a> {
    mesh: &'a TexturedMesh,
    describer: &'a dyn LocalTextureDescriptor,
    slots: Vec<OnceLock<[TextureDescriptor; RADII]>>,
}

impl<'a> DescriptorCache<'a> {
    fn new(mesh: &'a TexturedMesh, describer: &'a dyn LocalTextureDescriptor) -> Self {
        Self {
            mesh,
            describer,
            slots: (0..mesh.vertex_count()).map(|_| OnceLock::new()).collect(),
        }
    }

    fn get(
        &self,
        v: usize,
        ws: &mut SearchWorkspace,
    ) -> Result<&[TextureDescriptor; RADII], DescriptorError> {
        let slot = &self.slots[v];
        if let Some(d) = slot.get() {
            return Ok(d);
        }
        // A concurrent duplicate computation yields the same value.
        let d = self.describer.describe(self.mesh, v, ws)?;
        Ok(slot.get_or_init(|| d))
    }
}

/// Both landmark sets with their fields; grows by promotion.
struct LandmarkState {
    source: Vec<usize>,
    target: Vec<usize>,
    source_fields: Vec<GeodesicField>,
    target_table: FeatureTable,
    target_fields: Vec<GeodesicField>,
}

impl LandmarkState {
    fn new(pair: &ScanPair<'_>, config: &PipelineConfig) -> Result<Self, PipelineError> {
        let source = pair.source_landmarks.vertices().to_vec();
        let target = pair.target_landmarks.vertices().to_vec();
        let backend = config.geodesic_backend;
        let source_fields = landmark_fields(pair.source, &source, backend)?;
        let target_fields = landmark_fields(pair.target, &target, backend)?;
        let target_table = FeatureTable::build(&target_fields, config.d_floor)?;
        Ok(Self {
            source,
            target,
            source_fields,
            target_table,
            target_fields,
        })
    }

    /// Appends the pairs whose vertices are not landmarks yet. Returns how
    /// many were added.
    fn promote(
        &mut self,
        pair: &ScanPair<'_>,
        config: &PipelineConfig,
        candidates: &[(usize, usize)],
    ) -> Result<usize, PipelineError> {
        let mut fresh: Vec<(usize, usize)> = Vec::new();
        for &(s, t) in candidates {
            let taken = self.source.contains(&s)
                || self.target.contains(&t)
                || fresh.iter().any(|&(fs, ft)| fs == s || ft == t);
            if !taken {
                fresh.push((s, t));
            }
        }
        if fresh.is_empty() {
            return Ok(0);
        }
        let backend = config.geodesic_backend;
        let new_source: Vec<usize> = fresh.iter().map(|p| p.0).collect();
        let new_target: Vec<usize> = fresh.iter().map(|p| p.1).collect();
        self.source_fields
            .extend(landmark_fields(pair.source, &new_source, backend)?);
        self.target_fields
            .extend(landmark_fields(pair.target, &new_target, backend)?);
        self.source.extend(new_source);
        self.target.extend(new_target);
        self.target_table = FeatureTable::build(&self.target_fields, config.d_floor)?;
        Ok(fresh.len())
    }
}

/// Everything computed for one lesion under one landmark state.
#[derive(Debug, Clone)]
struct LoiEvaluation {
    coarse: usize,
    region: SearchRegion,
    /// Geodesic distance of each member from the coarse match.
    member_distances: Vec<f64>,
    texture_scores: Vec<f64>,
    /// Index into the region of the best texture score.
    refined: usize,
    diameter: f64,
}

impl LoiEvaluation {
    fn refined_vertex(&self) -> usize {
        self.region.members[self.refined]
    }

    fn confidence_inputs(&self) -> ConfidenceInputs {
        ConfidenceInputs {
            texture_score: self.texture_scores[self.refined],
            match_distance: self.member_distances[self.refined],
            uniqueness_diameter: self.diameter,
        }
    }

    fn score_at(&self, v: usize) -> f64 {
        self.region
            .position(v)
            .map_or(0.0, |i| self.texture_scores[i])
    }
}

struct Matcher<'a> {
    pair: ScanPair<'a>,
    config: &'a PipelineConfig,
    source_descriptors: Vec<[TextureDescriptor; RADII]>,
    cache: DescriptorCache<'a>,
}

impl<'a> Matcher<'a> {
    fn new(
        pair: ScanPair<'a>,
        config: &'a PipelineConfig,
        describer: &'a dyn LocalTextureDescriptor,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        pair.source_landmarks.check_aligned(pair.target_landmarks)?;
        if pair.lesions.is_empty() {
            return Err(PipelineError::NoLesions);
        }
        if pair.source.vertex_colors().is_none() {
            return Err(PipelineError::ColorsUnresolved("source"));
        }
        if pair.target.vertex_colors().is_none() {
            return Err(PipelineError::ColorsUnresolved("target"));
        }
        let source_descriptors = pair
            .lesions
            .entries()
            .par_iter()
            .map_init(
                || SearchWorkspace::new(pair.source.vertex_count()),
                |ws, e| describer.describe(pair.source, e.vertex, ws),
            )
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            pair,
            config,
            source_descriptors,
            cache: DescriptorCache::new(pair.target, describer),
        })
    }

    fn evaluate(
        &self,
        state: &LandmarkState,
        loi: usize,
        ws: &mut SearchWorkspace,
    ) -> Result<LoiEvaluation, PipelineError> {
        let config = self.config;
        let target = self.pair.target;
        let x = self.pair.lesions.entries()[loi].vertex;
        let feature = landmark_feature(&state.source_fields, x, config.d_floor)?;
        let coarse = coarse_match(&feature, &state.target_table)?;
        let anchor_field = field_in(ws, target, coarse, config.geodesic_backend)?;
        let region =
            region_from_field(&anchor_field, &state.target_table, config.eps1, config.eps2);
        let member_distances: Vec<f64> = region
            .members
            .iter()
            .map(|&v| anchor_field.distance(v))
            .collect();
        drop(anchor_field);

        let source_desc = &self.source_descriptors[loi];
        let texture_scores = region
            .members
            .par_iter()
            .map_init(
                || SearchWorkspace::new(target.vertex_count()),
                |ws, &v| -> Result<f64, PipelineError> {
                    let d = self.cache.get(v, ws)?;
                    Ok(texture_score(source_desc, d, config.descriptor_weights)?)
                },
            )
            .collect::<Result<Vec<f64>, _>>()?;
        let refined_vertex = refine_from_scores(&region, &texture_scores)?.vertex;
        let refined = region
            .position(refined_vertex)
            .expect("refined match is a member");
        let diameter = match config.diameter_metric {
            DiameterMetric::Euclidean => {
                uniqueness_diameter(&region, &texture_scores, config.delta, target)
            }
            DiameterMetric::Geodesic => geodesic_uniqueness_diameter(
                &region,
                &texture_scores,
                config.delta,
                target,
                config.geodesic_backend,
                ws,
            ),
        };
        Ok(LoiEvaluation {
            coarse,
            region,
            member_distances,
            texture_scores,
            refined,
            diameter,
        })
    }

    fn evaluate_all(
        &self,
        state: &LandmarkState,
        lois: &[usize],
    ) -> Result<Vec<LoiEvaluation>, PipelineError> {
        lois.par_iter()
            .map_init(
                || SearchWorkspace::new(self.pair.target.vertex_count()),
                |ws, &i| self.evaluate(state, i, ws),
            )
            .collect()
    }

    fn base_record(&self, loi: usize, eval: &LoiEvaluation) -> CorrespondenceRecord {
        let entry = &self.pair.lesions.entries()[loi];
        CorrespondenceRecord {
            loi_label: entry.label.clone(),
            source_vertex: entry.vertex,
            target_vertex: eval.refined_vertex(),
            coarse_vertex: eval.coarse,
            texture_score: eval.texture_scores[eval.refined],
            geometric_score: None,
            confident: false,
            anchored_at_iteration: None,
            uniqueness_diameter_mm: eval.diameter,
        }
    }

    fn combined_record(
        &self,
        loi: usize,
        eval: &LoiEvaluation,
    ) -> Result<CorrespondenceRecord, PipelineError> {
        let sigma = region_sigma(&eval.member_distances);
        let geometric: Vec<f64> = eval
            .member_distances
            .iter()
            .map(|&d| gaussian_score(d, sigma))
            .collect();
        let [w_geo, w_tex] = self.config.combine_weights;
        let best = combined_match(&eval.region, &eval.texture_scores, &geometric, w_geo, w_tex)?;
        Ok(CorrespondenceRecord {
            target_vertex: best.vertex,
            texture_score: best.texture_score,
            geometric_score: Some(best.geometric_score),
            ..self.base_record(loi, eval)
        })
    }

    fn run(&self, method: Method) -> Result<PipelineRun, PipelineError> {
        match method {
            Method::Iterative => self.iterative(),
            Method::SinglePass => self.single_pass(),
            Method::ShapeOnly | Method::TextureOnly => self.one_pass(method),
        }
    }

    fn all_lois(&self) -> Vec<usize> {
        (0..self.pair.lesions.len()).collect()
    }

    fn single_pass(&self) -> Result<PipelineRun, PipelineError> {
        let state = LandmarkState::new(&self.pair, self.config)?;
        let lois = self.all_lois();
        let evals = self.evaluate_all(&state, &lois)?;
        let records = lois
            .iter()
            .zip(&evals)
            .map(|(&i, e)| self.combined_record(i, e))
            .collect::<Result<_, _>>()?;
        Ok(PipelineRun {
            method: Method::SinglePass,
            records,
            iterations: 1,
            promoted_landmarks: 0,
        })
    }

    fn one_pass(&self, method: Method) -> Result<PipelineRun, PipelineError> {
        let state = LandmarkState::new(&self.pair, self.config)?;
        let lois = self.all_lois();
        let evals = self.evaluate_all(&state, &lois)?;
        let records = lois
            .iter()
            .zip(&evals)
            .map(|(&i, e)| {
                let mut r = self.base_record(i, e);
                if method == Method::ShapeOnly {
                    r.target_vertex = e.coarse;
                    r.texture_score = e.score_at(e.coarse);
                }
                r
            })
            .collect();
        Ok(PipelineRun {
            method,
            records,
            iterations: 1,
            promoted_landmarks: 0,
        })
    }

    fn iterative(&self) -> Result<PipelineRun, PipelineError> {
        let config = self.config;
        let n = self.pair.lesions.len();
        let mut state = LandmarkState::new(&self.pair, config)?;
        let mut records: Vec<Option<CorrespondenceRecord>> = vec![None; n];
        // Evaluations stay valid until the landmark set changes.
        let mut evals: Vec<Option<LoiEvaluation>> = vec![None; n];
        let mut pending = self.all_lois();
        let mut iterations = 0;
        let mut promoted_total = 0;

        for k in 1..=config.max_iterations {
            if pending.is_empty() {
                break;
            }
            iterations = k;
            let stale: Vec<usize> = pending
                .iter()
                .copied()
                .filter(|&i| evals[i].is_none())
                .collect();
            for (i, e) in stale.iter().zip(self.evaluate_all(&state, &stale)?) {
                evals[*i] = Some(e);
            }
            let thresholds = config.relax(k);
            let mut candidates = Vec::new();
            pending.retain(|&i| {
                let e = evals[i].as_ref().expect("evaluated above");
                if !confidence(&e.confidence_inputs(), &thresholds, config.confidence_mode) {
                    return true;
                }
                let mut r = self.base_record(i, e);
                r.confident = true;
                r.anchored_at_iteration = Some(k);
                candidates.push((r.source_vertex, r.target_vertex));
                records[i] = Some(r);
                false
            });
            let added = state.promote(&self.pair, config, &candidates)?;
            log::info!(
                "iteration {k}: {} confident, {added} new landmarks, {} unresolved",
                candidates.len(),
                pending.len()
            );
            promoted_total += added;
            if added > 0 {
                evals.iter_mut().for_each(|e| *e = None);
            }
        }

        let stale: Vec<usize> = pending
            .iter()
            .copied()
            .filter(|&i| evals[i].is_none())
            .collect();
        for (i, e) in stale.iter().zip(self.evaluate_all(&state, &stale)?) {
            evals[*i] = Some(e);
        }
        for &i in &pending {
            let e = evals[i].as_ref().expect("evaluated above");
            records[i] = Some(self.combined_record(i, e)?);
        }
        Ok(PipelineRun {
            method: Method::Iterative,
            records: records
                .into_iter()
                .map(|r| r.expect("every lesion resolved"))
                .collect(),
            iterations,
            promoted_landmarks: promoted_total,
        })
    }
}

/// The reference texture descriptor for a config.
pub fn descriptor_for(config: &PipelineConfig) -> RadialHistogram {
    RadialHistogram {
        radii: config.radii,
        bins: config.histogram_bins(),
        channels: config.descriptor_channels,
        backend: config.geodesic_backend,
    }
}

/// Runs `method` with the reference texture descriptor.
pub fn run(
    pair: ScanPair<'_>,
    config: &PipelineConfig,
    method: Method,
) -> Result<PipelineRun, PipelineError> {
    let describer = descriptor_for(config);
    run_with_descriptor(pair, config, method, &describer)
}

pub fn run_with_descriptor(
    pair: ScanPair<'_>,
    config: &PipelineConfig,
    method: Method,
    describer: &dyn LocalTextureDescriptor,
) -> Result<PipelineRun, PipelineError> {
    Matcher::new(pair, config, describer)?.run(method)
}

/// Runs several methods on one pair, computing each target descriptor once.
/// Each result equals what [`run`] returns for that method.
pub fn run_methods(
    pair: ScanPair<'_>,
    config: &PipelineConfig,
    methods: &[Method],
) -> Result<Vec<PipelineRun>, PipelineError> {
    let describer = descriptor_for(config);
    let matcher = Matcher::new(pair, config, &describer)?;
    methods.iter().map(|&m| matcher.run(m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(t: f64, d: f64, diam: f64) -> ConfidenceInputs {
        ConfidenceInputs {
            texture_score: t,
            match_distance: d,
            uniqueness_diameter: diam,
        }
    }

    #[test]
    fn confidence_clauses() {
        let t = PipelineConfig::default().relax(1);
        assert!(confidence(&inputs(1.0, 1e9, 1e9), &t, ConfidenceMode::Any));
        assert!(!confidence(&inputs(0.0, 1e9, 1e9), &t, ConfidenceMode::Any));
        assert!(!confidence(&inputs(1.0, 1e9, 1e9), &t, ConfidenceMode::All));
        assert!(confidence(&inputs(0.95, 0.0, 0.0), &t, ConfidenceMode::All));
        // Distance clause flips once eps4 is relaxed past 11 mm.
        let x = inputs(0.0, 11.0, 1e9);
        assert!(!confidence(&x, &t, ConfidenceMode::Any));
        assert!(confidence(
            &x,
            &PipelineConfig::default().relax(2),
            ConfidenceMode::Any
        ));
    }

    #[test]
    fn unsatisfiable_all_mode() {
        let c = PipelineConfig {
            confidence_mode: ConfidenceMode::All,
            eps3: 1.5,
            eps4: 0.0,
            eps5: 0.0,
            ..PipelineConfig::default()
        };
        assert!(!confidence(
            &inputs(1.0, 0.0, 0.0),
            &c.relax(1),
            c.confidence_mode
        ));
    }

    fn line_mesh() -> TexturedMesh {
        // Four vertices, two triangles; positions chosen for easy centroids.
        TexturedMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [10.0, 0.0, 0.0],
                [0.0, 10.0, 0.0],
                [10.0, 10.0, 0.0],
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap()
    }

    #[test]
    fn diameter_closed_forms() {
        let m = line_mesh();
        let region = SearchRegion {
            anchor: 0,
            members: vec![0, 1, 2, 3],
            epsilon1: 1.0,
            epsilon2: 1.0,
        };
        assert_eq!(
            uniqueness_diameter(&region, &[0.9, 0.1, 0.1, 0.1], 0.85, &m),
            0.0
        );
        assert_eq!(uniqueness_diameter(&region, &[0.1; 4], 0.85, &m), 0.0);
        assert_eq!(
            uniqueness_diameter(&region, &[0.9, 0.9, 0.1, 0.1], 0.85, &m),
            5.0
        );
        let all = uniqueness_diameter(&region, &[0.9; 4], 0.85, &m);
        assert!((all - 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Iterative,
            Method::SinglePass,
            Method::ShapeOnly,
            Method::TextureOnly,
        ] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(
                serde_json::to_string(&m).unwrap(),
                format!("\"{}\"", m.name())
            );
        }
        assert!("combined".parse::<Method>().is_err());
    }
}
