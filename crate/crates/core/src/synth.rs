//! Synthetic scan pairs with known lesion correspondences.
//!
//! Both scans share one triangulation; the target's vertex positions are the
//! source's after a bend and twist (plus optional jitter), so lesion `i` sits
//! at the same vertex index on both. Colors are painted per vertex: a skin
//! tone, dark lesion spots of varied size, darkness and shape, and per-scan
//! noise.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{AnnotationError, AnnotationFile, LandmarkSet, LesionSet};
use crate::geodesics::{nearest_source_distances, GeodesicBackend, SearchWorkspace};
use crate::mesh::{MeshError, Point3, Rgb, TexturedMesh};
use crate::obj::save_obj;
use crate::pipeline::ScanPair;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error(
        "placed only {placed} of {requested} lesions with separation above {separation_mm} mm"
    )]
    Infeasible {
        placed: usize,
        requested: usize,
        separation_mm: f64,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseShape {
    /// Cylinder with hemispherical ends.
    #[default]
    Capsule,
    Sphere,
    /// A capsule bent at its middle into two straight limbs.
    TwoLimb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Deformation {
    /// Bend of the shaft (capsule, sphere) or extra bend at the joint (two-limb).
    pub bend_deg: f64,
    /// Rotation of one end relative to the other about the long axis.
    pub twist_deg: f64,
    /// Standard deviation of Gaussian noise added to target positions.
    pub jitter_mm: f64,
}

impl Default for Deformation {
    fn default() -> Self {
        Self {
            bend_deg: 0.0,
            twist_deg: 0.0,
            jitter_mm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkinTexture {
    pub skin_tone: Rgb,
    /// Fraction of skin brightness the darkest lesion removes.
    pub lesion_contrast: f64,
    /// Standard deviation of per-vertex, per-channel color noise, drawn
    /// independently for each scan.
    pub noise_std: f64,
}

impl Default for SkinTexture {
    fn default() -> Self {
        Self {
            skin_tone: [0.87, 0.68, 0.57],
            lesion_contrast: 0.6,
            noise_std: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub base_shape: BaseShape,
    /// Tubes get `8 * 2^subdivision` vertices around; spheres are subdivided
    /// icosahedra.
    pub subdivision: u32,
    /// Tip-to-tip length of a tube, or sphere radius.
    pub scale_mm: f64,
    /// Tube radius; ignored for spheres.
    pub tube_radius_mm: f64,
    /// Angle between the limbs' axes at rest (two-limb only).
    pub rest_bend_deg: f64,
    pub lesion_count: usize,
    pub lesion_diameter_mm: [f64; 2],
    pub landmark_count: usize,
    /// Moves every target landmark to a random vertex within this geodesic
    /// distance, simulating annotation error.
    pub landmark_jitter_mm: f64,
    pub deformation: Deformation,
    pub texture: SkinTexture,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            base_shape: BaseShape::Capsule,
            subdivision: 3,
            scale_mm: 900.0,
            tube_radius_mm: 15.0,
            rest_bend_deg: 90.0,
            lesion_count: 12,
            lesion_diameter_mm: [4.0, 12.0],
            landmark_count: 8,
            landmark_jitter_mm: 0.0,
            deformation: Deformation::default(),
            texture: SkinTexture::default(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Two limbs of radius 40 mm, 630 mm tip to tip, about 50K vertices.
    pub fn two_limb() -> Self {
        Self {
            base_shape: BaseShape::TwoLimb,
            subdivision: 4,
            scale_mm: 630.0,
            tube_radius_mm: 40.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.scale_mm) {
            return bad(format!("scale_mm must be positive, got {}", self.scale_mm));
        }
        if self.base_shape != BaseShape::Sphere {
            if !positive(self.tube_radius_mm) {
                return bad("tube_radius_mm must be positive".into());
            }
            if self.scale_mm <= 2.0 * self.tube_radius_mm {
                return bad("scale_mm must exceed the tube diameter".into());
            }
            if self.subdivision > 8 {
                return bad("subdivision above 8 is not supported for tubes".into());
            }
        } else if self.subdivision > 7 {
            return bad("subdivision above 7 is not supported for spheres".into());
        }
        let [lo, hi] = self.lesion_diameter_mm;
        if !(positive(lo) && lo <= hi && hi.is_finite()) {
            return bad(format!("bad lesion diameter range [{lo}, {hi}]"));
        }
        if self.landmark_count < crate::annotations::MIN_LANDMARKS {
            return bad(format!(
                "need at least {} landmarks",
                crate::annotations::MIN_LANDMARKS
            ));
        }
        let d = &self.deformation;
        for (name, x) in [("bend_deg", d.bend_deg), ("twist_deg", d.twist_deg)] {
            if !x.is_finite() || x.abs() >= 180.0 {
                return bad(format!("{name} must be within (-180, 180), got {x}"));
            }
        }
        for (name, x) in [
            ("jitter_mm", d.jitter_mm),
            ("landmark_jitter_mm", self.landmark_jitter_mm),
            ("noise_std", self.texture.noise_std),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return bad(format!("{name} must be nonnegative, got {x}"));
            }
        }
        let t = &self.texture;
        if !(0.0..=1.0).contains(&t.lesion_contrast)
            || t.skin_tone.iter().any(|c| !(0.0..=1.0).contains(c))
        {
            return bad("skin tone and lesion contrast must lie in [0, 1]".into());
        }
        if self.base_shape == BaseShape::TwoLimb {
            let total = self.rest_bend_deg + d.bend_deg;
            if !(0.0..180.0).contains(&self.rest_bend_deg) || !(0.0..180.0).contains(&total) {
                return bad("rest bend and total joint bend must lie in [0, 180)".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LesionProfile {
    /// Uniformly dark disk.
    Solid,
    /// Dark rim around a lighter center.
    Ring,
    /// Dark center inside a lighter halo.
    Halo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaintedLesion {
    pub label: String,
    pub vertex: usize,
    pub diameter_mm: f64,
    pub darkness: f64,
    pub profile: LesionProfile,
}

/// A generated pair; the target shares the source's triangulation.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub source: TexturedMesh,
    pub target: TexturedMesh,
    pub source_landmarks: LandmarkSet,
    pub target_landmarks: LandmarkSet,
    pub lesions: LesionSet,
    /// Lesion vertices on the target, same labels.
    pub ground_truth: LesionSet,
    pub painted: Vec<PaintedLesion>,
}

impl SynthPair {
    pub fn scan_pair(&self) -> ScanPair<'_> {
        ScanPair {
            source: &self.source,
            source_landmarks: &self.source_landmarks,
            lesions: &self.lesions,
            target: &self.target,
            target_landmarks: &self.target_landmarks,
        }
    }

    /// Writes `source.obj`, `target.obj`, `source.json` (landmarks and
    /// lesions), `target.json` (landmarks) and `ground_truth.json`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| SynthError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        save_obj(&self.source, dir.join("source.obj"))?;
        save_obj(&self.target, dir.join("target.obj"))?;
        AnnotationFile::from_sets(Some(&self.source_landmarks), Some(&self.lesions))
            .save(dir.join("source.json"))?;
        AnnotationFile::from_sets(Some(&self.target_landmarks), None)
            .save(dir.join("target.json"))?;
        AnnotationFile::from_sets(None, Some(&self.ground_truth))
            .save(dir.join("ground_truth.json"))?;
        Ok(())
    }
}

// RNG stream per purpose, so changing one part of the spec does not reshuffle
// the others.
const STREAM_PLACEMENT: u64 = 1;
const STREAM_APPEARANCE: u64 = 2;
const STREAM_LANDMARKS: u64 = 3;
const STREAM_SOURCE_NOISE: u64 = 4;
const STREAM_TARGET_NOISE: u64 = 5;
const STREAM_JITTER: u64 = 6;
const STREAM_LANDMARK_JITTER: u64 = 7;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Unit icosahedron with vertex 0 at the north pole, subdivided `level`
/// times by edge midpoints and projected onto the sphere of `radius`.
/// Edges of the original equatorial zigzag keep their midpoints on `z = 0`.
pub fn icosphere(radius: f64, level: u32) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let z = 1.0 / 5f64.sqrt();
    let rho = 2.0 / 5f64.sqrt();
    let mut vertices: Vec<Point3> = vec![[0.0, 0.0, 1.0]];
    for k in 0..5 {
        let a = 2.0 * PI * k as f64 / 5.0;
        vertices.push([rho * a.cos(), rho * a.sin(), z]);
    }
    for k in 0..5 {
        let a = 2.0 * PI * (k as f64 + 0.5) / 5.0;
        vertices.push([rho * a.cos(), rho * a.sin(), -z]);
    }
    vertices.push([0.0, 0.0, -1.0]);
    let up = |k: usize| 1 + k % 5;
    let down = |k: usize| 6 + k % 5;
    let mut triangles = Vec::new();
    for k in 0..5 {
        triangles.push([0, up(k), up(k + 1)]);
        triangles.push([up(k), down(k), up(k + 1)]);
        triangles.push([up(k + 1), down(k), down(k + 1)]);
        triangles.push([11, down(k + 1), down(k)]);
    }
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point3>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                let m = [
                    (p[0] + q[0]) / 2.0,
                    (p[1] + q[1]) / 2.0,
                    (p[2] + q[2]) / 2.0,
                ];
                let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                vertices.push([m[0] / n, m[1] / n, m[2] / n]);
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        triangles = next;
    }
    for v in &mut vertices {
        *v = v.map(|x| x * radius);
    }
    (vertices, triangles)
}

/// Capsule along the z axis from `z = 0` to `z = length`, triangulated in
/// rings of `around` vertices with alternate rings rotated by half a step so
/// triangles are close to equilateral. Vertex 0 is the south pole, the last
/// vertex the north pole.
pub fn capsule(radius: f64, length: f64, around: usize) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let shaft = length - 2.0 * radius;
    let quarter = PI * radius / 2.0;
    let total = 2.0 * quarter + shaft;
    let spacing = 2.0 * PI * radius / around as f64 * 3f64.sqrt() / 2.0;
    let segments = ((total / spacing).round() as usize).max(2);
    let profile: Vec<(f64, f64)> = (0..=segments)
        .map(|j| {
            let s = total * j as f64 / segments as f64;
            if j == 0 {
                (0.0, 0.0)
            } else if j == segments {
                (0.0, length)
            } else if s < quarter {
                let a = s / radius;
                (radius * a.sin(), radius - radius * a.cos())
            } else if s <= quarter + shaft {
                (radius, radius + (s - quarter))
            } else {
                let a = (s - quarter - shaft) / radius;
                (radius * a.cos(), length - radius + radius * a.sin())
            }
        })
        .collect();

    let mut vertices = vec![[0.0, 0.0, 0.0]];
    let rings = segments - 1;
    for (j, &(rho, z)) in profile.iter().enumerate().take(segments).skip(1) {
        let shift = if j % 2 == 0 { 0.5 } else { 0.0 };
        for k in 0..around {
            let a = 2.0 * PI * (k as f64 + shift) / around as f64;
            vertices.push([rho * a.cos(), rho * a.sin(), z]);
        }
    }
    let north = vertices.len();
    vertices.push([0.0, 0.0, length]);

    let ring = |j: usize, k: usize| 1 + (j - 1) * around + k % around;
    let mut triangles = Vec::new();
    for k in 0..around {
        triangles.push([0, ring(1, k + 1), ring(1, k)]);
    }
    for j in 1..rings {
        // Ring j+1 is rotated by half a step relative to ring j, one way or
        // the other depending on parity.
        for k in 0..around {
            let (a0, a1) = (ring(j, k), ring(j, k + 1));
            if j % 2 == 1 {
                let (b0, b1) = (ring(j + 1, k), ring(j + 1, k + 1));
                triangles.push([a0, a1, b0]);
                triangles.push([b0, a1, b1]);
            } else {
                let (b0, b1) = (ring(j + 1, k), ring(j + 1, k + 1));
                triangles.push([a0, a1, b1]);
                triangles.push([a0, b1, b0]);
            }
        }
    }
    for k in 0..around {
        triangles.push([ring(rings, k), ring(rings, k + 1), north]);
    }
    (vertices, triangles)
}

/// Bends the part of space with `a <= z <= b` into a circular arc of angle
/// `theta` (radians) in the x-z plane; points above `b` follow rigidly.
/// Lengths along the z axis are preserved exactly; a point at lateral offset
/// `x` is stretched by `1 - x * theta / (b - a)`.
pub fn bend(p: Point3, theta: f64, a: f64, b: f64) -> Point3 {
    if theta == 0.0 || p[2] <= a {
        return p;
    }
    let r = (b - a) / theta;
    let arm = r - p[0];
    if p[2] <= b {
        let phi = (p[2] - a) / r;
        [r - arm * phi.cos(), p[1], a + arm * phi.sin()]
    } else {
        let t = p[2] - b;
        [
            r - arm * theta.cos() + t * theta.sin(),
            p[1],
            a + arm * theta.sin() + t * theta.cos(),
        ]
    }
}

/// Rotates about the z axis by an angle growing linearly from 0 at `z = a`
/// to `tau` at `z = b`.
pub fn twist(p: Point3, tau: f64, a: f64, b: f64) -> Point3 {
    if tau == 0.0 {
        return p;
    }
    let f = ((p[2] - a) / (b - a)).clamp(0.0, 1.0);
    let (s, c) = (tau * f).sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

struct Geometry {
    canonical: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    /// Axial range the deformation acts on.
    span: (f64, f64),
}

fn base_geometry(spec: &SynthSpec) -> Geometry {
    match spec.base_shape {
        BaseShape::Sphere => {
            let (canonical, triangles) = icosphere(spec.scale_mm, spec.subdivision);
            Geometry {
                canonical,
                triangles,
                span: (-spec.scale_mm, spec.scale_mm),
            }
        }
        BaseShape::Capsule | BaseShape::TwoLimb => {
            let r = spec.tube_radius_mm;
            let around = 8usize << spec.subdivision;
            let (canonical, triangles) = capsule(r, spec.scale_mm, around);
            let span = if spec.base_shape == BaseShape::Capsule {
                (r, spec.scale_mm - r)
            } else {
                let mid = spec.scale_mm / 2.0;
                (mid - 1.5 * r, mid + 1.5 * r)
            };
            Geometry {
                canonical,
                triangles,
                span,
            }
        }
    }
}

fn pose(spec: &SynthSpec, geo: &Geometry, extra_bend_deg: f64, twist_deg: f64) -> Vec<Point3> {
    let (a, b) = geo.span;
    let rest = if spec.base_shape == BaseShape::TwoLimb {
        spec.rest_bend_deg
    } else {
        0.0
    };
    let theta = (rest + extra_bend_deg).to_radians();
    let tau = twist_deg.to_radians();
    geo.canonical
        .iter()
        .map(|&p| bend(twist(p, tau, a, b), theta, a, b))
        .collect()
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Fraction of full lesion darkness at distance `d` from the center.
fn lesion_weight(profile: LesionProfile, d: f64, radius: f64) -> f64 {
    const EDGE_MM: f64 = 1.0;
    let inside = 1.0 - smoothstep(radius - EDGE_MM / 2.0, radius + EDGE_MM / 2.0, d);
    let core = match profile {
        LesionProfile::Solid => 1.0,
        LesionProfile::Ring => {
            if d < 0.5 * radius {
                0.35
            } else {
                1.0
            }
        }
        LesionProfile::Halo => {
            if d < 0.5 * radius {
                1.0
            } else {
                0.4
            }
        }
    };
    core * inside
}

fn place_lesions(spec: &SynthSpec, mesh: &TexturedMesh) -> Result<Vec<PaintedLesion>, SynthError> {
    let n = mesh.vertex_count();
    let separation = 3.0 * spec.lesion_diameter_mm[1];
    let mut rng = rng_for(spec.seed, STREAM_PLACEMENT);
    let mut look = rng_for(spec.seed, STREAM_APPEARANCE);
    let mut nearest = vec![f64::INFINITY; n];
    let mut ws = SearchWorkspace::new(n);
    let mut out: Vec<PaintedLesion> = Vec::new();
    let attempts = 1000 + 200 * spec.lesion_count;
    for _ in 0..attempts {
        if out.len() == spec.lesion_count {
            break;
        }
        let v = rng.random_range(0..n);
        if nearest[v] <= separation {
            continue;
        }
        ws.propagate(mesh, &[v], separation, GeodesicBackend::Dijkstra, |u, d| {
            nearest[u] = nearest[u].min(d)
        });
        let [lo, hi] = spec.lesion_diameter_mm;
        let profile = match look.random_range(0..3) {
            0 => LesionProfile::Solid,
            1 => LesionProfile::Ring,
            _ => LesionProfile::Halo,
        };
        out.push(PaintedLesion {
            label: format!("lesion_{}", out.len()),
            vertex: v,
            diameter_mm: look.random_range(lo..=hi),
            darkness: look.random_range(0.5..=1.0),
            profile,
        });
    }
    if out.len() < spec.lesion_count {
        return Err(SynthError::Infeasible {
            placed: out.len(),
            requested: spec.lesion_count,
            separation_mm: separation,
        });
    }
    Ok(out)
}

fn clean_colors(spec: &SynthSpec, mesh: &TexturedMesh, lesions: &[PaintedLesion]) -> Vec<Rgb> {
    let tone = spec.texture.skin_tone;
    let mut colors = vec![tone; mesh.vertex_count()];
    let mut ws = SearchWorkspace::new(mesh.vertex_count());
    // Lesions are browner than skin: red is dimmed less than green and blue.
    let tint = [0.8, 1.0, 1.0];
    for l in lesions {
        let radius = l.diameter_mm / 2.0;
        ws.propagate(
            mesh,
            &[l.vertex],
            radius + 1.0,
            GeodesicBackend::Dijkstra,
            |u, d| {
                let w =
                    lesion_weight(l.profile, d, radius) * l.darkness * spec.texture.lesion_contrast;
                for c in 0..3 {
                    colors[u][c] = tone[c] * (1.0 - w * tint[c]);
                }
            },
        );
    }
    colors
}

fn add_noise(colors: &[Rgb], std: f64, rng: &mut ChaCha8Rng) -> Vec<Rgb> {
    if std == 0.0 {
        return colors.to_vec();
    }
    let normal = Normal::new(0.0, std).expect("finite std");
    colors
        .iter()
        .map(|c| c.map(|x| (x + normal.sample(rng)).clamp(0.0, 1.0)))
        .collect()
}

/// Farthest-point sampling from a seeded random start; ties go to the lowest
/// vertex index.
pub fn farthest_point_landmarks(mesh: &TexturedMesh, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_for(seed, STREAM_LANDMARKS);
    let mut chosen = vec![rng.random_range(0..mesh.vertex_count())];
    while chosen.len() < count {
        let d = nearest_source_distances(mesh, &chosen, GeodesicBackend::Dijkstra)
            .expect("chosen vertices are in range");
        let mut best = 0;
        for v in 1..d.len() {
            if d[v].is_finite() && (d[v] > d[best] || !d[best].is_finite()) {
                best = v;
            }
        }
        if d[best] == 0.0 || !d[best].is_finite() {
            break;
        }
        chosen.push(best);
    }
    chosen
}

fn perturb_landmarks(
    mesh: &TexturedMesh,
    landmarks: &[usize],
    radius: f64,
    seed: u64,
) -> Vec<usize> {
    if radius == 0.0 {
        return landmarks.to_vec();
    }
    let mut rng = rng_for(seed, STREAM_LANDMARK_JITTER);
    let mut ws = SearchWorkspace::new(mesh.vertex_count());
    let mut out: Vec<usize> = Vec::with_capacity(landmarks.len());
    for &l in landmarks {
        let mut ball = Vec::new();
        ws.propagate(mesh, &[l], radius, GeodesicBackend::Dijkstra, |u, _| {
            ball.push(u)
        });
        ball.retain(|u| !out.contains(u) && (*u == l || !landmarks.contains(u)));
        out.push(ball[rng.random_range(0..ball.len())]);
    }
    out
}

/// Generates a scan pair. Pure function of the spec: the same spec always
/// gives bit-identical meshes, colors and annotations.
pub fn generate_pair(spec: &SynthSpec) -> Result<SynthPair, SynthError> {
    spec.validate()?;
    let geo = base_geometry(spec);
    let source_positions = pose(spec, &geo, 0.0, 0.0);
    let mut target_positions = pose(
        spec,
        &geo,
        spec.deformation.bend_deg,
        spec.deformation.twist_deg,
    );
    if spec.deformation.jitter_mm > 0.0 {
        let mut rng = rng_for(spec.seed, STREAM_JITTER);
        let normal = Normal::new(0.0, spec.deformation.jitter_mm).expect("finite std");
        for p in &mut target_positions {
            *p = p.map(|x| x + normal.sample(&mut rng));
        }
    }
    let bare_source = TexturedMesh::new(source_positions, geo.triangles.clone())?;
    let bare_target = TexturedMesh::new(target_positions, geo.triangles)?;

    let painted = place_lesions(spec, &bare_source)?;
    let clean = clean_colors(spec, &bare_source, &painted);
    let noise = spec.texture.noise_std;
    let source_colors = add_noise(&clean, noise, &mut rng_for(spec.seed, STREAM_SOURCE_NOISE));
    let target_colors = add_noise(&clean, noise, &mut rng_for(spec.seed, STREAM_TARGET_NOISE));
    let source = bare_source.with_vertex_colors(source_colors)?;
    let target = bare_target.with_vertex_colors(target_colors)?;

    let landmarks = farthest_point_landmarks(&source, spec.landmark_count, spec.seed);
    if landmarks.len() < spec.landmark_count {
        return Err(SynthError::InvalidSpec(format!(
            "mesh has room for only {} distinct landmarks",
            landmarks.len()
        )));
    }
    let target_landmarks =
        perturb_landmarks(&target, &landmarks, spec.landmark_jitter_mm, spec.seed);
    let n = source.vertex_count();
    let lesion_items = || painted.iter().map(|l| (l.label.clone(), l.vertex));
    Ok(SynthPair {
        source_landmarks: LandmarkSet::new(landmarks, n)?,
        target_landmarks: LandmarkSet::new(target_landmarks, n)?,
        lesions: LesionSet::from_vertices(lesion_items())?,
        ground_truth: LesionSet::from_vertices(lesion_items())?,
        painted,
        source,
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::distance;
    use approx::assert_relative_eq;

    #[test]
    fn icosphere_counts() {
        for level in 0..4 {
            let (v, t) = icosphere(1.0, level);
            let f = 20 * 4usize.pow(level);
            assert_eq!(t.len(), f);
            assert_eq!(v.len(), 2 + f / 2);
        }
        let (v, _) = icosphere(100.0, 2);
        for p in &v {
            assert_relative_eq!(distance(p, &[0.0; 3]), 100.0, epsilon = 1e-9);
        }
        assert_eq!(v[0], [0.0, 0.0, 100.0]);
    }

    #[test]
    fn capsule_is_closed_manifold() {
        let (v, t) = capsule(15.0, 200.0, 16);
        let m = TexturedMesh::new(v, t).unwrap();
        let report = m.validate();
        assert_eq!(report.components, 1);
        assert_eq!(report.boundary_edges, 0);
        assert_eq!(report.nonmanifold_edges, 0);
        // Closed genus-0 surface: V - E + F = 2.
        let (nv, ne, nf) = (
            m.vertex_count(),
            m.adjacency().edge_count(),
            m.triangle_count(),
        );
        assert_eq!(nv as i64 - ne as i64 + nf as i64, 2);
        let exact = 4.0 * PI * 15.0f64.powi(2) + 2.0 * PI * 15.0 * 170.0;
        assert!((m.surface_area() - exact).abs() / exact < 0.03);
    }

    #[test]
    fn bend_keeps_axis_length() {
        let (a, b) = (10.0, 110.0);
        let theta = PI / 6.0;
        let p = bend([0.0, 0.0, 60.0], theta, a, b);
        let q = bend([0.0, 0.0, 61.0], theta, a, b);
        // A unit step along the axis becomes a unit arc: chord 2R sin(1 / 2R).
        let r = (b - a) / theta;
        assert_relative_eq!(distance(&p, &q), 2.0 * r * (0.5 / r).sin(), epsilon = 1e-12);
        // Beyond the bend, the end is rotated rigidly by theta.
        let e0 = bend([0.0, 0.0, 200.0], theta, a, b);
        let e1 = bend([0.0, 0.0, 210.0], theta, a, b);
        assert_relative_eq!(e1[0] - e0[0], 10.0 * theta.sin(), epsilon = 1e-9);
        assert_relative_eq!(e1[2] - e0[2], 10.0 * theta.cos(), epsilon = 1e-9);
        assert_eq!(bend([1.0, 2.0, 5.0], theta, a, b), [1.0, 2.0, 5.0]);
    }

    #[test]
    fn placement_reports_infeasible() {
        let spec = SynthSpec {
            scale_mm: 100.0,
            lesion_count: 50,
            ..SynthSpec::default()
        };
        assert!(matches!(
            generate_pair(&spec),
            Err(SynthError::Infeasible { requested: 50, .. })
        ));
    }

    #[test]
    fn lesion_profiles_differ() {
        let r = 5.0;
        assert_eq!(lesion_weight(LesionProfile::Solid, 1.0, r), 1.0);
        assert_eq!(lesion_weight(LesionProfile::Ring, 1.0, r), 0.35);
        assert_eq!(lesion_weight(LesionProfile::Halo, 4.0, r), 0.4);
        assert_eq!(lesion_weight(LesionProfile::Solid, 6.0, r), 0.0);
    }

    #[test]
    fn spec_json_defaults_and_unknown_fields() {
        let s: SynthSpec = serde_json::from_str(r#"{"deformation":{"bend_deg":30}}"#).unwrap();
        assert_eq!(s.deformation.bend_deg, 30.0);
        assert_eq!(s.lesion_count, 12);
        assert!(serde_json::from_str::<SynthSpec>(r#"{"bend":30}"#).is_err());
    }
}
