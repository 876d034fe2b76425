use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use lesiontrack_core::descriptors::{landmark_feature, LocalTextureDescriptor};
use lesiontrack_core::evaluation::{
    aggregate as aggregate_reports, default_criteria, EvaluationReport,
};
use lesiontrack_core::geodesics::{landmark_fields, SearchWorkspace};
use lesiontrack_core::obj::load_textured_mesh;
use lesiontrack_core::pipeline::{descriptor_for, run, PipelineRun};
use lesiontrack_core::synth::{generate_pair, SynthSpec};
use lesiontrack_core::{
    AnnotationEntry, AnnotationFile, CorrespondenceRecord, GeodesicBackend, LandmarkSet, LesionSet,
    PipelineConfig, ScanPair, TexturedMesh,
};
use serde::{Deserialize, Serialize};

use crate::exit::CliError;
use crate::manifest::{with_manifest, write_output, RunManifest};
use crate::{
    AggregateArgs, CorrespondArgs, EvaluateArgs, InspectArgs, MeshInput, Preset, SynthArgs,
};

fn manifest() -> RunManifest {
    RunManifest::start(rayon::current_num_threads())
}

/// Inputs are hashed only after they parse, so a missing or malformed file
/// fails with the code of the module that reads it.
fn load_config(path: Option<&Path>, m: &mut RunManifest) -> Result<PipelineConfig, CliError> {
    let config = match path {
        Some(p) => {
            let c = PipelineConfig::load(p)?;
            m.add_input("config", p)?;
            c
        }
        None => PipelineConfig::default(),
    };
    config.validate()?;
    m.config = serde_json::to_value(&config).expect("config serializes");
    Ok(config)
}

fn load_mesh(
    path: &Path,
    input: &MeshInput,
    role: &str,
    m: &mut RunManifest,
) -> Result<TexturedMesh, CliError> {
    if !(input.scale.is_finite() && input.scale > 0.0) {
        return Err(CliError::Usage(format!(
            "--scale must be positive, got {}",
            input.scale
        )));
    }
    let mesh = load_textured_mesh(path)?.scaled(input.scale)?;
    m.add_input(role, path)?;
    // Meshes without texture or colors stay colorless; only texture
    // matching needs colors and reports their absence itself.
    if mesh.vertex_colors().is_some() || mesh.texture().is_some() {
        Ok(mesh.resolve_vertex_colors()?)
    } else {
        Ok(mesh)
    }
}

fn load_annotations(
    path: &Path,
    input: &MeshInput,
    role: &str,
    m: &mut RunManifest,
) -> Result<AnnotationFile, CliError> {
    let mut file = AnnotationFile::load(path)?;
    m.add_input(role, path)?;
    for e in file.landmarks.iter_mut().chain(file.lesions.iter_mut()) {
        scale_entry(e, input.scale);
    }
    Ok(file)
}

fn scale_entry(e: &mut AnnotationEntry, factor: f64) {
    if let Some(p) = &mut e.point {
        *p = p.map(|x| x * factor);
    }
}

#[derive(Serialize)]
struct ResultsBody<'a> {
    #[serde(flatten)]
    run: &'a PipelineRun,
}

pub fn correspond(args: CorrespondArgs) -> Result<(), CliError> {
    let mut m = manifest();
    let config = load_config(args.config.as_deref(), &mut m)?;
    let t = Instant::now();
    let source = load_mesh(&args.source, &args.input, "source_mesh", &mut m)?;
    let target = load_mesh(&args.target, &args.input, "target_mesh", &mut m)?;
    m.record("load_meshes", t);
    let src_ann = load_annotations(
        &args.source_annotations,
        &args.input,
        "source_annotations",
        &mut m,
    )?;
    let tgt_ann = load_annotations(
        &args.target_landmarks,
        &args.input,
        "target_landmarks",
        &mut m,
    )?;
    let limit = args.input.snap_limit;
    let source_landmarks = LandmarkSet::resolve(&src_ann.landmarks, &source, limit)?;
    let target_landmarks = LandmarkSet::resolve(&tgt_ann.landmarks, &target, limit)?;
    let lesions = LesionSet::resolve(&src_ann.lesions, &source, limit)?;
    let pair = ScanPair {
        source: &source,
        source_landmarks: &source_landmarks,
        lesions: &lesions,
        target: &target,
        target_landmarks: &target_landmarks,
    };
    let out = m.time("correspond", || run(pair, &config, args.mode))?;
    log::info!(
        "{}: {} lesions, {} confident, {} iterations",
        out.method,
        out.records.len(),
        out.records.iter().filter(|r| r.confident).count(),
        out.iterations
    );
    write_output(&args.output, &with_manifest(ResultsBody { run: &out }, &m))
}

#[derive(Deserialize)]
struct ResultsFile {
    records: Vec<CorrespondenceRecord>,
    #[serde(default)]
    manifest: Option<serde_json::Value>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let mut m = manifest();
    m.add_input("results", &args.results)?;
    let results: ResultsFile = read_json(&args.results)?;
    let config = results
        .manifest
        .and_then(|mut v| v.get_mut("config").map(serde_json::Value::take))
        .unwrap_or(serde_json::Value::Null);
    m.config = config.clone();
    let backend = match args.backend {
        Some(b) => b,
        None => config
            .get("geodesic_backend")
            .and_then(|v| serde_json::from_value::<GeodesicBackend>(v.clone()).ok())
            .unwrap_or_default(),
    };
    let target = load_mesh(&args.target, &args.input, "target_mesh", &mut m)?;
    let truth = load_annotations(&args.ground_truth, &args.input, "ground_truth", &mut m)?;
    let truth = LesionSet::resolve(&truth.lesions, &target, args.input.snap_limit)?;
    let criteria = if args.criteria.is_empty() {
        default_criteria()
    } else {
        args.criteria.clone()
    };
    let report = m.time("evaluate", || {
        EvaluationReport::build(
            &results.records,
            &truth,
            &target,
            &criteria,
            backend,
            config,
        )
    })?;
    log::info!(
        "mean CLE {:.3} mm over {} lesions",
        report.mean_cle_mm,
        report.per_loi.len()
    );
    let curve = args
        .curve
        .clone()
        .unwrap_or_else(|| args.output.with_extension("csv"));
    report.write_curve_csv(&curve)?;
    write_output(&args.output, &with_manifest(&report, &m))
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let mut m = manifest();
    let mut spec = match &args.spec {
        Some(p) => {
            m.add_input("spec", p)?;
            read_json::<SynthSpec>(p)?
        }
        None => match args.preset {
            Preset::Capsule => SynthSpec::default(),
            Preset::TwoLimb => SynthSpec::two_limb(),
        },
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    m.config = serde_json::to_value(&spec).expect("spec serializes");
    let pair = m.time("generate", || generate_pair(&spec))?;
    m.time("write", || pair.write_to_dir(&args.output))?;
    log::info!(
        "{} vertices, {} lesions written to {}",
        pair.source.vertex_count(),
        pair.lesions.len(),
        args.output.display()
    );
    let spec_text = serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n";
    write_output(&args.output.join("spec.json"), &spec_text)?;
    write_output(
        &args.output.join("manifest.json"),
        &with_manifest(serde_json::json!({}), &m),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkDistance {
    pub index: usize,
    pub label: String,
    pub vertex: usize,
    pub distance_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorNorms {
    pub radius_mm: f64,
    pub dimension: usize,
    pub l1_norm: f64,
    pub l2_norm: f64,
}

/// Everything `inspect` reports about one vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexDump {
    pub vertex: usize,
    pub lesion: Option<String>,
    pub position: [f64; 3],
    pub d_floor_mm: f64,
    pub feature: Vec<f64>,
    pub reachable: bool,
    /// All landmarks, nearest first; unreachable ones last with no distance.
    pub nearest_landmarks: Vec<LandmarkDistance>,
    /// Absent when the mesh carries no colors.
    pub descriptors: Option<Vec<DescriptorNorms>>,
}

pub fn inspect(args: InspectArgs) -> Result<(), CliError> {
    let mut m = manifest();
    let config = load_config(args.config.as_deref(), &mut m)?;
    let mesh = load_mesh(&args.mesh, &args.input, "mesh", &mut m)?;
    let ann = load_annotations(&args.landmarks, &args.input, "annotations", &mut m)?;
    let landmarks = LandmarkSet::resolve(&ann.landmarks, &mesh, args.input.snap_limit)?;
    let (vertex, lesion) = match (&args.lesion, args.vertex) {
        (Some(label), _) => {
            let lesions = LesionSet::resolve(&ann.lesions, &mesh, args.input.snap_limit)?;
            let e = lesions
                .get(label)
                .ok_or_else(|| CliError::UnknownLabel(label.clone()))?;
            (e.vertex, Some(label.clone()))
        }
        (None, Some(v)) if v < mesh.vertex_count() => (v, None),
        (None, Some(v)) => {
            return Err(CliError::Usage(format!(
                "vertex {v} out of range; the mesh has {} vertices",
                mesh.vertex_count()
            )))
        }
        (None, None) => unreachable!("clap requires --vertex or --lesion"),
    };
    let fields = m.time("geodesics", || {
        landmark_fields(&mesh, landmarks.vertices(), config.geodesic_backend)
    })?;
    let feature = landmark_feature(&fields, vertex, config.d_floor)?;
    let mut nearest: Vec<LandmarkDistance> = fields
        .iter()
        .enumerate()
        .map(|(i, f)| LandmarkDistance {
            index: i,
            label: landmarks.labels()[i].clone(),
            vertex: landmarks.vertices()[i],
            distance_mm: f.is_reachable(vertex).then(|| f.distance(vertex)),
        })
        .collect();
    nearest.sort_by(|a, b| {
        let key = |x: &LandmarkDistance| x.distance_mm.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then(a.index.cmp(&b.index))
    });
    let descriptors = match mesh.vertex_colors() {
        None => None,
        Some(_) => {
            let describer = descriptor_for(&config);
            let mut ws = SearchWorkspace::new(mesh.vertex_count());
            let d = m.time("descriptors", || describer.describe(&mesh, vertex, &mut ws))?;
            Some(
                d.iter()
                    .map(|t| DescriptorNorms {
                        radius_mm: t.radius_mm,
                        dimension: t.values.len(),
                        l1_norm: t.l1_norm(),
                        l2_norm: t.l2_norm(),
                    })
                    .collect(),
            )
        }
    };
    let dump = VertexDump {
        vertex,
        lesion,
        position: mesh.position(vertex),
        d_floor_mm: config.d_floor,
        feature: feature.values,
        reachable: feature.reachable,
        nearest_landmarks: nearest,
        descriptors,
    };
    let text = if args.json {
        with_manifest(&dump, &m)
    } else {
        render(&dump)
    };
    match &args.output {
        Some(p) => write_output(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(d: &VertexDump) -> String {
    let mut s = String::new();
    let p = d.position;
    let _ = write!(s, "vertex {}", d.vertex);
    if let Some(l) = &d.lesion {
        let _ = write!(s, " (lesion {l})");
    }
    let _ = writeln!(s, " at ({:.3}, {:.3}, {:.3}) mm", p[0], p[1], p[2]);
    let _ = writeln!(
        s,
        "landmark feature, {} entries (1/mm, distance floor {} mm){}:",
        d.feature.len(),
        d.d_floor_mm,
        if d.reachable { "" } else { ", unreachable" }
    );
    for (i, x) in d.feature.iter().enumerate() {
        let _ = writeln!(s, "  [{i}] {x:.6}");
    }
    let _ = writeln!(s, "nearest landmarks:");
    for l in &d.nearest_landmarks {
        match l.distance_mm {
            Some(dist) => {
                let _ = writeln!(s, "  {} (vertex {}) {dist:.3} mm", l.label, l.vertex);
            }
            None => {
                let _ = writeln!(s, "  {} (vertex {}) unreachable", l.label, l.vertex);
            }
        }
    }
    match &d.descriptors {
        None => s.push_str("texture descriptors: mesh has no colors\n"),
        Some(ds) => {
            let _ = writeln!(s, "texture descriptors:");
            for t in ds {
                let _ = writeln!(
                    s,
                    "  radius {} mm: {} bins, L1 {:.6}, L2 {:.6}",
                    t.radius_mm, t.dimension, t.l1_norm, t.l2_norm
                );
            }
        }
    }
    s
}

pub fn aggregate(args: AggregateArgs) -> Result<(), CliError> {
    let mut m = manifest();
    let mut reports = Vec::with_capacity(args.reports.len());
    for p in &args.reports {
        m.add_input("report", p)?;
        reports.push(read_json::<EvaluationReport>(p)?);
    }
    let summary = aggregate_reports(&reports)?;
    write_output(&args.output, &with_manifest(&summary, &m))
}
