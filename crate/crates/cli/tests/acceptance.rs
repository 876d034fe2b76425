//! Acceptance gate: eight end-to-end criteria at their stated tolerances and
//! runtime budgets. Prints one PASS/FAIL line per criterion, then fails if
//! any criterion failed.
//!
//! The lines go straight to the process's stdout, so they show in a plain
//! `cargo test` run without `--nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lesiontrack_core::correspondence::{
    coarse_match, combined_match, gaussian_score, member_texture_scores, refine_match,
    region_from_field, region_sigma, SearchRegion,
};
use lesiontrack_core::descriptors::{
    landmark_feature, texture_score, ColorChannels, FeatureTable, HistogramBins,
    LocalTextureDescriptor, RadialHistogram, TextureDescriptor,
};
use lesiontrack_core::evaluation::{cle, success_rate, EvaluationReport};
use lesiontrack_core::geodesics::{
    landmark_fields, single_source_field, single_source_field_with, GeodesicBackend,
    SearchWorkspace,
};
use lesiontrack_core::pipeline::{confidence, run, run_methods, ConfidenceInputs, PipelineRun};
use lesiontrack_core::synth::{generate_pair, icosphere, SynthPair, SynthSpec};
use lesiontrack_core::{Method, PipelineConfig, TexturedMesh};
use lesiontrack_testkit::{
    argmax_first, cosine, distinct_vertices, random_colors, random_surface, AllPairs,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(budget: Duration, t: Instant) -> Result<f64, String> {
    let s = t.elapsed().as_secs_f64();
    check(t.elapsed() < budget, || {
        format!("took {s:.1} s, budget {} s", budget.as_secs())
    })?;
    Ok(s)
}

fn oracle(m: &TexturedMesh) -> AllPairs {
    let mut edges = Vec::new();
    for v in 0..m.vertex_count() {
        for (u, w) in m.adjacency().neighbors(v) {
            if v < u {
                edges.push((v, u, w));
            }
        }
    }
    AllPairs::new(m.vertex_count(), &edges)
}

fn surface(seed: u64, cols: usize, rows: usize, island: bool) -> TexturedMesh {
    let (v, t) = random_surface(seed, cols, rows, 2.0, island);
    TexturedMesh::new(v, t).unwrap()
}

fn geodesic_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut fields = 0;
    for i in 0..20u64 {
        let island = i % 3 == 0;
        let cols = rng.random_range(3..=25);
        let cap = if island { 491 } else { 500 };
        let rows = rng.random_range(3..=(cap / cols).min(40));
        let m = surface(100 + i, cols, rows, island);
        check(m.vertex_count() <= 500, || "mesh too large".into())?;
        let ap = oracle(&m);
        for s in 0..m.vertex_count() {
            let f = single_source_field(&m, s).map_err(|e| e.to_string())?;
            check(f.distances() == ap.row(s).as_slice(), || {
                format!(
                    "mesh {i} ({} vertices), source {s} differs",
                    m.vertex_count()
                )
            })?;
            fields += 1;
        }
    }
    let s = within(Duration::from_secs(10), t)?;
    Ok(format!("20 meshes, {fields} fields equal, {s:.1} s"))
}

fn pole_to_equator(level: u32, backend: GeodesicBackend) -> f64 {
    let (v, t) = icosphere(100.0, level);
    let equator: Vec<usize> = (0..v.len()).filter(|&i| v[i][2].abs() < 1e-9).collect();
    let m = TexturedMesh::new(v, t).unwrap();
    let f = single_source_field_with(&m, 0, backend).unwrap();
    equator
        .iter()
        .map(|&i| f.distance(i))
        .fold(f64::INFINITY, f64::min)
}

fn sphere_sanity() -> Outcome {
    let t = Instant::now();
    let exact = 50.0 * PI;
    let e4 = (pole_to_equator(4, GeodesicBackend::FastMarching) - exact).abs() / exact;
    let e5 = (pole_to_equator(5, GeodesicBackend::FastMarching) - exact).abs() / exact;
    let s = within(Duration::from_secs(5), t)?;
    // Edge-graph paths, for reference only.
    let d4 = (pole_to_equator(4, GeodesicBackend::Dijkstra) - exact) / exact;
    let d5 = (pole_to_equator(5, GeodesicBackend::Dijkstra) - exact) / exact;
    let detail = format!(
        "fast marching error {:.3}% (level 4), {:.3}% (level 5), {s:.1} s; edge paths {:.2}% / {:.2}%",
        100.0 * e4,
        100.0 * e5,
        100.0 * d4,
        100.0 * d5
    );
    check(e4 < 0.03, || format!("level 4 error above 3%: {detail}"))?;
    check(e5 <= e4, || {
        format!("error grew with subdivision: {detail}")
    })?;
    Ok(detail)
}

fn cles(pair: &SynthPair, out: &PipelineRun) -> Vec<f64> {
    out.records
        .iter()
        .zip(pair.ground_truth.entries())
        .map(|(r, g)| {
            assert_eq!(r.loi_label, g.label);
            cle(
                &pair.target,
                r.target_vertex,
                g.vertex,
                GeodesicBackend::Dijkstra,
            )
            .unwrap()
        })
        .collect()
}

fn identity_exactness() -> Outcome {
    let mut pair = generate_pair(&SynthSpec::two_limb()).map_err(|e| e.to_string())?;
    pair.target = pair.source.clone();
    pair.target_landmarks = pair.source_landmarks.clone();
    pair.ground_truth = pair.lesions.clone();
    let n = pair.source.vertex_count();
    check(n >= 45_000, || format!("figure has only {n} vertices"))?;
    check(pair.lesions.len() >= 10, || "fewer than 10 lesions".into())?;
    let t = Instant::now();
    let out = run(
        pair.scan_pair(),
        &PipelineConfig::default(),
        Method::Iterative,
    )
    .map_err(|e| e.to_string())?;
    let report = EvaluationReport::build(
        &out.records,
        &pair.ground_truth,
        &pair.target,
        &[1.0],
        GeodesicBackend::Dijkstra,
        Value::Null,
    )
    .map_err(|e| e.to_string())?;
    let s = within(Duration::from_secs(60), t)?;
    let first = out
        .records
        .iter()
        .filter(|r| r.confident && r.anchored_at_iteration == Some(1))
        .count();
    check(first == out.records.len(), || {
        format!("{first}/{} confident at iteration 1", out.records.len())
    })?;
    check(report.rate_at(1.0) == Some(1.0), || {
        format!("success {:?}", report.rate_at(1.0))
    })?;
    check(report.mean_cle_mm == 0.0, || {
        format!("mean CLE {}", report.mean_cle_mm)
    })?;
    Ok(format!(
        "{n} vertices, {} lesions confident at iteration 1, mean CLE 0, {s:.1} s",
        out.records.len()
    ))
}

fn bent_capsule(seed: u64, landmark_jitter: f64) -> SynthPair {
    let mut spec = SynthSpec {
        seed,
        landmark_jitter_mm: landmark_jitter,
        ..SynthSpec::default()
    };
    spec.deformation.bend_deg = 30.0;
    assert_eq!((spec.lesion_count, spec.landmark_count), (12, 8));
    assert_eq!(spec.texture.noise_std, 0.02);
    generate_pair(&spec).unwrap()
}

fn near_isometric() -> Outcome {
    let t = Instant::now();
    let pair = bent_capsule(0, 0.0);
    let out = run(
        pair.scan_pair(),
        &PipelineConfig::default(),
        Method::Iterative,
    )
    .map_err(|e| e.to_string())?;
    let errors = cles(&pair, &out);
    let s = within(Duration::from_secs(120), t)?;
    let rate = success_rate(&errors, 10.0).unwrap();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let detail = format!(
        "{} vertices, success@10mm {rate}, mean CLE {mean:.3} mm, {s:.1} s",
        pair.source.vertex_count()
    );
    check(rate == 1.0 && mean < 5.0, || detail.clone())?;
    Ok(detail)
}

fn method_ordering() -> Outcome {
    let t = Instant::now();
    let methods = [
        Method::ShapeOnly,
        Method::SinglePass,
        Method::TextureOnly,
        Method::Iterative,
    ];
    let mut holds = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let pair = bent_capsule(seed, 15.0);
        let runs = run_methods(pair.scan_pair(), &PipelineConfig::default(), &methods)
            .map_err(|e| e.to_string())?;
        let r: Vec<f64> = runs
            .iter()
            .map(|out| success_rate(&cles(&pair, out), 5.0).unwrap())
            .collect();
        let (shape, combined, texture, iterative) = (r[0], r[1], r[2], r[3]);
        let ok = shape <= combined && combined <= iterative && texture > shape;
        holds += usize::from(ok);
        rows.push(format!(
            "seed {seed}: shape {shape:.2} combined {combined:.2} texture {texture:.2} iterative {iterative:.2}{}",
            if ok { "" } else { " (violated)" }
        ));
    }
    let detail = format!(
        "ordering holds on {holds}/5 seeds, {:.1} s\n      {}",
        t.elapsed().as_secs_f64(),
        rows.join("\n      ")
    );
    check(holds >= 4, || detail.clone())?;
    Ok(detail)
}

fn oracle_feature(ap: &AllPairs, landmarks: &[usize], v: usize, floor: f64) -> Vec<f64> {
    landmarks
        .iter()
        .map(|&l| {
            let d = ap.distance(l, v);
            if d.is_finite() {
                1.0 / d.max(floor)
            } else {
                0.0
            }
        })
        .collect()
}

fn argmax_equivalence() -> Outcome {
    const FLOOR: f64 = 0.1;
    const EPS1: f64 = 8.0;
    const EPS2: f64 = 0.97;
    const W: [f64; 3] = [0.5, 0.3, 0.2];
    let describer = RadialHistogram {
        radii: [2.0, 4.0, 8.0],
        bins: HistogramBins {
            radial: 2,
            intensity: 8,
        },
        channels: ColorChannels::Luminance,
        backend: GeodesicBackend::Dijkstra,
    };
    let mut lois = 0;
    for seed in 0..5u64 {
        let source = surface(seed, 20, 10, false)
            .with_vertex_colors(random_colors(seed, 200))
            .unwrap();
        let target = surface(seed + 500, 20, 10, false)
            .with_vertex_colors(random_colors(seed + 1, 200))
            .unwrap();
        let (so, to) = (oracle(&source), oracle(&target));
        let landmarks = distinct_vertices(seed, 200, 6);
        let src_fields = landmark_fields(&source, &landmarks, GeodesicBackend::Dijkstra).unwrap();
        let tgt_fields = landmark_fields(&target, &landmarks, GeodesicBackend::Dijkstra).unwrap();
        let table = FeatureTable::build(&tgt_fields, FLOOR).unwrap();
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|v| oracle_feature(&to, &landmarks, v, FLOOR))
            .collect();
        let mut ws = SearchWorkspace::new(200);
        let target_desc: Vec<_> = (0..200)
            .map(|v| describer.describe(&target, v, &mut ws).unwrap())
            .collect();
        for x in distinct_vertices(seed + 99, 200, 10) {
            let feature = landmark_feature(&src_fields, x, FLOOR).unwrap();
            let query = oracle_feature(&so, &landmarks, x, FLOOR);
            let sims: Vec<f64> = rows.iter().map(|r| cosine(&query, r)).collect();
            let coarse = coarse_match(&feature, &table).unwrap();
            check(coarse == argmax_first(&sims), || {
                format!("coarse differs, seed {seed} LOI {x}")
            })?;

            let field = single_source_field(&target, coarse).unwrap();
            let region = region_from_field(&field, &table, EPS1, EPS2);
            let members: Vec<usize> = (0..200)
                .filter(|&v| {
                    to.distance(coarse, v) < EPS1 || cosine(&rows[coarse], &rows[v]) > EPS2
                })
                .collect();
            check(region.members == members, || {
                format!("region differs, seed {seed} LOI {x}")
            })?;

            let src_desc = describer.describe(&source, x, &mut ws).unwrap();
            let member_desc: Vec<_> = members.iter().map(|&v| target_desc[v].clone()).collect();
            let tex: Vec<f64> = members
                .iter()
                .map(|&v| {
                    (0..3)
                        .map(|i| W[i] * cosine(&src_desc[i].values, &target_desc[v][i].values))
                        .sum::<f64>()
                        .clamp(0.0, 1.0)
                })
                .collect();
            check(
                member_texture_scores(&src_desc, &member_desc, W).unwrap() == tex,
                || format!("texture scores differ, seed {seed} LOI {x}"),
            )?;
            let refined = refine_match(&src_desc, &region, &member_desc, W).unwrap();
            check(refined.vertex == members[argmax_first(&tex)], || {
                format!("refine differs, seed {seed} LOI {x}")
            })?;

            let dists: Vec<f64> = members.iter().map(|&v| to.distance(coarse, v)).collect();
            let sigma = dists.iter().copied().fold(0.0, f64::max);
            check(region_sigma(&dists) == sigma, || "sigma differs".into())?;
            let geo: Vec<f64> = dists
                .iter()
                .map(|d| {
                    if sigma > 0.0 {
                        (-(d * d) / (2.0 * sigma * sigma)).exp()
                    } else {
                        1.0
                    }
                })
                .collect();
            check(
                dists
                    .iter()
                    .zip(&geo)
                    .all(|(d, g)| gaussian_score(*d, sigma) == *g),
                || "geometric scores differ".into(),
            )?;
            let scores: Vec<f64> = geo
                .iter()
                .zip(&tex)
                .map(|(g, t)| 0.5 * g + 0.5 * t)
                .collect();
            let best = combined_match(&region, &tex, &geo, 0.5, 0.5).unwrap();
            check(best.vertex == members[argmax_first(&scores)], || {
                format!("combined differs, seed {seed} LOI {x}")
            })?;
            lois += 1;
        }
    }
    Ok(format!(
        "{lois} LOIs on 200-vertex pairs: coarse, refine and combined equal exhaustive scans"
    ))
}

fn random_descriptors(rng: &mut ChaCha8Rng) -> [TextureDescriptor; 3] {
    let radii = [10.0, 20.0, 40.0];
    std::array::from_fn(|i| TextureDescriptor {
        radius_mm: radii[i],
        values: (0..8).map(|_| rng.random_range(0.0..1.0)).collect(),
    })
}

fn property_suite(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases = 200;

    // Success curve is monotone in the criterion.
    for _ in 0..cases {
        let n = rng.random_range(1..40);
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..80.0)).collect();
        let curve: Vec<f64> = (1..=50)
            .map(|c| success_rate(&e, c as f64).unwrap())
            .collect();
        check(curve.windows(2).all(|w| w[0] <= w[1]), || {
            "success curve decreased".into()
        })?;
    }

    // Confidence in `any` mode survives relaxation.
    for _ in 0..cases {
        let config = PipelineConfig {
            eps3: rng.random_range(0.5..1.0),
            eps4: rng.random_range(0.0..30.0),
            eps5: rng.random_range(0.0..30.0),
            ..PipelineConfig::default()
        };
        let x = ConfidenceInputs {
            texture_score: rng.random_range(0.0..1.0),
            match_distance: rng.random_range(0.0..40.0),
            uniqueness_diameter: rng.random_range(0.0..40.0),
        };
        let k = rng.random_range(1..10);
        if confidence(&x, &config.relax(k), config.confidence_mode) {
            check(
                confidence(&x, &config.relax(k + 1), config.confidence_mode),
                || "relaxation revoked confidence".into(),
            )?;
        }
    }

    // Texture and combined scores stay in [0, 1].
    for _ in 0..cases {
        let (a, b) = (random_descriptors(&mut rng), random_descriptors(&mut rng));
        let w: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.01..1.0));
        let s: f64 = w.iter().sum();
        let t = texture_score(&a, &b, w.map(|x| x / s)).unwrap();
        check((0.0..=1.0).contains(&t), || format!("texture score {t}"))?;
        let tex: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..=1.0)).collect();
        let geo: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..=1.0)).collect();
        let w1 = rng.random_range(0.0..=1.0);
        let region = SearchRegion {
            anchor: 0,
            members: vec![0, 1, 2, 3],
            epsilon1: 1.0,
            epsilon2: 0.5,
        };
        let c = combined_match(&region, &tex, &geo, w1, 1.0 - w1)
            .unwrap()
            .combined_score;
        check((0.0..=1.0 + 1e-12).contains(&c), || {
            format!("combined score {c}")
        })?;
    }

    // Region monotone in eps1 and eps2; coarse argmax invariant under m -> mm.
    for seed in 0..20u64 {
        let m = surface(seed, 10, 10, false);
        let landmarks = distinct_vertices(seed, 100, 6);
        let fields = landmark_fields(&m, &landmarks, GeodesicBackend::Dijkstra).unwrap();
        let table = FeatureTable::build(&fields, 0.1).unwrap();
        let anchor = rng.random_range(0..100);
        let f = single_source_field(&m, anchor).unwrap();
        for _ in 0..10 {
            let e1 = rng.random_range(0.5..15.0);
            let e2 = rng.random_range(0.5..1.0);
            let small = region_from_field(&f, &table, e1, e2);
            let large = region_from_field(
                &f,
                &table,
                e1 + rng.random_range(0.0..10.0),
                e2 - rng.random_range(0.0..0.49),
            );
            check(small.members.iter().all(|v| large.contains(*v)), || {
                "region shrank".into()
            })?;
        }
        let (v, t) = random_surface(seed, 10, 10, 2.0, false);
        let meters =
            TexturedMesh::new(v.iter().map(|p| p.map(|x| x / 1000.0)).collect(), t.clone())
                .unwrap();
        let mm = meters.clone().scaled(1000.0).unwrap();
        let argmaxes = |mesh: &TexturedMesh, floor: f64| {
            let fields = landmark_fields(mesh, &landmarks, GeodesicBackend::Dijkstra).unwrap();
            let table = FeatureTable::build(&fields, floor).unwrap();
            (0..100)
                .map(|x| {
                    coarse_match(&landmark_feature(&fields, x, floor).unwrap(), &table).unwrap()
                })
                .collect::<Vec<_>>()
        };
        check(argmaxes(&meters, 1e-4) == argmaxes(&mm, 0.1), || {
            format!("coarse argmax changed under scaling, seed {seed}")
        })?;
    }

    // Thread count changes timings only.
    let pair_dir = small_pair_on_disk(dir, 11, 30.0);
    let one = correspond_cli(&pair_dir, &dir.join("t1.json"), &["--threads", "1"])?;
    let eight = correspond_cli(&pair_dir, &dir.join("t8.json"), &["--threads", "8"])?;
    check(without_manifest(&one) == without_manifest(&eight), || {
        "results differ between --threads 1 and --threads 8".into()
    })?;
    Ok(format!(
        "{cases} cases each for curve, confidence and score bounds; 200 region and 20 scaling cases; --threads 1 vs 8 byte-identical"
    ))
}

/// Writes a 6-lesion pair on a coarse capsule through the binary.
fn small_pair_on_disk(dir: &Path, seed: u64, bend: f64) -> std::path::PathBuf {
    let spec = serde_json::json!({
        "subdivision": 2,
        "scale_mm": 400.0,
        "lesion_count": 6,
        "seed": seed,
        "deformation": {"bend_deg": bend},
    });
    let spec_path = dir.join(format!("spec-{seed}.json"));
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let out = dir.join(format!("pair-{seed}"));
    let status = Command::new(env!("CARGO_BIN_EXE_lesiontrack"))
        .args(["synth", "--spec"])
        .arg(&spec_path)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success());
    out
}

fn correspond_cli(pair: &Path, output: &Path, extra: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lesiontrack"))
        .arg("correspond")
        .arg("--source")
        .arg(pair.join("source.obj"))
        .arg("--source-annotations")
        .arg(pair.join("source.json"))
        .arg("--target")
        .arg(pair.join("target.obj"))
        .arg("--target-landmarks")
        .arg(pair.join("target.json"))
        .arg("--output")
        .arg(output)
        .args(extra)
        .output()
        .unwrap();
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(std::fs::read_to_string(output).unwrap())
}

/// The results document with the manifest (timings, command line) removed,
/// re-serialized in its original key order.
fn without_manifest(text: &str) -> String {
    let mut v: Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("manifest");
    serde_json::to_string_pretty(&v).unwrap()
}

fn single_pass_equivalence(dir: &Path) -> Outcome {
    let pair = small_pair_on_disk(dir, 12, 30.0);
    let single: Value = serde_json::from_str(&correspond_cli(
        &pair,
        &dir.join("sp.json"),
        &["--mode", "single-pass"],
    )?)
    .unwrap();
    let config = dir.join("unsatisfiable.cfg");
    std::fs::write(
        &config,
        "max_iterations = 1\nconfidence_mode = all\neps4 = 0\neps5 = 0\n",
    )
    .unwrap();
    let gated: Value = serde_json::from_str(&correspond_cli(
        &pair,
        &dir.join("k1.json"),
        &["--mode", "iterative", "--config", config.to_str().unwrap()],
    )?)
    .unwrap();
    let a = serde_json::to_string(&single["records"]).unwrap();
    let b = serde_json::to_string(&gated["records"]).unwrap();
    check(a == b, || {
        "single-pass records differ from gated iterative records".into()
    })?;
    let n = single["records"].as_array().unwrap().len();
    check(n == 6, || format!("{n} records"))?;
    Ok(format!(
        "{n} records byte-identical; none confident: {}",
        single["records"]
            .as_array()
            .unwrap()
            .iter()
            .all(|r| r["confident"] == false)
    ))
}

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("geodesic oracle equivalence", Box::new(geodesic_oracle)),
        ("sphere geodesic sanity", Box::new(sphere_sanity)),
        ("identity-pair exactness", Box::new(identity_exactness)),
        ("near-isometric deformation", Box::new(near_isometric)),
        ("method-variant ordering", Box::new(method_ordering)),
        (
            "argmax brute-force equivalence",
            Box::new(argmax_equivalence),
        ),
        ("property suite", Box::new(|| property_suite(dir.path()))),
        (
            "single-pass equivalence",
            Box::new(|| single_pass_equivalence(dir.path())),
        ),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        match outcome {
            Ok(detail) => {
                writeln!(out, "criterion {}: PASS  {name}: {detail}", i + 1).unwrap();
            }
            Err(why) => {
                writeln!(out, "criterion {}: FAIL  {name}: {why}", i + 1).unwrap();
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
