//! Wavefront OBJ/MTL reading and writing.
//!
//! Vertex indices in the file are preserved exactly: annotations refer to
//! vertices by their position in the `v` list, so the reader never welds,
//! splits or reorders vertices. Supported records: `v` (optionally followed by
//! an RGB color), `vt`, `f`, `mtllib`, `usemtl`; everything else is skipped.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::mesh::{MeshError, Rgb, Texture, TexturedMesh};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MeshError + '_ {
    move |source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a textured mesh. A texture referenced through `map_Kd` is loaded from
/// next to the material library.
pub fn load_textured_mesh(path: impl AsRef<Path>) -> Result<TexturedMesh, MeshError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let parsed = parse_obj(&text, path)?;
    let dir = path.parent().unwrap_or(Path::new("."));

    let mut texture_path = None;
    if !parsed.material_libs.is_empty() {
        let mut materials = HashMap::new();
        for lib in &parsed.material_libs {
            let lib_path = dir.join(lib);
            if !lib_path.exists() {
                return Err(MeshError::MissingMaterialLibrary(lib_path));
            }
            let lib_text = fs::read_to_string(&lib_path).map_err(io_err(&lib_path))?;
            let lib_dir = lib_path.parent().unwrap_or(Path::new("."));
            for (name, tex) in parse_mtl(&lib_text) {
                materials.insert(name, lib_dir.join(tex));
            }
        }
        let mut textured: Vec<&PathBuf> = parsed
            .used_materials
            .iter()
            .filter_map(|m| materials.get(m))
            .collect();
        if textured.is_empty() && parsed.used_materials.is_empty() {
            // No usemtl: a lone textured material still applies.
            textured = materials.values().collect();
            textured.sort();
        }
        textured.dedup();
        if textured.len() > 1 {
            log::warn!(
                "{}: {} textured materials in use; only {} is sampled",
                path.display(),
                textured.len(),
                textured[0].display()
            );
        }
        texture_path = textured.first().map(|p| (*p).clone());
    }

    let mut mesh = TexturedMesh::new(parsed.positions, parsed.triangles)?;
    if let Some(colors) = parsed.colors {
        mesh = mesh.with_vertex_colors(colors)?;
    }
    if let Some(uvs) = parsed.corner_uvs {
        mesh = mesh.with_corner_uvs(uvs)?;
    }
    if let Some(tp) = texture_path {
        if !tp.exists() {
            return Err(MeshError::MissingTexture(tp));
        }
        let img = image::open(&tp).map_err(|e| MeshError::Texture {
            path: tp.clone(),
            message: e.to_string(),
        })?;
        mesh = mesh.with_texture(Texture::from_rgb_image(&img.to_rgb8()));
    }
    Ok(mesh)
}

struct ParsedObj {
    positions: Vec<[f64; 3]>,
    colors: Option<Vec<Rgb>>,
    triangles: Vec<[usize; 3]>,
    corner_uvs: Option<Vec<[f64; 2]>>,
    material_libs: Vec<String>,
    used_materials: Vec<String>,
}

fn parse_obj(text: &str, path: &Path) -> Result<ParsedObj, MeshError> {
    let parse_err = |line: usize, message: String| MeshError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut positions = Vec::new();
    let mut colors: Vec<Option<Rgb>> = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut triangles = Vec::new();
    let mut corner_uv_idx: Vec<Option<usize>> = Vec::new();
    let mut material_libs = Vec::new();
    let mut used_materials: Vec<String> = Vec::new();
    let mut face_count = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        let rest: Vec<&str> = tokens.collect();
        let floats = |rest: &[&str]| -> Result<Vec<f64>, MeshError> {
            rest.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("invalid number {t:?}")))
                })
                .collect()
        };
        match tag {
            "v" => {
                let f = floats(&rest)?;
                match f.len() {
                    3 | 4 => {
                        positions.push([f[0], f[1], f[2]]);
                        colors.push(None);
                    }
                    6 => {
                        positions.push([f[0], f[1], f[2]]);
                        colors.push(Some([f[3], f[4], f[5]]));
                    }
                    n => return Err(parse_err(lineno, format!("vertex with {n} components"))),
                }
            }
            "vt" => {
                let f = floats(&rest)?;
                if f.len() < 2 {
                    return Err(parse_err(lineno, "texture coordinate needs u and v".into()));
                }
                texcoords.push([f[0], f[1]]);
            }
            "f" => {
                let face = face_count;
                face_count += 1;
                if rest.len() != 3 {
                    return Err(MeshError::NonTriangleFace {
                        face,
                        arity: rest.len(),
                    });
                }
                let mut tri = [0usize; 3];
                for (k, corner) in rest.iter().enumerate() {
                    let mut parts = corner.split('/');
                    let v = parts.next().unwrap_or("");
                    let vt = parts.next().filter(|s| !s.is_empty());
                    tri[k] = resolve_index(v, positions.len())
                        .ok_or_else(|| parse_err(lineno, format!("bad vertex index {v:?}")))?;
                    let uv = match vt {
                        Some(t) => Some(resolve_index(t, texcoords.len()).ok_or_else(|| {
                            parse_err(lineno, format!("bad texture index {t:?}"))
                        })?),
                        None => None,
                    };
                    corner_uv_idx.push(uv);
                }
                triangles.push(tri);
            }
            "mtllib" => material_libs.extend(rest.iter().map(|s| s.to_string())),
            "usemtl" => {
                if let Some(name) = rest.first() {
                    if !used_materials.iter().any(|m| m == name) {
                        used_materials.push(name.to_string());
                    }
                }
            }
            _ => {}
        }
    }

    let colors = if colors.iter().all(Option::is_some) && !colors.is_empty() {
        Some(colors.into_iter().map(Option::unwrap).collect())
    } else {
        if colors.iter().any(Option::is_some) {
            log::warn!(
                "{}: only some vertices carry colors; ignoring them",
                path.display()
            );
        }
        None
    };
    let corner_uvs = if !corner_uv_idx.is_empty() && corner_uv_idx.iter().all(Option::is_some) {
        Some(
            corner_uv_idx
                .into_iter()
                .map(|i| texcoords[i.unwrap()])
                .collect(),
        )
    } else {
        if corner_uv_idx.iter().any(Option::is_some) {
            log::warn!(
                "{}: only some faces carry texture coordinates; ignoring them",
                path.display()
            );
        }
        None
    };
    Ok(ParsedObj {
        positions,
        colors,
        triangles,
        corner_uvs,
        material_libs,
        used_materials,
    })
}

/// OBJ indices are 1-based; negative values count back from the end.
fn resolve_index(token: &str, len: usize) -> Option<usize> {
    let i: i64 = token.parse().ok()?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        len as i64 + i
    } else {
        return None;
    };
    (0..len as i64).contains(&idx).then_some(idx as usize)
}

/// Material name → `map_Kd` file name.
fn parse_mtl(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut current: Option<String> = None;
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("newmtl") => current = tokens.next().map(str::to_string),
            // Options such as `-s 1 1 1` may precede the file name.
            Some("map_Kd") => {
                if let (Some(name), Some(file)) = (&current, tokens.last()) {
                    out.push((name.clone(), file.to_string()));
                }
            }
            _ => {}
        }
    }
    out
}

/// Writes `mesh` as OBJ. Vertex colors go on the `v` lines; a texture is
/// written as `<stem>.png` with a `<stem>.mtl` referencing it.
pub fn save_obj(mesh: &TexturedMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = String::new();
    out.push_str("# lesiontrack mesh (units: mm)\n");
    let textured = mesh.texture().is_some() && mesh.corner_uvs().is_some();
    if textured {
        let mtl_name = format!("{stem}.mtl");
        let png_name = format!("{stem}.png");
        let mtl = format!("newmtl skin\nKd 1 1 1\nmap_Kd {png_name}\n");
        let mtl_path = dir.join(&mtl_name);
        fs::write(&mtl_path, mtl).map_err(io_err(&mtl_path))?;
        let png_path = dir.join(&png_name);
        mesh.texture()
            .unwrap()
            .to_rgb_image()
            .save(&png_path)
            .map_err(|e| MeshError::Texture {
                path: png_path.clone(),
                message: e.to_string(),
            })?;
        let _ = writeln!(out, "mtllib {mtl_name}");
    }
    let colors = mesh.vertex_colors();
    for (i, p) in mesh.vertices().iter().enumerate() {
        match colors {
            Some(c) => {
                let c = c[i];
                let _ = writeln!(
                    out,
                    "v {} {} {} {} {} {}",
                    p[0], p[1], p[2], c[0], c[1], c[2]
                );
            }
            None => {
                let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
            }
        }
    }
    if let Some(uvs) = mesh.corner_uvs() {
        for uv in uvs {
            let _ = writeln!(out, "vt {} {}", uv[0], uv[1]);
        }
    }
    if textured {
        out.push_str("usemtl skin\n");
    }
    let has_uvs = mesh.corner_uvs().is_some();
    for (ti, t) in mesh.triangles().iter().enumerate() {
        if has_uvs {
            let base = ti * 3 + 1;
            let _ = writeln!(
                out,
                "f {}/{} {}/{} {}/{}",
                t[0] + 1,
                base,
                t[1] + 1,
                base + 1,
                t[2] + 1,
                base + 2
            );
        } else {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn single_triangle() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
        let m = load_textured_mesh(&p).unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.triangle_count(), 1);
        assert!(m.vertex_colors().is_none());
    }

    #[test]
    fn quad_face_is_rejected_with_its_index() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "q.obj",
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 2 3 4\n",
        );
        let err = load_textured_mesh(&p).unwrap_err();
        assert!(matches!(
            err,
            MeshError::NonTriangleFace { face: 1, arity: 4 }
        ));
        assert!(err.to_string().contains("face 1"));
    }

    #[test]
    fn negative_indices_and_vertex_colors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.obj",
            "v 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 0 1 0 0 0 1\nf -3 -2 -1\n",
        );
        let m = load_textured_mesh(&p).unwrap();
        assert_eq!(m.triangles()[0], [0, 1, 2]);
        assert_eq!(m.vertex_colors().unwrap()[2], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_texture_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "m.mtl",
            "newmtl skin\nmap_Kd -s 1 1 1 nowhere.png\n",
        );
        let p = write(
            dir.path(),
            "t.obj",
            "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nusemtl skin\nf 1/1 2/2 3/3\n",
        );
        match load_textured_mesh(&p) {
            Err(MeshError::MissingTexture(t)) => assert!(t.ends_with("nowhere.png")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn textured_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tex = Texture::new(
            2,
            2,
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0; 3]],
        )
        .unwrap();
        let m = TexturedMesh::new(
            vec![[0.1, 0.2, 0.3], [1.0 / 3.0, 0.0, 0.0], [0.0, 1e-7, 2.5]],
            vec![[0, 1, 2]],
        )
        .unwrap()
        .with_corner_uvs(vec![[0.25, 0.25], [0.75, 0.25], [0.5, 0.75]])
        .unwrap()
        .with_texture(tex.clone());
        let p = dir.path().join("rt.obj");
        save_obj(&m, &p).unwrap();
        let back = load_textured_mesh(&p).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.corner_uvs(), m.corner_uvs());
        assert_eq!(back.texture(), Some(&tex));
    }
}
