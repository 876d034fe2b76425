//! Textured triangle meshes.
//!
//! A [`TexturedMesh`] owns vertex positions (millimeters), triangles, optional
//! per-corner texture coordinates with a texture raster, and per-vertex colors.
//! Edge adjacency and per-vertex areas are derived once at construction; the
//! mesh is immutable afterwards and can be shared freely between threads.

use std::collections::HashMap;
use std::path::PathBuf;

use thiserror::Error;

pub type Point3 = [f64; 3];
pub type Rgb = [f64; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("face {face} has {arity} vertices; only triangles are supported")]
    NonTriangleFace { face: usize, arity: usize },
    #[error("material library {0} referenced by the mesh does not exist")]
    MissingMaterialLibrary(PathBuf),
    #[error("texture {0} referenced by a material does not exist")]
    MissingTexture(PathBuf),
    #[error("failed to decode texture {path}: {message}")]
    Texture { path: PathBuf, message: String },
    #[error("triangle {triangle} references vertex {vertex}, but the mesh has {count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        vertex: usize,
        count: usize,
    },
    #[error("triangle {0} repeats a vertex")]
    DegenerateTriangle(usize),
    #[error("edge ({0}, {1}) has zero length")]
    ZeroLengthEdge(usize, usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinitePosition(usize),
    #[error("expected {expected} {what}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("vertex color {vertex} has a channel outside [0, 1]")]
    ColorOutOfRange { vertex: usize },
    #[error("mesh has neither texture coordinates with a texture image nor vertex colors")]
    NoColorSource,
    #[error("vertex colors have not been resolved")]
    ColorsUnresolved,
    #[error("vertex index {index} out of range for a mesh with {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },
    #[error("mesh has no vertices")]
    Empty,
}

/// RGB raster with channels in [0, 1], row 0 at the top of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    width: usize,
    height: usize,
    pixels: Vec<[f32; 3]>,
}

impl Texture {
    pub fn new(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self, MeshError> {
        if pixels.len() != width * height || width == 0 || height == 0 {
            return Err(MeshError::LengthMismatch {
                what: "texture pixels",
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_rgb_image(img: &image::RgbImage) -> Self {
        let pixels = img
            .pixels()
            .map(|p| {
                [
                    p[0] as f32 / 255.0,
                    p[1] as f32 / 255.0,
                    p[2] as f32 / 255.0,
                ]
            })
            .collect();
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels,
        }
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in img.pixels_mut().enumerate() {
            let c = self.pixels[i];
            *px = image::Rgb([
                (c[0].clamp(0.0, 1.0) * 255.0).round() as u8,
                (c[1].clamp(0.0, 1.0) * 255.0).round() as u8,
                (c[2].clamp(0.0, 1.0) * 255.0).round() as u8,
            ]);
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn texel(&self, x: usize, y: usize) -> [f64; 3] {
        let c = self.pixels[y * self.width + x];
        [c[0] as f64, c[1] as f64, c[2] as f64]
    }

    /// Bilinear sample at texture coordinate `uv`. `v = 0` is the bottom row
    /// (OBJ convention); lookups outside the image clamp to the border.
    pub fn sample(&self, uv: [f64; 2]) -> Rgb {
        let x = uv[0] * self.width as f64 - 0.5;
        let y = (1.0 - uv[1]) * self.height as f64 - 0.5;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let (a, b, c, d) = (
            self.texel(x0, y0),
            self.texel(x1, y0),
            self.texel(x0, y1),
            self.texel(x1, y1),
        );
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] * (1.0 - fx) + b[k] * fx;
            let bottom = c[k] * (1.0 - fx) + d[k] * fx;
            out[k] = top * (1.0 - fy) + bottom * fy;
        }
        out
    }
}

/// Undirected edge graph in compressed-row form. Neighbor lists are sorted by
/// vertex index.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    lengths: Vec<f64>,
}

impl Adjacency {
    fn build(vertices: &[Point3], triangles: &[[usize; 3]]) -> Self {
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(triangles.len() * 6);
        for t in triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.push((a, b));
                edges.push((b, a));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut offsets = vec![0usize; vertices.len() + 1];
        for &(a, _) in &edges {
            offsets[a + 1] += 1;
        }
        for i in 0..vertices.len() {
            offsets[i + 1] += offsets[i];
        }
        let neighbors: Vec<usize> = edges.iter().map(|&(_, b)| b).collect();
        let lengths = edges
            .iter()
            .map(|&(a, b)| distance(&vertices[a], &vertices[b]))
            .collect();
        Self {
            offsets,
            neighbors,
            lengths,
        }
    }

    /// Neighbors of `v` paired with the Euclidean edge length.
    #[inline]
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        self.neighbors[range.clone()]
            .iter()
            .copied()
            .zip(self.lengths[range].iter().copied())
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }
}

/// Structural diagnostics from [`TexturedMesh::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshReport {
    pub components: usize,
    pub largest_component: usize,
    pub isolated_vertices: usize,
    pub boundary_edges: usize,
    pub nonmanifold_edges: usize,
}

impl MeshReport {
    pub fn is_connected(&self) -> bool {
        self.components <= 1
    }
}

/// Result of snapping a 3D point onto the nearest mesh vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snap {
    pub vertex: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct TexturedMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    corner_uvs: Option<Vec<[f64; 2]>>,
    texture: Option<Texture>,
    vertex_colors: Option<Vec<Rgb>>,
    adjacency: Adjacency,
    incident_offsets: Vec<usize>,
    incident: Vec<usize>,
    vertex_areas: Vec<f64>,
}

impl TexturedMesh {
    /// Builds a mesh, rejecting out-of-range or repeated triangle indices and
    /// zero-length edges.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        for (i, p) in vertices.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(MeshError::NonFinitePosition(i));
            }
        }
        let n = vertices.len();
        for (ti, t) in triangles.iter().enumerate() {
            for &v in t {
                if v >= n {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: ti,
                        vertex: v,
                        count: n,
                    });
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(MeshError::DegenerateTriangle(ti));
            }
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if distance(&vertices[a], &vertices[b]) <= 0.0 {
                    return Err(MeshError::ZeroLengthEdge(a.min(b), a.max(b)));
                }
            }
        }
        let adjacency = Adjacency::build(&vertices, &triangles);
        let vertex_areas = mixed_voronoi_areas(&vertices, &triangles);
        let mut incident_offsets = vec![0usize; n + 1];
        for t in &triangles {
            for &v in t {
                incident_offsets[v + 1] += 1;
            }
        }
        for i in 0..n {
            incident_offsets[i + 1] += incident_offsets[i];
        }
        let mut fill = incident_offsets.clone();
        let mut incident = vec![0usize; triangles.len() * 3];
        for (ti, t) in triangles.iter().enumerate() {
            for &v in t {
                incident[fill[v]] = ti;
                fill[v] += 1;
            }
        }
        Ok(Self {
            vertices,
            triangles,
            corner_uvs: None,
            texture: None,
            vertex_colors: None,
            adjacency,
            incident_offsets,
            incident,
            vertex_areas,
        })
    }

    /// Attaches per-corner texture coordinates, three per triangle in triangle order.
    pub fn with_corner_uvs(mut self, uvs: Vec<[f64; 2]>) -> Result<Self, MeshError> {
        if uvs.len() != self.triangles.len() * 3 {
            return Err(MeshError::LengthMismatch {
                what: "corner texture coordinates",
                expected: self.triangles.len() * 3,
                actual: uvs.len(),
            });
        }
        self.corner_uvs = Some(uvs);
        Ok(self)
    }

    pub fn with_texture(mut self, texture: Texture) -> Self {
        self.texture = Some(texture);
        self
    }

    pub fn with_vertex_colors(mut self, colors: Vec<Rgb>) -> Result<Self, MeshError> {
        if colors.len() != self.vertices.len() {
            return Err(MeshError::LengthMismatch {
                what: "vertex colors",
                expected: self.vertices.len(),
                actual: colors.len(),
            });
        }
        for (i, c) in colors.iter().enumerate() {
            if c.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(MeshError::ColorOutOfRange { vertex: i });
            }
        }
        self.vertex_colors = Some(colors);
        Ok(self)
    }

    /// Uniformly scales positions, e.g. to convert a meter-unit scan to millimeters.
    pub fn scaled(self, factor: f64) -> Result<Self, MeshError> {
        if factor == 1.0 {
            return Ok(self);
        }
        let vertices = self
            .vertices
            .iter()
            .map(|p| [p[0] * factor, p[1] * factor, p[2] * factor])
            .collect();
        let mut out = Self::new(vertices, self.triangles)?;
        out.corner_uvs = self.corner_uvs;
        out.texture = self.texture;
        out.vertex_colors = self.vertex_colors;
        Ok(out)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn position(&self, v: usize) -> Point3 {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn corner_uvs(&self) -> Option<&[[f64; 2]]> {
        self.corner_uvs.as_deref()
    }

    pub fn texture(&self) -> Option<&Texture> {
        self.texture.as_ref()
    }

    pub fn vertex_colors(&self) -> Option<&[Rgb]> {
        self.vertex_colors.as_deref()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    /// Triangles incident to `v`, in increasing order.
    pub fn incident_triangles(&self, v: usize) -> &[usize] {
        &self.incident[self.incident_offsets[v]..self.incident_offsets[v + 1]]
    }

    /// Mixed Voronoi area of every vertex (mm²); sums to the surface area.
    pub fn vertex_areas(&self) -> &[f64] {
        &self.vertex_areas
    }

    pub fn surface_area(&self) -> f64 {
        self.vertex_areas.iter().sum()
    }

    pub fn check_vertex(&self, index: usize) -> Result<(), MeshError> {
        if index < self.vertices.len() {
            Ok(())
        } else {
            Err(MeshError::VertexOutOfRange {
                index,
                count: self.vertices.len(),
            })
        }
    }

    /// Connectivity and manifoldness diagnostics. Problems are reported, not
    /// rejected: photogrammetry meshes routinely carry non-manifold edges.
    pub fn validate(&self) -> MeshReport {
        let n = self.vertices.len();
        let mut component = vec![usize::MAX; n];
        let mut sizes = Vec::new();
        let mut stack = Vec::new();
        let mut isolated = 0;
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            if self.adjacency.degree(start) == 0 {
                isolated += 1;
            }
            let id = sizes.len();
            component[start] = id;
            stack.push(start);
            let mut size = 0;
            while let Some(v) = stack.pop() {
                size += 1;
                for (u, _) in self.adjacency.neighbors(v) {
                    if component[u] == usize::MAX {
                        component[u] = id;
                        stack.push(u);
                    }
                }
            }
            sizes.push(size);
        }
        let mut edge_faces: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edge_faces.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let boundary_edges = edge_faces.values().filter(|&&c| c == 1).count();
        let nonmanifold_edges = edge_faces.values().filter(|&&c| c > 2).count();
        MeshReport {
            components: sizes.len(),
            largest_component: sizes.iter().copied().max().unwrap_or(0),
            isolated_vertices: isolated,
            boundary_edges,
            nonmanifold_edges,
        }
    }

    /// Validates and logs warnings for disconnected or non-manifold input.
    pub fn report_warnings(&self, name: &str) -> MeshReport {
        let report = self.validate();
        if !report.is_connected() {
            log::warn!(
                "{name}: {} connected components (largest has {} of {} vertices); \
                 vertices outside a landmark's component are unreachable",
                report.components,
                report.largest_component,
                self.vertex_count()
            );
        }
        if report.nonmanifold_edges > 0 {
            log::warn!("{name}: {} non-manifold edges", report.nonmanifold_edges);
        }
        report
    }

    /// Nearest vertex by Euclidean distance; ties go to the lowest index.
    pub fn snap_point_to_vertex(&self, point: Point3) -> Result<Snap, MeshError> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.vertices.iter().enumerate() {
            let d2 = squared_distance(p, &point);
            match best {
                Some((_, b)) if d2 >= b => {}
                _ => best = Some((i, d2)),
            }
        }
        best.map(|(vertex, d2)| Snap {
            vertex,
            distance: d2.sqrt(),
        })
        .ok_or(MeshError::Empty)
    }

    /// Returns a copy with vertex colors populated.
    ///
    /// With texture coordinates and a texture image, each vertex takes the
    /// area-weighted mean of the bilinear samples at its incident corners, so a
    /// vertex on a texture seam blends the colors seen from every side. Without
    /// them, existing per-vertex colors are kept.
    pub fn resolve_vertex_colors(mut self) -> Result<Self, MeshError> {
        match (&self.corner_uvs, &self.texture) {
            (Some(uvs), Some(texture)) => {
                let n = self.vertices.len();
                let mut acc = vec![[0.0f64; 3]; n];
                let mut weight = vec![0.0f64; n];
                let mut plain = vec![[0.0f64; 3]; n];
                let mut corners = vec![0usize; n];
                for (ti, t) in self.triangles.iter().enumerate() {
                    let area = triangle_area(
                        &self.vertices[t[0]],
                        &self.vertices[t[1]],
                        &self.vertices[t[2]],
                    );
                    for (k, &v) in t.iter().enumerate() {
                        let c = texture.sample(uvs[ti * 3 + k]);
                        for ch in 0..3 {
                            acc[v][ch] += area * c[ch];
                            plain[v][ch] += c[ch];
                        }
                        weight[v] += area;
                        corners[v] += 1;
                    }
                }
                let colors = (0..n)
                    .map(|v| {
                        let mut c = if weight[v] > 0.0 {
                            acc[v].map(|x| x / weight[v])
                        } else if corners[v] > 0 {
                            plain[v].map(|x| x / corners[v] as f64)
                        } else {
                            // Unreferenced vertex: nothing to sample.
                            [0.0; 3]
                        };
                        for x in &mut c {
                            *x = x.clamp(0.0, 1.0);
                        }
                        c
                    })
                    .collect();
                self.vertex_colors = Some(colors);
                Ok(self)
            }
            _ if self.vertex_colors.is_some() => Ok(self),
            _ => Err(MeshError::NoColorSource),
        }
    }
}

#[inline]
pub fn squared_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn distance(a: &Point3, b: &Point3) -> f64 {
    squared_distance(a, b).sqrt()
}

fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Point3, b: &Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    let n = cross(&sub(b, a), &sub(c, a));
    0.5 * dot(&n, &n).sqrt()
}

/// Mixed Voronoi vertex areas: circumcentric Voronoi cells for non-obtuse
/// triangles, with the obtuse-triangle fallback of splitting the area 1/2 to
/// the obtuse corner and 1/4 to the others.
fn mixed_voronoi_areas(vertices: &[Point3], triangles: &[[usize; 3]]) -> Vec<f64> {
    let mut areas = vec![0.0; vertices.len()];
    for t in triangles {
        let p = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
        let area = triangle_area(&p[0], &p[1], &p[2]);
        if area <= 0.0 {
            continue;
        }
        // Corner dot products; negative means obtuse at that corner.
        let corner_dot = |i: usize| {
            let a = sub(&p[(i + 1) % 3], &p[i]);
            let b = sub(&p[(i + 2) % 3], &p[i]);
            dot(&a, &b)
        };
        let dots = [corner_dot(0), corner_dot(1), corner_dot(2)];
        if let Some(obtuse) = dots.iter().position(|&d| d < 0.0) {
            for (k, &v) in t.iter().enumerate() {
                areas[v] += if k == obtuse { area / 2.0 } else { area / 4.0 };
            }
            continue;
        }
        // cot(angle at corner i) = dot / |cross| = dot / (2 * area)
        let cot = dots.map(|d| d / (2.0 * area));
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            let e_ij = squared_distance(&p[i], &p[j]);
            let e_ik = squared_distance(&p[i], &p[k]);
            areas[t[i]] += (e_ij * cot[k] + e_ik * cot[j]) / 8.0;
        }
    }
    areas
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_triangle() -> TexturedMesh {
        TexturedMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_triangles() {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(matches!(
            TexturedMesh::new(v.clone(), vec![[0, 1, 3]]),
            Err(MeshError::IndexOutOfRange { vertex: 3, .. })
        ));
        assert!(matches!(
            TexturedMesh::new(v.clone(), vec![[0, 1, 1]]),
            Err(MeshError::DegenerateTriangle(0))
        ));
        let mut dup = v;
        dup.push([1.0, 0.0, 0.0]);
        assert!(matches!(
            TexturedMesh::new(dup, vec![[0, 1, 3]]),
            Err(MeshError::ZeroLengthEdge(1, 3))
        ));
    }

    #[test]
    fn areas_sum_to_surface_area() {
        let m = single_triangle();
        assert_relative_eq!(m.surface_area(), 0.5, epsilon = 1e-15);
        // Obtuse triangle takes the fallback split.
        let m = TexturedMesh::new(
            vec![[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [2.0, 0.5, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_relative_eq!(m.vertex_areas()[2], 0.5, epsilon = 1e-12);
        assert_relative_eq!(m.vertex_areas()[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn snap_exact_hit_and_tie_break() {
        let m = TexturedMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [2.0, 0.0, 0.0],
                [0.0, 2.0, 0.0],
                [2.0, 2.0, 0.0],
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        let s = m.snap_point_to_vertex([2.0, 2.0, 0.0]).unwrap();
        assert_eq!(
            s,
            Snap {
                vertex: 3,
                distance: 0.0
            }
        );
        // Equidistant to vertices 1 and 2.
        let s = m.snap_point_to_vertex([1.0, 1.0, 0.0]).unwrap();
        assert_eq!(s.vertex, 0);
        let s = m.snap_point_to_vertex([2.0, 0.0, 5.0]).unwrap();
        assert_eq!(s.vertex, 1);
        assert_relative_eq!(s.distance, 5.0);
        let empty = TexturedMesh::new(vec![], vec![]).unwrap();
        assert!(matches!(
            empty.snap_point_to_vertex([0.0; 3]),
            Err(MeshError::Empty)
        ));
    }

    #[test]
    fn uniform_texture_gives_uniform_colors() {
        let tex = Texture::new(4, 4, vec![[0.5, 0.5, 0.5]; 16]).unwrap();
        let m = single_triangle()
            .with_corner_uvs(vec![[0.1, 0.1], [0.9, 0.2], [0.3, 0.8]])
            .unwrap()
            .with_texture(tex)
            .resolve_vertex_colors()
            .unwrap();
        for c in m.vertex_colors().unwrap() {
            assert_eq!(*c, [0.5, 0.5, 0.5]);
        }
    }

    #[test]
    fn seam_vertex_averages_corners() {
        // Vertex 0 is shared by two equal-area triangles whose corners sample
        // the black and the white half of the texture respectively.
        let m = TexturedMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [-1.0, 0.0, 0.0],
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let tex = Texture::new(2, 1, vec![[0.0; 3], [1.0; 3]]).unwrap();
        let uvs = vec![
            [0.0, 0.5],
            [0.0, 0.5],
            [0.0, 0.5],
            [1.0, 0.5],
            [1.0, 0.5],
            [1.0, 0.5],
        ];
        let m = m
            .with_corner_uvs(uvs)
            .unwrap()
            .with_texture(tex)
            .resolve_vertex_colors()
            .unwrap();
        assert_eq!(m.vertex_colors().unwrap()[0], [0.5, 0.5, 0.5]);
    }

    #[test]
    fn colors_required() {
        assert!(matches!(
            single_triangle().resolve_vertex_colors(),
            Err(MeshError::NoColorSource)
        ));
        assert!(matches!(
            single_triangle().with_vertex_colors(vec![[0.0, 0.0, 1.5]; 3]),
            Err(MeshError::ColorOutOfRange { vertex: 0 })
        ));
    }

    #[test]
    fn validate_counts_components() {
        let m = TexturedMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [5.0, 0.0, 0.0],
                [6.0, 0.0, 0.0],
                [5.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let r = m.validate();
        assert_eq!(r.components, 2);
        assert_eq!(r.boundary_edges, 6);
        assert_eq!(r.nonmanifold_edges, 0);
        assert!(!r.is_connected());
    }
}
