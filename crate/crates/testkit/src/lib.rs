//! Brute-force reference implementations and random fixtures for tests.
//!
//! Everything here works on plain arrays so it shares no code with the
//! library it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Point = [f64; 3];
pub type Tri = [usize; 3];

/// All-pairs shortest paths by Floyd–Warshall over an undirected weighted
/// edge list. Distances are re-accumulated along each reconstructed path,
/// starting at the source, so they carry the same rounding as a
/// single-source search that adds one edge at a time.
pub struct AllPairs {
    n: usize,
    next: Vec<usize>,
    weight: std::collections::HashMap<(usize, usize), f64>,
    reachable: Vec<bool>,
}

const NONE: usize = usize::MAX;

impl AllPairs {
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut dist = vec![f64::INFINITY; n * n];
        let mut next = vec![NONE; n * n];
        let mut weight = std::collections::HashMap::new();
        for i in 0..n {
            dist[i * n + i] = 0.0;
            next[i * n + i] = i;
        }
        for &(a, b, w) in edges {
            weight.insert((a, b), w);
            weight.insert((b, a), w);
            if w < dist[a * n + b] {
                dist[a * n + b] = w;
                dist[b * n + a] = w;
                next[a * n + b] = b;
                next[b * n + a] = a;
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = dist[i * n + k];
                if !dik.is_finite() {
                    continue;
                }
                for j in 0..n {
                    let alt = dik + dist[k * n + j];
                    if alt < dist[i * n + j] {
                        dist[i * n + j] = alt;
                        next[i * n + j] = next[i * n + k];
                    }
                }
            }
        }
        let reachable = dist.iter().map(|d| d.is_finite()).collect();
        Self {
            n,
            next,
            weight,
            reachable,
        }
    }

    /// Vertex sequence of a shortest path, or `None` when unreachable.
    pub fn path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        if !self.reachable[from * self.n + to] {
            return None;
        }
        let mut path = vec![from];
        let mut at = from;
        while at != to {
            at = self.next[at * self.n + to];
            path.push(at);
        }
        Some(path)
    }

    pub fn distance(&self, from: usize, to: usize) -> f64 {
        match self.path(from, to) {
            None => f64::INFINITY,
            Some(p) => p
                .windows(2)
                .fold(0.0, |acc, w| acc + self.weight[&(w[0], w[1])]),
        }
    }

    pub fn row(&self, from: usize) -> Vec<f64> {
        (0..self.n).map(|to| self.distance(from, to)).collect()
    }
}

/// Unique undirected edges of a triangle list, `(min, max)` sorted.
pub fn edges_of(triangles: &[Tri]) -> Vec<(usize, usize)> {
    let mut e: Vec<(usize, usize)> = triangles
        .iter()
        .flat_map(|t| (0..3).map(move |k| (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]))))
        .collect();
    e.sort_unstable();
    e.dedup();
    e
}

/// Index of the largest value; the first one wins ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

/// `a·b / sqrt(|a|² |b|²)`, 0 if either is zero, clamped to [0, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na <= 0.0 || nb <= 0.0 {
        0.0
    } else {
        (dot / (na * nb).sqrt()).clamp(0.0, 1.0)
    }
}

/// A jittered grid of `cols x rows` vertices with random diagonals, spacing
/// `pitch`, gently curved out of plane. With `island`, a second small grid
/// far away is appended, unreachable from the first.
pub fn random_surface(
    seed: u64,
    cols: usize,
    rows: usize,
    pitch: f64,
    island: bool,
) -> (Vec<Point>, Vec<Tri>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut grid = |ox: f64, cols: usize, rows: usize, rng: &mut ChaCha8Rng| {
        let base = vertices.len();
        for j in 0..rows {
            for i in 0..cols {
                let x = ox + (i as f64 + rng.random_range(-0.3..0.3)) * pitch;
                let y = (j as f64 + rng.random_range(-0.3..0.3)) * pitch;
                let z = 0.1 * pitch * ((x / pitch).sin() + (y / pitch).cos())
                    + rng.random_range(-0.2..0.2) * pitch;
                vertices.push([x, y, z]);
            }
        }
        let at = |i: usize, j: usize| base + j * cols + i;
        for j in 0..rows - 1 {
            for i in 0..cols - 1 {
                let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
                if rng.random_bool(0.5) {
                    triangles.push([a, b, d]);
                    triangles.push([a, d, c]);
                } else {
                    triangles.push([a, b, c]);
                    triangles.push([b, d, c]);
                }
            }
        }
    };
    grid(0.0, cols, rows, &mut rng);
    if island {
        grid(pitch * (cols as f64 + 50.0), 3, 3, &mut rng);
    }
    (vertices, triangles)
}

/// Random RGB colors in [0, 1].
pub fn random_colors(seed: u64, n: usize) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect()
}

/// `count` distinct vertices from `0..n`, in draw order.
pub fn distinct_vertices(seed: u64, n: usize, count: usize) -> Vec<usize> {
    assert!(count <= n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = rng.random_range(0..n);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Mean straight-line distance of `points` from their centroid.
pub fn mean_distance_to_centroid(points: &[Point]) -> f64 {
    if points.len() <= 1 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    points
        .iter()
        .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt())
        .sum::<f64>()
        / n
}
