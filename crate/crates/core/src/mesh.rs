//! Triangle meshes: OFF import/export, icosphere generation and Euclidean
//! vertex distances.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

// irrational offsets keep the symmetric icosahedron vertices off the
// critical points of the folding pattern
const CORRUGATION_PHASES: [f64; 3] = [0.5 * std::f64::consts::SQRT_2, 0.5, 0.25 * std::f64::consts::PI];

/// A validated triangulated surface. Vertex coordinates are in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates index ranges, duplicate and degenerate faces, and
    /// edge-connectivity.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if n == 0 {
            return Err(Error::InvalidMesh("mesh has no vertices".into()));
        }
        if let Some(v) = vertices.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {v} has non-finite coordinates")));
        }
        let mut seen = HashSet::with_capacity(triangles.len());
        for (f, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange(format!(
                    "face {f} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("face {f} repeats a vertex")));
            }
            let mut key = *tri;
            key.sort_unstable();
            if !seen.insert(key) {
                return Err(Error::InvalidMesh(format!("face {f} is a duplicate")));
            }
        }
        let mesh = TriangleMesh {
            vertices,
            triangles,
        };
        let components = count_components(n, &mesh.edges());
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Unique undirected edges `(k, k')` with `k < k'`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Unit vertex normals: area-weighted average of incident face normals,
    /// following the face winding.
    pub fn vertex_normals(&self) -> Vec<Point3> {
        let mut acc = vec![[0.0; 3]; self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i]);
            let n = cross(sub(b, a), sub(c, a));
            for &i in t {
                for d in 0..3 {
                    acc[i][d] += n[d];
                }
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = norm(n);
                if len > 0.0 {
                    n.map(|c| c / len)
                } else {
                    n
                }
            })
            .collect()
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.vertices.len() as f64;
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for d in 0..3 {
                c[d] += v[d] / n;
            }
        }
        c
    }

    /// Radius of the smallest origin-centered ball containing the mesh.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|&v| norm(v)).fold(0.0, f64::max)
    }

    /// Pairwise straight-line distances between vertices.
    pub fn vertex_distances(&self) -> Array2<f64> {
        let n = self.vertices.len();
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for k in (i + 1)..n {
                let dist = norm(sub(self.vertices[i], self.vertices[k]));
                d[[i, k]] = dist;
                d[[k, i]] = dist;
            }
        }
        d
    }

    /// Uniformly scales all coordinates about the origin.
    pub fn scaled(&self, factor: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v.map(|c| c * factor)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Moves every vertex radially:
    /// `v ← v·(1 + amplitude·Π_d sin(frequency·v̂_d + φ_d))` with fixed
    /// phases `φ`.
    ///
    /// On a sphere this produces a star-shaped surface with gyrus-like folds,
    /// so that surface normals are no longer radial.
    pub fn corrugated(&self, amplitude: f64, frequency: f64) -> Result<TriangleMesh> {
        if !(0.0..1.0).contains(&amplitude) {
            return Err(Error::param(format!(
                "corrugation amplitude must lie in [0, 1), got {amplitude}"
            )));
        }
        let vertices = self
            .vertices
            .iter()
            .map(|&v| {
                let r = norm(v);
                if r == 0.0 {
                    return v;
                }
                let u = v.map(|c| c / r);
                let bump = u
                    .iter()
                    .zip(CORRUGATION_PHASES)
                    .map(|(c, phase)| (frequency * c + phase).sin())
                    .product::<f64>();
                v.map(|c| c * (1.0 + amplitude * bump))
            })
            .collect();
        Ok(TriangleMesh {
            vertices,
            triangles: self.triangles.clone(),
        })
    }

    /// Moves every vertex radially by an independent factor
    /// `1 + amplitude·u`, `u ~ U(-1, 1)`, deterministic in `seed`.
    ///
    /// Tilts normals at the scale of single edges, as on a jagged cortical
    /// mesh, while leaving the orientation averaged over a patch intact.
    pub fn roughened(&self, amplitude: f64, seed: u64) -> Result<TriangleMesh> {
        if !(0.0..1.0).contains(&amplitude) {
            return Err(Error::param(format!(
                "roughness amplitude must lie in [0, 1), got {amplitude}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vertices = self
            .vertices
            .iter()
            .map(|&v| {
                let f = 1.0 + amplitude * rng.random_range(-1.0..=1.0);
                v.map(|c| c * f)
            })
            .collect();
        Ok(TriangleMesh {
            vertices,
            triangles: self.triangles.clone(),
        })
    }

    pub fn to_off(&self) -> String {
        let mut s = String::new();
        let n_edges = self.edges().len();
        writeln!(s, "OFF").unwrap();
        writeln!(s, "{} {} {}", self.vertices.len(), self.triangles.len(), n_edges).unwrap();
        for v in &self.vertices {
            writeln!(s, "{:e} {:e} {:e}", v[0], v[1], v[2]).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }

    pub fn save_off(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_off()).map_err(|e| Error::io(path, e))
    }
}

/// Reads an ASCII OFF file. Only triangular faces are accepted.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_off(&text, path)
}

pub fn parse_off(text: &str, path: &Path) -> Result<TriangleMesh> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    // (line number, content) with comments and blank lines removed
    let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    });

    let (line_no, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let counts_inline;
    let counts = if header == "OFF" {
        None
    } else if let Some(rest) = header.strip_prefix("OFF") {
        counts_inline = rest.trim();
        Some(counts_inline)
    } else {
        return Err(err(line_no, format!("expected \"OFF\" header, found {header:?}")));
    };
    let (line_no, counts) = match counts {
        Some(c) => (line_no, c),
        None => lines
            .next()
            .ok_or_else(|| err(line_no + 1, "missing counts line".into()))?,
    };
    let nums: Vec<usize> = counts
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(line_no, format!("bad counts line: {e}")))?;
    if nums.len() < 2 {
        return Err(err(line_no, "counts line needs vertex and face counts".into()));
    }
    let (nv, nf) = (nums[0], nums[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(line_no, format!("expected {nv} vertices, file ended early")))?;
        let c: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(ln, format!("bad vertex coordinate: {e}")))?;
        if c.len() != 3 {
            return Err(err(ln, "vertex line needs 3 coordinates".into()));
        }
        vertices.push([c[0], c[1], c[2]]);
    }

    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(line_no, format!("expected {nf} faces, file ended early")))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(ln, format!("bad face index: {e}")))?;
        if idx.first() != Some(&3) || idx.len() < 4 {
            return Err(err(ln, "only triangular faces (\"3 i j k\") are supported".into()));
        }
        let tri = [idx[1], idx[2], idx[3]];
        if let Some(&bad) = tri.iter().find(|&&i| i >= nv) {
            return Err(err(
                ln,
                format!("face {f}: index out of range ({bad} >= {nv} vertices)"),
            ));
        }
        triangles.push(tri);
    }

    TriangleMesh::new(vertices, triangles).map_err(|e| match e {
        Error::Parse { .. } => e,
        other => err(line_no, other.to_string()),
    })
}

/// Icosahedron refined `subdivisions` times by edge-midpoint splitting, with
/// every vertex projected onto the sphere of the given radius. Faces are
/// wound counter-clockwise seen from outside.
pub fn generate_icosphere(subdivisions: u32, radius: f64) -> Result<TriangleMesh> {
    if subdivisions > 6 {
        return Err(Error::param(format!(
            "icosphere subdivisions must be in [0, 6], got {subdivisions}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param(format!("icosphere radius must be positive, got {radius}")));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for v in vertices.iter_mut() {
        *v = normalize(*v);
    }
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let m = normalize(add(vertices[a], vertices[b]));
                vertices.push(m);
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v.map(|c| c * radius)).collect();
    TriangleMesh::new(vertices, faces)
}

fn count_components(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: Point3) -> Point3 {
    let n = norm(a);
    a.map(|c| c / n)
}
