//! Mesh graphs: adjacency, degree, combinatorial Laplacian `L = D − A`,
//! signed edge gradient and the Laplacian eigendecomposition.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mesh::TriangleMesh;

/// Default cap on the vertex count for dense eigendecomposition.
pub const DEFAULT_EIGEN_CAP: usize = 5000;

/// Edge weighting scheme. Only binary weights are used in practice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeWeights {
    #[default]
    Binary,
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// columns within a row are sorted.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.data[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.data[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.nrows, self.ncols));
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[[r, c]] = v;
            }
        }
        d
    }

    pub fn transpose(&self) -> CsrMatrix {
        let triplets = (0..self.nrows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)))
            .collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, triplets)
    }

    pub fn mul_vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.ncols);
        Array1::from_shape_fn(self.nrows, |r| self.row(r).map(|(c, v)| v * x[c]).sum())
    }

    /// `self · X` for a dense `X`.
    pub fn mul_mat(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut out = Array2::zeros((self.nrows, x.ncols()));
        for r in 0..self.nrows {
            let mut row = out.row_mut(r);
            for (c, v) in self.row(r) {
                row.scaled_add(v, &x.row(c));
            }
        }
        out
    }

    /// `selfᵀ · Y` for a dense `Y`, without forming the transpose.
    pub fn tr_mul_mat(&self, y: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(y.nrows(), self.nrows);
        let mut out = Array2::zeros((self.ncols, y.ncols()));
        for r in 0..self.nrows {
            let yr = y.row(r);
            for (c, v) in self.row(r) {
                out.row_mut(c).scaled_add(v, &yr);
            }
        }
        out
    }
}

/// Weighted mesh graph with its Laplacian and edge gradient.
#[derive(Debug, Clone)]
pub struct CorticalGraph {
    adjacency: CsrMatrix,
    degrees: Array1<f64>,
    laplacian: CsrMatrix,
    gradient: CsrMatrix,
    edges: Vec<(usize, usize)>,
    weights: EdgeWeights,
}

impl CorticalGraph {
    /// Graph whose edges are the triangle edges of `mesh`.
    pub fn from_mesh(mesh: &TriangleMesh, weights: EdgeWeights) -> Self {
        Self::from_edges(mesh.n_vertices(), &mesh.edges(), weights)
            .expect("a validated mesh yields a valid connected graph")
    }

    /// Graph from an explicit undirected edge list. Edges are deduplicated
    /// and the graph must be connected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], weights: EdgeWeights) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("graph has no vertices".into()));
        }
        let mut list: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "edge ({a}, {b}) on a graph with {n} vertices"
                )));
            }
            if a == b {
                return Err(Error::InvalidMesh(format!("self-loop at vertex {a}")));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        list.dedup();

        let weight = |_: (usize, usize)| match weights {
            EdgeWeights::Binary => 1.0,
        };
        let mut adj = Vec::with_capacity(2 * list.len());
        let mut grad = Vec::with_capacity(2 * list.len());
        for (e, &(a, b)) in list.iter().enumerate() {
            let w = weight((a, b));
            adj.push((a, b, w));
            adj.push((b, a, w));
            grad.push((e, a, w));
            grad.push((e, b, -w));
        }
        let adjacency = CsrMatrix::from_triplets(n, n, adj);
        let degrees = Array1::from_shape_fn(n, |k| adjacency.row(k).map(|(_, v)| v).sum());
        let mut lap: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|k| adjacency.row(k).map(move |(c, v)| (k, c, -v)))
            .collect();
        lap.extend((0..n).map(|k| (k, k, degrees[k])));
        let laplacian = CsrMatrix::from_triplets(n, n, lap);
        let gradient = CsrMatrix::from_triplets(list.len(), n, grad);

        let graph = CorticalGraph {
            adjacency,
            degrees,
            laplacian,
            gradient,
            edges: list,
            weights,
        };
        let components = graph.components();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(graph)
    }

    pub fn n_vertices(&self) -> usize {
        self.degrees.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn degrees(&self) -> &Array1<f64> {
        &self.degrees
    }

    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }

    /// `E × N` signed incidence: row `e = (k, k')`, `k < k'`, holds
    /// `+A_kk'` at `k` and `−A_kk'` at `k'`.
    pub fn gradient(&self) -> &CsrMatrix {
        &self.gradient
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> EdgeWeights {
        self.weights
    }

    /// Neighbours of vertex `k`.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.row(k).map(|(c, _)| c)
    }

    /// Number of connected components (breadth-first search).
    pub fn components(&self) -> usize {
        let n = self.n_vertices();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut queue = std::collections::VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(k) = queue.pop_front() {
                for j in self.neighbors(k) {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        count
    }

    /// Whether `vertices` induce a connected subgraph.
    pub fn is_connected_subset(&self, vertices: &[usize]) -> bool {
        if vertices.is_empty() {
            return false;
        }
        let n = self.n_vertices();
        let mut member = vec![false; n];
        for &v in vertices {
            if v >= n {
                return false;
            }
            member[v] = true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![vertices[0]];
        seen[vertices[0]] = true;
        let mut reached = 1;
        while let Some(k) = stack.pop() {
            for j in self.neighbors(k) {
                if member[j] && !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    stack.push(j);
                }
            }
        }
        let distinct = member.iter().filter(|&&m| m).count();
        reached == distinct
    }

    /// Full dense eigendecomposition of the Laplacian, refused above `cap`
    /// vertices.
    pub fn eigendecompose(&self, cap: usize) -> Result<LaplacianSpectrum> {
        let n = self.n_vertices();
        if n > cap {
            return Err(Error::TooLarge { n, cap });
        }
        let (mut values, vectors) = linalg::sym_eigh(self.laplacian.to_dense().view())?;
        values.mapv_inplace(|v| v.max(0.0));
        let lambda_max = values[n - 1];
        Ok(LaplacianSpectrum {
            eigenvalues: values,
            eigenvectors: vectors,
            lambda_max,
        })
    }
}

/// Eigenpairs of the graph Laplacian, eigenvalues ascending. Column `l` of
/// `eigenvectors` is the Fourier mode for `eigenvalues[l]`.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
    pub lambda_max: f64,
}

impl LaplacianSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Graph Fourier transform `⟨χ_l, f⟩`.
    pub fn forward(&self, f: ArrayView1<f64>) -> Array1<f64> {
        self.eigenvectors.t().dot(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_icosphere;
    use ndarray::array;

    #[test]
    fn path_graph_laplacian() {
        let g = CorticalGraph::from_edges(3, &[(0, 1), (1, 2)], EdgeWeights::Binary).unwrap();
        let expected = array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        assert_eq!(g.laplacian().to_dense(), expected);
        let spec = g.eigendecompose(DEFAULT_EIGEN_CAP).unwrap();
        for (v, e) in spec.eigenvalues.iter().zip([0.0, 1.0, 3.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn triangle_graph() {
        let mesh =
            TriangleMesh::new(vec![[0., 0., 0.], [1., 0., 0.], [0., 1., 0.]], vec![[0, 1, 2]])
                .unwrap();
        let g = CorticalGraph::from_mesh(&mesh, EdgeWeights::Binary);
        assert!(g.degrees().iter().all(|&d| d == 2.0));
        let spec = g.eigendecompose(DEFAULT_EIGEN_CAP).unwrap();
        for (v, e) in spec.eigenvalues.iter().zip([0.0, 3.0, 3.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn complete_graph_k4() {
        let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let g = CorticalGraph::from_edges(4, &edges, EdgeWeights::Binary).unwrap();
        let spec = g.eigendecompose(DEFAULT_EIGEN_CAP).unwrap();
        for (v, e) in spec.eigenvalues.iter().zip([0.0, 4.0, 4.0, 4.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn icosahedron_degrees() {
        let g = CorticalGraph::from_mesh(&generate_icosphere(0, 0.1).unwrap(), EdgeWeights::Binary);
        assert!(g.degrees().iter().all(|&d| d == 5.0));
        assert_eq!(g.n_edges(), 30);
    }

    #[test]
    fn gradient_rows_and_gram() {
        let g = CorticalGraph::from_mesh(&generate_icosphere(1, 0.1).unwrap(), EdgeWeights::Binary);
        let grad = g.gradient();
        for e in 0..g.n_edges() {
            let row: Vec<_> = grad.row(e).collect();
            assert_eq!(row.len(), 2);
            let (k, kp) = g.edges()[e];
            assert_eq!(row, vec![(k, 1.0), (kp, -1.0)]);
        }
        let dense = grad.to_dense();
        let gram = dense.t().dot(&dense);
        assert_eq!(gram, g.laplacian().to_dense());
    }

    #[test]
    fn cap_is_enforced() {
        let g = CorticalGraph::from_mesh(&generate_icosphere(1, 0.1).unwrap(), EdgeWeights::Binary);
        let e = g.eigendecompose(10).unwrap_err().to_string();
        assert!(e.contains("lower the mesh resolution"), "{e}");
    }

    #[test]
    fn disconnected_edges_rejected() {
        assert!(matches!(
            CorticalGraph::from_edges(4, &[(0, 1), (2, 3)], EdgeWeights::Binary),
            Err(Error::Disconnected { components: 2 })
        ));
        assert!(CorticalGraph::from_edges(2, &[(0, 5)], EdgeWeights::Binary).is_err());
    }

    #[test]
    fn connected_subsets() {
        let g = CorticalGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], EdgeWeights::Binary).unwrap();
        assert!(g.is_connected_subset(&[1, 2]));
        assert!(!g.is_connected_subset(&[0, 2]));
        assert!(!g.is_connected_subset(&[]));
    }

    #[test]
    fn csr_transpose_products() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 2, 1.0), (1, 0, 2.0), (0, 2, 0.5)]);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.nnz(), 2);
        let y = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(m.tr_mul_mat(y.view()), m.transpose().mul_mat(y.view()));
        assert_eq!(m.tr_mul_mat(y.view()), m.to_dense().t().dot(&y));
    }
}
