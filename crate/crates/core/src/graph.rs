//! Undirected network topologies, Laplacians and their spectra.
//!
//! A [`Topology`] is any simple undirected graph. A [`Graph`] is a topology
//! that has been checked to be connected; the consensus engine and the
//! analysis only accept the latter.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

/// Resample budget for random connected graphs.
pub const MAX_RANDOM_ATTEMPTS: usize = 1000;

/// Simple undirected graph on nodes `0..n`, possibly disconnected.
///
/// Edges are kept as a sorted list of pairs `(i, j)` with `i < j`, alongside
/// compressed per-node neighbor lists. Position `k` in the concatenated
/// neighbor lists identifies the directed reception `i <- j`, which is how
/// per-link channel noise is indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Topology {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("graph needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::param(format!("edge ({i}, {j}) out of range for N={n}")));
            }
            if i == j {
                return Err(Error::param(format!("self loop at node {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<_> = set.into_iter().collect();

        let mut adj = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(2 * edges.len());
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Ok(Self { n, edges, offsets, neighbors })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor list of node `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// First directed-reception slot belonging to node `i`.
    pub fn slot_offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Number of directed receptions, i.e. twice the edge count.
    pub fn directed_edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn degree_sum(&self) -> usize {
        self.neighbors.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Breadth-first connectivity check.
    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// `L = D - A`. Integer-valued entries, so symmetric and zero row sums exactly.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            l[(i, j)] = -1.0;
            l[(j, i)] = -1.0;
        }
        for i in 0..self.n {
            l[(i, i)] = self.degree(i) as f64;
        }
        l
    }

    /// Ascending Laplacian eigenvalues; valid for disconnected inputs too.
    pub fn laplacian_eigenvalues(&self) -> Vec<f64> {
        let eig = self.laplacian().symmetric_eigen();
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        Topology::new(self.n, self.edges.iter().map(|&(i, j)| (perm[i], perm[j])))
    }

    /// Plain-text edge list: first line `N`, then one `i j` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty edge list".into()))?;
        let n: usize = header
            .parse()
            .map_err(|_| Error::Config(format!("bad node count line {header:?}")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let parse = |p: Option<&str>| -> Result<usize> {
                p.and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad edge line {line:?}")))
            };
            let i = parse(parts.next())?;
            let j = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::Config(format!("bad edge line {line:?}")));
            }
            edges.push((i, j));
        }
        Topology::new(n, edges).map_err(|e| Error::Config(e.to_string()))
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::param("permutation length mismatch"));
    }
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::param("not a permutation"));
        }
    }
    Ok(())
}

/// A connected [`Topology`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph(Topology);

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::try_from(Topology::new(n, edges)?)
    }

    pub fn topology(&self) -> &Topology {
        &self.0
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Ok(Graph(self.0.permuted(perm)?))
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        Self::try_from(Topology::parse_edge_list(text)?).map_err(|e| Error::Config(e.to_string()))
    }

    /// Eigendecomposition of the Laplacian, see [`Spectrum`].
    pub fn spectrum(&self) -> Result<Spectrum> {
        Spectrum::of(self)
    }
}

impl TryFrom<Topology> for Graph {
    type Error = Error;

    fn try_from(t: Topology) -> Result<Self> {
        if !t.is_connected() {
            return Err(Error::param(format!(
                "graph on {} nodes is not connected ({} components)",
                t.n,
                t.component_count()
            )));
        }
        Ok(Graph(t))
    }
}

impl Deref for Graph {
    type Target = Topology;

    fn deref(&self) -> &Topology {
        &self.0
    }
}

/// Deterministic graph families with known algebraic connectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Complete,
    Star,
    Ring,
    Line,
    /// Balanced binary tree, node `i` attached to `(i - 1) / 2`.
    Tree,
    /// Ring plus antipodal chords (Moebius ladder); needs even `N`.
    Cubic,
    /// Circulant graph joining each node to its `k / 2` nearest neighbors on
    /// either side; `k` even.
    KRegularLattice { k: usize },
    BipartiteComplete { p: usize, q: usize },
}

impl Family {
    pub fn name(&self) -> String {
        match self {
            Family::Complete => "complete".into(),
            Family::Star => "star".into(),
            Family::Ring => "ring".into(),
            Family::Line => "line".into(),
            Family::Tree => "tree".into(),
            Family::Cubic => "cubic".into(),
            Family::KRegularLattice { k } => format!("k_regular_lattice(k={k})"),
            Family::BipartiteComplete { p, q } => format!("bipartite_complete(p={p},q={q})"),
        }
    }

    /// Closed-form `lambda_2(L)` where the family has one.
    pub fn algebraic_connectivity(&self, n: usize) -> Option<f64> {
        let nf = n as f64;
        match *self {
            Family::Complete => Some(nf),
            Family::Star if n >= 3 => Some(1.0),
            Family::Star => Some(2.0),
            Family::Ring => Some(4.0 * (PI / nf).sin().powi(2)),
            Family::Line => Some(4.0 * (PI / (2.0 * nf)).sin().powi(2)),
            Family::KRegularLattice { k } => {
                let k1 = (k + 1) as f64;
                Some(k1 - (k1 * PI / nf).sin() / (PI / nf).sin())
            }
            Family::BipartiteComplete { p, q } if p.max(q) >= 2 => Some(p.min(q) as f64),
            Family::BipartiteComplete { .. } => Some(2.0),
            Family::Tree | Family::Cubic => None,
        }
    }
}

/// Builds the `n`-node member of a deterministic family.
pub fn build_named(family: Family, n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::param(format!("{} needs N >= 2, got {n}", family.name())));
    }
    let mut edges = Vec::new();
    match family {
        Family::Complete => {
            for i in 0..n {
                for j in i + 1..n {
                    edges.push((i, j));
                }
            }
        }
        Family::Star => edges.extend((1..n).map(|j| (0, j))),
        Family::Line => edges.extend((0..n - 1).map(|i| (i, i + 1))),
        Family::Ring => {
            if n < 3 {
                return Err(Error::param("ring needs N >= 3"));
            }
            edges.extend((0..n).map(|i| (i, (i + 1) % n)));
        }
        Family::Tree => edges.extend((1..n).map(|i| ((i - 1) / 2, i))),
        Family::Cubic => {
            if n < 4 || !n.is_multiple_of(2) {
                return Err(Error::param(format!("cubic graph needs even N >= 4, got {n}")));
            }
            edges.extend((0..n).map(|i| (i, (i + 1) % n)));
            edges.extend((0..n / 2).map(|i| (i, i + n / 2)));
        }
        Family::KRegularLattice { k } => {
            if k == 0 || k % 2 != 0 || k >= n {
                return Err(Error::param(format!(
                    "k-regular lattice needs even k with 0 < k < N, got k={k}, N={n}"
                )));
            }
            for i in 0..n {
                for step in 1..=k / 2 {
                    edges.push((i, (i + step) % n));
                }
            }
        }
        Family::BipartiteComplete { p, q } => {
            if p == 0 || q == 0 || p + q != n {
                return Err(Error::param(format!(
                    "bipartite_complete needs p, q >= 1 with p + q = N, got p={p}, q={q}, N={n}"
                )));
            }
            for i in 0..p {
                for j in p..n {
                    edges.push((i, j));
                }
            }
        }
    }
    Graph::new(n, edges)
}

/// Random graph models; instances are resampled until connected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RandomModel {
    ErdosRenyi { n: usize, p: f64 },
    /// Nodes uniform on the unit square, joined when closer than `radius`.
    Geometric { n: usize, radius: f64 },
}

pub fn build_random(model: RandomModel, seed: u64) -> Result<Graph> {
    let n = match model {
        RandomModel::ErdosRenyi { n, p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::param(format!("edge probability must be in (0, 1], got {p}")));
            }
            n
        }
        RandomModel::Geometric { n, radius } => {
            if !(radius > 0.0) {
                return Err(Error::param(format!("radius must be positive, got {radius}")));
            }
            n
        }
    };
    if n < 2 {
        return Err(Error::param(format!("random graph needs N >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RANDOM_ATTEMPTS {
        let mut edges = Vec::new();
        match model {
            RandomModel::ErdosRenyi { p, .. } => {
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < p {
                            edges.push((i, j));
                        }
                    }
                }
            }
            RandomModel::Geometric { radius, .. } => {
                let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
                for i in 0..n {
                    for j in i + 1..n {
                        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
                        if dx.hypot(dy) <= radius {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
        let t = Topology::new(n, edges)?;
        if t.is_connected() {
            return Ok(Graph(t));
        }
    }
    Err(Error::Generation(format!(
        "{model:?} not connected after {MAX_RANDOM_ATTEMPTS} attempts (seed {seed})"
    )))
}

/// Laplacian eigendecomposition `L = U diag(lambda) U^T` with ascending
/// eigenvalues and `U = [1/sqrt(N), Phi]`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    /// The `N - 1` columns of `U` orthogonal to the constant vector.
    pub phi: DMatrix<f64>,
    /// `-lambda_2, ..., -lambda_N`.
    pub b_diag: Vec<f64>,
}

impl Spectrum {
    pub fn of(g: &Graph) -> Result<Self> {
        let n = g.node_count();
        let eig = g.laplacian().symmetric_eigen();
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("Laplacian eigensolver returned non-finite values"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            eigenvectors.set_column(col, &eig.eigenvectors.column(k));
        }
        if eigenvectors.column(0).sum() < 0.0 {
            eigenvectors.column_mut(0).neg_mut();
        }
        if eigenvalues[0].abs() > ZERO_EIGENVALUE_TOL
            || (n > 1 && eigenvalues[1] <= ZERO_EIGENVALUE_TOL)
        {
            return Err(Error::numeric(format!(
                "unexpected Laplacian spectrum for a connected graph: lambda_1={}, lambda_2={}",
                eigenvalues[0],
                eigenvalues.get(1).copied().unwrap_or(f64::NAN)
            )));
        }
        let phi = eigenvectors.columns(1, n - 1).into_owned();
        let b_diag = eigenvalues.iter().skip(1).map(|v| -v).collect();
        Ok(Self { eigenvalues, eigenvectors, phi, b_diag })
    }

    pub fn node_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda2(&self) -> f64 {
        self.eigenvalues[1]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `lambda_2, ..., lambda_N`.
    pub fn nonzero_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues.as_slice()[1..]
    }
}
