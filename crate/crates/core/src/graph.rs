//! Simple undirected graphs, hop distances and the complete-digraph
//! augmentation used as model input.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Connected, simple, undirected graph on dense node indices `0..n`.
///
/// External node ids (edge-list integers or GraphML ids) are kept in
/// `labels` so layouts can be written back under the original names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    labels: Vec<String>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph with labels `"0".."n-1"`.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let labels = (0..n).map(|i| i.to_string()).collect();
        Self::with_labels(labels, edges)
    }

    pub fn with_labels(
        labels: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidSize("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidSize(format!("edge ({u},{v}) outside 0..{n}")));
            }
            if u == v {
                return Err(Error::SelfLoop(labels[u].clone()));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let g = Graph { n, edges, labels, adjacency };
        let components = g.component_count();
        if components > 1 {
            return Err(Error::DisconnectedGraph { components });
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: perm.len() });
        }
        let mut labels = vec![String::new(); self.n];
        for (i, &p) in perm.iter().enumerate() {
            labels[p] = self.labels[i].clone();
        }
        Graph::with_labels(labels, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }

    fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut components = 0;
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            components += 1;
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        components
    }

    /// Canonical edge-list text: one `u v` line per edge, `u < v`, sorted.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    /// Minimal GraphML document with node ids taken from the labels.
    pub fn to_graphml(&self) -> String {
        let mut out = String::from(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n\
             \x20 <graph id=\"G\" edgedefault=\"undirected\">\n",
        );
        for label in &self.labels {
            let _ = writeln!(out, "    <node id=\"{}\"/>", xml_escape(label));
        }
        for &(u, v) in &self.edges {
            let _ = writeln!(
                out,
                "    <edge source=\"{}\" target=\"{}\"/>",
                xml_escape(&self.labels[u]),
                xml_escape(&self.labels[v])
            );
        }
        out.push_str("  </graph>\n</graphml>\n");
        out
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Parses whitespace-separated `u v` lines. `#` starts a comment line and
/// blank lines are skipped; `n` is one more than the largest id seen.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut max_id = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let malformed = || Error::MalformedLine { line: lineno + 1, content: line.to_string() };
        let mut tokens = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(malformed());
        };
        let u: usize = a.parse().map_err(|_| malformed())?;
        let v: usize = b.parse().map_err(|_| malformed())?;
        if u == v {
            return Err(Error::SelfLoop(u.to_string()));
        }
        max_id = max_id.max(u).max(v);
        edges.push((u, v));
    }
    if edges.is_empty() {
        return Err(Error::EmptyInput);
    }
    Graph::new(max_id + 1, edges)
}

/// Reads the first `<graph>` of a GraphML document. Attributes and `<data>`
/// children are ignored; node ids map to indices in document order.
pub fn parse_graphml(text: &str) -> Result<Graph> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::XmlParseError(e.to_string()))?;
    let graph = doc
        .descendants()
        .find(|n| n.tag_name().name() == "graph")
        .ok_or_else(|| Error::XmlParseError("no <graph> element".into()))?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    for node in graph.children().filter(|c| c.tag_name().name() == "node") {
        let id = node
            .attribute("id")
            .ok_or_else(|| Error::XmlParseError("<node> without id".into()))?;
        if index.insert(id.to_string(), labels.len()).is_some() {
            return Err(Error::XmlParseError(format!("duplicate node id {id:?}")));
        }
        labels.push(id.to_string());
    }
    let mut edges = Vec::new();
    for edge in graph.children().filter(|c| c.tag_name().name() == "edge") {
        let endpoint = |attr: &str| -> Result<usize> {
            let id = edge
                .attribute(attr)
                .ok_or_else(|| Error::XmlParseError(format!("<edge> without {attr}")))?;
            index.get(id).copied().ok_or_else(|| Error::UnknownNodeRef(id.to_string()))
        };
        let (u, v) = (endpoint("source")?, endpoint("target")?);
        if u == v {
            return Err(Error::SelfLoop(labels[u].clone()));
        }
        edges.push((u, v));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    Graph::with_labels(labels, edges)
}

/// Dense symmetric matrix of hop distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<u32>,
}

impl DistanceMatrix {
    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.d[u * self.n + v]
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(u, v)| f64::from(self.get(u, v)))
    }

    pub fn max(&self) -> u32 {
        self.d.iter().copied().max().unwrap_or(0)
    }
}

/// All-pairs hop distances by one breadth-first search per source.
pub fn shortest_paths(g: &Graph) -> DistanceMatrix {
    let n = g.node_count();
    let mut d = vec![u32::MAX; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        let row = &mut d[s * n..(s + 1) * n];
        row[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = row[u];
            for &v in g.neighbors(u) {
                if row[v] == u32::MAX {
                    row[v] = du + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    DistanceMatrix { n, d }
}

/// Complete bidirectional digraph over the nodes of a graph, one entry per
/// ordered pair `(u, v)`, `u != v`, carrying `d[u][v]` as its feature.
///
/// A message along `(u, v)` flows from `u` into `v`.
#[derive(Debug, Clone)]
pub struct AugmentedGraph {
    n: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    feature: Vec<f64>,
    is_real: Vec<bool>,
}

impl AugmentedGraph {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }

    pub fn sources(&self) -> &[usize] {
        &self.src
    }

    pub fn targets(&self) -> &[usize] {
        &self.dst
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }

    pub fn edge_features(&self) -> &[f64] {
        &self.feature
    }

    pub fn is_real(&self) -> &[bool] {
        &self.is_real
    }

    /// In-degree of every node in this digraph.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &v in &self.dst {
            deg[v] += 1;
        }
        deg
    }

    /// Ablation variant without virtual edges: only the two directions of
    /// every real edge.
    pub fn real_edges_only(g: &Graph, d: &DistanceMatrix) -> Result<Self> {
        check_dims(g, d)?;
        let mut out = AugmentedGraph {
            n: g.node_count(),
            src: Vec::new(),
            dst: Vec::new(),
            feature: Vec::new(),
            is_real: Vec::new(),
        };
        for u in 0..g.node_count() {
            for &v in g.neighbors(u) {
                out.src.push(u);
                out.dst.push(v);
                out.feature.push(f64::from(d.get(u, v)));
                out.is_real.push(true);
            }
        }
        Ok(out)
    }
}

fn check_dims(g: &Graph, d: &DistanceMatrix) -> Result<()> {
    if g.node_count() != d.node_count() {
        return Err(Error::DimensionMismatch { expected: g.node_count(), actual: d.node_count() });
    }
    Ok(())
}

pub fn augment(g: &Graph, d: &DistanceMatrix) -> Result<AugmentedGraph> {
    check_dims(g, d)?;
    let n = g.node_count();
    let m = n * n.saturating_sub(1);
    let mut out = AugmentedGraph {
        n,
        src: Vec::with_capacity(m),
        dst: Vec::with_capacity(m),
        feature: Vec::with_capacity(m),
        is_real: Vec::with_capacity(m),
    };
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            let duv = d.get(u, v);
            out.src.push(u);
            out.dst.push(v);
            out.feature.push(f64::from(duv));
            out.is_real.push(duv == 1);
        }
    }
    Ok(out)
}

/// Families of synthetic graphs used as a stand-in for real corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Path,
    Cycle,
    Grid,
    RandomTree,
    RandomConnected,
}

impl std::str::FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "path" => GraphKind::Path,
            "cycle" => GraphKind::Cycle,
            "grid" => GraphKind::Grid,
            "random_tree" => GraphKind::RandomTree,
            "random_connected" => GraphKind::RandomConnected,
            other => return Err(Error::InvalidConfig(format!("unknown graph kind {other:?}"))),
        })
    }
}

/// `rows x cols` lattice, node `r * cols + c`.
pub fn grid(rows: usize, cols: usize) -> Result<Graph> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidSize(format!("grid {rows}x{cols}")));
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    Graph::new(rows * cols, edges)
}

/// Deterministic per `(kind, n, seed)`.
pub fn generate_synthetic(kind: GraphKind, n: usize, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidSize("n must be at least 1".into()));
    }
    match kind {
        GraphKind::Path => Graph::new(n, (1..n).map(|i| (i - 1, i))),
        GraphKind::Cycle => {
            if n < 3 {
                return Err(Error::InvalidSize(format!("cycle needs n >= 3, got {n}")));
            }
            Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
        }
        GraphKind::Grid => {
            // Row-major fill of the smallest near-square lattice holding n nodes.
            let rows = (n as f64).sqrt().floor().max(1.0) as usize;
            let cols = n.div_ceil(rows);
            let mut edges = Vec::new();
            for v in 0..n {
                let c = v % cols;
                if c + 1 < cols && v + 1 < n {
                    edges.push((v, v + 1));
                }
                if v + cols < n {
                    edges.push((v, v + cols));
                }
            }
            Graph::new(n, edges)
        }
        GraphKind::RandomTree => {
            let mut rng = rng::stream(seed, "graph");
            Graph::new(n, random_tree_edges(n, &mut rng))
        }
        GraphKind::RandomConnected => {
            let mut rng = rng::stream(seed, "graph");
            let mut edges = random_tree_edges(n, &mut rng);
            let mut present: BTreeSet<(usize, usize)> =
                edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
            let max_edges = n * (n - 1) / 2;
            let extra = (n / 3).min(max_edges - edges.len());
            let mut added = 0;
            while added < extra {
                let u = rng.gen_range(0..n);
                let v = rng.gen_range(0..n);
                if u != v && present.insert((u.min(v), u.max(v))) {
                    edges.push((u, v));
                    added += 1;
                }
            }
            Graph::new(n, edges)
        }
    }
}

/// Recipe for a seeded synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Graph `i` uses `kinds[i % kinds.len()]`.
    pub kinds: Vec<GraphKind>,
    pub count: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
}

/// Generates `spec.count` graphs with node counts uniform in
/// `[min_nodes, max_nodes]`.
pub fn synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Vec<Graph>> {
    if spec.kinds.is_empty() || spec.min_nodes == 0 || spec.min_nodes > spec.max_nodes {
        return Err(Error::InvalidConfig(format!(
            "synthetic dataset needs kinds and 1 <= min_nodes <= max_nodes, got {}..={}",
            spec.min_nodes, spec.max_nodes
        )));
    }
    (0..spec.count)
        .map(|i| {
            let mut rng = rng::indexed_stream(seed, "dataset", i as u64);
            let kind = spec.kinds[i % spec.kinds.len()];
            let mut n = rng.gen_range(spec.min_nodes..=spec.max_nodes);
            if kind == GraphKind::Cycle {
                n = n.max(3);
            }
            generate_synthetic(kind, n, rng.gen())
        })
        .collect()
}

/// Uniform random attachment tree with shuffled labels.
fn random_tree_edges(n: usize, rng: &mut rng::Rng) -> Vec<(usize, usize)> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    (1..n).map(|i| (perm[rng.gen_range(0..i)], perm[i])).collect()
}
