//! Problem instances: undirected graphs with a designated Hamiltonian path,
//! the conflict pairs that become blocking probes, and the exhaustive
//! 3-coloring oracle every pipeline run is checked against.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: malformed header `{text}` (expected `p edge <n> <m>`)")]
    MalformedHeader { line: usize, text: String },
    #[error("missing `p edge` header")]
    MissingHeader,
    #[error("line {line}: malformed line `{text}`")]
    MalformedLine { line: usize, text: String },
    #[error("edge endpoint {vertex} out of range 1..={n}")]
    EndpointOutOfRange { vertex: usize, n: usize },
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("invalid Hamiltonian path: {0}")]
    InvalidPath(String),
    #[error("graph has no Hamiltonian path")]
    NoHamiltonianPath,
    #[error("graph has no Hamiltonian path attached")]
    MissingPath,
    #[error("graph has no vertices")]
    Empty,
    #[error("path of {0} vertices overflows the candidate count")]
    CountOverflow(usize),
}

/// One of the three colors. Ordering (R < Y < B) is the canonical sort order
/// for colorings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Color {
    R,
    Y,
    B,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::R, Color::Y, Color::B];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Color {
        Color::ALL[i]
    }

    pub fn symbol(self) -> char {
        match self {
            Color::R => 'R',
            Color::Y => 'Y',
            Color::B => 'B',
        }
    }

    pub fn from_symbol(c: char) -> Option<Color> {
        match c {
            'R' => Some(Color::R),
            'Y' => Some(Color::Y),
            'B' => Some(Color::B),
            _ => None,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// A color per path position. Also used for partial colorings over a path
/// segment (half-library strands).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Coloring(pub Vec<Color>);

impl Coloring {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn colors(&self) -> &[Color] {
        &self.0
    }

    /// True if no two consecutive positions share a color.
    pub fn is_path_feasible(&self) -> bool {
        self.0.windows(2).all(|w| w[0] != w[1])
    }
}

impl fmt::Display for Coloring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.0 {
            write!(f, "{}", c.symbol())?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid coloring symbol `{0}`")]
pub struct ParseColoringError(pub char);

impl FromStr for Coloring {
    type Err = ParseColoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| Color::from_symbol(c).ok_or(ParseColoringError(c)))
            .collect::<Result<Vec<_>, _>>()
            .map(Coloring)
    }
}

impl Serialize for Coloring {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Coloring {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A graph edge between two vertices that are not consecutive on the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConflictPair {
    /// Path positions, `i < j`, `j - i >= 2`.
    pub i: usize,
    pub j: usize,
    /// The inducing graph edge as (vertex at i, vertex at j).
    pub edge: (usize, usize),
}

/// Undirected simple graph over vertices `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    ham_path: Option<Vec<usize>>,
}

fn norm(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl Graph {
    /// Builds a graph; repeated edges (in either orientation) collapse.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            for w in [u, v] {
                if w == 0 || w > n {
                    return Err(GraphError::EndpointOutOfRange { vertex: w, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            set.insert(norm(u, v));
        }
        let mut adj = vec![Vec::new(); n + 1];
        for &(u, v) in &set {
            adj[u].push(v);
            adj[v].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        Ok(Graph { n, edges: set, adj, ham_path: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&norm(u, v))
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn ham_path(&self) -> Option<&[usize]> {
        self.ham_path.as_deref()
    }

    /// Attaches a Hamiltonian path after validating it.
    pub fn with_path(mut self, path: Vec<usize>) -> Result<Self, GraphError> {
        self.validate_path(&path)?;
        self.ham_path = Some(path);
        Ok(self)
    }

    /// Attaches the declared path or, failing that, searches for one.
    pub fn ensure_path(self) -> Result<Self, GraphError> {
        if self.ham_path.is_some() {
            return Ok(self);
        }
        let path = find_hamiltonian_path(&self)?;
        self.with_path(path)
    }

    pub fn validate_path(&self, path: &[usize]) -> Result<(), GraphError> {
        if path.len() != self.n {
            return Err(GraphError::InvalidPath(format!(
                "path has {} vertices, graph has {}",
                path.len(),
                self.n
            )));
        }
        let mut seen = vec![false; self.n + 1];
        for &v in path {
            if v == 0 || v > self.n {
                return Err(GraphError::InvalidPath(format!("vertex {v} out of range")));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(GraphError::InvalidPath(format!("vertex {v} visited twice")));
            }
        }
        for w in path.windows(2) {
            if !self.has_edge(w[0], w[1]) {
                return Err(GraphError::InvalidPath(format!("{} - {} is not an edge", w[0], w[1])));
            }
        }
        Ok(())
    }

    /// Checks a full coloring (indexed by path position) against every edge.
    pub fn is_proper(&self, coloring: &Coloring) -> bool {
        let Some(path) = self.ham_path() else { return false };
        if coloring.len() != path.len() {
            return false;
        }
        let mut color_of = vec![Color::R; self.n + 1];
        for (&v, &c) in path.iter().zip(coloring.colors()) {
            color_of[v] = c;
        }
        self.edges.iter().all(|&(u, v)| color_of[u] != color_of[v])
    }

    /// Serializes as DIMACS, including the `x path` line when present.
    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p edge {} {}\n", self.n, self.edges.len());
        for &(u, v) in &self.edges {
            out.push_str(&format!("e {u} {v}\n"));
        }
        if let Some(p) = &self.ham_path {
            out.push_str("x path");
            for v in p {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a DIMACS `.col` document. Besides `p edge n m` and `e u v`, accepts
/// the extension line `x path v1 ... vn` declaring the Hamiltonian path.
/// The declared edge count `m` is not enforced since many files list each
/// edge in both orientations.
pub fn parse_dimacs(text: &str) -> Result<Graph, GraphError> {
    let mut n = None;
    let mut edges = Vec::new();
    let mut path = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        let mut tok = line.split_whitespace();
        let malformed = || GraphError::MalformedLine { line: line_no, text: line.to_string() };
        match tok.next() {
            Some("p") => {
                let header = || GraphError::MalformedHeader { line: line_no, text: line.to_string() };
                match tok.next() {
                    Some("edge") | Some("col") => {}
                    _ => return Err(header()),
                }
                let nv: usize = tok.next().and_then(|t| t.parse().ok()).ok_or_else(header)?;
                let _m: usize = tok.next().and_then(|t| t.parse().ok()).ok_or_else(header)?;
                if tok.next().is_some() || n.is_some() {
                    return Err(header());
                }
                n = Some(nv);
            }
            Some("e") => {
                let u: usize = tok.next().and_then(|t| t.parse().ok()).ok_or_else(malformed)?;
                let v: usize = tok.next().and_then(|t| t.parse().ok()).ok_or_else(malformed)?;
                if tok.next().is_some() {
                    return Err(malformed());
                }
                if n.is_none() {
                    return Err(GraphError::MissingHeader);
                }
                edges.push((u, v));
            }
            Some("x") => {
                if tok.next() != Some("path") {
                    return Err(malformed());
                }
                let p = tok
                    .map(|t| t.parse::<usize>().map_err(|_| malformed()))
                    .collect::<Result<Vec<_>, _>>()?;
                path = Some(p);
            }
            _ => return Err(malformed()),
        }
    }
    let n = n.ok_or(GraphError::MissingHeader)?;
    let g = Graph::new(n, edges)?;
    match path {
        Some(p) => g.with_path(p),
        None => Ok(g),
    }
}

/// Deterministic backtracking search: start vertices and extensions are tried
/// in ascending id order, so the first path found is reproducible.
pub fn find_hamiltonian_path(g: &Graph) -> Result<Vec<usize>, GraphError> {
    if g.n == 0 {
        return Err(GraphError::Empty);
    }
    fn extend(g: &Graph, path: &mut Vec<usize>, used: &mut [bool]) -> bool {
        if path.len() == g.n {
            return true;
        }
        let last = *path.last().expect("non-empty path");
        for &w in g.neighbors(last) {
            if !used[w] {
                used[w] = true;
                path.push(w);
                if extend(g, path, used) {
                    return true;
                }
                path.pop();
                used[w] = false;
            }
        }
        false
    }
    let mut used = vec![false; g.n + 1];
    let mut path = Vec::with_capacity(g.n);
    for start in 1..=g.n {
        used[start] = true;
        path.push(start);
        if extend(g, &mut path, &mut used) {
            return Ok(path);
        }
        path.pop();
        used[start] = false;
    }
    Err(GraphError::NoHamiltonianPath)
}

/// Graph edges that are not consecutive on the path, as position pairs
/// sorted by `(i, j)`.
pub fn conflict_pairs(g: &Graph) -> Result<Vec<ConflictPair>, GraphError> {
    let path = g.ham_path().ok_or(GraphError::MissingPath)?;
    let mut pos = vec![0usize; g.n + 1];
    for (p, &v) in path.iter().enumerate() {
        pos[v] = p;
    }
    let mut pairs: Vec<ConflictPair> = g
        .edges()
        .filter_map(|(u, v)| {
            let (pu, pv) = (pos[u], pos[v]);
            let (i, j, a, b) = if pu < pv { (pu, pv, u, v) } else { (pv, pu, v, u) };
            (j - i >= 2).then_some(ConflictPair { i, j, edge: (a, b) })
        })
        .collect();
    pairs.sort();
    Ok(pairs)
}

/// `3 * 2^(n-1)`: the number of path-consistent colorings.
pub fn path_feasible_count(g: &Graph) -> Result<u128, GraphError> {
    let n = g.ham_path().ok_or(GraphError::MissingPath)?.len();
    if n == 0 {
        return Ok(0);
    }
    1u128
        .checked_shl((n - 1) as u32)
        .filter(|_| n <= 126)
        .map(|p| 3 * p)
        .ok_or(GraphError::CountOverflow(n))
}

/// Walks the path position by position, pruning as soon as a colored
/// conflict partner agrees. Calls `visit` on every complete solution.
fn enumerate_solutions(g: &Graph, mut visit: impl FnMut(&[Color])) -> Result<(), GraphError> {
    let path = g.ham_path().ok_or(GraphError::MissingPath)?;
    let n = path.len();
    let mut earlier = vec![Vec::new(); n];
    for cp in conflict_pairs(g)? {
        earlier[cp.j].push(cp.i);
    }
    let mut colors = vec![Color::R; n];
    fn go(p: usize, colors: &mut [Color], earlier: &[Vec<usize>], visit: &mut dyn FnMut(&[Color])) {
        if p == colors.len() {
            visit(colors);
            return;
        }
        for c in Color::ALL {
            if p > 0 && colors[p - 1] == c {
                continue;
            }
            if earlier[p].iter().any(|&i| colors[i] == c) {
                continue;
            }
            colors[p] = c;
            go(p + 1, colors, earlier, visit);
        }
    }
    if n > 0 {
        go(0, &mut colors, &earlier, &mut visit);
    }
    Ok(())
}

/// Every proper 3-coloring, indexed by path position, in canonical order.
pub fn oracle_solutions(g: &Graph) -> Result<BTreeSet<Coloring>, GraphError> {
    let mut out = BTreeSet::new();
    enumerate_solutions(g, |c| {
        out.insert(Coloring(c.to_vec()));
    })?;
    Ok(out)
}

/// Same enumeration as [`oracle_solutions`] without storing the solutions.
pub fn oracle_count(g: &Graph) -> Result<u64, GraphError> {
    let mut count = 0u64;
    enumerate_solutions(g, |_| count += 1)?;
    Ok(count)
}

/// Random test instance: the path `1..=n` under a seeded vertex relabeling,
/// plus `chords` distinct non-path edges. The path is declared on the graph.
pub fn random_path_instance(n: usize, chords: usize, seed: u64) -> Result<Graph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (1..=n).collect();
    labels.shuffle(&mut rng);
    let mut candidates: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (i + 2..n).map(move |j| (i, j))).collect();
    candidates.shuffle(&mut rng);
    let chosen = chords.min(candidates.len());
    let edges = (0..n.saturating_sub(1))
        .map(|i| (i, i + 1))
        .chain(candidates.into_iter().take(chosen))
        .map(|(i, j)| (labels[i], labels[j]));
    let g = Graph::new(n, edges)?;
    g.with_path(labels)
}

/// Draws `n` uniformly from `n_range` and a chord count from `1..=n`, then
/// builds a [`random_path_instance`].
pub fn random_instance_in(n_range: std::ops::RangeInclusive<usize>, seed: u64) -> Result<Graph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = rng.random_range(n_range);
    let chords = rng.random_range(1..=n);
    random_path_instance(n, chords, rng.random())
}
