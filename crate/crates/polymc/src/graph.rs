//! Host graphs: bounded-degree undirected graphs with an optional
//! bipartition, the graph square, exact expansion checking on small
//! instances, a random regular bipartite generator, and the on-disk
//! text format.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub type Vertex = u32;

/// Exhaustive expansion checking is exponential in n; above this cutoff
/// reports come back `Unverified`.
pub const EXACT_EXPANSION_CUTOFF: usize = 24;

/// Immutable undirected graph with dense vertex ids `0..n`.
///
/// Adjacency lists are sorted, symmetric, loop-free and duplicate-free;
/// construction validates all of that. If a bipartition is present every
/// edge crosses it.
#[derive(Debug, Clone)]
pub struct HostGraph {
    adjacency: Vec<Vec<Vertex>>,
    max_degree: usize,
    bipartition: Option<Vec<u8>>,
}

impl HostGraph {
    /// Builds a graph from an edge list, validating all invariants.
    pub fn new(n: usize, edges: &[(Vertex, Vertex)]) -> Result<Self> {
        Self::build(n, edges, None)
    }

    /// Builds a bipartite graph; `part0` lists the side-0 vertex ids.
    pub fn new_bipartite(n: usize, edges: &[(Vertex, Vertex)], part0: &[Vertex]) -> Result<Self> {
        let mut side = vec![1u8; n];
        for &v in part0 {
            if v as usize >= n {
                return Err(Error::Validation(format!("part-0 vertex {v} out of range")));
            }
            side[v as usize] = 0;
        }
        Self::build(n, edges, Some(side))
    }

    fn build(n: usize, edges: &[(Vertex, Vertex)], bipartition: Option<Vec<u8>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("graph must have at least one vertex".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::Validation(format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(Error::Validation(format!("self-loop at vertex {u}")));
            }
            if let Some(side) = &bipartition {
                if side[u as usize] == side[v as usize] {
                    return Err(Error::Validation(format!(
                        "edge ({u}, {v}) does not cross the bipartition"
                    )));
                }
            }
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
        }
        for (v, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Validation(format!("duplicate edge at vertex {v}")));
            }
        }
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self { adjacency, max_degree, bipartition })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.adjacency[v as usize]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adjacency[v as usize].len()
    }

    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.adjacency[u as usize].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_bipartite(&self) -> bool {
        self.bipartition.is_some()
    }

    /// Side (0 or 1) of `v`, if a bipartition is declared.
    pub fn side(&self, v: Vertex) -> Option<u8> {
        self.bipartition.as_ref().map(|s| s[v as usize])
    }

    /// All vertices on side `i` of the bipartition.
    pub fn part(&self, i: u8) -> Result<Vec<Vertex>> {
        let side = self.bipartition.as_ref().ok_or(Error::MissingBipartition)?;
        Ok((0..self.n() as Vertex).filter(|&v| side[v as usize] == i).collect())
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        0..self.n() as Vertex
    }

    /// BFS distance from `u` to `v`; `None` if disconnected.
    pub fn distance(&self, u: Vertex, v: Vertex) -> Option<usize> {
        if u == v {
            return Some(0);
        }
        let mut dist = vec![usize::MAX; self.n()];
        dist[u as usize] = 0;
        let mut queue = std::collections::VecDeque::from([u]);
        while let Some(x) = queue.pop_front() {
            for &y in self.neighbors(x) {
                if dist[y as usize] == usize::MAX {
                    dist[y as usize] = dist[x as usize] + 1;
                    if y == v {
                        return Some(dist[y as usize]);
                    }
                    queue.push_back(y);
                }
            }
        }
        None
    }

    /// Whether the given sorted vertex set induces a connected subgraph.
    pub fn is_connected_set(&self, set: &[Vertex]) -> bool {
        match set.len() {
            0 => false,
            1 => true,
            _ => {
                debug_assert!(set.windows(2).all(|w| w[0] < w[1]), "set must be sorted");
                let mut seen = vec![false; set.len()];
                seen[0] = true;
                let mut stack = vec![set[0]];
                let mut count = 1;
                while let Some(x) = stack.pop() {
                    for &y in self.neighbors(x) {
                        if let Ok(idx) = set.binary_search(&y) {
                            if !seen[idx] {
                                seen[idx] = true;
                                count += 1;
                                stack.push(y);
                            }
                        }
                    }
                }
                count == set.len()
            }
        }
    }

    /// The graph square: same vertices, an edge wherever the original
    /// distance is 1 or 2. The bipartition is dropped (squaring destroys it).
    pub fn power_graph(&self, exponent: u32) -> Result<HostGraph> {
        if exponent != 2 {
            return Err(Error::Validation(format!(
                "only the graph square is supported, got exponent {exponent}"
            )));
        }
        let mut edges = Vec::new();
        for u in self.vertices() {
            let mut reach: Vec<Vertex> = self.neighbors(u).to_vec();
            for &x in self.neighbors(u) {
                reach.extend_from_slice(self.neighbors(x));
            }
            reach.sort_unstable();
            reach.dedup();
            for v in reach {
                if v > u {
                    edges.push((u, v));
                }
            }
        }
        HostGraph::new(self.n(), &edges)
    }

    /// Renders the graph in the text format accepted by [`load_graph`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if self.is_bipartite() {
            let _ = writeln!(out, "{} {} bipartite", self.n(), self.edge_count());
            let part0: Vec<String> =
                self.part(0).unwrap().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", part0.join(" "));
        } else {
            let _ = writeln!(out, "{} {}", self.n(), self.edge_count());
        }
        for u in self.vertices() {
            for &v in self.neighbors(u) {
                if v > u {
                    let _ = writeln!(out, "{u} {v}");
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Verdict of an expansion check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionKind {
    EdgeExpansion,
    BipartiteVertexExpansion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verification {
    /// Every eligible subset was enumerated.
    Exact,
    /// The instance exceeds the exhaustive cutoff; the claim was not checked.
    Unverified,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    pub kind: ExpansionKind,
    pub alpha: f64,
    pub verified: Verification,
    /// A violating set, when the exhaustive check found one.
    pub witness: Option<Vec<Vertex>>,
}

impl ExpansionReport {
    /// True when the property was exhaustively confirmed.
    pub fn holds_exactly(&self) -> bool {
        self.verified == Verification::Exact && self.witness.is_none()
    }
}

/// Number of edges leaving `set` (given as a bitmask) using precomputed
/// neighbor masks.
fn cut_size(masks: &[u64], set: u64) -> usize {
    let mut total = 0;
    let mut rest = set;
    while rest != 0 {
        let v = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        total += (masks[v] & !set).count_ones() as usize;
    }
    total
}

fn neighborhood(masks: &[u64], set: u64) -> u64 {
    let mut out = 0u64;
    let mut rest = set;
    while rest != 0 {
        let v = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        out |= masks[v];
    }
    out
}

fn neighbor_masks(g: &HostGraph) -> Vec<u64> {
    g.vertices()
        .map(|u| g.neighbors(u).iter().fold(0u64, |m, &v| m | (1 << v)))
        .collect()
}

fn mask_to_set(mask: u64) -> Vec<Vertex> {
    (0..64).filter(|&b| mask & (1u64 << b) != 0).map(|b| b as Vertex).collect()
}

/// Checks e(S, S^c) >= alpha * |S| for every nonempty S with 2|S| <= n.
///
/// Exhaustive for n <= [`EXACT_EXPANSION_CUTOFF`]; above that the report is
/// advisory only.
pub fn check_edge_expansion(g: &HostGraph, alpha: f64) -> ExpansionReport {
    assert!(alpha > 0.0, "alpha must be positive");
    let n = g.n();
    if n > EXACT_EXPANSION_CUTOFF {
        return ExpansionReport {
            kind: ExpansionKind::EdgeExpansion,
            alpha,
            verified: Verification::Unverified,
            witness: None,
        };
    }
    let masks = neighbor_masks(g);
    for set in 1u64..(1u64 << n) {
        let size = set.count_ones() as usize;
        if 2 * size > n {
            continue;
        }
        if (cut_size(&masks, set) as f64) < alpha * size as f64 {
            return ExpansionReport {
                kind: ExpansionKind::EdgeExpansion,
                alpha,
                verified: Verification::Exact,
                witness: Some(mask_to_set(set)),
            };
        }
    }
    ExpansionReport {
        kind: ExpansionKind::EdgeExpansion,
        alpha,
        verified: Verification::Exact,
        witness: None,
    }
}

/// Checks |N(S)| >= (1+alpha) * |S| for every nonempty S within one side,
/// 2|S| <= |side|, on both sides. Same exhaustive/advisory regime as the
/// edge check.
pub fn check_bipartite_vertex_expansion(g: &HostGraph, alpha: f64) -> Result<ExpansionReport> {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    if !g.is_bipartite() {
        return Err(Error::MissingBipartition);
    }
    if g.n() > EXACT_EXPANSION_CUTOFF {
        return Ok(ExpansionReport {
            kind: ExpansionKind::BipartiteVertexExpansion,
            alpha,
            verified: Verification::Unverified,
            witness: None,
        });
    }
    let masks = neighbor_masks(g);
    for i in 0..2u8 {
        let part = g.part(i)?;
        let k = part.len();
        for choice in 1u64..(1u64 << k) {
            let size = choice.count_ones() as usize;
            if 2 * size > k {
                continue;
            }
            let mut set = 0u64;
            let mut rest = choice;
            while rest != 0 {
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                set |= 1u64 << part[b];
            }
            let expansion = neighborhood(&masks, set).count_ones() as usize;
            if (expansion as f64) < (1.0 + alpha) * size as f64 {
                return Ok(ExpansionReport {
                    kind: ExpansionKind::BipartiteVertexExpansion,
                    alpha,
                    verified: Verification::Exact,
                    witness: Some(mask_to_set(set)),
                });
            }
        }
    }
    Ok(ExpansionReport {
        kind: ExpansionKind::BipartiteVertexExpansion,
        alpha,
        verified: Verification::Exact,
        witness: None,
    })
}

/// Parses the text graph format.
///
/// Line 1: `n m` or `n m bipartite`. If bipartite, line 2 lists the side-0
/// vertex ids. Then `m` lines `u v`. Lines starting with `#` are comments.
pub fn parse_graph(text: &str) -> Result<HostGraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line_no, header) = lines
        .next()
        .ok_or(Error::Parse { line: 0, msg: "empty graph file".into() })?;
    let mut fields = header.split_whitespace();
    let parse_usize = |field: Option<&str>, line: usize, what: &str| -> Result<usize> {
        field
            .ok_or(Error::Parse { line, msg: format!("missing {what}") })?
            .parse()
            .map_err(|_| Error::Parse { line, msg: format!("bad {what}") })
    };
    let n = parse_usize(fields.next(), line_no, "vertex count")?;
    let m = parse_usize(fields.next(), line_no, "edge count")?;
    let bipartite = match fields.next() {
        None => false,
        Some("bipartite") => true,
        Some(other) => {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("unexpected token {other:?} in header"),
            })
        }
    };

    let part0: Vec<Vertex> = if bipartite {
        let (line_no, l) = lines
            .next()
            .ok_or(Error::Parse { line: line_no, msg: "missing part-0 line".into() })?;
        l.split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("bad part-0 vertex id {t:?}"),
                })
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (line_no, l) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: format!("expected {m} edge lines, found {}", edges.len()),
        })?;
        let mut fields = l.split_whitespace();
        let u = parse_usize(fields.next(), line_no, "edge endpoint")? as Vertex;
        let v = parse_usize(fields.next(), line_no, "edge endpoint")? as Vertex;
        edges.push((u, v));
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(Error::Parse { line: line_no, msg: "trailing content after edges".into() });
    }

    if bipartite {
        HostGraph::new_bipartite(n, &edges, &part0)
    } else {
        HostGraph::new(n, &edges)
    }
}

pub fn load_graph(path: &Path) -> Result<HostGraph> {
    parse_graph(&std::fs::read_to_string(path)?)
}

/// Generates a delta-regular bipartite simple graph on `n_per_side` + same
/// vertices as a union of `delta` random perfect matchings, rejecting any
/// union with a repeated edge. Deterministic for a fixed seed.
pub fn generate_random_regular_bipartite(
    n_per_side: usize,
    delta: usize,
    seed: u64,
) -> Result<HostGraph> {
    const MAX_ATTEMPTS: u32 = 1000;
    if delta > n_per_side {
        return Err(Error::Validation(format!(
            "delta {delta} exceeds side size {n_per_side}"
        )));
    }
    if n_per_side == 0 || delta == 0 {
        return Err(Error::Validation("need at least one vertex and degree 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let n = 2 * n_per_side;
    'attempt: for _ in 0..MAX_ATTEMPTS {
        let mut used = vec![false; n_per_side * n_per_side];
        let mut edges = Vec::with_capacity(n_per_side * delta);
        for _ in 0..delta {
            let mut perm: Vec<usize> = (0..n_per_side).collect();
            perm.shuffle(&mut rng);
            for (left, &right) in perm.iter().enumerate() {
                let slot = left * n_per_side + right;
                if used[slot] {
                    continue 'attempt;
                }
                used[slot] = true;
                edges.push((left as Vertex, (n_per_side + right) as Vertex));
            }
        }
        let part0: Vec<Vertex> = (0..n_per_side as Vertex).collect();
        return HostGraph::new_bipartite(n, &edges, &part0);
    }
    Err(Error::GeneratorRejection(MAX_ATTEMPTS))
}

/// Convenience constructors used across tests and the oracle.
pub mod known {
    use super::*;

    pub fn path(n: usize) -> HostGraph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i as Vertex, i as Vertex + 1)).collect();
        HostGraph::new(n, &edges).unwrap()
    }

    pub fn cycle(n: usize) -> HostGraph {
        let edges: Vec<_> = (0..n).map(|i| (i as Vertex, ((i + 1) % n) as Vertex)).collect();
        HostGraph::new(n, &edges).unwrap()
    }

    /// Even cycle with the even/odd bipartition declared.
    pub fn bipartite_cycle(n: usize) -> HostGraph {
        assert!(n % 2 == 0);
        let edges: Vec<_> = (0..n).map(|i| (i as Vertex, ((i + 1) % n) as Vertex)).collect();
        let part0: Vec<Vertex> = (0..n as Vertex).step_by(2).collect();
        HostGraph::new_bipartite(n, &edges, &part0).unwrap()
    }

    pub fn complete(n: usize) -> HostGraph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u as Vertex, v as Vertex));
            }
        }
        HostGraph::new(n, &edges).unwrap()
    }

    pub fn complete_bipartite(a: usize, b: usize) -> HostGraph {
        let mut edges = Vec::new();
        for u in 0..a {
            for v in 0..b {
                edges.push((u as Vertex, (a + v) as Vertex));
            }
        }
        let part0: Vec<Vertex> = (0..a as Vertex).collect();
        HostGraph::new_bipartite(a + b, &edges, &part0).unwrap()
    }
}
