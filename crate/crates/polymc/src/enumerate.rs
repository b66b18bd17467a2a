//! Enumeration of all connected vertex sets of bounded size containing a
//! given vertex. This is the engine behind single-polymer sampling and the
//! brute-force oracles.

use crate::graph::{HostGraph, Vertex};

/// A connected vertex set together with the anchor it was enumerated from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConnectedSet {
    /// Sorted vertex ids; the induced subgraph is connected.
    pub vertices: Vec<Vertex>,
    pub anchor: Vertex,
}

/// Upper bound on the number of connected induced subgraphs of size `k`
/// containing a fixed vertex in a graph of maximum degree `delta >= 3`:
/// `(e * delta)^(k-1)`. Overflow saturates to +infinity.
pub fn connected_sets_count_bound(delta: usize, k: usize) -> f64 {
    debug_assert!(delta >= 3, "bound is stated for max degree >= 3");
    debug_assert!(k >= 1);
    (std::f64::consts::E * delta as f64).powi(k as i32 - 1)
}

/// Enumerates every connected vertex set of size at most `k` containing `v`,
/// each exactly once, in lexicographic order of the sorted vertex sequence.
pub fn connected_sets_at(g: &HostGraph, v: Vertex, k: usize) -> Vec<ConnectedSet> {
    let mut out = Vec::new();
    enumerate_connected_sets(g, v, k, None, &mut |set| {
        out.push(ConnectedSet { vertices: set.to_vec(), anchor: v });
        true
    });
    out.sort_unstable_by(|a, b| a.vertices.cmp(&b.vertices));
    debug_assert_bound(g, k, &out);
    out
}

/// As [`connected_sets_at`], but restricted to sets whose minimum vertex is
/// `v`. Iterating anchors then yields each connected set exactly once, which
/// is how whole-graph polymer enumeration deduplicates.
pub fn connected_sets_at_min(g: &HostGraph, v: Vertex, k: usize) -> Vec<ConnectedSet> {
    let mut out = Vec::new();
    enumerate_connected_sets(g, v, k, Some(v), &mut |set| {
        out.push(ConnectedSet { vertices: set.to_vec(), anchor: v });
        true
    });
    out.sort_unstable_by(|a, b| a.vertices.cmp(&b.vertices));
    out
}

/// Streaming form: calls `visit` with each set (sorted) as it is generated,
/// in generation order (not canonical order). Returning `false` from `visit`
/// aborts the walk. `min_vertex` restricts to sets with no vertex below it.
///
/// Each set is produced exactly once: candidates are consumed from an
/// extension queue, and once a candidate has been branched on it is banned
/// from the rest of that subtree, so a set's membership pattern fixes a
/// unique generation path.
pub fn enumerate_connected_sets<F>(
    g: &HostGraph,
    v: Vertex,
    k: usize,
    min_vertex: Option<Vertex>,
    visit: &mut F,
) where
    F: FnMut(&[Vertex]) -> bool,
{
    if k == 0 {
        return;
    }
    let floor = min_vertex.unwrap_or(0);
    if v < floor {
        return;
    }
    let mut current = vec![v];
    let mut banned = vec![false; g.n()];
    banned[v as usize] = true;
    let frontier: Vec<Vertex> =
        g.neighbors(v).iter().copied().filter(|&u| u >= floor).collect();
    let mut sorted = Vec::with_capacity(k);
    extend(g, k, floor, &mut current, frontier, &mut banned, &mut sorted, visit);
    // `banned` flags are restored on unwind, so the scratch state is clean.
}

#[allow(clippy::too_many_arguments)]
fn extend<F>(
    g: &HostGraph,
    k: usize,
    floor: Vertex,
    current: &mut Vec<Vertex>,
    frontier: Vec<Vertex>,
    banned: &mut [bool],
    sorted: &mut Vec<Vertex>,
    visit: &mut F,
) -> bool
where
    F: FnMut(&[Vertex]) -> bool,
{
    sorted.clear();
    sorted.extend_from_slice(current);
    sorted.sort_unstable();
    if !visit(sorted) {
        return false;
    }
    if current.len() == k {
        return true;
    }
    let mut newly_banned = Vec::new();
    let mut ok = true;
    for (i, &u) in frontier.iter().enumerate() {
        if banned[u as usize] {
            continue;
        }
        banned[u as usize] = true;
        newly_banned.push(u);
        current.push(u);
        let mut next_frontier: Vec<Vertex> = frontier[i + 1..]
            .iter()
            .copied()
            .filter(|&w| !banned[w as usize])
            .collect();
        for &w in g.neighbors(u) {
            if w >= floor && !banned[w as usize] && !next_frontier.contains(&w) {
                next_frontier.push(w);
            }
        }
        if !extend(g, k, floor, current, next_frontier, banned, sorted, visit) {
            ok = false;
        }
        current.pop();
        if !ok {
            break;
        }
    }
    for u in newly_banned {
        banned[u as usize] = false;
    }
    ok
}

#[cfg(debug_assertions)]
fn debug_assert_bound(g: &HostGraph, k: usize, sets: &[ConnectedSet]) {
    if g.max_degree() < 3 {
        return;
    }
    let mut per_size = vec![0u64; k + 1];
    for s in sets {
        per_size[s.vertices.len()] += 1;
    }
    for (size, &count) in per_size.iter().enumerate().skip(1) {
        let bound = connected_sets_count_bound(g.max_degree(), size);
        assert!(
            count as f64 <= bound,
            "size-{size} count {count} exceeds bound {bound}"
        );
    }
}

#[cfg(not(debug_assertions))]
fn debug_assert_bound(_: &HostGraph, _: usize, _: &[ConnectedSet]) {}
