//! Brute-force ground truth: exact partition functions, exact Gibbs laws,
//! exact transition kernels with all randomness marginalized, and
//! total-variation measurement. Everything here is guarded to desk scale.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::glauber::{glauber_propose, GlauberMove};
use crate::graph::{HostGraph, Vertex};
use crate::model::{
    all_allowed_polymers, canonical_log_weight, CanonicalConfiguration, Configuration,
    PolymerModel, Spin, DEFAULT_ENUM_BUDGET,
};

/// Default cap on enumerated configuration spaces.
pub const DEFAULT_STATE_LIMIT: usize = 5000;

/// A finite distribution over canonically ordered states.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub states: Vec<CanonicalConfiguration>,
    pub probs: Vec<f64>,
}

impl ExactDistribution {
    pub fn index_of(&self, state: &CanonicalConfiguration) -> Option<usize> {
        self.states.binary_search(state).ok()
    }
}

/// Enumerates the whole configuration space of a model, in canonical order.
pub fn enumerate_configurations<M: PolymerModel + ?Sized>(
    m: &M,
    state_limit: usize,
) -> Result<Vec<CanonicalConfiguration>> {
    let size_limit = m.size_cap().unwrap_or(m.host().n());
    enumerate_configurations_sized(m, size_limit, state_limit)
}

/// As [`enumerate_configurations`] with an explicit polymer size cutoff.
pub fn enumerate_configurations_sized<M: PolymerModel + ?Sized>(
    m: &M,
    size_limit: usize,
    state_limit: usize,
) -> Result<Vec<CanonicalConfiguration>> {
    let polymers = all_allowed_polymers(m, size_limit, DEFAULT_ENUM_BUDGET)?;
    let host = m.host();

    // closure masks over host vertices for O(words) compatibility checks
    let words = host.n().div_ceil(64);
    let masks: Vec<(Vec<u64>, Vec<u64>)> = polymers
        .iter()
        .map(|p| {
            let mut support = vec![0u64; words];
            let mut closure = vec![0u64; words];
            for &u in &p.support {
                support[u as usize / 64] |= 1 << (u % 64);
                closure[u as usize / 64] |= 1 << (u % 64);
                for &x in host.neighbors(u) {
                    closure[x as usize / 64] |= 1 << (x % 64);
                }
            }
            (support, closure)
        })
        .collect();

    let mut states = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();
    fn recurse(
        from: usize,
        polymers: &[crate::model::Polymer],
        masks: &[(Vec<u64>, Vec<u64>)],
        chosen: &mut Vec<usize>,
        states: &mut Vec<CanonicalConfiguration>,
        limit: usize,
    ) -> Result<()> {
        if states.len() >= limit {
            return Err(Error::StateSpaceTooLarge { found: states.len() + 1, limit });
        }
        states.push(CanonicalConfiguration {
            polymers: chosen.iter().map(|&i| polymers[i].clone()).collect(),
        });
        for i in from..polymers.len() {
            let compatible = chosen.iter().all(|&j| {
                masks[i].0.iter().zip(&masks[j].1).all(|(a, b)| a & b == 0)
            });
            if compatible {
                chosen.push(i);
                recurse(i + 1, polymers, masks, chosen, states, limit)?;
                chosen.pop();
            }
        }
        Ok(())
    }
    recurse(0, &polymers, &masks, &mut chosen, &mut states, state_limit)?;
    states.sort();
    Ok(states)
}

/// Exact partition function and Gibbs law by full enumeration of all
/// configurations built from polymers of size at most `size_limit`.
pub fn brute_polymer_partition<M: PolymerModel + ?Sized>(
    m: &M,
    size_limit: usize,
    state_limit: usize,
) -> Result<(f64, ExactDistribution)> {
    let states = enumerate_configurations_sized(m, size_limit, state_limit)?;
    let log_weights: Vec<f64> = states.iter().map(|s| canonical_log_weight(s, m)).collect();
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z_shifted: f64 = log_weights.iter().map(|&lw| (lw - max).exp()).sum();
    let z = z_shifted * max.exp();
    let probs: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp() / z_shifted).collect();
    Ok((z, ExactDistribution { states, probs }))
}

/// Exact hard-core partition function by branch-and-prune enumeration of
/// independent sets. Guarded to 24 vertices.
pub fn brute_hardcore_partition(g: &HostGraph, lambda: f64) -> Result<f64> {
    if g.n() > 24 {
        return Err(Error::StateSpaceTooLarge { found: g.n(), limit: 24 });
    }
    fn recurse(g: &HostGraph, v: usize, forbidden: u32, lambda: f64) -> f64 {
        if v == g.n() {
            return 1.0;
        }
        let mut total = recurse(g, v + 1, forbidden, lambda);
        if forbidden & (1 << v) == 0 {
            let mut next = forbidden;
            for &x in g.neighbors(v as Vertex) {
                next |= 1 << x;
            }
            total += lambda * recurse(g, v + 1, next, lambda);
        }
        total
    }
    Ok(recurse(g, 0, 0, lambda))
}

/// Independent subset-filter enumerator used to cross-check the recursive
/// one on small instances.
pub fn brute_hardcore_partition_subsets(g: &HostGraph, lambda: f64) -> Result<f64> {
    if g.n() > 20 {
        return Err(Error::StateSpaceTooLarge { found: g.n(), limit: 20 });
    }
    let masks: Vec<u32> = g
        .vertices()
        .map(|u| g.neighbors(u).iter().fold(0u32, |m, &v| m | (1 << v)))
        .collect();
    let mut z = 0.0;
    for set in 0u32..(1 << g.n()) {
        let independent =
            (0..g.n()).all(|v| set & (1 << v) == 0 || set & masks[v] == 0);
        if independent {
            z += lambda.powi(set.count_ones() as i32);
        }
    }
    Ok(z)
}

/// Walks all q^n colorings in mixed-radix order; `visit` returns `false` to
/// stop early.
pub fn for_each_coloring<F>(n: usize, q: u32, visit: &mut F)
where
    F: FnMut(&[Spin]) -> bool,
{
    let mut colors = vec![0 as Spin; n];
    loop {
        if !visit(&colors) {
            return;
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            colors[pos] += 1;
            if (colors[pos] as u32) < q {
                break;
            }
            colors[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact Potts partition function by summation over all colorings. Guarded
/// to q^n <= 1e7.
pub fn brute_potts_partition(g: &HostGraph, q: u32, beta: f64) -> Result<f64> {
    let states = (q as f64).powi(g.n() as i32);
    if states > 1e7 {
        return Err(Error::StateSpaceTooLarge { found: usize::MAX, limit: 10_000_000 });
    }
    let mut z = 0.0;
    for_each_coloring(g.n(), q, &mut |colors| {
        let mut bichromatic = 0u64;
        for u in g.vertices() {
            for &v in g.neighbors(u) {
                if v > u && colors[u as usize] != colors[v as usize] {
                    bichromatic += 1;
                }
            }
        }
        z += (-beta * bichromatic as f64).exp();
        true
    });
    Ok(z)
}

/// Which chain to marginalize in [`exact_kernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    Polymer,
    Glauber,
}

/// A row-stochastic transition matrix over canonically indexed states.
#[derive(Debug, Clone)]
pub struct ExactKernel {
    pub states: Vec<CanonicalConfiguration>,
    pub matrix: Vec<Vec<f64>>,
}

impl ExactKernel {
    pub fn index_of(&self, state: &CanonicalConfiguration) -> Option<usize> {
        self.states.binary_search(state).ok()
    }
}

/// Builds the exact transition kernel of the chosen dynamics with every
/// randomness source (vertex choice, branch coin, local draw, spin choice,
/// acceptance coin) marginalized out.
///
/// For the polymer dynamics the insertion branch lands on the local law
/// nu_v directly: the geometric cutoff plus acceptance step realizes nu_v
/// exactly whenever the per-cutoff proposal masses stay below one, and that
/// premise is asserted here.
pub fn exact_kernel<M: PolymerModel + ?Sized>(
    m: &M,
    dynamics: Dynamics,
    state_limit: usize,
) -> Result<ExactKernel> {
    let states = enumerate_configurations(m, state_limit)?;
    let index: HashMap<&CanonicalConfiguration, usize> =
        states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let host = m.host();
    let n = host.n();
    let count = states.len();
    let mut matrix = vec![vec![0.0; count]; count];

    match dynamics {
        Dynamics::Polymer => {
            let polymers =
                all_allowed_polymers(m, m.size_cap().unwrap_or(n), DEFAULT_ENUM_BUDGET)?;
            let mut at_vertex: Vec<Vec<usize>> = vec![Vec::new(); n];
            for (i, p) in polymers.iter().enumerate() {
                for &u in &p.support {
                    at_vertex[u as usize].push(i);
                }
            }
            for v in 0..n {
                let mass: f64 = at_vertex[v].iter().map(|&i| m.weight(&polymers[i])).sum();
                if mass > 1.0 + 1e-9 {
                    return Err(Error::InvalidModel(format!(
                        "local polymer mass {mass} at vertex {v} exceeds 1"
                    )));
                }
            }

            for (row, state) in states.iter().enumerate() {
                let config = Configuration::from_canonical(state, host);
                let pick = 1.0 / (2.0 * n as f64);
                for v in 0..n as Vertex {
                    // removal branch
                    let removal_target = match config.polymer_at(v) {
                        Some(id) => {
                            let mut next = state.clone();
                            let victim = config.get(id);
                            next.polymers.retain(|p| p != victim);
                            index[&next]
                        }
                        None => row,
                    };
                    matrix[row][removal_target] += pick;

                    // insertion branch: nu_v marginalized
                    let mut stay = 1.0;
                    for &i in &at_vertex[v as usize] {
                        let p = &polymers[i];
                        let w = m.weight(p);
                        stay -= w;
                        if config.accepts(p) {
                            let mut next = state.clone();
                            next.polymers.push(p.clone());
                            next.polymers.sort();
                            matrix[row][index[&next]] += pick * w;
                        } else {
                            matrix[row][row] += pick * w;
                        }
                    }
                    matrix[row][row] += pick * stay;
                }
            }
        }
        Dynamics::Glauber => {
            let q = m.spin_count();
            let pick = 1.0 / (n as f64 * q as f64);
            for (row, state) in states.iter().enumerate() {
                let config = Configuration::from_canonical(state, host);
                for v in 0..n as Vertex {
                    for s in 0..q as Spin {
                        match glauber_propose(&config, m, v, s) {
                            GlauberMove::SelfLoop | GlauberMove::Invalid => {
                                matrix[row][row] += pick;
                            }
                            mv @ GlauberMove::Replace { .. } => {
                                let (removed, added, log_ratio) = match &mv {
                                    GlauberMove::Replace { removed, added, log_ratio } => {
                                        (removed, added, *log_ratio)
                                    }
                                    _ => unreachable!(),
                                };
                                let accept = log_ratio.exp().min(1.0);
                                let mut next = state.clone();
                                for &id in removed {
                                    let victim = config.get(id);
                                    next.polymers.retain(|p| p != victim);
                                }
                                next.polymers.extend(added.iter().cloned());
                                next.polymers.sort();
                                let target = index[&next];
                                matrix[row][target] += pick * accept;
                                matrix[row][row] += pick * (1.0 - accept);
                            }
                        }
                    }
                }
            }
        }
    }

    for row in &matrix {
        let sum: f64 = row.iter().sum();
        debug_assert!((sum - 1.0).abs() < 1e-9, "row sum {sum}");
    }
    Ok(ExactKernel { states, matrix })
}

/// Half the L1 distance between two aligned probability vectors.
pub fn tv_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::MismatchedSupports);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0)
}

/// TV distance of empirical counts from an exact law (counts normalized).
pub fn tv_distance_counts(counts: &[u64], dist: &ExactDistribution) -> Result<f64> {
    if counts.len() != dist.probs.len() {
        return Err(Error::MismatchedSupports);
    }
    let total: u64 = counts.iter().sum();
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    tv_distance(&empirical, &dist.probs)
}

/// Largest detailed-balance violation |mu_i P_ij - mu_j P_ji| over all pairs.
pub fn max_detailed_balance_violation(kernel: &ExactKernel, probs: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..probs.len() {
        for j in 0..probs.len() {
            let gap = (probs[i] * kernel.matrix[i][j] - probs[j] * kernel.matrix[j][i]).abs();
            worst = worst.max(gap);
        }
    }
    worst
}

/// Largest component of |mu P - mu|.
pub fn max_stationarity_violation(kernel: &ExactKernel, probs: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..probs.len() {
        let image: f64 = (0..probs.len()).map(|i| probs[i] * kernel.matrix[i][j]).sum();
        worst = worst.max((image - probs[j]).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::known::{complete, complete_bipartite, cycle, path};
    use crate::model::SingleVertexModel;
    use crate::potts::{potts_polymer_model, PottsParams};
    use crate::seed::rng_from_seed;
    use rand::Rng as _;

    #[test]
    fn path_hardcore_partition() {
        let g = path(3);
        for lambda in [1.0, 0.3, 2.5] {
            let z = brute_hardcore_partition(&g, lambda).unwrap();
            assert!((z - (1.0 + 3.0 * lambda + lambda * lambda)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_vertex_hardcore() {
        let g = HostGraph::new(1, &[]).unwrap();
        assert!((brute_hardcore_partition(&g, 0.7).unwrap() - 1.7).abs() < 1e-15);
    }

    #[test]
    fn c4_hardcore_at_lambda_one_is_seven() {
        assert!((brute_hardcore_partition(&cycle(4), 1.0).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn k33_hardcore_matches_two_sided_closed_form() {
        // every independent set of K33 lives inside one side; only the
        // empty set is shared between the two side families
        let g = complete_bipartite(3, 3);
        for lambda in [1.0, 2.0, 5.0] {
            let z = brute_hardcore_partition(&g, lambda).unwrap();
            let expect = 2.0 * (1.0 + lambda).powi(3) - 1.0;
            assert!((z - expect).abs() < 1e-9, "lambda={lambda}");
        }
        assert_eq!(brute_hardcore_partition(&g, 1.0).unwrap(), 15.0);
    }

    #[test]
    fn enumerators_agree_on_random_graphs() {
        let mut rng = rng_from_seed(3);
        for trial in 0..30 {
            let n = 2 + trial % 9;
            let mut edges = Vec::new();
            for u in 0..n as Vertex {
                for v in u + 1..n as Vertex {
                    if rng.gen_bool(0.35) {
                        edges.push((u, v));
                    }
                }
            }
            let g = HostGraph::new(n, &edges).unwrap();
            let a = brute_hardcore_partition(&g, 1.3).unwrap();
            let b = brute_hardcore_partition_subsets(&g, 1.3).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.abs());
        }
    }

    #[test]
    fn potts_partition_small_cases() {
        let beta = 0.8;
        let z = brute_potts_partition(&path(2), 2, beta).unwrap();
        assert!((z - (2.0 + 2.0 * (-beta).exp())).abs() < 1e-12);

        let z = brute_potts_partition(&complete(3), 3, beta).unwrap();
        let expect = 3.0 + 18.0 * (-2.0 * beta).exp() + 6.0 * (-3.0 * beta).exp();
        assert!((z - expect).abs() < 1e-12);

        let edgeless = HostGraph::new(3, &[]).unwrap();
        assert!((brute_potts_partition(&edgeless, 3, beta).unwrap() - 27.0).abs() < 1e-9);
    }

    #[test]
    fn polymer_partition_on_example_models() {
        let lambda = 0.4;
        let m = SingleVertexModel::new(path(3), lambda);
        let (z, dist) = brute_polymer_partition(&m, 1, 100).unwrap();
        assert!((z - (1.0 + 3.0 * lambda + lambda * lambda)).abs() < 1e-12);
        assert_eq!(dist.states.len(), 5);
        let total: f64 = dist.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        // no polymers: Z = 1, all mass on the empty configuration
        let m = crate::model::UniformDecayModel::new(path(3), 1.0, Some(0));
        let (z, dist) = brute_polymer_partition(&m, 3, 100).unwrap();
        assert_eq!(z, 1.0);
        assert_eq!(dist.states, vec![CanonicalConfiguration::empty()]);
    }

    #[test]
    fn polymer_kernel_rows_and_removal_entries() {
        let lambda = 0.1;
        let m = SingleVertexModel::new(path(3), lambda);
        let kernel = exact_kernel(&m, Dynamics::Polymer, 100).unwrap();
        for row in &kernel.matrix {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // removal entry |gamma| / (2n) from {{1}} to {}
        let from = CanonicalConfiguration {
            polymers: vec![crate::model::Polymer::singleton(1, 1)],
        };
        let to = CanonicalConfiguration::empty();
        let i = kernel.index_of(&from).unwrap();
        let j = kernel.index_of(&to).unwrap();
        assert!((kernel.matrix[i][j] - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn polymer_kernel_fixes_the_gibbs_law() {
        let m = SingleVertexModel::new(path(3), 0.2);
        let kernel = exact_kernel(&m, Dynamics::Polymer, 100).unwrap();
        let (_, dist) = brute_polymer_partition(&m, 1, 100).unwrap();
        assert_eq!(kernel.states, dist.states);
        assert!(max_stationarity_violation(&kernel, &dist.probs) < 1e-12);
        assert!(max_detailed_balance_violation(&kernel, &dist.probs) < 1e-12);
    }

    #[test]
    fn glauber_kernel_self_loop_floor() {
        // choosing the current spin keeps the state, so diagonals are at
        // least 1/q
        let g = path(3);
        let params = PottsParams::new(2, 2.0, 1.0);
        let m = potts_polymer_model(&g, &params);
        let kernel = exact_kernel(&m, Dynamics::Glauber, 100).unwrap();
        for (i, row) in kernel.matrix.iter().enumerate() {
            assert!(row[i] >= 0.5 - 1e-12);
        }
    }

    #[test]
    fn tv_distance_basics() {
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((tv_distance(&[0.6, 0.4], &[0.5, 0.5]).unwrap() - 0.1).abs() < 1e-15);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn state_limit_guard() {
        let m = crate::model::UniformDecayModel::new(complete(8), 0.5, None);
        assert!(matches!(
            enumerate_configurations(&m, 10),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }
}
