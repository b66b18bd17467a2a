//! The hard-core application on bipartite graphs: even/odd polymer models on
//! the graph square capturing deviations from the two all-one-side ground
//! states, two-sided counting, and the end-to-end independent-set sampler.

use rand::Rng as _;
use serde::Serialize;

use crate::anneal::{estimate_with_median, EstimateReport};
use crate::dynamics::{run_chain, DEFAULT_CAP_CONST, DEFAULT_THETA};
use crate::error::Result;
use crate::graph::{
    check_bipartite_vertex_expansion, HostGraph, Vertex, EXACT_EXPANSION_CUTOFF,
};
use crate::model::{Polymer, PolymerModel, Spin};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Serialize)]
pub struct HardcoreParams {
    /// Fugacity.
    pub lambda: f64,
    /// Claimed bipartite vertex expansion, in (0,1).
    pub alpha: f64,
}

impl HardcoreParams {
    pub fn new(lambda: f64, alpha: f64) -> Self {
        assert!(lambda > 0.0);
        assert!(alpha > 0.0 && alpha < 1.0);
        HardcoreParams { lambda, alpha }
    }

    /// Whether the fugacity reaches the proven threshold `(3 delta)^(6/alpha)`.
    pub fn threshold_met(&self, delta: usize) -> bool {
        self.lambda >= (3.0 * delta.max(1) as f64).powf(6.0 / self.alpha)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HardcoreHypothesis {
    pub expansion_verified: Option<bool>,
    pub threshold_met: bool,
    pub epsilon_in_range: bool,
}

fn hypothesis(g: &HostGraph, p: &HardcoreParams, epsilon: f64) -> Result<HardcoreHypothesis> {
    let expansion_verified = if g.n() <= EXACT_EXPANSION_CUTOFF {
        Some(check_bipartite_vertex_expansion(g, p.alpha)?.holds_exactly())
    } else {
        None
    };
    Ok(HardcoreHypothesis {
        expansion_verified,
        threshold_met: p.threshold_met(g.max_degree()),
        epsilon_in_range: epsilon >= 4.0 * (-(g.n() as f64)).exp() && epsilon < 1.0,
    })
}

/// Side-`i` polymer model: small connected-in-the-square subsets of side `i`,
/// weighted by `lambda^size / (1+lambda)^|N(support)|` with the neighborhood
/// taken in the original graph.
#[derive(Debug, Clone)]
pub struct HardcorePolymerModel {
    original: HostGraph,
    square: HostGraph,
    side: u8,
    side_members: Vec<bool>,
    half_side: usize,
    lambda: f64,
    tau: f64,
}

/// Builds the side-`i` model. The host is the graph square; "small" means
/// twice the size is at most the side's cardinality.
pub fn hc_polymer_model(g: &HostGraph, p: &HardcoreParams, side: u8) -> Result<HardcorePolymerModel> {
    let part = g.part(side)?;
    let mut side_members = vec![false; g.n()];
    for &v in &part {
        side_members[v as usize] = true;
    }
    Ok(HardcorePolymerModel {
        original: g.clone(),
        square: g.power_graph(2)?,
        side,
        side_members,
        half_side: part.len(),
        lambda: p.lambda,
        tau: p.alpha * p.lambda.ln(),
    })
}

impl HardcorePolymerModel {
    pub fn side(&self) -> u8 {
        self.side
    }

    pub fn original(&self) -> &HostGraph {
        &self.original
    }

    /// Number of original-graph neighbors of the support.
    pub fn neighborhood_size(&self, support: &[Vertex]) -> usize {
        let mut nbhd: Vec<Vertex> = support
            .iter()
            .flat_map(|&u| self.original.neighbors(u).iter().copied())
            .collect();
        nbhd.sort_unstable();
        nbhd.dedup();
        nbhd.len()
    }
}

impl PolymerModel for HardcorePolymerModel {
    fn host(&self) -> &HostGraph {
        &self.square
    }

    fn spin_count(&self) -> u32 {
        2
    }

    fn ground_spin(&self, _v: Vertex) -> Spin {
        0
    }

    fn is_allowed(&self, p: &Polymer) -> bool {
        2 * p.len() <= self.half_side
            && p.support.iter().all(|&v| self.side_members[v as usize])
            && p.spins.iter().all(|&s| s == 1)
            && self.square.is_connected_set(&p.support)
    }

    fn log_weight(&self, p: &Polymer) -> f64 {
        p.len() as f64 * self.lambda.ln()
            - self.neighborhood_size(&p.support) as f64 * self.lambda.ln_1p()
    }

    fn size_cap(&self) -> Option<usize> {
        Some(self.half_side / 2)
    }

    fn tau_hint(&self) -> Option<f64> {
        Some(self.tau)
    }
}

/// An independent set, stored as sorted vertex ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct IndependentSet {
    pub members: Vec<Vertex>,
}

impl IndependentSet {
    pub fn new(mut members: Vec<Vertex>) -> Self {
        members.sort_unstable();
        members.dedup();
        IndependentSet { members }
    }

    pub fn is_valid(&self, g: &HostGraph) -> bool {
        self.members
            .iter()
            .all(|&u| g.neighbors(u).iter().all(|v| self.members.binary_search(v).is_err()))
    }
}

/// Both side estimates, in log space, plus their stable combination
/// `(1+lambda)^{n1} Z0 + (1+lambda)^{n0} Z1`.
#[derive(Debug, Clone, Serialize)]
pub struct TwoSidedEstimate {
    pub log_z0: f64,
    pub log_z1: f64,
    pub n0: usize,
    pub n1: usize,
    pub lambda: f64,
    pub log_z_combined: f64,
    /// Log-probability of choosing side 0.
    pub log_p0: f64,
    pub accuracy: f64,
    pub failure: f64,
    pub reports: Vec<EstimateReport>,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Estimates both side partition functions by median-amplified annealing at
/// the given accuracy and failure budget, and combines them.
pub fn estimate_two_sided(
    g: &HostGraph,
    p: &HardcoreParams,
    accuracy: f64,
    failure: f64,
    seed: u64,
) -> Result<TwoSidedEstimate> {
    let model0 = hc_polymer_model(g, p, 0)?;
    let model1 = hc_polymer_model(g, p, 1)?;
    let n0 = g.part(0)?.len();
    let n1 = g.part(1)?.len();
    let rep0 = estimate_with_median(&model0, accuracy, failure, derive_seed(seed, 0xa0))?;
    let rep1 = estimate_with_median(&model1, accuracy, failure, derive_seed(seed, 0xa1))?;
    let term0 = n1 as f64 * p.lambda.ln_1p() + rep0.log_z_hat;
    let term1 = n0 as f64 * p.lambda.ln_1p() + rep1.log_z_hat;
    let log_z_combined = log_add_exp(term0, term1);
    Ok(TwoSidedEstimate {
        log_z0: rep0.log_z_hat,
        log_z1: rep1.log_z_hat,
        n0,
        n1,
        lambda: p.lambda,
        log_z_combined,
        log_p0: term0 - log_z_combined,
        accuracy,
        failure,
        reports: vec![rep0, rep1],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HardcoreCountReport {
    pub log_z_hat: f64,
    pub hypothesis: HardcoreHypothesis,
    pub two_sided: TwoSidedEstimate,
    pub seed: u64,
}

impl HardcoreCountReport {
    pub fn z_hat(&self) -> f64 {
        self.log_z_hat.exp()
    }
}

/// Estimates the hard-core partition function as
/// `(1+lambda)^{n1} Zhat0 + (1+lambda)^{n0} Zhat1`, with each side estimated
/// at accuracy `epsilon/32` and failure budget `epsilon/32`. Under the
/// expansion and threshold hypotheses the result is within
/// `exp(+-epsilon)` of the truth with probability at least `1 - epsilon`.
pub fn count_hardcore(
    g: &HostGraph,
    p: &HardcoreParams,
    epsilon: f64,
    seed: u64,
) -> Result<HardcoreCountReport> {
    assert!(epsilon > 0.0 && epsilon < 1.0);
    let hyp = hypothesis(g, p, epsilon)?;
    let two_sided = estimate_two_sided(g, p, epsilon / 32.0, epsilon / 32.0, seed)?;
    Ok(HardcoreCountReport {
        log_z_hat: two_sided.log_z_combined,
        hypothesis: hyp,
        two_sided,
        seed,
    })
}

/// Prepared end-to-end sampler: the expensive two-sided estimates are
/// computed once, after which draws are cheap and independently seeded.
#[derive(Debug, Clone)]
pub struct HardcoreSampler {
    graph: HostGraph,
    models: [HardcorePolymerModel; 2],
    pub estimate: TwoSidedEstimate,
    pub hypothesis: HardcoreHypothesis,
    epsilon: f64,
    lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HardcoreSampleReport {
    pub independent_set: IndependentSet,
    pub side: u8,
    pub seed: u64,
}

impl HardcoreSampler {
    /// Prepares the sampler with the side estimates at the production
    /// accuracy `epsilon/32` and failure budget `epsilon/32`.
    pub fn prepare(g: &HostGraph, p: &HardcoreParams, epsilon: f64, seed: u64) -> Result<Self> {
        Self::prepare_with_accuracy(g, p, epsilon, epsilon / 32.0, epsilon / 32.0, seed)
    }

    /// Prepares the sampler with explicit side-estimate budgets. The draw
    /// pipeline is identical; only the cost/accuracy of the one-time side
    /// estimates changes.
    pub fn prepare_with_accuracy(
        g: &HostGraph,
        p: &HardcoreParams,
        epsilon: f64,
        accuracy: f64,
        failure: f64,
        seed: u64,
    ) -> Result<Self> {
        assert!(epsilon > 0.0 && epsilon < 1.0);
        let hypothesis = hypothesis(g, p, epsilon)?;
        let estimate = estimate_two_sided(g, p, accuracy, failure, seed)?;
        Ok(HardcoreSampler {
            graph: g.clone(),
            models: [hc_polymer_model(g, p, 0)?, hc_polymer_model(g, p, 1)?],
            estimate,
            hypothesis,
            epsilon,
            lambda: p.lambda,
        })
    }

    /// One draw: chooses a side by the estimated ground-state masses, runs
    /// the chain on that side's model at accuracy `epsilon/8`, takes the
    /// union of the final polymers, and fills the opposite side outside the
    /// union's neighborhood with independent `lambda/(1+lambda)` coin flips.
    pub fn draw(&self, seed: u64) -> Result<HardcoreSampleReport> {
        let mut rng = rng_from_seed(derive_seed(seed, 0xd0));
        let side = if (rng.gen_range(0.0..1.0f64)).ln() < self.estimate.log_p0 { 0u8 } else { 1 };
        let model = &self.models[side as usize];
        let run = run_chain(
            model,
            self.epsilon / 8.0,
            derive_seed(seed, 0xd1),
            DEFAULT_THETA,
            DEFAULT_CAP_CONST,
        )?;
        let mut members: Vec<Vertex> = Vec::new();
        for (_, p) in run.final_state.iter() {
            members.extend_from_slice(&p.support);
        }
        members.sort_unstable();
        let mut blocked = vec![false; self.graph.n()];
        for &u in &members {
            for &x in self.graph.neighbors(u) {
                blocked[x as usize] = true;
            }
        }
        let fill = self.lambda / (1.0 + self.lambda);
        for v in self.graph.part(1 - side)? {
            if !blocked[v as usize] && rng.gen_bool(fill) {
                members.push(v);
            }
        }
        Ok(HardcoreSampleReport {
            independent_set: IndependentSet::new(members),
            side,
            seed,
        })
    }
}

/// Single-shot end-to-end sampler; prepares at the production budgets and
/// draws once. For repeated draws prepare a [`HardcoreSampler`] and reuse it.
pub fn sample_hardcore(
    g: &HostGraph,
    p: &HardcoreParams,
    epsilon: f64,
    seed: u64,
) -> Result<HardcoreSampleReport> {
    HardcoreSampler::prepare(g, p, epsilon, seed)?.draw(derive_seed(seed, 0xd2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::known::{bipartite_cycle, complete_bipartite};
    use crate::Error;

    #[test]
    fn c4_side_model_polymers_and_partition_function() {
        let g = bipartite_cycle(4);
        let lambda = 3.0;
        let p = HardcoreParams::new(lambda, 0.9);
        let m = hc_polymer_model(&g, &p, 0).unwrap();
        let polymers =
            crate::model::all_allowed_polymers(&m, 4, 100_000).unwrap();
        // only the two singletons: the size-2 set exceeds half the side
        assert_eq!(polymers.len(), 2);
        let w = lambda / ((1.0 + lambda) * (1.0 + lambda));
        for poly in &polymers {
            assert!((m.weight(poly) - w).abs() < 1e-14);
        }
        // they are incompatible in the square, so Z0 = 1 + 2w
        let (z, _) = crate::oracle::brute_polymer_partition(&m, 4, 10_000).unwrap();
        assert!((z - (1.0 + 2.0 * w)).abs() < 1e-12);
    }

    #[test]
    fn square_compatibility_is_distance_three_in_original() {
        let g = bipartite_cycle(8);
        let p = HardcoreParams::new(100.0, 0.5);
        let m = hc_polymer_model(&g, &p, 0).unwrap();
        let polymers = crate::model::all_allowed_polymers(&m, 2, 100_000).unwrap();
        for a in &polymers {
            for b in &polymers {
                let compat = crate::model::compatible(a, b, m.host());
                let min_dist = a
                    .support
                    .iter()
                    .flat_map(|&u| b.support.iter().map(move |&v| (u, v)))
                    .filter_map(|(u, v)| g.distance(u, v))
                    .min()
                    .unwrap();
                assert_eq!(compat, min_dist >= 3, "supports {:?} {:?}", a.support, b.support);
            }
        }
    }

    #[test]
    fn sampling_condition_holds_at_tau_alpha_log_lambda() {
        let g = complete_bipartite(3, 3);
        let lambda = 50.0;
        let alpha = 0.5;
        let m = hc_polymer_model(&g, &HardcoreParams::new(lambda, alpha), 0).unwrap();
        let report = crate::model::check_sampling_condition(
            &m,
            alpha * lambda.ln(),
            3,
            1_000_000,
        )
        .unwrap();
        assert!(report.passed());
        assert_eq!(report.scope, crate::model::CheckScope::Exhaustive);
    }

    #[test]
    fn threshold_flag() {
        let g = bipartite_cycle(4);
        assert!(!HardcoreParams::new(50.0, 0.5).threshold_met(g.max_degree()));
        // (3*2)^(6/0.9) = 6^6.67 ~ 1.5e5
        assert!(HardcoreParams::new(2e5, 0.9).threshold_met(g.max_degree()));
    }

    #[test]
    fn requires_bipartition() {
        let g = crate::graph::known::cycle(5);
        let p = HardcoreParams::new(10.0, 0.5);
        assert!(matches!(hc_polymer_model(&g, &p, 0), Err(Error::MissingBipartition)));
    }

    #[test]
    fn independent_set_validation() {
        let g = bipartite_cycle(4);
        assert!(IndependentSet::new(vec![0, 2]).is_valid(&g));
        assert!(!IndependentSet::new(vec![0, 1]).is_valid(&g));
    }

    #[test]
    fn count_is_seed_deterministic() {
        let g = bipartite_cycle(4);
        let p = HardcoreParams::new(50.0, 0.99);
        let a = estimate_two_sided(&g, &p, 0.5, 0.3, 5).unwrap();
        let b = estimate_two_sided(&g, &p, 0.5, 0.3, 5).unwrap();
        assert_eq!(a.log_z_combined, b.log_z_combined);
    }

    #[test]
    fn edgeless_graph_double_counts_and_fails_hypotheses() {
        // with no edges every singleton has weight lambda over an empty
        // neighborhood, each side's polymer partition function is
        // (1+lambda)^side, and the two-sided combination double-counts the
        // true (1+lambda)^n exactly
        let part0: Vec<Vertex> = vec![0, 1];
        let g = HostGraph::new_bipartite(4, &[], &part0).unwrap();
        let lambda = 0.05; // keep tau = alpha ln lambda... irrelevant: no chain needed
        let p = HardcoreParams::new(lambda, 0.5);
        let m0 = hc_polymer_model(&g, &p, 0).unwrap();
        let (z0, _) = crate::oracle::brute_polymer_partition(&m0, 4, 10_000).unwrap();
        assert!((z0 - (1.0 + lambda) * (1.0 + lambda)).abs() < 1e-12);
        let hyp = hypothesis(&g, &p, 0.5).unwrap();
        assert_eq!(hyp.expansion_verified, Some(false));
        assert!(!hyp.threshold_met);
        // exact two-sided combination vs the true partition function
        let true_z = (1.0 + lambda) .powi(4);
        let combined = 2.0 * (1.0 + lambda).powi(2) * z0;
        assert!((combined / true_z - 2.0).abs() < 1e-12);
    }

    #[test]
    fn huge_lambda_outputs_full_sides() {
        let g = complete_bipartite(3, 3);
        let p = HardcoreParams::new(1e6, 0.9);
        let sampler =
            HardcoreSampler::prepare_with_accuracy(&g, &p, 0.5, 0.5, 0.3, 1).unwrap();
        let mut sides_seen = std::collections::HashSet::new();
        let mut full_sides = 0;
        let draws = 400;
        for i in 0..draws {
            let rep = sampler.draw(1000 + i).unwrap();
            assert!(rep.independent_set.is_valid(&g));
            sides_seen.insert(rep.side);
            if rep.independent_set.members.len() == 3 {
                full_sides += 1;
            }
        }
        assert_eq!(sides_seen.len(), 2, "both ground states should appear");
        assert!(full_sides as f64 >= 0.95 * draws as f64);
    }
}
