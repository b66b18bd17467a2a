//! Truncated polymer models and single-spin Metropolis dynamics restricted
//! to configurations whose deviation components are allowed polymers, with
//! the hard-core deviation model used for that chain.

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{HostGraph, Vertex};
use crate::model::{Configuration, Insertion, Polymer, PolymerId, PolymerModel, Spin};
use crate::seed::{rng_from_seed, Rng};

/// Ceiling on the default Glauber step budget; the worst-case bound grows
/// like `eta^(M+1)` and is surfaced rather than silently run. Override per
/// call, or through the `POLYMC_GLAUBER_CEILING` environment variable.
pub const DEFAULT_GLAUBER_CEILING: f64 = 1e9;

/// A model restricted to polymers of size at most `k`; weights unchanged.
/// Any claimed decay rate carries over.
#[derive(Debug, Clone)]
pub struct Truncated<'a, M: PolymerModel + ?Sized> {
    base: &'a M,
    k: usize,
}

pub fn truncate<M: PolymerModel + ?Sized>(base: &M, k: usize) -> Truncated<'_, M> {
    assert!(k >= 1);
    Truncated { base, k }
}

impl<M: PolymerModel + ?Sized> PolymerModel for Truncated<'_, M> {
    fn host(&self) -> &HostGraph {
        self.base.host()
    }

    fn spin_count(&self) -> u32 {
        self.base.spin_count()
    }

    fn ground_spin(&self, v: Vertex) -> Spin {
        self.base.ground_spin(v)
    }

    fn is_allowed(&self, p: &Polymer) -> bool {
        p.len() <= self.k && self.base.is_allowed(p)
    }

    fn log_weight(&self, p: &Polymer) -> f64 {
        self.base.log_weight(p)
    }

    fn size_cap(&self) -> Option<usize> {
        Some(match self.base.size_cap() {
            Some(cap) => cap.min(self.k),
            None => self.k,
        })
    }

    fn tau_hint(&self) -> Option<f64> {
        self.base.tau_hint()
    }

    fn eta_hint(&self) -> Option<f64> {
        self.base.eta_hint()
    }
}

/// Size cutoff at which truncation shifts the partition function by at most
/// `exp(epsilon)` and the Gibbs law by at most `epsilon` in total variation,
/// under decay rate `tau`: `3 ln(2n/epsilon) / (2 tau)`. Callers round up
/// and floor at 1.
pub fn truncation_size(n: usize, epsilon: f64, tau: f64) -> f64 {
    assert!(tau > 0.0);
    1.5 * (2.0 * n as f64 / epsilon).ln() / tau
}

/// Potts deviation cap for the restricted chain: `3 ln(4n/eps) / (2 alpha beta)`.
pub fn potts_glauber_cap(n: usize, epsilon: f64, alpha: f64, beta: f64) -> f64 {
    1.5 * (4.0 * n as f64 / epsilon).ln() / (alpha * beta)
}

/// Hard-core deviation cap: `3 (2+alpha) ln(4n/eps) / (2 alpha ln lambda)`.
pub fn hc_glauber_cap(n: usize, epsilon: f64, alpha: f64, lambda: f64) -> f64 {
    1.5 * (2.0 + alpha) * (4.0 * n as f64 / epsilon).ln() / (alpha * lambda.ln())
}

// ---------------------------------------------------------------------------
// Hard-core deviation model on the original graph
// ---------------------------------------------------------------------------

/// Side-`i` hard-core deviation model on the graph itself. Ground state:
/// side `i` occupied, the other side vacant. A polymer is a connected set
/// whose side-`i` share is at most a quarter of that side and whose
/// opposite-side vertices carry all their neighbors with them; its weight is
/// `lambda^(occupied gained - occupied lost)`.
#[derive(Debug, Clone)]
pub struct HardcoreDeviationModel {
    host: HostGraph,
    side: u8,
    side_members: Vec<bool>,
    quarter_bound: usize,
    lambda: f64,
    tau: f64,
}

pub fn hc_deviation_model(
    g: &HostGraph,
    p: &crate::hardcore::HardcoreParams,
    side: u8,
) -> Result<HardcoreDeviationModel> {
    let part = g.part(side)?;
    let mut side_members = vec![false; g.n()];
    for &v in &part {
        side_members[v as usize] = true;
    }
    Ok(HardcoreDeviationModel {
        host: g.clone(),
        side,
        side_members,
        quarter_bound: part.len(),
        lambda: p.lambda,
        tau: p.alpha / (2.0 + p.alpha) * p.lambda.ln(),
    })
}

impl HardcoreDeviationModel {
    pub fn side(&self) -> u8 {
        self.side
    }

    fn split_sizes(&self, p: &Polymer) -> (usize, usize) {
        let own = p.support.iter().filter(|&&v| self.side_members[v as usize]).count();
        (own, p.len() - own)
    }

    /// The independent set a configuration maps to: side `i` minus its
    /// vacancies, plus the opposite-side occupations.
    pub fn to_independent_set(&self, c: &Configuration) -> crate::hardcore::IndependentSet {
        let mut members: Vec<Vertex> = Vec::new();
        for v in self.host.vertices() {
            let deviated = c.polymer_at(v).is_some();
            let occupied = self.side_members[v as usize] != deviated;
            if occupied {
                members.push(v);
            }
        }
        crate::hardcore::IndependentSet::new(members)
    }
}

impl PolymerModel for HardcoreDeviationModel {
    fn host(&self) -> &HostGraph {
        &self.host
    }

    fn spin_count(&self) -> u32 {
        2
    }

    /// Side `i` is occupied (spin 1) in the ground state; the other side is
    /// vacant (spin 0).
    fn ground_spin(&self, v: Vertex) -> Spin {
        if self.side_members[v as usize] {
            1
        } else {
            0
        }
    }

    fn is_allowed(&self, p: &Polymer) -> bool {
        let (own, _) = self.split_sizes(p);
        if 4 * own > self.quarter_bound {
            return false;
        }
        for (&v, &s) in p.support.iter().zip(&p.spins) {
            if s != 1 - self.ground_spin(v) {
                return false;
            }
            // every opposite-side vertex brings its whole neighborhood
            if !self.side_members[v as usize]
                && self.host.neighbors(v).iter().any(|x| !p.contains(*x))
            {
                return false;
            }
        }
        self.host.is_connected_set(&p.support)
    }

    fn log_weight(&self, p: &Polymer) -> f64 {
        let (own, other) = self.split_sizes(p);
        (other as f64 - own as f64) * self.lambda.ln()
    }

    fn tau_hint(&self) -> Option<f64> {
        Some(self.tau)
    }

    fn eta_hint(&self) -> Option<f64> {
        Some(self.lambda)
    }
}

// ---------------------------------------------------------------------------
// Restricted Glauber dynamics
// ---------------------------------------------------------------------------

/// What a single-spin update does to the polymer configuration.
#[derive(Debug, Clone)]
pub enum GlauberMove {
    /// Chosen spin equals the current one; the state is fixed.
    SelfLoop,
    /// The flipped spin image leaves the allowed configuration space.
    Invalid,
    /// An in-space move: replace `removed` by `added`, with the Metropolis
    /// log weight ratio of new over old.
    Replace {
        removed: Vec<PolymerId>,
        added: Vec<Polymer>,
        log_ratio: f64,
    },
}

/// Computes the move for "set vertex `v` to spin `s`", touching only the
/// polymers incident to `v`'s neighborhood.
pub fn glauber_propose<M: PolymerModel + ?Sized>(
    c: &Configuration,
    m: &M,
    v: Vertex,
    s: Spin,
) -> GlauberMove {
    let host = m.host();
    let ground = m.ground_spin(v);
    let current = c.polymer_at(v).map(|id| c.get(id).spin_at(v).unwrap()).unwrap_or(ground);
    if s == current {
        return GlauberMove::SelfLoop;
    }

    if current == ground {
        // v deviates: absorb the polymers around v into one component
        let mut removed: Vec<PolymerId> = Vec::new();
        for &x in host.neighbors(v) {
            if let Some(id) = c.polymer_at(x) {
                if !removed.contains(&id) {
                    removed.push(id);
                }
            }
        }
        let mut support = vec![v];
        let mut spins = vec![s];
        for &id in &removed {
            let p = c.get(id);
            support.extend_from_slice(&p.support);
            spins.extend_from_slice(&p.spins);
        }
        let mut order: Vec<usize> = (0..support.len()).collect();
        order.sort_unstable_by_key(|&i| support[i]);
        let merged = Polymer::new(
            order.iter().map(|&i| support[i]).collect(),
            order.iter().map(|&i| spins[i]).collect(),
        );
        if !m.is_allowed(&merged) {
            return GlauberMove::Invalid;
        }
        let log_ratio = m.log_weight(&merged)
            - removed.iter().map(|&id| m.log_weight(c.get(id))).sum::<f64>();
        GlauberMove::Replace { removed, added: vec![merged], log_ratio }
    } else if s == ground {
        // v rejoins the ground state: its polymer may split
        let id = c.polymer_at(v).expect("non-ground vertex must be covered");
        let p = c.get(id);
        let rest: Vec<Vertex> = p.support.iter().copied().filter(|&u| u != v).collect();
        let mut added = Vec::new();
        let mut assigned = vec![false; rest.len()];
        for start in 0..rest.len() {
            if assigned[start] {
                continue;
            }
            let mut comp = vec![rest[start]];
            assigned[start] = true;
            let mut stack = vec![rest[start]];
            while let Some(x) = stack.pop() {
                for &y in host.neighbors(x) {
                    if let Ok(i) = rest.binary_search(&y) {
                        if !assigned[i] {
                            assigned[i] = true;
                            comp.push(y);
                            stack.push(y);
                        }
                    }
                }
            }
            comp.sort_unstable();
            let spins: Vec<Spin> = comp.iter().map(|&u| p.spin_at(u).unwrap()).collect();
            let piece = Polymer::new(comp, spins);
            if !m.is_allowed(&piece) {
                return GlauberMove::Invalid;
            }
            added.push(piece);
        }
        let log_ratio =
            added.iter().map(|q| m.log_weight(q)).sum::<f64>() - m.log_weight(p);
        GlauberMove::Replace { removed: vec![id], added, log_ratio }
    } else {
        // recolor within the same deviation component
        let id = c.polymer_at(v).expect("non-ground vertex must be covered");
        let p = c.get(id);
        let idx = p.support.binary_search(&v).unwrap();
        let mut spins = p.spins.clone();
        spins[idx] = s;
        let recolored = Polymer::new(p.support.clone(), spins);
        if !m.is_allowed(&recolored) {
            return GlauberMove::Invalid;
        }
        let log_ratio = m.log_weight(&recolored) - m.log_weight(p);
        GlauberMove::Replace { removed: vec![id], added: vec![recolored], log_ratio }
    }
}

/// Applies an accepted move.
pub fn glauber_apply<M: PolymerModel + ?Sized>(
    c: &mut Configuration,
    m: &M,
    mv: GlauberMove,
) {
    if let GlauberMove::Replace { removed, added, .. } = mv {
        for id in removed {
            c.remove(id, m.host());
        }
        for p in added {
            match c.insert(p, m.host()) {
                Insertion::Accepted(_) => {}
                Insertion::Rejected => unreachable!("replacement pieces are compatible"),
            }
        }
    }
}

/// One restricted Glauber transition: uniform vertex and spin, Metropolis
/// acceptance on the weight ratio, rejection outside the allowed space.
pub fn glauber_step<M: PolymerModel + ?Sized>(c: &mut Configuration, m: &M, rng: &mut Rng) {
    let v = rng.gen_range(0..m.host().n()) as Vertex;
    let s = rng.gen_range(0..m.spin_count()) as Spin;
    match glauber_propose(c, m, v, s) {
        GlauberMove::SelfLoop | GlauberMove::Invalid => {}
        mv @ GlauberMove::Replace { .. } => {
            let log_ratio = match &mv {
                GlauberMove::Replace { log_ratio, .. } => *log_ratio,
                _ => unreachable!(),
            };
            if log_ratio >= 0.0 || rng.gen_range(0.0..1.0f64).ln() < log_ratio {
                glauber_apply(c, m, mv);
            }
        }
    }
}

/// Worst-case step budget for the restricted chain with single-update swing
/// `eta` and size cap `m_cap`: `64 * M * eta^(M+1) * n^2 * ln n * ln(eta/epsilon)`.
pub fn glauber_step_budget(n: usize, m_cap: usize, eta: f64, epsilon: f64) -> f64 {
    64.0 * m_cap as f64
        * eta.powi(m_cap as i32 + 1)
        * (n as f64) * (n as f64)
        * (n as f64).ln()
        * (eta / epsilon).ln()
}

fn glauber_ceiling() -> f64 {
    std::env::var("POLYMC_GLAUBER_CEILING")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_GLAUBER_CEILING)
}

#[derive(Debug, Clone, Serialize)]
pub struct GlauberRun {
    pub steps_taken: u64,
    pub budget: f64,
    #[serde(skip)]
    pub final_state: Configuration,
    pub seed: u64,
}

/// Runs the restricted Glauber dynamics from the empty configuration.
///
/// The default budget is the worst-case bound above, which explodes with the
/// size cap; budgets beyond the ceiling are refused so the caller must pass
/// an explicit override.
pub fn run_restricted_glauber<M: PolymerModel + ?Sized>(
    m: &M,
    epsilon: f64,
    seed: u64,
    step_budget_override: Option<u64>,
) -> Result<GlauberRun> {
    let n = m.host().n();
    let budget = match step_budget_override {
        Some(b) => b as f64,
        None => {
            let eta = m
                .eta_hint()
                .ok_or_else(|| Error::InvalidModel("model declares no weight swing".into()))?;
            let m_cap = m
                .size_cap()
                .ok_or_else(|| Error::InvalidModel("restricted chain needs a size cap".into()))?;
            let b = glauber_step_budget(n, m_cap, eta, epsilon);
            let ceiling = glauber_ceiling();
            if b > ceiling {
                return Err(Error::StepBudgetOverflow { budget: b, ceiling });
            }
            b
        }
    };
    let steps = budget.ceil() as u64;
    let mut rng = rng_from_seed(seed);
    let mut c = Configuration::empty(n);
    for _ in 0..steps {
        glauber_step(&mut c, m, &mut rng);
    }
    Ok(GlauberRun { steps_taken: steps, budget, final_state: c, seed })
}

/// Searches for a vertex ordering of `p` whose every prefix is itself an
/// allowed polymer, trying a DFS order from each root starting at the
/// minimum id. Such an ordering makes single-spin paths between
/// configurations stay inside the allowed space; models without one (the
/// hard-core deviation closure constraint can defeat every root) still run,
/// they just lose that structural property.
pub fn single_update_witness<M: PolymerModel + ?Sized>(
    m: &M,
    p: &Polymer,
) -> Option<Vec<Vertex>> {
    let host = m.host();
    for root_idx in 0..p.len() {
        let root = p.support[root_idx];
        // DFS over the polymer's induced subgraph
        let mut order = vec![root];
        let mut seen: Vec<bool> = p.support.iter().map(|&u| u == root).collect();
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            for &y in host.neighbors(x) {
                if let Ok(i) = p.support.binary_search(&y) {
                    if !seen[i] {
                        seen[i] = true;
                        order.push(y);
                        stack.push(y);
                    }
                }
            }
        }
        if order.len() != p.len() {
            continue; // disconnected within the polymer, should not happen
        }
        let ok = (1..=order.len()).all(|len| {
            let mut prefix: Vec<Vertex> = order[..len].to_vec();
            prefix.sort_unstable();
            let spins: Vec<Spin> = prefix.iter().map(|&u| p.spin_at(u).unwrap()).collect();
            m.is_allowed(&Polymer::new(prefix, spins))
        });
        if ok {
            return Some(order);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::known::{bipartite_cycle, cycle, path};
    use crate::hardcore::HardcoreParams;
    use crate::model::{all_allowed_polymers, UniformDecayModel};
    use crate::potts::{potts_polymer_model, PottsParams};

    #[test]
    fn truncation_keeps_weights_and_caps_size() {
        let m = UniformDecayModel::new(cycle(6), 2.0, None);
        let t = truncate(&m, 2);
        assert_eq!(t.size_cap(), Some(2));
        let single = Polymer::singleton(0, 1);
        assert_eq!(t.log_weight(&single), m.log_weight(&single));
        let triple = Polymer::new(vec![0, 1, 2], vec![1, 1, 1]);
        assert!(m.is_allowed(&triple));
        assert!(!t.is_allowed(&triple));
    }

    #[test]
    fn truncation_above_cap_changes_nothing() {
        let g = path(2);
        let params = PottsParams::new(2, 3.0, 1.0);
        let m = potts_polymer_model(&g, &params); // cap already 1
        let t = truncate(&m, 5);
        let all_base = all_allowed_polymers(&m, 5, 10_000).unwrap();
        let all_trunc = all_allowed_polymers(&t, 5, 10_000).unwrap();
        assert_eq!(all_base, all_trunc);
    }

    #[test]
    fn truncation_size_values() {
        assert!((truncation_size(100, 0.1, 9.0) - 1.2668).abs() < 1e-3);
        assert!((potts_glauber_cap(100, 0.1, 1.0, 9.0) - 1.3823).abs() < 1e-3);
        assert!((hc_glauber_cap(100, 0.1, 0.5, 20f64.exp()) - 3.1099).abs() < 1e-3);
    }

    #[test]
    fn deviation_model_vacancy_weight() {
        // C8: side-0 has 4 vertices, so single vacancies obey the quarter
        // bound and weigh 1/lambda
        let g = bipartite_cycle(8);
        let p = HardcoreParams::new(10.0, 0.5);
        let m = hc_deviation_model(&g, &p, 0).unwrap();
        let vac = Polymer::singleton(0, 0); // side-0 ground spin is 1
        assert!(m.is_allowed(&vac));
        assert!((m.weight(&vac) - 0.1).abs() < 1e-15);
        // an opposite-side vertex alone violates closure
        let occ = Polymer::singleton(1, 1);
        assert!(!m.is_allowed(&occ));
    }

    #[test]
    fn deviation_model_closure_polymer_weight() {
        // C16 admits {v} union N(v): one occupied odd vertex plus its two
        // vacated neighbors, weight lambda^(1-2)
        let g = bipartite_cycle(16);
        let p = HardcoreParams::new(10.0, 0.5);
        let m = hc_deviation_model(&g, &p, 0).unwrap();
        let tri = Polymer::new(vec![0, 1, 2], vec![0, 1, 0]);
        assert!(m.is_allowed(&tri));
        assert!((m.weight(&tri) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn deviation_model_on_c4_is_empty() {
        // side size 2 makes the quarter bound 1/2, excluding every polymer
        let g = bipartite_cycle(4);
        let p = HardcoreParams::new(10.0, 0.5);
        let m = hc_deviation_model(&g, &p, 0).unwrap();
        assert!(all_allowed_polymers(&m, 4, 10_000).unwrap().is_empty());
    }

    #[test]
    fn deviation_sampling_condition() {
        let g = bipartite_cycle(8);
        let lambda = 1e4;
        let alpha = 0.5;
        let p = HardcoreParams::new(lambda, alpha);
        let m = hc_deviation_model(&g, &p, 0).unwrap();
        let tau = alpha / (2.0 + alpha) * lambda.ln();
        let report =
            crate::model::check_sampling_condition(&m, tau, 4, 1_000_000).unwrap();
        assert!(report.passed(), "{:?}", report.violations);
    }

    #[test]
    fn potts_polymers_have_single_update_witnesses() {
        let g = cycle(6);
        let params = PottsParams::new(2, 3.0, 1.0);
        let m = potts_polymer_model(&g, &params);
        for p in all_allowed_polymers(&m, 3, 100_000).unwrap() {
            assert!(single_update_witness(&m, &p).is_some(), "{:?}", p.support);
        }
    }

    #[test]
    fn deviation_closure_polymer_has_no_witness() {
        // every prefix of the closure triple drops a neighbor, so no DFS
        // root can order it through allowed polymers
        let g = bipartite_cycle(16);
        let p = HardcoreParams::new(10.0, 0.5);
        let m = hc_deviation_model(&g, &p, 0).unwrap();
        let tri = Polymer::new(vec![0, 1, 2], vec![0, 1, 0]);
        assert!(single_update_witness(&m, &tri).is_none());
    }

    #[test]
    fn default_budget_overflows_the_ceiling() {
        // n = 20, M = 2, eta = e^4: the bound is astronomically over 1e9
        let g = bipartite_cycle(20);
        let params = PottsParams::new(2, 2.0, 1.0);
        let m = potts_polymer_model(&g, &params);
        let t = truncate(&m, 2);
        let budget = glauber_step_budget(20, 2, (2.0f64 * 2.0).exp(), 0.1);
        assert!(budget > 1e10);
        match run_restricted_glauber(&t, 0.1, 1, None) {
            Err(Error::StepBudgetOverflow { .. }) => {}
            other => panic!("expected budget overflow, got {other:?}"),
        }
    }

    #[test]
    fn override_runs_and_rejects_over_cap_merges() {
        let g = path(3);
        let params = PottsParams::new(2, 2.0, 1.0);
        let m = potts_polymer_model(&g, &params); // cap 1
        let run = run_restricted_glauber(&m, 0.3, 5, Some(2000)).unwrap();
        assert_eq!(run.steps_taken, 2000);
        // every reachable configuration has only singleton polymers
        for (_, p) in run.final_state.iter() {
            assert_eq!(p.len(), 1);
        }
    }

    #[test]
    fn over_cap_flip_is_invalid() {
        let g = path(2);
        let params = PottsParams::new(2, 2.0, 1.0);
        let m = potts_polymer_model(&g, &params); // cap 1 on K2
        let mut c = Configuration::empty(2);
        c.insert(Polymer::singleton(0, 1), &g);
        // flipping vertex 1 to color 1 would merge into a size-2 polymer
        match glauber_propose(&c, &m, 1, 1) {
            GlauberMove::Invalid => {}
            other => panic!("expected invalid move, got {other:?}"),
        }
    }

    #[test]
    fn split_move_on_a_path() {
        let g = path(3);
        let mut params = PottsParams::new(2, 2.0, 1.0);
        params.size_cap = Some(3);
        let m = potts_polymer_model(&g, &params);
        let mut c = Configuration::empty(3);
        c.insert(Polymer::new(vec![0, 1, 2], vec![1, 1, 1]), &g);
        match glauber_propose(&c, &m, 1, 0) {
            GlauberMove::Replace { removed, added, .. } => {
                assert_eq!(removed.len(), 1);
                assert_eq!(added.len(), 2);
            }
            other => panic!("expected a split, got {other:?}"),
        }
    }
}
