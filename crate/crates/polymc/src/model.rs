//! The abstract subset-polymer-model contract: polymers, configurations,
//! compatibility, and the three weight-condition checkers.
//!
//! A polymer model lives on a host graph (possibly a graph power) with `q`
//! spins and a per-vertex ground spin. A polymer is a connected vertex set
//! whose vertices carry non-ground spins. Two polymers are compatible when
//! their supports are at host-graph distance at least 2, and the Markov
//! chain state is a set of pairwise-compatible polymers.

use serde::Serialize;

use crate::enumerate::{connected_sets_at_min, enumerate_connected_sets};
use crate::error::{Error, Result};
use crate::graph::{HostGraph, Vertex};

pub type Spin = u8;

/// Default cap on the number of vertex sets a condition checker may touch.
pub const DEFAULT_ENUM_BUDGET: u64 = 5_000_000;

/// A connected vertex set with a non-ground spin per vertex.
///
/// `support` is sorted; `spins[i]` belongs to `support[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Polymer {
    pub support: Vec<Vertex>,
    pub spins: Vec<Spin>,
}

impl Polymer {
    pub fn new(support: Vec<Vertex>, spins: Vec<Spin>) -> Self {
        debug_assert_eq!(support.len(), spins.len());
        debug_assert!(support.windows(2).all(|w| w[0] < w[1]), "support must be sorted");
        Polymer { support, spins }
    }

    /// Single-vertex polymer.
    pub fn singleton(v: Vertex, spin: Spin) -> Self {
        Polymer { support: vec![v], spins: vec![spin] }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.support.binary_search(&v).is_ok()
    }

    pub fn spin_at(&self, v: Vertex) -> Option<Spin> {
        self.support.binary_search(&v).ok().map(|i| self.spins[i])
    }

    /// Structural validity against a model: connected support, spins defined
    /// exactly on it, and every spin off the ground state.
    pub fn validate<M: PolymerModel + ?Sized>(&self, m: &M) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::InvalidModel("empty polymer".into()));
        }
        if !m.host().is_connected_set(&self.support) {
            return Err(Error::InvalidModel("polymer support is disconnected".into()));
        }
        for (&v, &s) in self.support.iter().zip(&self.spins) {
            if s == m.ground_spin(v) || s as u32 >= m.spin_count() {
                return Err(Error::InvalidModel(format!("bad spin {s} at vertex {v}")));
            }
        }
        Ok(())
    }
}

/// Behavioral contract every application model implements.
///
/// `is_allowed` and `log_weight` must be pure and cheap (polynomial in the
/// polymer size). Weights are handled in log space throughout so that deep
/// in the low-temperature regime nothing underflows.
pub trait PolymerModel: Sync {
    /// The graph polymers live in. Compatibility and connectivity are both
    /// judged here, so for models built on a graph power this is the power.
    fn host(&self) -> &HostGraph;

    /// Number of spin values `q`.
    fn spin_count(&self) -> u32;

    /// Ground spin of vertex `v`.
    fn ground_spin(&self, v: Vertex) -> Spin;

    /// Whether the polymer belongs to the allowed set.
    fn is_allowed(&self, p: &Polymer) -> bool;

    /// Natural log of the polymer weight; finite for allowed polymers.
    fn log_weight(&self, p: &Polymer) -> f64;

    /// Hard cap on allowed polymer sizes, when the model has one. Condition
    /// checks below this cap are definitive rather than advisory, and
    /// enumeration uses it to prune.
    fn size_cap(&self) -> Option<usize> {
        None
    }

    /// Claimed decay rate: the model asserts `w <= exp(-tau * size)`.
    fn tau_hint(&self) -> Option<f64> {
        None
    }

    /// Worst single-update weight swing, for chains that need it: any two
    /// configurations whose spin images differ at one vertex have weight
    /// ratio within `[1/eta, eta]`.
    fn eta_hint(&self) -> Option<f64> {
        None
    }

    fn weight(&self, p: &Polymer) -> f64 {
        self.log_weight(p).exp()
    }
}

/// True when the supports are disjoint and non-adjacent in `host`
/// (host-graph distance at least 2).
pub fn compatible(a: &Polymer, b: &Polymer, host: &HostGraph) -> bool {
    for &u in &a.support {
        if b.contains(u) {
            return false;
        }
        for &x in host.neighbors(u) {
            if b.contains(x) {
                return false;
            }
        }
    }
    true
}

/// Handle to a polymer stored in a [`Configuration`].
pub type PolymerId = usize;

/// A set of pairwise-compatible polymers with an incremental vertex index.
///
/// `cover` maps a vertex to the polymer containing it; `blocked` counts, per
/// vertex, how many polymers cover it or sit adjacent to it in the host
/// graph. A new polymer is compatible with the whole configuration iff all
/// of its vertices have a zero blocked count, making insertion checks
/// O(size * max_degree).
#[derive(Debug, Clone)]
pub struct Configuration {
    slots: Vec<Option<Polymer>>,
    free: Vec<PolymerId>,
    cover: Vec<Option<PolymerId>>,
    blocked: Vec<u32>,
    count: usize,
}

/// Result of an insertion attempt; incompatibility is a value, not an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    Accepted(PolymerId),
    Rejected,
}

impl Configuration {
    pub fn empty(n: usize) -> Self {
        Configuration {
            slots: Vec::new(),
            free: Vec::new(),
            cover: vec![None; n],
            blocked: vec![0; n],
            count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// The polymer covering `v`, if any.
    pub fn polymer_at(&self, v: Vertex) -> Option<PolymerId> {
        self.cover[v as usize]
    }

    pub fn get(&self, id: PolymerId) -> &Polymer {
        self.slots[id].as_ref().expect("stale polymer id")
    }

    pub fn iter(&self) -> impl Iterator<Item = (PolymerId, &Polymer)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(id, p)| p.as_ref().map(|p| (id, p)))
    }

    /// Total number of covered vertices.
    pub fn total_size(&self) -> usize {
        self.iter().map(|(_, p)| p.len()).sum()
    }

    fn closure(host: &HostGraph, p: &Polymer) -> Vec<Vertex> {
        let mut cl = p.support.clone();
        for &u in &p.support {
            cl.extend_from_slice(host.neighbors(u));
        }
        cl.sort_unstable();
        cl.dedup();
        cl
    }

    /// Whether `p` is compatible with every stored polymer.
    pub fn accepts(&self, p: &Polymer) -> bool {
        p.support.iter().all(|&u| self.blocked[u as usize] == 0)
    }

    /// Inserts `p` if it is compatible with every member; otherwise rejects
    /// and leaves the configuration unchanged.
    pub fn insert(&mut self, p: Polymer, host: &HostGraph) -> Insertion {
        if !self.accepts(&p) {
            return Insertion::Rejected;
        }
        for &u in Self::closure(host, &p).iter() {
            self.blocked[u as usize] += 1;
        }
        let id = match self.free.pop() {
            Some(id) => {
                self.slots[id] = Some(p);
                id
            }
            None => {
                self.slots.push(Some(p));
                self.slots.len() - 1
            }
        };
        for &u in &self.slots[id].as_ref().unwrap().support {
            self.cover[u as usize] = Some(id);
        }
        self.count += 1;
        Insertion::Accepted(id)
    }

    /// Removes a stored polymer, restoring all index state exactly.
    pub fn remove(&mut self, id: PolymerId, host: &HostGraph) -> Polymer {
        let p = self.slots[id].take().expect("stale polymer id");
        for &u in &p.support {
            self.cover[u as usize] = None;
        }
        for &u in Self::closure(host, &p).iter() {
            self.blocked[u as usize] -= 1;
        }
        self.free.push(id);
        self.count -= 1;
        p
    }

    /// Canonical value: polymers sorted by (support, spins). Total order for
    /// oracle state indexing, independent of insertion history.
    pub fn canonical(&self) -> CanonicalConfiguration {
        let mut polymers: Vec<Polymer> = self.iter().map(|(_, p)| p.clone()).collect();
        polymers.sort();
        CanonicalConfiguration { polymers }
    }

    /// Rebuilds a configuration from a canonical state.
    pub fn from_canonical(state: &CanonicalConfiguration, host: &HostGraph) -> Self {
        let mut c = Configuration::empty(host.n());
        for p in &state.polymers {
            let ins = c.insert(p.clone(), host);
            assert!(matches!(ins, Insertion::Accepted(_)), "canonical state not compatible");
        }
        c
    }
}

/// A configuration frozen into a hashable, ordered value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CanonicalConfiguration {
    pub polymers: Vec<Polymer>,
}

impl CanonicalConfiguration {
    pub fn empty() -> Self {
        CanonicalConfiguration { polymers: Vec::new() }
    }

    pub fn total_size(&self) -> usize {
        self.polymers.iter().map(Polymer::len).sum()
    }
}

/// Log of the product of member weights; the empty configuration has log 0.
pub fn config_log_weight<M: PolymerModel + ?Sized>(c: &Configuration, m: &M) -> f64 {
    c.iter().map(|(_, p)| m.log_weight(p)).sum()
}

pub fn config_weight<M: PolymerModel + ?Sized>(c: &Configuration, m: &M) -> f64 {
    config_log_weight(c, m).exp()
}

pub fn canonical_log_weight<M: PolymerModel + ?Sized>(
    state: &CanonicalConfiguration,
    m: &M,
) -> f64 {
    state.polymers.iter().map(|p| m.log_weight(p)).sum()
}

// ---------------------------------------------------------------------------
// Polymer enumeration over a model
// ---------------------------------------------------------------------------

/// Calls `visit` with every allowed polymer whose support contains `v` and
/// has size at most `k`. Supports are enumerated once each (anchored at
/// `v`), then expanded into the `(q-1)^size` non-ground spin labelings.
/// Returns the number of (support, labeling) candidates examined.
pub fn for_each_allowed_at<M, F>(m: &M, v: Vertex, k: usize, visit: &mut F) -> u64
where
    M: PolymerModel + ?Sized,
    F: FnMut(&Polymer),
{
    let k_eff = match m.size_cap() {
        Some(cap) => k.min(cap),
        None => k,
    };
    let mut work = 0u64;
    enumerate_connected_sets(m.host(), v, k_eff, None, &mut |support| {
        work += for_each_labeling(m, support, &mut |p| visit(p));
        true
    });
    work
}

/// Enumerates every allowed polymer of size at most `k_max`, across all
/// anchors, each exactly once, within a candidate budget.
pub fn all_allowed_polymers<M: PolymerModel + ?Sized>(
    m: &M,
    k_max: usize,
    budget: u64,
) -> Result<Vec<Polymer>> {
    let k_eff = match m.size_cap() {
        Some(cap) => k_max.min(cap),
        None => k_max,
    };
    let mut out = Vec::new();
    let mut work = 0u64;
    for v in m.host().vertices() {
        for set in connected_sets_at_min(m.host(), v, k_eff) {
            work += for_each_labeling(m, &set.vertices, &mut |p| out.push(p.clone()));
            if work > budget {
                return Err(Error::BudgetExceeded(budget));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Mixed-radix walk over the non-ground spin labelings of a support; calls
/// `visit` for each allowed polymer and returns candidates examined.
fn for_each_labeling<M, F>(m: &M, support: &[Vertex], visit: &mut F) -> u64
where
    M: PolymerModel + ?Sized,
    F: FnMut(&Polymer),
{
    let q = m.spin_count();
    let choices: Vec<Vec<Spin>> = support
        .iter()
        .map(|&u| (0..q as Spin).filter(|&s| s != m.ground_spin(u)).collect())
        .collect();
    if choices.iter().any(Vec::is_empty) {
        return 0;
    }
    let mut idx = vec![0usize; support.len()];
    let mut work = 0u64;
    loop {
        work += 1;
        let spins: Vec<Spin> = idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
        let p = Polymer::new(support.to_vec(), spins);
        if m.is_allowed(&p) {
            visit(&p);
        }
        // increment mixed-radix counter
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return work;
            }
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Weight-condition checkers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// `w <= exp(-tau * size)` per polymer.
    Sampling,
    /// `sum over incompatible p' of exp(size') * w' <= size` per polymer.
    KoteckyPreiss,
    /// `sum over incompatible p' of size' * w' <= theta * size` per polymer.
    Mixing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckScope {
    /// The model caps polymer sizes at or below the checked size, so the
    /// verdict covers every polymer.
    Exhaustive,
    /// Larger polymers exist (or may exist) beyond the checked size; a clean
    /// report is advisory only.
    Truncated,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub polymer: Polymer,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    /// tau for the sampling condition, theta for mixing, unused (0) for
    /// the Kotecky-Preiss check.
    pub parameter: f64,
    pub scope: CheckScope,
    pub checked_size: usize,
    pub polymers_checked: usize,
    pub violations: Vec<Violation>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn scope_for<M: PolymerModel + ?Sized>(m: &M, k_max: usize) -> CheckScope {
    match m.size_cap() {
        Some(cap) if cap <= k_max => CheckScope::Exhaustive,
        _ => CheckScope::Truncated,
    }
}

/// Checks `w <= exp(-tau * size)` over every allowed polymer of size at
/// most `k_max`.
pub fn check_sampling_condition<M: PolymerModel + ?Sized>(
    m: &M,
    tau: f64,
    k_max: usize,
    budget: u64,
) -> Result<ConditionReport> {
    let polymers = all_allowed_polymers(m, k_max, budget)?;
    let mut violations = Vec::new();
    for p in &polymers {
        let lhs = m.log_weight(p);
        let rhs = -tau * p.len() as f64;
        if lhs > rhs + 1e-12 {
            violations.push(Violation { polymer: p.clone(), lhs: lhs.exp(), rhs: rhs.exp() });
        }
    }
    Ok(ConditionReport {
        condition: Condition::Sampling,
        parameter: tau,
        scope: scope_for(m, k_max),
        checked_size: k_max,
        polymers_checked: polymers.len(),
        violations,
    })
}

/// Bit mask over host vertices of `support union N(support)`; a polymer is
/// incompatible with another iff its support meets the other's closure.
fn closure_mask(host: &HostGraph, p: &Polymer, words: usize) -> Vec<u64> {
    let mut mask = vec![0u64; words];
    let mut set = |v: Vertex| mask[v as usize / 64] |= 1u64 << (v % 64);
    for &u in &p.support {
        set(u);
        for &x in host.neighbors(u) {
            set(x);
        }
    }
    mask
}

fn support_mask(p: &Polymer, words: usize) -> Vec<u64> {
    let mut mask = vec![0u64; words];
    for &u in &p.support {
        mask[u as usize / 64] |= 1u64 << (u % 64);
    }
    mask
}

fn masks_intersect(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).any(|(x, y)| x & y != 0)
}

fn check_incompatible_sum<M: PolymerModel + ?Sized>(
    m: &M,
    condition: Condition,
    parameter: f64,
    k_max: usize,
    budget: u64,
    term: impl Fn(usize, f64) -> f64,
    bound: impl Fn(usize) -> f64,
) -> Result<ConditionReport> {
    let polymers = all_allowed_polymers(m, k_max, budget)?;
    let words = m.host().n().div_ceil(64);
    let supports: Vec<Vec<u64>> = polymers.iter().map(|p| support_mask(p, words)).collect();
    let closures: Vec<Vec<u64>> =
        polymers.iter().map(|p| closure_mask(m.host(), p, words)).collect();
    let weights: Vec<f64> = polymers.iter().map(|p| m.weight(p)).collect();

    let mut violations = Vec::new();
    for (i, p) in polymers.iter().enumerate() {
        let mut sum = 0.0;
        for (j, q) in polymers.iter().enumerate() {
            if masks_intersect(&closures[i], &supports[j]) {
                sum += term(q.len(), weights[j]);
            }
        }
        let rhs = bound(p.len());
        if sum > rhs + 1e-12 {
            violations.push(Violation { polymer: p.clone(), lhs: sum, rhs });
        }
    }
    Ok(ConditionReport {
        condition,
        parameter,
        scope: scope_for(m, k_max),
        checked_size: k_max,
        polymers_checked: polymers.len(),
        violations,
    })
}

/// Checks the mixing condition at rate `theta` over polymers of size at most
/// `k_max`, with the incompatible sums truncated at the same size.
pub fn check_mixing_condition<M: PolymerModel + ?Sized>(
    m: &M,
    theta: f64,
    k_max: usize,
    budget: u64,
) -> Result<ConditionReport> {
    assert!(theta > 0.0 && theta < 1.0, "theta must lie in (0,1)");
    check_incompatible_sum(
        m,
        Condition::Mixing,
        theta,
        k_max,
        budget,
        |size, w| size as f64 * w,
        |size| theta * size as f64,
    )
}

/// Checks the Kotecky-Preiss condition over polymers of size at most
/// `k_max`, sums truncated at the same size.
pub fn check_kotecky_preiss<M: PolymerModel + ?Sized>(
    m: &M,
    k_max: usize,
    budget: u64,
) -> Result<ConditionReport> {
    check_incompatible_sum(
        m,
        Condition::KoteckyPreiss,
        0.0,
        k_max,
        budget,
        |size, w| (size as f64).exp() * w,
        |size| size as f64,
    )
}

/// Decay threshold under which the sampling condition certifies everything
/// downstream: `5 + 3 ln((q-1) * delta)`.
pub fn sampling_threshold(q: u32, delta: usize) -> f64 {
    5.0 + 3.0 * (((q - 1) as f64) * delta as f64).ln()
}

// ---------------------------------------------------------------------------
// Built-in models
// ---------------------------------------------------------------------------

/// Single-vertex polymers with a uniform weight: the hard-core model itself,
/// with occupied vertices as deviations from the all-vacant ground state.
#[derive(Debug, Clone)]
pub struct SingleVertexModel {
    host: HostGraph,
    lambda: f64,
}

impl SingleVertexModel {
    pub fn new(host: HostGraph, lambda: f64) -> Self {
        assert!(lambda > 0.0);
        SingleVertexModel { host, lambda }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl PolymerModel for SingleVertexModel {
    fn host(&self) -> &HostGraph {
        &self.host
    }

    fn spin_count(&self) -> u32 {
        2
    }

    fn ground_spin(&self, _v: Vertex) -> Spin {
        0
    }

    fn is_allowed(&self, p: &Polymer) -> bool {
        p.len() == 1 && p.spins[0] == 1
    }

    fn log_weight(&self, p: &Polymer) -> f64 {
        debug_assert!(self.is_allowed(p));
        self.lambda.ln()
    }

    fn size_cap(&self) -> Option<usize> {
        Some(1)
    }

    fn tau_hint(&self) -> Option<f64> {
        Some(-self.lambda.ln())
    }

    fn eta_hint(&self) -> Option<f64> {
        Some(self.lambda.max(1.0 / self.lambda))
    }
}

/// Synthetic model with weight `exp(-tau * size)` on every connected set:
/// the boundary case of the sampling condition, used for scaling checks and
/// randomized condition tests.
#[derive(Debug, Clone)]
pub struct UniformDecayModel {
    host: HostGraph,
    tau: f64,
    cap: Option<usize>,
}

impl UniformDecayModel {
    pub fn new(host: HostGraph, tau: f64, cap: Option<usize>) -> Self {
        UniformDecayModel { host, tau, cap }
    }
}

impl PolymerModel for UniformDecayModel {
    fn host(&self) -> &HostGraph {
        &self.host
    }

    fn spin_count(&self) -> u32 {
        2
    }

    fn ground_spin(&self, _v: Vertex) -> Spin {
        0
    }

    fn is_allowed(&self, p: &Polymer) -> bool {
        if let Some(cap) = self.cap {
            if p.len() > cap {
                return false;
            }
        }
        self.host.is_connected_set(&p.support)
    }

    fn log_weight(&self, p: &Polymer) -> f64 {
        -self.tau * p.len() as f64
    }

    fn size_cap(&self) -> Option<usize> {
        self.cap
    }

    fn tau_hint(&self) -> Option<f64> {
        Some(self.tau)
    }
}
