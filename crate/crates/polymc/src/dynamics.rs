//! The single-polymer-update Markov chain, the geometric-truncation single
//! polymer sampler realizing the local law nu_v, and the seeded
//! approximate-sampling driver.

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Vertex;
use crate::model::{for_each_allowed_at, Configuration, Polymer, PolymerModel};
use crate::seed::{rng_from_seed, Rng};

/// Default mixing-rate parameter: the value certified whenever the sampling
/// condition holds at its threshold.
pub const DEFAULT_THETA: f64 = 1.0 / std::f64::consts::E;

/// Default work-cap constant for [`run_chain`]: the chain aborts once
/// cumulative work exceeds `DEFAULT_CAP_CONST * n * ln(2n/epsilon)`. Large
/// enough that truncation is unobservable at desk scale while keeping the
/// worst-case running time linearithmic.
pub const DEFAULT_CAP_CONST: f64 = 1e6;

/// Draws single polymers from the local law nu_v: polymer `p` containing `v`
/// with probability `w_p`, nothing with the remaining mass.
///
/// A geometric size cutoff `k` (tail `P[k >= j] = exp(-r j)`) bounds the
/// enumeration work per draw; conditioned on the cutoff, polymer `p` is
/// proposed with probability `w_p * exp(r |p|)`, which telescopes back to
/// exactly `w_p`.
#[derive(Debug, Clone)]
pub struct NuSampler {
    /// Truncation rate `tau - 2 - ln((q-1) * delta)`.
    pub r: f64,
    /// Optional per-draw cap on enumerated candidates.
    pub work_cap: Option<u64>,
}

impl NuSampler {
    /// Builds the sampler from a model's claimed decay rate.
    pub fn for_model<M: PolymerModel + ?Sized>(m: &M) -> Result<Self> {
        let tau = m
            .tau_hint()
            .ok_or_else(|| Error::InvalidModel("model declares no decay rate".into()))?;
        Self::with_tau(m, tau)
    }

    pub fn with_tau<M: PolymerModel + ?Sized>(m: &M, tau: f64) -> Result<Self> {
        let degree_term = (((m.spin_count() - 1) as f64) * m.host().max_degree() as f64).ln();
        let r = tau - 2.0 - degree_term;
        if !(r > 0.0) {
            return Err(Error::InvalidModel(format!(
                "decay rate tau = {tau} gives nonpositive truncation rate r = {r}; \
                 need tau > 2 + ln((q-1) * delta) = {}",
                2.0 + degree_term
            )));
        }
        Ok(NuSampler { r, work_cap: None })
    }

    /// One draw from nu_v. Returns the polymer (or `None` for the empty
    /// outcome) and the number of candidates enumerated.
    ///
    /// Fails loudly if the proposal masses at the drawn cutoff exceed 1,
    /// which certifies a violated sampling condition; nothing is ever
    /// renormalized.
    pub fn sample<M: PolymerModel + ?Sized>(
        &self,
        m: &M,
        v: Vertex,
        rng: &mut Rng,
    ) -> Result<(Option<Polymer>, u64)> {
        // inverse-transform geometric: P[k >= j] = exp(-r j)
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let k = (-u.ln() / self.r).floor() as u64;
        if k == 0 {
            return Ok((None, 0));
        }
        let k = usize::try_from(k).unwrap_or(usize::MAX);

        let mut candidates: Vec<(Polymer, f64)> = Vec::new();
        let mut mass = 0.0f64;
        let work = for_each_allowed_at(m, v, k, &mut |p| {
            let prob = (m.log_weight(p) + self.r * p.len() as f64).exp();
            mass += prob;
            candidates.push((p.clone(), prob));
        });
        if let Some(cap) = self.work_cap {
            if work > cap {
                return Err(Error::BudgetExceeded(cap));
            }
        }
        if mass > 1.0 + 1e-9 {
            return Err(Error::InvalidModel(format!(
                "proposal mass {mass} exceeds 1 at cutoff {k}; the claimed decay rate does \
                 not hold for this model"
            )));
        }
        let target: f64 = rng.gen();
        let mut acc = 0.0;
        for (p, prob) in candidates {
            acc += prob;
            if target < acc {
                return Ok((Some(p), work));
            }
        }
        Ok((None, work))
    }
}

/// One transition of the polymer dynamics. Returns enumeration work done.
///
/// Picks a uniform vertex `v`; with probability 1/2 removes the polymer
/// covering `v` (if any), otherwise draws from nu_v and inserts the result
/// when it stays compatible, leaving the state unchanged when it does not.
pub fn step<M: PolymerModel + ?Sized>(
    c: &mut Configuration,
    m: &M,
    sampler: &NuSampler,
    rng: &mut Rng,
) -> Result<u64> {
    let n = m.host().n();
    let v = rng.gen_range(0..n) as Vertex;
    if rng.gen_bool(0.5) {
        if let Some(id) = c.polymer_at(v) {
            c.remove(id, m.host());
        }
        Ok(0)
    } else {
        let (draw, work) = sampler.sample(m, v, rng)?;
        if let Some(p) = draw {
            // a draw equal to an existing polymer conflicts with itself and
            // rejects, which leaves the state fixed exactly as the update
            // rule requires
            let _ = c.insert(p, m.host());
        }
        Ok(work)
    }
}

/// Steps sufficient for total-variation distance `epsilon` from the
/// stationary law under the mixing condition at rate `theta`:
/// `ceil((2n / (1 - theta)) * ln(2n / epsilon))`, using the diameter
/// bound `2n` on the configuration space.
pub fn step_budget(n: usize, epsilon: f64, theta: f64) -> u64 {
    assert!(epsilon > 0.0 && epsilon < 1.0);
    assert!(theta > 0.0 && theta < 1.0);
    let n = n as f64;
    ((2.0 * n / (1.0 - theta)) * (2.0 * n / epsilon).ln()).ceil() as u64
}

/// Outcome of a seeded chain run.
#[derive(Debug, Clone, Serialize)]
pub struct ChainRun {
    pub steps_taken: u64,
    /// Total enumeration work (one unit per step plus candidates examined).
    pub work_units: u64,
    /// The work cap fired; `final_state` is the empty configuration.
    pub truncated: bool,
    #[serde(skip)]
    pub final_state: Configuration,
    pub seed: u64,
}

/// Runs the polymer dynamics from the empty configuration for
/// `step_budget(n, epsilon/2, theta)` steps, aborting to the empty
/// configuration if cumulative work exceeds `cap_const * n * ln(2n/epsilon)`.
///
/// When the model truly satisfies the sampling condition the final state is
/// an epsilon-approximate sample from the Gibbs distribution.
pub fn run_chain<M: PolymerModel + ?Sized>(
    m: &M,
    epsilon: f64,
    seed: u64,
    theta: f64,
    cap_const: f64,
) -> Result<ChainRun> {
    let sampler = NuSampler::for_model(m)?;
    run_chain_with(m, &sampler, epsilon, seed, theta, cap_const)
}

pub fn run_chain_with<M: PolymerModel + ?Sized>(
    m: &M,
    sampler: &NuSampler,
    epsilon: f64,
    seed: u64,
    theta: f64,
    cap_const: f64,
) -> Result<ChainRun> {
    let n = m.host().n();
    let budget = step_budget(n, epsilon / 2.0, theta);
    let work_cap = cap_const * n as f64 * (2.0 * n as f64 / epsilon).ln();
    let mut rng = rng_from_seed(seed);
    let mut c = Configuration::empty(n);
    let mut work_units = 0u64;
    for steps_taken in 1..=budget {
        work_units += 1 + step(&mut c, m, sampler, &mut rng)?;
        if work_units as f64 > work_cap {
            return Ok(ChainRun {
                steps_taken,
                work_units,
                truncated: true,
                final_state: Configuration::empty(n),
                seed,
            });
        }
    }
    Ok(ChainRun {
        steps_taken: budget,
        work_units,
        truncated: false,
        final_state: c,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::known::{cycle, path};
    use crate::model::SingleVertexModel;

    #[test]
    fn truncation_rate_formula() {
        // tau = 10, q = 2, delta = 3 gives r = 8 - ln 3
        let m = crate::model::UniformDecayModel::new(cycle(4).power_graph(2).unwrap(), 10.0, None);
        let s = NuSampler::for_model(&m).unwrap();
        assert!((s.r - (8.0 - 3.0f64.ln())).abs() < 1e-12);
        assert!((s.r - 6.9014).abs() < 1e-4);
    }

    #[test]
    fn threshold_tau_keeps_r_above_floor() {
        // at tau = 5 + 3 ln((q-1) delta), r = 3 + 2 ln((q-1) delta)
        for delta in [3usize, 4, 7] {
            let tau = crate::model::sampling_threshold(2, delta);
            let r = tau - 2.0 - (delta as f64).ln();
            assert!((r - (3.0 + 2.0 * (delta as f64).ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_r_is_rejected() {
        let m = SingleVertexModel::new(path(3), 0.5); // tau = ln 2 < 2
        assert!(NuSampler::for_model(&m).is_err());
    }

    #[test]
    fn step_budget_values() {
        assert_eq!(step_budget(100, 0.01, DEFAULT_THETA), 3134);
        assert_eq!(step_budget(1, 0.5, 0.5), 6);
        assert!(step_budget(10, 0.999, 0.5) > 0);
    }

    #[test]
    fn empirical_singleton_mass_matches_weight() {
        // nu_v on the single-vertex model puts mass lambda on {v}
        let lambda = (-10.0f64).exp();
        let m = SingleVertexModel::new(path(3), lambda);
        let s = NuSampler::for_model(&m).unwrap();
        let trials = 1_000_000u64;
        let mut rng = rng_from_seed(123);
        let mut hits = 0u64;
        for _ in 0..trials {
            if let (Some(p), _) = s.sample(&m, 1, &mut rng).unwrap() {
                assert_eq!(p.support, vec![1]);
                hits += 1;
            }
        }
        let expect = trials as f64 * lambda;
        let sigma = (trials as f64 * lambda * (1.0 - lambda)).sqrt();
        assert!(
            (hits as f64 - expect).abs() <= 3.0 * sigma,
            "hits {hits} vs expectation {expect:.1} (sigma {sigma:.1})"
        );
    }

    #[test]
    fn invalid_mass_fails_loudly() {
        // lambda e^r > 1 makes the proposal mass exceed 1 at every positive
        // cutoff; the sampler must refuse rather than renormalize
        struct Overweight(SingleVertexModel);
        impl PolymerModel for Overweight {
            fn host(&self) -> &crate::graph::HostGraph {
                self.0.host()
            }
            fn spin_count(&self) -> u32 {
                2
            }
            fn ground_spin(&self, _v: Vertex) -> crate::model::Spin {
                0
            }
            fn is_allowed(&self, p: &Polymer) -> bool {
                self.0.is_allowed(p)
            }
            fn log_weight(&self, _p: &Polymer) -> f64 {
                0.0 // weight 1
            }
            fn size_cap(&self) -> Option<usize> {
                Some(1)
            }
            fn tau_hint(&self) -> Option<f64> {
                Some(10.0) // falsely claimed
            }
        }
        let m = Overweight(SingleVertexModel::new(path(3), 1.0));
        let s = NuSampler::for_model(&m).unwrap();
        let mut rng = rng_from_seed(7);
        let mut failed = false;
        for _ in 0..10_000 {
            match s.sample(&m, 0, &mut rng) {
                Err(Error::InvalidModel(_)) => {
                    failed = true;
                    break;
                }
                Err(other) => panic!("unexpected error {other}"),
                Ok(_) => {}
            }
        }
        assert!(failed, "violated decay rate was never detected");
    }

    #[test]
    fn replay_is_deterministic() {
        let m = SingleVertexModel::new(cycle(5), 0.05);
        let a = run_chain(&m, 0.1, 99, DEFAULT_THETA, DEFAULT_CAP_CONST).unwrap();
        let b = run_chain(&m, 0.1, 99, DEFAULT_THETA, DEFAULT_CAP_CONST).unwrap();
        assert_eq!(a.steps_taken, b.steps_taken);
        assert_eq!(a.work_units, b.work_units);
        assert_eq!(a.final_state.canonical(), b.final_state.canonical());
    }

    #[test]
    fn zero_cap_truncates_immediately() {
        let m = SingleVertexModel::new(path(3), 0.05);
        let run = run_chain(&m, 0.1, 4, DEFAULT_THETA, 0.0).unwrap();
        assert!(run.truncated);
        assert!(run.final_state.is_empty());
        assert_eq!(run.steps_taken, 1);
    }

    #[test]
    fn removal_branch_empties_single_polymer() {
        // on a single vertex the removal branch always hits the polymer
        let g = crate::graph::HostGraph::new(1, &[]).unwrap();
        let m = SingleVertexModel::new(g.clone(), 0.05);
        let s = NuSampler::for_model(&m).unwrap();
        let mut c = Configuration::empty(1);
        c.insert(Polymer::singleton(0, 1), &g);
        let mut rng = rng_from_seed(0);
        let mut saw_empty = false;
        for _ in 0..64 {
            step(&mut c, &m, &s, &mut rng).unwrap();
            if c.is_empty() {
                saw_empty = true;
                break;
            }
        }
        assert!(saw_empty);
    }
}
