//! Simulated-annealing approximate counting: a tempered weight family, a
//! telescoping-product estimator for the partition function, and median
//! amplification of the failure probability.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{run_chain, DEFAULT_CAP_CONST, DEFAULT_THETA};
use crate::error::{Error, Result};
use crate::graph::{HostGraph, Vertex};
use crate::model::{Polymer, PolymerModel, Spin};
use crate::seed::derive_seed;

/// Wraps a model with the tempered weight `w * exp(-rho * size)`. The
/// allowed set is unchanged; any claimed decay rate improves by `rho`, so
/// the sampling condition is preserved along the whole schedule.
#[derive(Debug, Clone)]
pub struct Tempered<'a, M: PolymerModel + ?Sized> {
    base: &'a M,
    rho: f64,
}

pub fn tempered_model<M: PolymerModel + ?Sized>(base: &M, rho: f64) -> Tempered<'_, M> {
    assert!(rho >= 0.0);
    Tempered { base, rho }
}

impl<M: PolymerModel + ?Sized> PolymerModel for Tempered<'_, M> {
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
        self.base.is_allowed(p)
    }

    fn log_weight(&self, p: &Polymer) -> f64 {
        self.base.log_weight(p) - self.rho * p.len() as f64
    }

    fn size_cap(&self) -> Option<usize> {
        self.base.size_cap()
    }

    fn tau_hint(&self) -> Option<f64> {
        self.base.tau_hint().map(|tau| tau + self.rho)
    }

    fn eta_hint(&self) -> Option<f64> {
        self.base.eta_hint()
    }
}

/// The nonadaptive cooling schedule `rho_i = i/n`.
#[derive(Debug, Clone, Serialize)]
pub struct AnnealingSchedule {
    pub n: usize,
    pub epsilon: f64,
    /// Number of tempering steps `ceil(n * ln(4 e (q-1) delta n / epsilon))`.
    pub ell: usize,
    /// Samples per estimate `ceil(64 / epsilon^2)`.
    pub m: usize,
}

impl AnnealingSchedule {
    pub fn new(n: usize, q: u32, delta: usize, epsilon: f64) -> Self {
        assert!(epsilon > 0.0 && epsilon < 1.0);
        assert!(q >= 2 && n >= 1);
        let spread = 4.0 * std::f64::consts::E * ((q - 1) as f64) * delta.max(1) as f64;
        let ell = ((n as f64) * (spread * n as f64 / epsilon).ln()).ceil() as usize;
        let m = (64.0 / (epsilon * epsilon)).ceil() as usize;
        AnnealingSchedule { n, epsilon, ell, m }
    }

    pub fn for_model<M: PolymerModel + ?Sized>(m: &M, epsilon: f64) -> Self {
        Self::new(m.host().n(), m.spin_count(), m.host().max_degree(), epsilon)
    }

    pub fn rho(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn rhos(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.ell).map(|i| self.rho(i))
    }
}

/// A counting result. The estimate is held in log space; `z_hat` is finite
/// and positive whenever construction succeeded.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub log_z_hat: f64,
    pub schedule: AnnealingSchedule,
    pub seed: u64,
    /// Median-amplification trials used (1 for a single estimate).
    pub amplification: usize,
    pub failure_budget: f64,
}

impl EstimateReport {
    pub fn z_hat(&self) -> f64 {
        self.log_z_hat.exp()
    }
}

/// Estimates the partition function by annealing along `rho_i = i/n`.
///
/// For each of `m` repetitions, draws one chain sample per schedule step at
/// per-sample accuracy `1/(8 ell m)` and multiplies the per-step ratio
/// estimators `W_i = exp(-total_size / n)`; the output is the inverse sample
/// mean. Succeeds within `exp(+-epsilon)` of the truth with probability at
/// least 3/4 when the model satisfies the sampling condition.
pub fn estimate_partition<M: PolymerModel + ?Sized>(
    m: &M,
    epsilon: f64,
    seed: u64,
) -> Result<EstimateReport> {
    let schedule = AnnealingSchedule::for_model(m, epsilon);
    let per_sample = 1.0 / (8.0 * schedule.ell as f64 * schedule.m as f64);

    let log_products: Vec<f64> = (0..schedule.m)
        .into_par_iter()
        .map(|j| -> Result<f64> {
            let mut log_w = 0.0;
            for i in 0..schedule.ell {
                let chain_seed = derive_seed(seed, (j as u64) << 32 | i as u64);
                let tempered = tempered_model(m, schedule.rho(i));
                let run =
                    run_chain(&tempered, per_sample, chain_seed, DEFAULT_THETA, DEFAULT_CAP_CONST)?;
                log_w += -(run.final_state.total_size() as f64) / schedule.n as f64;
            }
            Ok(log_w)
        })
        .collect::<Result<_>>()?;

    // mean of exp(log_products), max-shifted for stability
    let max = log_products.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateMean);
    }
    let sum: f64 = log_products.iter().map(|&lw| (lw - max).exp()).sum();
    let log_mean = max + (sum / schedule.m as f64).ln();
    if !log_mean.is_finite() {
        return Err(Error::DegenerateMean);
    }
    Ok(EstimateReport {
        log_z_hat: -log_mean,
        schedule,
        seed,
        amplification: 1,
        failure_budget: 0.25,
    })
}

/// Number of trials used by [`estimate_with_median`] for failure budget
/// `delta`: `ceil(12 ln(1/delta))`.
pub fn median_trials(delta: f64) -> usize {
    assert!(delta > 0.0 && delta < 1.0);
    (12.0 * (1.0 / delta).ln()).ceil() as usize
}

/// Runs [`estimate_partition`] `ceil(12 ln(1/delta))` times on derived seeds
/// and returns the median estimate; the failure probability of the median
/// falls below `delta` because each trial succeeds with probability 3/4.
pub fn estimate_with_median<M: PolymerModel + ?Sized>(
    m: &M,
    epsilon: f64,
    delta: f64,
    seed: u64,
) -> Result<EstimateReport> {
    let trials = median_trials(delta);
    let reports: Vec<EstimateReport> = (0..trials)
        .into_par_iter()
        .map(|t| estimate_partition(m, epsilon, derive_seed(seed, 0x6d65_6400 + t as u64)))
        .collect::<Result<_>>()?;
    let mut logs: Vec<f64> = reports.iter().map(|r| r.log_z_hat).collect();
    logs.sort_by(|a, b| a.total_cmp(b));
    let median = logs[trials / 2];
    Ok(EstimateReport {
        log_z_hat: median,
        schedule: reports[0].schedule.clone(),
        seed,
        amplification: trials,
        failure_budget: delta,
    })
}
