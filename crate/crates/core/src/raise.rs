//! Reverse AIS: anneal from the target, started at a test vector, back to
//! the proposal.

use rayon::prelude::*;

use crate::ais::{AnnealPath, AnnealSchedule, ProposalSpec};
use crate::error::{Error, Result};
use crate::math::{logmeanexp, mean, std_dev};
use crate::rng::{derive_seed, SeededRng};

/// Default cap on `subset size · runs · K` transitions.
pub const DEFAULT_TRANSITION_BUDGET: u128 = 20_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RaiseConfig {
    pub schedule: AnnealSchedule,
    pub proposal: ProposalSpec,
    pub runs_per_sample: usize,
    pub seed: u64,
    pub transition_budget: u128,
}

impl RaiseConfig {
    pub fn new(schedule: AnnealSchedule, proposal: ProposalSpec, seed: u64) -> Self {
        Self {
            schedule,
            proposal,
            runs_per_sample: 1,
            seed,
            transition_budget: DEFAULT_TRANSITION_BUDGET,
        }
    }

    /// Transitions needed for a subset of `len` vectors.
    pub fn required_transitions(&self, len: usize) -> u128 {
        len as u128 * self.runs_per_sample as u128 * self.schedule.k() as u128
    }

    pub fn check_budget(&self, len: usize) -> Result<()> {
        let required = self.required_transitions(len);
        if required > self.transition_budget {
            return Err(Error::RaiseBudget {
                required,
                budget: self.transition_budget,
            });
        }
        Ok(())
    }
}

/// `log f*_K(v) + Σ_{k=K..1} [log f*_{k−1}(v_k) − log f*_k(v_k)]` with
/// `v_K = v`. Subtracting `log Z_0` gives the estimate of `log p(v)`.
pub fn raise_log_weight(
    path: &AnnealPath<'_>,
    schedule: &AnnealSchedule,
    v_test: &[u8],
    rng: &mut SeededRng,
) -> f64 {
    assert_eq!(v_test.len(), path.target.n_visible(), "test vector length");
    let betas = schedule.betas();
    let k_max = schedule.k();
    let mut ws = path.workspace();
    let mut v = v_test.to_vec();
    ws.load(path, &v);
    let mut acc = ws.log_f_varying(betas[k_max]);
    for k in (1..=k_max).rev() {
        if k < k_max {
            ws.load(path, &v);
        }
        acc += ws.log_f_varying(betas[k - 1]) - ws.log_f_varying(betas[k]);
        if k > 1 {
            ws.transition(path, betas[k - 1], &mut v, rng);
        }
    }
    // log f*_K adds fixed(1); the ratios telescope to fixed(0) − fixed(1).
    acc + ws.log_f_fixed(0.0)
}

/// One reverse-chain estimate of `log p(v_test)` under the target.
pub fn raise_single(
    path: &AnnealPath<'_>,
    schedule: &AnnealSchedule,
    v_test: &[u8],
    rng: &mut SeededRng,
) -> Result<f64> {
    let log_z0 = path.log_z_start()?;
    Ok(raise_log_weight(path, schedule, v_test, rng) - log_z0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaiseResult {
    pub avg_loglik: f64,
    /// Standard deviation of the per-vector estimates.
    pub sigma: f64,
    /// Per test vector, runs combined by log-mean-exp.
    pub per_sample: Vec<f64>,
    pub gibbs_steps: u64,
    pub seed: u64,
}

/// Average RAISE estimate over `test_subset`. Run `j` of vector `i` uses
/// stream `j` of `derive_seed(seed, i)`.
pub fn raise_avg_loglik(
    path: &AnnealPath<'_>,
    config: &RaiseConfig,
    test_subset: &[Vec<u8>],
) -> Result<RaiseResult> {
    if test_subset.is_empty() {
        return Err(Error::Empty("RAISE test subset"));
    }
    if config.runs_per_sample < 1 {
        return Err(Error::InvalidArgument(
            "RAISE needs at least one run per sample".into(),
        ));
    }
    config.check_budget(test_subset.len())?;
    let log_z0 = path.log_z_start()?;
    let runs = config.runs_per_sample;
    let flat: Vec<f64> = (0..test_subset.len() * runs)
        .into_par_iter()
        .map(|t| {
            let (i, j) = (t / runs, t % runs);
            let mut rng = SeededRng::stream(derive_seed(config.seed, i as u64), j as u64);
            raise_log_weight(path, &config.schedule, &test_subset[i], &mut rng) - log_z0
        })
        .collect();
    let per_sample: Vec<f64> = flat.chunks(runs).map(logmeanexp).collect();
    Ok(RaiseResult {
        avg_loglik: mean(&per_sample),
        sigma: std_dev(&per_sample),
        gibbs_steps: config.required_transitions(test_subset.len()) as u64,
        per_sample,
        seed: config.seed,
    })
}
