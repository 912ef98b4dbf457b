//! Brute-force ground truth for `log Z` and average test log-likelihood.
//!
//! `Z` is summed over the smaller layer: with `L = min(m, n)` units on that
//! side, each of the `2^L` configurations contributes its other-layer-summed
//! unnormalized probability. Terms are folded into a streaming log-sum-exp so
//! nothing proportional to `2^L` is ever held in memory.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{softplus, LogSumExp};
use crate::rbm::{dot_binary, RbmParams};

/// Default number of enumeration chunks. Fixed, so the merge order (and hence
/// every bit of the result) is independent of the worker count.
pub const DEFAULT_CHUNKS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_enumerable_units: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_enumerable_units: 25,
        }
    }
}

impl OracleBudget {
    fn check(&self, units: usize) -> Result<()> {
        if units > self.max_enumerable_units || units >= 63 {
            Err(Error::OracleBudget {
                units,
                budget: self.max_enumerable_units,
            })
        } else {
            Ok(())
        }
    }
}

/// Which layer is enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// `Σ_v e^{b·v} Π_i (1 + e^{c_i + w_i·v})`
    Visible,
    /// `Σ_h e^{c·h} Π_j (1 + e^{b_j + w_·j·h})`
    Hidden,
}

/// Exact `log Z`, enumerating the smaller layer.
pub fn exact_log_partition(params: &RbmParams, budget: OracleBudget) -> Result<f64> {
    let side = if params.n_hidden() <= params.n_visible() {
        Expansion::Hidden
    } else {
        Expansion::Visible
    };
    log_partition_via(params, side, budget)
}

/// Exact `log Z` through a chosen expansion; the budget applies to the
/// enumerated layer.
pub fn log_partition_via(params: &RbmParams, side: Expansion, budget: OracleBudget) -> Result<f64> {
    let units = match side {
        Expansion::Visible => params.n_visible(),
        Expansion::Hidden => params.n_hidden(),
    };
    budget.check(units)?;
    Ok(log_partition_chunked(params, side, DEFAULT_CHUNKS))
}

/// Enumeration split into `chunks` contiguous ranges evaluated in parallel and
/// merged in range order.
///
/// # Panics
/// If the enumerated layer has 63 or more units.
pub fn log_partition_chunked(params: &RbmParams, side: Expansion, chunks: usize) -> f64 {
    let units = match side {
        Expansion::Visible => params.n_visible(),
        Expansion::Hidden => params.n_hidden(),
    };
    assert!(units < 63, "cannot enumerate 2^{units} states");
    let total: u64 = 1 << units;
    let chunks = (chunks.max(1) as u64).min(total);
    let partials: Vec<LogSumExp> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let start = total * k / chunks;
            let end = total * (k + 1) / chunks;
            enumerate_range(params, side, start, end)
        })
        .collect();
    let mut acc = LogSumExp::new();
    for p in &partials {
        acc.merge(p);
    }
    acc.value()
}

fn enumerate_range(params: &RbmParams, side: Expansion, start: u64, end: u64) -> LogSumExp {
    let (own_len, other_len) = match side {
        Expansion::Visible => (params.n_visible(), params.n_hidden()),
        Expansion::Hidden => (params.n_hidden(), params.n_visible()),
    };
    let mut state = vec![0u8; own_len];
    let mut act = vec![0.0; other_len];
    let mut acc = LogSumExp::new();
    for x in start..end {
        for (k, s) in state.iter_mut().enumerate() {
            *s = ((x >> k) & 1) as u8;
        }
        let own_bias = match side {
            Expansion::Visible => {
                params.hidden_activations_into(&state, &mut act);
                params.visible_bias()
            }
            Expansion::Hidden => {
                params.visible_activations_into(&state, &mut act);
                params.hidden_bias()
            }
        };
        let term = dot_binary(own_bias, &state) + act.iter().map(|&a| softplus(a)).sum::<f64>();
        acc.push(term);
    }
    acc
}

/// `(1/N) Σ_i [log p*(v_i) − log Z]` with exact `log Z`.
pub fn exact_avg_test_loglik(
    params: &RbmParams,
    test_set: &[Vec<u8>],
    budget: OracleBudget,
) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let log_z = exact_log_partition(params, budget)?;
    Ok(avg_loglik_given_log_z(params, test_set, log_z))
}

/// Average of `log p*(v) − log_z` over a test set (any `log_z`, exact or estimated).
pub fn avg_loglik_given_log_z(params: &RbmParams, test_set: &[Vec<u8>], log_z: f64) -> f64 {
    let total: f64 = test_set
        .par_iter()
        .with_min_len(64)
        .map(|v| params.unnorm_log_prob_v(v))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / test_set.len() as f64 - log_z
}
