//! Annealed importance sampling of `log Z`.
//!
//! The path runs between a weightless proposal RBM `A` and the target `B`.
//! Both hidden layers are kept side by side and summed out analytically, so
//! the intermediate densities are over visibles only:
//!
//! ```text
//! log f*_β(v) = (1−β) b_A·v + β b_B·v
//!             + Σ_i softplus((1−β)(c_A + W_A v)_i) + Σ_i softplus(β (c_B + W_B v)_i)
//! ```
//!
//! At `β = 0` this is `p*_A(v) · 2^{n_B}`, at `β = 1` it is `p*_B(v) · 2^{n_A}`.

use std::f64::consts::LN_2;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::BinaryDataset;
use crate::error::{Error, Result};
use crate::math::{logmeanexp, mean, softplus, softplus_sum, std_dev};
use crate::rbm::{dot_binary, sample_bernoulli_logits, RbmParams};
use crate::rng::{derive_seed, SeededRng};

/// Inverse temperatures `0 = β_0 < … < β_K = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealSchedule {
    betas: Vec<f64>,
}

impl AnnealSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::InvalidArgument(
                "a schedule needs K >= 1 transitions".into(),
            ));
        }
        if betas[0] != 0.0 || *betas.last().unwrap() != 1.0 {
            return Err(Error::InvalidArgument(
                "a schedule must start at 0 and end at 1".into(),
            ));
        }
        if betas
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]).is_none_or(|o| o.is_lt()))
        {
            return Err(Error::InvalidArgument(
                "schedule must be nondecreasing".into(),
            ));
        }
        Ok(Self { betas })
    }

    pub fn linear(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidArgument(
                "linear schedule needs K >= 1".into(),
            ));
        }
        Self::new((0..=k).map(|i| i as f64 / k as f64).collect())
    }

    /// `0:1/1000:0.5`, `0.5:1/10000:0.9`, `0.9:1/100000:1`, each boundary once.
    pub fn handcrafted() -> Self {
        let mut betas: Vec<f64> = (0..=500).map(|i| i as f64 / 1000.0).collect();
        betas.extend((1..=4000).map(|i| (5000 + i) as f64 / 10000.0));
        betas.extend((1..=10000).map(|i| (90000 + i) as f64 / 100000.0));
        Self { betas }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Number of transitions `K`.
    pub fn k(&self) -> usize {
        self.betas.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear(usize),
    Handcrafted,
}

impl ScheduleKind {
    pub fn transitions(&self) -> usize {
        match self {
            ScheduleKind::Linear(k) => *k,
            ScheduleKind::Handcrafted => 14500,
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Linear(k) => write!(f, "linear:{k}"),
            ScheduleKind::Handcrafted => write!(f, "handcrafted"),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    /// `linear:K` or `handcrafted` (alias `handcrafted14500`).
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "handcrafted" | "handcrafted14500" => Ok(ScheduleKind::Handcrafted),
            other => {
                let k = other
                    .strip_prefix("linear:")
                    .and_then(|k| k.trim().parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown schedule `{other}`")))?;
                Ok(ScheduleKind::Linear(k))
            }
        }
    }
}

pub fn build_schedule(kind: ScheduleKind) -> Result<AnnealSchedule> {
    match kind {
        ScheduleKind::Linear(k) => AnnealSchedule::linear(k),
        ScheduleKind::Handcrafted => Ok(AnnealSchedule::handcrafted()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProposalSpec {
    Uniform,
    /// Pixel means with `smoothing` pseudo-counts per outcome.
    BaseRate {
        smoothing: f64,
    },
}

impl ProposalSpec {
    pub fn base_rate() -> Self {
        ProposalSpec::BaseRate { smoothing: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProposalSpec::Uniform => "uniform",
            ProposalSpec::BaseRate { .. } => "baserate",
        }
    }
}

/// Weightless proposal RBM with `m` visibles and `n` hiddens.
pub fn make_proposal(
    spec: ProposalSpec,
    train_data: Option<&BinaryDataset>,
    m: usize,
    n: usize,
) -> Result<RbmParams> {
    match spec {
        ProposalSpec::Uniform => Ok(RbmParams::zeros(m, n)),
        ProposalSpec::BaseRate { smoothing } => {
            if !(smoothing > 0.0 && smoothing.is_finite()) {
                return Err(Error::InvalidArgument(
                    "base-rate smoothing must be positive".into(),
                ));
            }
            let data = train_data.ok_or_else(|| {
                Error::InvalidArgument("base-rate proposal needs training data".into())
            })?;
            if data.dim() != m {
                return Err(Error::Dimension(format!(
                    "training data has {} units, model has m = {m}",
                    data.dim()
                )));
            }
            let total = data.len() as f64 + 2.0 * smoothing;
            let b = data
                .column_counts()
                .into_iter()
                .map(|count| {
                    let p = (count as f64 + smoothing) / total;
                    p.ln() - (1.0 - p).ln()
                })
                .collect();
            RbmParams::weightless(b, vec![0.0; n])
        }
    }
}

/// `log Z` of a weightless RBM: `Σ_j softplus(b_j) + Σ_i softplus(c_i)`.
pub fn log_z_analytic(p: &RbmParams) -> Result<f64> {
    if !p.is_weightless() {
        return Err(Error::NotWeightless);
    }
    Ok(p.visible_bias()
        .iter()
        .chain(p.hidden_bias())
        .map(|&x| softplus(x))
        .sum())
}

fn check_pair(proposal: &RbmParams, target: &RbmParams) -> Result<()> {
    if proposal.n_visible() != target.n_visible() {
        return Err(Error::Dimension(format!(
            "proposal has m = {}, target has m = {}",
            proposal.n_visible(),
            target.n_visible()
        )));
    }
    Ok(())
}

/// `log f*_β(v)` with both hidden layers summed out.
pub fn intermediate_log_marginal(
    proposal: &RbmParams,
    target: &RbmParams,
    beta: f64,
    v: &[u8],
) -> f64 {
    let a = proposal.hidden_activations(v);
    let b = target.hidden_activations(v);
    (1.0 - beta) * dot_binary(proposal.visible_bias(), v)
        + beta * dot_binary(target.visible_bias(), v)
        + a.iter().map(|&x| softplus((1.0 - beta) * x)).sum::<f64>()
        + b.iter().map(|&x| softplus(beta * x)).sum::<f64>()
}

/// One Gibbs sweep leaving `f_β` invariant. Draw order: `h_A`, `h_B`, then `v`.
pub fn ais_transition(
    proposal: &RbmParams,
    target: &RbmParams,
    beta: f64,
    v: &[u8],
    rng: &mut SeededRng,
) -> Vec<u8> {
    let path = AnnealPath::new(proposal, target).expect("proposal and target share m");
    let mut ws = path.workspace();
    ws.load(&path, v);
    let mut out = v.to_vec();
    ws.transition(&path, beta, &mut out, rng);
    out
}

/// A proposal/target pair sharing the visible layer.
#[derive(Debug, Clone, Copy)]
pub struct AnnealPath<'a> {
    pub proposal: &'a RbmParams,
    pub target: &'a RbmParams,
}

impl<'a> AnnealPath<'a> {
    pub fn new(proposal: &'a RbmParams, target: &'a RbmParams) -> Result<Self> {
        check_pair(proposal, target)?;
        Ok(Self { proposal, target })
    }

    /// `log Z_0 = log Z_A + n_B ln 2`; needs a weightless proposal.
    pub fn log_z_start(&self) -> Result<f64> {
        Ok(log_z_analytic(self.proposal)? + self.target.n_hidden() as f64 * LN_2)
    }

    /// Converts `log Z_K` (the `β = 1` normalizer) into the target's `log Z`.
    pub fn target_log_z_from_end(&self, log_z_end: f64) -> f64 {
        log_z_end - self.proposal.n_hidden() as f64 * LN_2
    }

    pub(crate) fn workspace(&self) -> PathWorkspace {
        PathWorkspace {
            proposal_fixed: self.proposal.is_weightless(),
            act_a: self.proposal.hidden_bias().to_vec(),
            act_b: vec![0.0; self.target.n_hidden()],
            bias_a: 0.0,
            bias_b: 0.0,
            h_a: vec![0; self.proposal.n_hidden()],
            h_b: vec![0; self.target.n_hidden()],
            scaled: vec![0.0; self.proposal.n_hidden().max(self.target.n_hidden())],
            vis_a: vec![0.0; self.proposal.n_visible()],
            vis_b: vec![0.0; self.target.n_visible()],
        }
    }

    /// Exact draw from `f_0`'s visible marginal (independent units).
    pub(crate) fn sample_start(&self, rng: &mut SeededRng, v: &mut [u8]) -> Result<()> {
        if !self.proposal.is_weightless() {
            return Err(Error::NotWeightless);
        }
        sample_bernoulli_logits(self.proposal.visible_bias(), rng, v);
        Ok(())
    }
}

/// Activations of the current visible state, reused for every `β`.
pub(crate) struct PathWorkspace {
    /// The proposal is weightless, so `act_a` is `c_A` whatever `v` is.
    proposal_fixed: bool,
    act_a: Vec<f64>,
    act_b: Vec<f64>,
    bias_a: f64,
    bias_b: f64,
    h_a: Vec<u8>,
    h_b: Vec<u8>,
    scaled: Vec<f64>,
    vis_a: Vec<f64>,
    vis_b: Vec<f64>,
}

impl PathWorkspace {
    pub(crate) fn load(&mut self, path: &AnnealPath<'_>, v: &[u8]) {
        if !self.proposal_fixed {
            path.proposal.hidden_activations_into(v, &mut self.act_a);
        }
        path.target.hidden_activations_into(v, &mut self.act_b);
        self.bias_a = dot_binary(path.proposal.visible_bias(), v);
        self.bias_b = dot_binary(path.target.visible_bias(), v);
    }

    /// The part of `log f*_β` that depends on `v`. For a weightless proposal
    /// its hidden term is the same for every state and left out.
    #[inline]
    pub(crate) fn log_f_varying(&self, beta: f64) -> f64 {
        let a = 1.0 - beta;
        let hidden_a = if self.proposal_fixed {
            0.0
        } else {
            softplus_sum(&self.act_a, a)
        };
        a * self.bias_a + beta * self.bias_b + hidden_a + softplus_sum(&self.act_b, beta)
    }

    /// `log f*_β − log_f_varying(β)`.
    pub(crate) fn log_f_fixed(&self, beta: f64) -> f64 {
        if self.proposal_fixed {
            softplus_sum(&self.act_a, 1.0 - beta)
        } else {
            0.0
        }
    }

    /// Replaces `v` with a draw from the `β` transition started at the
    /// loaded state. The workspace must be reloaded afterwards.
    pub(crate) fn transition(
        &mut self,
        path: &AnnealPath<'_>,
        beta: f64,
        v: &mut [u8],
        rng: &mut SeededRng,
    ) {
        let a = 1.0 - beta;
        let na = self.act_a.len();
        for (s, &x) in self.scaled[..na].iter_mut().zip(&self.act_a) {
            *s = a * x;
        }
        sample_bernoulli_logits(&self.scaled[..na], rng, &mut self.h_a);
        let nb = self.act_b.len();
        for (s, &x) in self.scaled[..nb].iter_mut().zip(&self.act_b) {
            *s = beta * x;
        }
        sample_bernoulli_logits(&self.scaled[..nb], rng, &mut self.h_b);

        path.proposal
            .visible_activations_into(&self.h_a, &mut self.vis_a);
        path.target
            .visible_activations_into(&self.h_b, &mut self.vis_b);
        for (xa, &xb) in self.vis_a.iter_mut().zip(&self.vis_b) {
            *xa = a * *xa + beta * xb;
        }
        sample_bernoulli_logits(&self.vis_a, rng, v);
    }
}

/// One forward AIS run; returns its log importance weight
/// `Σ_{k<K} [log f*_{k+1}(v_k) − log f*_k(v_k)]`.
pub fn ais_run(
    path: &AnnealPath<'_>,
    schedule: &AnnealSchedule,
    rng: &mut SeededRng,
) -> Result<f64> {
    let mut v = vec![0u8; path.target.n_visible()];
    path.sample_start(rng, &mut v)?;
    let mut ws = path.workspace();
    let betas = schedule.betas();
    let k_max = schedule.k();
    let mut log_w = 0.0;
    for k in 0..k_max {
        ws.load(path, &v);
        log_w += ws.log_f_varying(betas[k + 1]) - ws.log_f_varying(betas[k]);
        if k + 1 < k_max {
            ws.transition(path, betas[k + 1], &mut v, rng);
        }
    }
    // The state-independent terms telescope.
    Ok(log_w + ws.log_f_fixed(1.0) - ws.log_f_fixed(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisResult {
    /// Mean of the per-repeat estimates.
    pub log_z_hat: f64,
    /// Sample standard deviation of the per-repeat estimates.
    pub sigma: f64,
    pub repeat_estimates: Vec<f64>,
    /// `log_weights[r]` holds the `M` run weights of repeat `r`.
    pub log_weights: Vec<Vec<f64>>,
    pub log_z_proposal: f64,
    pub seed: u64,
}

impl AisResult {
    /// Appends the repeats of `other`, a later range of the same estimate.
    pub fn join(mut self, other: AisResult) -> AisResult {
        self.repeat_estimates.extend(other.repeat_estimates);
        self.log_weights.extend(other.log_weights);
        self.log_z_hat = mean(&self.repeat_estimates);
        self.sigma = std_dev(&self.repeat_estimates);
        self
    }

    /// Transitions simulated across all repeats (`repeats · M · K`).
    pub fn gibbs_steps(&self, k: usize) -> u64 {
        self.log_weights.iter().map(|w| w.len() as u64).sum::<u64>() * k as u64
    }
}

/// `repeats` independent estimates of the target's `log Z`, each from
/// `m_runs` runs. Run `j` of repeat `r` draws from stream `j` of
/// `derive_seed(seed, r)`.
pub fn estimate_log_z(
    path: &AnnealPath<'_>,
    schedule: &AnnealSchedule,
    m_runs: usize,
    repeats: usize,
    seed: u64,
) -> Result<AisResult> {
    if repeats < 1 {
        return Err(Error::InvalidArgument(
            "AIS needs at least one repeat".into(),
        ));
    }
    estimate_log_z_repeats(path, schedule, m_runs, 0..repeats, seed)
}

/// Repeats `range` of [`estimate_log_z`]; splitting `0..R` into pieces and
/// joining them with [`AisResult::join`] gives the same numbers.
pub fn estimate_log_z_repeats(
    path: &AnnealPath<'_>,
    schedule: &AnnealSchedule,
    m_runs: usize,
    range: Range<usize>,
    seed: u64,
) -> Result<AisResult> {
    if m_runs < 1 {
        return Err(Error::InvalidArgument("AIS needs M >= 1 runs".into()));
    }
    if range.is_empty() {
        return Err(Error::InvalidArgument(
            "AIS needs at least one repeat".into(),
        ));
    }
    let log_z_start = path.log_z_start()?;
    let first = range.start;
    let flat: Vec<f64> = (0..range.len() * m_runs)
        .into_par_iter()
        .map(|t| {
            let (r, j) = (first + t / m_runs, t % m_runs);
            let mut rng = SeededRng::stream(derive_seed(seed, r as u64), j as u64);
            ais_run(path, schedule, &mut rng)
        })
        .collect::<Result<_>>()?;
    let log_weights: Vec<Vec<f64>> = flat.chunks(m_runs).map(<[f64]>::to_vec).collect();
    let repeat_estimates: Vec<f64> = log_weights
        .iter()
        .map(|w| path.target_log_z_from_end(log_z_start + logmeanexp(w)))
        .collect();
    Ok(AisResult {
        log_z_hat: mean(&repeat_estimates),
        sigma: std_dev(&repeat_estimates),
        repeat_estimates,
        log_weights,
        log_z_proposal: log_z_analytic(path.proposal)?,
        seed,
    })
}
