//! Conservative sampling-based log-likelihood (CSL): hidden states from a
//! pool of Gibbs chains, averaged conditional likelihoods of the test data.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;

use crate::data::{pack_bits, unpack_bits};
use crate::error::{Error, Result};
use crate::math::{mean, softplus, std_dev, LogSumExp};
use crate::rbm::{GibbsChain, JointState, RbmParams};
use crate::rng::SeededRng;

const POOL_MAGIC: &[u8; 4] = b"CSL1";
const POOL_HEADER: usize = 4 + 8 * 5 + 1;

/// Burn-in used when a configuration asks for a "small" one.
pub const SMALL_BURN_IN: usize = 100;
/// Burn-in used when a configuration asks for a "large" one.
pub const LARGE_BURN_IN: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Each chain starts from fair coin flips (unbiased CSL).
    Random,
    /// Each chain starts from a training vector (biased CSL).
    TrainingData,
}

impl InitMode {
    pub fn name(&self) -> &'static str {
        match self {
            InitMode::Random => "unbiased",
            InitMode::TrainingData => "biased",
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unbiased" | "random" => Ok(InitMode::Random),
            "biased" | "training_data" | "data" => Ok(InitMode::TrainingData),
            _ => Err(Error::Config(format!(
                "unknown CSL init mode `{s}` (expected biased or unbiased)"
            ))),
        }
    }
}

/// Hidden states of `s_m` chains, stored every `storage_thin` steps.
///
/// Step `t` (0-based) is the hidden state drawn in the `t`-th Gibbs sweep;
/// steps `0, storage_thin, 2·storage_thin, …` below `s_t` are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainPool {
    n_hidden: usize,
    s_m: usize,
    s_t: usize,
    storage_thin: usize,
    pub init_mode: InitMode,
    pub seed: u64,
    /// Packed rows, chain-major.
    rows: Vec<u8>,
}

impl ChainPool {
    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn s_m(&self) -> usize {
        self.s_m
    }

    pub fn s_t(&self) -> usize {
        self.s_t
    }

    pub fn storage_thin(&self) -> usize {
        self.storage_thin
    }

    /// Stored states per chain.
    pub fn stored_per_chain(&self) -> usize {
        self.s_t.div_ceil(self.storage_thin)
    }

    fn row_bytes(&self) -> usize {
        self.n_hidden.div_ceil(8)
    }

    fn packed(&self, chain: usize, step: usize) -> &[u8] {
        debug_assert_eq!(step % self.storage_thin, 0);
        let rb = self.row_bytes();
        let at = (chain * self.stored_per_chain() + step / self.storage_thin) * rb;
        &self.rows[at..at + rb]
    }

    /// Hidden state of `chain` at `step`; the step must have been stored.
    pub fn state(&self, chain: usize, step: usize) -> Vec<u8> {
        unpack_bits(self.packed(chain, step), self.n_hidden)
    }

    /// Gibbs sweeps simulated to build the pool.
    pub fn gibbs_steps(&self) -> u64 {
        self.s_m as u64 * self.s_t as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(POOL_HEADER + self.rows.len());
        out.extend_from_slice(POOL_MAGIC);
        for x in [self.s_m, self.s_t, self.n_hidden, self.storage_thin] {
            out.extend_from_slice(&(x as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.push(match self.init_mode {
            InitMode::Random => 0,
            InitMode::TrainingData => 1,
        });
        out.extend_from_slice(&self.rows);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "CSL1 pool";
        if bytes.len() < POOL_HEADER {
            return Err(Error::Truncated {
                what: WHAT,
                expected: POOL_HEADER,
                actual: bytes.len(),
            });
        }
        if &bytes[..4] != POOL_MAGIC {
            return Err(Error::BadMagic {
                what: WHAT,
                expected: u32::from_be_bytes(*POOL_MAGIC),
                actual: u32::from_be_bytes(bytes[..4].try_into().unwrap()),
            });
        }
        let word = |k: usize| u64::from_le_bytes(bytes[4 + 8 * k..12 + 8 * k].try_into().unwrap());
        let (s_m, s_t, n_hidden, storage_thin) = (
            word(0) as usize,
            word(1) as usize,
            word(2) as usize,
            word(3) as usize,
        );
        let seed = word(4);
        let init_mode = match bytes[POOL_HEADER - 1] {
            0 => InitMode::Random,
            1 => InitMode::TrainingData,
            x => return Err(Error::format(WHAT, format!("unknown init mode byte {x}"))),
        };
        if s_m == 0 || s_t == 0 || n_hidden == 0 || storage_thin == 0 {
            return Err(Error::format(WHAT, "zero dimension in header"));
        }
        let expected = POOL_HEADER + s_m * s_t.div_ceil(storage_thin) * n_hidden.div_ceil(8);
        if bytes.len() != expected {
            return Err(Error::Truncated {
                what: WHAT,
                expected,
                actual: bytes.len(),
            });
        }
        Ok(Self {
            n_hidden,
            s_m,
            s_t,
            storage_thin,
            init_mode,
            seed,
            rows: bytes[POOL_HEADER..].to_vec(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(format!("loading {}", path.display())))
    }
}

/// Runs `s_m` chains of `s_t` Gibbs sweeps each. Chain `c` uses stream `c`
/// of `seed`; in training-data mode the start vectors are picked with
/// stream `s_m` (without replacement when there are enough vectors).
pub fn simulate_pool(
    p: &RbmParams,
    s_m: usize,
    s_t: usize,
    storage_thin: usize,
    init_mode: InitMode,
    train_data: Option<&[Vec<u8>]>,
    seed: u64,
) -> Result<ChainPool> {
    if s_m == 0 || s_t == 0 || storage_thin == 0 {
        return Err(Error::InvalidArgument(
            "pool needs s_m, s_t and storage thin >= 1".into(),
        ));
    }
    let m = p.n_visible();
    let starts: Option<Vec<usize>> = match init_mode {
        InitMode::Random => None,
        InitMode::TrainingData => {
            let data = train_data
                .filter(|d| !d.is_empty())
                .ok_or(Error::Empty("training data for biased CSL"))?;
            if let Some(bad) = data.iter().find(|v| v.len() != m) {
                return Err(Error::Dimension(format!(
                    "training vector has length {}, model has m = {m}",
                    bad.len()
                )));
            }
            let mut rng = SeededRng::stream(seed, s_m as u64);
            Some(if data.len() >= s_m {
                index::sample(&mut rng, data.len(), s_m).into_vec()
            } else {
                (0..s_m).map(|_| rng.below(data.len())).collect()
            })
        }
    };
    let n = p.n_hidden();
    let row_bytes = n.div_ceil(8);
    let stored = s_t.div_ceil(storage_thin);
    let mut rows = vec![0u8; s_m * stored * row_bytes];
    rows.par_chunks_mut(stored * row_bytes)
        .enumerate()
        .for_each(|(c, slab)| {
            let mut rng = SeededRng::stream(seed, c as u64);
            let v = match (&starts, train_data) {
                (Some(idx), Some(data)) => data[idx[c]].clone(),
                _ => (0..m).map(|_| rng.bernoulli(0.5)).collect(),
            };
            let mut chain = GibbsChain::new(p, JointState::from_visible(v, n));
            let mut buf = Vec::with_capacity(row_bytes);
            for t in 0..s_t {
                chain.step(p, &mut rng);
                if t % storage_thin == 0 {
                    buf.clear();
                    pack_bits(&chain.state.h, &mut buf);
                    let at = t / storage_thin * row_bytes;
                    slab[at..at + row_bytes].copy_from_slice(&buf);
                }
            }
        });
    Ok(ChainPool {
        n_hidden: n,
        s_m,
        s_t,
        storage_thin,
        init_mode,
        seed,
        rows,
    })
}

/// Which pool states feed one CSL estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionSpec {
    pub m_chains: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_samples: usize,
}

impl SelectionSpec {
    pub fn per_chain(&self) -> usize {
        self.n_samples / self.m_chains
    }

    /// Largest first step that still fits every sample in the pool.
    fn last_start(&self, pool: &ChainPool) -> Option<usize> {
        (pool.s_t() + 1).checked_sub(self.thin * (self.per_chain() - 1) + 1)
    }

    pub fn check(&self, pool: &ChainPool) -> Result<()> {
        let fail = |msg: String| Err(Error::InfeasibleSelection(msg));
        if self.m_chains == 0 || self.thin == 0 || self.n_samples == 0 {
            return fail("chains, thin and sample count must be positive".into());
        }
        if self.m_chains > pool.s_m() {
            return fail(format!(
                "{} chains requested, pool has {}",
                self.m_chains,
                pool.s_m()
            ));
        }
        if !self.n_samples.is_multiple_of(self.m_chains) {
            return fail(format!(
                "N = {} is not divisible by {} chains",
                self.n_samples, self.m_chains
            ));
        }
        let need = self.burn_in + self.thin * self.per_chain();
        if need > pool.s_t() {
            return fail(format!(
                "burn-in {} + thin {} x {} samples per chain = {need} steps, pool chains have {}",
                self.burn_in,
                self.thin,
                self.per_chain(),
                pool.s_t()
            ));
        }
        let st = pool.storage_thin();
        if !self.burn_in.is_multiple_of(st) || !self.thin.is_multiple_of(st) {
            return fail(format!(
                "burn-in {} and thin {} must be multiples of the pool storage thin {st}",
                self.burn_in, self.thin
            ));
        }
        Ok(())
    }

    /// Gibbs sweeps behind the selected samples.
    pub fn gibbs_steps(&self) -> u64 {
        self.m_chains as u64 * (self.burn_in + self.thin * self.per_chain()) as u64
    }
}

/// Packed hidden states, possibly with repeats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenSamples {
    n_hidden: usize,
    rows: Vec<u8>,
}

impl HiddenSamples {
    pub fn new(n_hidden: usize) -> Self {
        Self {
            n_hidden,
            rows: Vec::new(),
        }
    }

    pub fn from_states<'a>(n_hidden: usize, states: impl IntoIterator<Item = &'a [u8]>) -> Self {
        let mut s = Self::new(n_hidden);
        for h in states {
            s.push(h);
        }
        s
    }

    pub fn push(&mut self, h: &[u8]) {
        assert_eq!(h.len(), self.n_hidden, "hidden state length");
        pack_bits(h, &mut self.rows);
    }

    fn push_packed(&mut self, row: &[u8]) {
        self.rows.extend_from_slice(row);
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    fn row_bytes(&self) -> usize {
        self.n_hidden.div_ceil(8)
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.row_bytes()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, k: usize) -> Vec<u8> {
        let rb = self.row_bytes();
        unpack_bits(&self.rows[k * rb..(k + 1) * rb], self.n_hidden)
    }

    /// Distinct states in order of first appearance, with their counts.
    pub fn distinct(&self) -> (Vec<Vec<u8>>, Vec<usize>) {
        let rb = self.row_bytes();
        let mut slot: HashMap<&[u8], usize> = HashMap::new();
        let mut states = Vec::new();
        let mut counts = Vec::new();
        for row in self.rows.chunks(rb) {
            let k = *slot.entry(row).or_insert_with(|| {
                states.push(unpack_bits(row, self.n_hidden));
                counts.push(0);
                states.len() - 1
            });
            counts[k] += 1;
        }
        (states, counts)
    }
}

/// Burn-in for one repeat: uniform over `[spec.burn_in, spec.burn_in + jitter]`,
/// clipped to what the pool allows, on the storage grid.
pub fn draw_burn_in(
    pool: &ChainPool,
    spec: &SelectionSpec,
    jitter: usize,
    rng: &mut SeededRng,
) -> Result<usize> {
    spec.check(pool)?;
    let st = pool.storage_thin();
    let hi = (spec.burn_in + jitter).min(pool.s_t() - spec.thin * spec.per_chain());
    let slots = (hi - spec.burn_in) / st + 1;
    Ok(spec.burn_in + st * rng.below(slots))
}

/// Picks `m_chains` distinct chains uniformly and takes `n_samples / m_chains`
/// states from each at `burn_in, burn_in + thin, …`.
pub fn select_samples(
    pool: &ChainPool,
    spec: &SelectionSpec,
    rng: &mut SeededRng,
) -> Result<HiddenSamples> {
    spec.check(pool)?;
    debug_assert!(spec.last_start(pool).is_some_and(|s| s >= spec.burn_in));
    let mut chains = index::sample(rng, pool.s_m(), spec.m_chains).into_vec();
    chains.sort_unstable();
    let mut out = HiddenSamples::new(pool.n_hidden());
    out.rows.reserve(spec.n_samples * pool.row_bytes());
    for &c in &chains {
        for s in 0..spec.per_chain() {
            out.push_packed(pool.packed(c, spec.burn_in + s * spec.thin));
        }
    }
    Ok(out)
}

/// `log p(v | h) = Σ_j [v_j a_j − softplus(a_j)]` with `a = b + Wᵀh`.
pub fn log_cond_likelihood(p: &RbmParams, v: &[u8], h: &[u8]) -> f64 {
    assert_eq!(v.len(), p.n_visible(), "visible length");
    p.visible_activations(h)
        .iter()
        .zip(v)
        .map(|(&a, &x)| if x == 1 { -softplus(-a) } else { -softplus(a) })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CslResult {
    pub avg_loglik: f64,
    /// Standard deviation of the per-vector estimates.
    pub sigma: f64,
    pub per_sample: Vec<f64>,
    pub n_samples: usize,
    pub distinct_states: usize,
}

/// `(1/|test|) Σ_v log (1/N) Σ_k p(v | h_k)`.
///
/// Repeated hidden states are folded into counts. With `u = W v`,
/// `log p(v|h) = b·v + h·u − Σ_j softplus(b_j + (Wᵀh)_j)`, so the last
/// term is computed once per distinct `h`.
pub fn csl_estimate(
    p: &RbmParams,
    samples: &HiddenSamples,
    test_set: &[Vec<u8>],
) -> Result<CslResult> {
    if samples.is_empty() {
        return Err(Error::Empty("CSL hidden sample set"));
    }
    if test_set.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if samples.n_hidden() != p.n_hidden() {
        return Err(Error::Dimension(format!(
            "samples have {} hidden units, model has {}",
            samples.n_hidden(),
            p.n_hidden()
        )));
    }
    if let Some(bad) = test_set.iter().find(|v| v.len() != p.n_visible()) {
        return Err(Error::Dimension(format!(
            "test vector has length {}, model has m = {}",
            bad.len(),
            p.n_visible()
        )));
    }
    let (states, counts) = samples.distinct();
    let n = p.n_hidden();
    let normalizers: Vec<f64> = states
        .par_iter()
        .map(|h| p.visible_activations(h).iter().map(|&a| softplus(a)).sum())
        .collect();
    let dense: Vec<f64> = states
        .iter()
        .flat_map(|h| h.iter().map(|&x| x as f64))
        .collect();
    let log_counts: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let log_n = (samples.len() as f64).ln();
    let per_sample: Vec<f64> = test_set
        .par_iter()
        .map(|v| {
            let mut u = p.hidden_activations(v);
            for (x, c) in u.iter_mut().zip(p.hidden_bias()) {
                *x -= c;
            }
            let bv = crate::rbm::dot_binary(p.visible_bias(), v);
            let mut acc = LogSumExp::default();
            for ((h, &norm), &lc) in dense.chunks(n).zip(&normalizers).zip(&log_counts) {
                let hu: f64 = h.iter().zip(&u).map(|(a, b)| a * b).sum();
                acc.push(hu - norm + lc);
            }
            bv + acc.value() - log_n
        })
        .collect();
    Ok(CslResult {
        avg_loglik: mean(&per_sample),
        sigma: std_dev(&per_sample),
        n_samples: samples.len(),
        distinct_states: states.len(),
        per_sample,
    })
}

/// CSL sample count whose Gibbs cost matches `ais_runs · ais_k` sweeps when
/// drawn from `chains` chains after `burn_in` steps with the given thin.
pub fn matched_sample_count(
    ais_runs: usize,
    ais_k: usize,
    chains: usize,
    burn_in: usize,
    thin: usize,
) -> Result<usize> {
    let budget = ais_runs as u64 * ais_k as u64;
    let per_chain_steps = budget / chains.max(1) as u64;
    if chains == 0 || thin == 0 || per_chain_steps < (burn_in + thin) as u64 {
        return Err(Error::InvalidArgument(format!(
            "an AIS budget of {budget} sweeps cannot cover {chains} chains with burn-in {burn_in} and thin {thin}"
        )));
    }
    Ok(chains * ((per_chain_steps - burn_in as u64) / thin as u64) as usize)
}
