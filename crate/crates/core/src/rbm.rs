//! Binary restricted Boltzmann machine.
//!
//! Energy of a joint state:
//!
//! ```text
//! E(v, h) = -Σ_ij w_ij h_i v_j - Σ_j b_j v_j - Σ_i c_i h_i
//! ```
//!
//! with `w` stored hidden-major (`n` rows of length `m`). Binary vectors are
//! byte-per-unit slices holding `0` or `1`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::{fast_exp, sigmoid, softplus};
use crate::rng::SeededRng;

/// RBM parameters `θ = {w, b, c}`. Immutable once built, so it can be shared
/// freely between sampling tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    n_visible: usize,
    n_hidden: usize,
    /// `n × m`, row `i` holds the couplings of hidden unit `i`.
    weights: Vec<f64>,
    /// `m × n` copy of `weights`, for summing columns over active visibles.
    weights_t: Vec<f64>,
    visible_bias: Vec<f64>,
    hidden_bias: Vec<f64>,
    weightless: bool,
}

impl RbmParams {
    pub fn new(
        n_visible: usize,
        n_hidden: usize,
        weights: Vec<f64>,
        visible_bias: Vec<f64>,
        hidden_bias: Vec<f64>,
    ) -> Result<Self> {
        if n_visible == 0 || n_hidden == 0 {
            return Err(Error::Dimension(format!(
                "need at least one visible and one hidden unit, got m = {n_visible}, n = {n_hidden}"
            )));
        }
        if weights.len() != n_visible * n_hidden {
            return Err(Error::Dimension(format!(
                "weights have {} entries, expected n × m = {}",
                weights.len(),
                n_visible * n_hidden
            )));
        }
        if visible_bias.len() != n_visible {
            return Err(Error::Dimension(format!(
                "visible bias has length {}, expected {n_visible}",
                visible_bias.len()
            )));
        }
        if hidden_bias.len() != n_hidden {
            return Err(Error::Dimension(format!(
                "hidden bias has length {}, expected {n_hidden}",
                hidden_bias.len()
            )));
        }
        if !weights.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        if !visible_bias.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("visible bias"));
        }
        if !hidden_bias.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("hidden bias"));
        }
        let mut params = Self {
            n_visible,
            n_hidden,
            weights,
            weights_t: Vec::new(),
            visible_bias,
            hidden_bias,
            weightless: false,
        };
        params.refresh_derived();
        Ok(params)
    }

    /// All-zero parameters: the uniform distribution over joint states.
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self::new(
            n_visible,
            n_hidden,
            vec![0.0; n_visible * n_hidden],
            vec![0.0; n_visible],
            vec![0.0; n_hidden],
        )
        .expect("zero parameters are valid for nonzero dimensions")
    }

    /// Zero weights with the given biases.
    pub fn weightless(visible_bias: Vec<f64>, hidden_bias: Vec<f64>) -> Result<Self> {
        let (m, n) = (visible_bias.len(), hidden_bias.len());
        Self::new(m, n, vec![0.0; m * n], visible_bias, hidden_bias)
    }

    fn refresh_derived(&mut self) {
        let (m, n) = (self.n_visible, self.n_hidden);
        let mut t = vec![0.0; m * n];
        for i in 0..n {
            for j in 0..m {
                t[j * n + i] = self.weights[i * m + j];
            }
        }
        self.weights_t = t;
        self.weightless = self.weights.iter().all(|&w| w == 0.0);
    }

    /// Adds the given increments in place. Used by training, which owns the
    /// only handle to the parameters while they change.
    pub(crate) fn apply_increment(&mut self, dw: &[f64], db: &[f64], dc: &[f64]) {
        debug_assert_eq!(dw.len(), self.weights.len());
        self.weights.iter_mut().zip(dw).for_each(|(w, d)| *w += d);
        self.visible_bias
            .iter_mut()
            .zip(db)
            .for_each(|(b, d)| *b += d);
        self.hidden_bias
            .iter_mut()
            .zip(dc)
            .for_each(|(c, d)| *c += d);
        self.refresh_derived();
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    /// Hidden-major weights, `n × m`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, hidden: usize, visible: usize) -> f64 {
        self.weights[hidden * self.n_visible + visible]
    }

    /// Couplings of hidden unit `i` to every visible unit.
    pub fn weight_row(&self, hidden: usize) -> &[f64] {
        let m = self.n_visible;
        &self.weights[hidden * m..(hidden + 1) * m]
    }

    pub fn visible_bias(&self) -> &[f64] {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_bias
    }

    pub fn is_weightless(&self) -> bool {
        self.weightless
    }

    fn check_visible(&self, v: &[u8]) {
        assert_eq!(
            v.len(),
            self.n_visible,
            "visible vector has length {}, model has m = {}",
            v.len(),
            self.n_visible
        );
    }

    fn check_hidden(&self, h: &[u8]) {
        assert_eq!(
            h.len(),
            self.n_hidden,
            "hidden vector has length {}, model has n = {}",
            h.len(),
            self.n_hidden
        );
    }

    /// `out_i = c_i + Σ_j w_ij v_j`.
    #[inline]
    pub fn hidden_activations_into(&self, v: &[u8], out: &mut [f64]) {
        self.check_visible(v);
        let n = self.n_hidden;
        out[..n].copy_from_slice(&self.hidden_bias);
        if self.weightless {
            return;
        }
        let out = &mut out[..n];
        // Gather active indices without branching on the (random) bits first.
        const BLOCK: usize = 256;
        let mut active = [0u32; BLOCK];
        for (b, vb) in v.chunks(BLOCK).enumerate() {
            let mut count = 0;
            for (k, &x) in vb.iter().enumerate() {
                active[count] = k as u32;
                count += (x != 0) as usize;
            }
            for &k in &active[..count] {
                let j = b * BLOCK + k as usize;
                let col = &self.weights_t[j * n..(j + 1) * n];
                out.iter_mut().zip(col).for_each(|(o, w)| *o += w);
            }
        }
    }

    /// `out_j = b_j + Σ_i w_ij h_i`.
    #[inline]
    pub fn visible_activations_into(&self, h: &[u8], out: &mut [f64]) {
        self.check_hidden(h);
        let m = self.n_visible;
        out[..m].copy_from_slice(&self.visible_bias);
        if self.weightless {
            return;
        }
        let out = &mut out[..m];
        for (i, &hi) in h.iter().enumerate() {
            if hi != 0 {
                let row = &self.weights[i * m..(i + 1) * m];
                out.iter_mut().zip(row).for_each(|(o, w)| *o += w);
            }
        }
    }

    pub fn hidden_activations(&self, v: &[u8]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_hidden];
        self.hidden_activations_into(v, &mut out);
        out
    }

    pub fn visible_activations(&self, h: &[u8]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_visible];
        self.visible_activations_into(h, &mut out);
        out
    }

    /// Energy of the joint state `(v, h)`.
    ///
    /// # Panics
    /// If the vector lengths do not match the model.
    pub fn energy(&self, v: &[u8], h: &[u8]) -> f64 {
        self.check_hidden(h);
        let act = self.hidden_activations(v);
        let hidden_term: f64 = h
            .iter()
            .zip(&act)
            .filter(|(&hi, _)| hi != 0)
            .map(|(_, a)| a)
            .sum();
        -hidden_term - dot_binary(&self.visible_bias, v)
    }

    /// `log p*(v) = Σ_j b_j v_j + Σ_i softplus(c_i + Σ_j w_ij v_j)`, the
    /// hidden-summed unnormalized log-probability of a visible vector.
    pub fn unnorm_log_prob_v(&self, v: &[u8]) -> f64 {
        let act = self.hidden_activations(v);
        dot_binary(&self.visible_bias, v) + act.iter().map(|&a| softplus(a)).sum::<f64>()
    }

    /// `log p*(h) = Σ_i c_i h_i + Σ_j softplus(b_j + Σ_i w_ij h_i)`.
    pub fn unnorm_log_prob_h(&self, h: &[u8]) -> f64 {
        let act = self.visible_activations(h);
        dot_binary(&self.hidden_bias, h) + act.iter().map(|&a| softplus(a)).sum::<f64>()
    }

    /// `log p(v) = log p*(v) − log Z`.
    pub fn log_likelihood(&self, v: &[u8], log_z: f64) -> f64 {
        self.unnorm_log_prob_v(v) - log_z
    }

    /// `P(h_i = 1 | v)` for every hidden unit.
    pub fn cond_h_given_v(&self, v: &[u8]) -> Vec<f64> {
        let mut act = self.hidden_activations(v);
        act.iter_mut().for_each(|a| *a = sigmoid(*a));
        act
    }

    /// `P(v_j = 1 | h)` for every visible unit.
    pub fn cond_v_given_h(&self, h: &[u8]) -> Vec<f64> {
        let mut act = self.visible_activations(h);
        act.iter_mut().for_each(|a| *a = sigmoid(*a));
        act
    }

    /// One block-Gibbs sweep: `h' ~ p(h | v)`, then `v' ~ p(v | h')`.
    pub fn gibbs_step(&self, state: &JointState, rng: &mut SeededRng) -> JointState {
        let mut chain = GibbsChain::new(self, state.clone());
        chain.step(self, rng);
        chain.state
    }

    /// Writes the model in the `RBM1` text format.
    pub fn to_text(&self) -> String {
        let mut s =
            String::with_capacity(32 * (self.weights.len() + self.n_visible + self.n_hidden));
        let _ = writeln!(s, "RBM1");
        let _ = writeln!(s, "{} {}", self.n_visible, self.n_hidden);
        write_row(&mut s, &self.visible_bias);
        write_row(&mut s, &self.hidden_bias);
        for i in 0..self.n_hidden {
            write_row(&mut s, self.weight_row(i));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        match tokens.next() {
            Some("RBM1") => {}
            Some(other) => {
                return Err(Error::format(
                    "RBM1 model",
                    format!("expected magic \"RBM1\", found {other:?}"),
                ))
            }
            None => return Err(Error::format("RBM1 model", "empty input")),
        }
        let mut next_usize = |name: &str| -> Result<usize> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::format("RBM1 model", format!("missing {name}")))?;
            tok.parse()
                .map_err(|_| Error::format("RBM1 model", format!("bad {name}: {tok:?}")))
        };
        let m = next_usize("m")?;
        let n = next_usize("n")?;
        let mut values = Vec::with_capacity(m + n + m * n);
        for tok in tokens {
            let x: f64 = tok
                .parse()
                .map_err(|_| Error::format("RBM1 model", format!("bad number {tok:?}")))?;
            values.push(x);
        }
        if values.len() != m + n + m * n {
            return Err(Error::format(
                "RBM1 model",
                format!(
                    "expected {} values for m = {m}, n = {n}, found {}",
                    m + n + m * n,
                    values.len()
                ),
            ));
        }
        let w = values.split_off(m + n);
        let c = values.split_off(m);
        Self::new(m, n, w, values, c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
        f.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_text(&text)
    }

    /// Short content hash identifying this parameter set, e.g. `rbm20-1a2b3c4d5e6f`.
    pub fn model_id(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        let mut id = format!("rbm{}-", self.n_hidden);
        for b in &digest[..6] {
            let _ = write!(id, "{b:02x}");
        }
        id
    }
}

fn write_row(s: &mut String, row: &[f64]) {
    for (k, x) in row.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:e}");
    }
    s.push('\n');
}

/// `Σ_j a_j x_j` for binary `x`.
#[inline]
pub fn dot_binary(a: &[f64], x: &[u8]) -> f64 {
    debug_assert_eq!(a.len(), x.len());
    let mut lanes = [0.0; 8];
    let (a_blocks, x_blocks) = (a.chunks_exact(8), x.chunks_exact(8));
    let (a_tail, x_tail) = (a_blocks.remainder(), x_blocks.remainder());
    for (ab, xb) in a_blocks.zip(x_blocks) {
        for k in 0..8 {
            lanes[k] += ab[k] * xb[k] as f64;
        }
    }
    let mut total = lanes.iter().sum::<f64>();
    for (ai, &xi) in a_tail.iter().zip(x_tail) {
        total += ai * xi as f64;
    }
    total
}

/// A joint configuration of visible and hidden units.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointState {
    pub v: Vec<u8>,
    pub h: Vec<u8>,
}

impl JointState {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            v: vec![0; n_visible],
            h: vec![0; n_hidden],
        }
    }

    /// State whose visible layer is `v` and hidden layer is all zero.
    pub fn from_visible(v: Vec<u8>, n_hidden: usize) -> Self {
        Self {
            v,
            h: vec![0; n_hidden],
        }
    }
}

/// Samples `out_k ~ Bernoulli(σ(act_k))` in index order, one uniform per unit.
///
/// With the draw `u = k · 2^-53`, the unit is on iff `u < 1 / (1 + e^{-a})`,
/// evaluated as `k · (1 + e^{-a}) < 2^53` to avoid a division.
#[inline]
pub fn sample_bernoulli_logits(act: &[f64], rng: &mut SeededRng, out: &mut [u8]) {
    const BLOCK: usize = 64;
    const SCALE: f64 = (1u64 << 53) as f64;
    let mut draws = [0.0; BLOCK];
    for (a, o) in act.chunks(BLOCK).zip(out.chunks_mut(BLOCK)) {
        for d in draws[..o.len()].iter_mut() {
            *d = rng.uniform_bits() as f64;
        }
        for ((bit, d), &x) in o.iter_mut().zip(&draws).zip(a) {
            *bit = (d * (1.0 + fast_exp(-x)) < SCALE) as u8;
        }
    }
}

/// A Gibbs chain with its scratch buffers, for running many sweeps without
/// reallocating.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    pub state: JointState,
    hidden_act: Vec<f64>,
    visible_act: Vec<f64>,
}

impl GibbsChain {
    pub fn new(params: &RbmParams, state: JointState) -> Self {
        assert_eq!(state.v.len(), params.n_visible());
        assert_eq!(state.h.len(), params.n_hidden());
        Self {
            state,
            hidden_act: vec![0.0; params.n_hidden()],
            visible_act: vec![0.0; params.n_visible()],
        }
    }

    /// Resamples the hidden layer given the current visibles.
    #[inline]
    pub fn sample_hidden(&mut self, params: &RbmParams, rng: &mut SeededRng) {
        params.hidden_activations_into(&self.state.v, &mut self.hidden_act);
        sample_bernoulli_logits(&self.hidden_act, rng, &mut self.state.h);
    }

    /// Resamples the visible layer given the current hiddens.
    #[inline]
    pub fn sample_visible(&mut self, params: &RbmParams, rng: &mut SeededRng) {
        params.visible_activations_into(&self.state.h, &mut self.visible_act);
        sample_bernoulli_logits(&self.visible_act, rng, &mut self.state.v);
    }

    /// Hidden then visible; hidden units consume the stream first, in index
    /// order, followed by the visible units.
    #[inline]
    pub fn step(&mut self, params: &RbmParams, rng: &mut SeededRng) {
        self.sample_hidden(params, rng);
        self.sample_visible(params, rng);
    }

    /// Activations `c + W v` computed by the last [`Self::sample_hidden`].
    pub fn last_hidden_activations(&self) -> &[f64] {
        &self.hidden_act
    }
}
