//! CD-k training with momentum and L2 weight decay.

use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::rbm::{GibbsChain, JointState, RbmParams};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Gibbs steps in the negative phase.
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    /// Epochs with index below this use `momentum_initial`.
    pub momentum_switch_epoch: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 20,
            learning_rate: 0.1,
            batch_size: 100,
            weight_decay: 0.001,
            momentum_initial: 0.5,
            momentum_final: 0.9,
            momentum_switch_epoch: 5,
            epochs: 30,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("training config: {what}")));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        for mom in [self.momentum_initial, self.momentum_final] {
            if !(0.0..1.0).contains(&mom) {
                return bad("momentum must lie in [0, 1)");
            }
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        Ok(())
    }

    pub fn momentum(&self, epoch: usize) -> f64 {
        if epoch < self.momentum_switch_epoch {
            self.momentum_initial
        } else {
            self.momentum_final
        }
    }
}

/// Weights i.i.d. uniform on `[-1/√L, 1/√L]` with `L = min(m, n)`, zero biases.
pub fn init_params(m: usize, n: usize, rng: &mut SeededRng) -> Result<RbmParams> {
    let bound = 1.0 / (m.min(n) as f64).sqrt();
    let w = (0..m * n)
        .map(|_| bound * (2.0 * rng.uniform() - 1.0))
        .collect();
    RbmParams::new(m, n, w, vec![0.0; m], vec![0.0; n])
}

/// Expectations `⟨p(h|v) vᵀ⟩`, `⟨v⟩`, `⟨p(h|v)⟩`, or differences of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// `n × m`, hidden-major like the weights.
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub dc: Vec<f64>,
}

impl Gradient {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            dw: vec![0.0; m * n],
            db: vec![0.0; m],
            dc: vec![0.0; n],
        }
    }

    /// Adds `weight · (p(h|v) vᵀ, v, p(h|v))` given the hidden probabilities.
    fn add_sample(&mut self, v: &[u8], ph: &[f64], weight: f64) {
        let m = v.len();
        for (i, &p) in ph.iter().enumerate() {
            let row = &mut self.dw[i * m..(i + 1) * m];
            let wp = weight * p;
            for (d, &vj) in row.iter_mut().zip(v) {
                if vj != 0 {
                    *d += wp;
                }
            }
            self.dc[i] += wp;
        }
        for (d, &vj) in self.db.iter_mut().zip(v) {
            if vj != 0 {
                *d += weight;
            }
        }
    }

    fn sub_assign(&mut self, other: &Gradient) {
        for (a, b) in [
            (&mut self.dw, &other.dw),
            (&mut self.db, &other.db),
            (&mut self.dc, &other.dc),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x -= y);
        }
    }
}

fn hidden_probs(params: &RbmParams, v: &[u8]) -> Vec<f64> {
    params
        .hidden_activations(v)
        .into_iter()
        .map(sigmoid)
        .collect()
}

/// Weighted sufficient statistics of a set of visible vectors.
pub fn data_statistics<'a>(
    params: &RbmParams,
    samples: impl IntoIterator<Item = (&'a [u8], f64)>,
) -> Gradient {
    let mut stats = Gradient::zeros(params.n_visible(), params.n_hidden());
    for (v, weight) in samples {
        stats.add_sample(v, &hidden_probs(params, v), weight);
    }
    stats
}

/// CD-k gradient estimate, averaged over the batch.
///
/// One value is drawn from `rng` to seed the batch; example `i` then runs its
/// negative chain on its own stream `i`, so the result does not depend on the
/// worker count.
pub fn cd_gradient(
    params: &RbmParams,
    batch: &[&[u8]],
    k: usize,
    rng: &mut SeededRng,
) -> Result<Gradient> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let batch_seed = rng.next_u64();
    let n = params.n_hidden();
    let negatives: Vec<Vec<u8>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, v0)| {
            let mut chain_rng = SeededRng::stream(batch_seed, i as u64);
            let mut chain = GibbsChain::new(params, JointState::from_visible(v0.to_vec(), n));
            for _ in 0..k {
                chain.step(params, &mut chain_rng);
            }
            chain.state.v
        })
        .collect();
    let weight = 1.0 / batch.len() as f64;
    let mut grad = data_statistics(params, batch.iter().map(|v| (*v, weight)));
    let negative = data_statistics(params, negatives.iter().map(|v| (v.as_slice(), weight)));
    grad.sub_assign(&negative);
    Ok(grad)
}

/// Visit order of the training vectors for one epoch.
pub(crate) fn epoch_order(len: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order
}

/// CD-k training of an RBM with `n_hidden` units from [`init_params`].
pub fn train(
    config: &TrainConfig,
    data: &[Vec<u8>],
    n_hidden: usize,
    rng: &mut SeededRng,
) -> Result<RbmParams> {
    train_with_observer(config, data, n_hidden, rng, |_, _| {})
}

/// As [`train`]; `observe(epoch, params)` runs after initialization (epoch 0)
/// and after every epoch.
pub fn train_with_observer(
    config: &TrainConfig,
    data: &[Vec<u8>],
    n_hidden: usize,
    rng: &mut SeededRng,
    mut observe: impl FnMut(usize, &RbmParams),
) -> Result<RbmParams> {
    config.validate()?;
    let m = data.first().ok_or(Error::Empty("training data"))?.len();
    let init = init_params(m, n_hidden, rng)?;
    train_from(config, data, init, rng, &mut observe)
}

/// CD-k training starting from given parameters.
pub fn train_from(
    config: &TrainConfig,
    data: &[Vec<u8>],
    mut params: RbmParams,
    rng: &mut SeededRng,
    observe: &mut dyn FnMut(usize, &RbmParams),
) -> Result<RbmParams> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if let Some(v) = data.iter().find(|v| v.len() != params.n_visible()) {
        return Err(Error::Dimension(format!(
            "training vector of length {} for a model with m = {}",
            v.len(),
            params.n_visible()
        )));
    }
    let (m, n) = (params.n_visible(), params.n_hidden());
    let mut velocity = Gradient::zeros(m, n);
    let eta = config.learning_rate;
    observe(0, &params);
    for epoch in 0..config.epochs {
        let momentum = config.momentum(epoch);
        let order = epoch_order(data.len(), rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&[u8]> = chunk.iter().map(|&i| data[i].as_slice()).collect();
            let grad = cd_gradient(&params, &batch, config.k, rng)?;
            for ((vel, g), w) in velocity.dw.iter_mut().zip(&grad.dw).zip(params.weights()) {
                *vel = momentum * *vel + eta * (g - config.weight_decay * w);
            }
            for (vel, g) in velocity.db.iter_mut().zip(&grad.db) {
                *vel = momentum * *vel + eta * g;
            }
            for (vel, g) in velocity.dc.iter_mut().zip(&grad.dc) {
                *vel = momentum * *vel + eta * g;
            }
            params.apply_increment(&velocity.dw, &velocity.db, &velocity.dc);
        }
        observe(epoch + 1, &params);
    }
    Ok(params)
}
