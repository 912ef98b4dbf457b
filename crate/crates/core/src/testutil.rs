use crate::rbm::RbmParams;
use crate::rng::SeededRng;

/// Parameters drawn i.i.d. uniform on `[-scale, scale]`.
pub(crate) fn random_params(m: usize, n: usize, scale: f64, seed: u64) -> RbmParams {
    let mut rng = SeededRng::new(seed);
    let mut draw = |k: usize| -> Vec<f64> {
        (0..k)
            .map(|_| scale * (2.0 * rng.uniform() - 1.0))
            .collect()
    };
    let w = draw(m * n);
    let b = draw(m);
    let c = draw(n);
    RbmParams::new(m, n, w, b, c).unwrap()
}

/// Low `len` bits of `x`, least significant first.
pub(crate) fn bits(x: usize, len: usize) -> Vec<u8> {
    (0..len).map(|k| ((x >> k) & 1) as u8).collect()
}

/// Exact `log p(v)` for every visible configuration, indexed by `bits`.
pub(crate) fn exact_log_probs_v(p: &RbmParams) -> Vec<f64> {
    let m = p.n_visible();
    let terms: Vec<f64> = (0..1usize << m)
        .map(|x| p.unnorm_log_prob_v(&bits(x, m)))
        .collect();
    let log_z = crate::math::logsumexp(&terms);
    terms.into_iter().map(|t| t - log_z).collect()
}

/// Exact `log p(h)` for every hidden configuration.
pub(crate) fn exact_log_probs_h(p: &RbmParams) -> Vec<f64> {
    let n = p.n_hidden();
    let terms: Vec<f64> = (0..1usize << n)
        .map(|y| p.unnorm_log_prob_h(&bits(y, n)))
        .collect();
    let log_z = crate::math::logsumexp(&terms);
    terms.into_iter().map(|t| t - log_z).collect()
}

/// Index drawn from a categorical distribution given by log-probabilities.
pub(crate) fn sample_categorical(log_probs: &[f64], rng: &mut SeededRng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (k, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return k;
        }
    }
    log_probs.len() - 1
}
