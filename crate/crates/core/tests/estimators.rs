use rbm_eval::ais::{estimate_log_z, make_proposal, AnnealPath, AnnealSchedule, ProposalSpec};
use rbm_eval::csl::{csl_estimate, select_samples, simulate_pool, InitMode, SelectionSpec};
use rbm_eval::data::BinaryDataset;
use rbm_eval::harness::{ExperimentConfig, Runner};
use rbm_eval::oracle::{avg_loglik_given_log_z, exact_log_partition, OracleBudget};
use rbm_eval::raise::{raise_avg_loglik, RaiseConfig};
use rbm_eval::train::{train, TrainConfig};
use rbm_eval::{RbmParams, SeededRng};

/// Noisy copies of four 12-pixel prototypes.
fn patterns(count: usize, seed: u64) -> Vec<Vec<u8>> {
    let protos: [[u8; 12]; 4] = [
        [1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1],
        [1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0],
    ];
    let mut rng = SeededRng::new(seed);
    (0..count)
        .map(|_| {
            let p = protos[rng.below(4)];
            p.iter().map(|&b| b ^ rng.bernoulli(0.05)).collect()
        })
        .collect()
}

fn trained() -> (RbmParams, BinaryDataset, Vec<Vec<u8>>) {
    let data = patterns(600, 1);
    let config = TrainConfig {
        epochs: 20,
        batch_size: 20,
        k: 5,
        ..TrainConfig::default()
    };
    let p = train(&config, &data, 6, &mut SeededRng::new(2)).unwrap();
    let ds = BinaryDataset::new(data, None, String::new()).unwrap();
    (p, ds, patterns(40, 3))
}

#[test]
fn estimators_agree_with_exact_on_a_trained_model() {
    let (p, train_set, test) = trained();
    let log_z = exact_log_partition(&p, OracleBudget::default()).unwrap();
    let truth = avg_loglik_given_log_z(&p, &test, log_z);
    // Training should have moved well away from the uniform model.
    assert!(truth > -12.0 * std::f64::consts::LN_2 + 2.0, "L = {truth}");

    let proposal = make_proposal(ProposalSpec::base_rate(), Some(&train_set), 12, 6).unwrap();
    let path = AnnealPath::new(&proposal, &p).unwrap();
    let ais = estimate_log_z(&path, &AnnealSchedule::linear(500).unwrap(), 50, 10, 4).unwrap();
    assert!(
        (ais.log_z_hat - log_z).abs() < 3.0 * ais.sigma.max(1e-3),
        "{} vs {log_z}",
        ais.log_z_hat
    );

    let mut rc = RaiseConfig::new(
        AnnealSchedule::linear(500).unwrap(),
        ProposalSpec::base_rate(),
        5,
    );
    rc.runs_per_sample = 20;
    let raise = raise_avg_loglik(&path, &rc, &test).unwrap();
    assert!(
        (raise.avg_loglik - truth).abs() < 0.1,
        "RAISE {} vs {truth}",
        raise.avg_loglik
    );

    let pool = simulate_pool(&p, 100, 1100, 10, InitMode::Random, None, 6).unwrap();
    let spec = SelectionSpec {
        m_chains: 100,
        burn_in: 100,
        thin: 10,
        n_samples: 10_000,
    };
    let hs = select_samples(&pool, &spec, &mut SeededRng::new(7)).unwrap();
    let csl = csl_estimate(&p, &hs, &test).unwrap();
    assert!(
        csl.avg_loglik < truth + 0.05,
        "CSL {} vs {truth}",
        csl.avg_loglik
    );
    assert!(
        csl.avg_loglik > truth - 0.5,
        "CSL {} vs {truth}",
        csl.avg_loglik
    );
}

#[test]
fn harness_rows_match_library_calls() {
    let (p, train_set, test) = trained();
    let dir = tempfile::tempdir().unwrap();
    p.save(dir.path().join("m.rbm")).unwrap();
    train_set.save(dir.path().join("train.bds")).unwrap();
    BinaryDataset::new(test.clone(), None, String::new())
        .unwrap()
        .save(dir.path().join("test.bds"))
        .unwrap();
    let text = "model.path = m.rbm\ndata.train = train.bds\ndata.test = test.bds\nseed = 9\nrepeats = 3\n\
                estimator = exact, ais\nestimator.ais.runs = 30\nestimator.ais.schedule = linear:200";
    let rows = ExperimentConfig::parse_all(text, dir.path()).unwrap();
    let mut runner = Runner::new();
    let exact = runner.run(&rows[0]).unwrap();
    let ais = runner.run(&rows[1]).unwrap();

    let log_z = exact_log_partition(&p, OracleBudget::default()).unwrap();
    assert_eq!(exact.log_z_hat, Some(log_z));
    assert_eq!(exact.avg_loglik, avg_loglik_given_log_z(&p, &test, log_z));
    assert_eq!(exact.model_id, p.model_id());

    let proposal = make_proposal(ProposalSpec::base_rate(), Some(&train_set), 12, 6).unwrap();
    let path = AnnealPath::new(&proposal, &p).unwrap();
    let direct = estimate_log_z(&path, &AnnealSchedule::linear(200).unwrap(), 30, 3, 9).unwrap();
    assert_eq!(ais.log_z_hat, Some(direct.log_z_hat));
    assert_eq!(ais.sigma, direct.sigma);
    assert_eq!(ais.gibbs_steps, 3 * 30 * 200);

    // A row's echo is a complete config on its own.
    let again = ExperimentConfig::parse_all(&ais.config_echo, dir.path()).unwrap();
    assert_eq!(again.len(), 1);
    assert_eq!(Runner::new().run(&again[0]).unwrap(), ais);
}
