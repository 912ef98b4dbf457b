//! Declarative experiment runner: one config row in, one report row out.

pub mod config;
pub mod report;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

pub use config::{
    DataSource, EstimatorConfig, ExperimentConfig, ModelSource, PoolSource, RawConfig, SampleCount,
    TestSource,
};
pub use report::{
    compare, comparison_table, from_csv, read_csv, to_csv, to_table, ComparisonRow, EstimateReport,
};

use crate::ais::{build_schedule, estimate_log_z, make_proposal, AnnealPath, ProposalSpec};
use crate::csl::{
    csl_estimate, draw_burn_in, matched_sample_count, select_samples, simulate_pool, ChainPool,
    InitMode, SelectionSpec,
};
use crate::data::{binarize, load_mnist, stratified_subset, BinaryDataset, MnistSplit};
use crate::error::{Error, Result};
use crate::math::{mean, std_dev};
use crate::oracle::{avg_loglik_given_log_z, exact_log_partition, OracleBudget};
use crate::raise::{raise_avg_loglik, RaiseConfig};
use crate::rbm::RbmParams;
use crate::rng::{derive_seed, SeededRng};
use crate::train::train;

#[derive(Clone, Copy)]
enum Split {
    Train,
    Test,
}

/// Runs rows while keeping loaded data, models and chain pools around for
/// the following rows of a sweep.
#[derive(Default)]
pub struct Runner {
    data: HashMap<String, Arc<BinaryDataset>>,
    models: HashMap<String, Arc<RbmParams>>,
    pools: HashMap<String, Arc<ChainPool>>,
}

impl Runner {
    pub fn new() -> Self {
        Self::default()
    }

    fn dataset(&mut self, source: &DataSource, split: Split) -> Result<Arc<BinaryDataset>> {
        let key = format!("{source:?}/{}", matches!(split, Split::Train));
        if let Some(ds) = self.data.get(&key) {
            return Ok(ds.clone());
        }
        let ds = match source {
            DataSource::Mnist { dir, binarization } => {
                let which = match split {
                    Split::Train => MnistSplit::Train,
                    Split::Test => MnistSplit::Test,
                };
                binarize(&load_mnist(dir, which)?, *binarization)
            }
            DataSource::Files { train, test } => {
                let (path, what) = match split {
                    Split::Train => (train, "data.train"),
                    Split::Test => (test, "data.test"),
                };
                let path = path
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("this run needs `{what}`")))?;
                BinaryDataset::load(path)?
            }
        };
        let ds = Arc::new(ds);
        self.data.insert(key, ds.clone());
        Ok(ds)
    }

    /// Loads or trains the row's model.
    pub fn model(&mut self, config: &ExperimentConfig) -> Result<Arc<RbmParams>> {
        let key = format!("{:?}/{:?}", config.model, config.data);
        if let Some(p) = self.models.get(&key) {
            return Ok(p.clone());
        }
        let params = match &config.model {
            ModelSource::Load(path) => RbmParams::load(path)
                .map_err(|e| e.context(format!("loading model {}", path.display())))?,
            ModelSource::Train {
                config: tc,
                n_hidden,
                seed,
                save,
            } => {
                let data = self.dataset(&config.data, Split::Train)?;
                let params = train(tc, &data.vectors, *n_hidden, &mut SeededRng::new(*seed))?;
                if let Some(path) = save {
                    params.save(path)?;
                }
                params
            }
        };
        let params = Arc::new(params);
        self.models.insert(key, params.clone());
        Ok(params)
    }

    fn test_set(&mut self, config: &ExperimentConfig) -> Result<Vec<Vec<u8>>> {
        let ds = self.dataset(&config.data, Split::Test)?;
        match config.test {
            TestSource::Full => Ok(ds.vectors.clone()),
            TestSource::First(n) => {
                if n > ds.len() {
                    return Err(Error::InvalidArgument(format!(
                        "test.source asks for {n} vectors, test set has {}",
                        ds.len()
                    )));
                }
                Ok(ds.vectors[..n].to_vec())
            }
            TestSource::Stratified { per_class, seed } => {
                Ok(stratified_subset(&ds, per_class, &mut SeededRng::new(seed))?.vectors)
            }
        }
    }

    fn proposal(
        &mut self,
        config: &ExperimentConfig,
        spec: ProposalSpec,
        p: &RbmParams,
    ) -> Result<RbmParams> {
        let data = match spec {
            ProposalSpec::Uniform => None,
            ProposalSpec::BaseRate { .. } => Some(self.dataset(&config.data, Split::Train)?),
        };
        make_proposal(spec, data.as_deref(), p.n_visible(), p.n_hidden())
    }

    fn pool(&mut self, config: &ExperimentConfig, p: &RbmParams) -> Result<Arc<ChainPool>> {
        let EstimatorConfig::Csl { init, pool, .. } = &config.estimator else {
            return Err(Error::Config("a chain pool needs `estimator = csl`".into()));
        };
        let key = format!("{:?}/{:?}/{:?}/{init:?}", config.model, config.data, pool);
        if let Some(pool) = self.pools.get(&key) {
            return Ok(pool.clone());
        }
        let built = match pool {
            PoolSource::Load(path) => {
                let pool = ChainPool::load(path)?;
                if pool.n_hidden() != p.n_hidden() {
                    return Err(Error::Dimension(format!(
                        "pool {} has {} hidden units, model has {}",
                        path.display(),
                        pool.n_hidden(),
                        p.n_hidden()
                    )));
                }
                pool
            }
            PoolSource::Simulate {
                chains,
                steps,
                storage_thin,
                seed,
            } => {
                let train_data = match init {
                    InitMode::TrainingData => Some(self.dataset(&config.data, Split::Train)?),
                    InitMode::Random => None,
                };
                simulate_pool(
                    p,
                    *chains,
                    *steps,
                    *storage_thin,
                    *init,
                    train_data.as_ref().map(|d| d.vectors.as_slice()),
                    *seed,
                )?
            }
        };
        let built = Arc::new(built);
        self.pools.insert(key, built.clone());
        Ok(built)
    }

    /// Builds (or loads) the CSL chain pool a row describes.
    pub fn build_pool(&mut self, config: &ExperimentConfig) -> Result<Arc<ChainPool>> {
        let p = self.model(config)?;
        self.pool(config, &p)
    }

    /// Executes one row.
    pub fn run(&mut self, config: &ExperimentConfig) -> Result<EstimateReport> {
        let start = Instant::now();
        let p = self.model(config)?;
        let test = self.test_set(config)?;
        let mut report = EstimateReport {
            model_id: config.model_id.clone().unwrap_or_else(|| p.model_id()),
            n_hidden: p.n_hidden(),
            estimator: config.estimator.name().to_string(),
            proposal: None,
            k: None,
            m: None,
            n: None,
            chains: None,
            thin: None,
            burn_in: None,
            log_z_hat: None,
            avg_loglik: 0.0,
            sigma: 0.0,
            repeats: config.repeats,
            gibbs_steps: 0,
            wall_time_seconds: None,
            seed: config.seed,
            config_echo: config.echo(),
        };
        match &config.estimator {
            EstimatorConfig::Exact { budget } => {
                let log_z = exact_log_partition(
                    &p,
                    OracleBudget {
                        max_enumerable_units: *budget,
                    },
                )?;
                report.log_z_hat = Some(log_z);
                report.avg_loglik = avg_loglik_given_log_z(&p, &test, log_z);
                report.repeats = 1;
            }
            EstimatorConfig::Ais {
                proposal,
                schedule,
                runs,
            } => {
                let prop = self.proposal(config, *proposal, &p)?;
                let path = AnnealPath::new(&prop, &p)?;
                let schedule_k = build_schedule(*schedule)?;
                let res = estimate_log_z(&path, &schedule_k, *runs, config.repeats, config.seed)?;
                report.proposal = Some(proposal.name().to_string());
                report.k = Some(schedule_k.k());
                report.m = Some(*runs);
                report.log_z_hat = Some(res.log_z_hat);
                report.avg_loglik = avg_loglik_given_log_z(&p, &test, res.log_z_hat);
                report.sigma = res.sigma;
                report.gibbs_steps = res.gibbs_steps(schedule_k.k());
            }
            EstimatorConfig::Csl {
                chains,
                thin,
                burn_in,
                burn_in_jitter,
                samples,
                ..
            } => {
                let pool = self.pool(config, &p)?;
                let n_samples = match *samples {
                    SampleCount::Fixed(n) => n,
                    SampleCount::MatchedAis { runs, k } => {
                        matched_sample_count(runs, k, *chains, *burn_in, *thin)?
                    }
                };
                let spec = SelectionSpec {
                    m_chains: *chains,
                    burn_in: *burn_in,
                    thin: *thin,
                    n_samples,
                };
                let mut estimates = Vec::with_capacity(config.repeats);
                let mut steps = 0;
                for r in 0..config.repeats {
                    let mut rng = SeededRng::new(derive_seed(config.seed, r as u64));
                    let b = draw_burn_in(&pool, &spec, *burn_in_jitter, &mut rng)?;
                    let chosen = SelectionSpec { burn_in: b, ..spec };
                    let hs = select_samples(&pool, &chosen, &mut rng)?;
                    estimates.push(csl_estimate(&p, &hs, &test)?.avg_loglik);
                    steps += chosen.gibbs_steps();
                }
                report.proposal = Some(pool.init_mode.to_string());
                report.n = Some(n_samples);
                report.chains = Some(*chains);
                report.thin = Some(*thin);
                report.burn_in = Some(*burn_in);
                report.avg_loglik = mean(&estimates);
                report.sigma = std_dev(&estimates);
                report.gibbs_steps = steps;
            }
            EstimatorConfig::Raise {
                proposal,
                schedule,
                runs_per_sample,
                budget,
            } => {
                let prop = self.proposal(config, *proposal, &p)?;
                let path = AnnealPath::new(&prop, &p)?;
                let mut rc = RaiseConfig::new(build_schedule(*schedule)?, *proposal, config.seed);
                rc.runs_per_sample = *runs_per_sample;
                let required = rc.required_transitions(test.len()) * config.repeats as u128;
                if required > *budget {
                    return Err(Error::RaiseBudget {
                        required,
                        budget: *budget,
                    });
                }
                rc.transition_budget = u128::MAX;
                let mut estimates = Vec::with_capacity(config.repeats);
                for r in 0..config.repeats {
                    rc.seed = derive_seed(config.seed, r as u64);
                    estimates.push(raise_avg_loglik(&path, &rc, &test)?.avg_loglik);
                }
                report.proposal = Some(proposal.name().to_string());
                report.k = Some(rc.schedule.k());
                report.m = Some(*runs_per_sample);
                report.avg_loglik = mean(&estimates);
                report.sigma = std_dev(&estimates);
                report.gibbs_steps = required as u64;
            }
        }
        if config.record_wall_time {
            report.wall_time_seconds = Some(start.elapsed().as_secs_f64());
        }
        Ok(report)
    }
}

/// Runs every row on a pool of `workers` threads (0 picks the machine's
/// core count).
pub fn run_all(configs: &[ExperimentConfig], workers: usize) -> Result<Vec<EstimateReport>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| {
        let mut runner = Runner::new();
        configs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                runner
                    .run(c)
                    .map_err(|e| e.context(format!("row {} ({})", k + 1, c.estimator.name())))
            })
            .collect()
    })
}

/// Writes `<name>.csv`, `<name>.txt` and one `<name>.row<k>.config` echo per
/// row into `dir`. Returns the CSV path.
pub fn write_outputs(dir: &Path, name: &str, rows: &[EstimateReport]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let write = |file: String, body: &str| -> Result<PathBuf> {
        let path = dir.join(file);
        fs::write(&path, body).map_err(|e| Error::file(&path, e))?;
        Ok(path)
    };
    let csv = write(format!("{name}.csv"), &to_csv(rows)?)?;
    write(format!("{name}.txt"), &to_table(rows))?;
    for (k, r) in rows.iter().enumerate() {
        write(format!("{name}.row{k}.config"), &r.config_echo)?;
    }
    Ok(csv)
}
