//! Flat `key = value` experiment files. A comma-separated value is a sweep:
//! the file expands into the cartesian product of all swept keys, with the
//! first swept key varying slowest.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::ais::{ProposalSpec, ScheduleKind};
use crate::csl::{InitMode, LARGE_BURN_IN, SMALL_BURN_IN};
use crate::data::Binarization;
use crate::error::{Error, Result};
use crate::raise::DEFAULT_TRANSITION_BUDGET;
use crate::train::TrainConfig;

/// Every key the parser understands.
const KNOWN_KEYS: &[&str] = &[
    "seed",
    "repeats",
    "model.source",
    "model.path",
    "model.id",
    "model.n_hidden",
    "model.save",
    "train.k",
    "train.learning_rate",
    "train.batch_size",
    "train.weight_decay",
    "train.momentum_initial",
    "train.momentum_final",
    "train.momentum_switch_epoch",
    "train.epochs",
    "train.seed",
    "data.mnist_dir",
    "data.train",
    "data.test",
    "data.binarize",
    "test.source",
    "test.seed",
    "estimator",
    "estimator.exact.budget",
    "estimator.ais.proposal",
    "estimator.ais.smoothing",
    "estimator.ais.schedule",
    "estimator.ais.runs",
    "estimator.csl.init",
    "estimator.csl.pool",
    "estimator.csl.pool_chains",
    "estimator.csl.pool_steps",
    "estimator.csl.storage_thin",
    "estimator.csl.pool_seed",
    "estimator.csl.chains",
    "estimator.csl.thin",
    "estimator.csl.burn_in",
    "estimator.csl.burn_in_jitter",
    "estimator.csl.samples",
    "estimator.raise.proposal",
    "estimator.raise.smoothing",
    "estimator.raise.schedule",
    "estimator.raise.runs_per_sample",
    "estimator.raise.budget",
    "output.name",
    "output.record_wall_time",
];

/// Parsed file before sweep expansion, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawConfig {
    entries: Vec<(String, Vec<String>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        let mut seen = BTreeSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{key}`",
                    lineno + 1
                )));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
            let values: Vec<String> = value.split(',').map(|v| v.trim().to_string()).collect();
            if values.iter().any(String::is_empty) {
                return Err(Error::Config(format!(
                    "line {}: empty value for `{key}`",
                    lineno + 1
                )));
            }
            entries.push((key.to_string(), values));
        }
        Ok(Self { entries })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.iter().any(|(k, _)| k == key)
    }

    /// Sets or replaces a key. Commas make a sweep, as in the file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let values: Vec<String> = value.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(Error::Config(format!("empty value for `{key}`")));
        }
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some((_, v)) => *v = values,
            None => self.entries.push((key.to_string(), values)),
        }
        Ok(())
    }

    /// One single-valued assignment list per sweep point.
    pub fn expand(&self) -> Vec<Vec<(String, String)>> {
        let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (key, values) in &self.entries {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Load(PathBuf),
    Train {
        config: TrainConfig,
        n_hidden: usize,
        seed: u64,
        save: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Mnist {
        dir: PathBuf,
        binarization: Binarization,
    },
    /// BDS1 files.
    Files {
        train: Option<PathBuf>,
        test: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSource {
    Full,
    First(usize),
    Stratified { per_class: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoolSource {
    Simulate {
        chains: usize,
        steps: usize,
        storage_thin: usize,
        seed: u64,
    },
    Load(PathBuf),
}

/// CSL sample count, possibly tied to an AIS budget of `runs x K` sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    Fixed(usize),
    MatchedAis { runs: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorConfig {
    Exact {
        budget: usize,
    },
    Ais {
        proposal: ProposalSpec,
        schedule: ScheduleKind,
        runs: usize,
    },
    Csl {
        init: InitMode,
        pool: PoolSource,
        chains: usize,
        thin: usize,
        burn_in: usize,
        burn_in_jitter: usize,
        samples: SampleCount,
    },
    Raise {
        proposal: ProposalSpec,
        schedule: ScheduleKind,
        runs_per_sample: usize,
        budget: u128,
    },
}

impl EstimatorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorConfig::Exact { .. } => "exact",
            EstimatorConfig::Ais { .. } => "ais",
            EstimatorConfig::Csl { .. } => "csl",
            EstimatorConfig::Raise { .. } => "raise",
        }
    }
}

/// One fully resolved table row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub repeats: usize,
    pub model: ModelSource,
    pub model_id: Option<String>,
    pub data: DataSource,
    pub test: TestSource,
    pub estimator: EstimatorConfig,
    pub output_name: String,
    pub record_wall_time: bool,
}

/// Seed offsets for the parts of a run that draw their own randomness.
pub(crate) const POOL_SEED_TAG: u64 = 0x706f_6f6c;

struct Lookup<'a> {
    pairs: &'a [(String, String)],
    base: &'a Path,
}

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
            None => Ok(default),
        }
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))?;
        v.parse()
            .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| self.base.join(v))
    }

    fn schedule(&self, key: &str) -> Result<ScheduleKind> {
        let kind = self.get(key, ScheduleKind::Linear(10_000))?;
        if kind.transitions() == 0 {
            return Err(Error::Config(format!("`{key}`: K must be at least 1")));
        }
        Ok(kind)
    }

    fn positive(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.get(key, default)?;
        if v == 0 {
            return Err(Error::Config(format!("`{key}` must be at least 1")));
        }
        Ok(v)
    }
}

fn parse_proposal(kind: &str, smoothing: f64, key: &str) -> Result<ProposalSpec> {
    match kind {
        "uniform" => Ok(ProposalSpec::Uniform),
        "baserate" => {
            if !(smoothing > 0.0 && smoothing.is_finite()) {
                return Err(Error::Config(format!(
                    "`{key}`: base-rate smoothing must be positive"
                )));
            }
            Ok(ProposalSpec::BaseRate { smoothing })
        }
        other => Err(Error::Config(format!(
            "`{key}`: unknown proposal `{other}`"
        ))),
    }
}

fn parse_binarization(s: &str) -> Result<Binarization> {
    let bad = || {
        Error::Config(format!(
            "`data.binarize`: expected threshold:T or stochastic:SEED, got `{s}`"
        ))
    };
    match s.split_once(':') {
        Some(("threshold", t)) => t.parse().map(Binarization::Threshold).map_err(|_| bad()),
        Some(("stochastic", seed)) => seed
            .parse()
            .map(Binarization::Stochastic)
            .map_err(|_| bad()),
        None if s == "threshold" => Ok(Binarization::default()),
        _ => Err(bad()),
    }
}

fn parse_burn_in(s: &str) -> Result<usize> {
    match s {
        "small" => Ok(SMALL_BURN_IN),
        "large" => Ok(LARGE_BURN_IN),
        n => n.parse().map_err(|_| {
            Error::Config(format!(
                "`estimator.csl.burn_in`: expected small, large or a step count, got `{n}`"
            ))
        }),
    }
}

fn parse_samples(s: &str) -> Result<SampleCount> {
    let bad = || {
        Error::Config(format!(
            "`estimator.csl.samples`: expected a count or matched:ais:MxK, got `{s}`"
        ))
    };
    if let Some(rest) = s.strip_prefix("matched:ais:") {
        let (runs, k) = rest.split_once('x').ok_or_else(bad)?;
        return Ok(SampleCount::MatchedAis {
            runs: runs.parse().map_err(|_| bad())?,
            k: k.parse().map_err(|_| bad())?,
        });
    }
    s.parse().map(SampleCount::Fixed).map_err(|_| bad())
}

impl ExperimentConfig {
    /// Resolves one sweep point; relative paths are taken from `base`.
    pub fn from_pairs(pairs: &[(String, String)], base: &Path) -> Result<Self> {
        let l = Lookup { pairs, base };
        let seed: u64 = l.get("seed", 0)?;
        let repeats = l.positive("repeats", 1)?;

        let model = match l
            .raw("model.source")
            .unwrap_or(if l.raw("model.path").is_some() {
                "load"
            } else {
                "train"
            }) {
            "load" => ModelSource::Load(
                l.path("model.path")
                    .ok_or_else(|| Error::Config("missing key `model.path`".into()))?,
            ),
            "train" => {
                let d = TrainConfig::default();
                let config = TrainConfig {
                    k: l.get("train.k", d.k)?,
                    learning_rate: l.get("train.learning_rate", d.learning_rate)?,
                    batch_size: l.get("train.batch_size", d.batch_size)?,
                    weight_decay: l.get("train.weight_decay", d.weight_decay)?,
                    momentum_initial: l.get("train.momentum_initial", d.momentum_initial)?,
                    momentum_final: l.get("train.momentum_final", d.momentum_final)?,
                    momentum_switch_epoch: l
                        .get("train.momentum_switch_epoch", d.momentum_switch_epoch)?,
                    epochs: l.get("train.epochs", d.epochs)?,
                };
                config.validate().map_err(|e| e.context("config"))?;
                ModelSource::Train {
                    config,
                    n_hidden: l.require::<usize>("model.n_hidden").and_then(|n| {
                        if n == 0 {
                            Err(Error::Config("`model.n_hidden` must be at least 1".into()))
                        } else {
                            Ok(n)
                        }
                    })?,
                    seed: l.get("train.seed", seed)?,
                    save: l.path("model.save"),
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "`model.source`: expected load or train, got `{other}`"
                )))
            }
        };

        let data = if l.raw("data.train").is_some() || l.raw("data.test").is_some() {
            if l.raw("data.mnist_dir").is_some() {
                return Err(Error::Config(
                    "give either `data.mnist_dir` or `data.train`/`data.test`, not both".into(),
                ));
            }
            DataSource::Files {
                train: l.path("data.train"),
                test: l.path("data.test"),
            }
        } else {
            let dir = match l.raw("data.mnist_dir") {
                Some(_) => l.path("data.mnist_dir").unwrap(),
                None => {
                    let dir = std::env::var_os("RBM_EVAL_MNIST_DIR")
                        .map(PathBuf::from)
                        .unwrap_or_else(|| PathBuf::from("data/mnist"));
                    std::path::absolute(&dir).unwrap_or(dir)
                }
            };
            DataSource::Mnist {
                dir,
                binarization: parse_binarization(
                    l.raw("data.binarize").unwrap_or("threshold:0.5"),
                )?,
            }
        };

        let test = {
            let src = l.raw("test.source").unwrap_or("full");
            let bad = || {
                Error::Config(format!(
                    "`test.source`: expected full, first:N or stratified:PER_CLASS, got `{src}`"
                ))
            };
            match src.split_once(':') {
                None if src == "full" => TestSource::Full,
                Some(("first", n)) => {
                    TestSource::First(n.parse().ok().filter(|&n: &usize| n > 0).ok_or_else(bad)?)
                }
                Some(("stratified", k)) => TestSource::Stratified {
                    per_class: k.parse().ok().filter(|&k: &usize| k > 0).ok_or_else(bad)?,
                    seed: l.get("test.seed", seed)?,
                },
                _ => return Err(bad()),
            }
        };

        let estimator = match l
            .raw("estimator")
            .ok_or_else(|| Error::Config("missing key `estimator`".into()))?
        {
            "exact" => EstimatorConfig::Exact {
                budget: l.get("estimator.exact.budget", 25)?,
            },
            "ais" => EstimatorConfig::Ais {
                proposal: parse_proposal(
                    l.raw("estimator.ais.proposal").unwrap_or("baserate"),
                    l.get("estimator.ais.smoothing", 1.0)?,
                    "estimator.ais.proposal",
                )?,
                schedule: l.schedule("estimator.ais.schedule")?,
                runs: l.positive("estimator.ais.runs", 500)?,
            },
            "csl" => {
                let thin = l.positive("estimator.csl.thin", 100)?;
                let pool = match l.raw("estimator.csl.pool").unwrap_or("simulate") {
                    "simulate" => PoolSource::Simulate {
                        chains: l.positive("estimator.csl.pool_chains", 5000)?,
                        steps: l.positive("estimator.csl.pool_steps", 25_000)?,
                        storage_thin: l.positive("estimator.csl.storage_thin", 1)?,
                        seed: l.get(
                            "estimator.csl.pool_seed",
                            crate::rng::derive_seed(seed, POOL_SEED_TAG),
                        )?,
                    },
                    p => match p.strip_prefix("load:") {
                        Some(path) => PoolSource::Load(base.join(path)),
                        None => {
                            return Err(Error::Config(format!(
                                "`estimator.csl.pool`: expected simulate or load:PATH, got `{p}`"
                            )))
                        }
                    },
                };
                EstimatorConfig::Csl {
                    init: l.get("estimator.csl.init", InitMode::TrainingData)?,
                    pool,
                    chains: l.positive("estimator.csl.chains", 100)?,
                    thin,
                    burn_in: parse_burn_in(l.raw("estimator.csl.burn_in").unwrap_or("small"))?,
                    burn_in_jitter: l.get("estimator.csl.burn_in_jitter", thin)?,
                    samples: parse_samples(l.raw("estimator.csl.samples").unwrap_or("10000"))?,
                }
            }
            "raise" => EstimatorConfig::Raise {
                proposal: parse_proposal(
                    l.raw("estimator.raise.proposal").unwrap_or("uniform"),
                    l.get("estimator.raise.smoothing", 1.0)?,
                    "estimator.raise.proposal",
                )?,
                schedule: l.schedule("estimator.raise.schedule")?,
                runs_per_sample: l.positive("estimator.raise.runs_per_sample", 1)?,
                budget: l.get("estimator.raise.budget", DEFAULT_TRANSITION_BUDGET)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "`estimator`: expected exact, ais, csl or raise, got `{other}`"
                )))
            }
        };

        Ok(Self {
            seed,
            repeats,
            model,
            model_id: l.raw("model.id").map(str::to_string),
            data,
            test,
            estimator,
            output_name: l.raw("output.name").unwrap_or("results").to_string(),
            record_wall_time: l.get("output.record_wall_time", false)?,
        })
    }

    /// Every sweep point of `text`.
    pub fn parse_all(text: &str, base: &Path) -> Result<Vec<Self>> {
        Self::from_raw(&RawConfig::parse(text)?, base)
    }

    /// Every distinct sweep point of `raw`. Points that differ only in keys
    /// the row does not read (AIS settings on an exact row, say) collapse
    /// into the first of them.
    pub fn from_raw(raw: &RawConfig, base: &Path) -> Result<Vec<Self>> {
        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        for p in raw.expand() {
            let row = Self::from_pairs(&p, base)?;
            if seen.insert(row.echo()) {
                rows.push(row);
            }
        }
        Ok(rows)
    }

    /// Canonical single-row config with every default spelled out. Parsing
    /// it back yields `self`.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        put("repeats", self.repeats.to_string());
        match &self.model {
            ModelSource::Load(path) => {
                put("model.source", "load".into());
                put("model.path", path.display().to_string());
            }
            ModelSource::Train {
                config,
                n_hidden,
                seed,
                save,
            } => {
                put("model.source", "train".into());
                put("model.n_hidden", n_hidden.to_string());
                if let Some(p) = save {
                    put("model.save", p.display().to_string());
                }
                put("train.k", config.k.to_string());
                put("train.learning_rate", config.learning_rate.to_string());
                put("train.batch_size", config.batch_size.to_string());
                put("train.weight_decay", config.weight_decay.to_string());
                put(
                    "train.momentum_initial",
                    config.momentum_initial.to_string(),
                );
                put("train.momentum_final", config.momentum_final.to_string());
                put(
                    "train.momentum_switch_epoch",
                    config.momentum_switch_epoch.to_string(),
                );
                put("train.epochs", config.epochs.to_string());
                put("train.seed", seed.to_string());
            }
        }
        if let Some(id) = &self.model_id {
            put("model.id", id.clone());
        }
        match &self.data {
            DataSource::Mnist { dir, binarization } => {
                put("data.mnist_dir", dir.display().to_string());
                put(
                    "data.binarize",
                    match binarization {
                        Binarization::Threshold(t) => format!("threshold:{t}"),
                        Binarization::Stochastic(seed) => format!("stochastic:{seed}"),
                    },
                );
            }
            DataSource::Files { train, test } => {
                if let Some(p) = train {
                    put("data.train", p.display().to_string());
                }
                if let Some(p) = test {
                    put("data.test", p.display().to_string());
                }
            }
        }
        match self.test {
            TestSource::Full => put("test.source", "full".into()),
            TestSource::First(n) => put("test.source", format!("first:{n}")),
            TestSource::Stratified { per_class, seed } => {
                put("test.source", format!("stratified:{per_class}"));
                put("test.seed", seed.to_string());
            }
        }
        put("estimator", self.estimator.name().into());
        let proposal = |p: &ProposalSpec| match p {
            ProposalSpec::Uniform => ("uniform", None),
            ProposalSpec::BaseRate { smoothing } => ("baserate", Some(*smoothing)),
        };
        match &self.estimator {
            EstimatorConfig::Exact { budget } => put("estimator.exact.budget", budget.to_string()),
            EstimatorConfig::Ais {
                proposal: p,
                schedule,
                runs,
            } => {
                let (kind, smoothing) = proposal(p);
                put("estimator.ais.proposal", kind.into());
                if let Some(x) = smoothing {
                    put("estimator.ais.smoothing", x.to_string());
                }
                put("estimator.ais.schedule", schedule.to_string());
                put("estimator.ais.runs", runs.to_string());
            }
            EstimatorConfig::Csl {
                init,
                pool,
                chains,
                thin,
                burn_in,
                burn_in_jitter,
                samples,
            } => {
                put("estimator.csl.init", init.to_string());
                match pool {
                    PoolSource::Simulate {
                        chains,
                        steps,
                        storage_thin,
                        seed,
                    } => {
                        put("estimator.csl.pool", "simulate".into());
                        put("estimator.csl.pool_chains", chains.to_string());
                        put("estimator.csl.pool_steps", steps.to_string());
                        put("estimator.csl.storage_thin", storage_thin.to_string());
                        put("estimator.csl.pool_seed", seed.to_string());
                    }
                    PoolSource::Load(path) => {
                        put("estimator.csl.pool", format!("load:{}", path.display()))
                    }
                }
                put("estimator.csl.chains", chains.to_string());
                put("estimator.csl.thin", thin.to_string());
                put("estimator.csl.burn_in", burn_in.to_string());
                put("estimator.csl.burn_in_jitter", burn_in_jitter.to_string());
                put(
                    "estimator.csl.samples",
                    match samples {
                        SampleCount::Fixed(n) => n.to_string(),
                        SampleCount::MatchedAis { runs, k } => format!("matched:ais:{runs}x{k}"),
                    },
                );
            }
            EstimatorConfig::Raise {
                proposal: p,
                schedule,
                runs_per_sample,
                budget,
            } => {
                let (kind, smoothing) = proposal(p);
                put("estimator.raise.proposal", kind.into());
                if let Some(x) = smoothing {
                    put("estimator.raise.smoothing", x.to_string());
                }
                put("estimator.raise.schedule", schedule.to_string());
                put(
                    "estimator.raise.runs_per_sample",
                    runs_per_sample.to_string(),
                );
                put("estimator.raise.budget", budget.to_string());
            }
        }
        put("output.name", self.output_name.clone());
        put("output.record_wall_time", self.record_wall_time.to_string());
        s
    }
}
