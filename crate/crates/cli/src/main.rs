use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rbm_eval::harness::{self, ExperimentConfig, ModelSource, RawConfig, Runner};

#[derive(Parser)]
#[command(
    name = "rbm-eval",
    version,
    about = "Train binary RBMs and estimate their test log-likelihood"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the model described by a config and write it as an RBM1 file.
    Train(RunArgs),
    /// Run every row of a config and write CSV, table and config echoes.
    Estimate(RunArgs),
    /// Build a CSL chain pool and save it as a CSL1 file.
    Pool(RunArgs),
    /// Join report CSVs on model id and print estimates side by side.
    Compare {
        /// Report CSV files.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the table to this directory as comparison.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (flat key = value file).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long, default_value = "results")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(short, long, default_value_t = 0)]
    workers: usize,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn rows(&self) -> Result<Vec<ExperimentConfig>> {
        self.rows_with(|_| Ok(()))
    }

    fn rows_with(
        &self,
        adjust: impl FnOnce(&mut RawConfig) -> rbm_eval::Result<()>,
    ) -> Result<Vec<ExperimentConfig>> {
        let text = fs::read_to_string(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        let mut raw = RawConfig::parse(&text)?;
        if let Some(seed) = self.seed {
            raw.set("seed", &seed.to_string())?;
        }
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
            raw.set(k.trim(), v.trim())?;
        }
        adjust(&mut raw)?;
        let base = self.config.parent().unwrap_or(Path::new("."));
        Ok(ExperimentConfig::from_raw(&raw, base)?)
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()?)
    }
}

fn single(rows: Vec<ExperimentConfig>, verb: &str) -> Result<ExperimentConfig> {
    let mut rows = rows.into_iter();
    let first = rows.next().context("config expands to no rows")?;
    if rows.next().is_some() {
        bail!("`{verb}` needs a config without sweeps");
    }
    Ok(first)
}

fn train(args: &RunArgs) -> Result<()> {
    // Training does not look at the estimator section.
    let rows = args.rows_with(|raw| {
        if raw.contains("estimator") {
            Ok(())
        } else {
            raw.set("estimator", "exact")
        }
    })?;
    let row = single(rows, "train")?;
    if !matches!(row.model, ModelSource::Train { .. }) {
        bail!("`train` needs `model.source = train`");
    }
    let params = args.thread_pool()?.install(|| Runner::new().model(&row))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join(format!("{}.rbm", row.output_name));
    params.save(&path)?;
    println!("{} -> {}", params.model_id(), path.display());
    Ok(())
}

fn estimate(args: &RunArgs) -> Result<()> {
    let rows = args.rows()?;
    let reports = harness::run_all(&rows, args.workers)?;
    let name = &rows[0].output_name;
    let csv = harness::write_outputs(&args.out, name, &reports)?;
    print!("{}", harness::to_table(&reports));
    println!("wrote {}", csv.display());
    Ok(())
}

fn pool(args: &RunArgs) -> Result<()> {
    let row = single(args.rows()?, "pool")?;
    let pool = args
        .thread_pool()?
        .install(|| Runner::new().build_pool(&row))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join(format!("{}.csl", row.output_name));
    pool.save(&path)?;
    println!(
        "{} chains x {} steps ({}), stored every {} -> {}",
        pool.s_m(),
        pool.s_t(),
        pool.init_mode,
        pool.storage_thin(),
        path.display()
    );
    Ok(())
}

fn compare(reports: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let loaded = reports
        .iter()
        .map(harness::read_csv)
        .collect::<rbm_eval::Result<Vec<_>>>()?;
    let rows = harness::compare(&loaded)?;
    let table = harness::comparison_table(&rows);
    print!("{table}");
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("comparison.txt"), &table)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Estimate(a) => estimate(a),
        Command::Pool(a) => pool(a),
        Command::Compare { reports, out } => compare(reports, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
