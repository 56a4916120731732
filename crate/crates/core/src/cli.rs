//! The `quadnc` command line.
//!
//! Every file a command writes embeds the command's full configuration as a
//! `run-config` JSON line (inside the model's metadata for model files).
//! Passing any such file back through `--config` repeats the run; with
//! `--jobs 1` and no `--parallel-gradient` the output is byte-identical.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::classify::{self, SweepOptions, SweepReport};
use crate::error::{Error, Result};
use crate::features::{featurize, FeatureVector};
use crate::nn::{self, NetworkModel, Optimizer, TrainConfig};
use crate::pipeline::{self, generate_corpus, read_corpus, write_corpus, Corpus};
use crate::sampler::{self, build_table, read_batch, sample, write_batch, QuadratureBatch};
use crate::seed::derive_seed;
use crate::states::{Family, StateSpec};

pub const SEED_ENV: &str = "QUADNC_SEED";
const RUN_CONFIG_PREFIX: &str = "# run-config: ";

#[derive(Debug, Parser)]
#[command(name = "quadnc", version, about = "Homodyne quadrature simulation and nonclassicality classification")]
pub struct Cli {
    /// Worker threads for corpus generation and sweeps (1 = serial).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Repeat a run from a config file or from any output that embeds one.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Simulate homodyne events for one state and write an event file.
    Simulate(SimulateArgs),
    /// Turn event files into 160-bin histogram rows.
    Featurize(FeaturizeArgs),
    /// Generate (or read) a training corpus and train a classifier.
    Train(TrainArgs),
    /// Classify one event file.
    Predict(PredictArgs),
    /// Run one of the evaluation sweeps and write a CSV report.
    Sweep(SweepArgs),
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse::<Family>().map_err(|e| e.to_string())
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub nbar: f64,
    #[arg(long, default_value_t = 0)]
    pub n: u32,
    #[arg(long, default_value_t = 0.0)]
    pub xi: f64,
    #[arg(long, default_value_t = 0.6)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    #[arg(long, default_value_t = 16_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = sampler::DEFAULT_RESOLUTION)]
    pub resolution: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct FeaturizeArgs {
    /// Event files; bare columns of numbers are accepted.
    #[arg(long = "events", required = true, num_args = 1..)]
    pub events: Vec<PathBuf>,
    /// Phase assumed for files without a header.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Train on an existing corpus file instead of generating one.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Also write the generated corpus here.
    #[arg(long)]
    pub corpus_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch training log (defaults to `<out>.log.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    pub vectors_per_family: usize,
    #[arg(long, default_value_t = 16_000)]
    pub events: usize,
    #[arg(long, default_value_t = 0.6)]
    pub eta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Leave photon-added coherent states out of the training set.
    #[arg(long)]
    pub ablate_spacs: bool,
    /// Use phase-averaged coherent states instead of coherent mixtures.
    #[arg(long)]
    pub phase_averaged: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    /// Split each mini-batch across threads (not bit-reproducible against serial).
    #[arg(long)]
    pub parallel_gradient: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, default_value_t = classify::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Phase assumed for files without a header.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    /// Also write the verdict as a CSV row.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepName {
    Families,
    PhaseSqueezed,
    SpacsGrid,
    Cat,
    SampleSize,
    Ablation,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub sweep: SweepName,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = classify::DEFAULT_PHASE_BINS)]
    pub nbins: usize,
    #[arg(long, default_value_t = classify::DEFAULT_PHASE_XI)]
    pub xi: f64,
    /// Amplitude grid (comma separated).
    #[arg(long = "alpha", alias = "alphas", value_delimiter = ',', allow_negative_numbers = true)]
    pub alphas: Vec<f64>,
    /// Phase grid in radians (comma separated).
    #[arg(long = "phi", alias = "phis", value_delimiter = ',', allow_negative_numbers = true)]
    pub phis: Vec<f64>,
    #[arg(long, default_value_t = 0.6)]
    pub eta: f64,
    #[arg(long, default_value_t = 16_000)]
    pub events: usize,
    /// Repetitions per grid point.
    #[arg(long, default_value_t = 4)]
    pub seeds: usize,
    #[arg(long, default_value_t = classify::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Subsample sizes for the sample-size sweep (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = classify::DEFAULT_SUBSAMPLE_SEEDS)]
    pub subsample_seeds: usize,
    /// Nonclassical event file for the sample-size sweep.
    #[arg(long)]
    pub nc_events: Option<PathBuf>,
    /// Classical event file for the sample-size sweep.
    #[arg(long)]
    pub c_events: Option<PathBuf>,
}

impl Command {
    fn seed_mut(&mut self) -> Option<&mut u64> {
        match self {
            Command::Simulate(a) => Some(&mut a.seed),
            Command::Train(a) => Some(&mut a.seed),
            Command::Sweep(a) => Some(&mut a.seed),
            Command::Featurize(_) | Command::Predict(_) => None,
        }
    }

    fn run_config_line(&self) -> Result<String> {
        let json = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        Ok(format!("run-config: {json}"))
    }
}

/// Reads a run config from a plain JSON file, a model file, or any output
/// carrying a `# run-config:` line.
pub fn load_run_config(path: &Path) -> Result<Command> {
    let text = std::fs::read_to_string(path)?;
    let bad = |e: serde_json::Error| Error::Format(format!("{}: {e}", path.display()));
    if let Some(json) = text.lines().find_map(|l| l.strip_prefix(RUN_CONFIG_PREFIX)) {
        return serde_json::from_str(json).map_err(bad);
    }
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    if value.get("format").and_then(|f| f.as_str()) == Some(nn::MODEL_FORMAT) {
        let cfg = value
            .pointer("/metadata/run_config")
            .cloned()
            .ok_or_else(|| Error::Format(format!("{}: model has no embedded run config", path.display())))?;
        return serde_json::from_value(cfg).map_err(bad);
    }
    serde_json::from_value(value).map_err(bad)
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut command = match (cli.config, cli.command) {
        (Some(path), None) => load_run_config(&path)?,
        (None, Some(cmd)) => cmd,
        (Some(_), Some(_)) => return Err(Error::Config("give either --config or a subcommand, not both".into())),
        (None, None) => return Err(Error::Config("no command given (see --help)".into())),
    };
    if let (Some(seed), Some(slot)) = (env_seed()?, command.seed_mut()) {
        *slot = seed;
    }
    match cli.jobs {
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?
            .install(|| execute(&command)),
        None => execute(&command),
    }
}

pub fn execute(command: &Command) -> Result<()> {
    let header = command.run_config_line()?;
    match command {
        Command::Simulate(a) => cmd_simulate(a, &header),
        Command::Featurize(a) => cmd_featurize(a, &header),
        Command::Train(a) => cmd_train(a, command),
        Command::Predict(a) => cmd_predict(a, &header),
        Command::Sweep(a) => cmd_sweep(a, &header),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_events(path: &Path, phi: f64) -> Result<QuadratureBatch> {
    read_batch(open(path)?, phi).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn cmd_simulate(a: &SimulateArgs, header: &str) -> Result<()> {
    let spec = StateSpec { family: a.family, alpha: a.alpha, nbar: a.nbar, n: a.n, xi: a.xi, eta: a.eta, phi: a.phi };
    let table = build_table(&spec, a.resolution)?;
    let batch = sample(&table, a.count as usize, a.seed)?;
    let mut out = create(&a.out)?;
    writeln!(out, "# {header}")?;
    write_batch(&batch, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn cmd_featurize(a: &FeaturizeArgs, header: &str) -> Result<()> {
    let mut out = create(&a.out)?;
    writeln!(out, "# {header}")?;
    writeln!(out, "file,{}", FeatureVector::csv_header())?;
    for path in &a.events {
        let fv = featurize(&read_events(path, a.phi)?)?;
        write!(out, "{},", path.display())?;
        fv.write_csv_row(&mut out)?;
    }
    out.flush()?;
    Ok(())
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        patience: a.patience,
        optimizer: match a.optimizer {
            OptimizerArg::Adam => Optimizer::Adam,
            OptimizerArg::Sgd => Optimizer::Sgd,
        },
        seed: a.seed,
        validation_fraction: a.validation_fraction,
        parallel_gradient: a.parallel_gradient,
        ..TrainConfig::default()
    }
}

/// The corpus config a `train` invocation generates from.
pub fn corpus_config(a: &TrainArgs) -> Result<pipeline::CorpusConfig> {
    let mut cfg = pipeline::default_training_config();
    if a.ablate_spacs {
        cfg = cfg.ablate(Family::Spacs)?;
    }
    if a.phase_averaged {
        cfg = cfg.swap_classical_variant(true)?;
    }
    cfg.vectors_per_family = a.vectors_per_family;
    cfg.events_per_vector = a.events;
    cfg.eta = a.eta;
    cfg.seed = derive_seed(a.seed, 0xC0);
    Ok(cfg)
}

pub fn cmd_train(a: &TrainArgs, command: &Command) -> Result<()> {
    let header = command.run_config_line()?;
    let corpus: Corpus = match &a.corpus {
        Some(path) => {
            if a.ablate_spacs || a.phase_averaged {
                return Err(Error::Config(
                    "--ablate-spacs and --phase-averaged select families for a generated corpus; \
                     they cannot be combined with --corpus"
                        .into(),
                ));
            }
            read_corpus(open(path)?)?
        }
        None => {
            let cfg = corpus_config(a)?;
            eprintln!(
                "generating corpus: {} families x {} vectors x {} events",
                cfg.families.len(),
                cfg.vectors_per_family,
                cfg.events_per_vector
            );
            generate_corpus(&cfg)?
        }
    };
    if let Some(path) = &a.corpus_out {
        let mut out = create(path)?;
        write_corpus(&corpus, std::slice::from_ref(&header), &mut out)?;
        out.flush()?;
    }
    let cfg = train_config(a);
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log.csv");
        PathBuf::from(p)
    });
    let mut log = create(&log_path)?;
    writeln!(log, "# {header}")?;
    writeln!(log, "epoch,train_loss,val_loss,val_accuracy,best_val_loss")?;
    let mut log_err: Option<io::Error> = None;
    let (mut model, history) = nn::fit_with_history(&corpus.dataset(), &cfg, |rec| {
        eprintln!(
            "epoch {:>3}  train {:.6}  val {:.6}  acc {:.4}",
            rec.epoch, rec.train_loss, rec.val_loss, rec.val_accuracy
        );
        if let Err(e) = writeln!(
            log,
            "{},{},{},{},{}",
            rec.epoch, rec.train_loss, rec.val_loss, rec.val_accuracy, rec.best_val_loss
        ) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    let best = model.metadata.best_epoch;
    let best_loss = model.metadata.best_val_loss.unwrap_or(f64::NAN);
    writeln!(log, "# best_epoch={best} best_val_loss={best_loss} epochs_run={}", history.len())?;
    log.flush()?;
    model.metadata.run_config = Some(serde_json::to_value(command).map_err(|e| Error::Format(e.to_string()))?);
    model.save(&a.out)?;
    eprintln!("best epoch {best} (validation loss {best_loss:.6}); model written to {}", a.out.display());
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs, header: &str) -> Result<()> {
    let model = NetworkModel::load(&a.model)?;
    let batch = read_events(&a.events, a.phi)?;
    let v = classify::predict(&model, &batch, a.threshold)?;
    println!(
        "r={} threshold={} nonclassical={} sample_variance={} variance_nonclassical={} events={}",
        v.r,
        v.threshold,
        v.nonclassical,
        v.sample_variance,
        v.variance_nonclassical,
        batch.len()
    );
    if let Some(path) = &a.csv {
        let mut out = create(path)?;
        writeln!(out, "# {header}")?;
        writeln!(out, "events_file,events,r,threshold,nonclassical,sample_variance,variance_nonclassical")?;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            a.events.display(),
            batch.len(),
            v.r,
            v.threshold,
            v.nonclassical,
            v.sample_variance,
            v.variance_nonclassical
        )?;
        out.flush()?;
    }
    Ok(())
}

fn or_default<T: Clone>(given: &[T], default: impl FnOnce() -> Vec<T>) -> Vec<T> {
    if given.is_empty() {
        default()
    } else {
        given.to_vec()
    }
}

/// Runs the requested sweep without writing anything.
pub fn run_sweep(a: &SweepArgs, model: &NetworkModel) -> Result<SweepReport> {
    let opts = SweepOptions {
        events: a.events,
        eta: a.eta,
        threshold: a.threshold,
        seeds_per_point: a.seeds,
        seed: a.seed,
        resolution: sampler::DEFAULT_RESOLUTION,
    };
    match a.sweep {
        SweepName::Families => classify::sweep_training_families(model, &opts),
        SweepName::PhaseSqueezed => classify::sweep_phase_squeezed(model, a.xi, a.nbins, &opts),
        SweepName::SpacsGrid => classify::sweep_spacs_grid(
            model,
            &or_default(&a.alphas, classify::default_spacs_alphas),
            &or_default(&a.phis, classify::default_spacs_phis),
            &opts,
        ),
        SweepName::Cat => classify::sweep_cat(
            model,
            &or_default(&a.phis, classify::default_cat_phis),
            &or_default(&a.alphas, classify::default_cat_alphas),
            &opts,
        ),
        SweepName::Ablation => {
            classify::sweep_ablation(model, &or_default(&a.alphas, classify::default_ablation_alphas), &opts)
        }
        SweepName::SampleSize => {
            let alpha = a.alphas.first().copied().unwrap_or(0.32);
            let phi = a.phis.first().copied().unwrap_or(0.0);
            let batch = |path: &Option<PathBuf>, spec: StateSpec, k: u64| match path {
                Some(p) => read_events(p, phi),
                None => sampler::simulate(&spec, a.events, derive_seed(a.seed, k)),
            };
            let nc = batch(&a.nc_events, StateSpec::spacs(alpha, a.eta, phi), 1)?;
            let c = batch(&a.c_events, StateSpec::coherent(alpha, a.eta, phi), 2)?;
            let sizes = or_default(&a.sizes, classify::default_sample_sizes);
            classify::sweep_sample_size(model, &nc, &c, &sizes, a.subsample_seeds, a.threshold, a.seed)
        }
    }
}

pub fn cmd_sweep(a: &SweepArgs, header: &str) -> Result<()> {
    let model = NetworkModel::load(&a.model)?;
    let report = run_sweep(a, &model)?;
    let mut out = create(&a.out)?;
    report.write_csv(&[header.to_string()], &mut out)?;
    out.flush()?;
    Ok(())
}
