use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deeppcr::experiments::alloc::CountingAlloc;
use deeppcr::experiments::{
    bench_backward, bench_forward, diffuse_cmd, sequential_timing_monotone, train_resnet_cmd,
    verify_cmd, write_csv, CsvTable, DenoiserKind, Experiment, ExperimentConfig,
};
use deeppcr::nn::{Activation, Init};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

/// Parallel cyclic reduction benchmarks and experiments.
#[derive(Parser, Debug)]
#[command(name = "deeppcr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time sequential vs Newton/PCR MLP forward passes.
    BenchForward(Common),
    /// Time sequential vs PCR MLP backward passes.
    BenchBackward(Common),
    /// Train a skip-connected ResNet both ways and log per-batch stats.
    TrainResnet(Common),
    /// Generate samples from a denoising chain both ways.
    Diffuse(Common),
    /// Run the built-in correctness checks.
    Verify(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Comma-separated sequence lengths.
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// Comma-separated state widths.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    /// relu, tanh or sigmoid.
    #[arg(long)]
    activation: Option<Activation>,
    /// kaiming-glorot or fan-in-uniform.
    #[arg(long)]
    init: Option<Init>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    newton_max_iters: Option<usize>,
    #[arg(long)]
    newton_abs_tol: Option<f64>,
    #[arg(long)]
    newton_rel_tol: Option<f64>,
    /// Run exactly this many Newton iterations.
    #[arg(long)]
    newton_fixed_iters: Option<usize>,
    #[arg(long)]
    skip_length: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Training samples to draw.
    #[arg(long)]
    samples: Option<usize>,
    /// MNIST IDX directory; falls back to DEEPPCR_DATA_DIR, then synthetic data.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// mlp or zero.
    #[arg(long)]
    denoiser: Option<DenoiserKind>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn into_config(self, experiment: Experiment) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(experiment);
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set! {
            depths => c.depths,
            widths => c.widths,
            activation => c.activation,
            init => c.init,
            repeats => c.repeats,
            workers => c.workers,
            seed => c.seed,
            newton_max_iters => c.newton.max_iters,
            newton_abs_tol => c.newton.abs_tol,
            newton_rel_tol => c.newton.rel_tol,
            skip_length => c.skip_length,
            epochs => c.epochs,
            batch_size => c.batch_size,
            lr => c.learning_rate,
            samples => c.samples,
            denoiser => c.denoiser,
        }
        c.newton.fixed_iters = self.newton_fixed_iters.or(c.newton.fixed_iters);
        c.data_dir = self.data_dir;
        c.out = self.out;
        c
    }
}

fn emit(config: &ExperimentConfig, table: &CsvTable) -> deeppcr::Result<()> {
    match &config.out {
        Some(path) => write_csv(BufWriter::new(File::create(path)?), config, table),
        None => write_csv(io::stdout().lock(), config, table),
    }
}

fn run(cli: Cli) -> deeppcr::Result<bool> {
    let (experiment, common) = match cli.command {
        Command::BenchForward(c) => (Experiment::BenchForward, c),
        Command::BenchBackward(c) => (Experiment::BenchBackward, c),
        Command::TrainResnet(c) => (Experiment::TrainResnet, c),
        Command::Diffuse(c) => (Experiment::Diffuse, c),
        Command::Verify(c) => (Experiment::Verify, c),
    };
    let config = common.into_config(experiment);
    match experiment {
        Experiment::BenchForward => {
            let table = bench_forward(&config)?;
            if !sequential_timing_monotone(&table) {
                eprintln!("warning: sequential time is not monotone in depth for every width");
            }
            emit(&config, &table)?;
        }
        Experiment::BenchBackward => emit(&config, &bench_backward(&config)?)?,
        Experiment::TrainResnet => {
            let report = train_resnet_cmd(&config)?;
            emit(&config, &report.table)?;
            eprintln!("data: {}", report.data_source);
            eprintln!("sequential accuracy: {:.4}", report.sequential_accuracy);
            match (report.deeppcr_accuracy, &report.deeppcr_error) {
                (Some(acc), _) => eprintln!("deeppcr accuracy: {acc:.4}"),
                (None, Some(err)) => eprintln!(
                    "deeppcr diverged after {} steps: {err}",
                    report.deeppcr_steps
                ),
                (None, None) => {}
            }
            eprintln!("max per-batch loss difference: {:e}", report.max_loss_diff);
        }
        Experiment::Diffuse => emit(&config, &diffuse_cmd(&config)?)?,
        Experiment::Verify => {
            let report = verify_cmd(&config)?;
            let mut stdout = io::stdout().lock();
            stdout.write_all(report.transcript().as_bytes())?;
            stdout.flush()?;
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
