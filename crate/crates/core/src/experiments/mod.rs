//! Benchmark and experiment runners behind the `deeppcr` binary.
//!
//! Every runner returns a [`CsvTable`]; [`write_csv`] prepends a `#` metadata
//! line carrying the seed, worker count and library version.

pub mod alloc;
mod bench;
mod diffuse;
mod train;
mod verify;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

pub use bench::{bench_backward, bench_forward, sequential_timing_monotone};
pub use diffuse::{diffuse_cmd, DenoiserKind};
pub use train::{train_resnet_cmd, TrainReport};
pub use verify::{
    check_oracle_equivalence, random_system, stacked_relative_error, verify_cmd, CheckResult,
    VerifyReport, ORACLE_TOL,
};

use crate::error::{Error, Result};
use crate::newton::NewtonConfig;
use crate::nn::{Activation, Init};
use crate::parallel::Workers;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    BenchForward,
    BenchBackward,
    TrainResnet,
    Diffuse,
    Verify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::BenchForward => "bench-forward",
            Experiment::BenchBackward => "bench-backward",
            Experiment::TrainResnet => "train-resnet",
            Experiment::Diffuse => "diffuse",
            Experiment::Verify => "verify",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Experiment::BenchForward,
            Experiment::BenchBackward,
            Experiment::TrainResnet,
            Experiment::Diffuse,
            Experiment::Verify,
        ]
        .into_iter()
        .find(|e| e.name() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Sequence lengths `L`; layers for the MLP benches, denoising steps for `diffuse`.
    pub depths: Vec<usize>,
    /// State widths `w`; the latent dimension for `diffuse`.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub init: Init,
    pub repeats: usize,
    pub workers: usize,
    pub newton: NewtonConfig<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub skip_length: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Training samples drawn from the dataset.
    pub samples: usize,
    pub data_dir: Option<PathBuf>,
    pub denoiser: DenoiserKind,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn new(experiment: Experiment) -> Self {
        let (depths, widths, newton) = match experiment {
            Experiment::Diffuse => (
                vec![256, 512, 1024],
                vec![8, 16, 32],
                NewtonConfig::diffusion(),
            ),
            Experiment::TrainResnet => (vec![64], vec![16], NewtonConfig::forward_pass()),
            _ => (
                vec![64, 256, 1024],
                vec![2, 4, 16],
                NewtonConfig::forward_pass(),
            ),
        };
        Self {
            experiment,
            depths,
            widths,
            activation: Activation::Relu,
            init: Init::FanInUniform,
            repeats: 5,
            workers: 1,
            newton,
            seed: 0,
            out: None,
            skip_length: 4,
            epochs: 2,
            batch_size: 128,
            learning_rate: 1e-3,
            samples: 1000,
            data_dir: None,
            denoiser: DenoiserKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidArgument("repeats must be >= 1".into()));
        }
        if self.depths.is_empty() || self.widths.is_empty() {
            return Err(Error::InvalidArgument(
                "depth and width lists must be nonempty".into(),
            ));
        }
        if self.depths.contains(&0) || self.widths.contains(&0) {
            return Err(Error::InvalidArgument(
                "depths and widths must be >= 1".into(),
            ));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be >= 1".into()));
        }
        self.newton.validate()
    }

    pub fn worker_pool(&self) -> Result<Workers> {
        Workers::new(self.workers)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: &'static str,
    /// Wall-clock or allocator readings, which vary between runs.
    pub measured: bool,
}

/// Header plus string-formatted rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvTable {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[(&'static str, bool)]) -> Self {
        Self {
            columns: columns
                .iter()
                .map(|&(name, measured)| Column { name, measured })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Values of column `name`, in row order.
    pub fn values(&self, name: &str) -> Vec<&str> {
        match self.column(name) {
            Some(i) => self.rows.iter().map(|r| r[i].as_str()).collect(),
            None => Vec::new(),
        }
    }

    /// The table with measured columns removed.
    pub fn reproducible(&self) -> CsvTable {
        let keep: Vec<usize> = (0..self.columns.len())
            .filter(|&i| !self.columns[i].measured)
            .collect();
        CsvTable {
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| keep.iter().map(|&i| r[i].clone()).collect())
                .collect(),
        }
    }
}

/// `# deeppcr <version> experiment=<name> seed=<seed> worker_count=<n>`
pub fn metadata_line(config: &ExperimentConfig) -> String {
    format!(
        "# deeppcr {} experiment={} seed={} worker_count={}",
        crate::VERSION,
        config.experiment,
        config.seed,
        config.workers
    )
}

pub fn write_csv<W: Write>(mut out: W, config: &ExperimentConfig, table: &CsvTable) -> Result<()> {
    writeln!(out, "{}", metadata_line(config))?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(table.columns.iter().map(|c| c.name))?;
    for row in &table.rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Summary of repeated timings.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimingStats {
    pub min_ns: u128,
    pub median_ns: u128,
    pub mean_ns: f64,
    pub std_ns: f64,
}

impl TimingStats {
    pub fn from_durations(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut ns: Vec<u128> = samples.iter().map(Duration::as_nanos).collect();
        ns.sort_unstable();
        let n = ns.len() as f64;
        let mean = ns.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = ns.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let median = if ns.len() % 2 == 1 {
            ns[ns.len() / 2]
        } else {
            (ns[ns.len() / 2 - 1] + ns[ns.len() / 2]) / 2
        };
        Self {
            min_ns: ns[0],
            median_ns: median,
            mean_ns: mean,
            std_ns: var.sqrt(),
        }
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub(crate) fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
