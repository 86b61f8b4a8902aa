use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use super::{fmt_f64, CsvTable, ExperimentConfig};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::newton::newton_solve_with;
use crate::parallel::Workers;
use crate::sequences::{
    anchored_guess, diffusion_sequence, Denoiser, MarkovSequence, MlpDenoiser, NoiseSchedule,
    NoiseTape, ZeroDenoiser,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DenoiserKind {
    /// Random residual MLP with a step embedding.
    #[default]
    Mlp,
    /// `g ≡ 0`, which makes the chain affine.
    Zero,
}

impl fmt::Display for DenoiserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenoiserKind::Mlp => "mlp",
            DenoiserKind::Zero => "zero",
        })
    }
}

impl FromStr for DenoiserKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(DenoiserKind::Mlp),
            "zero" => Ok(DenoiserKind::Zero),
            other => Err(Error::InvalidArgument(format!(
                "unknown denoiser `{other}`"
            ))),
        }
    }
}

const COLUMNS: &[(&str, bool)] = &[
    ("state_dim", false),
    ("steps", false),
    ("denoiser", false),
    ("status", false),
    ("samples", false),
    ("sequential_time_ns", true),
    ("deeppcr_time_ns", true),
    ("speedup", true),
    ("newton_iters_mean", false),
    ("newton_iters_max", false),
    ("linf_error", false),
];

struct CellResult {
    seq_ns: f64,
    pcr_ns: f64,
    iters: Vec<usize>,
    error: f64,
}

/// Generates `repeats` samples, each from its own noise tape and starting
/// point, sequentially and with Newton/PCR from a zero anchor.
fn run_cell<D: Denoiser<f64>>(
    den: &D,
    dim: usize,
    len: usize,
    config: &ExperimentConfig,
    workers: &Workers,
) -> Result<CellResult> {
    let schedule = NoiseSchedule::<f64>::ddpm_default(len)?;
    let mut out = CellResult {
        seq_ns: 0.0,
        pcr_ns: 0.0,
        iters: Vec::new(),
        error: 0.0,
    };
    for r in 0..config.repeats {
        let sample_seed = config
            .seed
            .wrapping_add(1 + r as u64)
            .wrapping_mul(0x2545_f491_4f6c_dd1d)
            ^ (len * dim) as u64;
        let tape = NoiseTape::sample(len, dim, sample_seed);
        let z_init = NoiseTape::<f64>::sample(1, dim, !sample_seed)
            .draws
            .remove(0);
        let seq = diffusion_sequence(den, &schedule, &tape, z_init)?;

        let t = Instant::now();
        let oracle = seq.rollout();
        out.seq_ns += t.elapsed().as_nanos() as f64;

        let guess = anchored_guess(&seq, &DenseVector::zeros(dim));
        let t = Instant::now();
        let (z, report, _) = newton_solve_with(&seq, guess, &config.newton, workers)?;
        out.pcr_ns += t.elapsed().as_nanos() as f64;
        out.iters.push(report.iterations);
        out.error = out.error.max(z[len].sub(&oracle[len])?.norm_inf());
    }
    out.seq_ns /= config.repeats as f64;
    out.pcr_ns /= config.repeats as f64;
    Ok(out)
}

/// Denoising sweep over `(state dim, steps)`; times are means over samples.
pub fn diffuse_cmd(config: &ExperimentConfig) -> Result<CsvTable> {
    config.validate()?;
    let workers = config.worker_pool()?;
    let mut table = CsvTable::new(COLUMNS);
    for &dim in &config.widths {
        for &len in &config.depths {
            let result = match config.denoiser {
                DenoiserKind::Mlp => {
                    let den = MlpDenoiser::<f64>::random(dim, 2 * dim, config.seed ^ dim as u64)?;
                    run_cell(&den, dim, len, config, &workers)
                }
                DenoiserKind::Zero => run_cell(&ZeroDenoiser { dim }, dim, len, config, &workers),
            };
            let mut row = vec![
                dim.to_string(),
                len.to_string(),
                config.denoiser.to_string(),
            ];
            match result {
                Ok(cell) => {
                    let mean = cell.iters.iter().sum::<usize>() as f64 / cell.iters.len() as f64;
                    row.extend([
                        "ok".into(),
                        config.repeats.to_string(),
                        fmt_f64(cell.seq_ns),
                        fmt_f64(cell.pcr_ns),
                        fmt_f64(cell.seq_ns / cell.pcr_ns.max(1.0)),
                        fmt_f64(mean),
                        cell.iters.iter().max().expect("repeats >= 1").to_string(),
                        fmt_f64(cell.error),
                    ]);
                }
                Err(e @ Error::Divergence { .. }) => {
                    row.push(format!("diverged: {e}"));
                    row.push(config.repeats.to_string());
                    row.extend(std::iter::repeat_n(String::new(), 6));
                }
                Err(e) => return Err(e),
            }
            table.push(row);
        }
    }
    Ok(table)
}
