//! Forward and backward timing sweeps over MLP depth and width.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use super::alloc::measure_peak;
use super::{fmt_f64, fmt_opt, CsvTable, ExperimentConfig, TimingStats};
use crate::data::synthetic_gaussian;
use crate::error::Result;
use crate::linalg::{stacked_norm_inf, DenseVector};
use crate::newton::{assemble_linearized_system, newton_solve_with, solve_linear_chain};
use crate::nn::{uniform_mlp_with, MlpParams};
use crate::pcr::{expected_barriers, pcr_solve};
use crate::sequences::{
    first_state_copy, mlp_backward_sequence, mlp_forward_sequence, MarkovSequence,
};

const FORWARD_COLUMNS: &[(&str, bool)] = &[
    ("depth", false),
    ("width", false),
    ("activation", false),
    ("method", false),
    ("status", false),
    ("min_time_ns", true),
    ("median_time_ns", true),
    ("mean_time_ns", true),
    ("std_time_ns", true),
    ("assembly_time_ns", true),
    ("sequential_steps", false),
    ("barriers", false),
    ("newton_iters", false),
    ("stop_reason", false),
    ("final_residual", false),
    ("inf_error", false),
    ("l2_error", false),
    ("pcr_bytes_analytic", false),
    ("pcr_bytes_headers", false),
    ("pcr_bytes_peak", true),
    ("memory_within_2x", true),
];

const BACKWARD_COLUMNS: &[(&str, bool)] = &[
    ("depth", false),
    ("width", false),
    ("activation", false),
    ("method", false),
    ("status", false),
    ("min_time_ns", true),
    ("median_time_ns", true),
    ("mean_time_ns", true),
    ("std_time_ns", true),
    ("sequential_steps", false),
    ("barriers", false),
    ("newton_iters", false),
    ("grad_rel_error", false),
];

fn cell_seed(seed: u64, depth: usize, width: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((depth as u64) << 20)
        .wrapping_add(width as u64)
}

fn cell_network(
    config: &ExperimentConfig,
    depth: usize,
    width: usize,
) -> Result<(MlpParams<f64>, DenseVector<f64>)> {
    let seed = cell_seed(config.seed, depth, width);
    let params = uniform_mlp_with(width, width, depth, config.activation, config.init, seed)?;
    let x = DenseVector::from_vec(synthetic_gaussian(1, width, seed ^ 0xa5a5)?.remove(0));
    Ok((params, x))
}

fn timing_cells(stats: &TimingStats) -> [String; 4] {
    [
        stats.min_ns.to_string(),
        stats.median_ns.to_string(),
        fmt_f64(stats.mean_ns),
        fmt_f64(stats.std_ns),
    ]
}

/// Forward-pass sweep: one sequential and one Newton/PCR row per `(L, w)`.
///
/// A diverging Newton solve is recorded in the row's `status` and the sweep
/// continues.
pub fn bench_forward(config: &ExperimentConfig) -> Result<CsvTable> {
    config.validate()?;
    let workers = config.worker_pool()?;
    let mut table = CsvTable::new(FORWARD_COLUMNS);
    for &depth in &config.depths {
        for &width in &config.widths {
            let (params, x) = cell_network(config, depth, width)?;
            let seq = mlp_forward_sequence(&params, x)?;

            let mut times = Vec::with_capacity(config.repeats);
            let mut oracle = Vec::new();
            for _ in 0..config.repeats {
                let t = Instant::now();
                oracle = seq.rollout();
                times.push(t.elapsed());
            }
            let head = [
                depth.to_string(),
                width.to_string(),
                config.activation.to_string(),
            ];
            let mut row: Vec<String> = head.to_vec();
            row.extend(["sequential".into(), "ok".into()]);
            row.extend(timing_cells(&TimingStats::from_durations(&times)));
            row.extend([String::new(), seq.len().to_string()]);
            row.extend(std::iter::repeat_n(String::new(), 10));
            table.push(row);

            let mut times = Vec::with_capacity(config.repeats);
            let mut assembly = Vec::with_capacity(config.repeats);
            let mut outcome = None;
            for _ in 0..config.repeats {
                let guess = first_state_copy(&seq);
                let t = Instant::now();
                let solved = newton_solve_with(&seq, guess, &config.newton, &workers);
                times.push(t.elapsed());
                match solved {
                    Ok((z, report, timings)) => {
                        assembly.push(timings.assembly);
                        outcome = Some(Ok((z, report)));
                    }
                    Err(e) => {
                        outcome = Some(Err(e));
                        break;
                    }
                }
            }

            let system = assemble_linearized_system(&seq, &first_state_copy(&seq))?;
            let analytic = system.storage_scalars() * std::mem::size_of::<f64>();
            let headers = system.header_bytes();
            let (_, peak) = measure_peak(|| pcr_solve(system, &workers));

            let mut row: Vec<String> = head.to_vec();
            row.push("deeppcr".into());
            match outcome.expect("repeats >= 1") {
                Ok((z, report)) => {
                    let diff = z[depth].sub(&oracle[depth])?;
                    row.push("ok".into());
                    row.extend(timing_cells(&TimingStats::from_durations(&times)));
                    row.push(TimingStats::from_durations(&assembly).min_ns.to_string());
                    row.push(String::new());
                    row.push((report.barriers / report.iterations).to_string());
                    row.push(report.iterations.to_string());
                    row.push(report.stop_reason.as_str().into());
                    row.push(fmt_f64(report.final_residual()));
                    row.push(fmt_f64(diff.norm_inf()));
                    row.push(fmt_f64(diff.norm_l2()));
                }
                Err(e) => {
                    row.push(format!("diverged: {e}"));
                    row.extend(timing_cells(&TimingStats::from_durations(&times)));
                    row.push(String::new());
                    row.push(String::new());
                    row.push(expected_barriers(depth).to_string());
                    row.extend(std::iter::repeat_n(String::new(), 5));
                }
            }
            row.push(analytic.to_string());
            row.push(headers.to_string());
            row.push(fmt_opt(peak));
            row.push(fmt_opt(peak.map(|p| p <= 2 * analytic)));
            table.push(row);
        }
    }
    Ok(table)
}

/// Backward-pass sweep: sequential adjoint recursion against one PCR solve
/// of the linear adjoint chain, for the loss `½‖z_L‖²`.
pub fn bench_backward(config: &ExperimentConfig) -> Result<CsvTable> {
    config.validate()?;
    let workers = config.worker_pool()?;
    let mut table = CsvTable::new(BACKWARD_COLUMNS);
    for &depth in &config.depths {
        for &width in &config.widths {
            let (params, x) = cell_network(config, depth, width)?;
            let states = params.forward_states(&x)?;
            let output_grad = states[depth].clone();
            let seq = mlp_backward_sequence(&params, &states, output_grad)?;

            let head = [
                depth.to_string(),
                width.to_string(),
                config.activation.to_string(),
            ];
            let mut times = Vec::with_capacity(config.repeats);
            let mut oracle = Vec::new();
            for _ in 0..config.repeats {
                let t = Instant::now();
                oracle = seq.rollout();
                times.push(t.elapsed());
            }
            let mut row: Vec<String> = head.to_vec();
            row.extend(["sequential".into(), "ok".into()]);
            row.extend(timing_cells(&TimingStats::from_durations(&times)));
            row.extend([
                seq.len().to_string(),
                String::new(),
                String::new(),
                String::new(),
            ]);
            table.push(row);

            let mut times: Vec<Duration> = Vec::with_capacity(config.repeats);
            let mut solved = None;
            for _ in 0..config.repeats {
                let t = Instant::now();
                let r = solve_linear_chain(&seq, &workers)?;
                times.push(t.elapsed());
                solved = Some(r);
            }
            let (adjoint, trace) = solved.expect("repeats >= 1");
            let mut diff = Vec::with_capacity(adjoint.len());
            for (a, b) in adjoint.iter().zip(&oracle) {
                diff.push(a.sub(b)?);
            }
            let scale = stacked_norm_inf(&oracle).max(f64::MIN_POSITIVE);
            let mut row: Vec<String> = head.to_vec();
            row.extend(["deeppcr".into(), "ok".into()]);
            row.extend(timing_cells(&TimingStats::from_durations(&times)));
            row.push(String::new());
            row.push(trace.barrier_count.to_string());
            row.push("1".into());
            row.push(fmt_f64(stacked_norm_inf(&diff) / scale));
            table.push(row);
        }
    }
    Ok(table)
}

/// Whether the sequential median time grows with `L` for every width, allowing
/// each step to drop by at most 10%.
pub fn sequential_timing_monotone(table: &CsvTable) -> bool {
    let (Some(d), Some(w), Some(m), Some(t)) = (
        table.column("depth"),
        table.column("width"),
        table.column("method"),
        table.column("median_time_ns"),
    ) else {
        return false;
    };
    let mut by_width: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for row in table.rows.iter().filter(|r| r[m] == "sequential") {
        let (Ok(depth), Ok(time)) = (row[d].parse::<usize>(), row[t].parse::<f64>()) else {
            return false;
        };
        by_width
            .entry(row[w].as_str())
            .or_default()
            .push((depth, time));
    }
    by_width.into_values().all(|mut cells| {
        cells.sort_by_key(|&(depth, _)| depth);
        cells.windows(2).all(|p| p[1].1 >= 0.9 * p[0].1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Experiment;

    fn small(experiment: Experiment) -> ExperimentConfig {
        ExperimentConfig {
            depths: vec![4, 9],
            widths: vec![2, 3],
            repeats: 2,
            ..ExperimentConfig::new(experiment)
        }
    }

    #[test]
    fn forward_rows_and_counts() {
        let t = bench_forward(&small(Experiment::BenchForward)).unwrap();
        assert_eq!(t.rows.len(), 8);
        for (i, row) in t.rows.iter().enumerate() {
            let depth: usize = row[0].parse().unwrap();
            if i % 2 == 0 {
                assert_eq!(
                    row[t.column("sequential_steps").unwrap()],
                    depth.to_string()
                );
            } else {
                assert_eq!(row[t.column("status").unwrap()], "ok");
                assert_eq!(
                    row[t.column("barriers").unwrap()],
                    expected_barriers(depth).to_string()
                );
            }
        }
    }

    #[test]
    fn backward_rows() {
        let t = bench_backward(&small(Experiment::BenchBackward)).unwrap();
        assert_eq!(t.rows.len(), 8);
        for row in t.rows.iter().skip(1).step_by(2) {
            assert_eq!(row[t.column("newton_iters").unwrap()], "1");
            assert!(
                row[t.column("grad_rel_error").unwrap()]
                    .parse::<f64>()
                    .unwrap()
                    <= 1e-10
            );
        }
    }

    #[test]
    fn monotone_check() {
        let mut t = CsvTable::new(&[
            ("depth", false),
            ("width", false),
            ("method", false),
            ("median_time_ns", true),
        ]);
        for (d, time) in [(64, "100"), (256, "95"), (1024, "400")] {
            t.push(vec![
                d.to_string(),
                "2".into(),
                "sequential".into(),
                time.into(),
            ]);
        }
        t.push(vec!["64".into(), "2".into(), "deeppcr".into(), "1".into()]);
        assert!(sequential_timing_monotone(&t));
        t.rows[1][3] = "80".into();
        assert!(!sequential_timing_monotone(&t));
    }
}
