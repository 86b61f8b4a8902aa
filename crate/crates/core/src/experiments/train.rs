use super::{fmt_f64, CsvTable, ExperimentConfig};
use crate::data::{load_mnist, resolve_data_dir, synthetic_classification, Dataset};
use crate::error::{Error, Result};
use crate::nn::{train_resnet_observed, ForwardMode, ResNetParams, SgdConfig, TrainLogRow};

const COLUMNS: &[(&str, bool)] = &[
    ("step", false),
    ("epoch", false),
    ("mode", false),
    ("status", false),
    ("loss", false),
    ("accuracy", false),
    ("fwd_time_ns", true),
    ("bwd_time_ns", true),
    ("newton_iters", false),
    ("loss_diff", false),
    ("fwd_time_ratio", true),
];

/// Feature dimension and class count of the synthetic stand-in for MNIST.
const SYNTHETIC_SHAPE: (usize, usize) = (784, 10);

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub table: CsvTable,
    /// `mnist:<dir>` or `synthetic`.
    pub data_source: String,
    pub sequential_accuracy: f64,
    /// `None` when the Newton/PCR arm diverged.
    pub deeppcr_accuracy: Option<f64>,
    pub deeppcr_error: Option<String>,
    /// Largest per-batch `|loss_seq - loss_pcr|` over the paired steps.
    pub max_loss_diff: f64,
    pub sequential_steps: usize,
    pub deeppcr_steps: usize,
}

fn load_data(config: &ExperimentConfig) -> Result<(Dataset, String)> {
    match resolve_data_dir(config.data_dir.as_deref()) {
        Some(dir) => Ok((
            load_mnist(&dir, Some(config.samples))?,
            format!("mnist:{}", dir.display()),
        )),
        None => {
            let (dim, classes) = SYNTHETIC_SHAPE;
            Ok((
                synthetic_classification(config.samples, dim, classes, config.seed)?,
                "synthetic".into(),
            ))
        }
    }
}

fn row(r: &TrainLogRow, status: &str, other: Option<&TrainLogRow>) -> Vec<String> {
    let ratio = other.map(|o| {
        let (seq, pcr) = match r.mode {
            ForwardMode::Sequential => (r, o),
            ForwardMode::DeepPcr => (o, r),
        };
        fmt_f64(seq.fwd_time_ns as f64 / (pcr.fwd_time_ns as f64).max(1.0))
    });
    vec![
        r.step.to_string(),
        r.epoch.to_string(),
        r.mode.to_string(),
        status.into(),
        fmt_f64(r.loss),
        fmt_f64(r.accuracy),
        r.fwd_time_ns.to_string(),
        r.bwd_time_ns.to_string(),
        r.newton_iters.to_string(),
        other
            .map(|o| fmt_f64((r.loss - o.loss).abs()))
            .unwrap_or_default(),
        ratio.unwrap_or_default(),
    ]
}

/// Trains the same ResNet twice, layer by layer and with Newton/PCR forward
/// passes, and pairs the per-batch logs.
///
/// Data come from the MNIST directory (flag or environment) when one is set,
/// otherwise from a seeded synthetic set with MNIST's shape.
pub fn train_resnet_cmd(config: &ExperimentConfig) -> Result<TrainReport> {
    config.validate()?;
    let workers = config.worker_pool()?;
    let (data, data_source) = load_data(config)?;
    let depth = config.depths[0];
    let width = config.widths[0];
    let params = ResNetParams::<f64>::init_with(
        data.feature_dim,
        width,
        depth,
        config.skip_length,
        data.class_count,
        config.activation,
        config.init,
        config.seed,
    )?;
    let sgd = SgdConfig {
        learning_rate: config.learning_rate,
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed: config.seed,
    };

    let seq = train_resnet_observed(
        params.clone(),
        &data,
        &sgd,
        ForwardMode::Sequential,
        &config.newton,
        &workers,
        |_| {},
    )?;
    let mut pcr_log = Vec::new();
    let pcr = train_resnet_observed(
        params,
        &data,
        &sgd,
        ForwardMode::DeepPcr,
        &config.newton,
        &workers,
        |r| pcr_log.push(r.clone()),
    );
    let (deeppcr_accuracy, deeppcr_error) = match pcr {
        Ok(out) => (Some(out.final_accuracy), None),
        Err(e @ Error::Divergence { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };

    let mut table = CsvTable::new(COLUMNS);
    let mut max_loss_diff: f64 = 0.0;
    for (i, s) in seq.log.iter().enumerate() {
        let p = pcr_log.get(i);
        table.push(row(s, "ok", p));
        if let Some(p) = p {
            max_loss_diff = max_loss_diff.max((s.loss - p.loss).abs());
            table.push(row(p, "ok", Some(s)));
        } else if i == pcr_log.len() {
            if let Some(err) = &deeppcr_error {
                let mut failed = vec![String::new(); COLUMNS.len()];
                failed[0] = i.to_string();
                failed[1] = s.epoch.to_string();
                failed[2] = ForwardMode::DeepPcr.to_string();
                failed[3] = format!("diverged: {err}");
                table.push(failed);
            }
        }
    }
    Ok(TrainReport {
        table,
        data_source,
        sequential_accuracy: seq.final_accuracy,
        deeppcr_accuracy,
        deeppcr_error,
        max_loss_diff,
        sequential_steps: seq.log.len(),
        deeppcr_steps: pcr_log.len(),
    })
}
