//! ResNet training with either a layer-by-layer or a Newton/PCR forward pass.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{softmax_xent, ResNetGrads, ResNetParams};
use crate::data::Dataset;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{outer, DenseVector};
use crate::newton::{newton_solve_with, solve_linear_chain, NewtonConfig};
use crate::parallel::Workers;
use crate::scalar::Scalar;
use crate::sequences::{
    batch_mean, first_state_copy, param_gradients, resnet_collapsed_sequence, AffineChain,
    MarkovSequence,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ForwardMode {
    Sequential,
    DeepPcr,
}

impl ForwardMode {
    pub fn name(self) -> &'static str {
        match self {
            ForwardMode::Sequential => "sequential",
            ForwardMode::DeepPcr => "deeppcr",
        }
    }
}

impl fmt::Display for ForwardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ForwardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sequential" => Ok(ForwardMode::Sequential),
            "deeppcr" | "pcr" => Ok(ForwardMode::DeepPcr),
            other => Err(Error::InvalidArgument(format!(
                "unknown forward mode `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 1,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch size and epochs must be >= 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLogRow {
    pub step: usize,
    pub epoch: usize,
    pub mode: ForwardMode,
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    /// Fraction of the batch classified correctly.
    pub accuracy: f64,
    pub fwd_time_ns: u128,
    pub bwd_time_ns: u128,
    /// Largest Newton iteration count in the batch; 0 in sequential mode.
    pub newton_iters: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: ResNetParams<T>,
    pub log: Vec<TrainLogRow>,
    /// Accuracy over the whole dataset, evaluated layer by layer.
    pub final_accuracy: f64,
}

/// Mean gradient and statistics for one batch.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub grads: ResNetGrads<T>,
    pub loss: f64,
    pub correct: usize,
    pub fwd_time: Duration,
    pub bwd_time: Duration,
    pub newton_iters: usize,
    /// Mean of the collapsed block stacks, used to warm-start the next batch.
    pub block_mean: Option<Vec<DenseVector<T>>>,
}

/// Layer states `z_0..z_L`, residual adds included.
pub fn resnet_forward_sequential<T: Scalar>(
    params: &ResNetParams<T>,
    x: &DenseVector<T>,
) -> Result<Vec<DenseVector<T>>> {
    let body = &params.body;
    let mut states = Vec::with_capacity(body.depth() + 1);
    states.push(body.layer_output(0, x)?);
    for l in 1..=body.depth() {
        let mut z = body.layer_output(l, &states[l - 1])?;
        if l % params.skip == 0 {
            z.add_assign(&states[l - params.skip])?;
        }
        states.push(z);
    }
    Ok(states)
}

/// Total gradients `∇z_0..∇z_L` given `∇z_L`, in layer order.
pub fn resnet_backward_sequential<T: Scalar>(
    params: &ResNetParams<T>,
    states: &[DenseVector<T>],
    output_grad: &DenseVector<T>,
) -> Result<Vec<DenseVector<T>>> {
    let depth = params.depth();
    if states.len() != depth + 1 {
        return Err(shape_err(
            "resnet_backward_sequential states",
            depth + 1,
            states.len(),
        ));
    }
    let mut g: Vec<DenseVector<T>> = states.iter().map(|z| DenseVector::zeros(z.dim())).collect();
    g[depth] = output_grad.clone();
    for l in (1..=depth).rev() {
        let back = layer_vjp(params, l, &states[l - 1], &g[l])?;
        g[l - 1].add_assign(&back)?;
        if l % params.skip == 0 {
            let skip = g[l].clone();
            g[l - params.skip].add_assign(&skip)?;
        }
    }
    Ok(g)
}

/// `J_l(input)ᵀ g` for body layer `l`.
fn layer_vjp<T: Scalar>(
    params: &ResNetParams<T>,
    l: usize,
    input: &DenseVector<T>,
    g: &DenseVector<T>,
) -> Result<DenseVector<T>> {
    let body = &params.body;
    body.weights[l]
        .matvec_transposed(g)?
        .hadamard(&body.activations[l].derivative_vec(input))
}

fn features<T: Scalar>(sample: &[f64]) -> DenseVector<T> {
    DenseVector::from_fn(sample.len(), |i| T::lit(sample[i]))
}

fn argmax<T: Scalar>(v: &DenseVector<T>) -> usize {
    let s = v.as_slice();
    (0..s.len()).fold(0, |best, i| if s[i] > s[best] { i } else { best })
}

/// Loss, correctness, and head gradients plus `∇z_L`.
fn head_backward<T: Scalar>(
    params: &ResNetParams<T>,
    z_last: &DenseVector<T>,
    label: usize,
) -> Result<(T, bool, ResNetGrads<T>, DenseVector<T>)> {
    let logits = params.logits(z_last)?;
    let (loss, dlogits) = softmax_xent(&logits, label)?;
    let correct = argmax(&logits) == label;
    let act = params.head_activation;
    let mut grads = params.zero_grads();
    grads.head_weight = outer(&dlogits, &act.apply_vec(z_last));
    grads.head_bias = dlogits.clone();
    let dz = params
        .head_weight
        .matvec_transposed(&dlogits)?
        .hadamard(&act.derivative_vec(z_last))?;
    Ok((loss, correct, grads, dz))
}

struct SampleForward<T> {
    layers: Vec<DenseVector<T>>,
    blocks: Option<Vec<DenseVector<T>>>,
    newton_iters: usize,
}

fn forward_sample<T: Scalar>(
    params: &ResNetParams<T>,
    x: &DenseVector<T>,
    mode: ForwardMode,
    newton: &NewtonConfig<T>,
    warm: Option<&[DenseVector<T>]>,
    workers: &Workers,
) -> Result<SampleForward<T>> {
    match mode {
        ForwardMode::Sequential => Ok(SampleForward {
            layers: resnet_forward_sequential(params, x)?,
            blocks: None,
            newton_iters: 0,
        }),
        ForwardMode::DeepPcr => {
            let seq = resnet_collapsed_sequence(params, x.clone())?;
            let guess = match warm {
                Some(w) => {
                    let mut g = w.to_vec();
                    g[0] = seq.initial_value();
                    g
                }
                None => first_state_copy(&seq),
            };
            let (blocks, report, _) = newton_solve_with(&seq, guess, newton, workers)?;
            let inner = workers.map(1..seq.len() + 1, |b| seq.block_states(b, &blocks[b - 1]));
            let mut layers = Vec::with_capacity(params.depth() + 1);
            layers.push(blocks[0].clone());
            layers.extend(inner.into_iter().flatten());
            Ok(SampleForward {
                layers,
                blocks: Some(blocks),
                newton_iters: report.iterations,
            })
        }
    }
}

/// Adjoint over the collapsed chain solved with one PCR pass, then local
/// backprop inside each block.
fn deeppcr_backward<T: Scalar>(
    params: &ResNetParams<T>,
    x: &DenseVector<T>,
    blocks: &[DenseVector<T>],
    layers: &[DenseVector<T>],
    output_grad: &DenseVector<T>,
    workers: &Workers,
) -> Result<Vec<DenseVector<T>>> {
    let seq = resnet_collapsed_sequence(params, x.clone())?;
    let nb = seq.len();
    // Step k of the adjoint chain maps ∇z_{B-k+1} to ∇z_{B-k}.
    let ops = workers.map(1..nb + 1, |k| {
        let b = nb - k + 1;
        seq.step_jacobian(b, &blocks[b - 1]).transpose()
    });
    let chain = AffineChain::linear(output_grad.clone(), ops)?;
    let (mut block_adj, _) = solve_linear_chain(&chain, workers)?;
    block_adj.reverse();

    let s = params.skip;
    let inner = workers.map(1..nb + 1, |b| -> Result<Vec<DenseVector<T>>> {
        // Gradients for layers (b-1)s+1 ..= bs, all driven by ∇z_{bs}.
        let first = (b - 1) * s + 1;
        let mut out = vec![block_adj[b].clone()];
        for l in (first + 1..=b * s).rev() {
            let g = layer_vjp(params, l, &layers[l - 1], out.last().expect("non-empty"))?;
            out.push(g);
        }
        out.reverse();
        Ok(out)
    });
    let mut adjoint = Vec::with_capacity(layers.len());
    adjoint.push(block_adj[0].clone());
    for block in inner {
        adjoint.extend(block?);
    }
    Ok(adjoint)
}

fn tag_batch(err: Error, batch: usize) -> Error {
    match err {
        Error::Divergence { iteration, reason } => Error::Divergence {
            iteration,
            reason: format!("batch {batch}: {reason}"),
        },
        other => other,
    }
}

/// Mean loss gradient over `indices`.
///
/// In [`ForwardMode::DeepPcr`] each sample's forward pass is a Newton solve
/// over the collapsed skip blocks started from `warm` (or a copy of `z_0`),
/// and the backward pass is a single PCR solve of the block adjoint.
#[allow(clippy::too_many_arguments)]
pub fn batch_gradients<T: Scalar>(
    params: &ResNetParams<T>,
    data: &Dataset,
    indices: &[usize],
    mode: ForwardMode,
    newton: &NewtonConfig<T>,
    warm: Option<&[DenseVector<T>]>,
    workers: &Workers,
) -> Result<BatchStats<T>> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if data.feature_dim != params.body.input_dim() {
        return Err(shape_err(
            "dataset features",
            params.body.input_dim(),
            data.feature_dim,
        ));
    }
    if let Some(w) = warm {
        if w.len() != params.blocks() + 1 {
            return Err(shape_err("warm start blocks", params.blocks() + 1, w.len()));
        }
    }
    let mut grads = params.zero_grads();
    let mut loss = 0.0;
    let mut correct = 0;
    let mut fwd_time = Duration::ZERO;
    let mut bwd_time = Duration::ZERO;
    let mut newton_iters = 0;
    let mut solutions = Vec::new();

    for &i in indices {
        let x: DenseVector<T> = features(&data.samples[i]);
        let t = Instant::now();
        let fwd = forward_sample(params, &x, mode, newton, warm, workers)?;
        fwd_time += t.elapsed();
        newton_iters = newton_iters.max(fwd.newton_iters);

        let t = Instant::now();
        let z_last = fwd.layers.last().expect("layer 0 exists");
        let (l, ok, mut sample_grads, dz) = head_backward(params, z_last, data.labels[i])?;
        let adjoint = match &fwd.blocks {
            Some(blocks) => deeppcr_backward(params, &x, blocks, &fwd.layers, &dz, workers)?,
            None => resnet_backward_sequential(params, &fwd.layers, &dz)?,
        };
        sample_grads.body = param_gradients(&params.body, &x, &fwd.layers, &adjoint)?;
        bwd_time += t.elapsed();

        grads.add_assign(&sample_grads)?;
        loss += l.to_f64_lossy();
        correct += usize::from(ok);
        if let Some(blocks) = fwd.blocks {
            solutions.push(blocks);
        }
    }
    let n = indices.len();
    grads.scale(T::one() / T::lit(n as f64));
    Ok(BatchStats {
        grads,
        loss: loss / n as f64,
        correct,
        fwd_time,
        bwd_time,
        newton_iters,
        block_mean: batch_mean(&solutions),
    })
}

/// Fraction of `data` classified correctly, using the layer-by-layer forward pass.
pub fn evaluate_accuracy<T: Scalar>(
    params: &ResNetParams<T>,
    data: &Dataset,
    workers: &Workers,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let hits = workers.map(0..data.len(), |i| -> Result<bool> {
        let states = resnet_forward_sequential(params, &features(&data.samples[i]))?;
        let logits = params.logits(states.last().expect("layer 0 exists"))?;
        Ok(argmax(&logits) == data.labels[i])
    });
    let mut correct = 0usize;
    for h in hits {
        correct += usize::from(h?);
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Minibatch SGD on softmax cross-entropy.
///
/// Each epoch shuffles with a generator seeded by `seed + epoch`. In
/// [`ForwardMode::DeepPcr`] the Newton guess for a batch is the mean block
/// stack of the previous batch.
pub fn train_resnet<T: Scalar>(
    params: ResNetParams<T>,
    data: &Dataset,
    sgd: &SgdConfig,
    mode: ForwardMode,
    newton: &NewtonConfig<T>,
    workers: &Workers,
) -> Result<TrainOutcome<T>> {
    train_resnet_observed(params, data, sgd, mode, newton, workers, |_| {})
}

/// [`train_resnet`], calling `observe` after every optimization step.
pub fn train_resnet_observed<T: Scalar>(
    mut params: ResNetParams<T>,
    data: &Dataset,
    sgd: &SgdConfig,
    mode: ForwardMode,
    newton: &NewtonConfig<T>,
    workers: &Workers,
    mut observe: impl FnMut(&TrainLogRow),
) -> Result<TrainOutcome<T>> {
    sgd.validate()?;
    newton.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if data.class_count > params.classes() {
        return Err(shape_err("class count", params.classes(), data.class_count));
    }
    let lr = T::lit(sgd.learning_rate);
    let mut log = Vec::new();
    let mut warm: Option<Vec<DenseVector<T>>> = None;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..sgd.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(
            sgd.seed.wrapping_add(epoch as u64),
        ));
        for batch in order.chunks(sgd.batch_size) {
            let step = log.len();
            let stats =
                batch_gradients(&params, data, batch, mode, newton, warm.as_deref(), workers)
                    .map_err(|e| tag_batch(e, step))?;
            params.apply_sgd(&stats.grads, lr)?;
            let row = TrainLogRow {
                step,
                epoch,
                mode,
                loss: stats.loss,
                accuracy: stats.correct as f64 / batch.len() as f64,
                fwd_time_ns: stats.fwd_time.as_nanos(),
                bwd_time_ns: stats.bwd_time.as_nanos(),
                newton_iters: stats.newton_iters,
            };
            observe(&row);
            log.push(row);
            if stats.block_mean.is_some() {
                warm = stats.block_mean;
            }
        }
    }
    let final_accuracy = evaluate_accuracy(&params, data, workers)?;
    Ok(TrainOutcome {
        params,
        log,
        final_accuracy,
    })
}
