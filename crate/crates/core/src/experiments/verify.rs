//! Self-check suite: oracle equivalence, barrier counts, Jacobians,
//! backward exactness and cross-worker determinism.
//!
//! The transcript holds no timings or worker counts, so it is identical for
//! any `--workers`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ExperimentConfig;
use crate::error::Result;
use crate::linalg::{stacked_norm_inf, DenseMatrix, DenseVector};
use crate::newton::{newton_solve, newton_solve_with, solve_linear_chain, NewtonConfig};
use crate::nn::{uniform_mlp_with, Activation, Init, MlpParams, ResNetParams};
use crate::parallel::Workers;
use crate::pcr::{expected_barriers, forward_substitution_solve, pcr_solve, BlockBidiagSystem};
use crate::sequences::{
    anchored_guess, diffusion_sequence, finite_difference_jacobian, first_state_copy,
    mlp_backward_sequence, mlp_forward_sequence, resnet_collapsed_sequence, AffineChain,
    MarkovSequence, MlpDenoiser, NoiseSchedule, NoiseTape, ZeroDenoiser,
};

pub const ORACLE_LENGTHS: &[usize] = &[1, 2, 3, 4, 5, 6, 7, 8, 9, 16, 64, 256, 1024];
pub const ORACLE_DIMS: &[usize] = &[1, 2, 4, 8, 16];
pub const ORACLE_SYSTEMS: usize = 200;
pub const ORACLE_TOL: f64 = 1e-10;
pub const JACOBIAN_TOL: f64 = 1e-5;
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(out, "{tag} {}: {}", c.name, c.detail).expect("string write");
        }
        let ok = self.checks.iter().filter(|c| c.passed).count();
        writeln!(out, "{ok}/{} checks passed", self.checks.len()).expect("string write");
        out
    }
}

/// A system with `len` coupled rows of width `dim`, sub-diagonal entries in
/// `±1/dim` and right-hand sides in `±1`.
pub fn random_system(len: usize, dim: usize, seed: u64) -> BlockBidiagSystem<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / dim as f64;
    let ops = (0..len)
        .map(|_| DenseMatrix::from_fn(dim, dim, |_, _| scale * rng.random_range(-1.0..1.0)))
        .collect();
    let rhs = (0..=len)
        .map(|_| DenseVector::from_fn(dim, |_| rng.random_range(-1.0..1.0)))
        .collect();
    BlockBidiagSystem::new(ops, rhs).expect("consistent random system")
}

/// `‖a - b‖∞ / ‖b‖∞` over stacked blocks.
pub fn stacked_relative_error(a: &[DenseVector<f64>], b: &[DenseVector<f64>]) -> f64 {
    let diff: Vec<DenseVector<f64>> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.sub(y).expect("matching blocks"))
        .collect();
    stacked_norm_inf(&diff) / stacked_norm_inf(b).max(f64::MIN_POSITIVE)
}

/// Compares `solver` with forward substitution on `count` random systems
/// cycling through [`ORACLE_LENGTHS`] and [`ORACLE_DIMS`].
pub fn check_oracle_equivalence(
    solver: &dyn Fn(BlockBidiagSystem<f64>) -> Vec<DenseVector<f64>>,
    count: usize,
    seed: u64,
) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut worst_at = (0, 0);
    for k in 0..count {
        let len = ORACLE_LENGTHS[k % ORACLE_LENGTHS.len()];
        let dim = ORACLE_DIMS[(k / ORACLE_LENGTHS.len()) % ORACLE_DIMS.len()];
        let system = random_system(len, dim, seed.wrapping_add(k as u64));
        let oracle = forward_substitution_solve(&system);
        let x = solver(system);
        let err =
            if x.len() == oracle.len() && x.iter().zip(&oracle).all(|(a, b)| a.dim() == b.dim()) {
                stacked_relative_error(&x, &oracle)
            } else {
                f64::INFINITY
            };
        if err > worst || err.is_nan() {
            worst = err;
            worst_at = (len, dim);
        }
    }
    CheckResult::new(
        "pcr-oracle",
        worst <= ORACLE_TOL,
        format!(
            "{count} systems, max relative error {worst:.3e} (L={}, d={}), bound {ORACLE_TOL:e}",
            worst_at.0, worst_at.1
        ),
    )
}

fn check_barriers(seed: u64) -> CheckResult {
    let mut bad = Vec::new();
    let lengths: Vec<usize> = (1..=33)
        .chain([63, 64, 65, 255, 256, 257, 1000, 1024, 4096])
        .collect();
    for &len in &lengths {
        let (_, trace) = pcr_solve(
            random_system(len, 1, seed ^ len as u64),
            &Workers::sequential(),
        );
        if trace.barrier_count != expected_barriers(len) {
            bad.push(format!("L={len}: {}", trace.barrier_count));
        }
    }
    CheckResult::new(
        "barrier-count",
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "ceil(log2 L) barriers for {} lengths up to 4096",
                lengths.len()
            )
        } else {
            format!("mismatches {}", bad.join(", "))
        },
    )
}

fn relative_matrix_error(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
    a.add(&b.neg()).expect("same shape").max_abs() / b.max_abs().max(1e-12)
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> DenseVector<f64> {
    DenseVector::from_fn(dim, |_| rng.random_range(-1.0..1.0))
}

/// Worst FD discrepancy of `seq` at 20 random points away from ReLU kinks.
fn fd_worst<S: MarkovSequence<f64>>(seq: &S, rng: &mut ChaCha8Rng, kinks: bool) -> f64 {
    let mut worst: f64 = 0.0;
    let mut tried = 0;
    while tried < 20 {
        let l = rng.random_range(1..=seq.len());
        let z = random_vector(rng, seq.state_dim(l - 1));
        if kinks && z.as_slice().iter().any(|v| v.abs() < 1e-4) {
            continue;
        }
        tried += 1;
        let fd = finite_difference_jacobian(seq, l, &z, JACOBIAN_STEP);
        worst = worst.max(relative_matrix_error(&seq.step_jacobian(l, &z), &fd));
    }
    worst
}

fn check_jacobians(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for act in [Activation::Relu, Activation::Tanh, Activation::Sigmoid] {
        let params = uniform_mlp_with::<f64>(6, 6, 8, act, Init::KaimingGlorot, seed)?;
        let seq = mlp_forward_sequence(&params, random_vector(&mut rng, 6))?;
        let e = fd_worst(&seq, &mut rng, act == Activation::Relu);
        parts.push(format!("mlp-{act} {e:.1e}"));
        worst = worst.max(e);
    }
    let resnet = ResNetParams::<f64>::init(5, 6, 8, 4, 3, Activation::Tanh, seed)?;
    let seq = resnet_collapsed_sequence(&resnet, random_vector(&mut rng, 5))?;
    let e = fd_worst(&seq, &mut rng, false);
    parts.push(format!("resnet {e:.1e}"));
    worst = worst.max(e);

    let den = MlpDenoiser::<f64>::random(6, 12, seed)?;
    let schedule = NoiseSchedule::ddpm_default(32)?;
    let tape = NoiseTape::sample(32, 6, seed);
    let seq = diffusion_sequence(&den, &schedule, &tape, random_vector(&mut rng, 6))?;
    let e = fd_worst(&seq, &mut rng, false);
    parts.push(format!("diffusion {e:.1e}"));
    worst = worst.max(e);

    Ok(CheckResult::new(
        "jacobian-fd",
        worst <= JACOBIAN_TOL,
        format!("{}, bound {JACOBIAN_TOL:e}", parts.join(", ")),
    ))
}

/// Plain chain-rule backprop of `½‖z_L‖²`, in layer order.
fn hand_backprop(params: &MlpParams<f64>, states: &[DenseVector<f64>]) -> Vec<DenseVector<f64>> {
    let depth = params.depth();
    let mut grads = vec![DenseVector::zeros(0); depth + 1];
    grads[depth] = states[depth].clone();
    for l in (1..=depth).rev() {
        let w = &params.weights[l];
        grads[l - 1] = DenseVector::from_fn(w.cols(), |j| {
            let s: f64 = (0..w.rows()).map(|i| w.get(i, j) * grads[l].get(i)).sum();
            s * params.activations[l].derivative(states[l - 1].get(j))
        });
    }
    grads
}

fn check_backward(seed: u64, workers: &Workers) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = uniform_mlp_with::<f64>(8, 8, 32, Activation::Tanh, Init::FanInUniform, seed)?;
    let x = random_vector(&mut rng, 8);
    let states = params.forward_states(&x)?;
    let seq = mlp_backward_sequence(&params, &states, states[32].clone())?;
    let (adjoint, _) = solve_linear_chain(&seq, workers)?;
    let mut layer_order = adjoint;
    layer_order.reverse();
    let exact = stacked_relative_error(&layer_order, &hand_backprop(&params, &states));

    // ∇x = σ_0'(x) ⊙ W_0ᵀ ∇z_0 against central differences of the loss.
    let pulled = params.weights[0].matvec_transposed(&layer_order[0])?;
    let grad_x = DenseVector::from_fn(8, |j| {
        pulled.get(j) * params.activations[0].derivative(x.get(j))
    });
    let loss = |v: &DenseVector<f64>| {
        let y = params.forward(v).expect("dims");
        0.5 * y.dot(&y).expect("dims")
    };
    let mut fd_err: f64 = 0.0;
    for j in 0..8 {
        let h = 1e-6;
        let (mut p, mut m) = (x.clone(), x.clone());
        p.set(j, x.get(j) + h);
        m.set(j, x.get(j) - h);
        let fd = (loss(&p) - loss(&m)) / (2.0 * h);
        fd_err = fd_err.max((fd - grad_x.get(j)).abs() / grad_x.norm_inf().max(1.0));
    }
    Ok(CheckResult::new(
        "backward-exact",
        exact <= ORACLE_TOL && fd_err <= JACOBIAN_TOL,
        format!("backprop relative error {exact:.3e}, finite-difference error {fd_err:.3e}"),
    ))
}

fn check_linear_newton(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = (0..50)
        .map(|_| DenseMatrix::from_fn(3, 3, |_, _| 0.5 * rng.random_range(-1.0..1.0)))
        .collect();
    let offsets = (0..50).map(|_| random_vector(&mut rng, 3)).collect();
    let chain = AffineChain::new(random_vector(&mut rng, 3), ops, offsets)?;
    let guess = first_state_copy(&chain);
    let (z, report) = newton_solve(&chain, guess, &NewtonConfig::forward_pass())?;
    let err = stacked_relative_error(&z, &chain.rollout());

    let den = ZeroDenoiser { dim: 4 };
    let schedule = NoiseSchedule::<f64>::ddpm_default(64)?;
    let tape = NoiseTape::sample(64, 4, seed);
    let seq = diffusion_sequence(&den, &schedule, &tape, random_vector(&mut rng, 4))?;
    let (zd, rd) = newton_solve(
        &seq,
        anchored_guess(&seq, &DenseVector::zeros(4)),
        &NewtonConfig::diffusion(),
    )?;
    let oracle = seq.rollout();
    let derr = zd[64].sub(&oracle[64])?.norm_inf();
    Ok(CheckResult::new(
        "linear-newton",
        report.iterations == 1 && rd.iterations == 1 && err <= ORACLE_TOL && derr <= ORACLE_TOL,
        format!(
            "affine chain {} iteration(s) error {err:.3e}, zero-denoiser chain {} iteration(s) error {derr:.3e}",
            report.iterations, rd.iterations
        ),
    ))
}

fn check_determinism(seed: u64) -> Result<CheckResult> {
    let counts = [1, 2, 4, 8];
    let pools: Vec<Workers> = counts
        .iter()
        .map(|&c| Workers::new(c))
        .collect::<Result<_>>()?;
    let system = random_system(300, 4, seed);
    let reference = pcr_solve(system.clone(), &pools[0]);
    let pcr_same = pools[1..]
        .iter()
        .all(|w| pcr_solve(system.clone(), w) == reference);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = uniform_mlp_with::<f64>(6, 6, 100, Activation::Tanh, Init::FanInUniform, seed)?;
    let seq = mlp_forward_sequence(&params, random_vector(&mut rng, 6))?;
    let config = NewtonConfig::forward_pass();
    let run = |w: &Workers| {
        newton_solve_with(&seq, first_state_copy(&seq), &config, w).map(|(z, r, _)| (z, r))
    };
    let first = run(&pools[0])?;
    let mut newton_same = true;
    for w in &pools[1..] {
        newton_same &= run(w)? == first;
    }
    Ok(CheckResult::new(
        "determinism",
        pcr_same && newton_same,
        format!(
            "pcr outputs {} and newton outputs {} across 1, 2, 4, 8 workers",
            if pcr_same { "identical" } else { "differ" },
            if newton_same { "identical" } else { "differ" }
        ),
    ))
}

/// Runs every check with seeds derived from `config.seed`.
pub fn verify_cmd(config: &ExperimentConfig) -> Result<VerifyReport> {
    config.validate()?;
    let workers = config.worker_pool()?;
    let seed = config.seed;
    let solver = |s: BlockBidiagSystem<f64>| pcr_solve(s, &workers).0;
    Ok(VerifyReport {
        checks: vec![
            check_oracle_equivalence(&solver, ORACLE_SYSTEMS, seed),
            check_barriers(seed),
            check_jacobians(seed)?,
            check_backward(seed, &workers)?,
            check_linear_newton(seed)?,
            check_determinism(seed)?,
        ],
    })
}
