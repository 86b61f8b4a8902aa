//! Newton outer loop over the collated sequence residual.
//!
//! Each iteration linearizes `F(z) = 0` at the current iterate, which gives a
//! block-bidiagonal system with `-J_{f_l}` below the diagonal and
//! `f_l(z_{l-1}) - z_l` on the right, solves it with [`pcr_solve`] and adds
//! the correction. Convergence is tested on the infinity norm of the residual
//! at the updated iterate.

use std::time::{Duration, Instant};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{stacked_norm_inf, DenseVector};
use crate::parallel::Workers;
use crate::pcr::{pcr_solve, BlockBidiagSystem, PcrTrace};
use crate::scalar::Scalar;
use crate::sequences::MarkovSequence;

/// Residual growth factor, relative to the initial residual, treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonConfig<T> {
    pub max_iters: usize,
    /// Threshold on the residual infinity norm.
    pub abs_tol: T,
    /// Threshold on the residual infinity norm divided by the initial one.
    pub rel_tol: T,
    /// Run exactly this many iterations and ignore the tolerances.
    pub fixed_iters: Option<usize>,
}

impl<T: Scalar> NewtonConfig<T> {
    /// Forward-pass defaults: 15 iterations, both tolerances `1e-4`.
    pub fn forward_pass() -> Self {
        Self {
            max_iters: 15,
            abs_tol: T::lit(1e-4),
            rel_tol: T::lit(1e-4),
            fixed_iters: None,
        }
    }

    /// Diffusion defaults: 30 iterations, both tolerances `1e-4`.
    pub fn diffusion() -> Self {
        Self {
            max_iters: 30,
            ..Self::forward_pass()
        }
    }

    pub fn fixed(iters: usize) -> Self {
        Self {
            fixed_iters: Some(iters),
            ..Self::forward_pass()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.abs_tol > T::zero()) || !(self.rel_tol > T::zero()) {
            return Err(Error::InvalidArgument(
                "newton tolerances must be > 0".into(),
            ));
        }
        if self.fixed_iters == Some(0) {
            return Err(Error::InvalidArgument("fixed_iters must be >= 1".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for NewtonConfig<T> {
    fn default() -> Self {
        Self::forward_pass()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    AbsTol,
    RelTol,
    MaxIters,
    FixedIters,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::AbsTol => "abs_tol",
            StopReason::RelTol => "rel_tol",
            StopReason::MaxIters => "max_iters",
            StopReason::FixedIters => "fixed_iters",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonReport<T> {
    pub iterations: usize,
    /// Residual infinity norm at the iterate produced by each iteration.
    pub residual_history: Vec<T>,
    /// Residual infinity norm of the initial guess.
    pub initial_residual: T,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// PCR barriers summed over all inner solves.
    pub barriers: usize,
}

impl<T: Scalar> NewtonReport<T> {
    pub fn final_residual(&self) -> T {
        *self
            .residual_history
            .last()
            .expect("at least one iteration")
    }
}

/// Wall-clock split of a Newton solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct NewtonTimings {
    /// Jacobian evaluation and system construction.
    pub assembly: Duration,
    /// PCR inner solves.
    pub pcr: Duration,
    /// Residual evaluations.
    pub residual: Duration,
}

/// Collated residual in right-hand-side form: block 0 is `f_0(x) - z_0`,
/// block `l` is `f_l(z_{l-1}) - z_l`.
pub fn residual<T: Scalar, S: MarkovSequence<T> + ?Sized>(
    seq: &S,
    z: &[DenseVector<T>],
) -> Result<Vec<DenseVector<T>>> {
    residual_with(seq, z, &Workers::sequential())
}

pub fn residual_with<T: Scalar, S: MarkovSequence<T> + ?Sized>(
    seq: &S,
    z: &[DenseVector<T>],
    workers: &Workers,
) -> Result<Vec<DenseVector<T>>> {
    check_dims(seq, z)?;
    let blocks = workers.map(0..seq.len() + 1, |l| {
        let target = if l == 0 {
            seq.initial_value()
        } else {
            seq.step(l, &z[l - 1])
        };
        target.sub(&z[l])
    });
    blocks.into_iter().collect()
}

/// Linearized system at `z`: `sub_ops[l] = -J_{f_l}(z_{l-1})`, rhs from [`residual`].
pub fn assemble_linearized_system<T: Scalar, S: MarkovSequence<T> + ?Sized>(
    seq: &S,
    z: &[DenseVector<T>],
) -> Result<BlockBidiagSystem<T>> {
    let rhs = residual(seq, z)?;
    assemble_with_rhs(seq, z, rhs, &Workers::sequential())
}

fn assemble_with_rhs<T: Scalar, S: MarkovSequence<T> + ?Sized>(
    seq: &S,
    z: &[DenseVector<T>],
    rhs: Vec<DenseVector<T>>,
    workers: &Workers,
) -> Result<BlockBidiagSystem<T>> {
    let ops = workers.map(1..seq.len() + 1, |l| {
        let mut jac = seq.step_jacobian(l, &z[l - 1]);
        for v in jac.as_mut_slice() {
            *v = -*v;
        }
        jac
    });
    BlockBidiagSystem::new(ops, rhs)
}

fn check_dims<T: Scalar, S: MarkovSequence<T> + ?Sized>(
    seq: &S,
    z: &[DenseVector<T>],
) -> Result<()> {
    if z.len() != seq.len() + 1 {
        return Err(shape_err("stacked states", seq.len() + 1, z.len()));
    }
    for (l, block) in z.iter().enumerate() {
        if block.dim() != seq.state_dim(l) {
            return Err(shape_err(
                "stacked state block",
                format!("dim {} at block {l}", seq.state_dim(l)),
                block.dim(),
            ));
        }
    }
    Ok(())
}

/// Solves an affine sequence with one linearization at zero and one PCR pass.
pub fn solve_linear_chain<T: Scalar, S: MarkovSequence<T> + ?Sized>(
    seq: &S,
    workers: &Workers,
) -> Result<(Vec<DenseVector<T>>, PcrTrace)> {
    if !seq.is_linear() {
        return Err(Error::InvalidArgument(
            "solve_linear_chain needs an affine sequence".into(),
        ));
    }
    let zero: Vec<DenseVector<T>> = (0..=seq.len())
        .map(|l| DenseVector::zeros(seq.state_dim(l)))
        .collect();
    let rhs = residual_with(seq, &zero, workers)?;
    let system = assemble_with_rhs(seq, &zero, rhs, workers)?;
    Ok(pcr_solve(system, workers))
}

/// Newton solve on a single worker.
pub fn newton_solve<T: Scalar, S: MarkovSequence<T> + ?Sized>(
    seq: &S,
    z0: Vec<DenseVector<T>>,
    config: &NewtonConfig<T>,
) -> Result<(Vec<DenseVector<T>>, NewtonReport<T>)> {
    newton_solve_with(seq, z0, config, &Workers::sequential()).map(|(z, r, _)| (z, r))
}

/// Newton solve with assembly and PCR spread over `workers`.
pub fn newton_solve_with<T: Scalar, S: MarkovSequence<T> + ?Sized>(
    seq: &S,
    z0: Vec<DenseVector<T>>,
    config: &NewtonConfig<T>,
    workers: &Workers,
) -> Result<(Vec<DenseVector<T>>, NewtonReport<T>, NewtonTimings)> {
    config.validate()?;
    check_dims(seq, &z0)?;
    let mut timings = NewtonTimings::default();

    let mut z = z0;
    let t = Instant::now();
    let mut rhs = residual_with(seq, &z, workers)?;
    timings.residual += t.elapsed();
    let initial = stacked_norm_inf(&rhs);
    if !initial.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            reason: "non-finite residual at initial guess".into(),
        });
    }
    let blowup = initial * T::lit(DIVERGENCE_FACTOR);

    let mut history = Vec::new();
    let mut barriers = 0;
    let limit = config.fixed_iters.unwrap_or(config.max_iters);
    let stop_reason = loop {
        let iteration = history.len() + 1;

        let t = Instant::now();
        let system = assemble_with_rhs(seq, &z, rhs, workers)?;
        timings.assembly += t.elapsed();

        let t = Instant::now();
        let (delta, trace) = pcr_solve(system, workers);
        timings.pcr += t.elapsed();
        barriers += trace.barrier_count;

        for (block, d) in z.iter_mut().zip(&delta) {
            block.add_assign(d)?;
        }
        if !delta.iter().all(DenseVector::is_finite) {
            return Err(Error::Divergence {
                iteration,
                reason: "non-finite newton update".into(),
            });
        }

        let t = Instant::now();
        rhs = residual_with(seq, &z, workers)?;
        timings.residual += t.elapsed();
        let res = stacked_norm_inf(&rhs);
        history.push(res);

        if !res.is_finite() {
            return Err(Error::Divergence {
                iteration,
                reason: "non-finite residual".into(),
            });
        }
        if initial > T::zero() && res > blowup {
            return Err(Error::Divergence {
                iteration,
                reason: format!("residual {res} exceeds {DIVERGENCE_FACTOR:e} x initial {initial}"),
            });
        }

        if config.fixed_iters.is_some() {
            if iteration == limit {
                break StopReason::FixedIters;
            }
            continue;
        }
        if res <= config.abs_tol {
            break StopReason::AbsTol;
        }
        if res <= config.rel_tol * initial {
            break StopReason::RelTol;
        }
        if iteration == limit {
            break StopReason::MaxIters;
        }
    };

    let last = *history.last().expect("at least one iteration");
    let converged = last <= config.abs_tol || last <= config.rel_tol * initial;
    let report = NewtonReport {
        iterations: history.len(),
        residual_history: history,
        initial_residual: initial,
        converged,
        stop_reason,
        barriers,
    };
    Ok((z, report, timings))
}
