//! Markovian sequences `z_l = f_l(z_{l-1})` and the shipped back-ends.

mod diffusion;
mod linear;
mod mlp;
mod resnet;

pub use diffusion::{
    diffusion_sequence, sinusoidal_embedding, Denoiser, DiffusionSequence, MlpDenoiser,
    NoiseSchedule, NoiseTape, ZeroDenoiser,
};
pub use linear::AffineChain;
pub use mlp::{
    mlp_backward_sequence, mlp_forward_sequence, param_gradients, MlpBackward, MlpForward,
};
pub use resnet::{resnet_collapsed_sequence, ResNetCollapsed};

use crate::linalg::{DenseMatrix, DenseVector};
use crate::scalar::Scalar;

/// A sequence of `L` steps over states `z_0..z_L`.
///
/// `step` and `step_jacobian` must be pure: Newton assembly calls them
/// concurrently for different `l`. Step indices run `1..=len()`.
pub trait MarkovSequence<T: Scalar>: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of `z_l`, for `l = 0..=len()`.
    fn state_dim(&self, l: usize) -> usize;

    /// `z_0 = f_0(x)`.
    fn initial_value(&self) -> DenseVector<T>;

    /// `f_l(z_{l-1})`.
    fn step(&self, l: usize, prev: &DenseVector<T>) -> DenseVector<T>;

    /// `J_{f_l}` at `z_{l-1}`, shape `state_dim(l) x state_dim(l-1)`.
    fn step_jacobian(&self, l: usize, prev: &DenseVector<T>) -> DenseMatrix<T>;

    /// True when every step is affine, so one Newton iteration is exact.
    fn is_linear(&self) -> bool {
        false
    }

    fn state_dims(&self) -> Vec<usize> {
        (0..=self.len()).map(|l| self.state_dim(l)).collect()
    }

    /// The sequential rollout `z_0..z_L`.
    fn rollout(&self) -> Vec<DenseVector<T>> {
        let mut states = Vec::with_capacity(self.len() + 1);
        states.push(self.initial_value());
        for l in 1..=self.len() {
            let next = self.step(l, &states[l - 1]);
            states.push(next);
        }
        states
    }
}

/// Initial guess that repeats `z_0` in every block whose width matches it.
pub fn first_state_copy<T: Scalar, S: MarkovSequence<T> + ?Sized>(seq: &S) -> Vec<DenseVector<T>> {
    let z0 = seq.initial_value();
    (0..=seq.len())
        .map(|l| {
            let d = seq.state_dim(l);
            if d == z0.dim() {
                z0.clone()
            } else {
                DenseVector::zeros(d)
            }
        })
        .collect()
}

/// Initial guess with `anchor` in every block and the exact `z_0`.
pub fn anchored_guess<T: Scalar, S: MarkovSequence<T> + ?Sized>(
    seq: &S,
    anchor: &DenseVector<T>,
) -> Vec<DenseVector<T>> {
    let mut guess: Vec<_> = (0..=seq.len()).map(|_| anchor.clone()).collect();
    guess[0] = seq.initial_value();
    guess
}

/// Mean over a batch of stacked states, block by block.
pub fn batch_mean<T: Scalar>(stacks: &[Vec<DenseVector<T>>]) -> Option<Vec<DenseVector<T>>> {
    let first = stacks.first()?;
    let inv = T::one() / T::from_usize(stacks.len())?;
    Some(
        (0..first.len())
            .map(|l| {
                let mut acc = DenseVector::zeros(first[l].dim());
                for s in stacks {
                    acc.add_assign(&s[l]).expect("batch stacks share dims");
                }
                acc.scaled(inv)
            })
            .collect(),
    )
}

/// Central-difference Jacobian of `seq.step(l, .)` at `prev` with step `h`.
pub fn finite_difference_jacobian<T: Scalar, S: MarkovSequence<T> + ?Sized>(
    seq: &S,
    l: usize,
    prev: &DenseVector<T>,
    h: f64,
) -> DenseMatrix<T> {
    let rows = seq.state_dim(l);
    let cols = prev.dim();
    let h = T::lit(h);
    let mut jac = DenseMatrix::zeros(rows, cols);
    for j in 0..cols {
        let mut plus = prev.clone();
        let mut minus = prev.clone();
        plus.set(j, prev.get(j) + h);
        minus.set(j, prev.get(j) - h);
        let diff = seq
            .step(l, &plus)
            .sub(&seq.step(l, &minus))
            .expect("step keeps its dimension");
        for i in 0..rows {
            jac.set(i, j, diff.get(i) / (h + h));
        }
    }
    jac
}
