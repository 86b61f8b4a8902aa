use crate::error::{shape_err, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::nn::ResNetParams;
use crate::scalar::Scalar;

use super::MarkovSequence;

/// A ResNet body with each skip block folded into one step.
///
/// Macro-step `b` maps the block input `z_{(b-1)s}` to
/// `z_{bs} = f_{bs} ∘ … ∘ f_{(b-1)s+1}(z_{(b-1)s}) + z_{(b-1)s}`,
/// with Jacobian `I + J_{bs} ⋯ J_{(b-1)s+1}` taken along the block's own
/// intermediate activations. The first block adds `z_0`.
#[derive(Clone, Debug)]
pub struct ResNetCollapsed<'a, T> {
    params: &'a ResNetParams<T>,
    input: DenseVector<T>,
}

pub fn resnet_collapsed_sequence<T: Scalar>(
    params: &ResNetParams<T>,
    input: DenseVector<T>,
) -> Result<ResNetCollapsed<'_, T>> {
    if input.dim() != params.body.input_dim() {
        return Err(shape_err(
            "resnet_collapsed_sequence input",
            params.body.input_dim(),
            input.dim(),
        ));
    }
    Ok(ResNetCollapsed { params, input })
}

impl<'a, T: Scalar> ResNetCollapsed<'a, T> {
    pub fn params(&self) -> &'a ResNetParams<T> {
        self.params
    }

    pub fn input(&self) -> &DenseVector<T> {
        &self.input
    }

    fn first_layer(&self, block: usize) -> usize {
        (block - 1) * self.params.skip + 1
    }

    /// Activations `z_{(b-1)s+1}..z_{bs}` of block `b` (residual added to the last).
    pub fn block_states(&self, block: usize, block_input: &DenseVector<T>) -> Vec<DenseVector<T>> {
        let body = &self.params.body;
        let first = self.first_layer(block);
        let mut out: Vec<DenseVector<T>> = Vec::with_capacity(self.params.skip);
        for l in first..first + self.params.skip {
            let prev = out.last().unwrap_or(block_input);
            out.push(body.layer_output(l, prev).expect("resnet dims validated"));
        }
        out.last_mut()
            .expect("skip >= 1")
            .add_assign(block_input)
            .expect("resnet dims validated");
        out
    }
}

impl<T: Scalar> MarkovSequence<T> for ResNetCollapsed<'_, T> {
    fn len(&self) -> usize {
        self.params.blocks()
    }

    fn state_dim(&self, _l: usize) -> usize {
        self.params.width()
    }

    fn initial_value(&self) -> DenseVector<T> {
        self.params
            .body
            .layer_output(0, &self.input)
            .expect("input dim validated")
    }

    fn step(&self, block: usize, prev: &DenseVector<T>) -> DenseVector<T> {
        self.block_states(block, prev).pop().expect("skip >= 1")
    }

    fn step_jacobian(&self, block: usize, prev: &DenseVector<T>) -> DenseMatrix<T> {
        let body = &self.params.body;
        let first = self.first_layer(block);
        let mut z = prev.clone();
        let mut prod: Option<DenseMatrix<T>> = None;
        for l in first..first + self.params.skip {
            let j = body.layer_jacobian(l, &z).expect("resnet dims validated");
            prod = Some(match prod {
                None => j,
                Some(p) => j.matmul(&p).expect("resnet dims validated"),
            });
            if l + 1 < first + self.params.skip {
                z = body.layer_output(l, &z).expect("resnet dims validated");
            }
        }
        let mut jac = prod.expect("skip >= 1");
        for i in 0..jac.rows() {
            jac.set(i, i, jac.get(i, i) + T::one());
        }
        jac
    }

    fn is_linear(&self) -> bool {
        self.params.body.is_linear()
    }
}
