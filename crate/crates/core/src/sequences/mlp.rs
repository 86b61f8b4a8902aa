use crate::error::{shape_err, Result};
use crate::linalg::{outer, DenseMatrix, DenseVector};
use crate::nn::{MlpGrads, MlpParams};
use crate::scalar::Scalar;

use super::MarkovSequence;

/// Forward pass of an MLP on one input, as a sequence over layers.
#[derive(Clone, Debug)]
pub struct MlpForward<'a, T> {
    params: &'a MlpParams<T>,
    input: DenseVector<T>,
}

pub fn mlp_forward_sequence<T: Scalar>(
    params: &MlpParams<T>,
    input: DenseVector<T>,
) -> Result<MlpForward<'_, T>> {
    if input.dim() != params.input_dim() {
        return Err(shape_err(
            "mlp_forward_sequence input",
            params.input_dim(),
            input.dim(),
        ));
    }
    Ok(MlpForward { params, input })
}

impl<T: Scalar> MarkovSequence<T> for MlpForward<'_, T> {
    fn len(&self) -> usize {
        self.params.depth()
    }

    fn state_dim(&self, l: usize) -> usize {
        self.params.width(l)
    }

    fn initial_value(&self) -> DenseVector<T> {
        self.params
            .layer_output(0, &self.input)
            .expect("input dim validated")
    }

    fn step(&self, l: usize, prev: &DenseVector<T>) -> DenseVector<T> {
        self.params
            .layer_output(l, prev)
            .expect("layer dims validated")
    }

    fn step_jacobian(&self, l: usize, prev: &DenseVector<T>) -> DenseMatrix<T> {
        self.params
            .layer_jacobian(l, prev)
            .expect("layer dims validated")
    }

    fn is_linear(&self) -> bool {
        self.params.is_linear()
    }
}

/// Adjoint chain of an MLP forward pass, indexed from the output backwards.
///
/// State `k` is `∇_{z_{L-k}} c`; step `k` multiplies by `J_{f_{L-k+1}}ᵀ`
/// evaluated at the forward activation `ẑ_{L-k}`.
#[derive(Clone, Debug)]
pub struct MlpBackward<'a, T> {
    params: &'a MlpParams<T>,
    states: &'a [DenseVector<T>],
    output_grad: DenseVector<T>,
}

pub fn mlp_backward_sequence<'a, T: Scalar>(
    params: &'a MlpParams<T>,
    forward_states: &'a [DenseVector<T>],
    output_grad: DenseVector<T>,
) -> Result<MlpBackward<'a, T>> {
    if forward_states.len() != params.depth() + 1 {
        return Err(shape_err(
            "mlp_backward_sequence states",
            params.depth() + 1,
            forward_states.len(),
        ));
    }
    for (l, z) in forward_states.iter().enumerate() {
        if z.dim() != params.width(l) {
            return Err(shape_err(
                "mlp_backward_sequence state",
                params.width(l),
                z.dim(),
            ));
        }
    }
    if output_grad.dim() != params.output_dim() {
        return Err(shape_err(
            "mlp_backward_sequence output_grad",
            params.output_dim(),
            output_grad.dim(),
        ));
    }
    Ok(MlpBackward {
        params,
        states: forward_states,
        output_grad,
    })
}

impl<T: Scalar> MlpBackward<'_, T> {
    fn layer(&self, k: usize) -> usize {
        self.params.depth() - k + 1
    }

    /// Reorders a solved adjoint stack into layer order `∇_{z_0}..∇_{z_L}`.
    pub fn to_layer_order(adjoint: Vec<DenseVector<T>>) -> Vec<DenseVector<T>> {
        let mut v = adjoint;
        v.reverse();
        v
    }
}

impl<T: Scalar> MarkovSequence<T> for MlpBackward<'_, T> {
    fn len(&self) -> usize {
        self.params.depth()
    }

    fn state_dim(&self, k: usize) -> usize {
        self.params.width(self.params.depth() - k)
    }

    fn initial_value(&self) -> DenseVector<T> {
        self.output_grad.clone()
    }

    fn step(&self, k: usize, prev: &DenseVector<T>) -> DenseVector<T> {
        let l = self.layer(k);
        let back = self.params.weights[l]
            .matvec_transposed(prev)
            .expect("layer dims validated");
        back.hadamard(&self.params.activations[l].derivative_vec(&self.states[l - 1]))
            .expect("layer dims validated")
    }

    fn step_jacobian(&self, k: usize, _prev: &DenseVector<T>) -> DenseMatrix<T> {
        let l = self.layer(k);
        self.params.weights[l]
            .transpose()
            .scale_rows(&self.params.activations[l].derivative_vec(&self.states[l - 1]))
            .expect("layer dims validated")
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// `∇W_l = ∇_{z_l} ⊗ σ_l(ẑ_{l-1})`, `∇b_l = ∇_{z_l}`, with the raw input in place of `ẑ_{-1}`.
///
/// `adjoint` is in layer order, `∇_{z_0}..∇_{z_L}`.
pub fn param_gradients<T: Scalar>(
    params: &MlpParams<T>,
    input: &DenseVector<T>,
    forward_states: &[DenseVector<T>],
    adjoint: &[DenseVector<T>],
) -> Result<MlpGrads<T>> {
    let layers = params.depth() + 1;
    if forward_states.len() != layers || adjoint.len() != layers {
        return Err(shape_err(
            "param_gradients stacks",
            layers,
            format!(
                "{} states, {} adjoints",
                forward_states.len(),
                adjoint.len()
            ),
        ));
    }
    let mut grads = params.zero_grads();
    for l in 0..layers {
        let layer_input = if l == 0 {
            input
        } else {
            &forward_states[l - 1]
        };
        let activated = params.activations[l].apply_vec(layer_input);
        let w = outer(&adjoint[l], &activated);
        if w.shape() != params.weights[l].shape() {
            return Err(shape_err(
                "param_gradients layer",
                format!("{:?}", params.weights[l].shape()),
                format!("{:?}", w.shape()),
            ));
        }
        grads.weights[l] = w;
        grads.biases[l] = adjoint[l].clone();
    }
    Ok(grads)
}
