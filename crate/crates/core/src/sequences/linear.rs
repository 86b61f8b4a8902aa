use crate::error::{shape_err, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::scalar::Scalar;

use super::MarkovSequence;

/// `z_l = M_l z_{l-1} + c_l` with an explicit `z_0`.
///
/// Adjoint (backward) chains are built as offset-free instances.
#[derive(Clone, Debug)]
pub struct AffineChain<T> {
    initial: DenseVector<T>,
    ops: Vec<DenseMatrix<T>>,
    offsets: Option<Vec<DenseVector<T>>>,
}

impl<T: Scalar> AffineChain<T> {
    pub fn new(
        initial: DenseVector<T>,
        ops: Vec<DenseMatrix<T>>,
        offsets: Vec<DenseVector<T>>,
    ) -> Result<Self> {
        if offsets.len() != ops.len() {
            return Err(shape_err("AffineChain offsets", ops.len(), offsets.len()));
        }
        for (m, c) in ops.iter().zip(&offsets) {
            if c.dim() != m.rows() {
                return Err(shape_err("AffineChain offset", m.rows(), c.dim()));
            }
        }
        let mut chain = Self::linear(initial, ops)?;
        chain.offsets = Some(offsets);
        Ok(chain)
    }

    /// `z_l = M_l z_{l-1}`.
    pub fn linear(initial: DenseVector<T>, ops: Vec<DenseMatrix<T>>) -> Result<Self> {
        let mut dim = initial.dim();
        for (k, m) in ops.iter().enumerate() {
            if m.cols() != dim {
                return Err(shape_err(
                    "AffineChain operator",
                    format!("{dim} columns at step {}", k + 1),
                    m.cols(),
                ));
            }
            dim = m.rows();
        }
        Ok(Self {
            initial,
            ops,
            offsets: None,
        })
    }

    pub fn operators(&self) -> &[DenseMatrix<T>] {
        &self.ops
    }
}

impl<T: Scalar> MarkovSequence<T> for AffineChain<T> {
    fn len(&self) -> usize {
        self.ops.len()
    }

    fn state_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.initial.dim()
        } else {
            self.ops[l - 1].rows()
        }
    }

    fn initial_value(&self) -> DenseVector<T> {
        self.initial.clone()
    }

    fn step(&self, l: usize, prev: &DenseVector<T>) -> DenseVector<T> {
        let mut out = self.ops[l - 1].matvec(prev).expect("chain dims validated");
        if let Some(offsets) = &self.offsets {
            out.add_assign(&offsets[l - 1])
                .expect("chain dims validated");
        }
        out
    }

    fn step_jacobian(&self, l: usize, _prev: &DenseVector<T>) -> DenseMatrix<T> {
        self.ops[l - 1].clone()
    }

    fn is_linear(&self) -> bool {
        true
    }
}
