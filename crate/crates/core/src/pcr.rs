//! Block-bidiagonal systems and their parallel cyclic reduction.
//!
//! Row `l` of a system reads `δz_l + A_l δz_{l-1} = r_l` for `l = 1..=L`, with
//! row 0 fixed to `δz_0 = r_0`. Diagonal blocks are identity and never stored.
//! `A_l` is the literal sub-diagonal block, so a Newton system stores `-J_{f_l}`.
//!
//! One reduction step at distance `i` substitutes row `l - i` into row `l`:
//!
//! ```text
//! r_l <- r_l - A_l r_{l-i}
//! A_l <- -A_l A_{l-i}
//! ```
//!
//! Every row reads only pre-step values, so rows within a step are independent
//! and the result does not depend on how they are scheduled.

use crate::error::{shape_err, Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::parallel::Workers;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockBidiagSystem<T> {
    /// `sub_ops[l]` couples row `l` to row `l - 1`; index 0 is always `None`.
    /// `None` also marks a row that has been fully decoupled.
    sub_ops: Vec<Option<DenseMatrix<T>>>,
    rhs: Vec<DenseVector<T>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PcrTrace {
    /// Sequential reduction steps, i.e. synchronization barriers.
    pub barrier_count: usize,
    /// Number of rows that performed a substitution in each step.
    pub row_update_counts: Vec<usize>,
}

impl<T: Scalar> BlockBidiagSystem<T> {
    /// `sub_ops[k]` is the block of row `k + 1`; `rhs` holds `r_0..r_L`.
    pub fn new(sub_ops: Vec<DenseMatrix<T>>, rhs: Vec<DenseVector<T>>) -> Result<Self> {
        Self::from_parts(
            std::iter::once(None)
                .chain(sub_ops.into_iter().map(Some))
                .collect(),
            rhs,
        )
    }

    /// Like [`BlockBidiagSystem::new`], but `None` entries are zero blocks.
    pub fn from_parts(
        sub_ops: Vec<Option<DenseMatrix<T>>>,
        rhs: Vec<DenseVector<T>>,
    ) -> Result<Self> {
        if rhs.is_empty() {
            return Err(Error::InvalidArgument("system needs at least row 0".into()));
        }
        if sub_ops.len() != rhs.len() {
            return Err(shape_err("BlockBidiagSystem", rhs.len(), sub_ops.len()));
        }
        if sub_ops[0].is_some() {
            return Err(Error::InvalidArgument(
                "row 0 has no sub-diagonal block".into(),
            ));
        }
        for l in 1..rhs.len() {
            if let Some(a) = &sub_ops[l] {
                let expected = (rhs[l].dim(), rhs[l - 1].dim());
                if a.shape() != expected {
                    return Err(shape_err(
                        "BlockBidiagSystem sub-diagonal block",
                        format!("{expected:?} at row {l}"),
                        format!("{:?}", a.shape()),
                    ));
                }
            }
        }
        Ok(Self { sub_ops, rhs })
    }

    /// Number of coupled equations `L` (row 0 excluded).
    pub fn len(&self) -> usize {
        self.rhs.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dims(&self) -> Vec<usize> {
        self.rhs.iter().map(DenseVector::dim).collect()
    }

    /// Sub-diagonal block of row `l`, or `None` if row `l` is decoupled.
    pub fn sub_op(&self, l: usize) -> Option<&DenseMatrix<T>> {
        self.sub_ops[l].as_ref()
    }

    pub fn rhs(&self, l: usize) -> &DenseVector<T> {
        &self.rhs[l]
    }

    pub fn rhs_blocks(&self) -> &[DenseVector<T>] {
        &self.rhs
    }

    pub fn is_decoupled(&self) -> bool {
        self.sub_ops.iter().all(Option::is_none)
    }

    /// Residual `r_l - δz_l - A_l δz_{l-1}` per row, for checking a candidate solution.
    pub fn residual(&self, x: &[DenseVector<T>]) -> Result<Vec<DenseVector<T>>> {
        if x.len() != self.rhs.len() {
            return Err(shape_err(
                "BlockBidiagSystem::residual",
                self.rhs.len(),
                x.len(),
            ));
        }
        (0..self.rhs.len())
            .map(|l| {
                let mut res = self.rhs[l].sub(&x[l])?;
                if let Some(a) = &self.sub_ops[l] {
                    res = res.sub(&a.matvec(&x[l - 1])?)?;
                }
                Ok(res)
            })
            .collect()
    }

    /// Scalars stored by the operator blocks and right-hand sides.
    pub fn storage_scalars(&self) -> usize {
        let ops: usize = self
            .sub_ops
            .iter()
            .flatten()
            .map(|a| a.rows() * a.cols())
            .sum();
        ops + self.rhs.iter().map(DenseVector::dim).sum::<usize>()
    }

    /// Fixed per-row bookkeeping (block headers), independent of block size.
    /// Dominates [`Self::storage_scalars`] for blocks of width 1 or 2.
    pub fn header_bytes(&self) -> usize {
        self.sub_ops.len()
            * (std::mem::size_of::<Option<DenseMatrix<T>>>()
                + std::mem::size_of::<DenseVector<T>>())
    }

    /// Substitutes the known row 0 into row 1.
    fn fold_row_zero(&mut self) {
        if !self.is_empty() {
            if let Some(a1) = self.sub_ops[1].take() {
                let coupled = a1.matvec(&self.rhs[0]).expect("validated block shape");
                self.rhs[1] = self.rhs[1].sub(&coupled).expect("validated block shape");
            }
        }
    }

    /// One double-buffered reduction step over rows `first..=L`.
    /// Returns the number of rows that substituted.
    fn reduce_rows(&mut self, distance: usize, first: usize, workers: &Workers) -> usize {
        let last = self.len();
        if first > last {
            return 0;
        }
        let snapshot = &*self;
        let updates: Vec<Option<RowUpdate<T>>> =
            workers.map(first..last + 1, |l| snapshot.reduced_row(l, distance));
        let mut count = 0;
        for (l, update) in (first..=last).zip(updates) {
            if let Some((a, r)) = update {
                self.sub_ops[l] = a;
                self.rhs[l] = r;
                count += 1;
            }
        }
        count
    }

    /// New `(A_l, r_l)` for row `l`, or `None` if the row is already decoupled.
    fn reduced_row(&self, l: usize, distance: usize) -> Option<RowUpdate<T>> {
        let a = self.sub_ops[l].as_ref()?;
        let partner = l - distance;
        let r = self.rhs[l]
            .sub(&a.matvec(&self.rhs[partner]).expect("validated block shape"))
            .expect("validated block shape");
        let next = self.sub_ops[partner].as_ref().map(|ap| {
            let mut prod = a.matmul(ap).expect("validated block shape");
            for v in prod.as_mut_slice() {
                *v = -*v;
            }
            prod
        });
        Some((next, r))
    }
}

/// Replacement `(A_l, r_l)` for one row.
type RowUpdate<T> = (Option<DenseMatrix<T>>, DenseVector<T>);

/// Solves the system with cyclic reduction, running rows of each step on `workers`.
///
/// Row 0 is known, so it is substituted into row 1 while the right-hand sides
/// are set up. After that, steps at distances `1, 2, 4, ...` below `L` leave
/// every row decoupled: exactly `ceil(log2 L)` barriers.
pub fn pcr_solve<T: Scalar>(
    mut system: BlockBidiagSystem<T>,
    workers: &Workers,
) -> (Vec<DenseVector<T>>, PcrTrace) {
    let len = system.len();
    system.fold_row_zero();

    let mut trace = PcrTrace::default();
    let mut distance = 1;
    while distance < len {
        let updated = system.reduce_rows(distance, distance + 1, workers);
        trace.barrier_count += 1;
        trace.row_update_counts.push(updated);
        distance *= 2;
    }
    debug_assert!(system.is_decoupled());
    (system.rhs, trace)
}

/// Sequential forward substitution: `x_0 = r_0`, `x_l = r_l - A_l x_{l-1}`.
pub fn forward_substitution_solve<T: Scalar>(system: &BlockBidiagSystem<T>) -> Vec<DenseVector<T>> {
    let mut out: Vec<DenseVector<T>> = Vec::with_capacity(system.rhs.len());
    out.push(system.rhs[0].clone());
    for l in 1..system.rhs.len() {
        let x = match &system.sub_ops[l] {
            Some(a) => system.rhs[l]
                .sub(&a.matvec(&out[l - 1]).expect("validated block shape"))
                .expect("validated block shape"),
            None => system.rhs[l].clone(),
        };
        out.push(x);
    }
    out
}

/// A single reduction step at `distance` on the raw system.
///
/// Every row with `l - distance >= 0` substitutes row `l - distance`; a
/// coupling that lands on row 0 folds the known `r_0` and clears the block.
/// Rows with `l < distance` are returned unchanged.
pub fn pcr_reduce_step<T: Scalar>(
    system: &BlockBidiagSystem<T>,
    distance: usize,
) -> Result<BlockBidiagSystem<T>> {
    if distance == 0 || !distance.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "reduction distance must be a power of two, got {distance}"
        )));
    }
    let mut next = system.clone();
    next.reduce_rows(distance, distance, &Workers::sequential());
    Ok(next)
}

/// `ceil(log2 len)`, zero for `len <= 1`.
pub fn expected_barriers(len: usize) -> usize {
    if len <= 1 {
        0
    } else {
        (usize::BITS - (len - 1).leading_zeros()) as usize
    }
}
