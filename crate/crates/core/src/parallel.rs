//! Explicit worker pools.
//!
//! Every parallel region in the crate maps an index range to independent
//! results and collects them in index order, so the arithmetic performed for
//! each index never depends on the worker count.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct Workers {
    count: usize,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Workers {
    /// A pool with `count` threads. `count == 1` runs inline on the caller.
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("worker count must be >= 1".into()));
        }
        if count == 1 {
            return Ok(Self::sequential());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .thread_name(|i| format!("deeppcr-worker-{i}"))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
        Ok(Self {
            count,
            pool: Some(Arc::new(pool)),
        })
    }

    pub fn sequential() -> Self {
        Self {
            count: 1,
            pool: None,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Evaluates `f` on every index of `range`; results are in index order.
    pub fn map<R, F>(&self, range: Range<usize>, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match &self.pool {
            None => range.map(f).collect(),
            Some(pool) => pool.install(|| range.into_par_iter().map(f).collect()),
        }
    }
}

impl Default for Workers {
    fn default() -> Self {
        Self::sequential()
    }
}

impl fmt::Debug for Workers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Workers")
            .field("count", &self.count)
            .finish()
    }
}
