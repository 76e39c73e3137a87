//! Optional fan-out over a fixed number of workers with order-preserving collection.

use rayon::prelude::*;

use crate::error::{ConvError, Result};

/// `None` runs everything on the caller's thread.
pub struct Workers(Option<rayon::ThreadPool>);

impl Workers {
    pub fn new(jobs: usize) -> Result<Self> {
        if jobs <= 1 {
            return Ok(Workers(None));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map(|p| Workers(Some(p)))
            .map_err(|e| ConvError::InvalidInput(format!("cannot start {jobs} workers: {e}")))
    }

    /// `f(0..n)` collected in index order.
    pub fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T> {
        match &self.0 {
            None => (0..n).map(f).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}
