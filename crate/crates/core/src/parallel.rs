//! Deterministic reductions.
//!
//! A [`ReductionPlan`] fixes how a sequence is combined: contiguous chunks of
//! `chunk` elements are folded left to right, and the chunk partials are then
//! paired as a balanced binary tree (`(0,1), (2,3), ...`, odd tail carried
//! up). The shape depends only on the length and the chunk size, so the
//! result is bitwise identical whatever the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default number of elements folded sequentially before tree pairing.
pub const DEFAULT_CHUNK: usize = 4096;

/// Environment variable read by [`configured_threads`].
pub const THREADS_ENV: &str = "GLSHAP_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionPlan {
    len: usize,
    chunk: usize,
}

impl ReductionPlan {
    pub fn new(len: usize) -> Result<Self> {
        Self::with_chunk(len, DEFAULT_CHUNK)
    }

    pub fn with_chunk(len: usize, chunk: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidInput(
                "reduction over an empty sequence".into(),
            ));
        }
        if chunk == 0 {
            return Err(Error::InvalidInput(
                "reduction chunk size must be positive".into(),
            ));
        }
        Ok(Self { len, chunk })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn chunk(&self) -> usize {
        self.chunk
    }

    pub fn chunk_count(&self) -> usize {
        self.len.div_ceil(self.chunk)
    }

    fn chunk_range(&self, c: usize) -> std::ops::Range<usize> {
        let start = c * self.chunk;
        start..(start + self.chunk).min(self.len)
    }
}

/// Combine `values` with `op` following the fixed shape of `plan`.
pub fn reduce<T, F>(values: &[T], op: F, plan: &ReductionPlan) -> Result<T>
where
    T: Clone + Send + Sync,
    F: Fn(&T, &T) -> T + Sync,
{
    if values.len() != plan.len {
        return Err(Error::LengthMismatch {
            expected: plan.len,
            found: values.len(),
        });
    }
    Ok(reduce_map(|i| values[i].clone(), op, plan))
}

/// Like [`reduce`], but the element at index `i` is produced by `leaf(i)`.
pub fn reduce_map<T, L, F>(leaf: L, op: F, plan: &ReductionPlan) -> T
where
    T: Send,
    L: Fn(usize) -> T + Sync,
    F: Fn(&T, &T) -> T + Sync,
{
    let fold_chunk = |c: usize| {
        let mut range = plan.chunk_range(c);
        let first = range.next().expect("chunks are non-empty");
        range.fold(leaf(first), |acc, i| op(&acc, &leaf(i)))
    };
    let chunks = plan.chunk_count();
    let partials: Vec<T> = if chunks == 1 {
        vec![fold_chunk(0)]
    } else {
        (0..chunks).into_par_iter().map(fold_chunk).collect()
    };
    pair_up(partials, &op)
}

fn pair_up<T, F: Fn(&T, &T) -> T>(mut level: Vec<T>, op: &F) -> T {
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(op(&a, &b)),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop().expect("non-empty level")
}

/// Worker count from `GLSHAP_THREADS`, if set to a positive integer.
pub fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}
