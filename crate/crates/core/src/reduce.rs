//! Order-fixed reductions.
//!
//! Work is cut into chunks whose boundaries depend only on the item count.
//! Each chunk is folded sequentially and the chunk partials are merged by a
//! pairwise tree in index order, so the result is bit-identical whatever the
//! thread count.

use std::ops::Range;

/// Items per chunk for ensemble reductions.
pub const CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

pub fn chunks(n: usize) -> Vec<Range<usize>> {
    (0..n)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(n))
        .collect()
}

/// Merges `parts` pairwise: `((p0 p1) (p2 p3)) ...`.
pub fn pairwise<A>(mut parts: Vec<A>, merge: &impl Fn(A, A) -> A) -> Option<A> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

/// Runs `f` over each chunk range, serially or on the rayon pool, returning
/// the chunk results in index order.
pub fn map_chunks<A, F>(n: usize, exec: Execution, f: F) -> Vec<A>
where
    A: Send,
    F: Fn(Range<usize>) -> A + Sync + Send,
{
    let ranges = chunks(n);
    match exec {
        Execution::Serial => ranges.into_iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            ranges.into_par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => ranges.into_iter().map(f).collect(),
    }
}

/// Maps `f` over `0..n` one item at a time, keeping index order.
pub fn map_items<A, F>(n: usize, exec: Execution, f: F) -> Vec<A>
where
    A: Send,
    F: Fn(usize) -> A + Sync + Send,
{
    match exec {
        Execution::Serial => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => (0..n).map(f).collect(),
    }
}

/// Adds `b` into `a` element-wise.
pub(crate) fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
