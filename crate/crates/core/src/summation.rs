//! Compensated accumulation.
//!
//! [`NeumaierSum`] is Kahan summation with the Neumaier branch, which also
//! stays accurate when an addend is larger in magnitude than the running sum.
//! [`ordered_chunked_sum`] partitions work into fixed-size chunks, sums each
//! chunk on the rayon pool and merges the partials left to right, so the
//! result is independent of the number of worker threads.

use rayon::prelude::*;

/// Chunk length used by [`ordered_chunked_sum`]. Fixed so the reduction tree
/// never depends on the thread count.
pub const REDUCTION_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial in, carrying its compensation term along.
    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for NeumaierSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        acc.extend(iter);
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<NeumaierSum>().value()
}

/// Sums `term(item)` over `items` in parallel with a deterministic reduction.
///
/// The first error encountered in item order is returned.
pub fn ordered_chunked_sum<T, E, F>(items: &[T], term: F) -> Result<f64, E>
where
    T: Sync,
    E: Send,
    F: Fn(&T) -> Result<f64, E> + Sync,
{
    let partials: Vec<Result<NeumaierSum, E>> = items
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut acc = NeumaierSum::new();
            for item in chunk {
                acc.add(term(item)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = NeumaierSum::new();
    for p in partials {
        total.merge(&p?);
    }
    Ok(total.value())
}
