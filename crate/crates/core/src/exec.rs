//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel loop in the crate goes through the helpers here. Results are
//! collected in index order and reduced sequentially afterwards, so the
//! sequential and parallel paths produce bit-identical output. Without the
//! `parallel` feature, [`Parallelism::Parallel`] silently runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// Whether this build can actually run loops in parallel.
    pub fn available() -> bool {
        cfg!(feature = "parallel")
    }

    /// `Parallel` when the build and the current rayon pool offer more than
    /// one thread, `Sequential` otherwise.
    pub fn auto() -> Self {
        #[cfg(feature = "parallel")]
        if rayon::current_num_threads() > 1 {
            return Parallelism::Parallel;
        }
        Parallelism::Sequential
    }

    /// Evaluate `f` over `0..len`, returning results in index order.
    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    /// Run `f` for every item; order of side effects is unspecified in parallel mode.
    pub fn for_each<T, F>(self, items: &[T], f: F)
    where
        T: Sync,
        F: Fn(&T) + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => {
                use rayon::prelude::*;
                items.par_iter().for_each(f)
            }
            _ => items.iter().for_each(f),
        }
    }

    /// Map over items and collect in order.
    pub fn map_slice<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }
}

/// Shared mutable view of a slice for colour-sweeps, where each parallel task
/// writes a disjoint set of indices and only reads indices no task writes.
#[derive(Clone, Copy)]
pub(crate) struct SharedSlice<'a> {
    ptr: *mut f64,
    len: usize,
    _marker: std::marker::PhantomData<&'a mut [f64]>,
}

unsafe impl Send for SharedSlice<'_> {}
unsafe impl Sync for SharedSlice<'_> {}

impl<'a> SharedSlice<'a> {
    pub(crate) fn new(data: &'a mut [f64]) -> Self {
        Self {
            ptr: data.as_mut_ptr(),
            len: data.len(),
            _marker: std::marker::PhantomData,
        }
    }

    /// # Safety
    /// No other task may write index `i` concurrently.
    #[inline(always)]
    pub(crate) unsafe fn get(&self, i: usize) -> f64 {
        debug_assert!(i < self.len);
        *self.ptr.add(i)
    }

    /// # Safety
    /// Index `i` must be owned by the calling task for the current phase.
    #[inline(always)]
    pub(crate) unsafe fn set(&self, i: usize, v: f64) {
        debug_assert!(i < self.len);
        *self.ptr.add(i) = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_is_ordered_in_both_modes() {
        let seq = Parallelism::Sequential.map(1000, |i| (i as f64).sqrt());
        let par = Parallelism::Parallel.map(1000, |i| (i as f64).sqrt());
        assert_eq!(seq, par);
    }
}
