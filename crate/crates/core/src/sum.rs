//! Reproducible reductions.
//!
//! Per-node values are computed in parallel and collected in node order; the
//! final reduction is a sequential Neumaier sum, so results do not depend on
//! the number of worker threads.

use rayon::prelude::*;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Neumaier::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Evaluates `f` on `0..n` in parallel and returns the results in index order.
pub fn par_map_ordered<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// `Σ_i weights[i] * f(i)` with parallel evaluation and a deterministic reduction.
pub fn weighted_sum<F>(weights: &[f64], f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let vals = par_map_ordered(weights.len(), |i| weights[i] * f(i));
    compensated_sum(vals)
}

/// Fallible variant of [`weighted_sum`]; the first error in index order wins.
pub fn try_weighted_sum<F, E>(weights: &[f64], f: F) -> Result<f64, E>
where
    F: Fn(usize) -> Result<f64, E> + Sync + Send,
    E: Send,
{
    let vals: Vec<Result<f64, E>> = par_map_ordered(weights.len(), |i| f(i).map(|v| weights[i] * v));
    let mut acc = Neumaier::new();
    for v in vals {
        acc.add(v?);
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let vals = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(vals), 2.0);
        let naive: f64 = vals.iter().sum();
        assert_eq!(naive, 0.0);
    }

    #[test]
    fn weighted_sum_is_thread_independent() {
        let w: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let f = |i: usize| ((i as f64) * 0.37).sin();
        let a = weighted_sum(&w, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| weighted_sum(&w, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
