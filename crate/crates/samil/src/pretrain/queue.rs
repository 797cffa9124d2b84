//! FIFO store of negative keys: unit vectors of a fixed dimension, capped at
//! a capacity, oldest evicted first. Once full the queue stays exactly full.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const UNIT_NORM_TOL: f64 = 1e-6;

pub struct NegativeQueue {
    dim: usize,
    capacity: usize,
    store: VecDeque<Vec<f64>>,
}

impl NegativeQueue {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::Config(format!("queue capacity {capacity} × dim {dim}")));
        }
        Ok(NegativeQueue { dim, capacity, store: VecDeque::with_capacity(capacity + 1) })
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.store.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Appends one key; evicts the oldest entry if that would exceed capacity.
    pub fn push(&mut self, key: &Tensor) -> Result<()> {
        if key.rank() != 1 || key.len() != self.dim {
            return Err(Error::Shape {
                op: "queue_push",
                detail: format!("key {:?} into dim-{} queue", key.shape, self.dim),
            });
        }
        let norm = key.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Domain(format!("key norm {norm} is not 1")));
        }
        self.store.push_back(key.data.clone());
        if self.store.len() > self.capacity {
            self.store.pop_front();
        }
        Ok(())
    }

    /// Appends a batch in order; same eviction rule per element.
    pub fn push_batch<'a>(&mut self, keys: impl IntoIterator<Item = &'a Tensor>) -> Result<()> {
        for k in keys {
            self.push(k)?;
        }
        Ok(())
    }

    /// Fills to capacity with seeded random unit vectors so the denominator
    /// is well-formed from the first step.
    pub fn seed_fill(&mut self, rng: &mut impl Rng) {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        while self.store.len() < self.capacity {
            let mut v: Vec<f64> = (0..self.dim).map(|_| normal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                continue;
            }
            for x in v.iter_mut() {
                *x /= norm;
            }
            self.store.push_back(v);
        }
    }

    /// Current contents as a len×dim matrix, oldest key first.
    pub fn as_matrix(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.store.len() * self.dim);
        for key in &self.store {
            data.extend_from_slice(key);
        }
        Tensor { shape: vec![self.store.len(), self.dim], data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn unit(i: usize, dim: usize) -> Tensor {
        let mut data = vec![0.0; dim];
        data[i % dim] = 1.0;
        Tensor::vector(data)
    }

    #[test]
    fn fifo_eviction_drops_the_first_pushed() {
        let cap = 5;
        let mut q = NegativeQueue::new(cap, 8).unwrap();
        for i in 0..cap + 1 {
            q.push(&unit(i, 8)).unwrap();
        }
        assert_eq!(q.len(), cap);
        let m = q.as_matrix();
        // survivor rows are pushes 1..=5, oldest first
        for (row, i) in (1..=cap).enumerate() {
            let want = unit(i, 8);
            assert_eq!(&m.data[row * 8..(row + 1) * 8], &want.data[..]);
        }
    }

    #[test]
    fn push_into_empty_match_batch_size() {
        let mut q = NegativeQueue::new(10, 4).unwrap();
        let keys: Vec<Tensor> = (0..3).map(|i| unit(i, 4)).collect();
        q.push_batch(keys.iter()).unwrap();
        assert_eq!(q.len(), 3);
        assert!(!q.is_full());
    }

    #[test]
    fn count_model_after_s_singleton_pushes() {
        // size after S pushes onto initial fill i₀ is min(S + i₀, P)
        for initial in [0usize, 3, 7] {
            for s in [0usize, 1, 5, 12] {
                let cap = 7;
                let mut q = NegativeQueue::new(cap, 3).unwrap();
                for i in 0..initial.min(cap) {
                    q.push(&unit(i, 3)).unwrap();
                }
                for i in 0..s {
                    q.push(&unit(i + 100, 3)).unwrap();
                }
                assert_eq!(q.len(), (s + initial.min(cap)).min(cap));
            }
        }
    }

    #[test]
    fn rejects_bad_keys() {
        let mut q = NegativeQueue::new(4, 3).unwrap();
        assert!(q.push(&unit(0, 5)).is_err(), "wrong dimension accepted");
        assert!(q.push(&Tensor::vector(vec![0.5, 0.5, 0.5])).is_err(), "non-unit accepted");
        assert!(NegativeQueue::new(0, 3).is_err());
    }

    #[test]
    fn seed_fill_reaches_capacity_with_unit_vectors() {
        let mut q = NegativeQueue::new(16, 6).unwrap();
        q.seed_fill(&mut stream(9, &[1]));
        assert!(q.is_full());
        let m = q.as_matrix();
        for r in 0..16 {
            let norm: f64 = m.data[r * 6..(r + 1) * 6].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        let mut q2 = NegativeQueue::new(16, 6).unwrap();
        q2.seed_fill(&mut stream(9, &[1]));
        assert_eq!(q.as_matrix(), q2.as_matrix());
    }

    proptest! {
        /// Contents always equal a plain list model that keeps the last P
        /// pushes, whatever the interleaving.
        #[test]
        fn matches_list_model(cap in 1usize..9, ops in prop::collection::vec(0usize..4, 1..200)) {
            let dim = 4;
            let mut q = NegativeQueue::new(cap, dim).unwrap();
            let mut model: Vec<Vec<f64>> = Vec::new();
            for (step, &axis) in ops.iter().enumerate() {
                let key = unit(axis + step, dim);
                q.push(&key).unwrap();
                model.push(key.data.clone());
                if model.len() > cap {
                    model.remove(0);
                }
                let m = q.as_matrix();
                prop_assert_eq!(m.rows(), model.len());
                for (r, want) in model.iter().enumerate() {
                    prop_assert_eq!(&m.data[r * dim..(r + 1) * dim], &want[..]);
                }
            }
        }
    }
}
