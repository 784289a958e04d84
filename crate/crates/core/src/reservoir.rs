//! Fixed-capacity uniform reservoir (Algorithm R) for feeding density
//! estimates from an unbounded stream.

use rand::Rng;

use crate::rng::{stream_rng, streams, StreamRng};

pub const DEFAULT_CAPACITY: usize = 4096;

#[derive(Debug, Clone)]
pub struct Reservoir<T> {
    items: Vec<T>,
    capacity: usize,
    seen: u64,
    rng: StreamRng,
}

impl<T: Clone> Reservoir<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "reservoir capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            seen: 0,
            rng: stream_rng(seed, streams::RESERVOIR),
        }
    }

    pub fn push(&mut self, item: T) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            let j = self.rng.random_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = item;
            }
        }
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_everything_until_full() {
        let mut r = Reservoir::new(5, 1);
        for i in 0..4 {
            r.push(i);
        }
        assert_eq!(r.items(), &[0, 1, 2, 3]);
        for i in 4..100 {
            r.push(i);
        }
        assert_eq!(r.items().len(), 5);
        assert_eq!(r.seen(), 100);
    }

    #[test]
    fn inclusion_is_roughly_uniform() {
        // each of 20 items should survive with probability 1/4
        let mut hits = [0u32; 20];
        for seed in 0..4000 {
            let mut r = Reservoir::new(5, seed);
            for i in 0..20 {
                r.push(i);
            }
            for &i in r.items() {
                hits[i] += 1;
            }
        }
        // binomial(4000, 0.25): sd ~ 27
        for h in hits {
            assert!((h as f64 - 1000.0).abs() < 140.0, "{h}");
        }
    }
}
