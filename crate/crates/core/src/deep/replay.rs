use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Fixed-capacity ring; once full, new items overwrite the oldest.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `batch` items drawn uniformly with replacement.
    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Result<Vec<&T>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::UnderfilledBuffer {
                size: self.items.len(),
                batch,
            });
        }
        Ok((0..batch)
            .map(|_| &self.items[rng::below(rng, self.items.len())])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            buf.push(i);
        }
        assert_eq!(buf.len(), 3);
        let mut items: Vec<i32> = buf.iter().copied().collect();
        items.sort();
        assert_eq!(items, vec![2, 3, 4]);
    }

    #[test]
    fn sampling_requires_batch() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        let mut rng = rng::seeded(0);
        buf.push(1);
        assert!(matches!(
            buf.sample(2, &mut rng),
            Err(Error::UnderfilledBuffer { size: 1, batch: 2 })
        ));
        buf.push(2);
        assert_eq!(buf.sample(2, &mut rng).unwrap().len(), 2);
        assert!(ReplayBuffer::<u8>::new(0).is_err());
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let mut buf = ReplayBuffer::new(4).unwrap();
        for i in 0..4usize {
            buf.push(i);
        }
        let mut rng = rng::seeded(11);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            for x in buf.sample(4, &mut rng).unwrap() {
                counts[*x] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 500.0, "{counts:?}");
        }
    }
}
