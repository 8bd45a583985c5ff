use serde::{Deserialize, Serialize};

use super::entity::EntityId;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based random stream keyed by `(seed, entity, step)`.
///
/// The n-th draw depends only on the key and `n`, so it is the same on every
/// LP and after any number of migrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub entity: EntityId,
    pub step: u64,
    pub counter: u64,
    key: u64,
}

impl RandomStream {
    pub fn new(seed: u64, entity: EntityId, step: u64) -> Self {
        let key = splitmix(splitmix(splitmix(seed) ^ entity.0) ^ step.wrapping_mul(GOLDEN));
        RandomStream {
            seed,
            entity,
            step,
            counter: 0,
            key,
        }
    }

    /// Value of draw number `counter` without advancing.
    pub fn peek(&self) -> u64 {
        splitmix(self.key ^ splitmix(self.counter))
    }

    /// Returns the current value together with the advanced stream.
    pub fn draw(mut self) -> (u64, RandomStream) {
        let v = self.next_u64();
        (v, self)
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = self.peek();
        self.counter += 1;
        v
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. Panics when `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // widening multiply: bias is < n / 2^64, irrelevant at simulation scale
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn draws_are_pure_functions_of_the_tuple() {
        let s = RandomStream::new(42, EntityId(7), 3);
        let (a, s1) = s.draw();
        let (b, _) = s.draw();
        assert_eq!(a, b);
        assert_eq!(s1.counter, 1);
        let (c, _) = s1.draw();
        assert_ne!(a, c);
        // rebuilt from scratch elsewhere (another LP) gives the same sequence
        let mut t = RandomStream::new(42, EntityId(7), 3);
        assert_eq!(t.next_u64(), a);
        assert_eq!(t.next_u64(), c);
    }

    #[test]
    fn first_draw_collisions_are_rare() {
        let mut seen = HashSet::new();
        let mut collisions = 0usize;
        let mut total = 0usize;
        for entity in 0..100u64 {
            for step in 0..100u64 {
                let (v, _) = RandomStream::new(1, EntityId(entity), step).draw();
                total += 1;
                if !seen.insert(v) {
                    collisions += 1;
                }
            }
        }
        assert_eq!(total, 10_000);
        assert!((collisions as f64 / total as f64) < 1e-3, "{collisions} collisions");
    }

    #[test]
    fn below_stays_in_range() {
        let mut s = RandomStream::new(9, EntityId(1), 0);
        for n in 1..50 {
            assert!(s.below(n) < n);
        }
        let u = s.uniform();
        assert!((0.0..1.0).contains(&u));
    }
}
