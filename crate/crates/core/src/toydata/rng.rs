//! Counter-based pseudorandom streams.
//!
//! A [`Stream`] is a 64-bit key plus a counter; the value at position `c` is a
//! SplitMix64 finalizer applied to `key + (c + 1) * GOLDEN`. Child streams are
//! derived from the key and a name, never from the parent's position, so drawing
//! from one stream cannot perturb another.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            key: mix64(seed ^ 0x6d77_6761_6e5f_7267),
            counter: 0,
        }
    }

    /// Independent child stream identified by `name`.
    pub fn split(&self, name: &str) -> Stream {
        Stream {
            key: mix64(self.key ^ mix64(fnv1a(name))),
            counter: 0,
        }
    }

    /// Independent child stream identified by an index (per-domain, per-iteration).
    pub fn split_index(&self, index: u64) -> Stream {
        Stream {
            key: mix64(self.key.wrapping_add(mix64(index.wrapping_add(GOLDEN)))),
            counter: 0,
        }
    }

    pub fn position(&self) -> u64 {
        self.counter
    }

    /// Value at an absolute position, without advancing.
    pub fn at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = self.at(self.counter);
        self.counter += 1;
        v
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `0..n` (multiply-shift reduction).
    pub fn below(&mut self, n: usize) -> usize {
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Two independent standard normals via Box–Muller.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    pub fn normal(&mut self) -> f64 {
        self.normal_pair().0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Stream::new(5).split("x");
        let mut b = Stream::new(5).split("x");
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn children_do_not_depend_on_parent_position() {
        let mut parent = Stream::new(9);
        let before = parent.split("child").at(0);
        parent.next_u64();
        assert_eq!(parent.split("child").at(0), before);
        assert_ne!(parent.split("other").at(0), before);
        assert_ne!(parent.split_index(0).at(0), parent.split_index(1).at(0));
    }

    #[test]
    fn uniform_moments() {
        let mut s = Stream::new(1);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| s.uniform()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005);
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn below_stays_in_range() {
        let mut s = Stream::new(2);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            let k = s.below(7);
            seen[k] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }
}
