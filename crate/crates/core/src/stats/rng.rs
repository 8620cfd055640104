//! Seeded, splittable random streams.
//!
//! Every Monte-Carlo round owns one [`RngStream`] identified by
//! `(seed, stream_id)`. The generator is ChaCha8 keyed by the seed with the
//! stream id placed in the cipher's stream word, so jumping to any round is
//! O(1) and the sample sequence of a round never depends on how rounds are
//! scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// An independent stream derived from this one's identity (not its
    /// current position). Used to give sub-tasks of a round (data, DP noise,
    /// reference sets) their own sequences.
    pub fn child(&self, tag: u64) -> Self {
        let key = splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5EED_0000_0000_0001)));
        Self::new(key, self.stream_id)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_identity_same_sequence() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let xs: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 4);
        let mut c = a.child(1);
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
    }

    #[test]
    fn child_ignores_position() {
        let mut a = RngStream::new(1, 9);
        let before = a.child(2).next_u64();
        let _: f64 = a.random();
        assert_eq!(before, a.child(2).next_u64());
    }

    #[test]
    fn neighbouring_streams_uncorrelated() {
        let n = 20_000;
        let mut a = RngStream::new(11, 0);
        let mut b = RngStream::new(11, 1);
        let xs: Vec<f64> = (0..n).map(|_| a.random::<f64>() - 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.random::<f64>() - 0.5).collect();
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        let rho = cov / (1.0 / 12.0);
        assert!(rho.abs() < 4.0 / (n as f64).sqrt(), "rho = {rho}");
    }
}
