use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RNG_ALGORITHM: &str = "chacha8";

/// Seeded, named pseudo-random stream.
///
/// Backed by ChaCha8, which produces the same sequence on every platform.
/// Independent substreams are derived by hashing the parent seed and a name,
/// so `(seed, name)` alone determines every draw.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    name: String,
    rng: ChaCha8Rng,
}

/// Serializable position of an [`RngStream`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub algorithm: String,
    pub seed: u64,
    pub name: String,
    /// ChaCha word position, decimal-encoded because it is 128 bits wide.
    pub word_pos: String,
}

fn derive_key(seed: u64, name: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"eapred-rng/v1");
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    h.finalize().into()
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::named(seed, "root")
    }

    pub fn named(seed: u64, name: &str) -> Self {
        Self {
            seed,
            name: name.to_string(),
            rng: ChaCha8Rng::from_seed(derive_key(seed, name)),
        }
    }

    /// Independent stream for `name`, a pure function of this stream's seed
    /// and name (not of how many draws have been taken).
    pub fn substream(&self, name: &str) -> Self {
        Self::named(self.seed, &format!("{}/{}", self.name, name))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    pub fn state(&self) -> RngState {
        RngState {
            algorithm: RNG_ALGORITHM.to_string(),
            seed: self.seed,
            name: self.name.clone(),
            word_pos: self.rng.get_word_pos().to_string(),
        }
    }

    pub fn from_state(state: &RngState) -> Option<Self> {
        if state.algorithm != RNG_ALGORITHM {
            return None;
        }
        let pos: u128 = state.word_pos.parse().ok()?;
        let mut s = Self::named(state.seed, &state.name);
        s.rng.set_word_pos(pos);
        Some(s)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        let xs: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn substreams_are_independent_of_parent_position() {
        let fresh = RngStream::new(7);
        let mut used = RngStream::new(7);
        used.uniform();
        let mut a = fresh.substream("init");
        let mut b = used.substream("init");
        assert_eq!(a.next_u64(), b.next_u64());
        let mut c = fresh.substream("dropout");
        assert_ne!(fresh.substream("init").next_u64(), c.next_u64());
    }

    #[test]
    fn state_round_trip_resumes_sequence() {
        let mut a = RngStream::named(3, "x");
        for _ in 0..17 {
            a.uniform();
        }
        let mut b = RngStream::from_state(&a.state()).unwrap();
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn first_draws_are_pinned() {
        // guards the cross-run/cross-platform contract against dependency drift
        let mut s = RngStream::new(0);
        let draws: Vec<u64> = (0..2).map(|_| s.next_u64()).collect();
        let mut n = RngStream::named(42, "shuffle").substream("3");
        let named: Vec<u64> = (0..2).map(|_| n.next_u64()).collect();
        assert_eq!(draws, vec![3036955977231888567, 17557950215948006814]);
        assert_eq!(named, vec![13436321986844497189, 11092195560965591281]);
        assert_eq!(s.algorithm(), "chacha8");
    }
}
