//! Labeled deterministic random streams.
//!
//! A root `(seed, label)` pair fans out into child streams by label, so each
//! stage (and each record inside a stage) draws from its own sequence. Adding
//! a stage or reordering work never perturbs draws elsewhere.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        Self {
            seed,
            label,
            inner: ChaCha20Rng::from_seed(digest),
        }
    }

    /// Root stream for a run.
    pub fn root(seed: u64) -> Self {
        Self::new(seed, "rpsg")
    }

    /// Child stream; depends only on `(seed, self.label, child)`, never on
    /// how many values have been drawn from `self`.
    pub fn derive(&self, child: &str) -> Self {
        Self::new(self.seed, format!("{}/{}", self.label, child))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_and_label_repeat() {
        let mut a = RngStream::new(7, "x");
        let mut b = RngStream::new(7, "x");
        let va: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(va, vb);
    }

    #[test]
    fn labels_separate_streams() {
        let mut a = RngStream::new(7, "x");
        let mut b = RngStream::new(7, "y");
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn derive_ignores_parent_position() {
        let mut parent = RngStream::root(3);
        let before = parent.derive("stage").random::<u64>();
        let _ = parent.next_u64();
        let after = parent.derive("stage").random::<u64>();
        assert_eq!(before, after);
        assert_eq!(parent.derive("stage").label(), "rpsg/stage");
    }

    #[test]
    fn known_first_draw_is_stable() {
        // Frozen so platform or dependency drift shows up as a failure.
        let mut r = RngStream::new(42, "fixed");
        assert_eq!(r.next_u64(), 6952090830253700707);
    }
}
