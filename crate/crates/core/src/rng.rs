//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream. The 256-bit key is expanded from the
//! master seed, the 64-bit ChaCha nonce is the stream id, and the block
//! counter gives O(1) random access to any position. A simulation path with
//! index `i` always reads from stream `i`, so output does not depend on how
//! paths are distributed over worker threads.
//!
//! Normal variates use the Box–Muller transform. One pair of normals
//! consumes exactly two 64-bit words (four 32-bit counter words):
//!
//! ```text
//! u1 = ((w1 >> 11) + 0.5) * 2^-53        in (0, 1)
//! u2 = ((w2 >> 11) + 0.5) * 2^-53
//! z0 = sqrt(-2 ln u1) * cos(2π u2)
//! z1 = sqrt(-2 ln u1) * sin(2π u2)
//! ```
//!
//! A vector of dimension `d` consumes `ceil(d / 2)` pairs; when `d` is odd the
//! sine branch of the last pair is discarded. Nothing is cached between calls,
//! so the counter advance per call is exactly `4 * ceil(d / 2)` words.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream ids at or above this value are reserved for named roles.
const ROLE_BASE: u64 = 1 << 63;

/// Identifies a position in a keyed stream family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub stream_id: u64,
    /// Position in 32-bit keystream words.
    pub counter: u64,
}

/// Streams that are not indexed by a simulation path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    MmseMonteCarlo,
    KernelDraws,
    Auxiliary(u32),
}

impl Role {
    fn stream_id(self) -> u64 {
        match self {
            Role::MmseMonteCarlo => ROLE_BASE,
            Role::KernelDraws => ROLE_BASE + 1,
            Role::Auxiliary(i) => ROLE_BASE + 0x1_0000 + u64::from(i),
        }
    }
}

impl StreamKey {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
            counter: 0,
        }
    }

    pub fn for_role(master_seed: u64, role: Role) -> Self {
        Self::new(master_seed, role.stream_id())
    }
}

/// A deterministic generator positioned by a [`StreamKey`].
#[derive(Debug, Clone)]
pub struct Stream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

/// Creates the stream for `(master_seed, stream_id)` at counter 0.
pub fn derive_stream(master_seed: u64, stream_id: u64) -> Stream {
    Stream::from_key(StreamKey::new(master_seed, stream_id))
}

impl Stream {
    pub fn from_key(key: StreamKey) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(key.master_seed);
        rng.set_stream(key.stream_id);
        rng.set_word_pos(u128::from(key.counter));
        Self {
            master_seed: key.master_seed,
            stream_id: key.stream_id,
            rng,
        }
    }

    /// Current position of this stream.
    pub fn key(&self) -> StreamKey {
        StreamKey {
            master_seed: self.master_seed,
            stream_id: self.stream_id,
            counter: self.rng.get_word_pos() as u64,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_open();
        let u2 = self.uniform_open();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// Fills `out` with independent standard normals.
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair().0;
        }
    }

    /// One standard normal (consumes a full Box–Muller pair).
    pub fn standard_normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    /// Draws an index from a discrete distribution given by `weights` summing to one.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let u = self.uniform_open();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        // rounding left a sliver above the cumulative sum
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

/// A vector of `d` independent N(0, 1) coordinates.
pub fn standard_normal_vector(stream: &mut Stream, d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let mut out = vec![0.0; d];
    stream.fill_standard_normal(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_draws() {
        let mut a = derive_stream(7, 3);
        let mut b = derive_stream(7, 3);
        let xa = standard_normal_vector(&mut a, 3).unwrap();
        let xb = standard_normal_vector(&mut b, 3).unwrap();
        assert_eq!(xa, xb);
    }

    #[test]
    fn counter_advance_is_fixed() {
        for d in 1..6 {
            let mut s = derive_stream(1, 0);
            standard_normal_vector(&mut s, d).unwrap();
            assert_eq!(s.key().counter, 4 * d.div_ceil(2) as u64);
        }
    }

    #[test]
    fn resuming_from_key_replays() {
        let mut s = derive_stream(11, 5);
        standard_normal_vector(&mut s, 5).unwrap();
        let key = s.key();
        let next = standard_normal_vector(&mut s, 4).unwrap();
        let mut resumed = Stream::from_key(key);
        assert_eq!(standard_normal_vector(&mut resumed, 4).unwrap(), next);
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut s = derive_stream(0, 0);
        assert!(standard_normal_vector(&mut s, 0).is_err());
    }

    #[test]
    fn roles_do_not_collide_with_paths() {
        let a = StreamKey::for_role(3, Role::MmseMonteCarlo);
        let b = StreamKey::for_role(3, Role::KernelDraws);
        assert_ne!(a.stream_id, b.stream_id);
        assert!(a.stream_id >= ROLE_BASE);
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut s = derive_stream(2, 2);
        for _ in 0..1000 {
            assert_eq!(s.categorical(&[0.0, 1.0, 0.0]), 1);
        }
    }
}
