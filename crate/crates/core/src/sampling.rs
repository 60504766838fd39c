//! Randomness for the optimizers.
//!
//! Every random decision goes through [`RngStream`], a xoshiro256++ generator
//! whose state is derived from a `(seed, stream)` pair with SplitMix64. The
//! generator is implemented here rather than pulled from a crate so that the
//! output sequence is pinned bit-for-bit independent of dependency upgrades.
//!
//! A single optimizer run owns several substreams ([`RunStreams`]): component
//! indices, snapshot coin flips, output-iterate draws and the alias-table coin.
//! Keeping them apart means that changing `m` leaves the `i_t` sequence intact.

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A xoshiro256++ generator bound to a `(seed, stream)` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    s: [u64; 4],
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        // The stream id is whitened before mixing so that (seed, stream) and
        // (seed + 1, stream - 1) do not land on neighbouring SplitMix states.
        let mut key = stream;
        let mut sm = seed ^ splitmix64(&mut key).rotate_left(17);
        let mut s = [0u64; 4];
        for word in &mut s {
            *word = splitmix64(&mut sm);
        }
        if s.iter().all(|&w| w == 0) {
            s[0] = GOLDEN_GAMMA;
        }
        Self { seed, stream, s }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exactly uniform integer in `[0, bound)` (Lemire's multiply-and-reject).
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let mut m = u128::from(self.next_u64()) * u128::from(bound);
        let mut low = m as u64;
        if low < bound {
            let threshold = bound.wrapping_neg() % bound;
            while low < threshold {
                m = u128::from(self.next_u64()) * u128::from(bound);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (RngStream::next_u64(self) >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        RngStream::next_u64(self)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = RngStream::next_u64(self).to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Purpose tags for the per-run substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamKind {
    Index,
    Snapshot,
    Output,
    Coin,
}

impl StreamKind {
    fn offset(self) -> u64 {
        match self {
            StreamKind::Index => 0,
            StreamKind::Snapshot => 1,
            StreamKind::Output => 2,
            StreamKind::Coin => 3,
        }
    }
}

/// The independent substreams consumed by one optimizer run.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub index: RngStream,
    pub snapshot: RngStream,
    pub output: RngStream,
    pub coin: RngStream,
}

impl RunStreams {
    /// `stream` selects a block of four substreams, so runs sharing a seed but
    /// using different stream ids never overlap.
    pub fn new(seed: u64, stream: u64) -> Self {
        let base = stream.wrapping_mul(4);
        let make = |kind: StreamKind| RngStream::new(seed, base.wrapping_add(kind.offset()));
        Self {
            index: make(StreamKind::Index),
            snapshot: make(StreamKind::Snapshot),
            output: make(StreamKind::Output),
            coin: make(StreamKind::Coin),
        }
    }
}

/// Uniform component index in `[0, n)`.
pub fn draw_uniform_index(rng: &mut RngStream, n: usize) -> Result<usize> {
    if n == 0 {
        return contract("cannot draw an index from an empty range");
    }
    Ok(rng.below(n as u64) as usize)
}

/// Bernoulli snapshot flag `B_t` with `P(B_t = 1) = 1/m` exactly.
pub fn draw_snapshot_flag(rng: &mut RngStream, m: u64) -> Result<bool> {
    if m == 0 {
        return contract("snapshot gap m must be at least 1");
    }
    Ok(rng.below(m) == 0)
}

/// Probability that, at iteration `t`, the most recent snapshot happened at `t1`.
///
/// `t1 = 0` means no Bernoulli snapshot fired in `1..=t` (the initial full
/// gradient is the most recent one).
pub fn snapshot_event_probability(m: u64, t: u64, t1: u64) -> Result<f64> {
    if m == 0 {
        return contract("snapshot gap m must be at least 1");
    }
    if t1 > t {
        return contract(format!("last snapshot index {t1} is after iteration {t}"));
    }
    let q = 1.0 - 1.0 / m as f64;
    let p = if t1 == 0 {
        q.powi(exponent(t)?)
    } else {
        (1.0 / m as f64) * q.powi(exponent(t - t1)?)
    };
    Ok(p)
}

fn exponent(k: u64) -> Result<i32> {
    i32::try_from(k).or_else(|_| contract(format!("iteration gap {k} too large")))
}

/// Static importance-sampling table with `p_i = L_i / sum_j L_j` and an alias
/// table for O(1) draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceTable {
    probabilities: Vec<f64>,
    /// `1 / (n p_i)`, the importance weight applied to a sampled increment.
    weights: Vec<f64>,
    accept: Vec<f64>,
    alias: Vec<usize>,
    homogeneous: bool,
}

impl ImportanceTable {
    pub fn new(lipschitz: &[f64]) -> Result<Self> {
        build_importance_table(lipschitz)
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// True when every `L_i` is identical, in which case the table is exactly uniform.
    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    /// Draws a component. The column comes from `index` and the alias coin
    /// from `coin`; with a homogeneous table the coin always keeps the column,
    /// so the index sequence matches a plain uniform sampler on the same stream.
    #[inline]
    pub fn draw(&self, index: &mut RngStream, coin: &mut RngStream) -> usize {
        let column = index.below(self.accept.len() as u64) as usize;
        if coin.next_f64() < self.accept[column] {
            column
        } else {
            self.alias[column]
        }
    }
}

/// Builds the `p_i ∝ L_i` table (Vose's alias construction).
pub fn build_importance_table(lipschitz: &[f64]) -> Result<ImportanceTable> {
    if lipschitz.is_empty() {
        return config("importance table needs at least one component");
    }
    if let Some((i, l)) = lipschitz.iter().enumerate().find(|(_, l)| !(**l > 0.0 && l.is_finite())) {
        return config(format!("smoothness constant L_{i} = {l} must be positive and finite"));
    }
    let n = lipschitz.len();
    let homogeneous = lipschitz.iter().all(|&l| l == lipschitz[0]);
    if homogeneous {
        return Ok(ImportanceTable {
            probabilities: vec![1.0 / n as f64; n],
            weights: vec![1.0; n],
            accept: vec![1.0; n],
            alias: (0..n).collect(),
            homogeneous,
        });
    }

    let total: f64 = lipschitz.iter().sum();
    let probabilities: Vec<f64> = lipschitz.iter().map(|l| l / total).collect();
    let mean = total / n as f64;
    let weights: Vec<f64> = lipschitz.iter().map(|l| mean / l).collect();

    let mut scaled: Vec<f64> = probabilities.iter().map(|p| p * n as f64).collect();
    let mut accept = vec![1.0; n];
    let mut alias: Vec<usize> = (0..n).collect();
    let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
    while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
        small.pop();
        accept[s] = scaled[s];
        alias[s] = l;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if scaled[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    // Leftovers differ from 1 only by rounding.
    for i in small.into_iter().chain(large) {
        accept[i] = 1.0;
        alias[i] = i;
    }

    Ok(ImportanceTable {
        probabilities,
        weights,
        accept,
        alias,
        homogeneous,
    })
}
