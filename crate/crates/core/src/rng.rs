//! Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//!
//! Stream contract: the 64-bit seed is the key; the 128-bit counter is
//! `(block_lo, block_hi, substream_lo, substream_hi)`. Path `k` of an
//! ensemble draws from substream `k`, so every path is reproducible on its
//! own regardless of how many paths are generated or in what order.

use crate::special::normal_quantile;

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32 block with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Sequential reader over one substream.
#[derive(Debug, Clone)]
pub struct PhiloxStream {
    key: [u32; 2],
    substream: u64,
    block: u64,
    buffer: [u32; 4],
    used: usize,
}

impl PhiloxStream {
    pub fn new(seed: u64, substream: u64) -> Self {
        PhiloxStream { key: [seed as u32, (seed >> 32) as u32], substream, block: 0, buffer: [0; 4], used: 4 }
    }

    fn refill(&mut self) {
        let ctr = [self.block as u32, (self.block >> 32) as u32, self.substream as u32, (self.substream >> 32) as u32];
        self.buffer = philox4x32_10(ctr, self.key);
        self.block = self.block.wrapping_add(1);
        self.used = 0;
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.refill();
        }
        let v = self.buffer[self.used];
        self.used += 1;
        v
    }

    pub fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    /// Uniform on the open interval `(0, 1)` with 53 random bits.
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion of the CDF.
    pub fn next_gaussian(&mut self) -> f64 {
        normal_quantile(self.next_open01())
    }
}
