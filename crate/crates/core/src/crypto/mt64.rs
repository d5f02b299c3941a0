//! 64-bit Mersenne Twister (MT19937-64).

const NN: usize = 312;
const MM: usize = 156;
const MATRIX_A: u64 = 0xB502_6F5A_A966_19E9;
const UPPER_MASK: u64 = 0xFFFF_FFFF_8000_0000;
const LOWER_MASK: u64 = 0x0000_0000_7FFF_FFFF;

pub const DEFAULT_SEED: u64 = 5489;

#[derive(Clone)]
pub struct Mt19937_64 {
    state: [u64; NN],
    index: usize,
}

impl std::fmt::Debug for Mt19937_64 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mt19937_64").field("index", &self.index).finish_non_exhaustive()
    }
}

impl Default for Mt19937_64 {
    fn default() -> Self {
        Self::new(DEFAULT_SEED)
    }
}

impl Mt19937_64 {
    pub fn new(seed: u64) -> Self {
        let mut state = [0u64; NN];
        state[0] = seed;
        for i in 1..NN {
            state[i] = 6_364_136_223_846_793_005u64
                .wrapping_mul(state[i - 1] ^ (state[i - 1] >> 62))
                .wrapping_add(i as u64);
        }
        Self { state, index: NN }
    }

    /// Seeds from a key array, matching `init_by_array64` of the reference code.
    pub fn from_key(key: &[u64]) -> Self {
        let mut mt = Self::new(19_650_218);
        let mut i = 1usize;
        let mut j = 0usize;
        let len = key.len().max(1);
        let mut k = NN.max(len);
        while k > 0 {
            let prev = mt.state[i - 1];
            let kj = key.get(j).copied().unwrap_or(0);
            mt.state[i] = (mt.state[i] ^ (prev ^ (prev >> 62)).wrapping_mul(3_935_559_000_370_003_845))
                .wrapping_add(kj)
                .wrapping_add(j as u64);
            i += 1;
            j += 1;
            if i >= NN {
                mt.state[0] = mt.state[NN - 1];
                i = 1;
            }
            if j >= len {
                j = 0;
            }
            k -= 1;
        }
        k = NN - 1;
        while k > 0 {
            let prev = mt.state[i - 1];
            mt.state[i] = (mt.state[i] ^ (prev ^ (prev >> 62)).wrapping_mul(2_862_933_555_777_941_757))
                .wrapping_sub(i as u64);
            i += 1;
            if i >= NN {
                mt.state[0] = mt.state[NN - 1];
                i = 1;
            }
            k -= 1;
        }
        mt.state[0] = 1 << 63;
        mt.index = NN;
        mt
    }

    fn twist(&mut self) {
        for i in 0..NN {
            let x = (self.state[i] & UPPER_MASK) | (self.state[(i + 1) % NN] & LOWER_MASK);
            let mut xa = x >> 1;
            if x & 1 != 0 {
                xa ^= MATRIX_A;
            }
            self.state[i] = self.state[(i + MM) % NN] ^ xa;
        }
        self.index = 0;
    }

    pub fn next_u64(&mut self) -> u64 {
        if self.index >= NN {
            self.twist();
        }
        let mut x = self.state[self.index];
        self.index += 1;
        x ^= (x >> 29) & 0x5555_5555_5555_5555;
        x ^= (x << 17) & 0x71D6_7FFF_EDA6_0000;
        x ^= (x << 37) & 0xFFF7_EEE0_0000_0000;
        x ^= x >> 43;
        x
    }

    /// Next output restricted to `[0, 2^64 - 2]`; the all-ones word is redrawn.
    pub fn next_word(&mut self) -> u64 {
        loop {
            let w = self.next_u64();
            if w != u64::MAX {
                return w;
            }
        }
    }
}
