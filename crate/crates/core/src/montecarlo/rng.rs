//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the run seed and a
//! purpose tag, with the shot (or resample) index selecting the stream. Results therefore
//! do not depend on which worker draws which shot or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Shot = 1,
    Trace = 2,
    Cooling = 3,
    Bootstrap = 4,
    Synthetic = 5,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
