//! Synthetic marketplace with known ground-truth intents.

pub mod dataset;
pub mod population;
pub mod session;

pub use dataset::{label_rates, write_ground_truth, Arrival, Simulator};
pub use population::{
    gen_population, outcome, sample_labels, ExposurePolicy, LatentUser, Population, PopulationSpec, SegmentSpec,
};
pub use session::{gen_session, SessionSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams per user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Latent = 1,
    Static = 2,
    Session = 3,
    Exposure = 4,
    Outcome = 5,
    Policy = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one `(seed, stream, index)` triple; independent of generation order.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let key = splitmix(splitmix(seed ^ splitmix(stream as u64)) ^ index);
    ChaCha8Rng::seed_from_u64(key)
}
