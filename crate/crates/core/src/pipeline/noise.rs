use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{Frame, FrameShape};

/// Standard-normal frame drawn from the ChaCha stream `(seed, t)`. The
/// value depends only on the key, never on how many frames or timesteps
/// were drawn before.
pub fn shared_noise(seed: u64, t: usize, shape: FrameShape) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    let data = (0..shape.len())
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v as f32
        })
        .collect();
    Frame::new(shape, data).expect("sized")
}
