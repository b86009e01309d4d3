use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{Encoder, EncodingMode, StoreError};

/// Deterministic random unit vector for `(text, mode)`.
///
/// The ChaCha20 stream is keyed by `sha256(seed_le ++ prefix ++ text)`, so the
/// output depends only on the inputs and not on platform or thread count.
pub fn mock_encode(
    text: &str,
    mode: EncodingMode,
    dim: usize,
    seed: u64,
) -> Result<Vec<f32>, StoreError> {
    if dim < 2 {
        return Err(StoreError::DimTooSmall(dim));
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(mode.prefix().as_bytes());
    hasher.update(text.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha20Rng::from_seed(key);

    let draws: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = draws.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(draws.into_iter().map(|x| (x / norm) as f32).collect())
}

/// Test double satisfying the [`Encoder`] contract.
#[derive(Debug, Clone, Copy)]
pub struct MockEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl MockEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, StoreError> {
        if dim < 2 {
            return Err(StoreError::DimTooSmall(dim));
        }
        Ok(MockEncoder { dim, seed })
    }
}

impl Encoder for MockEncoder {
    fn encoder_id(&self) -> String {
        format!("mock-d{}-s{}", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str, mode: EncodingMode) -> Result<Vec<f32>, StoreError> {
        mock_encode(text, mode, self.dim, self.seed)
    }
}
