//! Cross-check fixtures: a seeded parameter set, a vector, and proofs over it.
//!
//! File layout (every item is a frame, see [`crate::codec`]):
//!
//! | # | content                                            |
//! |---|----------------------------------------------------|
//! | 0 | magic `sendnet-kzg-fixture-v1`                     |
//! | 1 | setup seed, `u64` big-endian                       |
//! | 2 | vector length `n`, `u32` big-endian                |
//! | 3 | vector, `n` scalars of 32 bytes                    |
//! | 4 | commitment, 48 bytes                               |
//! | 5 | evaluation proofs, concatenated 112-byte records   |
//! | 6 | subvector proof (see [`SubvectorProof::to_bytes`]) |

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{Commitment, EvalProof, KzgError, KzgParams, Polynomial, SubvectorProof};
use crate::codec::{split_frames, DecodeError, Writer};
use crate::pairing::{Scalar, SCALAR_BYTES};

const MAGIC: &[u8] = b"sendnet-kzg-fixture-v1";
const EVAL_RECORD: usize = 112;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fixture {
    pub seed: u64,
    pub vector: Vec<Scalar>,
    pub commitment: Commitment,
    /// One opening per domain point, capped at 16.
    pub evals: Vec<EvalProof>,
    pub subvector: SubvectorProof,
}

impl Fixture {
    /// Deterministic fixture for `(seed, n)`. The parameters come from
    /// [`KzgParams::setup_seeded`] with the same seed.
    pub fn generate(seed: u64, n: usize) -> Result<(KzgParams, Fixture), KzgError> {
        let params = KzgParams::setup_seeded(n, seed)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x6669_7874_7572_6573);
        let vector: Vec<Scalar> = (0..n).map(|_| Scalar::random(&mut rng)).collect();
        let commitment = params.commit_vector(&vector)?;
        let poly = Polynomial::interpolate_domain(&vector);
        let evals = (0..n.min(16) as u64)
            .map(|i| params.create_witness(&poly, Scalar::from_u64(i)))
            .collect::<Result<Vec<_>, _>>()?;
        let picks = sample(&mut rng, n, n.min(4)).into_iter().map(|i| i as u64);
        let subvector = params.prove_subvector(&vector, &picks.collect::<Vec<_>>())?;
        Ok((
            params,
            Fixture {
                seed,
                vector,
                commitment,
                evals,
                subvector,
            },
        ))
    }

    /// Recomputes the parameters from the seed and checks every proof.
    pub fn verify(&self) -> bool {
        let Ok(params) = KzgParams::setup_seeded(self.vector.len(), self.seed) else {
            return false;
        };
        params.commit_vector(&self.vector).ok() == Some(self.commitment)
            && self.evals.iter().all(|e| {
                params.verify_proof(&self.commitment, e)
                    && e.point.to_bytes()[..24] == [0u8; 24]
                    && self.vector.get(point_index(e)) == Some(&e.value)
            })
            && params.verify_subvector_proof(&self.commitment, &self.subvector)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.frame(MAGIC);
        w.frame(&self.seed.to_be_bytes());
        w.frame(&(self.vector.len() as u32).to_be_bytes());
        w.frame(&self.vector.iter().flat_map(|s| s.to_bytes()).collect::<Vec<_>>());
        w.frame(&self.commitment.to_bytes());
        w.frame(&self.evals.iter().flat_map(|e| e.to_bytes()).collect::<Vec<_>>());
        w.frame(&self.subvector.to_bytes());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Fixture, DecodeError> {
        let frames = split_frames(bytes)?;
        let [magic, seed, size, vector, commitment, evals, subvector] = frames[..] else {
            return Err(DecodeError::invalid("fixture frame count"));
        };
        if magic != MAGIC {
            return Err(DecodeError::invalid("fixture magic"));
        }
        let seed = u64::from_be_bytes(seed.try_into().map_err(|_| DecodeError::invalid("seed"))?);
        let n = u32::from_be_bytes(size.try_into().map_err(|_| DecodeError::invalid("size"))?)
            as usize;
        if vector.len() != n * SCALAR_BYTES || evals.len() % EVAL_RECORD != 0 {
            return Err(DecodeError::invalid("fixture lengths"));
        }
        let vector = vector
            .chunks(SCALAR_BYTES)
            .map(|c| Scalar::from_bytes(c.try_into().unwrap()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Fixture {
            seed,
            vector,
            commitment: Commitment::from_bytes(commitment)?,
            evals: evals
                .chunks(EVAL_RECORD)
                .map(EvalProof::from_bytes)
                .collect::<Result<Vec<_>, _>>()?,
            subvector: SubvectorProof::from_bytes(subvector)?,
        })
    }
}

fn point_index(e: &EvalProof) -> usize {
    let b = e.point.to_bytes();
    u64::from_be_bytes(b[24..].try_into().unwrap()) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_round_trips_and_verifies() {
        let (_, fx) = Fixture::generate(42, 8).unwrap();
        assert!(fx.verify());
        let bytes = fx.to_bytes();
        let back = Fixture::from_bytes(&bytes).unwrap();
        assert_eq!(back, fx);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn fixture_is_deterministic() {
        let (_, a) = Fixture::generate(7, 4).unwrap();
        let (_, b) = Fixture::generate(7, 4).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn tampered_fixture_fails_verification() {
        let (_, mut fx) = Fixture::generate(3, 4).unwrap();
        fx.vector[2] += Scalar::ONE;
        assert!(!fx.verify());
    }
}
