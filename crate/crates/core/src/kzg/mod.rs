//! KZG polynomial commitments and aggregatable vector commitments.
//!
//! A vector `v` of length `n` is committed as the polynomial `φ` with
//! `φ(i) = vᵢ` over the integer domain `{0, …, n−1}`. The public parameters
//! carry both the monomial basis `τⁱ·g` and the Lagrange basis `ψᵢ(τ)·g`, so
//! a vector commitment is a single multi-scalar multiplication and a slot
//! update is one scalar multiplication.
//!
//! Pairing checks use the asymmetric layout described in [`crate::pairing`]:
//! commitments and witnesses are in G1, the verification key `(h, τ·h, …)`
//! is in G2.

mod fixture;
mod poly;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::pairing::{
    batch_inverse, fixed_base_mul, fixed_base_mul_verifier, multi_scalar_mul,
    multi_scalar_mul_verifier, pairing_product_is_identity, GroupElement, Scalar,
    VerifierElement, GROUP_BYTES, SCALAR_BYTES, VERIFIER_BYTES,
};

pub use fixture::Fixture;
pub use poly::{domain, Polynomial};

/// Largest supported vector length / polynomial degree bound.
pub const MAX_SIZE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KzgError {
    #[error("parameter size must be at least 1")]
    ZeroSize,
    #[error("parameter size {0} exceeds the maximum of {MAX_SIZE}")]
    TooLarge(usize),
    #[error("trapdoor lies in the evaluation domain")]
    DegenerateTrapdoor,
    #[error("polynomial has {coeffs} coefficients but parameters support {max}")]
    DegreeTooLarge { coeffs: usize, max: usize },
    #[error("expected a vector of length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: u64, size: usize },
    #[error("invalid index set: {0}")]
    InvalidIndexSet(&'static str),
}

/// Public parameters from a trusted setup. The trapdoor is not retained.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KzgParams {
    powers: Vec<GroupElement>,
    lagrange: Vec<GroupElement>,
    verifier_powers: Vec<VerifierElement>,
}

/// A commitment to a polynomial or vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Commitment(pub GroupElement);

impl Commitment {
    pub fn identity() -> Self {
        Commitment(GroupElement::identity())
    }

    pub fn to_bytes(&self) -> [u8; GROUP_BYTES] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        GroupElement::from_bytes(bytes).map(Commitment)
    }
}

/// Opening of a committed polynomial at one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalProof {
    pub point: Scalar,
    pub value: Scalar,
    pub witness: GroupElement,
}

/// Opening of the positions `indices` of a committed vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubvectorProof {
    pub indices: Vec<u64>,
    pub values: Vec<Scalar>,
    pub witness: GroupElement,
}

impl KzgParams {
    /// Builds parameters for vectors of length `n` from an explicit trapdoor.
    pub fn setup(n: usize, trapdoor: Scalar) -> Result<Self, KzgError> {
        if n == 0 {
            return Err(KzgError::ZeroSize);
        }
        if n > MAX_SIZE {
            return Err(KzgError::TooLarge(n));
        }
        let tau = trapdoor;
        // τ − i for every domain point; zero means τ is in the domain.
        let shifted: Vec<Scalar> = domain(n).into_iter().map(|i| tau - i).collect();
        if shifted.iter().any(Scalar::is_zero) {
            return Err(KzgError::DegenerateTrapdoor);
        }

        let mut tau_powers = Vec::with_capacity(n + 1);
        let mut acc = Scalar::ONE;
        for _ in 0..=n {
            tau_powers.push(acc);
            acc *= tau;
        }

        // ψᵢ(τ) = Z(τ) / ((τ − i) · Π_{j≠i} (i − j)), Z(τ) = Π_j (τ − j).
        // Π_{j≠i} (i − j) = i! · (−1)^(n−1−i) · (n−1−i)!
        let vanishing: Scalar = shifted.iter().copied().fold(Scalar::ONE, |a, b| a * b);
        let mut factorial = vec![Scalar::ONE; n];
        for i in 1..n {
            factorial[i] = factorial[i - 1] * Scalar::from_u64(i as u64);
        }
        let denominators: Vec<Scalar> = (0..n)
            .map(|i| {
                let mut w = factorial[i] * factorial[n - 1 - i];
                if (n - 1 - i) % 2 == 1 {
                    w = -w;
                }
                shifted[i] * w
            })
            .collect();
        let inv = batch_inverse(&denominators).expect("nonzero by the domain check");
        let lagrange_scalars: Vec<Scalar> = inv.into_iter().map(|d| vanishing * d).collect();

        let g = GroupElement::generator();
        let h = VerifierElement::generator();
        Ok(KzgParams {
            powers: fixed_base_mul(&g, &tau_powers[..n]),
            lagrange: fixed_base_mul(&g, &lagrange_scalars),
            verifier_powers: fixed_base_mul_verifier(&h, &tau_powers),
        })
    }

    /// Reproducible setup: the trapdoor is drawn from a ChaCha20 stream
    /// seeded with `seed` and dropped once the parameters exist.
    pub fn setup_seeded(n: usize, seed: u64) -> Result<Self, KzgError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        loop {
            match KzgParams::setup(n, Scalar::random_nonzero(&mut rng)) {
                Err(KzgError::DegenerateTrapdoor) => continue,
                other => return other,
            }
        }
    }

    /// Vector length `n` (one more than the maximum degree).
    pub fn size(&self) -> usize {
        self.powers.len()
    }

    /// `τⁱ·g` for `i < n`.
    pub fn powers(&self) -> &[GroupElement] {
        &self.powers
    }

    /// `ψᵢ(τ)·g` for `i < n`.
    pub fn lagrange_basis(&self) -> &[GroupElement] {
        &self.lagrange
    }

    /// `(g, τ·h)`: the generator and the verification shift term.
    pub fn verify_key(&self) -> (GroupElement, VerifierElement) {
        (self.powers[0], self.verifier_powers[1])
    }

    pub fn commit_poly(&self, poly: &Polynomial) -> Result<Commitment, KzgError> {
        let coeffs = poly.coeffs();
        if coeffs.len() > self.size() {
            return Err(KzgError::DegreeTooLarge {
                coeffs: coeffs.len(),
                max: self.size(),
            });
        }
        Ok(Commitment(
            multi_scalar_mul(coeffs, &self.powers[..coeffs.len()]).expect("equal lengths"),
        ))
    }

    pub fn commit_vector(&self, values: &[Scalar]) -> Result<Commitment, KzgError> {
        if values.len() != self.size() {
            return Err(KzgError::LengthMismatch {
                expected: self.size(),
                got: values.len(),
            });
        }
        Ok(Commitment(
            multi_scalar_mul(values, &self.lagrange).expect("equal lengths"),
        ))
    }

    /// Witness for `φ(point)`: a commitment to `(φ(X) − φ(point)) / (X − point)`.
    pub fn create_witness(&self, poly: &Polynomial, point: Scalar) -> Result<EvalProof, KzgError> {
        if poly.coeffs().len() > self.size() {
            return Err(KzgError::DegreeTooLarge {
                coeffs: poly.coeffs().len(),
                max: self.size(),
            });
        }
        let (quotient, value) = poly.divide_by_linear(point);
        let witness = self.commit_poly(&quotient)?.0;
        Ok(EvalProof {
            point,
            value,
            witness,
        })
    }

    /// Checks `e(C − v·g, h) = e(w, τ·h − z·h)`.
    ///
    /// Evaluated as `e(C − v·g + z·w, h) · e(−w, τ·h) = 1`, which moves the
    /// point-dependent term into G1.
    pub fn verify_eval(
        &self,
        commitment: &Commitment,
        point: Scalar,
        value: Scalar,
        witness: &GroupElement,
    ) -> bool {
        let g = self.powers[0];
        let lhs = commitment.0 - g * value + *witness * point;
        pairing_product_is_identity(&[
            (lhs, self.verifier_powers[0]),
            (-*witness, self.verifier_powers[1]),
        ])
    }

    /// Convenience wrapper over [`KzgParams::verify_eval`].
    pub fn verify_proof(&self, commitment: &Commitment, proof: &EvalProof) -> bool {
        self.verify_eval(commitment, proof.point, proof.value, &proof.witness)
    }

    /// `C + δ·ℓᵢ`: the commitment to the vector with `vᵢ += δ`.
    pub fn update_commitment(
        &self,
        commitment: &Commitment,
        index: u64,
        delta: Scalar,
    ) -> Result<Commitment, KzgError> {
        let basis = self
            .lagrange
            .get(usize::try_from(index).unwrap_or(usize::MAX))
            .ok_or(KzgError::IndexOutOfRange {
                index,
                size: self.size(),
            })?;
        if delta.is_zero() {
            return Ok(*commitment);
        }
        Ok(Commitment(commitment.0 + *basis * delta))
    }

    fn check_index_set(&self, indices: &[u64]) -> Result<(), KzgError> {
        if indices.is_empty() {
            return Err(KzgError::InvalidIndexSet("empty"));
        }
        if let Some(&index) = indices.iter().find(|&&i| i >= self.size() as u64) {
            return Err(KzgError::IndexOutOfRange {
                index,
                size: self.size(),
            });
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(KzgError::InvalidIndexSet("repeated index"));
        }
        Ok(())
    }

    /// Batch opening of `v` at every index in `indices`.
    ///
    /// The witness commits to `q_I = (φ − R_I) / A_I` where `A_I` vanishes on
    /// `I` and `R_I` interpolates the opened values.
    pub fn prove_subvector(
        &self,
        values: &[Scalar],
        indices: &[u64],
    ) -> Result<SubvectorProof, KzgError> {
        if values.len() != self.size() {
            return Err(KzgError::LengthMismatch {
                expected: self.size(),
                got: values.len(),
            });
        }
        self.check_index_set(indices)?;
        let mut indices = indices.to_vec();
        indices.sort_unstable();
        let opened: Vec<Scalar> = indices.iter().map(|&i| values[i as usize]).collect();
        let xs: Vec<Scalar> = indices.iter().map(|&i| Scalar::from_u64(i)).collect();

        let phi = Polynomial::interpolate_domain(values);
        let remainder_poly = Polynomial::interpolate(&xs, &opened).expect("distinct indices");
        let vanishing = Polynomial::from_roots(&xs);
        let (quotient, rem) = (&phi - &remainder_poly).div_rem(&vanishing);
        debug_assert!(rem.is_zero(), "φ − R_I vanishes on I");
        Ok(SubvectorProof {
            indices,
            values: opened,
            witness: self.commit_poly(&quotient)?.0,
        })
    }

    /// Checks `e(C − [R_I(τ)]₁, h) = e(π, [A_I(τ)]₂)`, recomputing `R_I` and
    /// `A_I` from the claimed indices and values. Malformed input is simply
    /// rejected.
    pub fn verify_subvector(
        &self,
        commitment: &Commitment,
        indices: &[u64],
        values: &[Scalar],
        witness: &GroupElement,
    ) -> bool {
        if indices.len() != values.len() || self.check_index_set(indices).is_err() {
            return false;
        }
        let xs: Vec<Scalar> = indices.iter().map(|&i| Scalar::from_u64(i)).collect();
        let Some(remainder_poly) = Polynomial::interpolate(&xs, values) else {
            return false;
        };
        let vanishing = Polynomial::from_roots(&xs);
        let Ok(remainder_commit) = self.commit_poly(&remainder_poly) else {
            return false;
        };
        let vcoeffs = vanishing.coeffs();
        if vcoeffs.len() > self.verifier_powers.len() {
            return false;
        }
        let vanishing_commit =
            multi_scalar_mul_verifier(vcoeffs, &self.verifier_powers[..vcoeffs.len()])
                .expect("equal lengths");
        pairing_product_is_identity(&[
            (commitment.0 - remainder_commit.0, self.verifier_powers[0]),
            (-*witness, vanishing_commit),
        ])
    }

    pub fn verify_subvector_proof(&self, commitment: &Commitment, proof: &SubvectorProof) -> bool {
        self.verify_subvector(commitment, &proof.indices, &proof.values, &proof.witness)
    }

    /// Framed encoding: `[n as u32] [powers] [lagrange] [verifier powers]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.frame(&(self.size() as u32).to_be_bytes());
        let cat = |pts: &mut dyn Iterator<Item = Vec<u8>>| pts.flatten().collect::<Vec<u8>>();
        w.frame(&cat(&mut self.powers.iter().map(|p| p.to_bytes().to_vec())));
        w.frame(&cat(&mut self.lagrange.iter().map(|p| p.to_bytes().to_vec())));
        w.frame(&cat(&mut self.verifier_powers.iter().map(|p| p.to_bytes().to_vec())));
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let size_frame = r.frame()?;
        let n = u32::from_be_bytes(
            size_frame
                .try_into()
                .map_err(|_| DecodeError::invalid("parameter size"))?,
        ) as usize;
        if n == 0 || n > MAX_SIZE {
            return Err(DecodeError::invalid("parameter size"));
        }
        let powers = decode_points(r.frame()?, n, GROUP_BYTES, GroupElement::from_bytes)?;
        let lagrange = decode_points(r.frame()?, n, GROUP_BYTES, GroupElement::from_bytes)?;
        let verifier_powers =
            decode_points(r.frame()?, n + 1, VERIFIER_BYTES, VerifierElement::from_bytes)?;
        r.finish()?;
        Ok(KzgParams {
            powers,
            lagrange,
            verifier_powers,
        })
    }
}

fn decode_points<T>(
    frame: &[u8],
    count: usize,
    width: usize,
    decode: impl Fn(&[u8]) -> Result<T, DecodeError>,
) -> Result<Vec<T>, DecodeError> {
    if frame.len() != count * width {
        return Err(DecodeError::invalid("point list length"));
    }
    frame.chunks(width).map(decode).collect()
}

impl EvalProof {
    /// `point ‖ value ‖ witness`, 112 bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.point.to_bytes())
            .raw(&self.value.to_bytes())
            .raw(&self.witness.to_bytes());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let point = Scalar::from_bytes(&r.array::<SCALAR_BYTES>()?)?;
        let value = Scalar::from_bytes(&r.array::<SCALAR_BYTES>()?)?;
        let witness = GroupElement::from_bytes(r.raw(GROUP_BYTES)?)?;
        r.finish()?;
        Ok(EvalProof {
            point,
            value,
            witness,
        })
    }
}

impl SubvectorProof {
    /// `count:u32 ‖ indices:u64* ‖ values:32B* ‖ witness:48B`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.indices.len() as u32);
        for i in &self.indices {
            w.u64(*i);
        }
        for v in &self.values {
            w.raw(&v.to_bytes());
        }
        w.raw(&self.witness.to_bytes());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let count = r.u32()? as usize;
        if count > MAX_SIZE {
            return Err(DecodeError::invalid("subvector size"));
        }
        let indices = (0..count).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
        let values = (0..count)
            .map(|_| Scalar::from_bytes(&r.array::<SCALAR_BYTES>()?))
            .collect::<Result<Vec<_>, _>>()?;
        let witness = GroupElement::from_bytes(r.raw(GROUP_BYTES)?)?;
        r.finish()?;
        Ok(SubvectorProof {
            indices,
            values,
            witness,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn s(v: u64) -> Scalar {
        Scalar::from_u64(v)
    }

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    /// ψᵢ(τ) straight from the product definition, one inversion per factor.
    fn lagrange_at(n: u64, i: u64, tau: Scalar) -> Scalar {
        (0..n).filter(|&j| j != i).fold(Scalar::ONE, |acc, j| {
            acc * (tau - s(j)) * (s(i) - s(j)).inverse().unwrap()
        })
    }

    /// Independent interpolation oracle: solve the Vandermonde system by
    /// Gaussian elimination.
    fn vandermonde_interpolate(values: &[Scalar]) -> Polynomial {
        let n = values.len();
        let mut m: Vec<Vec<Scalar>> = (0..n)
            .map(|i| {
                let mut row: Vec<Scalar> = (0..n).map(|j| s(i as u64).pow(j as u64)).collect();
                row.push(values[i]);
                row
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n).find(|&r| !m[r][col].is_zero()).unwrap();
            m.swap(col, pivot);
            let inv = m[col][col].inverse().unwrap();
            for x in m[col][col..].iter_mut() {
                *x *= inv;
            }
            for r in 0..n {
                if r != col && !m[r][col].is_zero() {
                    let f = m[r][col];
                    let pivot_row = m[col].clone();
                    for (x, p) in m[r][col..].iter_mut().zip(&pivot_row[col..]) {
                        *x -= f * p;
                    }
                }
            }
        }
        Polynomial::new(m.into_iter().map(|row| row[n]).collect())
    }

    #[test]
    fn setup_size_one() {
        let p = KzgParams::setup(1, s(5)).unwrap();
        let g = GroupElement::generator();
        assert_eq!(p.powers(), &[g]);
        assert_eq!(p.lagrange_basis(), &[g]);
    }

    #[test]
    fn setup_size_two_lagrange_values() {
        let p = KzgParams::setup(2, s(3)).unwrap();
        let g = GroupElement::generator();
        // oracle values
        assert_eq!(lagrange_at(2, 0, s(3)), -s(2));
        assert_eq!(lagrange_at(2, 1, s(3)), s(3));
        assert_eq!(p.lagrange_basis()[0], g * (-s(2)));
        assert_eq!(p.lagrange_basis()[1], g * s(3));
        assert_eq!(p.powers(), &[g, g * s(3)]);
    }

    #[test]
    fn setup_lagrange_matches_product_formula() {
        let tau = s(1_000_003);
        let p = KzgParams::setup(7, tau).unwrap();
        let g = GroupElement::generator();
        for i in 0..7 {
            assert_eq!(p.lagrange_basis()[i as usize], g * lagrange_at(7, i, tau));
        }
    }

    #[test]
    fn setup_rejects_degenerate_input() {
        assert_eq!(KzgParams::setup(0, s(9)), Err(KzgError::ZeroSize));
        assert_eq!(KzgParams::setup(4, s(0)), Err(KzgError::DegenerateTrapdoor));
        assert_eq!(KzgParams::setup(4, s(3)), Err(KzgError::DegenerateTrapdoor));
        assert!(KzgParams::setup(4, s(4)).is_ok());
        assert_eq!(KzgParams::setup(MAX_SIZE + 1, s(9)), Err(KzgError::TooLarge(MAX_SIZE + 1)));
    }

    #[test]
    fn all_ones_vector_commits_to_generator() {
        for n in 1..=8 {
            let p = KzgParams::setup_seeded(n, n as u64).unwrap();
            let c = p.commit_vector(&vec![Scalar::ONE; n]).unwrap();
            assert_eq!(c.0, p.powers()[0]);
        }
    }

    #[test]
    fn commit_poly_basic_cases() {
        let tau = s(77);
        let p = KzgParams::setup(8, tau).unwrap();
        let g = GroupElement::generator();
        assert_eq!(p.commit_poly(&Polynomial::constant(s(12))).unwrap().0, g * s(12));
        assert_eq!(p.commit_poly(&Polynomial::x()).unwrap().0, p.powers()[1]);
        let mut rng = rng(4);
        let poly = Polynomial::new((0..8).map(|_| Scalar::random(&mut rng)).collect());
        assert_eq!(p.commit_poly(&poly).unwrap().0, g * poly.evaluate(tau));
        let too_big = Polynomial::new(vec![Scalar::ONE; 9]);
        assert_eq!(
            p.commit_poly(&too_big),
            Err(KzgError::DegreeTooLarge { coeffs: 9, max: 8 })
        );
    }

    #[test]
    fn commit_vector_cases() {
        let p = KzgParams::setup_seeded(8, 11).unwrap();
        assert!(p.commit_vector(&[Scalar::ZERO; 8]).unwrap().0.is_identity());
        for i in 0..8 {
            let mut v = vec![Scalar::ZERO; 8];
            v[i] = Scalar::ONE;
            assert_eq!(p.commit_vector(&v).unwrap().0, p.lagrange_basis()[i]);
        }
        let mut rng = rng(5);
        let v: Vec<Scalar> = (0..8).map(|_| Scalar::random(&mut rng)).collect();
        let via_poly = p.commit_poly(&vandermonde_interpolate(&v)).unwrap();
        assert_eq!(p.commit_vector(&v).unwrap(), via_poly);
        assert_eq!(
            p.commit_vector(&v[..3]),
            Err(KzgError::LengthMismatch { expected: 8, got: 3 })
        );
    }

    #[test]
    fn interpolation_agrees_with_vandermonde_oracle() {
        let mut rng = rng(6);
        let v: Vec<Scalar> = (0..10).map(|_| Scalar::random(&mut rng)).collect();
        assert_eq!(Polynomial::interpolate_domain(&v), vandermonde_interpolate(&v));
    }

    #[test]
    fn witness_edge_cases() {
        let p = KzgParams::setup_seeded(4, 1).unwrap();
        let proof = p.create_witness(&Polynomial::constant(s(42)), s(17)).unwrap();
        assert!(proof.witness.is_identity());
        assert_eq!(proof.value, s(42));
        let proof = p.create_witness(&Polynomial::x(), Scalar::ZERO).unwrap();
        assert_eq!(proof.witness, GroupElement::generator());
        assert_eq!(proof.value, Scalar::ZERO);
    }

    #[test]
    fn witness_verifies_and_rejects_wrong_value() {
        let p = KzgParams::setup_seeded(8, 2).unwrap();
        let mut rng = rng(7);
        let poly = Polynomial::new((0..8).map(|_| Scalar::random(&mut rng)).collect());
        let c = p.commit_poly(&poly).unwrap();
        let proof = p.create_witness(&poly, s(3)).unwrap();
        // synthetic-division oracle
        let (_, expected) = poly.divide_by_linear(s(3));
        assert_eq!(proof.value, expected);
        assert!(p.verify_proof(&c, &proof));
        assert!(!p.verify_eval(&c, s(3), proof.value + Scalar::ONE, &proof.witness));
        assert!(!p.verify_eval(&c, s(4), proof.value, &proof.witness));
    }

    #[test]
    fn zero_polynomial_opens_everywhere() {
        let p = KzgParams::setup_seeded(4, 3).unwrap();
        let id = GroupElement::identity();
        for z in [0, 1, 99] {
            assert!(p.verify_eval(&Commitment::identity(), s(z), Scalar::ZERO, &id));
        }
    }

    #[test]
    fn update_matches_recommit() {
        let p = KzgParams::setup_seeded(8, 4).unwrap();
        let mut rng = rng(8);
        let mut v: Vec<Scalar> = (0..8).map(|_| Scalar::random(&mut rng)).collect();
        let c = p.commit_vector(&v).unwrap();
        assert_eq!(p.update_commitment(&c, 3, Scalar::ZERO).unwrap(), c);
        let delta = Scalar::random(&mut rng);
        let updated = p.update_commitment(&c, 5, delta).unwrap();
        v[5] += delta;
        assert_eq!(updated, p.commit_vector(&v).unwrap());
        assert_eq!(
            p.update_commitment(&c, 8, delta),
            Err(KzgError::IndexOutOfRange { index: 8, size: 8 })
        );
    }

    #[test]
    fn telescoping_updates_reach_all_ones() {
        let p = KzgParams::setup_seeded(6, 5).unwrap();
        let mut c = p.commit_vector(&[Scalar::ZERO; 6]).unwrap();
        for i in 0..6 {
            c = p.update_commitment(&c, i, Scalar::ONE).unwrap();
        }
        assert_eq!(c, p.commit_vector(&[Scalar::ONE; 6]).unwrap());
    }

    #[test]
    fn subvector_singleton_agrees_with_single_point() {
        let p = KzgParams::setup_seeded(8, 6).unwrap();
        let mut rng = rng(9);
        let v: Vec<Scalar> = (0..8).map(|_| Scalar::random(&mut rng)).collect();
        let c = p.commit_vector(&v).unwrap();
        let sub = p.prove_subvector(&v, &[4]).unwrap();
        let single = p
            .create_witness(&Polynomial::interpolate_domain(&v), s(4))
            .unwrap();
        assert_eq!(sub.witness, single.witness);
        assert!(p.verify_subvector_proof(&c, &sub));
        assert!(p.verify_proof(&c, &single));
    }

    #[test]
    fn subvector_full_domain_has_identity_witness() {
        let p = KzgParams::setup_seeded(5, 7).unwrap();
        let mut rng = rng(10);
        let v: Vec<Scalar> = (0..5).map(|_| Scalar::random(&mut rng)).collect();
        let c = p.commit_vector(&v).unwrap();
        let proof = p.prove_subvector(&v, &[0, 1, 2, 3, 4]).unwrap();
        assert!(proof.witness.is_identity());
        assert!(p.verify_subvector_proof(&c, &proof));
    }

    #[test]
    fn subvector_soundness_probes() {
        let p = KzgParams::setup_seeded(16, 8).unwrap();
        let mut rng = rng(11);
        let v: Vec<Scalar> = (0..16).map(|_| Scalar::random(&mut rng)).collect();
        let c = p.commit_vector(&v).unwrap();
        let proof = p.prove_subvector(&v, &[9, 1, 5]).unwrap();
        assert_eq!(proof.indices, vec![1, 5, 9]);
        assert!(p.verify_subvector_proof(&c, &proof));

        let mut perturbed = proof.clone();
        perturbed.values[1] += Scalar::ONE;
        assert!(!p.verify_subvector_proof(&c, &perturbed));

        let mut swapped = proof.clone();
        swapped.values.swap(0, 2);
        assert!(!p.verify_subvector_proof(&c, &swapped));
    }

    #[test]
    fn subvector_rejects_malformed_sets() {
        let p = KzgParams::setup_seeded(4, 9).unwrap();
        let v = vec![Scalar::ONE; 4];
        assert_eq!(p.prove_subvector(&v, &[]), Err(KzgError::InvalidIndexSet("empty")));
        assert_eq!(
            p.prove_subvector(&v, &[1, 1]),
            Err(KzgError::InvalidIndexSet("repeated index"))
        );
        assert_eq!(
            p.prove_subvector(&v, &[4]),
            Err(KzgError::IndexOutOfRange { index: 4, size: 4 })
        );
        let c = p.commit_vector(&v).unwrap();
        let id = GroupElement::identity();
        assert!(!p.verify_subvector(&c, &[], &[], &id));
        assert!(!p.verify_subvector(&c, &[0, 1], &[Scalar::ONE], &id));
        assert!(!p.verify_subvector(&c, &[7], &[Scalar::ONE], &id));
    }

    #[test]
    fn encodings_round_trip() {
        let p = KzgParams::setup_seeded(4, 10).unwrap();
        assert_eq!(KzgParams::from_bytes(&p.to_bytes()).unwrap(), p);
        let v = vec![s(1), s(2), s(3), s(4)];
        let proof = p.prove_subvector(&v, &[0, 2]).unwrap();
        assert_eq!(SubvectorProof::from_bytes(&proof.to_bytes()).unwrap(), proof);
        let eval = p.create_witness(&Polynomial::interpolate_domain(&v), s(2)).unwrap();
        assert_eq!(eval.to_bytes().len(), 112);
        assert_eq!(EvalProof::from_bytes(&eval.to_bytes()).unwrap(), eval);
    }
}
