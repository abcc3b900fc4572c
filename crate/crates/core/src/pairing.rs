//! Prime-order pairing groups.
//!
//! The protocol is written against a symmetric pairing `e: G × G → GT`.
//! Practical curves are asymmetric, so this module realizes it over
//! BLS12-381 with two fixed generator bases: everything that is committed
//! or signed lives in the first group ([`GroupElement`], G1), and the
//! verifier-side terms of a pairing check (the `g^τ` shift and its powers)
//! live in the second group ([`VerifierElement`], G2). The point `s·g` in G1
//! and `s·h` in G2 are the two images of the same symmetric element, which
//! is all the verification equations need.
//!
//! BLS12-381 has a 255-bit prime order and roughly 117-128 bits of security.
//! Arithmetic is not constant time.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use ark_bls12_381::{Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::scalar_mul::BatchMulPreprocessing;
use ark_ec::{AdditiveGroup, CurveGroup, PrimeGroup, VariableBaseMSM};
use ark_ff::{BigInteger, Field, PrimeField, UniformRand, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::RngCore;
use thiserror::Error;

use crate::codec::DecodeError;

/// Width of a canonical scalar encoding.
pub const SCALAR_BYTES: usize = 32;
/// Width of a compressed [`GroupElement`] encoding.
pub const GROUP_BYTES: usize = 48;
/// Width of a compressed [`VerifierElement`] encoding.
pub const VERIFIER_BYTES: usize = 96;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairingError {
    #[error("length mismatch: {scalars} scalars for {points} points")]
    LengthMismatch { scalars: usize, points: usize },
}

/// An element of the scalar field `Z_p`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Scalar(pub(crate) Fr);

impl Scalar {
    pub const ZERO: Scalar = Scalar(Fr::ZERO);
    pub const ONE: Scalar = Scalar(Fr::ONE);

    pub fn from_u64(v: u64) -> Self {
        Scalar(Fr::from(v))
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        // `UniformRand` wants a sized rng.
        let mut seed = [0u8; 64];
        rng.fill_bytes(&mut seed);
        Scalar::from_be_bytes_mod_order(&seed)
    }

    /// Uniform and nonzero.
    pub fn random_nonzero<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let s = Scalar::random(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    /// Interprets `bytes` as a big-endian integer and reduces it mod p.
    pub fn from_be_bytes_mod_order(bytes: &[u8]) -> Self {
        Scalar(Fr::from_be_bytes_mod_order(bytes))
    }

    /// Canonical decoding: rejects encodings of integers `>= p`.
    pub fn from_bytes(bytes: &[u8; SCALAR_BYTES]) -> Result<Self, DecodeError> {
        let s = Scalar::from_be_bytes_mod_order(bytes);
        if &s.to_bytes() == bytes {
            Ok(s)
        } else {
            Err(DecodeError::invalid("scalar (not reduced mod p)"))
        }
    }

    /// Big-endian, fixed 32 bytes.
    pub fn to_bytes(&self) -> [u8; SCALAR_BYTES] {
        let be = self.0.into_bigint().to_bytes_be();
        let mut out = [0u8; SCALAR_BYTES];
        out[SCALAR_BYTES - be.len()..].copy_from_slice(&be);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn inverse(&self) -> Option<Scalar> {
        self.0.inverse().map(Scalar)
    }

    pub fn pow(&self, exp: u64) -> Scalar {
        Scalar(self.0.pow([exp]))
    }

    /// Group order `p` as big-endian bytes.
    pub fn modulus_be_bytes() -> [u8; SCALAR_BYTES] {
        let be = Fr::MODULUS.to_bytes_be();
        let mut out = [0u8; SCALAR_BYTES];
        out[SCALAR_BYTES - be.len()..].copy_from_slice(&be);
        out
    }

    /// Little-endian bit decomposition, least significant bit first.
    pub fn to_bits_le(&self) -> Vec<bool> {
        self.0.into_bigint().to_bits_le()
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar(0x{})", hex::encode(self.to_bytes()))
    }
}

impl From<u64> for Scalar {
    fn from(v: u64) -> Self {
        Scalar::from_u64(v)
    }
}

macro_rules! scalar_binop {
    ($trait:ident, $method:ident, $assign_trait:ident, $assign:ident, $op:tt) => {
        impl $trait for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                Scalar(self.0 $op rhs.0)
            }
        }
        impl<'a> $trait<&'a Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &'a Scalar) -> Scalar {
                Scalar(self.0 $op rhs.0)
            }
        }
        impl $assign_trait for Scalar {
            fn $assign(&mut self, rhs: Scalar) {
                self.0 = self.0 $op rhs.0;
            }
        }
    };
}

scalar_binop!(Add, add, AddAssign, add_assign, +);
scalar_binop!(Sub, sub, SubAssign, sub_assign, -);
scalar_binop!(Mul, mul, MulAssign, mul_assign, *);

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::ZERO, |acc, s| acc + s)
    }
}

/// Inverts every element of `values` with a single field inversion.
///
/// Returns `None` if any element is zero.
pub fn batch_inverse(values: &[Scalar]) -> Option<Vec<Scalar>> {
    let mut prefix = Vec::with_capacity(values.len());
    let mut acc = Scalar::ONE;
    for v in values {
        if v.is_zero() {
            return None;
        }
        prefix.push(acc);
        acc *= *v;
    }
    let mut inv = acc.inverse()?;
    let mut out = vec![Scalar::ZERO; values.len()];
    for i in (0..values.len()).rev() {
        out[i] = inv * prefix[i];
        inv *= values[i];
    }
    Some(out)
}

macro_rules! point_type {
    ($(#[$meta:meta])* $name:ident, $proj:ty, $affine:ty, $bytes:expr, $what:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq)]
        pub struct $name(pub(crate) $proj);

        impl $name {
            pub fn identity() -> Self {
                $name(<$proj>::zero())
            }

            pub fn generator() -> Self {
                $name(<$proj>::generator())
            }

            pub fn is_identity(&self) -> bool {
                self.0.is_zero()
            }

            /// Compressed encoding of the underlying curve point.
            pub fn to_bytes(&self) -> [u8; $bytes] {
                let mut out = Vec::with_capacity($bytes);
                self.0
                    .into_affine()
                    .serialize_compressed(&mut out)
                    .expect("serializing into a Vec cannot fail");
                out.try_into().expect("compressed point width")
            }

            /// Decodes a compressed point, checking curve and subgroup
            /// membership.
            pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
                if bytes.len() != $bytes {
                    return Err(DecodeError::invalid($what));
                }
                <$affine>::deserialize_compressed(bytes)
                    .map(|p| $name(p.into()))
                    .map_err(|_| DecodeError::invalid($what))
            }

            pub fn double(&self) -> Self {
                $name(self.0.double())
            }
        }

        impl Default for $name {
            fn default() -> Self {
                Self::identity()
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}(0x{})", stringify!($name), hex::encode(&self.to_bytes()[..8]))
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl AddAssign for $name {
            fn add_assign(&mut self, rhs: $name) {
                self.0 += rhs.0;
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name(self.0 - rhs.0)
            }
        }

        impl SubAssign for $name {
            fn sub_assign(&mut self, rhs: $name) {
                self.0 -= rhs.0;
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }

        impl Mul<Scalar> for $name {
            type Output = $name;
            fn mul(self, rhs: Scalar) -> $name {
                $name(self.0 * rhs.0)
            }
        }

        impl<'a> Mul<&'a Scalar> for &'a $name {
            type Output = $name;
            fn mul(self, rhs: &'a Scalar) -> $name {
                $name(self.0 * rhs.0)
            }
        }

        impl Sum for $name {
            fn sum<I: Iterator<Item = $name>>(iter: I) -> $name {
                iter.fold($name::identity(), |acc, p| acc + p)
            }
        }
    };
}

point_type!(
    /// An element of the first (commitment) group G1.
    GroupElement,
    G1Projective,
    G1Affine,
    GROUP_BYTES,
    "G1 point"
);

point_type!(
    /// An element of the second (verification) group G2.
    VerifierElement,
    G2Projective,
    G2Affine,
    VERIFIER_BYTES,
    "G2 point"
);

/// An element of the target group GT, written multiplicatively.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct TargetElement(PairingOutput<Bls12_381>);

impl TargetElement {
    pub fn identity() -> Self {
        TargetElement(PairingOutput::zero())
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_zero()
    }

    pub fn pow(&self, exp: Scalar) -> Self {
        TargetElement(self.0 * exp.0)
    }
}

impl Mul for TargetElement {
    type Output = TargetElement;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: TargetElement) -> TargetElement {
        // PairingOutput uses additive notation for the GT group law.
        TargetElement(self.0 + rhs.0)
    }
}

impl fmt::Debug for TargetElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_identity() { "TargetElement(1)" } else { "TargetElement(..)" })
    }
}

/// `s·P`.
pub fn scalar_mul(s: Scalar, p: GroupElement) -> GroupElement {
    p * s
}

/// The bilinear map.
///
/// Inputs are always subgroup members: points only enter the crate through
/// arithmetic on generators or through [`GroupElement::from_bytes`] /
/// [`VerifierElement::from_bytes`], both of which check membership.
pub fn pairing(x: &GroupElement, y: &VerifierElement) -> TargetElement {
    TargetElement(Bls12_381::pairing(x.0.into_affine(), y.0.into_affine()))
}

/// True iff `Π e(xᵢ, yᵢ) = 1`, evaluated with one shared final
/// exponentiation.
pub fn pairing_product_is_identity(pairs: &[(GroupElement, VerifierElement)]) -> bool {
    let lhs: Vec<G1Affine> =
        G1Projective::normalize_batch(&pairs.iter().map(|(x, _)| x.0).collect::<Vec<_>>());
    let rhs: Vec<G2Affine> =
        G2Projective::normalize_batch(&pairs.iter().map(|(_, y)| y.0).collect::<Vec<_>>());
    Bls12_381::multi_pairing(lhs, rhs).is_zero()
}

/// `Σ sᵢ·Pᵢ`.
pub fn multi_scalar_mul(
    scalars: &[Scalar],
    points: &[GroupElement],
) -> Result<GroupElement, PairingError> {
    if scalars.len() != points.len() {
        return Err(PairingError::LengthMismatch {
            scalars: scalars.len(),
            points: points.len(),
        });
    }
    if scalars.is_empty() {
        return Ok(GroupElement::identity());
    }
    let bases = G1Projective::normalize_batch(&points.iter().map(|p| p.0).collect::<Vec<_>>());
    let exps: Vec<Fr> = scalars.iter().map(|s| s.0).collect();
    Ok(GroupElement(
        G1Projective::msm(&bases, &exps).expect("lengths checked above"),
    ))
}

/// `Σ sᵢ·Qᵢ` in the verification group.
pub fn multi_scalar_mul_verifier(
    scalars: &[Scalar],
    points: &[VerifierElement],
) -> Result<VerifierElement, PairingError> {
    if scalars.len() != points.len() {
        return Err(PairingError::LengthMismatch {
            scalars: scalars.len(),
            points: points.len(),
        });
    }
    if scalars.is_empty() {
        return Ok(VerifierElement::identity());
    }
    let bases = G2Projective::normalize_batch(&points.iter().map(|p| p.0).collect::<Vec<_>>());
    let exps: Vec<Fr> = scalars.iter().map(|s| s.0).collect();
    Ok(VerifierElement(
        G2Projective::msm(&bases, &exps).expect("lengths checked above"),
    ))
}

/// `[s·base for s in scalars]` using a shared window table for `base`.
pub fn fixed_base_mul(base: &GroupElement, scalars: &[Scalar]) -> Vec<GroupElement> {
    if scalars.is_empty() {
        return Vec::new();
    }
    let table = BatchMulPreprocessing::new(base.0, scalars.len());
    let exps: Vec<Fr> = scalars.iter().map(|s| s.0).collect();
    table
        .batch_mul(&exps)
        .into_iter()
        .map(|p| GroupElement(p.into()))
        .collect()
}

/// Verification-group counterpart of [`fixed_base_mul`].
pub fn fixed_base_mul_verifier(base: &VerifierElement, scalars: &[Scalar]) -> Vec<VerifierElement> {
    if scalars.is_empty() {
        return Vec::new();
    }
    let table = BatchMulPreprocessing::new(base.0, scalars.len());
    let exps: Vec<Fr> = scalars.iter().map(|s| s.0).collect();
    table
        .batch_mul(&exps)
        .into_iter()
        .map(|p| VerifierElement(p.into()))
        .collect()
}

/// A uniformly random G1 element (test and fixture helper).
pub fn random_group_element<R: RngCore>(rng: &mut R) -> GroupElement {
    GroupElement(G1Projective::rand(rng))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(0x5eed)
    }

    /// Textbook double-and-add, independent of the curve library's scalar
    /// multiplication.
    pub(crate) fn double_and_add(s: Scalar, p: GroupElement) -> GroupElement {
        let mut acc = GroupElement::identity();
        for bit in s.to_bits_le().into_iter().rev() {
            acc = acc.double();
            if bit {
                acc += p;
            }
        }
        acc
    }

    #[test]
    fn zero_and_one_scalars() {
        let p = GroupElement::generator() * Scalar::from_u64(77);
        assert!(scalar_mul(Scalar::ZERO, p).is_identity());
        assert_eq!(scalar_mul(Scalar::ONE, p), p);
    }

    #[test]
    fn scalar_mul_distributes_over_scalar_addition() {
        let mut rng = rng();
        let p = GroupElement::generator() * Scalar::random(&mut rng);
        for _ in 0..100 {
            let a = Scalar::random(&mut rng);
            let b = Scalar::random(&mut rng);
            let lhs = scalar_mul(a + b, p);
            assert_eq!(lhs, double_and_add(a, p) + double_and_add(b, p));
        }
    }

    #[test]
    fn double_and_add_matches_library_on_small_values() {
        let g = GroupElement::generator();
        assert_eq!(double_and_add(Scalar::from_u64(5), g), g + g + g + g + g);
    }

    #[test]
    fn bilinearity_small_scalars() {
        let g = GroupElement::generator();
        let h = VerifierElement::generator();
        let lhs = pairing(&(g * Scalar::from_u64(2)), &(h * Scalar::from_u64(3)));
        assert_eq!(lhs, pairing(&g, &h).pow(Scalar::from_u64(6)));
    }

    #[test]
    fn bilinearity_random() {
        let mut rng = rng();
        let g = GroupElement::generator();
        let h = VerifierElement::generator();
        let base = pairing(&g, &h);
        for _ in 0..100 {
            let a = Scalar::random(&mut rng);
            let b = Scalar::random(&mut rng);
            assert_eq!(pairing(&(g * a), &(h * b)), base.pow(a * b));
        }
    }

    #[test]
    fn non_degenerate() {
        assert!(!pairing(&GroupElement::generator(), &VerifierElement::generator()).is_identity());
    }

    #[test]
    fn identity_pairs_to_one() {
        let h = VerifierElement::generator() * Scalar::from_u64(9);
        assert!(pairing(&GroupElement::identity(), &h).is_identity());
        assert!(pairing(&GroupElement::generator(), &VerifierElement::identity()).is_identity());
    }

    #[test]
    fn product_check_matches_pairwise_equality() {
        let g = GroupElement::generator();
        let h = VerifierElement::generator();
        let a = Scalar::from_u64(11);
        // e(a·g, h) · e(-g, a·h) = 1
        assert!(pairing_product_is_identity(&[(g * a, h), (-g, h * a)]));
        assert!(!pairing_product_is_identity(&[(g * a, h), (-g, h)]));
    }

    #[test]
    fn msm_edge_cases() {
        assert!(multi_scalar_mul(&[], &[]).unwrap().is_identity());
        let p = GroupElement::generator() * Scalar::from_u64(3);
        assert_eq!(multi_scalar_mul(&[Scalar::ONE], &[p]).unwrap(), p);
        assert_eq!(
            multi_scalar_mul(&[Scalar::ONE], &[]),
            Err(PairingError::LengthMismatch { scalars: 1, points: 0 })
        );
    }

    #[test]
    fn msm_matches_naive_fold() {
        let mut rng = rng();
        for _ in 0..10 {
            let scalars: Vec<Scalar> = (0..8).map(|_| Scalar::random(&mut rng)).collect();
            let points: Vec<GroupElement> = (0..8).map(|_| random_group_element(&mut rng)).collect();
            let naive = scalars
                .iter()
                .zip(&points)
                .fold(GroupElement::identity(), |acc, (s, p)| acc + double_and_add(*s, *p));
            assert_eq!(multi_scalar_mul(&scalars, &points).unwrap(), naive);
        }
    }

    #[test]
    fn fixed_base_matches_plain_mul() {
        let mut rng = rng();
        let base = random_group_element(&mut rng);
        let scalars: Vec<Scalar> = (0..20).map(|_| Scalar::random(&mut rng)).collect();
        let batch = fixed_base_mul(&base, &scalars);
        for (s, p) in scalars.iter().zip(batch) {
            assert_eq!(p, base * *s);
        }
    }

    #[test]
    fn group_laws_on_random_triples() {
        let mut rng = rng();
        for _ in 0..20 {
            let a = random_group_element(&mut rng);
            let b = random_group_element(&mut rng);
            let c = random_group_element(&mut rng);
            let s = Scalar::random(&mut rng);
            assert_eq!((a + b) + c, a + (b + c));
            assert_eq!(a + b, b + a);
            assert_eq!((a + b) * s, a * s + b * s);
            assert!((a - a).is_identity());
        }
    }

    #[test]
    fn constructed_elements_are_in_prime_order_subgroup() {
        let mut rng = rng();
        let order = <ark_bls12_381::Fr as PrimeField>::MODULUS;
        for _ in 0..10 {
            let p = GroupElement::generator() * Scalar::random(&mut rng);
            assert!(p.0.mul_bigint(order).is_zero());
            let q = VerifierElement::generator() * Scalar::random(&mut rng);
            assert!(q.0.mul_bigint(order).is_zero());
        }
        assert!(G1Projective::generator().mul_bigint(order).is_zero());
    }

    #[test]
    fn scalar_encoding_round_trip_and_canonical() {
        let mut rng = rng();
        for _ in 0..50 {
            let s = Scalar::random(&mut rng);
            assert_eq!(Scalar::from_bytes(&s.to_bytes()).unwrap(), s);
        }
        assert_eq!(Scalar::from_u64(258).to_bytes()[30..], [1, 2]);
        assert!(Scalar::from_bytes(&Scalar::modulus_be_bytes()).is_err());
        assert!(Scalar::from_bytes(&[0xff; 32]).is_err());
    }

    #[test]
    fn point_encoding_round_trip() {
        let mut rng = rng();
        for _ in 0..20 {
            let p = random_group_element(&mut rng);
            assert_eq!(GroupElement::from_bytes(&p.to_bytes()).unwrap(), p);
            let q = VerifierElement::generator() * Scalar::random(&mut rng);
            assert_eq!(VerifierElement::from_bytes(&q.to_bytes()).unwrap(), q);
        }
        let id = GroupElement::identity();
        assert_eq!(GroupElement::from_bytes(&id.to_bytes()).unwrap(), id);
    }

    #[test]
    fn malformed_points_rejected() {
        assert!(GroupElement::from_bytes(&[0u8; 47]).is_err());
        assert!(GroupElement::from_bytes(&[0x12u8; 48]).is_err());
    }

    #[test]
    fn batch_inverse_matches_individual() {
        let mut rng = rng();
        let v: Vec<Scalar> = (0..9).map(|_| Scalar::random_nonzero(&mut rng)).collect();
        let inv = batch_inverse(&v).unwrap();
        for (x, y) in v.iter().zip(inv) {
            assert_eq!(*x * y, Scalar::ONE);
        }
        assert!(batch_inverse(&[Scalar::ONE, Scalar::ZERO]).is_none());
    }
}
