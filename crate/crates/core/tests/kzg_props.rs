use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use sendnet::kzg::{Commitment, Fixture, KzgParams, Polynomial};
use sendnet::pairing::{GroupElement, Scalar};

/// Coefficients of the polynomial through `(i, v[i])`, by summing scaled
/// Lagrange numerators directly.
fn lagrange_coeffs(v: &[Scalar]) -> Vec<Scalar> {
    let n = v.len();
    let mut out = vec![Scalar::ZERO; n];
    for (i, &vi) in v.iter().enumerate() {
        let mut num = vec![Scalar::ONE];
        let mut denom = Scalar::ONE;
        for j in (0..n).filter(|&j| j != i) {
            let xj = Scalar::from_u64(j as u64);
            let mut next = vec![Scalar::ZERO; num.len() + 1];
            for (k, &c) in num.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= c * xj;
            }
            num = next;
            denom *= Scalar::from_u64(i as u64) - xj;
        }
        let scale = vi * denom.inverse().unwrap();
        for (k, c) in num.into_iter().enumerate() {
            out[k] += c * scale;
        }
    }
    out
}

fn commit_naive(p: &KzgParams, coeffs: &[Scalar]) -> GroupElement {
    coeffs
        .iter()
        .zip(p.powers())
        .fold(GroupElement::identity(), |acc, (c, g)| acc + *g * *c)
}

fn horner(coeffs: &[Scalar], z: Scalar) -> Scalar {
    coeffs.iter().rev().fold(Scalar::ZERO, |acc, c| acc * z + *c)
}

fn vector(seed: u64, n: usize) -> Vec<Scalar> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| Scalar::random(&mut rng)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn vector_commitment_matches_naive_interpolation(n in 1usize..12, seed: u64) {
        let p = KzgParams::setup_seeded(n, seed).unwrap();
        let v = vector(seed ^ 1, n);
        let coeffs = lagrange_coeffs(&v);
        prop_assert_eq!(p.commit_vector(&v).unwrap().0, commit_naive(&p, &coeffs));
        prop_assert_eq!(Polynomial::interpolate_domain(&v), Polynomial::new(coeffs));
    }

    #[test]
    fn openings_verify_and_wrong_values_do_not(n in 1usize..10, seed: u64, z: u64) {
        let p = KzgParams::setup_seeded(n, seed).unwrap();
        let v = vector(seed ^ 2, n);
        let com = p.commit_vector(&v).unwrap();
        let coeffs = lagrange_coeffs(&v);
        let z = Scalar::from_u64(z);
        let proof = p.create_witness(&Polynomial::new(coeffs.clone()), z).unwrap();
        prop_assert_eq!(proof.value, horner(&coeffs, z));
        prop_assert!(p.verify_proof(&com, &proof));
        prop_assert!(!p.verify_eval(&com, z, proof.value + Scalar::ONE, &proof.witness));
        prop_assert!(!p.verify_eval(&com, z, proof.value, &(proof.witness + GroupElement::generator())));
    }

    #[test]
    fn commitments_are_additive(n in 1usize..10, seed: u64) {
        let p = KzgParams::setup_seeded(n, seed).unwrap();
        let a = vector(seed ^ 3, n);
        let b = vector(seed ^ 4, n);
        let sum: Vec<Scalar> = a.iter().zip(&b).map(|(x, y)| *x + *y).collect();
        let lhs = p.commit_vector(&a).unwrap().0 + p.commit_vector(&b).unwrap().0;
        prop_assert_eq!(lhs, p.commit_vector(&sum).unwrap().0);
    }

    #[test]
    fn update_equals_recommit(n in 1usize..16, seed: u64, index in 0usize..16, delta: u64) {
        let index = index % n;
        let p = KzgParams::setup_seeded(n, seed).unwrap();
        let mut v = vector(seed ^ 5, n);
        let com = p.commit_vector(&v).unwrap();
        let delta = Scalar::from_u64(delta);
        let updated = p.update_commitment(&com, index as u64, delta).unwrap();
        v[index] += delta;
        prop_assert_eq!(updated, p.commit_vector(&v).unwrap());
    }

    #[test]
    fn subvector_proofs(n in 2usize..12, seed: u64, mask in 1u32..4096) {
        let p = KzgParams::setup_seeded(n, seed).unwrap();
        let v = vector(seed ^ 6, n);
        let com = p.commit_vector(&v).unwrap();
        let mut set: Vec<u64> = (0..n as u64).filter(|i| mask & (1 << i) != 0).collect();
        if set.is_empty() {
            set.push(0);
        }
        let proof = p.prove_subvector(&v, &set).unwrap();
        prop_assert!(p.verify_subvector_proof(&com, &proof));
        let mut bad = proof.clone();
        bad.values[0] += Scalar::ONE;
        prop_assert!(!p.verify_subvector_proof(&com, &bad));
        prop_assert!(!p.verify_subvector_proof(&Commitment(com.0 + GroupElement::generator()), &proof));
    }

    #[test]
    fn fixtures_round_trip(n in 1usize..20, seed: u64) {
        let (_, fx) = Fixture::generate(seed, n).unwrap();
        prop_assert!(fx.verify());
        let back = Fixture::from_bytes(&fx.to_bytes()).unwrap();
        prop_assert_eq!(back, fx);
    }
}
