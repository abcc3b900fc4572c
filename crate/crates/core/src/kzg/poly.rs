//! Dense univariate polynomials over the scalar field.
//!
//! Everything here is the schoolbook O(n²) algorithm; sizes are capped at
//! [`super::MAX_SIZE`].

use std::ops::{Add, Mul, Sub};

use crate::pairing::{batch_inverse, Scalar};

/// Coefficients low to high, with no trailing zeros.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Polynomial {
    coeffs: Vec<Scalar>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<Scalar>) -> Self {
        while coeffs.last().is_some_and(Scalar::is_zero) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: Scalar) -> Self {
        Polynomial::new(vec![c])
    }

    /// The monomial `X`.
    pub fn x() -> Self {
        Polynomial::new(vec![Scalar::ZERO, Scalar::ONE])
    }

    pub fn coeffs(&self) -> &[Scalar] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn evaluate(&self, z: Scalar) -> Scalar {
        self.coeffs
            .iter()
            .rev()
            .fold(Scalar::ZERO, |acc, c| acc * z + *c)
    }

    pub fn scale(&self, k: Scalar) -> Self {
        Polynomial::new(self.coeffs.iter().map(|c| *c * k).collect())
    }

    /// `Π (X − rᵢ)`.
    pub fn from_roots(roots: &[Scalar]) -> Self {
        let mut coeffs = vec![Scalar::ONE];
        for r in roots {
            // multiply in place by (X − r)
            coeffs.insert(0, Scalar::ZERO);
            for j in 0..coeffs.len() - 1 {
                let next = coeffs[j + 1];
                coeffs[j] -= next * *r;
            }
        }
        Polynomial::new(coeffs)
    }

    /// Synthetic division by `(X − z)`: returns the quotient and `φ(z)`.
    pub fn divide_by_linear(&self, z: Scalar) -> (Polynomial, Scalar) {
        if self.coeffs.is_empty() {
            return (Polynomial::zero(), Scalar::ZERO);
        }
        let n = self.coeffs.len();
        let mut quotient = vec![Scalar::ZERO; n - 1];
        let mut carry = Scalar::ZERO;
        for i in (0..n).rev() {
            let c = self.coeffs[i] + carry * z;
            if i == 0 {
                return (Polynomial::new(quotient), c);
            }
            quotient[i - 1] = c;
            carry = c;
        }
        unreachable!()
    }

    /// Long division. Panics on a zero divisor.
    pub fn div_rem(&self, divisor: &Polynomial) -> (Polynomial, Polynomial) {
        let d_deg = divisor.degree().expect("division by the zero polynomial");
        let Some(n_deg) = self.degree() else {
            return (Polynomial::zero(), Polynomial::zero());
        };
        if n_deg < d_deg {
            return (Polynomial::zero(), self.clone());
        }
        let lead_inv = divisor.coeffs[d_deg]
            .inverse()
            .expect("trimmed polynomial has a nonzero leading coefficient");
        let mut rem = self.coeffs.clone();
        let mut quot = vec![Scalar::ZERO; n_deg - d_deg + 1];
        for i in (0..quot.len()).rev() {
            let coef = rem[i + d_deg] * lead_inv;
            quot[i] = coef;
            if coef.is_zero() {
                continue;
            }
            for (j, d) in divisor.coeffs.iter().enumerate() {
                rem[i + j] -= coef * *d;
            }
        }
        rem.truncate(d_deg);
        (Polynomial::new(quot), Polynomial::new(rem))
    }

    /// The unique polynomial of degree `< xs.len()` through `(xᵢ, yᵢ)`.
    ///
    /// Returns `None` when the abscissae are not distinct or the lengths
    /// differ.
    pub fn interpolate(xs: &[Scalar], ys: &[Scalar]) -> Option<Polynomial> {
        if xs.len() != ys.len() {
            return None;
        }
        if xs.is_empty() {
            return Some(Polynomial::zero());
        }
        let vanishing = Polynomial::from_roots(xs);
        let mut numerators = Vec::with_capacity(xs.len());
        let mut denominators = Vec::with_capacity(xs.len());
        for x in xs {
            let (num, _) = vanishing.divide_by_linear(*x);
            denominators.push(num.evaluate(*x));
            numerators.push(num);
        }
        let inv = batch_inverse(&denominators)?;
        let mut acc = vec![Scalar::ZERO; xs.len()];
        for ((num, w), y) in numerators.iter().zip(inv).zip(ys) {
            let k = w * *y;
            if k.is_zero() {
                continue;
            }
            for (a, c) in acc.iter_mut().zip(num.coeffs()) {
                *a += *c * k;
            }
        }
        Some(Polynomial::new(acc))
    }

    /// Interpolates `φ(i) = values[i]` over the domain `{0, …, n−1}`.
    pub fn interpolate_domain(values: &[Scalar]) -> Polynomial {
        let xs = domain(values.len());
        Polynomial::interpolate(&xs, values).expect("integer domain points are distinct")
    }
}

/// `[0, 1, …, n−1]` as scalars.
pub fn domain(n: usize) -> Vec<Scalar> {
    (0..n as u64).map(Scalar::from_u64).collect()
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let get = |p: &Polynomial, i: usize| p.coeffs.get(i).copied().unwrap_or(Scalar::ZERO);
        Polynomial::new((0..n).map(|i| get(self, i) + get(rhs, i)).collect())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let get = |p: &Polynomial, i: usize| p.coeffs.get(i).copied().unwrap_or(Scalar::ZERO);
        Polynomial::new((0..n).map(|i| get(self, i) - get(rhs, i)).collect())
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![Scalar::ZERO; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += *a * *b;
            }
        }
        Polynomial::new(out)
    }
}
