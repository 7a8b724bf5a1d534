//! Arithmetic in the truncated univariate polynomial ring R[t]/(t^(cap+1)).
//!
//! Marginal queries evaluate generating circuits with leaves mapped into this
//! ring; the answer is read off a single coefficient of the result. Since
//! generating polynomials of n binary variables are multiaffine, a cap of n
//! is always sufficient and products may discard every coefficient above it.

use std::any::{Any, TypeId};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::num::Real;

/// Multiplication strategy for [`GenPoly::mul`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MulBackend {
    /// Schoolbook convolution, O(d_a * d_b).
    Naive,
    /// Floating-point FFT convolution with power-of-two padding.
    Fft,
    /// Naive below a degree threshold, FFT above it.
    #[default]
    Auto,
}

/// Degree below which `Auto` stays on the naive path; FFT constant factors
/// dominate for short operands.
const AUTO_NAIVE_THRESHOLD: usize = 64;

/// Dense truncated polynomial in the query indeterminate `t`.
///
/// `coeffs[i]` is the coefficient of `t^i`; trailing zeros are trimmed, so
/// `coeffs.len() <= cap + 1` and the zero polynomial has no coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct GenPoly<R: Real> {
    coeffs: Vec<R>,
    cap: usize,
}

impl<R: Real> GenPoly<R> {
    pub fn from_coeffs(mut coeffs: Vec<R>, cap: usize) -> Self {
        coeffs.truncate(cap + 1);
        let mut p = GenPoly { coeffs, cap };
        p.trim();
        p
    }

    pub fn zero(cap: usize) -> Self {
        GenPoly { coeffs: Vec::new(), cap }
    }

    pub fn constant(value: R, cap: usize) -> Self {
        Self::from_coeffs(vec![value], cap)
    }

    pub fn one(cap: usize) -> Self {
        Self::constant(R::one(), cap)
    }

    /// The indeterminate `t` itself (zero when `cap == 0`).
    pub fn t(cap: usize) -> Self {
        Self::from_coeffs(vec![R::zero(), R::one()], cap)
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn coeffs(&self) -> &[R] {
        &self.coeffs
    }

    /// Degree of the polynomial; the zero polynomial has degree -1.
    pub fn degree(&self) -> isize {
        self.coeffs.len() as isize - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient of `t^k`; zero beyond the stored degree.
    pub fn coef(&self, k: usize) -> R {
        self.coeffs.get(k).copied().unwrap_or_else(R::zero)
    }

    /// Re-embed into a ring with a different cap, truncating if it shrinks.
    pub fn with_cap(&self, cap: usize) -> Self {
        Self::from_coeffs(self.coeffs.clone(), cap)
    }

    /// Evaluate at a complex point by Horner's rule.
    pub fn eval_complex(&self, z: Complex<R>) -> Complex<R> {
        let mut acc = Complex::new(R::zero(), R::zero());
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + Complex::new(c, R::zero());
        }
        acc
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(|c| c.is_zero()) {
            self.coeffs.pop();
        }
    }

    fn check_cap(&self, other: &Self) -> Result<()> {
        if self.cap != other.cap {
            return Err(Error::contract(format!(
                "cap mismatch: {} vs {}",
                self.cap, other.cap
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_cap(other)?;
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = Vec::with_capacity(n);
        for i in 0..n {
            coeffs.push(self.coef(i) + other.coef(i));
        }
        Ok(Self::from_coeffs(coeffs, self.cap))
    }

    pub fn scale(&self, c: R) -> Self {
        Self::from_coeffs(self.coeffs.iter().map(|&a| a * c).collect(), self.cap)
    }

    pub fn mul(&self, other: &Self, backend: MulBackend) -> Result<Self> {
        self.check_cap(other)?;
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(self.cap));
        }
        let min_deg = self.coeffs.len().min(other.coeffs.len());
        let coeffs = match backend {
            MulBackend::Naive => self.mul_naive(other),
            MulBackend::Fft => self.mul_fft(other),
            MulBackend::Auto => {
                if min_deg <= AUTO_NAIVE_THRESHOLD {
                    self.mul_naive(other)
                } else {
                    self.mul_fft(other)
                }
            }
        };
        Ok(Self::from_coeffs(coeffs, self.cap))
    }

    fn mul_naive(&self, other: &Self) -> Vec<R> {
        let out_len = (self.coeffs.len() + other.coeffs.len() - 1).min(self.cap + 1);
        let mut out = vec![R::zero(); out_len];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if i > self.cap {
                break;
            }
            let jmax = (self.cap - i).min(other.coeffs.len().saturating_sub(1));
            for (j, &b) in other.coeffs[..=jmax].iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    }

    fn mul_fft(&self, other: &Self) -> Vec<R> {
        let la = self.coeffs.len();
        let lb = other.coeffs.len();
        let full_len = la + lb - 1;
        let out_len = full_len.min(self.cap + 1);
        // Cyclic convolution at a smooth size, possibly slightly below the
        // full product length; the few coefficients that wrap around are
        // short sums computed directly and patched in afterwards.
        let size = fft_size(full_len);
        let (r2c, c2r) = real_fft_plans::<R>(size);

        let lift = |p: &[R]| {
            let mut buf = vec![R::zero(); size];
            if p.len() <= size {
                buf[..p.len()].copy_from_slice(p);
            } else {
                // an operand longer than the transform folds mod size, which
                // the cyclic convolution identity already accounts for
                for (i, &c) in p.iter().enumerate() {
                    buf[i % size] += c;
                }
            }
            buf
        };
        let mut ta = lift(&self.coeffs);
        let mut tb = lift(&other.coeffs);
        let bins = size / 2 + 1;
        let mut fa = vec![Complex::new(R::zero(), R::zero()); bins];
        let mut fb = fa.clone();
        r2c.process(&mut ta, &mut fa)
            .expect("forward transform of a full-length real buffer");
        r2c.process(&mut tb, &mut fb)
            .expect("forward transform of a full-length real buffer");
        // Both inputs are real, so the product spectrum is conjugate
        // symmetric and a half-spectrum inverse recovers the convolution.
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= *y;
        }
        let mut cyclic = vec![R::zero(); size];
        c2r.process(&mut fa, &mut cyclic)
            .expect("inverse transform of a product of real spectra");
        let norm = R::from_usize(size).unwrap();

        let mut out = vec![R::zero(); out_len];
        let head = out_len.min(size);
        for (o, &c) in out[..head].iter_mut().zip(&cyclic) {
            *o = c / norm;
        }
        for m in size..full_len {
            let lo = (m + 1).saturating_sub(lb);
            let hi = (la - 1).min(m);
            let mut s = R::zero();
            for i in lo..=hi {
                s += self.coeffs[i] * other.coeffs[m - i];
            }
            let k = m - size;
            if k < head {
                out[k] = out[k] - s;
            }
            if m < out_len {
                out[m] = s;
            }
        }
        out
    }
}

/// Smallest even size of the form 2^a * 3^b, b <= 2; larger powers of three
/// plan noticeably slower transforms. A size slightly below `len` is allowed
/// when the direct work for the wrapped coefficients stays linear.
fn fft_size(len: usize) -> usize {
    let mut candidates: Vec<usize> = [1usize, 3, 9]
        .iter()
        .flat_map(|&p3| {
            (1..usize::BITS)
                .map(move |a| p3 << a)
                .filter(|&s| s >= len / 2 && s < 4 * len.max(1))
        })
        .collect();
    candidates.sort_unstable();
    candidates
        .into_iter()
        .find(|&s| {
            let wrapped = len.saturating_sub(s);
            wrapped <= s && wrapped * (wrapped + 1) / 2 <= s
        })
        .unwrap_or_else(|| len.next_power_of_two().max(2))
}

thread_local! {
    /// Planning an FFT costs far more than executing one; circuits repeat
    /// the same transform sizes constantly, so plans are memoized per thread.
    static FFT_PLANS: RefCell<HashMap<(TypeId, usize), Box<dyn Any>>> =
        RefCell::new(HashMap::new());
}

type RealPlans<R> = (Arc<dyn RealToComplex<R>>, Arc<dyn ComplexToReal<R>>);

fn real_fft_plans<R: Real>(size: usize) -> RealPlans<R> {
    FFT_PLANS.with(|cell| {
        cell.borrow_mut()
            .entry((TypeId::of::<R>(), size))
            .or_insert_with(|| {
                let mut planner = RealFftPlanner::<R>::new();
                let plans: RealPlans<R> =
                    (planner.plan_fft_forward(size), planner.plan_fft_inverse(size));
                Box::new(plans)
            })
            .downcast_ref::<RealPlans<R>>()
            .expect("plan cache entry has the scalar type it was keyed by")
            .clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type P = GenPoly<f64>;

    fn p(coeffs: &[f64], cap: usize) -> P {
        P::from_coeffs(coeffs.to_vec(), cap)
    }

    #[test]
    fn add_basics() {
        // (1 + 2t) + (3 + t) = 4 + 3t
        let s = p(&[1.0, 2.0], 4).add(&p(&[3.0, 1.0], 4)).unwrap();
        assert_eq!(s.coeffs(), &[4.0, 3.0]);
        // additive identity and inverse
        let q = p(&[0.5, -1.0, 2.0], 4);
        assert_eq!(q.add(&P::zero(4)).unwrap(), q);
        assert!(P::t(4).add(&P::t(4).scale(-1.0)).unwrap().is_zero());
    }

    #[test]
    fn add_cap_mismatch_is_contract_violation() {
        assert!(p(&[1.0], 2).add(&p(&[1.0], 3)).is_err());
    }

    #[test]
    fn scale_basics() {
        assert_eq!(p(&[1.0, 1.0], 3).scale(0.5).coeffs(), &[0.5, 0.5]);
        assert!(p(&[1.0, 2.0], 3).scale(0.0).is_zero());
        let q = p(&[1.0, 2.0], 3);
        assert_eq!(q.scale(1.0), q);
    }

    #[test]
    fn mul_hand_expansion() {
        // (1 + 2t)(3 + t) = 3 + 7t + 2t^2
        let r = p(&[1.0, 2.0], 4).mul(&p(&[3.0, 1.0], 4), MulBackend::Naive).unwrap();
        assert_eq!(r.coeffs(), &[3.0, 7.0, 2.0]);
        let q = p(&[0.3, 0.7], 4);
        assert_eq!(q.mul(&P::one(4), MulBackend::Auto).unwrap(), q);
    }

    #[test]
    fn mul_truncates_at_cap() {
        let r = p(&[1.0, 1.0], 1).mul(&p(&[1.0, 1.0], 1), MulBackend::Naive).unwrap();
        assert_eq!(r.coeffs(), &[1.0, 2.0]);
    }

    #[test]
    fn coef_reads() {
        let r = p(&[3.0, 7.0, 2.0], 4);
        assert_eq!(r.coef(1), 7.0);
        assert_eq!(r.coef(5), 0.0);
        assert_eq!(P::zero(4).degree(), -1);
    }

    #[test]
    fn fft_matches_naive_on_degree_200() {
        let mut state = 0x12345678u64;
        let mut next = || {
            // xorshift, just to get reproducible pseudo-random coefficients
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 2000) as f64 / 1000.0 - 1.0
        };
        let cap = 400;
        let a = P::from_coeffs((0..=200).map(|_| next()).collect(), cap);
        let b = P::from_coeffs((0..=200).map(|_| next()).collect(), cap);
        let naive = a.mul(&b, MulBackend::Naive).unwrap();
        let fft = a.mul(&b, MulBackend::Fft).unwrap();
        for k in 0..=cap {
            assert!((naive.coef(k) - fft.coef(k)).abs() < 1e-9);
        }
    }

    #[test]
    fn fft_wraparound_sizes_match_naive() {
        // lengths chosen so the transform size sits below the full product
        // length and the wrapped tail is patched directly
        let mut state = 0x9e3779b9u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 2000) as f64 / 1000.0 - 1.0
        };
        for (da, db, cap) in [(34usize, 35usize, 200usize), (34, 35, 50), (512, 512, 1024)] {
            assert!(super::fft_size(da + db + 1) < da + db + 1);
            let a = P::from_coeffs((0..=da).map(|_| next()).collect(), cap);
            let b = P::from_coeffs((0..=db).map(|_| next()).collect(), cap);
            let naive = a.mul(&b, MulBackend::Naive).unwrap();
            let fft = a.mul(&b, MulBackend::Fft).unwrap();
            for k in 0..=cap {
                assert!((naive.coef(k) - fft.coef(k)).abs() < 1e-9, "{da} {db} {cap} {k}");
            }
        }
    }

    fn arb_poly(max_deg: usize, cap: usize) -> impl Strategy<Value = P> {
        prop::collection::vec(-1.0f64..1.0, 0..=max_deg + 1)
            .prop_map(move |c| P::from_coeffs(c, cap))
    }

    fn close(a: &P, b: &P, tol: f64) -> bool {
        (0..=a.cap().max(b.cap())).all(|k| (a.coef(k) - b.coef(k)).abs() < tol)
    }

    proptest! {
        #[test]
        fn ring_laws(a in arb_poly(8, 20), b in arb_poly(8, 20), c in arb_poly(8, 20)) {
            let m = MulBackend::Auto;
            // commutativity
            prop_assert!(close(&a.mul(&b, m).unwrap(), &b.mul(&a, m).unwrap(), 1e-9));
            prop_assert!(close(&a.add(&b).unwrap(), &b.add(&a).unwrap(), 1e-9));
            // associativity
            let ab_c = a.mul(&b, m).unwrap().mul(&c, m).unwrap();
            let a_bc = a.mul(&b.mul(&c, m).unwrap(), m).unwrap();
            prop_assert!(close(&ab_c, &a_bc, 1e-9));
            // distributivity
            let lhs = a.mul(&b.add(&c).unwrap(), m).unwrap();
            let rhs = a.mul(&b, m).unwrap().add(&a.mul(&c, m).unwrap()).unwrap();
            prop_assert!(close(&lhs, &rhs, 1e-9));
        }

        #[test]
        fn fft_matches_naive(a in arb_poly(40, 100), b in arb_poly(40, 100)) {
            let naive = a.mul(&b, MulBackend::Naive).unwrap();
            let fft = a.mul(&b, MulBackend::Fft).unwrap();
            prop_assert!(close(&naive, &fft, 1e-9));
        }

        #[test]
        fn truncation_consistency(a in arb_poly(6, 6), b in arb_poly(6, 6)) {
            // mul at cap 6 then embed into cap 12 == mul at cap 12 restricted to <= 6
            let small = a.mul(&b, MulBackend::Naive).unwrap();
            let big = a.with_cap(12).mul(&b.with_cap(12), MulBackend::Naive).unwrap();
            for k in 0..=6 {
                prop_assert!((small.coef(k) - big.coef(k)).abs() < 1e-12);
            }
        }
    }
}
