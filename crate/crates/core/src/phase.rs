//! Phase arithmetic modulo one and the character `e(x) = exp(2πix)`.
//!
//! Phases are reduced to `[0, 1)` before any trigonometric call. Products of
//! a real coefficient with a (possibly huge) integer are reduced limb by limb
//! with error-free transformations, so `frac(c·m)` stays accurate to a few
//! ulps of 1 even when `c·m` itself is far beyond 2^53.

use num_complex::Complex;

use crate::scalar::Real;

/// Fractional part in `[0, 1)`.
#[inline]
pub fn frac<S: Real>(x: S) -> S {
    let r = x - x.floor();
    if r >= S::one() {
        S::zero()
    } else {
        r
    }
}

/// Distance to the nearest integer, in `[0, 1/2]`.
#[inline]
pub fn dist_to_z<S: Real>(x: S) -> S {
    let r = frac(x);
    r.min(S::one() - r)
}

/// Reduction to the symmetric interval `[-1/2, 1/2)`.
#[inline]
pub fn centered<S: Real>(x: S) -> S {
    let half = S::lit(0.5);
    frac(x + half) - half
}

/// Error-free product: `a·b = p + e` exactly.
#[inline]
pub fn two_prod<S: Real>(a: S, b: S) -> (S, S) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

/// `frac(a·b)` for arbitrary reals, using the exact product error.
#[inline]
pub fn frac_prod<S: Real>(a: S, b: S) -> S {
    let (p, e) = two_prod(a, b);
    frac(frac(p) + e)
}

const LIMB_BITS: u32 = 20;

/// `frac(c·m)` for an integer `m`, exact up to rounding of the final sum.
pub fn frac_mul_int<S: Real>(c: S, m: i128) -> S {
    if m == 0 {
        return S::zero();
    }
    let (c, mut rest) = if m < 0 {
        (-c, m.unsigned_abs())
    } else {
        (c, m as u128)
    };
    let scale = S::lit((1u64 << LIMB_BITS) as f64);
    let mask = (1u128 << LIMB_BITS) - 1;
    let mut coeff = frac(c);
    let mut acc = S::zero();
    while rest != 0 {
        let limb = S::lit((rest & mask) as f64);
        let (p, e) = two_prod(coeff, limb);
        acc = frac(acc + frac(p) + e);
        rest >>= LIMB_BITS;
        coeff = frac(coeff * scale);
    }
    frac(acc)
}

/// `frac(<xi, b>)` with per-term error compensation.
pub fn frac_dot<S: Real>(xi: &[S], b: &[S]) -> S {
    debug_assert_eq!(xi.len(), b.len());
    let mut acc = S::zero();
    for (&x, &y) in xi.iter().zip(b) {
        acc = frac(acc + frac_prod(x, y));
    }
    acc
}

/// `frac(<k, x>)` for an integer frequency vector.
pub fn frac_dot_int<S: Real>(k: &[i64], x: &[S]) -> S {
    debug_assert_eq!(k.len(), x.len());
    let mut acc = S::zero();
    for (&kj, &xj) in k.iter().zip(x) {
        acc = frac(acc + frac_mul_int(xj, kj as i128));
    }
    acc
}

/// The character `e(x) = exp(2πix)`.
///
/// Exact at multiples of 1/4: the phase is split into a quarter turn and a
/// remainder in `[-1/8, 1/8]`, and the quarter turn is applied exactly.
pub fn e<S: Real>(x: S) -> Complex<S> {
    let r = frac(x);
    let four = S::lit(4.0);
    let q = (r * four).round();
    let rem = r - q / four;
    let (s, c) = (S::TAU() * rem).sin_cos();
    match q.to_i64().unwrap_or(0).rem_euclid(4) {
        0 => Complex::new(c, s),
        1 => Complex::new(-s, c),
        2 => Complex::new(-c, -s),
        _ => Complex::new(s, -c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};

    #[test]
    fn quarter_turns_are_exact() {
        assert_eq!(e(0.25f64), Complex::new(0.0, 1.0));
        assert_eq!(e(0.5f64), Complex::new(-1.0, 0.0));
        assert_eq!(e(-0.25f64), Complex::new(0.0, -1.0));
        assert_eq!(e(3.0f64), Complex::new(1.0, 0.0));
        assert_eq!(e(0.0f32), Complex::new(1.0, 0.0));
    }

    #[test]
    fn character_matches_exp() {
        for i in 0..200 {
            let x = -3.0 + i as f64 * 0.0371;
            let z = e(x);
            let w = Complex::new(0.0, std::f64::consts::TAU * x).exp();
            assert!((z - w).norm() < 1e-13, "{x}");
        }
    }

    #[test]
    fn frac_and_distance() {
        assert_eq!(frac(-0.25f64), 0.75);
        assert_eq!(frac(2.5f64), 0.5);
        assert_eq!(dist_to_z(0.9f64), 0.09999999999999998);
        assert!((centered(0.75f64) + 0.25).abs() < 1e-15);
    }

    fn exact_frac(c: f64, m: i128) -> f64 {
        let c = BigRational::from_float(c).unwrap();
        let p = c * BigRational::from_integer(BigInt::from(m));
        let f = &p - p.floor();
        let f = if f < BigRational::zero() { f + BigRational::one() } else { f };
        f.to_f64().unwrap()
    }

    #[test]
    fn frac_mul_int_against_rational_oracle() {
        let golden = 0.618_033_988_749_894_9_f64;
        for &m in &[1i128, 7, 65_536, 4_294_967_296, 1 << 60, (1 << 90) + 12345, -999_999_937] {
            let got = frac_mul_int(golden, m);
            let want = exact_frac(golden, m);
            let err = (got - want).abs().min(1.0 - (got - want).abs());
            assert!(err < 1e-15, "m={m}: {got} vs {want}");
        }
    }

    #[test]
    fn frac_dot_int_handles_negative_frequencies() {
        let x = [0.3f64, 0.45];
        let r = frac_dot_int(&[-2, 3], &x);
        assert!((r - frac(-0.6 + 1.35)).abs() < 1e-15);
    }
}
