//! Trigonometric-polynomial observables on the torus.
//!
//! An observable is a finitely supported map from integer frequency vectors
//! to complex coefficients, `f(x) = Σ a_k e(<k, x>)`. These are the test
//! functions for every estimator: they can be evaluated pointwise, measured
//! in a weighted-ℓ¹ norm, and transported exactly under affine torus maps,
//! which gives machine-precision correlation oracles.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{e, frac_dot_int};
use crate::scalar::Real;
use crate::systems::{GroupElement, SystemSpec};

/// One serialized coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct CoeffRecord<S> {
    pub k: Vec<i64>,
    pub re: S,
    pub im: S,
}

/// `f(x) = Σ_k a_k e(<k, x>)` with finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real", try_from = "Vec<CoeffRecord<S>>", into = "Vec<CoeffRecord<S>>")]
pub struct FourierObservable<S: Real> {
    dim: usize,
    coeffs: BTreeMap<Vec<i64>, Complex<S>>,
    real_valued: bool,
}

impl<S: Real> TryFrom<Vec<CoeffRecord<S>>> for FourierObservable<S> {
    type Error = Error;

    fn try_from(records: Vec<CoeffRecord<S>>) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.k.len());
        let mut f = Self::zero(dim);
        for r in records {
            f.add_term(r.k, Complex::new(r.re, r.im))?;
        }
        f.real_valued = f.is_symmetric();
        Ok(f)
    }
}

impl<S: Real> From<FourierObservable<S>> for Vec<CoeffRecord<S>> {
    fn from(f: FourierObservable<S>) -> Self {
        f.coeffs
            .into_iter()
            .map(|(k, a)| CoeffRecord { k, re: a.re, im: a.im })
            .collect()
    }
}

impl<S: Real> FourierObservable<S> {
    /// The zero observable on a `dim`-torus.
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            coeffs: BTreeMap::new(),
            real_valued: true,
        }
    }

    /// The character `e_k`.
    pub fn character(k: Vec<i64>) -> Self {
        let mut f = Self::zero(k.len());
        f.coeffs.insert(k, Complex::new(S::one(), S::zero()));
        f.real_valued = f.is_symmetric();
        f
    }

    /// `amplitude · 2cos(2π<k,x>) = amplitude·(e_k + e_{-k})`.
    pub fn cosine(k: Vec<i64>, amplitude: S) -> Self {
        let mut f = Self::zero(k.len());
        let neg: Vec<i64> = k.iter().map(|v| -v).collect();
        f.add_term(k, Complex::new(amplitude, S::zero())).expect("dims agree");
        f.add_term(neg, Complex::new(amplitude, S::zero())).expect("dims agree");
        f.real_valued = true;
        f
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<i64>, Complex<S>)>,
    {
        let mut f = Self::zero(dim);
        for (k, a) in terms {
            f.add_term(k, a)?;
        }
        f.real_valued = f.is_symmetric();
        Ok(f)
    }

    /// Adds `a·e_k`; coefficients that cancel to exactly zero are removed.
    pub fn add_term(&mut self, k: Vec<i64>, a: Complex<S>) -> Result<()> {
        if self.coeffs.is_empty() && self.dim == 0 {
            self.dim = k.len();
        }
        if k.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: k.len(),
            });
        }
        let entry = self.coeffs.entry(k).or_insert_with(Complex::zero);
        *entry = *entry + a;
        if entry.is_zero() {
            self.coeffs.retain(|_, v| !v.is_zero());
        }
        self.real_valued = self.is_symmetric();
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<i64>, Complex<S>> {
        &self.coeffs
    }

    pub fn coefficient(&self, k: &[i64]) -> Complex<S> {
        self.coeffs.get(k).copied().unwrap_or_else(Complex::zero)
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    /// True when `a_{-k} = conj(a_k)` for every stored `k`.
    pub fn is_real_valued(&self) -> bool {
        self.real_valued
    }

    fn is_symmetric(&self) -> bool {
        self.coeffs.iter().all(|(k, a)| {
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            let b = self.coefficient(&neg);
            (b - a.conj()).norm() <= S::lit(1e-12) * (S::one() + a.norm())
        })
    }

    /// Errors unless the observable is real valued.
    pub fn require_real(&self) -> Result<()> {
        if self.real_valued {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "observable must satisfy a_{-k} = conj(a_k)".into(),
            ))
        }
    }

    /// The mean `a_0`.
    pub fn mean(&self) -> Complex<S> {
        self.coeffs
            .iter()
            .find(|(k, _)| k.iter().all(|&v| v == 0))
            .map_or_else(Complex::zero, |(_, a)| *a)
    }

    pub fn is_mean_zero(&self) -> bool {
        self.mean().is_zero()
    }

    /// Removes the constant term, projecting onto `L²_0`.
    pub fn mean_zero(mut self) -> Self {
        self.coeffs.retain(|k, _| k.iter().any(|&v| v != 0));
        self
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.is_zero() || self.dim == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: n,
                got: self.dim,
            })
        }
    }

    /// `Σ_k a_k e(<k, x>)`.
    pub fn evaluate(&self, x: &[S]) -> Complex<S> {
        debug_assert!(self.is_zero() || x.len() == self.dim);
        let mut acc = Complex::zero();
        for (k, a) in &self.coeffs {
            acc = acc + *a * e(frac_dot_int(k, x));
        }
        acc
    }

    /// `||f||_B = Σ_k |a_k| (1 + |k|_∞)^r`.
    pub fn surrogate_norm(&self, r: S) -> S {
        self.coeffs
            .iter()
            .map(|(k, a)| {
                let kinf = k.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
                a.norm() * (S::one() + S::lit(kinf as f64)).powf(r)
            })
            .fold(S::zero(), |s, v| s + v)
    }

    /// `Σ|a_k|`, an upper bound for the sup norm.
    pub fn l1_coeff_norm(&self) -> S {
        self.surrogate_norm(S::zero())
    }

    /// `||f||²_{L²} = Σ|a_k|²` (Parseval).
    pub fn l2_norm_sq(&self) -> S {
        self.coeffs
            .values()
            .map(|a| a.norm_sqr())
            .fold(S::zero(), |s, v| s + v)
    }

    /// Largest `|k|_∞` in the support.
    pub fn max_frequency(&self) -> u64 {
        self.coeffs
            .keys()
            .flat_map(|k| k.iter().map(|v| v.unsigned_abs()))
            .max()
            .unwrap_or(0)
    }

    /// Largest `|k|_1` in the support.
    pub fn max_frequency_l1(&self) -> u64 {
        self.coeffs
            .keys()
            .map(|k| k.iter().map(|v| v.unsigned_abs()).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn conj(&self) -> Self {
        let terms = self
            .coeffs
            .iter()
            .map(|(k, a)| (k.iter().map(|v| -v).collect(), a.conj()));
        Self::from_terms(self.dim, terms).expect("dims agree")
    }

    pub fn scale(&self, c: Complex<S>) -> Self {
        Self::from_terms(self.dim, self.coeffs.iter().map(|(k, a)| (k.clone(), *a * c)))
            .expect("dims agree")
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for (k, a) in &other.coeffs {
            out.add_term(k.clone(), *a)?;
        }
        Ok(out)
    }

    /// Pointwise product (convolution of coefficients).
    pub fn product(&self, other: &Self) -> Result<Self> {
        if !self.is_zero() && !other.is_zero() && self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = Self::zero(self.dim.max(other.dim));
        for (k, a) in &self.coeffs {
            for (l, b) in &other.coeffs {
                let kl: Vec<i64> = k.iter().zip(l).map(|(x, y)| x + y).collect();
                out.add_term(kl, *a * *b)?;
            }
        }
        Ok(out)
    }

    /// `f ∘ φ_g` for an affine system, computed in coefficient space.
    pub fn compose(&self, spec: &SystemSpec<S>, g: &GroupElement<S>) -> Result<Self> {
        self.check_dim(spec.phase_dim())?;
        let action = spec.affine_form(g)?;
        let mut out = Self::zero(self.dim);
        for (k, a) in &self.coeffs {
            let (k2, phase) = action.transport(k);
            let k2 = big_to_i64(&k2).ok_or_else(|| {
                Error::InvalidParameter("transported frequency exceeds i64 range".into())
            })?;
            out.add_term(k2, *a * e(phase))?;
        }
        Ok(out)
    }
}

pub(crate) fn big_to_i64(k: &[BigInt]) -> Option<Vec<i64>> {
    k.iter().map(|v| v.to_i64()).collect()
}

/// `⟨f∘φ_t, g⟩ = ∫ f(φ_t x) conj(g(x)) dx`, exact in coefficient space.
///
/// Supported for the affine systems (rotations, linear flows, skew shifts,
/// Heisenberg return maps, toral automorphisms and their products).
pub fn exact_correlation<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    g: &FourierObservable<S>,
    t: &GroupElement<S>,
) -> Result<Complex<S>> {
    f.check_dim(spec.phase_dim())?;
    g.check_dim(spec.phase_dim())?;
    let action = spec.affine_form(t)?;
    let mut acc = crate::sum::ComplexNeumaier::new();
    for (k, a) in f.coeffs() {
        let (k2, phase) = action.transport(k);
        if let Some(k2) = big_to_i64(&k2) {
            let b = g.coefficient(&k2);
            if !b.is_zero() {
                acc.add(*a * e(phase) * b.conj());
            }
        }
    }
    Ok(acc.value())
}

/// A real function `c + Re f(x)` used for roof functions and time changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real", try_from = "TrigFunctionRaw<S>", into = "TrigFunctionRaw<S>")]
pub struct TrigFunction<S: Real> {
    constant: S,
    terms: FourierObservable<S>,
    lower: S,
    upper: S,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct TrigFunctionRaw<S: Real> {
    pub constant: S,
    #[serde(default = "empty_observable")]
    pub terms: FourierObservable<S>,
}

fn empty_observable<S: Real>() -> FourierObservable<S> {
    FourierObservable::zero(0)
}

impl<S: Real> TryFrom<TrigFunctionRaw<S>> for TrigFunction<S> {
    type Error = Error;
    fn try_from(raw: TrigFunctionRaw<S>) -> Result<Self> {
        Self::new(raw.constant, raw.terms)
    }
}

impl<S: Real> From<TrigFunction<S>> for TrigFunctionRaw<S> {
    fn from(f: TrigFunction<S>) -> Self {
        Self {
            constant: f.constant,
            terms: f.terms,
        }
    }
}

impl<S: Real> TrigFunction<S> {
    /// Builds `c + Re f`, estimating its range on a dense grid.
    pub fn new(constant: S, terms: FourierObservable<S>) -> Result<Self> {
        let (lower, upper) = grid_range(constant, &terms);
        if !(lower.is_finite() && upper.is_finite()) {
            return Err(Error::InvalidParameter("function is not finite".into()));
        }
        Ok(Self {
            constant,
            terms,
            lower,
            upper,
        })
    }

    pub fn constant(c: S) -> Self {
        Self::new(c, FourierObservable::zero(0)).expect("finite constant")
    }

    pub fn evaluate(&self, x: &[S]) -> S {
        self.constant + self.terms.evaluate(x).re
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_zero()
    }

    pub fn constant_term(&self) -> S {
        self.constant
    }

    pub fn terms(&self) -> &FourierObservable<S> {
        &self.terms
    }

    /// Minimum over the evaluation grid.
    pub fn grid_min(&self) -> S {
        self.lower
    }

    /// Maximum over the evaluation grid.
    pub fn grid_max(&self) -> S {
        self.upper
    }

    /// Rigorous enclosure `c ± Σ|a_k|`.
    pub fn analytic_bounds(&self) -> (S, S) {
        let r = self.terms.l1_coeff_norm();
        (self.constant - r, self.constant + r)
    }
}

fn grid_range<S: Real>(c: S, f: &FourierObservable<S>) -> (S, S) {
    if f.is_zero() {
        return (c, c);
    }
    let dim = f.dim();
    let per_axis: usize = match dim {
        1 => 4096,
        2 => 256,
        3 => 40,
        _ => 0,
    };
    let mut lo = S::infinity();
    let mut hi = S::neg_infinity();
    let mut visit = |x: &[S]| {
        let v = c + f.evaluate(x).re;
        lo = lo.min(v);
        hi = hi.max(v);
    };
    if per_axis > 0 {
        let total = per_axis.pow(dim as u32);
        let mut x = vec![S::zero(); dim];
        for idx in 0..total {
            let mut r = idx;
            for xi in x.iter_mut() {
                *xi = S::lit((r % per_axis) as f64 / per_axis as f64);
                r /= per_axis;
            }
            visit(&x);
        }
    } else {
        // Kronecker sequence with square roots of primes
        const PRIMES: [f64; 12] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0];
        let mut x = vec![S::zero(); dim];
        for n in 0..65_536u32 {
            for (j, xi) in x.iter_mut().enumerate() {
                let a = PRIMES[j % PRIMES.len()].sqrt() + (j / PRIMES.len()) as f64;
                *xi = S::lit((n as f64 * a).fract());
            }
            visit(&x);
        }
    }
    (lo, hi)
}
