//! The triangle bump `χ_δ`, its product `g_δ`, their Fourier transforms and
//! the box exponential kernels.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{centered, frac_mul_int, frac_prod};
use crate::scalar::Real;

/// Time domain of a box kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Continuous,
    Discrete,
}

/// How to evaluate `F(χ_δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FourierMode<S> {
    /// Fourier transform on ℝ at a real frequency.
    Transform,
    /// Fourier coefficients of the `A`-periodization at integer frequencies.
    Series(S),
}

/// `χ_δ(x) = δ⁻¹ max(0, 1 − |x|/δ)`: even, unit mass, supported in `[−δ, δ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleKernel<S> {
    delta: S,
}

impl<S: Real> TriangleKernel<S> {
    pub fn new(delta: S) -> Result<Self> {
        if !(delta > S::zero()) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("kernel width must be positive, got {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> S {
        self.delta
    }

    pub fn value(&self, t: S) -> S {
        let u = t.abs() / self.delta;
        if u >= S::one() {
            S::zero()
        } else {
            (S::one() - u) / self.delta
        }
    }

    /// `g_δ(t) = ∏_j χ_δ(t_j)`.
    pub fn product_value(&self, t: &[S]) -> S {
        t.iter().fold(S::one(), |acc, &tj| acc * self.value(tj))
    }

    /// `F(χ_δ)(ξ) = (1 − cos 2πξδ)/(2π²ξ²δ²) = sinc²(πξδ)`.
    pub fn transform(&self, xi: S) -> S {
        sinc_sq(S::PI() * xi * self.delta)
    }

    /// `F(g_δ)(ξ) = ∏_j F(χ_δ)(ξ_j)`.
    pub fn product_transform(&self, xi: &[S]) -> S {
        xi.iter().fold(S::one(), |acc, &x| acc * self.transform(x))
    }

    /// Fourier coefficient of the `A`-periodization at integer `k`:
    /// `A⁻¹ sinc²(πkδ/A)`.
    pub fn series(&self, period: S, k: i64) -> Result<S> {
        if !(period > self.delta) {
            return Err(Error::InvalidParameter(format!(
                "period {period} must exceed kernel width {}",
                self.delta
            )));
        }
        let u = S::PI() * S::from_i64_exact(k) * self.delta / period;
        Ok(sinc_sq(u) / period)
    }

    /// `||F(χ_δ)||_{L¹(ℝ)}` by quadrature between consecutive zeros, with the
    /// truncation tail bound. Returns `(value, tail)`.
    pub fn transform_l1_norm(&self, zeros: usize) -> (S, S) {
        // substitute u = ξδ; zeros of sinc²(πu) sit at the integers
        let rule = crate::quad::GaussLegendre::<S>::new(16);
        let mut acc = crate::sum::Neumaier::new();
        for j in 0..zeros {
            let lo = S::from_usize(j).unwrap();
            acc.add(rule.integrate(lo, lo + S::one(), |u| sinc_sq(S::PI() * u)));
        }
        let two = S::lit(2.0);
        let z = S::from_usize(zeros).unwrap();
        let tail = two / (S::PI() * S::PI() * z * self.delta);
        (two * acc.value() / self.delta, tail)
    }

    /// `Σ_{|k|≤K} |F_A(χ_δ)(k)|` and the bound on the omitted tail.
    pub fn series_l1_norm(&self, period: S, cutoff: i64) -> Result<(S, S)> {
        let mut acc = crate::sum::Neumaier::new();
        acc.add(self.series(period, 0)?);
        for k in 1..=cutoff {
            acc.add(S::lit(2.0) * self.series(period, k)?);
        }
        // sinc²(πkδ/A)/A ≤ A/(π²k²δ²)
        let tail = S::lit(2.0) * period
            / (S::PI() * S::PI() * self.delta * self.delta * S::from_i64_exact(cutoff.max(1)));
        Ok((acc.value(), tail))
    }
}

/// `(sin u / u)²` with a series branch near the origin.
pub fn sinc_sq<S: Real>(u: S) -> S {
    if u.abs() < S::lit(1e-4) {
        let u2 = u * u;
        S::one() - u2 / S::lit(3.0) + S::lit(2.0) * u2 * u2 / S::lit(45.0)
    } else {
        let s = u.sin() / u;
        s * s
    }
}

/// `g_δ(t)`, the `d`-fold product of triangle bumps.
pub fn kernel_value<S: Real>(delta: S, t: &[S]) -> Result<S> {
    Ok(TriangleKernel::new(delta)?.product_value(t))
}

/// `F(χ_δ)` in either mode. Series mode rounds `freq` to an integer.
pub fn kernel_fourier<S: Real>(delta: S, mode: FourierMode<S>, freq: S) -> Result<S> {
    let k = TriangleKernel::new(delta)?;
    match mode {
        FourierMode::Transform => Ok(k.transform(freq)),
        FourierMode::Series(a) => {
            if freq.fract() != S::zero() {
                return Err(Error::InvalidParameter("series mode needs an integer frequency".into()));
            }
            k.series(a, freq.to_i64().unwrap_or(i64::MAX))
        }
    }
}

/// `∏_j ∫_{−T}^{T} e(a_j t) dt` (continuous) or `∏_j Σ_{n=−T}^{T} e(a_j n)`
/// (discrete). Both are real by symmetry; returned as complex.
pub fn box_kernel<S: Real>(a: &[S], t: S, group: GroupKind) -> Result<Complex<S>> {
    if !(t > S::zero()) {
        return Err(Error::InvalidParameter(format!("window half-width must be positive, got {t}")));
    }
    let mut acc = S::one();
    match group {
        GroupKind::Continuous => {
            for &aj in a {
                acc = acc * continuous_factor(aj, t);
            }
        }
        GroupKind::Discrete => {
            if t.fract() != S::zero() {
                return Err(Error::NonIntegerTime);
            }
            let n = t.to_i64().ok_or_else(|| Error::InvalidParameter("window too large".into()))?;
            for &aj in a {
                acc = acc * dirichlet(aj, n);
            }
        }
    }
    Ok(Complex::new(acc, S::zero()))
}

fn continuous_factor<S: Real>(a: S, t: S) -> S {
    if a == S::zero() {
        return S::lit(2.0) * t;
    }
    (S::TAU() * frac_prod(a, t)).sin() / (S::PI() * a)
}

/// `Σ_{n=−N}^{N} e(an) = sin(π(2N+1)a)/sin(πa)`.
pub fn dirichlet<S: Real>(a: S, n: i64) -> S {
    let r = centered(a);
    let m = 2 * n as i128 + 1;
    if r == S::zero() {
        return S::lit(m as f64);
    }
    // sin(π m r) = sin(2π·frac(m r/2)); r/2 is exact
    let num = (S::TAU() * frac_mul_int(r / S::lit(2.0), m)).sin();
    num / (S::PI() * r).sin()
}
