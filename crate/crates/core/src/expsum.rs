//! Weighted exponential sums, their closed forms, Weyl sums with analytic
//! bounds, random weights and the smoothed random-sum statistic `Y`.

use std::io::{Read, Write};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::TriangleKernel;
use crate::phase::{e, frac, frac_dot, frac_mul_int, frac_prod};
use crate::quad::GaussLegendre;
use crate::scalar::Real;
use crate::sum::{pairwise_complex, par_sum, par_sum_complex, Neumaier};

/// Finite sampling set `B ⊂ ℝ^d` with real weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSampleSet<S> {
    dim: usize,
    points: Vec<Vec<S>>,
    weights: Vec<S>,
    diameter: S,
    max_weight: S,
}

impl<S: Real> WeightedSampleSet<S> {
    pub fn new(dim: usize, points: Vec<Vec<S>>, weights: Vec<S>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let mut diameter = S::zero();
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            for &c in p {
                if !c.is_finite() {
                    return Err(Error::InvalidParameter("sample points must be finite".into()));
                }
                diameter = diameter.max(c.abs());
            }
        }
        let mut max_weight = S::zero();
        for &w in &weights {
            if !w.is_finite() {
                return Err(Error::InvalidParameter("weights must be finite".into()));
            }
            max_weight = max_weight.max(w.abs());
        }
        Ok(Self {
            dim,
            points,
            weights,
            diameter,
            max_weight,
        })
    }

    /// Unit weights.
    pub fn unweighted(dim: usize, points: Vec<Vec<S>>) -> Result<Self> {
        let w = vec![S::one(); points.len()];
        Self::new(dim, points, w)
    }

    /// `[−N, N]^d ∩ ℤ^d` with unit weights, last axis fastest.
    pub fn lattice_box(n: i64, dim: usize) -> Self {
        let side = (2 * n + 1) as usize;
        let total = side.pow(dim as u32);
        let points = (0..total)
            .map(|mut idx| {
                let mut p = vec![S::zero(); dim];
                for c in p.iter_mut().rev() {
                    *c = S::from_i64_exact((idx % side) as i64 - n);
                    idx /= side;
                }
                p
            })
            .collect();
        Self::unweighted(dim, points).expect("lattice points are finite")
    }

    pub fn with_weights(&self, weights: Vec<S>) -> Result<Self> {
        Self::new(self.dim, self.points.clone(), weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<S>] {
        &self.points
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// `d(B) = max_b |b|_∞`.
    pub fn diameter(&self) -> S {
        self.diameter
    }

    pub fn max_weight(&self) -> S {
        self.max_weight
    }

    /// Whether every point has integer coordinates.
    pub fn is_integral(&self) -> bool {
        self.points.iter().flatten().all(|c| c.fract() == S::zero())
    }

    /// Smallest sup-distance between two distinct points.
    pub fn min_gap(&self) -> S {
        let mut best = S::infinity();
        if self.dim == 1 {
            let mut xs: Vec<S> = self.points.iter().map(|p| p[0]).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            for w in xs.windows(2) {
                best = best.min(w[1] - w[0]);
            }
            return best;
        }
        for (i, p) in self.points.iter().enumerate() {
            for q in &self.points[i + 1..] {
                let d = p.iter().zip(q).fold(S::zero(), |m, (a, b)| m.max((*a - *b).abs()));
                best = best.min(d);
            }
        }
        best
    }

    /// Writes columns `b_1..b_d,theta`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|i| format!("b_{i}")).collect();
        header.push("theta".into());
        w.write_record(&header).map_err(io_err)?;
        for (p, t) in self.points.iter().zip(&self.weights) {
            let mut row: Vec<String> = p.iter().map(|c| format!("{c:?}")).collect();
            row.push(format!("{t:?}"));
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::InvalidParameter(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(io_err)?.clone();
        let dim = header.len().checked_sub(1).ok_or_else(|| Error::InvalidParameter("empty header".into()))?;
        for (i, h) in header.iter().enumerate() {
            let want = if i < dim { format!("b_{}", i + 1) } else { "theta".into() };
            if h != want {
                return Err(Error::InvalidParameter(format!("unexpected column {h}, wanted {want}")));
            }
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(io_err)?;
            let vals: Vec<S> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map(S::lit)
                        .map_err(|e| Error::InvalidParameter(format!("bad number {s}: {e}")))
                })
                .collect::<Result<_>>()?;
            weights.push(vals[dim]);
            points.push(vals[..dim].to_vec());
        }
        Self::new(dim, points, weights)
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("csv: {e}"))
}

/// `Σ_b θ_b e(<ξ, b>)`.
pub fn weighted_exp_sum<S: Real>(set: &WeightedSampleSet<S>, xi: &[S]) -> Result<Complex<S>> {
    if xi.len() != set.dim() {
        return Err(Error::DimensionMismatch { expected: set.dim(), got: xi.len() });
    }
    let pts = set.points();
    let w = set.weights();
    Ok(par_sum_complex(pts.len(), |i| e(frac_dot(xi, &pts[i])) * w[i]))
}

/// `|S|` over `[−N,N]^d ∩ ℤ^d` at `ξ = k/N`: `∏_j (2N+1 if N | k_j else 1)`.
pub fn box_lattice_closed_form(n: i64, k: &[i64]) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    Ok(k.iter()
        .map(|&kj| if kj % n == 0 { (2 * n + 1) as f64 } else { 1.0 })
        .product())
}

/// `{(n_1^{1+ε_1}, …, n_d^{1+ε_d}) : 0 ≤ n_i < N}` with unit weights.
pub fn power_sequence<S: Real>(n: usize, eps: &[S]) -> Result<WeightedSampleSet<S>> {
    if n < 1 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    if eps.is_empty() || eps.iter().any(|&v| !(v > S::zero())) {
        return Err(Error::InvalidParameter("exponents ε_i must be positive".into()));
    }
    let d = eps.len();
    let axes: Vec<Vec<S>> = eps
        .iter()
        .map(|&ep| (0..n).map(|i| S::from_usize(i).unwrap().powf(S::one() + ep)).collect())
        .collect();
    let total = n.pow(d as u32);
    let points = (0..total)
        .map(|mut idx| {
            let mut p = vec![S::zero(); d];
            for (j, c) in p.iter_mut().enumerate().rev() {
                *c = axes[j][idx % n];
                idx /= n;
            }
            p
        })
        .collect();
    WeightedSampleSet::unweighted(d, points)
}

/// One arithmetic progression approximating `n^{1+ε}` on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment<S> {
    pub j: u64,
    pub start: u64,
    pub end: u64,
    /// `start^{1+ε}`.
    pub base: S,
    /// `(1+ε)·start^ε`.
    pub slope: S,
}

impl<S: Real> Segment<S> {
    pub fn value(&self, n: u64) -> S {
        self.base + self.slope * S::lit((n - self.start) as f64)
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Piecewise-linear approximation of `n ↦ n^{1+ε}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionApprox<S> {
    pub eps: S,
    pub a: S,
    pub segments: Vec<Segment<S>>,
    /// Set when `a` lies outside `(1, 2/(1+ε))`.
    pub warning: Option<String>,
}

impl<S: Real> ProgressionApprox<S> {
    pub fn segment_of(&self, n: u64) -> Option<&Segment<S>> {
        let i = self.segments.partition_point(|s| s.end <= n);
        self.segments.get(i).filter(|s| s.start <= n && n < s.end)
    }

    pub fn value(&self, n: u64) -> Option<S> {
        self.segment_of(n).map(|s| s.value(n))
    }

    /// Taylor bound `ε(1+ε) m^{ε−1} (n − k)²` with `m` the point of the
    /// segment where `t^{ε−1}` is largest.
    pub fn error_bound(&self, n: u64) -> Option<S> {
        self.segment_of(n).map(|s| {
            let m = if self.eps <= S::one() { s.start } else { n };
            let gap = S::lit((n - s.start) as f64);
            self.eps * (S::one() + self.eps) * S::lit(m as f64).powf(self.eps - S::one()) * gap * gap
        })
    }
}

/// Segments `j = 1, 2, …` start at `k = ⌈j^a⌉` and end at `⌈(j+1)^a⌉`
/// (clipped to `N`); together they cover `[1, N)`.
pub fn progression_approx<S: Real>(n: u64, eps: S, a: S) -> Result<ProgressionApprox<S>> {
    if !(a > S::one()) {
        return Err(Error::InvalidParameter(format!("block exponent a must exceed 1, got {a}")));
    }
    if !(eps >= S::zero()) {
        return Err(Error::InvalidParameter("ε must be nonnegative".into()));
    }
    let upper = S::lit(2.0) / (S::one() + eps);
    let warning = if a >= upper {
        Some(format!("a = {a} is outside the usable window (1, {upper})"))
    } else {
        None
    };
    let ceil_pow = |j: u64| -> u64 { S::lit(j as f64).powf(a).ceil().to_u64().unwrap_or(u64::MAX) };
    let mut segments = Vec::new();
    let mut j = 1u64;
    loop {
        let start = ceil_pow(j);
        if start >= n {
            break;
        }
        let end = ceil_pow(j + 1).min(n);
        if end > start {
            let s = S::lit(start as f64);
            segments.push(Segment {
                j,
                start,
                end,
                base: s.powf(S::one() + eps),
                slope: (S::one() + eps) * s.powf(eps),
            });
        }
        j += 1;
    }
    Ok(ProgressionApprox {
        eps,
        a,
        segments,
        warning,
    })
}

/// Which analytic Weyl-sum bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "camelCase")]
pub enum WeylBoundMode<S> {
    /// `f(x) = ξ x^p` with `f'` monotone: `(1/|f'(N)| + |f(N)|)/N`.
    Fejer { xi: S, p: S },
    /// Polynomial of degree `p` with leading coefficient at distance
    /// `dist` from ℤ: `N^{−4^{1−p}} / dist`.
    VdcPoly { p: u32, dist: S },
    /// `ξ n^p` with non-integer `p`:
    /// `(|ξ|⁻¹ N^{⌈p⌉−p−1} + |ξ| N^{p−⌈p⌉})^{1/(2⌈p⌉)}`.
    VdcFrac { p: S, xi: S },
}

/// Variable part of the analytic bound for `|(1/N) Σ e(f(n))|`.
pub fn analytic_weyl_bound<S: Real>(mode: WeylBoundMode<S>, n: u64) -> Result<S> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    let nn = S::lit(n as f64);
    match mode {
        WeylBoundMode::Fejer { xi, p } => {
            if !(p > S::zero()) || xi == S::zero() {
                return Err(Error::InvalidParameter("Fejér bound needs p > 0 and ξ ≠ 0".into()));
            }
            let fprime = (xi * p * nn.powf(p - S::one())).abs();
            let f = (xi * nn.powf(p)).abs();
            Ok((S::one() / fprime + f) / nn)
        }
        WeylBoundMode::VdcPoly { p, dist } => {
            if p < 1 {
                return Err(Error::InvalidParameter("degree must be at least 1".into()));
            }
            if !(dist > S::zero()) || dist > S::lit(0.5) {
                return Err(Error::InvalidParameter(format!(
                    "distance to ℤ must lie in (0, 1/2], got {dist}"
                )));
            }
            let expo = S::lit(4f64.powi(1 - p as i32));
            Ok(nn.powf(-expo) / dist)
        }
        WeylBoundMode::VdcFrac { p, xi } => {
            if !(p > S::zero()) || p.fract() == S::zero() {
                return Err(Error::InvalidParameter("exponent p must be a positive non-integer".into()));
            }
            if xi == S::zero() {
                return Err(Error::InvalidParameter("ξ must be nonzero".into()));
            }
            let q = p.ceil();
            let ax = xi.abs();
            let inner = nn.powf(q - p - S::one()) / ax + ax * nn.powf(p - q);
            Ok(inner.powf(S::one() / (S::lit(2.0) * q)))
        }
    }
}

/// Phase function of a Weyl sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real", tag = "kind", rename_all = "camelCase")]
pub enum WeylPhase<S> {
    /// `Σ_j c_j n^j`.
    Polynomial { coeffs: Vec<S> },
    /// `ξ n^p`.
    Power { xi: S, p: S },
}

impl<S: Real> WeylPhase<S> {
    /// `f(n) mod 1`.
    pub fn phase(&self, n: u64) -> Result<S> {
        match self {
            Self::Polynomial { coeffs } => {
                let mut acc = S::zero();
                let mut pow: i128 = 1;
                for (j, &c) in coeffs.iter().enumerate() {
                    if j > 0 {
                        pow = pow
                            .checked_mul(n as i128)
                            .ok_or_else(|| Error::InvalidParameter("polynomial phase overflows i128".into()))?;
                    }
                    acc = frac(acc + frac_mul_int(c, pow));
                }
                Ok(acc)
            }
            Self::Power { xi, p } => {
                if p.fract() == S::zero() && *p >= S::zero() {
                    let k = p.to_u32().unwrap_or(u32::MAX);
                    let m = (n as i128)
                        .checked_pow(k)
                        .ok_or_else(|| Error::InvalidParameter("power phase overflows i128".into()))?;
                    Ok(frac_mul_int(*xi, m))
                } else {
                    Ok(frac_prod(*xi, S::lit(n as f64).powf(*p)))
                }
            }
        }
    }
}

/// `(1/N) Σ_{n=0}^{N−1} e(f(n))`.
pub fn weyl_sum<S: Real>(phase: &WeylPhase<S>, n: u64) -> Result<Complex<S>> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    phase.phase(n - 1)?;
    let total = par_sum_complex(n as usize, |i| e(phase.phase(i as u64).expect("checked at the top")));
    Ok(total / S::lit(n as f64))
}

/// Distribution of iid weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum WeightDist {
    /// Uniform on `{−1, +1}`.
    PmOne,
    /// `1` with probability `p`, else `0`.
    Bernoulli { p: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// Seeded iid draws with their almost-sure bound `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWeights<S> {
    pub seed: u64,
    pub values: Vec<S>,
    pub bound: S,
}

/// Draws `count` weights from ChaCha8 seeded with `seed` (via
/// `SeedableRng::seed_from_u64`), so sequences are platform independent.
pub fn random_weights<S: Real>(seed: u64, dist: WeightDist, count: usize) -> Result<RandomWeights<S>> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (values, bound): (Vec<f64>, f64) = match dist {
        WeightDist::PmOne => ((0..count).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect(), 1.0),
        WeightDist::Bernoulli { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("Bernoulli p must lie in [0,1], got {p}")));
            }
            ((0..count).map(|_| if rng.gen_bool(p) { 1.0 } else { 0.0 }).collect(), 1.0)
        }
        WeightDist::Uniform { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidParameter("unbounded weight distribution".into()));
            }
            if !(lo < hi) {
                return Err(Error::InvalidParameter("uniform bounds need lo < hi".into()));
            }
            ((0..count).map(|_| rng.gen_range(lo..hi)).collect(), lo.abs().max(hi.abs()))
        }
    };
    Ok(RandomWeights {
        seed,
        values: values.into_iter().map(S::lit).collect(),
        bound: S::lit(bound),
    })
}

/// Result of a `Y` evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YValue<S> {
    pub value: S,
    /// Estimated quadrature error.
    pub error: S,
    /// Bound on the truncated tail (zero for the periodized evaluation).
    pub tail: S,
}

/// `Y_{N,δ} = ∫_{ℝ^d} |Σ_{n∈[1,N]^d} θ_n e(<ξ,n>)| ∏_j |F(χ_δ)(ξ_j)| dξ`.
///
/// The sum is 1-periodic in each `ξ_j`, so the integral folds onto the
/// torus against `W(η) = Σ_l F(χ_δ)(η + l) = Σ_{|m|<δ} χ_δ(m) e(mη)`
/// (Poisson summation; `W ≡ 1/δ` when `δ < 1`). The torus integral is the
/// trapezoidal rule on an `M^d` grid, `M = oversample·(N+1)` rounded to an
/// even size, evaluated with an FFT; the error estimate compares it with the
/// half-resolution subgrid.
///
/// `theta` lists the weights in lexicographic order of `n`.
pub fn y_statistic<S: Real>(theta: &[S], n: usize, dim: usize, delta: S, oversample: usize) -> Result<YValue<S>> {
    let kernel = TriangleKernel::new(delta)?;
    if dim == 0 || n == 0 || theta.len() != n.pow(dim as u32) {
        return Err(Error::InvalidParameter(format!(
            "expected {n}^{dim} weights, got {}",
            theta.len()
        )));
    }
    if oversample < 2 {
        return Err(Error::InvalidParameter("oversample must be at least 2".into()));
    }
    if theta.iter().all(|t| *t == S::zero()) {
        return Ok(YValue { value: S::zero(), error: S::zero(), tail: S::zero() });
    }
    let m = (oversample * (n + 1)).next_multiple_of(2);
    let total = m.checked_pow(dim as u32).filter(|&t| t <= 1 << 26).ok_or_else(|| {
        Error::InvalidParameter("FFT grid too large; lower N, dim or oversample".into())
    })?;
    let mut grid = vec![Complex::<f64>::new(0.0, 0.0); total];
    for (idx, &t) in theta.iter().enumerate() {
        // n_j = 1 + digit_j, placed at grid index n_j (mod m)
        let mut r = idx;
        let mut pos = 0;
        let mut stride = 1;
        for _ in 0..dim {
            pos += (r % n + 1) * stride;
            r /= n;
            stride *= m;
        }
        grid[pos] = Complex::new(t.as_f64(), 0.0);
    }
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(m);
    let mut line = vec![Complex::new(0.0, 0.0); m];
    let mut stride = 1;
    for _ in 0..dim {
        // transform every line along the current axis
        for base in 0..total {
            if (base / stride) % m != 0 {
                continue;
            }
            for (i, v) in line.iter_mut().enumerate() {
                *v = grid[base + i * stride];
            }
            fft.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                grid[base + i * stride] = *v;
            }
        }
        stride *= m;
    }
    // periodized kernel weight on the grid
    let dl = delta.as_f64();
    let mmax = dl.ceil() as i64;
    let w1: Vec<f64> = (0..m)
        .map(|i| {
            let eta = i as f64 / m as f64;
            let mut w = kernel.value(S::zero()).as_f64();
            for q in 1..mmax {
                w += 2.0 * kernel.value(S::lit(q as f64)).as_f64() * (std::f64::consts::TAU * q as f64 * eta).cos();
            }
            w
        })
        .collect();
    let weight = |mut idx: usize| -> (f64, bool) {
        let mut w = 1.0;
        let mut even = true;
        for _ in 0..dim {
            let i = idx % m;
            even &= i % 2 == 0;
            w *= w1[i];
            idx /= m;
        }
        (w, even)
    };
    let fine = par_sum(total, |i| grid[i].norm() * weight(i).0);
    let coarse = par_sum(total, |i| {
        let (w, even) = weight(i);
        if even {
            grid[i].norm() * w
        } else {
            0.0
        }
    });
    let cell = (m as f64).powi(-(dim as i32));
    let value = fine * cell;
    let half = coarse * cell * 2f64.powi(dim as i32);
    Ok(YValue {
        value: S::lit(value),
        error: S::lit((value - half).abs()),
        tail: S::zero(),
    })
}

/// `Y` for `d = 1` by direct Gauss–Legendre quadrature of the defining
/// integral truncated to `|ξ| ≤ Ξ`. The reported tail bounds the omitted
/// part by `Σ|θ| · 2/(π²δ²Ξ)`.
pub fn y_statistic_truncated<S: Real>(theta: &[S], delta: S, xi_max: S, panels_per_unit: usize) -> Result<YValue<S>> {
    let kernel = TriangleKernel::new(delta)?;
    if !(xi_max > S::zero()) || panels_per_unit == 0 {
        return Err(Error::InvalidParameter("need Ξ > 0 and at least one panel per unit".into()));
    }
    let rule = GaussLegendre::<S>::new(8);
    let width = S::one() / S::lit(panels_per_unit as f64);
    let panels = (xi_max / width).ceil().to_usize().unwrap_or(0);
    let s_abs = |xi: S| -> S {
        let mut acc = crate::sum::ComplexNeumaier::new();
        for (i, &t) in theta.iter().enumerate() {
            acc.add(e(frac_prod(xi, S::lit((i + 1) as f64))) * t);
        }
        acc.value().norm()
    };
    // integrand is even in ξ for real weights only up to conjugation, so
    // integrate both halves
    let half_integral = |sign: S| {
        par_sum(panels, |p| {
            let lo = width * S::lit(p as f64);
            let mut acc = Neumaier::new();
            for (x, w) in rule.mapped(lo, lo + width) {
                acc.add(w * s_abs(sign * x) * kernel.transform(x));
            }
            acc.value()
        })
    };
    let value = half_integral(S::one()) + half_integral(-S::one());
    let l1 = theta.iter().fold(S::zero(), |a, t| a + t.abs());
    let tail = l1 * S::lit(2.0) / (S::PI() * S::PI() * delta * delta * S::lit(panels as f64) * width);
    if tail > S::lit(0.1) * value {
        return Err(Error::InsufficientAccuracy(format!(
            "tail bound {tail} exceeds 10% of the estimate {value}; increase Ξ"
        )));
    }
    Ok(YValue { value, error: S::zero(), tail })
}

/// Both sides of the van der Corput inequality
/// `H²|Σu_n|² ≤ H(N+H−1)Σ|u_n|² + 2(N+H−1)Σ_{h<H}(H−h) Re Σ_n u_n conj(u_{n+h})`
/// for `1 ≤ H ≤ N`. Returns `(lhs, rhs)`.
pub fn van_der_corput_sides<S: Real>(u: &[Complex<S>], h: usize) -> Result<(S, S)> {
    let n = u.len();
    if h < 1 || h > n {
        return Err(Error::InvalidParameter(format!("need 1 ≤ H ≤ N, got H={h}, N={n}")));
    }
    let hs = S::lit(h as f64);
    let span = S::lit((n + h - 1) as f64);
    let lhs = hs * hs * pairwise_complex(u).norm_sqr();
    let mut energy = Neumaier::new();
    for z in u {
        energy.add(z.norm_sqr());
    }
    let mut acc = Neumaier::new();
    acc.add(hs * span * energy.value());
    for lag in 1..h {
        let mut c = Neumaier::new();
        for i in 0..n - lag {
            c.add((u[i] * u[i + lag].conj()).re);
        }
        acc.add(S::lit(2.0) * span * S::lit((h - lag) as f64) * c.value());
    }
    Ok((lhs, acc.value()))
}
