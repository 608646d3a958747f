//! Rate functionals on concrete systems: ergodic and twisted averages, the
//! weak-mixing rate, weighted sparse sums, the smoothing pipeline, the
//! spectral-mass statistic and the audit of the twisted-average inequality.
//!
//! Windows are two sided: discrete averages run over `[−T, T]^d ∩ ℤ^d` and
//! are normalized by `(2T+1)^d`; continuous ones integrate over `[−T, T]^d`
//! with composite Gauss–Legendre and divide by `(2T)^d`.

use std::collections::HashMap;
use std::time::Instant;

use num_bigint::BigInt;
use num_complex::Complex;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::WeightedSampleSet;
use crate::kernels::{box_kernel, GroupKind, TriangleKernel};
use crate::observables::{exact_correlation, FourierObservable};
use crate::phase::{e, frac, frac_dot, frac_mul_int};
use crate::quad::GaussLegendre;
use crate::scalar::Real;
use crate::sum::{pairwise_complex, par_sum_complex, ComplexNeumaier, Neumaier};
use crate::systems::{ActionKind, GroupElement, StatePoint, SystemSpec};

/// One measured value of a rate functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct RateSample<S> {
    pub t: S,
    pub value: S,
    /// Named auxiliary terms, in a fixed order per experiment.
    pub aux: Vec<(String, S)>,
    pub seed: Option<u64>,
    pub wall_time: f64,
}

impl<S: Real> RateSample<S> {
    pub fn new(t: S, value: S) -> Self {
        Self {
            t,
            value,
            aux: Vec::new(),
            seed: None,
            wall_time: 0.0,
        }
    }
}

/// Times `f` and wraps its result into a [`RateSample`].
pub fn timed<S: Real, F: FnOnce() -> Result<S>>(t: S, seed: Option<u64>, f: F) -> Result<RateSample<S>> {
    let start = Instant::now();
    let value = f()?;
    Ok(RateSample {
        t,
        value,
        aux: Vec::new(),
        seed,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Composite Gauss–Legendre settings for continuous-time integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real", default)]
pub struct QuadSettings<S> {
    pub order: usize,
    pub panel: S,
}

impl<S: Real> Default for QuadSettings<S> {
    fn default() -> Self {
        Self {
            order: 8,
            panel: S::lit(0.25),
        }
    }
}

/// Uniform (invariant) random point. Suspension states draw the base point
/// with density proportional to the roof, then a uniform height.
pub fn sample_uniform_point<S: Real, R: Rng>(spec: &SystemSpec<S>, rng: &mut R) -> StatePoint<S> {
    let n = spec.phase_dim();
    let draw = |rng: &mut R| -> Vec<S> { (0..n).map(|_| S::lit(rng.gen::<f64>())).collect() };
    match roof_of(spec) {
        None => StatePoint::new(draw(rng)),
        Some(roof) => {
            let top = roof.grid_max().max(roof.analytic_bounds().1.min(roof.grid_max() * S::lit(1.5)));
            loop {
                let c = draw(rng);
                let r = roof.evaluate(&c);
                if S::lit(rng.gen::<f64>()) * top <= r {
                    let h = S::lit(rng.gen::<f64>()) * r;
                    return StatePoint::with_height(c, h);
                }
            }
        }
    }
}

fn roof_of<S: Real>(spec: &SystemSpec<S>) -> Option<&crate::observables::TrigFunction<S>> {
    match spec {
        SystemSpec::SuspensionFlow { roof, .. } => Some(roof),
        SystemSpec::TimeChange { base, .. } => roof_of(base),
        SystemSpec::Restricted { flow } => roof_of(flow),
        _ => None,
    }
}

/// Whether `evolve(x, g)` costs O(1) in `|g|`.
fn direct_evaluable<S: Real>(spec: &SystemSpec<S>) -> bool {
    match spec {
        SystemSpec::Rotation { .. }
        | SystemSpec::LinearFlow { .. }
        | SystemSpec::SkewShift { .. }
        | SystemSpec::HeisenbergReturnMap { .. } => true,
        SystemSpec::ProductSystem { factors } => factors.iter().all(direct_evaluable),
        _ => false,
    }
}

fn discrete_window<S: Real>(t: S) -> Result<i64> {
    if !(t >= S::zero()) || t.fract() != S::zero() {
        return Err(Error::NonIntegerTime);
    }
    t.to_i64().ok_or_else(|| Error::InvalidParameter("window too large".into()))
}

/// Lattice points of `[−r, r]^d`, last axis fastest.
fn lattice(r: i64, d: usize) -> Vec<Vec<i64>> {
    let side = (2 * r + 1) as usize;
    (0..side.pow(d as u32))
        .map(|mut idx| {
            let mut v = vec![0i64; d];
            for c in v.iter_mut().rev() {
                *c = (idx % side) as i64 - r;
                idx /= side;
            }
            v
        })
        .collect()
}

/// Orbit states `φ_n x` for `n ∈ [−r, r]^d`, last axis fastest.
pub fn discrete_orbit<S: Real>(spec: &SystemSpec<S>, x: &StatePoint<S>, r: i64) -> Result<Vec<StatePoint<S>>> {
    if !spec.is_discrete() {
        return Err(Error::WrongTimeDomain("continuous"));
    }
    let d = spec.group_dim();
    if direct_evaluable(spec) {
        return lattice(r, d)
            .into_par_iter()
            .map(|n| spec.evolve(x, &GroupElement::Discrete(n)))
            .collect();
    }
    // walk unit steps one axis at a time
    let mut layer = vec![x.clone()];
    for axis in 0..d {
        let lines: Vec<Vec<StatePoint<S>>> = layer
            .par_iter()
            .map(|p| walk_line(spec, p, axis, r))
            .collect::<Result<_>>()?;
        layer = lines.into_iter().flatten().collect();
    }
    Ok(layer)
}

fn walk_line<S: Real>(spec: &SystemSpec<S>, p: &StatePoint<S>, axis: usize, r: i64) -> Result<Vec<StatePoint<S>>> {
    let r = r as usize;
    let mut line = vec![p.clone(); 2 * r + 1];
    for i in 1..=r {
        line[r + i] = spec.step(&line[r + i - 1], axis, true)?;
        line[r - i] = spec.step(&line[r - i + 1], axis, false)?;
    }
    Ok(line)
}

/// Samples of an observable along an orbit together with integration
/// weights, ready for any number of twists.
#[derive(Debug, Clone)]
pub struct Orbit<S> {
    dim: usize,
    /// Integer times for discrete systems.
    ints: Option<Vec<Vec<i64>>>,
    times: Vec<Vec<S>>,
    weights: Vec<S>,
    values: Vec<Complex<S>>,
    norm: S,
}

impl<S: Real> Orbit<S> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_discrete(&self) -> bool {
        self.ints.is_some()
    }

    pub fn values(&self) -> &[Complex<S>] {
        &self.values
    }

    /// Window volume `(2T+1)^d` or `(2T)^d`.
    pub fn norm(&self) -> S {
        self.norm
    }

    /// Unnormalized `Σ_n f(φ_n x) e(<a,n>)` or the corresponding integral.
    pub fn twisted_sum(&self, a: &[S]) -> Complex<S> {
        debug_assert_eq!(a.len(), self.dim);
        if a.iter().all(|v| *v == S::zero()) {
            return par_sum_complex(self.len(), |i| self.values[i] * self.weights[i]);
        }
        match &self.ints {
            Some(ints) => {
                let red: Vec<S> = a.iter().map(|&v| frac(v)).collect();
                par_sum_complex(self.len(), |i| {
                    let mut ph = S::zero();
                    for (&aj, &nj) in red.iter().zip(&ints[i]) {
                        ph = frac(ph + frac_mul_int(aj, nj as i128));
                    }
                    self.values[i] * e(ph)
                })
            }
            None => par_sum_complex(self.len(), |i| {
                self.values[i] * e(frac_dot(a, &self.times[i])) * self.weights[i]
            }),
        }
    }

    /// Normalized twisted average.
    pub fn twisted(&self, a: &[S]) -> Complex<S> {
        self.twisted_sum(a) / self.norm
    }
}

/// `f(φ_t x)` sampled on the averaging window `[−T, T]^d`.
pub fn sample_orbit<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    x: &StatePoint<S>,
    t: S,
    quad: &QuadSettings<S>,
) -> Result<Orbit<S>> {
    f.check_dim(spec.phase_dim())?;
    if x.dim() != spec.phase_dim() {
        return Err(Error::DimensionMismatch { expected: spec.phase_dim(), got: x.dim() });
    }
    let d = spec.group_dim();
    if spec.is_discrete() {
        let r = discrete_window(t)?;
        let pts = discrete_orbit(spec, x, r)?;
        let values: Vec<Complex<S>> = pts.par_iter().map(|p| f.evaluate(&p.coords)).collect();
        let ints = lattice(r, d);
        let times = ints.iter().map(|n| n.iter().map(|&v| S::from_i64_exact(v)).collect()).collect();
        let n = values.len();
        return Ok(Orbit {
            dim: d,
            ints: Some(ints),
            times,
            weights: vec![S::one(); n],
            values,
            norm: S::lit((2 * r + 1) as f64).powi(d as i32),
        });
    }
    if !(t > S::zero()) {
        return Err(Error::InvalidParameter("window half-width must be positive".into()));
    }
    let rule = GaussLegendre::<S>::new(quad.order);
    let nodes = rule.composite_nodes(-t, t, quad.panel);
    let (times, weights): (Vec<Vec<S>>, Vec<S>) = tensor_nodes(&nodes, d).into_iter().unzip();
    let values: Vec<Complex<S>> = if direct_evaluable(spec) {
        times
            .par_iter()
            .map(|s| Ok(f.evaluate(&spec.evolve(x, &GroupElement::Continuous(s.clone()))?.coords)))
            .collect::<Result<_>>()?
    } else {
        if d != 1 {
            return Err(Error::InvalidSystem("marching orbits need a one-parameter flow".into()));
        }
        let ts: Vec<S> = nodes.iter().map(|p| p.0).collect();
        march(spec, x, &ts)?.iter().map(|p| f.evaluate(&p.coords)).collect()
    };
    Ok(Orbit {
        dim: d,
        ints: None,
        times,
        weights,
        values,
        norm: (S::lit(2.0) * t).powi(d as i32),
    })
}

fn tensor_nodes<S: Real>(nodes: &[(S, S)], d: usize) -> Vec<(Vec<S>, S)> {
    let m = nodes.len();
    (0..m.pow(d as u32))
        .map(|mut idx| {
            let mut t = vec![S::zero(); d];
            let mut w = S::one();
            for c in t.iter_mut().rev() {
                let (ti, wi) = nodes[idx % m];
                *c = ti;
                w = w * wi;
                idx /= m;
            }
            (t, w)
        })
        .collect()
}

/// States at sorted times `ts` of a one-parameter flow, reached by
/// incremental evolution outward from `t = 0`.
fn march<S: Real>(spec: &SystemSpec<S>, x: &StatePoint<S>, ts: &[S]) -> Result<Vec<StatePoint<S>>> {
    let split = ts.partition_point(|&t| t < S::zero());
    let mut out = vec![x.clone(); ts.len()];
    let mut y = x.clone();
    let mut prev = S::zero();
    for i in split..ts.len() {
        y = spec.evolve(&y, &GroupElement::real(ts[i] - prev))?;
        prev = ts[i];
        out[i] = y.clone();
    }
    let mut y = x.clone();
    let mut prev = S::zero();
    for i in (0..split).rev() {
        y = spec.evolve(&y, &GroupElement::real(ts[i] - prev))?;
        prev = ts[i];
        out[i] = y.clone();
    }
    Ok(out)
}

/// Normalized twisted average of `f` along the orbit of `x`.
pub fn twisted_average<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    x: &StatePoint<S>,
    t: S,
    a: &[S],
    quad: &QuadSettings<S>,
) -> Result<Complex<S>> {
    if a.len() != spec.group_dim() {
        return Err(Error::DimensionMismatch { expected: spec.group_dim(), got: a.len() });
    }
    Ok(sample_orbit(spec, f, x, t, quad)?.twisted(a))
}

/// Normalized ergodic average (the zero twist).
pub fn ergodic_average<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    x: &StatePoint<S>,
    t: S,
    quad: &QuadSettings<S>,
) -> Result<Complex<S>> {
    twisted_average(spec, f, x, t, &vec![S::zero(); spec.group_dim()], quad)
}

/// `β_{f,x}(T)` for a mean-zero observable.
pub fn beta_rate<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    x: &StatePoint<S>,
    t: S,
    quad: &QuadSettings<S>,
) -> Result<S> {
    if !f.is_mean_zero() {
        return Err(Error::InvalidParameter("beta rate needs a mean-zero observable".into()));
    }
    Ok(ergodic_average(spec, f, x, t, quad)?.norm())
}

/// Grid and refinement settings for the sup over twists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real", default)]
pub struct GammaSettings<S> {
    /// Grid points per axis.
    pub grid: usize,
    /// Number of best cells refined by golden-section search.
    pub refine: usize,
    /// Half-width of the twist window for flows (`a ∈ [−w, w]^d`).
    pub window: S,
}

impl<S: Real> Default for GammaSettings<S> {
    fn default() -> Self {
        Self {
            grid: 256,
            refine: 5,
            window: S::lit(4.0),
        }
    }
}

/// Approximate `γ_{f,x}(T) = sup_a |twisted average|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct GammaSup<S> {
    /// Largest value found; a lower bound for the true sup.
    pub value: S,
    pub argmax: Vec<S>,
    /// Grid spacing.
    pub resolution: S,
    /// Whether refinement moved the maximizer by more than one cell.
    pub moved: bool,
}

pub fn gamma_sup<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    x: &StatePoint<S>,
    t: S,
    settings: &GammaSettings<S>,
    quad: &QuadSettings<S>,
) -> Result<GammaSup<S>> {
    let orbit = sample_orbit(spec, f, x, t, quad)?;
    gamma_sup_orbit(&orbit, settings)
}

/// Sup over twists for a precomputed orbit.
pub fn gamma_sup_orbit<S: Real>(orbit: &Orbit<S>, settings: &GammaSettings<S>) -> Result<GammaSup<S>> {
    if settings.grid < 2 {
        return Err(Error::InvalidParameter("twist grid needs at least 2 points per axis".into()));
    }
    let d = orbit.dim;
    let g = settings.grid;
    let (lo, span) = if orbit.is_discrete() {
        (S::zero(), S::one())
    } else {
        (-settings.window, S::lit(2.0) * settings.window)
    };
    let h = span / S::lit(g as f64);
    let total = g
        .checked_pow(d as u32)
        .filter(|&n| n <= 1 << 22)
        .ok_or_else(|| Error::InvalidParameter("twist grid too large".into()))?;
    let point = |mut idx: usize| -> Vec<S> {
        let mut a = vec![S::zero(); d];
        for c in a.iter_mut().rev() {
            *c = lo + h * S::lit((idx % g) as f64);
            idx /= g;
        }
        a
    };
    let vals: Vec<S> = (0..total).into_par_iter().map(|i| orbit.twisted(&point(i)).norm()).collect();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let mut best = (vals[order[0]], point(order[0]), false);
    let refined: Vec<(S, Vec<S>, bool)> = order
        .iter()
        .take(settings.refine.max(1))
        .map(|&i| {
            let start = point(i);
            let (v, a) = refine_twist(orbit, &start, h);
            let moved = a.iter().zip(&start).any(|(p, q)| (*p - *q).abs() > h);
            (v.max(vals[i]), if v >= vals[i] { a } else { start }, moved)
        })
        .collect();
    for cand in refined {
        if cand.0 > best.0 {
            best = cand;
        }
    }
    Ok(GammaSup {
        value: best.0,
        argmax: best.1,
        resolution: h,
        moved: best.2,
    })
}

/// Coordinatewise golden-section ascent in the box `start ± h`.
fn refine_twist<S: Real>(orbit: &Orbit<S>, start: &[S], h: S) -> (S, Vec<S>) {
    let mut a = start.to_vec();
    let ratio = S::lit(0.618_033_988_749_894_9);
    let passes = if a.len() == 1 { 1 } else { 3 };
    for _ in 0..passes {
        for j in 0..a.len() {
            let eval = |v: S, a: &mut Vec<S>| {
                a[j] = v;
                orbit.twisted(a).norm()
            };
            let (mut lo, mut hi) = (start[j] - h, start[j] + h);
            let mut c = hi - ratio * (hi - lo);
            let mut dd = lo + ratio * (hi - lo);
            let mut fc = eval(c, &mut a);
            let mut fd = eval(dd, &mut a);
            for _ in 0..40 {
                if fc > fd {
                    hi = dd;
                    dd = c;
                    fd = fc;
                    c = hi - ratio * (hi - lo);
                    fc = eval(c, &mut a);
                } else {
                    lo = c;
                    c = dd;
                    fc = fd;
                    dd = lo + ratio * (hi - lo);
                    fd = eval(dd, &mut a);
                }
            }
            a[j] = if fc > fd { c } else { dd };
        }
    }
    let v = orbit.twisted(&a).norm();
    (v, a)
}

/// How inner products `⟨f∘φ_t, g⟩` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "camelCase")]
pub enum InnerProduct {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate<S> {
    pub mean: Complex<S>,
    pub std_err: S,
}

/// Seeded uniform points, identical for any thread count.
pub fn uniform_points<S: Real>(spec: &SystemSpec<S>, samples: usize, seed: u64) -> Vec<StatePoint<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).map(|_| sample_uniform_point(spec, &mut rng)).collect()
}

/// `⟨f∘φ_t, g⟩` by Monte Carlo over uniform points.
pub fn mc_correlation<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    g: &FourierObservable<S>,
    t: &GroupElement<S>,
    samples: usize,
    seed: u64,
) -> Result<McEstimate<S>> {
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let pts = uniform_points(spec, samples, seed);
    let terms: Vec<Complex<S>> = pts
        .par_iter()
        .map(|x| Ok(f.evaluate(&spec.evolve(x, t)?.coords) * g.evaluate(&x.coords).conj()))
        .collect::<Result<_>>()?;
    Ok(mean_and_error(&terms))
}

fn mean_and_error<S: Real>(terms: &[Complex<S>]) -> McEstimate<S> {
    let n = S::lit(terms.len() as f64);
    let mean = pairwise_complex(terms) / n;
    let dev: Vec<S> = terms.iter().map(|z| (*z - mean).norm_sqr()).collect();
    let var = crate::sum::pairwise(&dev) / (n - S::one());
    McEstimate {
        mean,
        std_err: (var / n).sqrt(),
    }
}

/// `α_{f,g}(T)`: the window average of `|⟨f∘φ_t, g⟩|`.
pub fn alpha_rate<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    g: &FourierObservable<S>,
    t: S,
    mode: InnerProduct,
    quad: &QuadSettings<S>,
) -> Result<S> {
    let d = spec.group_dim();
    match mode {
        InnerProduct::Exact => {
            if !spec.has_exact_oracle() {
                return Err(Error::UnsupportedSpec(spec.name()));
            }
            if spec.is_discrete() {
                let r = discrete_window(t)?;
                let pts = lattice(r, d);
                let vals: Vec<S> = pts
                    .into_par_iter()
                    .map(|n| Ok(exact_correlation(spec, f, g, &GroupElement::Discrete(n))?.norm()))
                    .collect::<Result<_>>()?;
                Ok(crate::sum::pairwise(&vals) / S::lit((2 * r + 1) as f64).powi(d as i32))
            } else {
                let rule = GaussLegendre::<S>::new(quad.order);
                let nodes = tensor_nodes(&rule.composite_nodes(-t, t, quad.panel), d);
                let vals: Vec<S> = nodes
                    .into_par_iter()
                    .map(|(s, w)| Ok(w * exact_correlation(spec, f, g, &GroupElement::Continuous(s))?.norm()))
                    .collect::<Result<_>>()?;
                Ok(crate::sum::pairwise(&vals) / (S::lit(2.0) * t).powi(d as i32))
            }
        }
        InnerProduct::MonteCarlo { samples, seed } => {
            let pts = uniform_points(spec, samples, seed);
            let orbits: Vec<(Orbit<S>, Complex<S>)> = pts
                .par_iter()
                .map(|x| Ok((sample_orbit(spec, f, x, t, quad)?, g.evaluate(&x.coords).conj())))
                .collect::<Result<_>>()?;
            let m = orbits[0].0.len();
            let total: S = (0..m)
                .into_par_iter()
                .map(|i| {
                    let mut acc = ComplexNeumaier::new();
                    for (o, gx) in &orbits {
                        acc.add(o.values[i] * *gx);
                    }
                    (acc.value() / S::lit(samples as f64)).norm() * orbits[0].0.weights[i]
                })
                .collect::<Vec<S>>()
                .iter()
                .fold(Neumaier::new(), |mut a, v| {
                    a.add(*v);
                    a
                })
                .value();
            Ok(total / orbits[0].0.norm)
        }
    }
}

/// `(1/#B) Σ_b θ_b f(φ_b x)`.
pub fn weighted_sparse_sum<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    x: &StatePoint<S>,
    set: &WeightedSampleSet<S>,
) -> Result<Complex<S>> {
    check_set(spec, set)?;
    if set.is_empty() {
        return Ok(Complex::zero());
    }
    let terms = sampled_values(spec, f, x, set)?;
    let w = set.weights();
    let weighted: Vec<Complex<S>> = terms.iter().zip(w).map(|(v, t)| *v * *t).collect();
    Ok(pairwise_complex(&weighted) / S::lit(set.len() as f64))
}

fn check_set<S: Real>(spec: &SystemSpec<S>, set: &WeightedSampleSet<S>) -> Result<()> {
    if set.dim() != spec.group_dim() {
        return Err(Error::DimensionMismatch { expected: spec.group_dim(), got: set.dim() });
    }
    if spec.is_discrete() && !set.is_integral() {
        return Err(Error::NonIntegerTime);
    }
    Ok(())
}

fn group_element<S: Real>(spec: &SystemSpec<S>, b: &[S]) -> GroupElement<S> {
    if spec.is_discrete() {
        GroupElement::Discrete(b.iter().map(|v| v.to_i64().expect("integral point")).collect())
    } else {
        GroupElement::Continuous(b.to_vec())
    }
}

fn sampled_values<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    x: &StatePoint<S>,
    set: &WeightedSampleSet<S>,
) -> Result<Vec<Complex<S>>> {
    set.points()
        .par_iter()
        .map(|b| Ok(f.evaluate(&spec.evolve(x, &group_element(spec, b))?.coords)))
        .collect()
}

/// Outcome of comparing a weighted sparse sum with its kernel-smoothed
/// counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct SmoothedAudit<S> {
    /// `Σ_b θ_b f(φ_b x) e(<a,b>)`.
    pub discrete: Complex<S>,
    /// `∫ G_δ(t) e(<a,t>) f(φ_t x) dt` over `[−d(B), d(B)]^d`.
    pub smoothed: Complex<S>,
    /// `1 + modulus(f, δ)·#B·max|θ|`.
    pub error_bound: S,
    pub modulus: S,
    /// `|discrete − smoothed| / error_bound`.
    pub constant: S,
}

/// `sup_{|t|_∞ ≤ δ} sup_x |f(x) − f(φ_t x)|`, analytic for linear flows
/// and sampled otherwise.
pub fn modulus<S: Real>(spec: &SystemSpec<S>, f: &FourierObservable<S>, delta: S) -> Result<S> {
    if let SystemSpec::LinearFlow { alpha, action } = spec {
        let two = S::lit(2.0);
        let mut acc = S::zero();
        for (k, a) in f.coeffs() {
            let speed = match action {
                ActionKind::Flow => k.iter().zip(alpha).fold(S::zero(), |s, (&kj, &aj)| s + S::lit(kj as f64) * aj).abs(),
                ActionKind::Componentwise => {
                    k.iter().zip(alpha).fold(S::zero(), |s, (&kj, &aj)| s + (S::lit(kj as f64) * aj).abs())
                }
            };
            acc = acc + a.norm() * two.min(S::TAU() * speed * delta);
        }
        return Ok(acc);
    }
    // sampled: 512 seeded points, shifts at ±δ and ±δ/2 along each axis
    let d = spec.group_dim();
    let pts = uniform_points(spec, 512, 0x6d6f64);
    let shifts: Vec<S> = vec![delta, -delta, delta / S::lit(2.0), -delta / S::lit(2.0)];
    let mut best = S::zero();
    for x in &pts {
        let fx = f.evaluate(&x.coords);
        for axis in 0..d {
            for &s in &shifts {
                let mut t = vec![S::zero(); d];
                t[axis] = s;
                let y = spec.evolve(x, &GroupElement::Continuous(t))?;
                best = best.max((f.evaluate(&y.coords) - fx).norm());
            }
        }
    }
    Ok(best * S::lit(1.5))
}

pub fn smoothed_sum_audit<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    x: &StatePoint<S>,
    set: &WeightedSampleSet<S>,
    delta: S,
    a: &[S],
) -> Result<SmoothedAudit<S>> {
    if spec.is_discrete() {
        return Err(Error::WrongTimeDomain("discrete"));
    }
    check_set(spec, set)?;
    let d = spec.group_dim();
    if a.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: a.len() });
    }
    let kernel = TriangleKernel::new(delta)?;
    if set.len() > 1 && !(delta < set.min_gap()) {
        return Err(Error::InvalidParameter(format!(
            "kernel width {delta} must be below the minimal gap {}",
            set.min_gap()
        )));
    }
    let values = sampled_values(spec, f, x, set)?;
    let discrete = pairwise_complex(
        &set.points()
            .iter()
            .zip(set.weights())
            .zip(&values)
            .map(|((b, w), v)| *v * e(frac_dot(a, b)) * *w)
            .collect::<Vec<_>>(),
    );
    let rule = GaussLegendre::<S>::new(8);
    let reach = set.diameter();
    let smoothed_terms: Vec<Complex<S>> = set
        .points()
        .par_iter()
        .zip(set.weights().par_iter())
        .map(|(b, &w)| -> Result<Complex<S>> {
            if w == S::zero() {
                return Ok(Complex::zero());
            }
            let base = spec.evolve(x, &GroupElement::Continuous(b.clone()))?;
            // per axis: two halves of the bump, clipped to [−d(B), d(B)]
            let axes: Vec<Vec<(S, S)>> = b
                .iter()
                .map(|&bj| {
                    let mut nodes = Vec::new();
                    for (lo, hi) in [(bj - delta, bj), (bj, bj + delta)] {
                        let (lo, hi) = (lo.max(-reach), hi.min(reach));
                        if hi > lo {
                            nodes.extend(rule.mapped(lo, hi).map(|(t, wt)| (t - bj, wt)));
                        }
                    }
                    nodes
                })
                .collect();
            let mut acc = ComplexNeumaier::new();
            for (s, wt) in tensor_product(&axes) {
                let y = spec.evolve(&base, &GroupElement::Continuous(s.clone()))?;
                let t: Vec<S> = s.iter().zip(b).map(|(si, bi)| *si + *bi).collect();
                acc.add(f.evaluate(&y.coords) * e(frac_dot(a, &t)) * (wt * kernel.product_value(&s)));
            }
            Ok(acc.value() * w)
        })
        .collect::<Result<_>>()?;
    let smoothed = pairwise_complex(&smoothed_terms);
    let m = modulus(spec, f, delta)?;
    let error_bound = S::one() + m * S::lit(set.len() as f64) * set.max_weight();
    Ok(SmoothedAudit {
        discrete,
        smoothed,
        error_bound,
        modulus: m,
        constant: (discrete - smoothed).norm() / error_bound,
    })
}

fn tensor_product<S: Real>(axes: &[Vec<(S, S)>]) -> Vec<(Vec<S>, S)> {
    let mut out = vec![(Vec::new(), S::one())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for (t, w) in &out {
            for &(s, ws) in axis {
                let mut t2 = t.clone();
                t2.push(s);
                next.push((t2, *w * ws));
            }
        }
        out = next;
    }
    out
}

/// Settings for the twisted-average inequality audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real", default, rename_all = "camelCase")]
pub struct VpropSettings<S> {
    /// Number of sampled `(h₁, h₂)` pairs.
    pub n_pairs: usize,
    pub seed: u64,
    pub gamma: GammaSettings<S>,
}

impl<S: Real> Default for VpropSettings<S> {
    fn default() -> Self {
        Self {
            n_pairs: 64,
            seed: 1,
            gamma: GammaSettings::default(),
        }
    }
}

/// Left side and the three right-side terms of the inequality
/// `γ ≪ (H/T)||f||_∞ + α_{f,f}(H)^{1/2} + (mean_{h₁,h₂} β_{f∘φ_{h₁}·conj f∘φ_{h₂}, x}(T))^{1/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct Vprop1Record<S> {
    pub lhs: S,
    pub argmax: Vec<S>,
    pub term_boundary: S,
    pub term_alpha: S,
    pub term_beta: S,
    /// Relative standard error of `term_beta`.
    pub beta_rel_err: S,
    /// `lhs / (sum of terms)`; zero when all terms vanish.
    pub constant: S,
}

/// Runs on ℤ^d actions. `α` uses the exact oracle when available and a
/// Monte-Carlo inner product otherwise; the target means of the product
/// observables likewise.
pub fn vprop1_audit<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    x: &StatePoint<S>,
    t: i64,
    h: i64,
    settings: &VpropSettings<S>,
) -> Result<Vprop1Record<S>> {
    if !spec.is_discrete() {
        return Err(Error::WrongTimeDomain("continuous; restrict the flow first"));
    }
    if !(t >= h && h >= 1) {
        return Err(Error::InvalidParameter(format!("need T ≥ H ≥ 1, got T={t}, H={h}")));
    }
    if settings.n_pairs < 2 {
        return Err(Error::InvalidParameter("need at least two (h1, h2) pairs".into()));
    }
    let quad = QuadSettings::default();
    let d = spec.group_dim();
    if f.is_zero() {
        return Ok(Vprop1Record {
            lhs: S::zero(),
            argmax: vec![S::zero(); d],
            term_boundary: S::zero(),
            term_alpha: S::zero(),
            term_beta: S::zero(),
            beta_rel_err: S::zero(),
            constant: S::zero(),
        });
    }
    let tt = S::lit(t as f64);
    let orbit = sample_orbit(spec, f, x, tt, &quad)?;
    let gamma = gamma_sup_orbit(&orbit, &settings.gamma)?;
    let sup_norm = f.l1_coeff_norm();
    let term_boundary = S::lit(h as f64) / tt * sup_norm;
    let mode = if spec.has_exact_oracle() {
        InnerProduct::Exact
    } else {
        InnerProduct::MonteCarlo { samples: 20_000, seed: settings.seed }
    };
    let term_alpha = alpha_rate(spec, f, f, S::lit(h as f64), mode, &quad)?.sqrt();

    // orbit on the enlarged window [−(T+H), T+H]^d
    let r = t + h;
    let side = (2 * r + 1) as usize;
    let big = discrete_orbit(spec, x, r)?;
    let vals: Vec<Complex<S>> = big.par_iter().map(|p| f.evaluate(&p.coords)).collect();
    let index = |n: &[i64]| -> usize { n.iter().fold(0usize, |acc, &v| acc * side + (v + r) as usize) };
    let inner = lattice(t, d);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let pairs: Vec<(Vec<i64>, Vec<i64>)> = (0..settings.n_pairs)
        .map(|_| {
            let mut draw = || (0..d).map(|_| rng.gen_range(-h..=h)).collect::<Vec<i64>>();
            (draw(), draw())
        })
        .collect();
    let mc_points = if spec.has_exact_oracle() { Vec::new() } else { uniform_points(spec, 20_000, settings.seed ^ 0x5eed) };
    let betas: Vec<S> = pairs
        .par_iter()
        .map(|(h1, h2)| -> Result<S> {
            let terms: Vec<Complex<S>> = inner
                .iter()
                .map(|n| {
                    let n1: Vec<i64> = n.iter().zip(h1).map(|(a, b)| a + b).collect();
                    let n2: Vec<i64> = n.iter().zip(h2).map(|(a, b)| a + b).collect();
                    vals[index(&n1)] * vals[index(&n2)].conj()
                })
                .collect();
            let avg = pairwise_complex(&terms) / orbit.norm();
            // ∫ f(φ_{h1} y) conj f(φ_{h2} y) dy = ⟨f∘φ_{h1−h2}, f⟩
            let u: Vec<i64> = h1.iter().zip(h2).map(|(a, b)| a - b).collect();
            let target = if mc_points.is_empty() {
                exact_correlation(spec, f, f, &GroupElement::Discrete(u))?
            } else {
                let g = GroupElement::Discrete(u);
                let terms: Vec<Complex<S>> = mc_points
                    .iter()
                    .map(|y| Ok(f.evaluate(&spec.evolve(y, &g)?.coords) * f.evaluate(&y.coords).conj()))
                    .collect::<Result<_>>()?;
                pairwise_complex(&terms) / S::lit(mc_points.len() as f64)
            };
            Ok((avg - target).norm())
        })
        .collect::<Result<_>>()?;
    let n = S::lit(betas.len() as f64);
    let mean = crate::sum::pairwise(&betas) / n;
    let var = crate::sum::pairwise(&betas.iter().map(|b| (*b - mean) * (*b - mean)).collect::<Vec<_>>()) / (n - S::one());
    let term_beta = mean.sqrt();
    // relative error of a square root is half that of its argument
    let beta_rel_err = if mean > S::zero() {
        (var / n).sqrt() / mean / S::lit(2.0)
    } else {
        S::zero()
    };
    if beta_rel_err > S::lit(0.25) {
        return Err(Error::InsufficientAccuracy(format!(
            "β term relative standard error {beta_rel_err} exceeds 25%; sample more pairs"
        )));
    }
    let sum = term_boundary + term_alpha + term_beta;
    Ok(Vprop1Record {
        lhs: gamma.value,
        argmax: gamma.argmax,
        term_boundary,
        term_alpha,
        term_beta,
        beta_rel_err,
        constant: if sum > S::zero() { gamma.value / sum } else { S::zero() },
    })
}

/// `T^{−2d} ||Σ_n e(<a,n>) f∘φ_n||²_{L²}` (or the integral over
/// `[−T,T]^d` for flows).
pub fn spectral_mass_statistic<S: Real>(
    spec: &SystemSpec<S>,
    f: &FourierObservable<S>,
    a: &[S],
    t: S,
    mode: InnerProduct,
    quad: &QuadSettings<S>,
) -> Result<S> {
    let d = spec.group_dim();
    if a.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: a.len() });
    }
    f.check_dim(spec.phase_dim())?;
    let scale = t.powi(-2 * d as i32);
    match mode {
        InnerProduct::Exact => {
            if !spec.has_exact_oracle() {
                return Err(Error::UnsupportedSpec(spec.name()));
            }
            if let SystemSpec::LinearFlow { alpha, action } = spec {
                // frequencies are fixed; each coefficient picks up a box kernel
                let mut acc = Neumaier::new();
                for (k, c) in f.coeffs() {
                    let freq: Vec<S> = match action {
                        ActionKind::Flow => {
                            vec![a[0] + k.iter().zip(alpha).fold(S::zero(), |s, (&kj, &aj)| s + S::lit(kj as f64) * aj)]
                        }
                        ActionKind::Componentwise => {
                            a.iter().zip(k).zip(alpha).map(|((&ai, &kj), &aj)| ai + S::lit(kj as f64) * aj).collect()
                        }
                    };
                    let b = box_kernel(&freq, t, GroupKind::Continuous)?;
                    acc.add((*c * b).norm_sqr());
                }
                return Ok(acc.value() * scale);
            }
            if !spec.is_discrete() {
                return Err(Error::UnsupportedSpec(spec.name()));
            }
            let r = discrete_window(t)?;
            let red: Vec<S> = a.iter().map(|&v| frac(v)).collect();
            let mut coeffs: HashMap<Vec<BigInt>, ComplexNeumaier<S>> = HashMap::new();
            for n in lattice(r, d) {
                let form = spec.affine_form(&GroupElement::Discrete(n.clone()))?;
                let mut ph = S::zero();
                for (&aj, &nj) in red.iter().zip(&n) {
                    ph = frac(ph + frac_mul_int(aj, nj as i128));
                }
                for (k, c) in f.coeffs() {
                    let (k2, phase) = form.transport(k);
                    coeffs.entry(k2).or_default().add(*c * e(frac(phase + ph)));
                }
            }
            let mut keys: Vec<&Vec<BigInt>> = coeffs.keys().collect();
            keys.sort();
            let mut acc = Neumaier::new();
            for k in keys {
                acc.add(coeffs[k].value().norm_sqr());
            }
            Ok(acc.value() * scale)
        }
        InnerProduct::MonteCarlo { samples, seed } => {
            let pts = uniform_points(spec, samples, seed);
            let vals: Vec<S> = pts
                .par_iter()
                .map(|x| Ok(sample_orbit(spec, f, x, t, quad)?.twisted_sum(a).norm_sqr()))
                .collect::<Result<_>>()?;
            Ok(crate::sum::pairwise(&vals) / S::lit(samples as f64) * scale)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::dirichlet;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn cat() -> SystemSpec<f64> {
        SystemSpec::toral(vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    fn q() -> QuadSettings<f64> {
        QuadSettings::default()
    }

    #[test]
    fn rotation_average_is_dirichlet() {
        let s = SystemSpec::rotation(vec![golden()]);
        let f = FourierObservable::character(vec![1]);
        let x = StatePoint::new(vec![0.1]);
        let t = 50;
        let avg = ergodic_average(&s, &f, &x, t as f64, &q()).unwrap();
        let want = dirichlet(golden(), t) / (2 * t + 1) as f64;
        assert!((avg.norm() - want.abs()).abs() < 1e-12);
        assert!(avg.norm() <= 1.0 / ((2 * t + 1) as f64 * 2.0 * crate::phase::dist_to_z(golden())));
    }

    #[test]
    fn zero_twist_is_bit_identical() {
        let f = FourierObservable::cosine(vec![1, 0], 1.0);
        let x = StatePoint::new(vec![0.3, 0.6]);
        let a = ergodic_average(&cat(), &f, &x, 40.0, &q()).unwrap();
        let b = twisted_average(&cat(), &f, &x, 40.0, &[0.0], &q()).unwrap();
        assert_eq!(a.re.to_bits(), b.re.to_bits());
        assert_eq!(a.im.to_bits(), b.im.to_bits());
    }

    #[test]
    fn linear_flow_resonance() {
        let s = SystemSpec::linear_flow(vec![golden()]);
        let f = FourierObservable::character(vec![2]);
        let x = StatePoint::new(vec![0.2]);
        let v = twisted_average(&s, &f, &x, 10.0, &[-2.0 * golden()], &q()).unwrap();
        assert!((v - e(0.4)).norm() < 1e-10);
    }

    #[test]
    fn gamma_locates_resonance() {
        let s = SystemSpec::rotation(vec![golden()]);
        let f = FourierObservable::character(vec![1]);
        let x = StatePoint::new(vec![0.0]);
        let g = gamma_sup(&s, &f, &x, 200.0, &GammaSettings::default(), &q()).unwrap();
        assert!(g.value > 0.999);
        let target = frac(-golden());
        assert!((g.argmax[0] - target).abs() < g.resolution);
    }

    #[test]
    fn alpha_examples() {
        let f = FourierObservable::character(vec![1, 0]);
        let a = alpha_rate(&cat(), &f, &f, 20.0, InnerProduct::Exact, &q()).unwrap();
        assert!((a - 1.0 / 41.0).abs() < 1e-15);
        let r = SystemSpec::rotation(vec![golden()]);
        let g = FourierObservable::character(vec![3]);
        let b = alpha_rate(&r, &g, &g, 30.0, InnerProduct::Exact, &q()).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        let s = SystemSpec::SuspensionFlow {
            base: Box::new(cat()),
            roof: crate::observables::TrigFunction::constant(1.0),
        };
        assert!(alpha_rate(&s, &f, &f, 2.0, InnerProduct::Exact, &q()).is_err());
    }

    #[test]
    fn alpha_monte_carlo_agrees() {
        let f = FourierObservable::cosine(vec![1, 0], 0.5).sum(&FourierObservable::character(vec![0, 1])).unwrap();
        let exact = alpha_rate(&cat(), &f, &f, 3.0, InnerProduct::Exact, &q()).unwrap();
        let mc = alpha_rate(&cat(), &f, &f, 3.0, InnerProduct::MonteCarlo { samples: 20_000, seed: 9 }, &q()).unwrap();
        assert!((exact - mc).abs() < 0.05, "{exact} {mc}");
    }

    #[test]
    fn sparse_sum_matches_lattice_average() {
        let s = SystemSpec::rotation(vec![golden()]);
        let f = FourierObservable::cosine(vec![1], 1.0);
        let x = StatePoint::new(vec![0.4]);
        let b = WeightedSampleSet::lattice_box(25, 1);
        let u = weighted_sparse_sum(&s, &f, &x, &b).unwrap();
        let v = ergodic_average(&s, &f, &x, 25.0, &q()).unwrap();
        assert!((u - v).norm() < 1e-13);
        let frac_set = crate::expsum::power_sequence(5, &[0.5]).unwrap();
        assert_eq!(weighted_sparse_sum(&s, &f, &x, &frac_set), Err(Error::NonIntegerTime));
    }

    #[test]
    fn sparse_sum_on_flow_is_weyl_sum() {
        let alpha = golden();
        let s = SystemSpec::linear_flow(vec![alpha]);
        let f = FourierObservable::character(vec![1]);
        let x = StatePoint::new(vec![0.15]);
        let b = crate::expsum::power_sequence(200, &[0.3]).unwrap();
        let u = weighted_sparse_sum(&s, &f, &x, &b).unwrap();
        let w = crate::expsum::weyl_sum(&crate::expsum::WeylPhase::Power { xi: alpha, p: 1.3 }, 200).unwrap();
        assert!((u - w * e(0.15)).norm() < 1e-10);
    }

    #[test]
    fn smoothed_single_point_constant() {
        let s = SystemSpec::linear_flow(vec![golden()]);
        let f = FourierObservable::from_terms(1, [(vec![0], Complex::new(2.5, 0.0))]).unwrap();
        let x = StatePoint::new(vec![0.0]);
        // d(B) = 0 clips the window to a point, so widen with a far point
        let b2 = WeightedSampleSet::new(1, vec![vec![0.0], vec![5.0]], vec![1.0, 0.0]).unwrap();
        let r = smoothed_sum_audit(&s, &f, &x, &b2, 0.1, &[0.0]).unwrap();
        assert!((r.smoothed - Complex::new(2.5, 0.0)).norm() < 1e-12);
        let r = smoothed_sum_audit(&s, &f, &x, &b2, 0.1, &[1.3]).unwrap();
        let want = 2.5 * TriangleKernel::new(0.1).unwrap().transform(-1.3);
        assert!((r.smoothed - Complex::new(want, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn vprop1_zero_observable() {
        let f = FourierObservable::zero(2);
        let x = StatePoint::new(vec![0.3, 0.1]);
        let r = vprop1_audit(&cat(), &f, &x, 64, 4, &VpropSettings::default()).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.constant, 0.0);
    }

    #[test]
    fn spectral_statistic_examples() {
        let r = SystemSpec::rotation(vec![golden()]);
        let f = FourierObservable::character(vec![1]);
        let n = 20;
        let v = spectral_mass_statistic(&r, &f, &[-golden()], n as f64, InnerProduct::Exact, &q()).unwrap();
        let want = ((2 * n + 1) as f64 / n as f64).powi(2);
        assert!((v - want).abs() < 1e-10);
        let g = FourierObservable::character(vec![1, 0]);
        let w = spectral_mass_statistic(&cat(), &g, &[0.3], 64.0, InnerProduct::Exact, &q()).unwrap();
        assert!((w - 129.0 / 64.0f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn suspension_orbit_averages() {
        let s = SystemSpec::SuspensionFlow {
            base: Box::new(cat()),
            roof: crate::observables::TrigFunction::new(1.0, FourierObservable::cosine(vec![1, 0], 0.2)).unwrap(),
        };
        let f = FourierObservable::cosine(vec![0, 1], 0.5);
        let x = s.point(vec![0.2, 0.7]);
        let v = ergodic_average(&s, &f, &x, 64.0, &q()).unwrap();
        assert!(v.norm() < 0.5);
    }
}
