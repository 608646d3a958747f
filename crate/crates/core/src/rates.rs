//! Exponent calculus for rate transfer, and log-log fitting of measured
//! rates.
//!
//! The formulas work over any [`Exact`] field, so rational inputs give
//! rational outputs. Golden-section optimization and fitting are floating
//! point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::RateSample;
use crate::scalar::{max_of, min_of, Exact, Real};

/// Symbols entering the rate-transfer formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    rename_all = "camelCase",
    bound(serialize = "Q: Serialize", deserialize = "Q: Exact + Deserialize<'de>")
)]
pub struct ExponentInputs<Q> {
    /// Weak-mixing exponent.
    pub delta1: Q,
    /// Ergodic-average exponent.
    pub delta2: Q,
    pub d: u32,
    /// Norm-growth exponent.
    #[serde(rename = "K")]
    pub k: Q,
    #[serde(default = "one")]
    pub rho: Q,
    #[serde(default = "one")]
    pub rho_prime: Q,
    /// Twisted-average exponent.
    #[serde(default = "one")]
    pub kappa: Q,
    #[serde(default)]
    pub eps: Vec<Q>,
}

fn one<Q: Exact>() -> Q {
    Q::one()
}

impl<Q: Exact> ExponentInputs<Q> {
    /// Inputs with `ρ = ρ' = κ = 1` and no sparse exponents.
    pub fn new(delta1: Q, delta2: Q, d: u32, k: Q) -> Self {
        Self {
            delta1,
            delta2,
            d,
            k,
            rho: Q::one(),
            rho_prime: Q::one(),
            kappa: Q::one(),
            eps: Vec::new(),
        }
    }

    fn dim(&self) -> Q {
        Q::from_u32(self.d).expect("dimension representable")
    }
}

/// Which pair of lines meets at the optimal `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `I = II`: window boundary against the weak-mixing term.
    #[serde(rename = "I=II")]
    Boundary,
    /// `II = III`.
    #[serde(rename = "II=III")]
    Dimension,
    /// `II = IV`: norm growth.
    #[serde(rename = "II=IV")]
    Growth,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::Boundary => "I=II",
            Branch::Dimension => "II=III",
            Branch::Growth => "II=IV",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TwistExponent<Q> {
    pub delta: Q,
    pub kappa_opt: Q,
    pub branch: Branch,
}

fn positive<Q: Exact>(name: &str, v: &Q) -> Result<()> {
    if *v > Q::zero() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v:?}")))
    }
}

/// The four exponent lines of the twisted-average bound at `H = T^κ`:
/// `I = 1 − κ`, `II = κδ₁/2`, `III = 1/2 − κd/2`, `IV = δ₂/2 − κ𝒦d/2`.
pub fn proof_lines<Q: Exact>(inp: &ExponentInputs<Q>, kappa: &Q) -> [Q; 4] {
    let two = Q::from_i64(2).unwrap();
    let d = inp.dim();
    [
        Q::one() - kappa.clone(),
        kappa.clone() * inp.delta1.clone() / two.clone(),
        Q::one() / two.clone() - kappa.clone() * d.clone() / two.clone(),
        inp.delta2.clone() / two.clone() - kappa.clone() * inp.k.clone() * d / two,
    ]
}

/// Twisted-average exponent from weak-mixing and ergodic-average exponents:
/// `δ = min(δ₁/(2+δ₁), δ₁/(2(d+δ₁)), δ₁δ₂/(2(𝒦d+δ₁)))`.
pub fn twist_exponent<Q: Exact>(inp: &ExponentInputs<Q>) -> Result<TwistExponent<Q>> {
    positive("delta1", &inp.delta1)?;
    positive("delta2", &inp.delta2)?;
    if inp.d == 0 {
        return Err(Error::InvalidParameter("d must be at least 1".into()));
    }
    if inp.k < Q::zero() {
        return Err(Error::InvalidParameter("K must be nonnegative".into()));
    }
    let two = Q::from_i64(2).unwrap();
    let d1 = inp.delta1.clone();
    let d = inp.dim();
    let k1 = two.clone() / (two.clone() + d1.clone());
    let k3 = Q::one() / (d.clone() + d1.clone());
    let k4 = inp.delta2.clone() / (inp.k.clone() * d + d1.clone());
    // II is increasing in κ, so the smallest crossing gives the smallest δ
    let mut best = (k1, Branch::Boundary);
    for cand in [(k3, Branch::Dimension), (k4, Branch::Growth)] {
        if cand.0 < best.0 {
            best = cand;
        }
    }
    let delta = best.0.clone() * d1 / two;
    Ok(TwistExponent {
        delta,
        kappa_opt: best.0,
        branch: best.1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DerivedExponents<Q> {
    /// Time-one restriction: `ρρ'κ/(2d+ρρ')`.
    pub time1: Q,
    /// Random weights: `κ/(8d)`.
    pub random_weights: Q,
}

pub fn derived_exponents<Q: Exact>(inp: &ExponentInputs<Q>) -> Result<DerivedExponents<Q>> {
    positive("kappa", &inp.kappa)?;
    if inp.d == 0 {
        return Err(Error::InvalidParameter("d must be at least 1".into()));
    }
    let d = inp.dim();
    let rr = inp.rho.clone() * inp.rho_prime.clone();
    let two = Q::from_i64(2).unwrap();
    let eight = Q::from_i64(8).unwrap();
    Ok(DerivedExponents {
        time1: rr.clone() * inp.kappa.clone() / (two * d.clone() + rr),
        random_weights: inp.kappa.clone() / (eight * d),
    })
}

/// Admissible range of the progression exponent `a` for one sparse axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SparseWindow<Q> {
    pub feasible: bool,
    /// Conditions that fail, by their inequality.
    pub violated: Vec<String>,
    /// `min(1, κ/(d − (1+ε)(1−κ)))`, as stated.
    pub a_lo: Q,
    /// `2/(1+ε)`.
    pub a_hi: Q,
    /// `max(1, κ/(d − (1+ε)(1−κ)))`: below this the third exponent
    /// exceeds `d` and the resulting rate is negative.
    pub a_lo_effective: Q,
}

impl<Q: Exact> SparseWindow<Q> {
    pub fn contains(&self, a: &Q) -> bool {
        self.feasible && *a > self.a_lo && *a < self.a_hi
    }
}

pub fn sparse_window<Q: Exact>(eps: &Q, kappa: &Q, d: u32) -> Result<SparseWindow<Q>> {
    if !(*kappa > Q::zero() && *kappa < Q::one()) {
        return Err(Error::InvalidParameter(format!("kappa must lie in (0,1), got {kappa:?}")));
    }
    positive("eps", eps)?;
    let two = Q::from_i64(2).unwrap();
    let dq = Q::from_u32(d).unwrap();
    let one = Q::one();
    let mut violated = Vec::new();
    let lhs = two.clone() * eps.clone() - kappa.clone() * eps.clone();
    if !(lhs < two.clone() * dq.clone() - two.clone() + kappa.clone()) {
        violated.push("2eps-kappa*eps<2d-2+kappa".to_string());
    }
    let growth = (one.clone() + eps.clone()) * (one.clone() - kappa.clone());
    if !(growth < dq) {
        violated.push("(1+eps)(1-kappa)<d".to_string());
    }
    if !(*eps < one) {
        violated.push("eps<1".to_string());
    }
    let a_hi = two / (one.clone() + eps.clone());
    let gap = dq - growth;
    let (a_lo, a_lo_effective) = if gap > Q::zero() {
        let r = kappa.clone() / gap;
        (min_of(&one, &r), max_of(&one, &r))
    } else {
        (one.clone(), a_hi.clone())
    };
    let feasible = violated.is_empty() && a_lo < a_hi;
    Ok(SparseWindow {
        feasible,
        violated,
        a_lo,
        a_hi,
        a_lo_effective,
    })
}

/// The three exponents of the sparse bound at progression exponents `a`.
pub fn sparse_terms<Q: Exact>(inp: &ExponentInputs<Q>, a: &[Q]) -> Result<[Q; 3]> {
    if a.len() != inp.eps.len() || a.is_empty() {
        return Err(Error::DimensionMismatch { expected: inp.eps.len(), got: a.len() });
    }
    let one = Q::one();
    let two = Q::from_i64(2).unwrap();
    let d = inp.dim();
    let rr = inp.rho.clone() * inp.rho_prime.clone();
    let mut m1: Option<Q> = None;
    let mut m2: Option<Q> = None;
    let mut m3: Option<Q> = None;
    let upd = |m: &mut Option<Q>, v: Q| {
        *m = Some(match m.take() {
            Some(old) => max_of(&old, &v),
            None => v,
        })
    };
    for (e, ai) in inp.eps.iter().zip(a) {
        upd(&mut m1, e.clone() - two.clone() / ai.clone());
        upd(&mut m2, one.clone() / ai.clone());
        upd(
            &mut m3,
            (one.clone() + e.clone()) * (one.clone() - inp.kappa.clone()) + inp.kappa.clone() / ai.clone(),
        );
    }
    let denom = d.clone() + rr;
    Ok([
        d.clone() + one + m1.unwrap(),
        d.clone() * m2.unwrap(),
        d.clone() - d / denom.clone() + m3.unwrap() / denom,
    ])
}

/// Progression exponents: given, or chosen to maximize the rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AChoice<Q> {
    Given(Vec<Q>),
    Optimize,
}

/// Derived sparse rate `κ' = d − max(three exponents)`.
pub fn sparse_exponent<Q: Exact>(inp: &ExponentInputs<Q>, a: &AChoice<Q>) -> Result<Q> {
    let windows = inp
        .eps
        .iter()
        .map(|e| sparse_window(e, &inp.kappa, inp.d))
        .collect::<Result<Vec<_>>>()?;
    if windows.is_empty() {
        return Err(Error::InvalidParameter("eps is empty".into()));
    }
    if let Some((i, w)) = windows.iter().enumerate().find(|(_, w)| !w.feasible) {
        return Err(Error::InvalidParameter(format!(
            "axis {i} infeasible: {}",
            if w.violated.is_empty() { "empty window".to_string() } else { w.violated.join(", ") }
        )));
    }
    let a = match a {
        AChoice::Given(a) => {
            if a.len() != windows.len() {
                return Err(Error::DimensionMismatch { expected: windows.len(), got: a.len() });
            }
            for (i, (ai, w)) in a.iter().zip(&windows).enumerate() {
                if !w.contains(ai) {
                    return Err(Error::InvalidParameter(format!(
                        "a[{i}] = {ai:?} outside ({:?}, {:?})",
                        w.a_lo, w.a_hi
                    )));
                }
            }
            a.clone()
        }
        AChoice::Optimize => optimize_a(inp, &windows)?,
    };
    let t = sparse_terms(inp, &a)?;
    let worst = max_of(&max_of(&t[0], &t[1]), &t[2]);
    Ok(inp.dim() - worst)
}

/// Per-axis golden-section search. Each term is monotone in each `a_i`, so
/// the rate is quasi-concave along every axis.
fn optimize_a<Q: Exact>(inp: &ExponentInputs<Q>, windows: &[SparseWindow<Q>]) -> Result<Vec<Q>> {
    let eval = |a: &[f64]| -> f64 {
        let aq: Vec<Q> = a.iter().map(|&v| Q::from_f64(v).expect("representable")).collect();
        match sparse_terms(inp, &aq) {
            Ok(t) => inp.d as f64 - t.iter().map(|v| v.approx()).fold(f64::NEG_INFINITY, f64::max),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let bounds: Vec<(f64, f64)> = windows.iter().map(|w| (w.a_lo.approx(), w.a_hi.approx())).collect();
    let mut a: Vec<f64> = bounds.iter().map(|(l, h)| 0.5 * (l + h)).collect();
    let ratio = 0.618_033_988_749_894_9;
    let passes = if a.len() == 1 { 1 } else { 8 };
    for _ in 0..passes {
        for j in 0..a.len() {
            let (mut lo, mut hi) = bounds[j];
            let f_at = |v: f64, a: &mut Vec<f64>| {
                a[j] = v;
                eval(a)
            };
            let mut c = hi - ratio * (hi - lo);
            let mut dd = lo + ratio * (hi - lo);
            let mut fc = f_at(c, &mut a);
            let mut fd = f_at(dd, &mut a);
            while hi - lo > 1e-13 * (1.0 + hi.abs()) {
                if fc >= fd {
                    hi = dd;
                    dd = c;
                    fd = fc;
                    c = hi - ratio * (hi - lo);
                    fc = f_at(c, &mut a);
                } else {
                    lo = c;
                    c = dd;
                    fc = fd;
                    dd = lo + ratio * (hi - lo);
                    fd = f_at(dd, &mut a);
                }
            }
            a[j] = 0.5 * (lo + hi);
        }
    }
    Ok(a.iter().map(|&v| Q::from_f64(v).expect("representable")).collect())
}

/// Ordinary least squares of `log value` on `log T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "S: Real")]
pub struct RateFit<S> {
    /// Empirical `−δ`.
    pub slope: S,
    pub intercept: S,
    pub r_squared: S,
    pub t_min: S,
    pub t_max: S,
    pub point_count: usize,
    /// Samples with nonpositive value or time, left out of the fit.
    pub dropped: usize,
}

pub fn fit_power_law<S: Real>(samples: &[RateSample<S>]) -> Result<RateFit<S>> {
    let pts: Vec<(S, S, S)> = samples
        .iter()
        .filter(|s| s.value > S::zero() && s.t > S::zero() && s.value.is_finite() && s.t.is_finite())
        .map(|s| (s.t, s.t.ln(), s.value.ln()))
        .collect();
    let dropped = samples.len() - pts.len();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs 3 positive samples, got {} ({dropped} dropped)",
            pts.len()
        )));
    }
    let n = S::lit(pts.len() as f64);
    let mx = pts.iter().fold(S::zero(), |a, p| a + p.1) / n;
    let my = pts.iter().fold(S::zero(), |a, p| a + p.2) / n;
    let sxx = pts.iter().fold(S::zero(), |a, p| a + (p.1 - mx) * (p.1 - mx));
    let sxy = pts.iter().fold(S::zero(), |a, p| a + (p.1 - mx) * (p.2 - my));
    let syy = pts.iter().fold(S::zero(), |a, p| a + (p.2 - my) * (p.2 - my));
    if sxx == S::zero() {
        return Err(Error::InsufficientData("all samples share one T".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = pts.iter().fold(S::zero(), |a, p| {
        let r = p.2 - (intercept + slope * p.1);
        a + r * r
    });
    let r_squared = if syy > S::zero() {
        (S::one() - ss_res / syy).max(S::zero()).min(S::one())
    } else {
        S::one()
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        t_min: pts.iter().map(|p| p.0).fold(S::infinity(), S::min),
        t_max: pts.iter().map(|p| p.0).fold(S::neg_infinity(), S::max),
        point_count: pts.len(),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64 as R;

    fn r(n: i64, d: i64) -> R {
        R::new(n, d)
    }

    #[test]
    fn twist_examples_exact() {
        let t = twist_exponent(&ExponentInputs::new(r(1, 1), r(1, 1), 1, r(1, 1))).unwrap();
        assert_eq!(t.delta, r(1, 4));
        assert_eq!(t.kappa_opt, r(1, 2));
        assert_eq!(t.branch, Branch::Dimension);
        let t = twist_exponent(&ExponentInputs::new(r(2, 1), r(2, 1), 1, r(1, 1))).unwrap();
        assert_eq!(t.delta, r(1, 3));
        let lines = proof_lines(&ExponentInputs::new(r(2, 1), r(2, 1), 1, r(1, 1)), &t.kappa_opt);
        assert_eq!(lines.iter().min().unwrap(), &t.delta);
        let t = twist_exponent(&ExponentInputs::new(1e-9, 1.0, 1, 1.0)).unwrap();
        assert!(t.delta > 0.0 && t.delta < 1e-9);
    }

    #[test]
    fn derived_examples() {
        let mut inp = ExponentInputs::new(r(1, 1), r(1, 1), 1, r(1, 1));
        let d = derived_exponents(&inp).unwrap();
        assert_eq!(d.time1, r(1, 3));
        assert_eq!(d.random_weights, r(1, 8));
        inp.rho_prime = r(1, 1_000_000);
        assert!(derived_exponents(&inp).unwrap().time1 < r(1, 1_000_000));
    }

    #[test]
    fn window_examples() {
        let w = sparse_window(&r(1, 10), &r(1, 4), 1).unwrap();
        assert!(w.feasible);
        assert_eq!(w.a_lo, r(1, 1));
        assert_eq!(w.a_hi, r(20, 11));
        assert_eq!(w.a_lo_effective, r(10, 7));
        let w = sparse_window(&r(1, 1), &r(1, 4), 1).unwrap();
        assert!(!w.feasible);
        assert!(w.violated.iter().any(|v| v == "eps<1"));
        let w = sparse_window(&r(9, 10), &r(1, 100), 1).unwrap();
        assert!(w.violated.iter().any(|v| v == "(1+eps)(1-kappa)<d"));
        assert!(sparse_window(&r(1, 10), &r(1, 1), 1).is_err());
    }

    #[test]
    fn sparse_terms_symbolic() {
        let mut inp = ExponentInputs::new(r(1, 1), r(1, 1), 1, r(1, 1));
        inp.kappa = r(1, 4);
        inp.eps = vec![r(1, 10)];
        let t = sparse_terms(&inp, &[r(7, 5)]).unwrap();
        // 2 + 1/10 − 10/7, 5/7, 1/2 + (33/40 + 5/28)/2
        assert_eq!(t[0], r(47, 70));
        assert_eq!(t[1], r(5, 7));
        assert_eq!(t[2], r(1, 2) + (r(33, 40) + r(5, 28)) / r(2, 1));
        let k = sparse_exponent(&inp, &AChoice::Given(vec![r(7, 5)])).unwrap();
        assert_eq!(k, r(1, 1) - t[2]);
        assert!(sparse_exponent(&inp, &AChoice::Given(vec![r(2, 1)])).is_err());
    }

    #[test]
    fn optimize_beats_grid() {
        let mut inp = ExponentInputs::new(1.0, 1.0, 1, 1.0);
        inp.kappa = 0.25;
        inp.eps = vec![0.1];
        let best = sparse_exponent(&inp, &AChoice::Optimize).unwrap();
        let w = sparse_window(&0.1, &0.25, 1).unwrap();
        let mut grid_best = f64::NEG_INFINITY;
        for i in 1..1000 {
            let a = w.a_lo + (w.a_hi - w.a_lo) * i as f64 / 1000.0;
            let v = sparse_exponent(&inp, &AChoice::Given(vec![a])).unwrap();
            assert!(best >= v - 1e-12);
            grid_best = grid_best.max(v);
        }
        assert!(best - grid_best < 2e-3);
        assert!(best > 0.0);
    }

    #[test]
    fn fit_synthetic() {
        let s: Vec<RateSample<f64>> = (1..=50)
            .map(|i| {
                let t = 2f64.powf(i as f64 / 4.0);
                RateSample::new(t, 3.0 * t.powf(-0.5))
            })
            .collect();
        let f = fit_power_law(&s).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let mut z = s.clone();
        z[0].value = 0.0;
        z[1].value = -1.0;
        assert_eq!(fit_power_law(&z).unwrap().dropped, 2);
        assert!(fit_power_law(&s[..2]).is_err());
        let c: Vec<RateSample<f64>> = (1..10).map(|i| RateSample::new(i as f64, 2.0)).collect();
        assert!(fit_power_law(&c).unwrap().slope.abs() < 1e-14);
    }
}
