//! Group actions on tori and suspensions.
//!
//! Every system acts on points of `[0,1)^n`, optionally carrying a height
//! above a suspension section. Discrete systems are ℤ^d actions; linear
//! flows, suspension flows and time changes are ℝ^d actions. Coordinates are
//! reduced mod 1 after every step.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::TrigFunction;
use crate::phase::{frac, frac_dot_int, frac_mul_int, frac_prod};
use crate::quad::GaussLegendre;
use crate::scalar::Real;
use crate::sum::Neumaier;

/// A point of the phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct StatePoint<S> {
    pub coords: Vec<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<S>,
}

impl<S: Real> StatePoint<S> {
    /// Torus point with coordinates reduced mod 1.
    pub fn new(coords: Vec<S>) -> Self {
        Self {
            coords: coords.into_iter().map(frac).collect(),
            height: None,
        }
    }

    pub fn with_height(coords: Vec<S>, height: S) -> Self {
        Self {
            height: Some(height),
            ..Self::new(coords)
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Sup-distance on the torus, plus the height difference when present.
    pub fn distance(&self, other: &Self) -> S {
        let mut d = S::zero();
        for (&a, &b) in self.coords.iter().zip(&other.coords) {
            d = d.max(crate::phase::dist_to_z(a - b));
        }
        if let (Some(h1), Some(h2)) = (self.height, other.height) {
            d = d.max((h1 - h2).abs());
        }
        d
    }
}

/// An element of ℤ^d or ℝ^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real", untagged)]
pub enum GroupElement<S> {
    Discrete(Vec<i64>),
    Continuous(Vec<S>),
}

impl<S: Real> GroupElement<S> {
    pub fn int(n: i64) -> Self {
        Self::Discrete(vec![n])
    }

    pub fn real(t: S) -> Self {
        Self::Continuous(vec![t])
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Discrete(v) => v.len(),
            Self::Continuous(v) => v.len(),
        }
    }

    /// Integer components; errors on non-integer continuous entries.
    pub fn as_integers(&self) -> Result<Vec<i64>> {
        match self {
            Self::Discrete(v) => Ok(v.clone()),
            Self::Continuous(v) => v
                .iter()
                .map(|&t| {
                    if t.fract() == S::zero() {
                        t.to_i64().ok_or(Error::NonIntegerTime)
                    } else {
                        Err(Error::NonIntegerTime)
                    }
                })
                .collect(),
        }
    }

    pub fn as_reals(&self) -> Vec<S> {
        match self {
            Self::Discrete(v) => v.iter().map(|&n| S::from_i64_exact(n)).collect(),
            Self::Continuous(v) => v.clone(),
        }
    }
}

/// How a vector `α` acts: along one direction (`x + tα`, one time
/// parameter) or coordinatewise (`x_i + t_i α_i`, one parameter per axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Flow,
    Componentwise,
}

impl ActionKind {
    fn componentwise() -> Self {
        Self::Componentwise
    }

    fn flow() -> Self {
        Self::Flow
    }
}

/// Numerical settings for time changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct TimeChangeSettings<S> {
    /// Panel width of the composite quadrature.
    pub step: S,
    /// Tolerance on the integral residual.
    pub tol: S,
    pub max_iter: usize,
}

impl<S: Real> Default for TimeChangeSettings<S> {
    fn default() -> Self {
        Self {
            step: S::lit(1e-3),
            tol: S::lit(1e-10),
            max_iter: 200,
        }
    }
}

/// Integer matrix with `|det| = 1` and its integer inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ToralRaw", into = "ToralRaw")]
pub struct ToralMatrix {
    m: Vec<Vec<i64>>,
    inv: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToralRaw {
    #[serde(rename = "M")]
    pub m: Vec<Vec<i64>>,
}

impl TryFrom<ToralRaw> for ToralMatrix {
    type Error = Error;
    fn try_from(raw: ToralRaw) -> Result<Self> {
        Self::new(raw.m)
    }
}

impl From<ToralMatrix> for ToralRaw {
    fn from(t: ToralMatrix) -> Self {
        Self { m: t.m }
    }
}

impl ToralMatrix {
    /// Validates unimodularity and hyperbolicity.
    pub fn new(m: Vec<Vec<i64>>) -> Result<Self> {
        let n = m.len();
        if n == 0 || m.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidSystem("toral automorphism needs a square matrix".into()));
        }
        let det = int_det(&m);
        if det.abs() != 1 {
            return Err(Error::InvalidSystem(format!("|det M| must be 1, got {det}")));
        }
        let mf = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j] as f64);
        for ev in mf.complex_eigenvalues().iter() {
            if (ev.norm() - 1.0).abs() < 1e-9 {
                return Err(Error::InvalidSystem(format!(
                    "eigenvalue {ev} lies on the unit circle"
                )));
            }
        }
        let inv_f = mf
            .try_inverse()
            .ok_or_else(|| Error::InvalidSystem("matrix is singular".into()))?;
        let inv: Vec<Vec<i64>> = (0..n)
            .map(|i| (0..n).map(|j| inv_f[(i, j)].round() as i64).collect())
            .collect();
        for i in 0..n {
            for j in 0..n {
                let s: i128 = (0..n).map(|k| m[i][k] as i128 * inv[k][j] as i128).sum();
                if s != (i == j) as i128 {
                    return Err(Error::InvalidSystem("integer inverse could not be formed".into()));
                }
            }
        }
        Ok(Self { m, inv })
    }

    pub fn matrix(&self) -> &[Vec<i64>] {
        &self.m
    }

    pub fn inverse(&self) -> &[Vec<i64>] {
        &self.inv
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// `M^n` over the integers (negative `n` uses the inverse).
    pub fn power(&self, n: i64) -> Vec<Vec<BigInt>> {
        let base = if n >= 0 { &self.m } else { &self.inv };
        let mut b: Vec<Vec<BigInt>> = base
            .iter()
            .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
            .collect();
        let mut acc = identity(self.dim());
        let mut e = n.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                acc = big_matmul(&acc, &b);
            }
            e >>= 1;
            if e > 0 {
                b = big_matmul(&b, &b);
            }
        }
        acc
    }
}

fn int_det(m: &[Vec<i64>]) -> i128 {
    // fraction-free Bareiss elimination
    let n = m.len();
    let mut a: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n.saturating_sub(1) {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&r| a[r][k] != 0) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

fn identity(n: usize) -> Vec<Vec<BigInt>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect()
}

fn big_matmul(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let n = a.len();
    let m = b[0].len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut s = BigInt::zero();
                    for (k, bk) in b.iter().enumerate() {
                        s += &a[i][k] * &bk[j];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// `φ_g(x) = A x + c (mod 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm<S> {
    pub linear: Vec<Vec<BigInt>>,
    pub shift: Vec<S>,
}

impl<S: Real> AffineForm<S> {
    fn translation(shift: Vec<S>) -> Self {
        Self {
            linear: identity(shift.len()),
            shift,
        }
    }

    /// For a character `e_k`, returns `(Aᵀk, <k, c> mod 1)` so that
    /// `e_k ∘ φ_g = e(<k,c>) e_{Aᵀk}`.
    pub fn transport(&self, k: &[i64]) -> (Vec<BigInt>, S) {
        let n = k.len();
        let kt = (0..n)
            .map(|j| {
                let mut s = BigInt::zero();
                for (i, &ki) in k.iter().enumerate() {
                    if ki != 0 {
                        s += &self.linear[i][j] * ki;
                    }
                }
                s
            })
            .collect();
        (kt, frac_dot_int(k, &self.shift))
    }

    fn block_diag(parts: Vec<Self>) -> Self {
        let n: usize = parts.iter().map(|p| p.shift.len()).sum();
        let mut linear = vec![vec![BigInt::zero(); n]; n];
        let mut shift = Vec::with_capacity(n);
        let mut off = 0;
        for p in parts {
            let m = p.shift.len();
            for i in 0..m {
                for j in 0..m {
                    linear[off + i][off + j] = p.linear[i][j].clone();
                }
            }
            shift.extend(p.shift);
            off += m;
        }
        Self { linear, shift }
    }
}

/// Declarative description of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real", tag = "type", content = "params")]
pub enum SystemSpec<S: Real> {
    /// ℤ action `x ↦ x + nα` (flow) or ℤ^d action `x_i + n_i α_i`.
    Rotation {
        alpha: Vec<S>,
        #[serde(default = "ActionKind::componentwise")]
        action: ActionKind,
    },
    /// ℝ action `x ↦ x + tα` (flow) or ℝ^d action `x_i + t_i α_i`.
    LinearFlow {
        alpha: Vec<S>,
        #[serde(default = "ActionKind::flow")]
        action: ActionKind,
    },
    /// `(x, y) ↦ (x + η₁, x + y + η₂)`.
    SkewShift { eta1: S, eta2: S },
    /// Return map of a Heisenberg nilflow to the section torus.
    HeisenbergReturnMap { w_a: S, w_b: S, w_c: S },
    ToralAutomorphism(ToralMatrix),
    ProductSystem { factors: Vec<SystemSpec<S>> },
    /// Flow under the function `roof` over a ℤ action.
    SuspensionFlow {
        base: Box<SystemSpec<S>>,
        roof: TrigFunction<S>,
    },
    /// Reparametrization of a one-parameter flow with speed `1/τ`.
    TimeChange {
        base: Box<SystemSpec<S>>,
        tau: TrigFunction<S>,
        #[serde(default)]
        settings: TimeChangeSettings<S>,
    },
    /// Integer-time restriction of a flow without a closed form.
    Restricted { flow: Box<SystemSpec<S>> },
}

impl<S: Real> SystemSpec<S> {
    pub fn rotation(alpha: Vec<S>) -> Self {
        Self::Rotation {
            alpha,
            action: ActionKind::Componentwise,
        }
    }

    pub fn linear_flow(alpha: Vec<S>) -> Self {
        Self::LinearFlow {
            alpha,
            action: ActionKind::Flow,
        }
    }

    pub fn toral(m: Vec<Vec<i64>>) -> Result<Self> {
        Ok(Self::ToralAutomorphism(ToralMatrix::new(m)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rotation { .. } => "Rotation",
            Self::LinearFlow { .. } => "LinearFlow",
            Self::SkewShift { .. } => "SkewShift",
            Self::HeisenbergReturnMap { .. } => "HeisenbergReturnMap",
            Self::ToralAutomorphism(_) => "ToralAutomorphism",
            Self::ProductSystem { .. } => "ProductSystem",
            Self::SuspensionFlow { .. } => "SuspensionFlow",
            Self::TimeChange { .. } => "TimeChange",
            Self::Restricted { .. } => "Restricted",
        }
    }

    /// Dimension of the acting group.
    pub fn group_dim(&self) -> usize {
        match self {
            Self::Rotation { alpha, action } | Self::LinearFlow { alpha, action } => match action {
                ActionKind::Flow => 1,
                ActionKind::Componentwise => alpha.len(),
            },
            Self::ProductSystem { factors } => factors.iter().map(|f| f.group_dim()).sum(),
            Self::Restricted { flow } => flow.group_dim(),
            _ => 1,
        }
    }

    /// Number of torus coordinates.
    pub fn phase_dim(&self) -> usize {
        match self {
            Self::Rotation { alpha, .. } | Self::LinearFlow { alpha, .. } => alpha.len(),
            Self::SkewShift { .. } | Self::HeisenbergReturnMap { .. } => 2,
            Self::ToralAutomorphism(m) => m.dim(),
            Self::ProductSystem { factors } => factors.iter().map(|f| f.phase_dim()).sum(),
            Self::SuspensionFlow { base, .. } | Self::TimeChange { base, .. } => base.phase_dim(),
            Self::Restricted { flow } => flow.phase_dim(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(
            self,
            Self::LinearFlow { .. } | Self::SuspensionFlow { .. } | Self::TimeChange { .. }
        )
    }

    /// Whether states carry a suspension height.
    pub fn has_height(&self) -> bool {
        match self {
            Self::SuspensionFlow { .. } => true,
            Self::TimeChange { base, .. } => base.has_height(),
            Self::Restricted { flow } => flow.has_height(),
            _ => false,
        }
    }

    /// Checks parameter consistency; configs call this before any work.
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[S]| v.iter().all(|x| x.is_finite());
        match self {
            Self::Rotation { alpha, .. } | Self::LinearFlow { alpha, .. } => {
                if alpha.is_empty() || !finite(alpha) {
                    return Err(Error::InvalidSystem("alpha must be a non-empty finite vector".into()));
                }
            }
            Self::SkewShift { eta1, eta2 } => {
                if !finite(&[*eta1, *eta2]) {
                    return Err(Error::InvalidSystem("skew shift parameters must be finite".into()));
                }
            }
            Self::HeisenbergReturnMap { w_a, w_b, w_c } => {
                if !finite(&[*w_a, *w_b, *w_c]) || *w_b == S::zero() {
                    return Err(Error::InvalidSystem("need finite w with w_b ≠ 0".into()));
                }
            }
            Self::ToralAutomorphism(_) => {}
            Self::ProductSystem { factors } => {
                if factors.is_empty() {
                    return Err(Error::InvalidSystem("product needs at least one factor".into()));
                }
                for f in factors {
                    f.validate()?;
                    if !f.is_discrete() || f.has_height() {
                        return Err(Error::InvalidSystem("product factors must be discrete torus systems".into()));
                    }
                }
            }
            Self::SuspensionFlow { base, roof } => {
                base.validate()?;
                if !base.is_discrete() || base.group_dim() != 1 || base.has_height() {
                    return Err(Error::InvalidSystem("suspension base must be a ℤ action on a torus".into()));
                }
                check_positive(roof, base.phase_dim(), "roof")?;
            }
            Self::TimeChange { base, tau, settings } => {
                base.validate()?;
                let ok = match base.as_ref() {
                    Self::LinearFlow { .. } => base.group_dim() == 1,
                    Self::SuspensionFlow { .. } => true,
                    _ => false,
                };
                if !ok {
                    return Err(Error::InvalidSystem(
                        "time change base must be a one-parameter linear or suspension flow".into(),
                    ));
                }
                check_positive(tau, base.phase_dim(), "tau")?;
                if !(settings.step > S::zero()) || !(settings.tol > S::zero()) || settings.max_iter == 0 {
                    return Err(Error::InvalidSystem("time change settings must be positive".into()));
                }
            }
            Self::Restricted { flow } => {
                flow.validate()?;
                if flow.is_discrete() {
                    return Err(Error::InvalidSystem("restricted system wraps a flow".into()));
                }
            }
        }
        Ok(())
    }

    fn check_point(&self, x: &StatePoint<S>) -> Result<()> {
        if x.dim() != self.phase_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.phase_dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }

    fn check_group(&self, g: &GroupElement<S>) -> Result<()> {
        if g.dim() != self.group_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.group_dim(),
                got: g.dim(),
            });
        }
        Ok(())
    }

    /// A state with the right shape for this system (height 0 when needed).
    pub fn point(&self, coords: Vec<S>) -> StatePoint<S> {
        let mut p = StatePoint::new(coords);
        if self.has_height() {
            p.height = Some(S::zero());
        }
        p
    }

    /// `φ_g(x)`.
    pub fn evolve(&self, x: &StatePoint<S>, g: &GroupElement<S>) -> Result<StatePoint<S>> {
        self.check_point(x)?;
        self.check_group(g)?;
        match self {
            Self::Rotation { alpha, action } => {
                let n = g.as_integers()?;
                let coords = match action {
                    ActionKind::Flow => alpha
                        .iter()
                        .zip(&x.coords)
                        .map(|(&a, &xi)| frac(xi + frac_mul_int(a, n[0] as i128)))
                        .collect(),
                    ActionKind::Componentwise => alpha
                        .iter()
                        .zip(&x.coords)
                        .zip(&n)
                        .map(|((&a, &xi), &ni)| frac(xi + frac_mul_int(a, ni as i128)))
                        .collect(),
                };
                Ok(StatePoint { coords, height: None })
            }
            Self::LinearFlow { alpha, action } => {
                let t = g.as_reals();
                let coords = match action {
                    ActionKind::Flow => alpha
                        .iter()
                        .zip(&x.coords)
                        .map(|(&a, &xi)| frac(xi + frac_prod(a, t[0])))
                        .collect(),
                    ActionKind::Componentwise => alpha
                        .iter()
                        .zip(&x.coords)
                        .zip(&t)
                        .map(|((&a, &xi), &ti)| frac(xi + frac_prod(a, ti)))
                        .collect(),
                };
                Ok(StatePoint { coords, height: None })
            }
            Self::SkewShift { eta1, eta2 } => {
                let n = g.as_integers()?[0];
                Ok(skew_shift_closed_form(*eta1, *eta2, x, n))
            }
            Self::HeisenbergReturnMap { w_a, w_b, w_c } => {
                let n = g.as_integers()?[0];
                let (e1, e2) = heisenberg_eta(*w_a, *w_b, *w_c);
                Ok(skew_shift_closed_form(e1, e2, x, n))
            }
            Self::ToralAutomorphism(m) => {
                let n = g.as_integers()?[0];
                let mat = if n >= 0 { m.matrix() } else { m.inverse() };
                let mut y = x.coords.clone();
                for _ in 0..n.unsigned_abs() {
                    y = int_matvec_mod1(mat, &y);
                }
                Ok(StatePoint { coords: y, height: None })
            }
            Self::ProductSystem { factors } => {
                let n = g.as_integers()?;
                let mut coords = Vec::with_capacity(x.dim());
                let (mut off_x, mut off_g) = (0, 0);
                for f in factors {
                    let (px, pg) = (f.phase_dim(), f.group_dim());
                    let sub = StatePoint {
                        coords: x.coords[off_x..off_x + px].to_vec(),
                        height: None,
                    };
                    let gi = GroupElement::Discrete(n[off_g..off_g + pg].to_vec());
                    coords.extend(f.evolve(&sub, &gi)?.coords);
                    off_x += px;
                    off_g += pg;
                }
                Ok(StatePoint { coords, height: None })
            }
            Self::SuspensionFlow { base, roof } => {
                let t = g.as_reals()[0];
                suspension_evolve(base, roof, x, t)
            }
            Self::TimeChange { base, .. } => {
                let t = g.as_reals()[0];
                let s = self.time_change_sigma(x, t)?;
                base.evolve(x, &GroupElement::real(s))
            }
            Self::Restricted { flow } => {
                let n = g.as_integers()?;
                let t = n.iter().map(|&v| S::from_i64_exact(v)).collect();
                flow.evolve(x, &GroupElement::Continuous(t))
            }
        }
    }

    /// `φ_{±e_axis}(x)`, the unit step used to walk orbits.
    pub fn step(&self, x: &StatePoint<S>, axis: usize, forward: bool) -> Result<StatePoint<S>> {
        let mut v = vec![0i64; self.group_dim()];
        v[axis] = if forward { 1 } else { -1 };
        if self.is_discrete() {
            self.evolve(x, &GroupElement::Discrete(v))
        } else {
            self.evolve(x, &GroupElement::Continuous(v.iter().map(|&n| S::from_i64_exact(n)).collect()))
        }
    }

    /// The integer-time restriction of a flow.
    pub fn restrict(&self) -> Result<Self> {
        match self {
            Self::LinearFlow { alpha, action } => Ok(Self::Rotation {
                alpha: alpha.clone(),
                action: *action,
            }),
            Self::TimeChange { base, tau, .. }
                if tau.is_constant() && tau.constant_term() == S::one() =>
            {
                base.restrict()
            }
            Self::SuspensionFlow { .. } | Self::TimeChange { .. } => Ok(Self::Restricted {
                flow: Box::new(self.clone()),
            }),
            _ => Err(Error::WrongTimeDomain("already discrete")),
        }
    }

    /// `σ(t, x)` solving `t = ∫_0^σ τ(φ_s x) ds` for a time change.
    pub fn time_change_sigma(&self, x: &StatePoint<S>, t: S) -> Result<S> {
        let Self::TimeChange { base, tau, settings } = self else {
            return Err(Error::InvalidSystem("sigma is defined for time changes only".into()));
        };
        self.check_point(x)?;
        if t == S::zero() {
            return Ok(S::zero());
        }
        if !t.is_finite() {
            return Err(Error::InvalidParameter("time must be finite".into()));
        }
        if tau.is_constant() {
            return Ok(t / tau.constant_term());
        }
        match base.as_ref() {
            Self::SuspensionFlow { base: b, roof } => suspension_sigma(b, roof, tau, x, t),
            _ => flow_sigma(base, tau, settings, x, t),
        }
    }

    /// Affine form `x ↦ A x + c` of `φ_g`, for systems that have one.
    pub fn affine_form(&self, g: &GroupElement<S>) -> Result<AffineForm<S>> {
        self.check_group(g)?;
        match self {
            Self::Rotation { alpha, action } => {
                let n = g.as_integers()?;
                let shift = match action {
                    ActionKind::Flow => alpha.iter().map(|&a| frac_mul_int(a, n[0] as i128)).collect(),
                    ActionKind::Componentwise => alpha
                        .iter()
                        .zip(&n)
                        .map(|(&a, &ni)| frac_mul_int(a, ni as i128))
                        .collect(),
                };
                Ok(AffineForm::translation(shift))
            }
            Self::LinearFlow { alpha, action } => {
                let t = g.as_reals();
                let shift = match action {
                    ActionKind::Flow => alpha.iter().map(|&a| frac_prod(a, t[0])).collect(),
                    ActionKind::Componentwise => {
                        alpha.iter().zip(&t).map(|(&a, &ti)| frac_prod(a, ti)).collect()
                    }
                };
                Ok(AffineForm::translation(shift))
            }
            Self::SkewShift { eta1, eta2 } => {
                let n = g.as_integers()?[0];
                Ok(skew_affine(*eta1, *eta2, n))
            }
            Self::HeisenbergReturnMap { w_a, w_b, w_c } => {
                let n = g.as_integers()?[0];
                let (e1, e2) = heisenberg_eta(*w_a, *w_b, *w_c);
                Ok(skew_affine(e1, e2, n))
            }
            Self::ToralAutomorphism(m) => {
                let n = g.as_integers()?[0];
                Ok(AffineForm {
                    linear: m.power(n),
                    shift: vec![S::zero(); m.dim()],
                })
            }
            Self::ProductSystem { factors } => {
                let n = g.as_integers()?;
                let mut parts = Vec::with_capacity(factors.len());
                let mut off = 0;
                for f in factors {
                    let pg = f.group_dim();
                    parts.push(f.affine_form(&GroupElement::Discrete(n[off..off + pg].to_vec()))?);
                    off += pg;
                }
                Ok(AffineForm::block_diag(parts))
            }
            Self::SuspensionFlow { .. } => Err(Error::UnsupportedSpec("SuspensionFlow")),
            Self::TimeChange { .. } => Err(Error::UnsupportedSpec("TimeChange")),
            Self::Restricted { .. } => Err(Error::UnsupportedSpec("Restricted")),
        }
    }

    /// Whether [`Self::affine_form`] is available.
    pub fn has_exact_oracle(&self) -> bool {
        match self {
            Self::SuspensionFlow { .. } | Self::TimeChange { .. } | Self::Restricted { .. } => false,
            Self::ProductSystem { factors } => factors.iter().all(|f| f.has_exact_oracle()),
            _ => true,
        }
    }
}

fn check_positive<S: Real>(f: &TrigFunction<S>, dim: usize, what: &str) -> Result<()> {
    if !f.is_constant() && f.terms().dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: f.terms().dim(),
        });
    }
    if !f.terms().is_real_valued() {
        return Err(Error::InvalidSystem(format!("{what} must be real valued")));
    }
    if !(f.grid_min() > S::zero()) {
        return Err(Error::InvalidSystem(format!(
            "{what} must be positive; grid minimum is {}",
            f.grid_min()
        )));
    }
    Ok(())
}

/// `(η₁, η₂) = (w_a/w_b, w_c/w_b + w_a/(2w_b))`.
pub fn heisenberg_eta<S: Real>(w_a: S, w_b: S, w_c: S) -> (S, S) {
    let two = S::lit(2.0);
    (w_a / w_b, w_c / w_b + w_a / (two * w_b))
}

fn skew_affine<S: Real>(eta1: S, eta2: S, n: i64) -> AffineForm<S> {
    let c = binom2(n);
    AffineForm {
        linear: vec![
            vec![BigInt::one(), BigInt::zero()],
            vec![BigInt::from(n), BigInt::one()],
        ],
        shift: vec![
            frac_mul_int(eta1, n as i128),
            frac(frac_mul_int(eta2, n as i128) + frac_mul_int(eta1, c)),
        ],
    }
}

fn binom2(n: i64) -> i128 {
    let n = n as i128;
    n * (n - 1) / 2
}

/// `R^n(x, y) = (x + nη₁, y + nx + nη₂ + C(n,2)η₁) mod 1`.
///
/// Valid for every integer `n`, including negative ones.
pub fn skew_shift_closed_form<S: Real>(eta1: S, eta2: S, x: &StatePoint<S>, n: i64) -> StatePoint<S> {
    let (x0, y0) = (x.coords[0], x.coords[1]);
    let n128 = n as i128;
    let nx = frac_mul_int(x0, n128);
    let y = y0 + nx + frac_mul_int(eta2, n128) + frac_mul_int(eta1, binom2(n));
    StatePoint {
        coords: vec![frac(x0 + frac_mul_int(eta1, n128)), frac(y)],
        height: None,
    }
}

fn int_matvec_mod1<S: Real>(m: &[Vec<i64>], x: &[S]) -> Vec<S> {
    m.iter()
        .map(|row| {
            let mut acc = S::zero();
            for (&mij, &xj) in row.iter().zip(x) {
                acc = frac(acc + frac_mul_int(xj, mij as i128));
            }
            acc
        })
        .collect()
}

fn roof_at<S: Real>(roof: &TrigFunction<S>, coords: &[S]) -> Result<S> {
    let r = roof.evaluate(coords);
    if r > S::zero() {
        Ok(r)
    } else {
        Err(Error::InvalidSystem(format!("roof evaluated to {r} ≤ 0")))
    }
}

fn suspension_evolve<S: Real>(
    base: &SystemSpec<S>,
    roof: &TrigFunction<S>,
    x: &StatePoint<S>,
    t: S,
) -> Result<StatePoint<S>> {
    let mut coords = StatePoint::new(x.coords.clone());
    let mut h = x.height.unwrap_or_else(S::zero);
    if t >= S::zero() {
        let mut remaining = t;
        loop {
            let r = roof_at(roof, &coords.coords)?;
            if h + remaining < r {
                h = h + remaining;
                break;
            }
            remaining = remaining - (r - h);
            coords = base.evolve(&coords, &GroupElement::int(1))?;
            h = S::zero();
        }
    } else {
        let mut remaining = -t;
        loop {
            if h - remaining >= S::zero() {
                h = h - remaining;
                break;
            }
            remaining = remaining - h;
            coords = base.evolve(&coords, &GroupElement::int(-1))?;
            h = roof_at(roof, &coords.coords)?;
        }
    }
    coords.height = Some(h);
    Ok(coords)
}

/// Time change over a suspension: τ depends on the section coordinates,
/// so the integral is piecewise linear and inverted exactly.
fn suspension_sigma<S: Real>(
    base: &SystemSpec<S>,
    roof: &TrigFunction<S>,
    tau: &TrigFunction<S>,
    x: &StatePoint<S>,
    t: S,
) -> Result<S> {
    let mut coords = StatePoint::new(x.coords.clone());
    let mut h = x.height.unwrap_or_else(S::zero);
    let target = t.abs();
    let mut cum = Neumaier::new();
    let mut sigma = Neumaier::new();
    if t > S::zero() {
        loop {
            let r = roof_at(roof, &coords.coords)?;
            let v = tau.evaluate(&coords.coords);
            let seg = r - h;
            let done = cum.value();
            if done + v * seg >= target {
                sigma.add((target - done) / v);
                return Ok(sigma.value());
            }
            cum.add(v * seg);
            sigma.add(seg);
            coords = base.evolve(&coords, &GroupElement::int(1))?;
            h = S::zero();
        }
    } else {
        loop {
            let v = tau.evaluate(&coords.coords);
            let done = cum.value();
            if done + v * h >= target {
                sigma.add((target - done) / v);
                return Ok(-sigma.value());
            }
            cum.add(v * h);
            sigma.add(h);
            coords = base.evolve(&coords, &GroupElement::int(-1))?;
            h = roof_at(roof, &coords.coords)?;
        }
    }
}

/// Time change over a linear flow: march fixed panels, then solve inside
/// the crossing panel by safeguarded secant iteration.
fn flow_sigma<S: Real>(
    base: &SystemSpec<S>,
    tau: &TrigFunction<S>,
    settings: &TimeChangeSettings<S>,
    x: &StatePoint<S>,
    t: S,
) -> Result<S> {
    let dir = t.signum();
    let target = t.abs();
    let rule = GaussLegendre::<S>::new(4);
    let tau_at = |s: S| -> Result<S> {
        let y = base.evolve(x, &GroupElement::real(s))?;
        Ok(tau.evaluate(&y.coords))
    };
    // ∫ over [dir·a, dir·b] in the direction of travel, as a positive number
    let piece = |a: S, b: S| -> Result<S> {
        let mut acc = Neumaier::new();
        for (u, w) in rule.mapped(a, b) {
            acc.add(w * tau_at(dir * u)?);
        }
        Ok(acc.value())
    };
    let h = settings.step;
    let mut cum = Neumaier::new();
    let mut k: u64 = 0;
    let lower_speed = tau.grid_min().min(tau.analytic_bounds().0.max(S::min_positive_value()));
    let max_panels = (target / (lower_speed * h)).to_f64().unwrap_or(f64::INFINITY) * 4.0 + 16.0;
    loop {
        if k as f64 > max_panels {
            return Err(Error::NonConvergence("time change integral never reached the target".into()));
        }
        let a = h * S::lit(k as f64);
        let p = piece(a, a + h)?;
        let done = cum.value();
        if done + p >= target {
            // root of F(v) = done + ∫_a^{a+v} τ − target on [0, h]
            let f = |v: S| -> Result<S> { Ok(done + piece(a, a + v)? - target) };
            let v = solve_monotone(f, h, done - target, done + p - target, settings)?;
            return Ok(dir * (a + v));
        }
        cum.add(p);
        k += 1;
    }
}

/// Illinois-style regula falsi with bisection fallback on `[0, h]`, for a
/// nondecreasing `f` with `f(0) = f0 ≤ 0 ≤ f(h) = fh`.
fn solve_monotone<S: Real, F: Fn(S) -> Result<S>>(
    f: F,
    h: S,
    f0: S,
    fh: S,
    settings: &TimeChangeSettings<S>,
) -> Result<S> {
    let (mut lo, mut hi) = (S::zero(), h);
    let (mut flo, mut fhi) = (f0, fh);
    if flo.abs() <= settings.tol {
        return Ok(lo);
    }
    if fhi.abs() <= settings.tol {
        return Ok(hi);
    }
    let half = S::lit(0.5);
    let mut side = 0i8;
    for _ in 0..settings.max_iter {
        let mut m = lo - flo * (hi - lo) / (fhi - flo);
        if !(m > lo && m < hi) {
            m = (lo + hi) * half;
        }
        let fm = f(m)?;
        if fm.abs() <= settings.tol || hi - lo <= S::epsilon() * h {
            return Ok(m);
        }
        if fm < S::zero() {
            lo = m;
            flo = fm;
            if side == -1 {
                fhi = fhi * half;
            }
            side = -1;
        } else {
            hi = m;
            fhi = fm;
            if side == 1 {
                flo = flo * half;
            }
            side = 1;
        }
    }
    Err(Error::NonConvergence(format!(
        "time change root not within {} after {} iterations",
        settings.tol, settings.max_iter
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::FourierObservable;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn cat() -> SystemSpec<f64> {
        SystemSpec::toral(vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn skew_shift_one_step() {
        let s = SystemSpec::SkewShift { eta1: 0.3f64, eta2: 0.1 };
        let x = StatePoint::new(vec![0.2, 0.5]);
        let y = s.evolve(&x, &GroupElement::int(1)).unwrap();
        assert!((y.coords[0] - 0.5).abs() < 1e-15);
        assert!((y.coords[1] - 0.8).abs() < 1e-15);
        let z = skew_shift_closed_form(0.3f64, 0.1, &StatePoint::new(vec![0.0, 0.0]), 2);
        assert!((z.coords[0] - 0.6).abs() < 1e-15 && (z.coords[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn skew_shift_negative_times_invert() {
        let x = StatePoint::new(vec![0.37, 0.81]);
        let y = skew_shift_closed_form(golden(), 0.2, &x, 1234);
        let z = skew_shift_closed_form(golden(), 0.2, &y, -1234);
        assert!(z.distance(&x) < 1e-11);
    }

    #[test]
    fn toral_example() {
        let y = cat()
            .evolve(&StatePoint::new(vec![0.2, 0.4]), &GroupElement::int(1))
            .unwrap();
        assert!((y.coords[0] - 0.8).abs() < 1e-15);
        assert!((y.coords[1] - 0.6).abs() < 1e-15);
        let back = cat().evolve(&y, &GroupElement::int(-1)).unwrap();
        assert!(back.distance(&StatePoint::new(vec![0.2, 0.4])) < 1e-15);
    }

    #[test]
    fn toral_validation() {
        assert!(SystemSpec::<f64>::toral(vec![vec![2, 0], vec![0, 1]]).is_err());
        assert!(SystemSpec::<f64>::toral(vec![vec![1, 1], vec![0, 1]]).is_err());
        assert!(SystemSpec::<f64>::toral(vec![vec![0, -1], vec![1, 0]]).is_err());
        let m3 = vec![vec![0, 0, 1], vec![1, 0, -1], vec![0, 1, 0]];
        assert!(SystemSpec::<f64>::toral(m3).is_ok());
    }

    #[test]
    fn matrix_power() {
        let SystemSpec::ToralAutomorphism(m) = cat() else { unreachable!() };
        let p = m.power(3);
        assert_eq!(p[0][0], BigInt::from(13));
        assert_eq!(p[0][1], BigInt::from(8));
        let q = m.power(-3);
        let id = big_matmul(&p, &q);
        assert_eq!(id, identity(2));
    }

    #[test]
    fn errors() {
        let r = SystemSpec::rotation(vec![0.1]);
        let x = StatePoint::new(vec![0.0]);
        assert_eq!(r.evolve(&x, &GroupElement::real(0.5)), Err(Error::NonIntegerTime));
        assert!(matches!(
            r.evolve(&x, &GroupElement::Discrete(vec![1, 2])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(r.restrict().is_err());
        let bad = SystemSpec::SuspensionFlow {
            base: Box::new(r.clone()),
            roof: TrigFunction::new(0.1, FourierObservable::cosine(vec![1], 0.2)).unwrap(),
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identity_element() {
        let specs = [
            SystemSpec::rotation(vec![0.3, golden()]),
            SystemSpec::linear_flow(vec![golden()]),
            cat(),
            SystemSpec::SkewShift { eta1: golden(), eta2: 0.1 },
        ];
        for s in &specs {
            let x = StatePoint::new(vec![0.25; s.phase_dim()]);
            let zero = if s.is_discrete() {
                GroupElement::Discrete(vec![0; s.group_dim()])
            } else {
                GroupElement::Continuous(vec![0.0; s.group_dim()])
            };
            assert_eq!(s.evolve(&x, &zero).unwrap(), x);
        }
    }

    #[test]
    fn suspension_constant_roof_restricts_to_base() {
        let base = cat();
        let s = SystemSpec::SuspensionFlow {
            base: Box::new(base.clone()),
            roof: TrigFunction::constant(1.0),
        };
        s.validate().unwrap();
        let r = s.restrict().unwrap();
        let x = s.point(vec![0.2, 0.4]);
        for n in [-3i64, 0, 1, 5] {
            let a = r.evolve(&x, &GroupElement::int(n)).unwrap();
            let b = base.evolve(&StatePoint::new(vec![0.2, 0.4]), &GroupElement::int(n)).unwrap();
            assert!(StatePoint::new(a.coords.clone()).distance(&b) < 1e-12);
            assert!(a.height.unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn suspension_group_law() {
        let s = SystemSpec::SuspensionFlow {
            base: Box::new(cat()),
            roof: TrigFunction::new(1.0, FourierObservable::cosine(vec![1, 0], 0.2)).unwrap(),
        };
        s.validate().unwrap();
        let x = s.point(vec![0.31, 0.77]);
        for (a, b) in [(2.3, 1.9), (-1.2, 3.7), (0.4, -5.1)] {
            let one = s.evolve(&s.evolve(&x, &GroupElement::real(a)).unwrap(), &GroupElement::real(b)).unwrap();
            let two = s.evolve(&x, &GroupElement::real(a + b)).unwrap();
            assert!(one.distance(&two) < 1e-9, "{a} {b}: {one:?} {two:?}");
        }
    }

    #[test]
    fn time_change_basics() {
        let base = SystemSpec::linear_flow(vec![golden()]);
        let unit = SystemSpec::TimeChange {
            base: Box::new(base.clone()),
            tau: TrigFunction::constant(1.0),
            settings: TimeChangeSettings::default(),
        };
        assert_eq!(unit.restrict().unwrap(), base.restrict().unwrap());
        let x = StatePoint::new(vec![0.1]);
        assert_eq!(unit.time_change_sigma(&x, 2.5).unwrap(), 2.5);
        let half = SystemSpec::TimeChange {
            base: Box::new(base.clone()),
            tau: TrigFunction::constant(2.0),
            settings: TimeChangeSettings::default(),
        };
        assert_eq!(half.time_change_sigma(&x, 3.0).unwrap(), 1.5);
    }

    #[test]
    fn time_change_sigma_bounds_and_cocycle() {
        let tc = SystemSpec::TimeChange {
            base: Box::new(SystemSpec::linear_flow(vec![golden()])),
            tau: TrigFunction::new(1.0, FourierObservable::cosine(vec![1], 0.25)).unwrap(),
            settings: TimeChangeSettings::default(),
        };
        tc.validate().unwrap();
        let x = StatePoint::new(vec![0.3]);
        let (t, s) = (1.0, 0.7);
        let st = tc.time_change_sigma(&x, t).unwrap();
        assert!(st >= t / 1.5 - 1e-12 && st <= t / 0.5 + 1e-12);
        let y = tc.evolve(&x, &GroupElement::real(t)).unwrap();
        let lhs = tc.time_change_sigma(&x, t + s).unwrap();
        let rhs = st + tc.time_change_sigma(&y, s).unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} {rhs}");
        let back = tc.time_change_sigma(&x, -t).unwrap();
        assert!(back < 0.0);
        let z = tc.evolve(&y, &GroupElement::real(-t)).unwrap();
        assert!(z.distance(&x) < 1e-8);
    }

    #[test]
    fn serde_tags() {
        let s = cat();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"type":"ToralAutomorphism","params":{"M":[[2,1],[1,1]]}}"#);
        let r: SystemSpec<f64> = serde_json::from_str(r#"{"type":"Rotation","params":{"alpha":[0.5]}}"#).unwrap();
        assert_eq!(r, SystemSpec::rotation(vec![0.5]));
        let bad = serde_json::from_str::<SystemSpec<f64>>(r#"{"type":"ToralAutomorphism","params":{"M":[[1,1],[0,1]]}}"#);
        assert!(bad.is_err());
        let tc: SystemSpec<f64> = serde_json::from_str(
            r#"{"type":"TimeChange","params":{"base":{"type":"LinearFlow","params":{"alpha":[0.3]}},
                "tau":{"constant":1.0,"terms":[{"k":[1],"re":0.2,"im":0},{"k":[-1],"re":0.2,"im":0}]}}}"#,
        )
        .unwrap();
        tc.validate().unwrap();
    }
}
