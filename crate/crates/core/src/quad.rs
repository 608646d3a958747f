//! Quadrature: Gauss–Legendre rules, composite panels and adaptive
//! Gauss–Kronrod integration.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sum::{ComplexNeumaier, Neumaier};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<S> {
    pub nodes: Vec<S>,
    pub weights: Vec<S>,
}

impl<S: Real> GaussLegendre<S> {
    /// Rule with `n` nodes; nodes found by Newton iteration on `P_n` in f64.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0f64, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = nf * (x * pn - pm) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self {
            nodes: nodes.into_iter().map(S::lit).collect(),
            weights: weights.into_iter().map(S::lit).collect(),
        }
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: S, b: S) -> impl Iterator<Item = (S, S)> + '_ {
        let half = (b - a) / S::lit(2.0);
        let mid = (a + b) / S::lit(2.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, w * half))
    }

    pub fn integrate<F: FnMut(S) -> S>(&self, a: S, b: S, mut f: F) -> S {
        let mut acc = Neumaier::new();
        for (x, w) in self.mapped(a, b) {
            acc.add(w * f(x));
        }
        acc.value()
    }

    /// Composite rule with panels no wider than `max_width`.
    pub fn composite<F: FnMut(S) -> S>(&self, a: S, b: S, max_width: S, mut f: F) -> S {
        let panels = panel_count(a, b, max_width);
        let h = (b - a) / S::from_usize(panels).unwrap();
        let mut acc = Neumaier::new();
        for p in 0..panels {
            let lo = a + h * S::from_usize(p).unwrap();
            for (x, w) in self.mapped(lo, lo + h) {
                acc.add(w * f(x));
            }
        }
        acc.value()
    }

    pub fn composite_complex<F: FnMut(S) -> Complex<S>>(
        &self,
        a: S,
        b: S,
        max_width: S,
        mut f: F,
    ) -> Complex<S> {
        let panels = panel_count(a, b, max_width);
        let h = (b - a) / S::from_usize(panels).unwrap();
        let mut acc = ComplexNeumaier::new();
        for p in 0..panels {
            let lo = a + h * S::from_usize(p).unwrap();
            for (x, w) in self.mapped(lo, lo + h) {
                acc.add(f(x) * w);
            }
        }
        acc.value()
    }

    /// All composite nodes and weights on `[a, b]`, in increasing order.
    pub fn composite_nodes(&self, a: S, b: S, max_width: S) -> Vec<(S, S)> {
        let panels = panel_count(a, b, max_width);
        let h = (b - a) / S::from_usize(panels).unwrap();
        let mut out = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let lo = a + h * S::from_usize(p).unwrap();
            out.extend(self.mapped(lo, lo + h));
        }
        out
    }
}

fn panel_count<S: Real>(a: S, b: S, max_width: S) -> usize {
    let span = (b - a).abs();
    if span == S::zero() {
        return 1;
    }
    ((span / max_width).ceil().to_usize().unwrap_or(1)).max(1)
}

const GK_XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> Complex<f64>>(f: &mut F, a: f64, b: f64) -> (Complex<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WK[7];
    let mut gauss = fc * GK_WG[3];
    for j in 0..7 {
        let dx = h * GK_XK[j];
        let s = f(c - dx) + f(c + dx);
        kron += s * GK_WK[j];
        if j % 2 == 1 {
            gauss += s * GK_WG[j / 2];
        }
    }
    ((kron * h), ((kron - gauss) * h).norm())
}

/// Adaptive Gauss–Kronrod (7/15) integration of a complex integrand.
///
/// Subdivides the interval with the largest error estimate until the total
/// estimate drops below `max(abs_tol, rel_tol·|I|)`.
pub fn adaptive_gk<F: FnMut(f64) -> Complex<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Complex<f64>> {
    let mut pieces = vec![(a, b, gk15(&mut f, a, b))];
    loop {
        let total: Complex<f64> = pieces.iter().map(|p| p.2 .0).sum();
        let err: f64 = pieces.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.norm()) {
            return Ok(total);
        }
        if pieces.len() >= max_intervals {
            return Err(Error::NonConvergence(format!(
                "adaptive quadrature on [{a}, {b}] stopped at error {err:e} after {max_intervals} intervals"
            )));
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("non-empty");
        let (lo, hi, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        pieces.push((lo, mid, gk15(&mut f, lo, mid)));
        pieces.push((mid, hi, gk15(&mut f, mid, hi)));
    }
}

/// Real-valued convenience wrapper around [`adaptive_gk`].
pub fn adaptive_gk_real<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    adaptive_gk(|x| Complex::new(f(x), 0.0), a, b, abs_tol, rel_tol, 20_000).map(|z| z.re)
}
