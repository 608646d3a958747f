//! Estimators against brute-force or closed-form references computed here.

use ergolab::estimators::{gamma_sup, twisted_average, GammaSettings, QuadSettings};
use ergolab::phase::{e, frac};
use ergolab::{Complex, FourierObservable, StatePoint, SystemSpec};

const GOLDEN: f64 = 0.6180339887498949;

fn quad() -> QuadSettings<f64> {
    QuadSettings::default()
}

#[test]
fn rotation_twisted_average_matches_orbit_sum() {
    let s = SystemSpec::rotation(vec![GOLDEN]);
    let f = FourierObservable::from_terms(1, [(vec![2], Complex::new(1.0, 0.0)), (vec![-3], Complex::new(0.0, 0.5))]).unwrap();
    let x0 = 0.123;
    for (t, a) in [(10i64, 0.0), (57, 0.3), (200, -0.17)] {
        let mut acc = Complex::new(0.0, 0.0);
        for n in -t..=t {
            let y = frac(x0 + n as f64 * GOLDEN);
            acc += e(a * n as f64) * f.evaluate(&[y]);
        }
        acc /= (2 * t + 1) as f64;
        let got = twisted_average(&s, &f, &StatePoint::new(vec![x0]), t as f64, &[a], &quad()).unwrap();
        assert!((got - acc).norm() < 1e-12, "T={t}: {got} vs {acc}");
    }
}

#[test]
fn skew_shift_average_matches_iteration() {
    let (e1, e2) = (GOLDEN, 0.5);
    let s = SystemSpec::SkewShift { eta1: e1, eta2: e2 };
    let f = FourierObservable::cosine(vec![1, 1], 0.5);
    let (x0, y0) = (0.31, 0.77);
    let t = 80i64;
    // forward and backward iteration of (x, y) -> (x + η1, x + y + η2)
    let mut vals = Vec::new();
    let (mut u, mut v) = (x0, y0);
    for _ in 0..=t {
        vals.push(f.evaluate(&[u, v]));
        v = frac(v + u + e2);
        u = frac(u + e1);
    }
    let (mut u, mut v) = (x0, y0);
    for _ in 0..t {
        u = frac(u - e1);
        v = frac(v - u - e2);
        vals.push(f.evaluate(&[u, v]));
    }
    let brute: Complex<f64> = vals.iter().sum::<Complex<f64>>() / (2 * t + 1) as f64;
    let got = twisted_average(&s, &f, &StatePoint::new(vec![x0, y0]), t as f64, &[0.0], &quad()).unwrap();
    assert!((got - brute).norm() < 1e-10, "{got} vs {brute}");
}

#[test]
fn linear_flow_average_matches_closed_form() {
    let alpha = [1.0, 2f64.sqrt()];
    let s = SystemSpec::linear_flow(alpha.to_vec());
    let k = [1i64, -2];
    let f = FourierObservable::character(k.to_vec());
    let x = [0.2, 0.9];
    for (t, a) in [(5.0, 0.0), (33.3, 0.4), (100.0, 1.0)] {
        let c = k[0] as f64 * alpha[0] + k[1] as f64 * alpha[1] + a;
        // (1/2T)∫_{−T}^{T} e(ct) dt = sin(2πcT)/(2πcT)
        let w = std::f64::consts::TAU * c * t;
        let expect = e(k[0] as f64 * x[0] + k[1] as f64 * x[1]) * (w.sin() / w);
        let got = twisted_average(&s, &f, &StatePoint::new(x.to_vec()), t, &[a], &quad()).unwrap();
        assert!((got - expect).norm() < 1e-9, "T={t} a={a}: {got} vs {expect}");
    }
}

#[test]
fn gamma_sup_dominates_fixed_twists() {
    let s = SystemSpec::rotation(vec![GOLDEN]);
    let f = FourierObservable::cosine(vec![1], 1.0);
    let x = StatePoint::new(vec![0.4]);
    let t = 64.0;
    let g = gamma_sup(&s, &f, &x, t, &GammaSettings::default(), &quad()).unwrap();
    for i in 0..200 {
        let a = i as f64 / 200.0;
        let v = twisted_average(&s, &f, &x, t, &[a], &quad()).unwrap().norm();
        assert!(v <= g.value + 1e-12, "a={a}: {v} > {}", g.value);
    }
    // the peak sits where a cancels the rotation frequency
    let at = twisted_average(&s, &f, &x, t, &g.argmax, &quad()).unwrap().norm();
    assert!((at - g.value).abs() < 1e-12);
    assert!(g.value > 0.9);
}
