use approx::assert_abs_diff_eq;
use ergolab::estimators::sample_uniform_point;
use ergolab::expsum::{box_lattice_closed_form, progression_approx, weighted_exp_sum, WeightedSampleSet};
use ergolab::kernels::{dirichlet, TriangleKernel};
use ergolab::observables::exact_correlation;
use ergolab::phase::{e, frac, frac_mul_int};
use ergolab::rates::{fit_power_law, twist_exponent, ExponentInputs};
use ergolab::sum::par_sum;
use ergolab::systems::skew_shift_closed_form;
use ergolab::{Complex, FourierObservable, GroupElement, RateSample, StatePoint, SystemSpec};
use num_rational::Rational64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close_mod1(a: f64, b: f64, tol: f64) -> bool {
    let d = frac(a - b);
    d.min(1.0 - d) <= tol
}

fn cat() -> SystemSpec {
    SystemSpec::toral(vec![vec![2, 1], vec![1, 1]]).unwrap()
}

fn obs(terms: &[((i64, i64), (f64, f64))]) -> FourierObservable {
    FourierObservable::from_terms(2, terms.iter().map(|&((a, b), (re, im))| (vec![a, b], Complex::new(re, im)))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frac_mul_int_matches_integer_arithmetic(num in 0i64..(1 << 30), m in -(1i128 << 60)..(1i128 << 60)) {
        // c = num / 2^30 is a dyadic, so frac(c m) has an exact integer oracle
        let c = num as f64 / (1u64 << 30) as f64;
        let exact = ((num as i128 * m).rem_euclid(1 << 30)) as f64 / (1u64 << 30) as f64;
        prop_assert!(close_mod1(frac_mul_int(c, m), exact, 1e-12));
    }

    #[test]
    fn group_law_discrete(x in 0.0f64..1.0, y in 0.0f64..1.0, n in -500i64..500, m in -500i64..500) {
        let systems = [
            SystemSpec::rotation(vec![0.6180339887498949, 0.41421356237309503]),
            SystemSpec::SkewShift { eta1: 0.6180339887498949, eta2: 0.5 },
            cat(),
        ];
        for s in &systems {
            let p = StatePoint::new(vec![x, y]);
            let a = s.evolve(&s.evolve(&p, &GroupElement::Discrete(if s.group_dim() == 2 { vec![n, 0] } else { vec![n] })).unwrap(),
                &GroupElement::Discrete(if s.group_dim() == 2 { vec![m, 0] } else { vec![m] })).unwrap();
            let b = s.evolve(&p, &GroupElement::Discrete(if s.group_dim() == 2 { vec![n + m, 0] } else { vec![n + m] })).unwrap();
            // toral automorphisms expand errors by |λ|^|n|, so keep the check to short times there
            let tol = if matches!(s, SystemSpec::ToralAutomorphism(_)) && (n.abs() > 10 || m.abs() > 10) { continue } else { 1e-9 };
            for (u, v) in a.coords.iter().zip(&b.coords) {
                prop_assert!(close_mod1(*u, *v, tol), "{} {u} {v}", s.name());
            }
        }
    }

    #[test]
    fn group_law_flow(x in 0.0f64..1.0, s in -1e3f64..1e3, t in -1e3f64..1e3) {
        let f = SystemSpec::linear_flow(vec![1.0, 2f64.sqrt()]);
        let p = StatePoint::new(vec![x, 0.25]);
        let a = f.evolve(&f.evolve(&p, &GroupElement::real(s)).unwrap(), &GroupElement::real(t)).unwrap();
        let b = f.evolve(&p, &GroupElement::real(s + t)).unwrap();
        for (u, v) in a.coords.iter().zip(&b.coords) {
            prop_assert!(close_mod1(*u, *v, 1e-9));
        }
    }

    #[test]
    fn skew_closed_form_matches_iteration(x in 0.0f64..1.0, y in 0.0f64..1.0, n in 0i64..200) {
        let (e1, e2) = (0.7548776662466927, 0.5698402909980532);
        let (mut u, mut v) = (x, y);
        for _ in 0..n {
            v = frac(v + u + e2);
            u = frac(u + e1);
        }
        let c = skew_shift_closed_form(e1, e2, &StatePoint::new(vec![x, y]), n);
        prop_assert!(close_mod1(c.coords[0], u, 1e-10));
        prop_assert!(close_mod1(c.coords[1], v, 1e-9));
    }

    #[test]
    fn kernel_transform_bounds(delta in 0.01f64..4.0, xi in -50.0f64..50.0) {
        let k = TriangleKernel::new(delta).unwrap();
        let v = k.transform(xi);
        prop_assert!(v >= 0.0 && v <= 1.0 + 1e-15);
        prop_assert_eq!(v, k.transform(-xi));
    }

    #[test]
    fn dirichlet_matches_direct_sum(a in -2.0f64..2.0, n in 1i64..400) {
        let direct: Complex<f64> = (-n..=n).map(|j| e(a * j as f64)).sum();
        prop_assert!(direct.im.abs() < 1e-9 * n as f64);
        prop_assert!((dirichlet(a, n) - direct.re).abs() < 1e-9 * n as f64);
    }

    #[test]
    fn box_lattice_matches_weighted_sum(n in 1i64..20, k0 in -40i64..40, k1 in -40i64..40) {
        let set = WeightedSampleSet::<f64>::lattice_box(n, 2);
        let xi = [k0 as f64 / 37.0, k1 as f64 / 37.0];
        let direct = weighted_exp_sum(&set, &xi).unwrap().norm();
        let side = (2 * n + 1) as f64;
        prop_assert!(direct <= side * side + 1e-9);
        // at ξ = k/N each Dirichlet factor is 2N+1 or 1
        let closed = box_lattice_closed_form(n, &[k0, k1]).unwrap();
        let at_lattice = weighted_exp_sum(&set, &[k0 as f64 / n as f64, k1 as f64 / n as f64]).unwrap().norm();
        prop_assert!((closed - at_lattice).abs() < 1e-8);
    }

    #[test]
    fn exp_sum_triangle_inequality(ws in prop::collection::vec(-3.0f64..3.0, 1..50), xi in -1.0f64..1.0) {
        let pts: Vec<Vec<f64>> = (0..ws.len()).map(|i| vec![(i * i) as f64]).collect();
        let set = WeightedSampleSet::new(1, pts, ws.clone()).unwrap();
        let s = weighted_exp_sum(&set, &[xi]).unwrap().norm();
        prop_assert!(s <= ws.iter().map(|w| w.abs()).sum::<f64>() + 1e-12);
    }

    #[test]
    fn progression_error_bound_holds(eps in 0.05f64..0.9, a in 1.01f64..1.5, n in 50u64..3000) {
        let a = a.min(2.0 / (1.0 + eps) - 0.01).max(1.0 + 1e-3);
        if let Ok(p) = progression_approx(n, eps, a) {
            for m in [n / 3, n / 2, n - 1] {
                if let (Some(v), Some(b)) = (p.value(m), p.error_bound(m)) {
                    let exact = (m as f64).powf(1.0 + eps);
                    prop_assert!((v - exact).abs() <= b + 1e-9 * exact, "m={m} v={v} exact={exact} b={b}");
                }
            }
        }
    }

    #[test]
    fn compose_agrees_with_pointwise(x in 0.0f64..1.0, y in 0.0f64..1.0, n in 0i64..4) {
        let f = obs(&[((1, 0), (0.5, 0.0)), ((-1, 0), (0.5, 0.0)), ((1, 2), (0.0, 0.3))]);
        let s = cat();
        let g = GroupElement::int(n);
        let composed = f.compose(&s, &g).unwrap();
        let p = s.evolve(&StatePoint::new(vec![x, y]), &g).unwrap();
        let lhs = composed.evaluate(&[x, y]);
        let rhs = f.evaluate(&p.coords);
        prop_assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn twist_exponent_is_monotone(n1 in 1i64..20, n2 in 1i64..20, k in 1i64..6, d in 1u32..4, bump in 1i64..5) {
        let base = ExponentInputs::new(Rational64::new(n1, 10), Rational64::new(n2, 10), d, Rational64::from_integer(k));
        let t0 = twist_exponent(&base).unwrap().delta;
        let mut up1 = base.clone();
        up1.delta1 += Rational64::new(bump, 10);
        let mut up2 = base.clone();
        up2.delta2 += Rational64::new(bump, 10);
        let mut upk = base.clone();
        upk.k += Rational64::from_integer(bump);
        let mut upd = base.clone();
        upd.d += bump as u32;
        prop_assert!(twist_exponent(&up1).unwrap().delta >= t0);
        prop_assert!(twist_exponent(&up2).unwrap().delta >= t0);
        prop_assert!(twist_exponent(&upk).unwrap().delta <= t0);
        prop_assert!(twist_exponent(&upd).unwrap().delta <= t0);
        prop_assert!(t0 > Rational64::from_integer(0));
    }

    #[test]
    fn power_law_fit_recovers_exponent(slope in -2.0f64..0.5, c in 0.01f64..100.0) {
        let samples: Vec<RateSample> = (0..12).map(|i| {
            let t = 2f64.powi(i + 2);
            RateSample::new(t, c * t.powf(slope))
        }).collect();
        let fit = fit_power_law(&samples).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.intercept.exp() - c).abs() < 1e-8 * c);
        prop_assert!(fit.r_squared > 1.0 - 1e-9 || slope.abs() < 1e-6);
    }
}

#[test]
fn par_sum_is_thread_independent() {
    let term = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
    let n = 1_000_003;
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| par_sum(n, term))
    };
    let one = run(1);
    assert_eq!(one.to_bits(), run(3).to_bits());
    assert_eq!(one.to_bits(), run(8).to_bits());
    let naive: f64 = (0..n).map(term).sum();
    assert_abs_diff_eq!(one, naive, epsilon = 1e-10);
}

#[test]
fn exact_correlation_matches_grid_quadrature() {
    // trigonometric polynomials: the M×M trapezoid is exact once M exceeds
    // every frequency difference in the integrand
    let f = obs(&[((1, 0), (1.0, 0.0)), ((0, 1), (0.0, 0.5)), ((1, -1), (0.25, 0.25))]);
    let g = obs(&[((2, 1), (1.0, 0.0)), ((5, 3), (0.5, -0.5)), ((1, 0), (0.3, 0.0)), ((3, 2), (0.0, 1.0))]);
    let rot = SystemSpec::rotation(vec![0.3090169943749474, 0.7071067811865476]);
    let m = 64;
    for (spec, steps) in [(cat(), vec![0i64, 1, 2]), (rot, vec![0, 1, 7, -5])] {
        for n in steps {
            let t = if spec.group_dim() == 2 { GroupElement::Discrete(vec![n, n]) } else { GroupElement::int(n) };
            let exact = exact_correlation(&spec, &f, &g, &t).unwrap();
            let mut acc = Complex::new(0.0, 0.0);
            for i in 0..m {
                for j in 0..m {
                    let x = StatePoint::new(vec![i as f64 / m as f64, j as f64 / m as f64]);
                    let y = spec.evolve(&x, &t).unwrap();
                    acc += f.evaluate(&y.coords) * g.evaluate(&x.coords).conj();
                }
            }
            acc /= (m * m) as f64;
            assert!((acc - exact).norm() < 1e-10, "{} n={n}: {acc} vs {exact}", spec.name());
        }
    }
}

fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn lebesgue_measure_is_invariant() {
    let systems = [
        (SystemSpec::rotation(vec![0.6180339887498949, 0.41421356237309503]), GroupElement::Discrete(vec![17, -4])),
        (SystemSpec::SkewShift { eta1: 0.6180339887498949, eta2: 0.5 }, GroupElement::int(33)),
        (cat(), GroupElement::int(3)),
        (SystemSpec::linear_flow(vec![1.0, 2f64.sqrt()]), GroupElement::real(12.5)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (s, g) in &systems {
        let pts: Vec<StatePoint> = (0..10_000)
            .map(|_| s.evolve(&sample_uniform_point(s, &mut rng), g).unwrap())
            .collect();
        for axis in 0..2 {
            let ks = ks_uniform(pts.iter().map(|p| p.coords[axis]).collect());
            assert!(ks <= 0.02, "{} axis {axis}: KS {ks}", s.name());
        }
    }
}

#[test]
fn observable_algebra() {
    let f = obs(&[((1, 0), (1.0, 2.0)), ((0, 0), (3.0, 0.0))]);
    assert_eq!(f.mean(), Complex::new(3.0, 0.0));
    let z = f.clone().mean_zero();
    assert!(z.is_mean_zero());
    assert_eq!(z.support_len(), 1);
    let x = [0.2, 0.7];
    assert!((f.evaluate(&x) - z.evaluate(&x) - Complex::new(3.0, 0.0)).norm() < 1e-14);
    assert!(!f.is_real_valued());
    let c = FourierObservable::cosine(vec![1, 1], 2.0);
    assert!(c.is_real_valued());
    assert_abs_diff_eq!(c.evaluate(&x).re, 4.0 * (std::f64::consts::TAU * 0.9).cos(), epsilon = 1e-12);
    assert_abs_diff_eq!(c.evaluate(&x).im, 0.0, epsilon = 1e-12);
}
