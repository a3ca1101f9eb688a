use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use vscsim::analysis::{resample_zoh, rmse};
use vscsim::frames::{
    clarke, fortescue, inverse_clarke, inverse_fortescue, inverse_park_with_zero, park, park_with_zero, power_qd,
    ComplexPhasorSet, ThreePhaseSample,
};
use vscsim::powerflow::{solve_gauss_seidel, solve_newton, BusSpec, BusType};
use vscsim::vsc::{limit_current, lvrt_current_ref, VscParams};

fn sample() -> impl Strategy<Value = ThreePhaseSample> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.0..1.0f64).prop_map(|(a, b, c, t)| ThreePhaseSample::new(a, b, c, t))
}

fn phasor() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn series(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, len)
}

proptest! {
    #[test]
    fn park_round_trip(abc in sample(), theta in -10.0..10.0f64) {
        let (dq, zero) = park_with_zero(&abc, theta);
        let back = inverse_park_with_zero(&dq, zero, theta, abc.t);
        for (x, y) in abc.as_array().iter().zip(back.as_array()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn clarke_round_trip_without_zero_sequence(abc in sample()) {
        let z = (abc.a + abc.b + abc.c) / 3.0;
        let back = inverse_clarke(clarke(&abc), abc.t);
        prop_assert!((back.a - (abc.a - z)).abs() < 1e-12);
        prop_assert!((back.b - (abc.b - z)).abs() < 1e-12);
        prop_assert!((back.c - (abc.c - z)).abs() < 1e-12);
    }

    #[test]
    fn fortescue_round_trip(a in phasor(), b in phasor(), c in phasor()) {
        let set = ComplexPhasorSet::new(a, b, c);
        let (p, n, z) = fortescue(&set);
        let back = inverse_fortescue(p, n, z);
        for (x, y) in set.as_array().iter().zip(back.as_array()) {
            prop_assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn balanced_set_keeps_its_amplitude(amp in 0.1..2.0f64, phi in -3.0..3.0f64, theta in -10.0..10.0f64) {
        let k = 2.0 * std::f64::consts::PI / 3.0;
        let abc = ThreePhaseSample::new(amp * phi.cos(), amp * (phi - k).cos(), amp * (phi + k).cos(), 0.0);
        prop_assert!((park(&abc, theta).magnitude() - amp).abs() < 1e-12);
    }

    #[test]
    fn dq_power_equals_instantaneous_power(v in sample(), i in sample(), theta in -10.0..10.0f64) {
        // remove the homopolar parts, which the dq power does not see
        let strip = |s: &ThreePhaseSample| {
            let z = (s.a + s.b + s.c) / 3.0;
            ThreePhaseSample::new(s.a - z, s.b - z, s.c - z, s.t)
        };
        let (v, i) = (strip(&v), strip(&i));
        let (p, _) = power_qd(&park(&v, theta), &park(&i, theta));
        prop_assert!((p - (v.a * i.a + v.b * i.b + v.c * i.c)).abs() < 1e-10);
    }

    #[test]
    fn rmse_is_scale_invariant(x in series(40), y in series(40), base in 0.1..100.0f64, alpha in 0.01..100.0f64) {
        let a = rmse(&x, &y, base).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * alpha).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * alpha).collect();
        let b = rmse(&xs, &ys, base * alpha).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn rmse_zero_only_for_identical(x in series(30), k in 0usize..30, delta in 1e-6..1.0f64) {
        prop_assert_eq!(rmse(&x, &x, 1.0).unwrap(), 0.0);
        let mut y = x.clone();
        y[k] += delta;
        prop_assert!(rmse(&x, &y, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn zoh_onto_own_timebase_is_identity(x in series(25), dt in 1e-6..1e-2f64) {
        let t: Vec<f64> = (0..x.len()).map(|k| k as f64 * dt).collect();
        prop_assert_eq!(resample_zoh(&t, &x, &t), x);
    }

    #[test]
    fn current_limit_holds(iq in -5.0..5.0f64, id in -5.0..5.0f64, i_max in 0.1..2.0f64, d_priority: bool) {
        let (q, d, bound) = limit_current(iq, id, i_max, d_priority);
        prop_assert!(q.hypot(d) <= i_max * (1.0 + 1e-12));
        prop_assert_eq!(bound, iq.hypot(id) > i_max);
        if d_priority && id.abs() <= i_max {
            prop_assert_eq!(d, id);
        }
    }

    #[test]
    fn lvrt_reference_is_bounded_and_monotone(v1 in -0.2..1.5f64, v2 in -0.2..1.5f64, k in 0.5..5.0f64) {
        let p = VscParams { k_lvrt: k, ..VscParams::default() };
        let (lo, hi) = if v1 < v2 { (v1, v2) } else { (v2, v1) };
        let (a, b) = (lvrt_current_ref(lo, &p), lvrt_current_ref(hi, &p));
        prop_assert!((0.0..=p.i_lvrt_max).contains(&a) && (0.0..=p.i_lvrt_max).contains(&b));
        prop_assert!(a >= b);
        if hi >= p.v_g_min {
            prop_assert_eq!(b, 0.0);
        }
    }
}

/// Three buses in a triangle with the slack at bus 0.
fn triangle(z: [Complex64; 3]) -> DMatrix<Complex64> {
    let mut y = DMatrix::zeros(3, 3);
    for (k, (i, j)) in [(0, 1), (1, 2), (0, 2)].into_iter().enumerate() {
        let yl = z[k].inv();
        y[(i, i)] += yl;
        y[(j, j)] += yl;
        y[(i, j)] -= yl;
        y[(j, i)] -= yl;
    }
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn newton_and_gauss_seidel_agree(
        r in prop::array::uniform3(0.005..0.05f64),
        x in prop::array::uniform3(0.05..0.3f64),
        p in prop::array::uniform2(-0.8..0.0f64),
        q in prop::array::uniform2(-0.3..0.3f64),
    ) {
        let y = triangle([0, 1, 2].map(|k| Complex64::new(r[k], x[k])));
        let specs = vec![
            BusSpec { kind: BusType::Slack, v_set: 1.02, s_inj: Complex64::default() },
            BusSpec { kind: BusType::Pq, v_set: 1.0, s_inj: Complex64::new(p[0], q[0]) },
            BusSpec { kind: BusType::Pq, v_set: 1.0, s_inj: Complex64::new(p[1], q[1]) },
        ];
        let nr = solve_newton(&y, &specs, 1e-10, 30).unwrap();
        let gs = solve_gauss_seidel(&y, &specs, 1e-10, 20_000).unwrap();
        for (a, b) in nr.v.iter().zip(&gs.v) {
            prop_assert!((a - b).norm() < 1e-7, "{a} vs {b}");
        }
        let s = nr.injections(&y);
        prop_assert!((s[1] - specs[1].s_inj).norm() < 1e-8);
    }
}
