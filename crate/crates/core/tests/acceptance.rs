//! Acceptance criteria 1-11. Each test prints one `CRITERION n PASS|FAIL` line.

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use vscsim::analysis::fourier::bus_positive_sequence;
use vscsim::analysis::{
    guideline_report, knee_dt, model_time_constant, rmse, timestep_sweep, SweepSpec, NAMED_STEPS,
};
use vscsim::frames::{
    clarke, fortescue, inverse_clarke, inverse_fortescue, inverse_park_with_zero, park_with_zero, ComplexPhasorSet, Dsc,
    ThreePhaseSample,
};
use vscsim::powerflow::BusType;
use vscsim::scenarios::{run_scenario, RunResult, ScenarioConfig, SystemDef, SystemKind, TestId};
use vscsim::solver::{euler_step, StateVector};
use vscsim::vsc::{tune_gains, VscModel, VscParams};

fn verdict(n: u32, pass: bool, detail: &str) {
    // written to the handle directly so the line survives libtest's capture
    let line = format!("CRITERION {n} {}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::Write::write_all(&mut std::io::stdout(), line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn run(system: SystemKind, test: TestId, model: VscModel, dt: f64) -> RunResult {
    run_scenario(&ScenarioConfig::new(system, test, model, dt)).unwrap()
}

fn window<'a>(r: &'a RunResult, name: &str, t0: f64, t1: f64) -> (&'a [f64], &'a [f64]) {
    let a = r.time.partition_point(|&t| t < t0 - 1e-12);
    let b = r.time.partition_point(|&t| t < t1 - 1e-12);
    (&r.time[a..b], &r.signal(name).unwrap()[a..b])
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn close_rel(a: f64, b: f64) -> bool {
    (a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_01_tuning_exactness() {
    let started = std::time::Instant::now();
    let strategy = (
        1e-4f64..1.0,   // L
        1e-3f64..10.0,  // R
        100f64..5000.0, // omega_c
        2f64..50.0,     // omega_c / omega_pq
        5f64..200.0,    // omega_pll
        1f64..800.0,    // kV
    );
    let mut runner = TestRunner::new(Config {
        cases: 100,
        ..Config::default()
    });
    let checked = std::cell::Cell::new(0);
    let outcome = runner.run(&strategy, |(l, r, wc, ratio, wpll, kv)| {
        let mut p = VscParams::from_pu(100.0, kv, 50.0, 0.005, 0.15);
        p.l_h = l;
        p.r_ohm = r;
        p.omega_c = wc;
        p.omega_pq = wc / ratio;
        p.omega_pll = wpll;
        let g = tune_gains(&p);
        checked.set(checked.get() + 1);
        let v = kv * 1e3 * (2.0f64 / 3.0).sqrt();
        let zeta = 1.0 / 2f64.sqrt();
        let expect = [
            (g.zeta_pll, zeta),
            (g.k_p_pll, 2.0 * zeta * wpll / v),
            (g.tau_i_pll, 2.0 * zeta / wpll),
            (g.tau_i_c, l / r),
            (g.k_p_c, l * wc),
            (g.tau_i_pq, 1.0 / wc),
            (g.k_p_pq, (1.0 / wc) * (wc / ratio) * 2.0 / (3.0 * v)),
            (g.tau_c, 1.0 / wc),
            (g.tau_pq, ratio / wc),
        ];
        for (k, (got, want)) in expect.iter().enumerate() {
            prop_assert!(close_rel(*got, *want), "gain {k}: {got} vs {want}");
        }
        Ok(())
    });
    let secs = started.elapsed().as_secs_f64();
    let checked = checked.get();
    let pass = outcome.is_ok() && checked >= 100 && secs < 1.0;
    verdict(1, pass, &format!("{checked} random parameter sets, {outcome:?}, {secs:.3} s"));
}

#[test]
fn criterion_02_closed_loop_fidelity() {
    let started = std::time::Instant::now();
    let r = run(SystemKind::Small, TestId::Setpoint, VscModel::EmtAvg, 5e-6);
    let (_, p_end) = window(&r, "VSC1.P_ac", 3.3, 3.5);
    let p_final = mean(p_end);
    let p_ok = (p_final - 50e6).abs() <= 0.01 * 50e6;
    // Area method: for a first-order lag y = u/(1+sτ), ∫(u - y) dt = τ Δy.
    let (t, iref) = window(&r, "VSC1.iq_ref", 0.6, 0.8);
    let (_, iq) = window(&r, "VSC1.iq_pos", 0.6, 0.8);
    let dt = t[1] - t[0];
    let area: f64 = iref.iter().zip(iq).map(|(u, y)| (u - y) * dt).sum();
    let dy = mean(&iq[iq.len() - 200..]) - mean(&iq[..20]);
    let tau = area / dy;
    let tau_c = r.metadata.gains["VSC1"].tau_c;
    let tau_ok = (tau - tau_c).abs() <= 0.1 * tau_c;
    let secs = started.elapsed().as_secs_f64();
    verdict(
        2,
        p_ok && tau_ok && secs < 120.0,
        &format!(
            "P settles at {:.3} MW; inner-loop time constant {:.4} ms vs 1/omega_c = {:.4} ms; {secs:.1} s",
            p_final / 1e6,
            tau * 1e3,
            tau_c * 1e3
        ),
    );
}

#[test]
fn criterion_03_pm_i0_analytic_oracle() {
    let started = std::time::Instant::now();
    let r = run(SystemKind::Small, TestId::Setpoint, VscModel::PmI0, 5e-5);
    let tau = r.metadata.gains["VSC1"].tau_pq;
    let (t, p) = window(&r, "VSC1.P_ac", 0.6, 0.8);
    let p0 = r.value_at("VSC1.P_ac", 0.6 - 1e-4).unwrap();
    let p_final = 50e6;
    let worst = t
        .iter()
        .zip(p)
        .map(|(ti, pi)| {
            let y = (pi - p0) / (p_final - p0);
            (y - (1.0 - (-(ti - 0.6) / tau).exp())).abs()
        })
        .fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    verdict(
        3,
        worst <= 0.02 && secs < 10.0,
        &format!("max deviation from 1 - exp(-t/tau_pq) is {:.3} % of final value; {secs:.2} s", worst * 100.0),
    );
}

#[test]
fn criterion_04_model_ordering_and_knee() {
    let started = std::time::Instant::now();
    let mut spec = SweepSpec::new(SystemKind::Small, TestId::Setpoint);
    spec.models = VscModel::PHASOR.to_vec();
    spec.dt_grid = vec![25e-6, 250e-6, 2.5e-3];
    spec.signals = vec!["VSC1.P_ac".into()];
    let s = timestep_sweep(&spec).unwrap();
    let e = |m: VscModel, dt: f64| s.point(m, dt, None).unwrap().rmse["VSC1.P_ac"];
    let (full, i1, i0, pq1) = (
        e(VscModel::PmFull, 25e-6),
        e(VscModel::PmI1, 25e-6),
        e(VscModel::PmI0, 25e-6),
        e(VscModel::PmPq1, 25e-6),
    );
    let ordering = full <= i1 && i1 <= i0 && i0 < pq1;
    let i0_ratio = e(VscModel::PmI0, 2.5e-3) / e(VscModel::PmI0, 250e-6);
    let full_ratio = e(VscModel::PmFull, 2.5e-3) / e(VscModel::PmFull, 250e-6);
    let secs = started.elapsed().as_secs_f64();
    verdict(
        4,
        ordering && i0_ratio <= 2.0 && full_ratio >= 10.0 && secs < 900.0,
        &format!(
            "25 us RMSE full {full:.6e} <= I1 {i1:.6e} <= I0 {i0:.6e} < PQ1 {pq1:.6e}: {ordering}; \
             I0 RMSE(2.5 ms)/RMSE(250 us) = {i0_ratio:.2} (<= 2); \
             full RMSE(2.5 ms)/RMSE(250 us) = {full_ratio:.1} (>= 10); {secs:.0} s"
        ),
    );
}

#[test]
fn criterion_05_guideline_rule() {
    let mut spec = SweepSpec::new(SystemKind::Small, TestId::Setpoint);
    let mut grid = vec![
        5e-6, 1e-5, 2.5e-5, 5e-5, 1e-4, 1.5e-4, 2e-4, 3e-4, 4e-4, 5e-4, 1e-3, 1.25e-3, 1.5e-3, 2e-3, 3e-3, 4e-3, 5e-3, 8e-3,
        12e-3,
    ];
    grid.extend_from_slice(&NAMED_STEPS);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    spec.dt_grid = grid;
    spec.signals = vec!["VSC1.P_ac".into()];
    let s = timestep_sweep(&spec).unwrap();
    let gains = tune_gains(&SystemKind::Small.build().vscs[0].params);
    let report = guideline_report(&s, &gains).unwrap();
    print!("{report}");
    let mut lines = Vec::new();
    let mut pass = true;
    for e in &report.entries {
        let target = model_time_constant(e.model, &gains) / 5.0;
        let ok = e.knee_dt.is_some_and(|k| k >= target / 2.0 && k <= target * 2.0);
        pass &= ok;
        lines.push(format!(
            "{} knee {} vs tau/5 {:.0} us {}",
            e.model,
            e.knee_dt.map(|k| format!("{:.0} us", k * 1e6)).unwrap_or("-".into()),
            target * 1e6,
            if ok { "ok" } else { "outside x2" }
        ));
        assert_eq!(e.knee_dt, knee_dt(&s.series(e.model, "VSC1.P_ac", None)));
    }
    verdict(5, pass, &lines.join("; "));
}

/// Largest magnitude (relative) and angle (degrees) mismatch over all buses.
/// Worst magnitude error (per unit of nominal) and angle error. Angles are
/// taken relative to the slack bus: a small frequency difference between the
/// domains integrates into a common rotation of every phasor.
fn phasor_mismatch(emt: &RunResult, pm: &RunResult, def: &SystemDef, t_end: f64) -> (f64, f64) {
    let f = def.f_nom;
    let v_nom = def.v_base_kv * 1e3 * (2.0f64 / 3.0).sqrt();
    let slack = &def.machines.iter().find(|m| m.bus_type == BusType::Slack).unwrap().bus;
    let re = bus_positive_sequence(emt, slack, f, t_end).unwrap();
    let rp = bus_positive_sequence(pm, slack, f, t_end).unwrap();
    let mut worst = (0.0f64, 0.0f64);
    for b in &def.buses {
        let ve = bus_positive_sequence(emt, b, f, t_end).unwrap();
        let vp = bus_positive_sequence(pm, b, f, t_end).unwrap();
        worst.0 = worst.0.max((vp.norm() - ve.norm()).abs() / v_nom);
        // a de-energized bus has no angle
        if ve.norm() > 0.1 * v_nom && vp.norm() > 0.1 * v_nom {
            worst.1 = worst.1.max(((vp / rp) / (ve / re)).arg().abs().to_degrees());
        }
    }
    worst
}

#[test]
fn criterion_06_steady_state_equivalence() {
    let mut pass = true;
    let mut lines = Vec::new();
    for system in [SystemKind::Small, SystemKind::Large] {
        let def = system.build();
        for &test in system.tests() {
            let emt = run(system, test, VscModel::EmtAvg, 2e-5);
            let pm = run(system, test, VscModel::PmFull, 1e-4);
            let t_end = *pm.time.last().unwrap();
            let (dm, da) = phasor_mismatch(&emt, &pm, &def, t_end);
            let ok = dm <= 0.01 && da <= 1.0;
            pass &= ok;
            lines.push(format!("{system}/{test} {:.3}% {:.3}deg", dm * 100.0, da));
        }
    }
    verdict(6, pass, &lines.join("; "));
}

/// Events closer together than the settling allowance are one disturbance.
fn disturbance_windows(cfg: &ScenarioConfig, settle: f64, span: f64) -> Vec<(f64, f64)> {
    let times: Vec<f64> = cfg.events().iter().map(|e| e.t).collect();
    let mut out = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let next = times.get(k + 1).copied().unwrap_or(cfg.duration());
        if next - t < settle {
            continue;
        }
        out.push((t + settle, next.min(t + span)));
    }
    out
}

#[test]
fn criterion_07_transient_reconvergence() {
    let cases = [
        (SystemKind::Small, TestId::SymFault),
        (SystemKind::Small, TestId::AsymFault),
        (SystemKind::Large, TestId::AsymFault),
        (SystemKind::Large, TestId::LineOutage),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (system, test) in cases {
        let cfg = ScenarioConfig::new(system, test, VscModel::PmFull, 1e-4);
        let emt = run(system, test, VscModel::EmtAvg, 1e-5);
        let pm = run(system, test, VscModel::PmFull, 1e-4);
        for vsc in system.build().vscs.iter().map(|v| v.id.clone()) {
            let i_rated = pm.base(&format!("{vsc}.iq_pos"));
            for (t0, t1) in disturbance_windows(&cfg, 0.15, 0.5) {
                let mut worst = 0.0f64;
                for sig in ["iq_pos", "id_pos"] {
                    let name = format!("{vsc}.{sig}");
                    let (t, x) = window(&pm, &name, t0, t1);
                    for (ti, xi) in t.iter().zip(x) {
                        let e = emt.value_at(&name, *ti).unwrap();
                        worst = worst.max((xi - e).abs() / i_rated);
                    }
                }
                let ok = worst <= 0.05;
                pass &= ok;
                lines.push(format!("{system}/{test} {vsc} [{t0:.2},{t1:.2}] {:.2}%", worst * 100.0));
            }
        }
    }
    verdict(7, pass, &lines.join("; "));
}

#[test]
fn criterion_08_frequency_test() {
    let k = SystemKind::Small.build().vscs[0].params.k_droop_f_mw_per_hz * 1e6;
    let emt = run(SystemKind::Small, TestId::FreqVolt, VscModel::EmtAvg, 1e-5);
    let mut pass = true;
    let mut lines = Vec::new();
    let mut pm_runs = Vec::new();
    for m in VscModel::PHASOR {
        pm_runs.push((m, run(SystemKind::Small, TestId::FreqVolt, m, 1e-4)));
    }
    for (name, r) in std::iter::once(("emt-avg".to_string(), &emt)).chain(pm_runs.iter().map(|(m, r)| (m.to_string(), r))) {
        let p0 = mean(window(r, "VSC1.P_ac", 0.8, 1.0).1);
        let p1 = mean(window(r, "VSC1.P_ac", 3.4, 3.5).1);
        let f1 = mean(window(r, "VSC1.f", 3.4, 3.5).1);
        let df = 50.0 - f1;
        let err = ((p1 - p0) - k * df).abs() / (k * df).abs();
        let ok = f1 < 50.0 && err <= 0.02;
        pass &= ok;
        lines.push(format!("{name} f {f1:.3} Hz dP {:.3} MW vs k df {:.3} MW", (p1 - p0) / 1e6, k * df / 1e6));
    }
    let w_emt = emt.signal("SG1.omega_m").unwrap();
    for (m, r) in &pm_runs {
        let worst = r
            .time
            .iter()
            .zip(r.signal("SG1.omega_m").unwrap())
            .map(|(t, w)| (w - emt.value_at("SG1.omega_m", *t).unwrap()).abs())
            .fold(0.0, f64::max);
        let ok = worst <= 0.005;
        pass &= ok;
        lines.push(format!("{m} max |dw| {:.4}%", worst * 100.0));
        let _ = w_emt;
    }
    verdict(8, pass, &lines.join("; "));
}

fn neg_magnitude(r: &RunResult, vsc: &str) -> Vec<f64> {
    let q = r.signal(&format!("{vsc}.iq_neg")).unwrap();
    let d = r.signal(&format!("{vsc}.id_neg")).unwrap();
    let base = r.base(&format!("{vsc}.iq_neg"));
    q.iter().zip(d).map(|(a, b)| a.hypot(*b) / base).collect()
}

#[test]
fn criterion_09_negative_sequence_optimism() {
    let bound = 0.02;
    let mut pass = true;
    let mut lines = Vec::new();
    for m in VscModel::PHASOR {
        let r = run(SystemKind::Large, TestId::AsymFault, m, 1e-4);
        let peak = neg_magnitude(&r, "VSC1").into_iter().fold(0.0, f64::max);
        pass &= peak <= bound;
        lines.push(format!("{m} max |i-| {peak:.4} pu"));
    }
    let emt = run(SystemKind::Large, TestId::AsymFault, VscModel::EmtAvg, 1e-5);
    let mag = neg_magnitude(&emt, "VSC1");
    let (k_peak, peak) = mag
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
    let tail = mean(window(&emt, "VSC1.iq_neg", 7.5, 8.0).1).abs() / emt.base("VSC1.iq_neg");
    let decays = tail < bound && emt.time[k_peak] < 7.5;
    pass &= peak >= 5.0 * bound && decays;
    lines.push(format!("emt-avg peak |i-| {peak:.4} pu at {:.4} s, final {tail:.4} pu", emt.time[k_peak]));
    verdict(9, pass, &lines.join("; "));
}

#[test]
fn criterion_10_performance_scaling() {
    let wall = |dt: f64| {
        let cfg = ScenarioConfig::new(SystemKind::Small, TestId::FreqVolt, VscModel::PmI0, dt).with_stride(usize::MAX);
        (0..3)
            .map(|_| run_scenario(&cfg).unwrap().wall_clock_s)
            .fold(f64::INFINITY, f64::min)
    };
    let (w10, w100, w1000) = (wall(1e-5), wall(1e-4), wall(1e-3));
    let (r1, r2) = (w10 / w100, w10 / w1000);
    verdict(
        10,
        r1 >= 5.0 && r2 >= 30.0,
        &format!("PM I0 wall clock 10 us {w10:.3} s, 100 us {w100:.4} s ({r1:.1}x), 1 ms {w1000:.5} s ({r2:.0}x)"),
    );
}

#[test]
fn criterion_11_numerics_suite() {
    let started = std::time::Instant::now();
    let mut notes = Vec::new();

    // transform round trips
    let mut worst = 0.0f64;
    for k in 0..200 {
        let x = k as f64 * 0.37;
        let s = ThreePhaseSample::new(x.sin() * 3.0, (1.3 * x).cos() - 0.2, 0.7 * x.sin() + 0.1, 0.0);
        let th = x * 1.7 - 3.0;
        let (dq, z) = park_with_zero(&s, th);
        let back = inverse_park_with_zero(&dq, z, th, 0.0);
        for (a, b) in s.as_array().iter().zip(back.as_array()) {
            worst = worst.max((a - b).abs());
        }
        let set = ComplexPhasorSet::new(Complex64::new(x, 1.0), Complex64::new(-0.5, x), Complex64::new(0.3, -x));
        let (p, n, z0) = fortescue(&set);
        let back = inverse_fortescue(p, n, z0);
        for (a, b) in set.as_array().iter().zip(back.as_array()) {
            worst = worst.max((a - b).norm());
        }
    }
    let rt_ok = worst <= 1e-12;
    notes.push(format!("round trip {worst:.1e}"));

    // Fortescue against the textbook matrix
    let a = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let set = ComplexPhasorSet::new(Complex64::new(1.0, 0.2), Complex64::new(-0.4, 0.9), Complex64::new(0.1, -1.1));
    let (p, n, z) = fortescue(&set);
    let third = 1.0 / 3.0;
    let p_ref = (set.a + a * set.b + a * a * set.c) * third;
    let n_ref = (set.a + a * a * set.b + a * set.c) * third;
    let z_ref = (set.a + set.b + set.c) * third;
    let fort_ok = (p - p_ref).norm() < 1e-15 && (n - n_ref).norm() < 1e-15 && (z - z_ref).norm() < 1e-15;
    notes.push(format!("fortescue {fort_ok}"));

    // forward Euler on x' = -x: global error at t = 1 halves with dt
    let err = |dt: f64| {
        let n = (1.0 / dt).round() as usize;
        let mut x = StateVector::unlabeled(vec![1.0], 0.0);
        for _ in 0..n {
            x = euler_step(|v, _| vec![-v[0]], &x, dt, 1e9).unwrap();
        }
        (x.values[0] - (-1.0f64).exp()).abs()
    };
    let (e1, e2, e3) = (err(1e-2), err(5e-3), err(2.5e-3));
    let order = ((e1 / e2).log2() + (e2 / e3).log2()) / 2.0;
    let euler_ok = (order - 1.0).abs() < 0.05;
    notes.push(format!("euler order {order:.3}"));

    // DSC splits a pos+neg sequence mix after one quarter period
    let dt = 1e-5;
    let w = 2.0 * PI * 50.0;
    let (vp, vn) = (Complex64::from_polar(1.0, 0.3), Complex64::from_polar(0.25, -1.1));
    let mut dsc = Dsc::new(50.0, dt);
    let mut dsc_err = 0.0f64;
    for k in 0..4000 {
        let t = k as f64 * dt;
        let x = vp * Complex64::from_polar(1.0, w * t) + vn * Complex64::from_polar(1.0, -w * t);
        let abc = inverse_clarke(x, t);
        let (pos, neg) = dsc.push(clarke(&abc));
        if t > 0.006 {
            let ep = (pos - vp * Complex64::from_polar(1.0, w * t)).norm();
            let en = (neg - vn * Complex64::from_polar(1.0, -w * t)).norm();
            dsc_err = dsc_err.max(ep).max(en);
        }
    }
    let dsc_ok = dsc_err <= 1e-6;
    notes.push(format!("dsc {dsc_err:.1e}"));

    // RMSE hand cases
    let rmse_ok = rmse(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap() == 0.0
        && rmse(&[1.0, 1.0], &[0.0, 0.0], 1.0).unwrap() == 1.0
        && (rmse(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0], 1.0).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15;
    notes.push(format!("rmse {rmse_ok}"));

    let secs = started.elapsed().as_secs_f64();
    notes.push(format!("{secs:.2} s"));
    verdict(11, rt_ok && fort_ok && euler_ok && dsc_ok && rmse_ok && secs < 30.0, &notes.join("; "));
}
