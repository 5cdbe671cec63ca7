use dlc_core::appliance::{check_schedule, Household};
use dlc_core::distflow::OperatingPoint;
use dlc_core::netmodel::{DlcEvent, Phase, Scenario};
use dlc_core::optimizer::{
    baseline_conventional, baseline_wo_dlc, build_problem, pcc_cap_cuts, solve_dlc, solve_qp, Cut,
    CutOutcome, DlcOptions, NetworkModel, ObjectiveSpec, QpOptions,
};
use dlc_core::pfexact::pcc_magnitude;
use dlc_core::testing;
use dlc_core::time::RingWindow;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn single_interruptible(p_max: f64, p_pref: f64) -> Scenario {
    let parts = testing::feeder(&[0], &[testing::coupled(0.2, 0.1, 0.0)], 1);
    let hh = vec![Household {
        id: 0,
        bus: 1,
        phase: Phase::A,
        appliances: vec![testing::interruptible(0, 0, 1, p_max, p_pref, 1.0)],
    }];
    testing::scenario(parts, hh, DlcEvent::none(1))
}

fn free_objective() -> ObjectiveSpec {
    ObjectiveSpec {
        kappa: 1.0,
        cost_scale: 0.0,
        dg_q_cost: 0.0,
    }
}

#[test]
fn lone_interruptible_settles_at_clipped_preference() {
    for (p_max, pref, want) in [(1.0, 0.6, 0.6), (0.4, 0.6, 0.4)] {
        let mut scn = single_interruptible(p_max, pref);
        if let dlc_core::appliance::ApplianceKind::Interruptible { p_pref } =
            &mut scn.households[0].appliances[0].kind
        {
            p_pref[0] = pref;
        }
        let sol = solve_dlc(&scn, &free_objective(), &DlcOptions::default()).unwrap();
        assert!((sol.schedule.appliances[0][0].p[0] - want).abs() < 1e-6);
    }
}

/// Four-bus feeder, 8 slots, with AC, interruptible and deferrable loads
/// on every phase and a PV at bus 2.
pub fn toy(cap_mva: f64) -> Scenario {
    let h = 8;
    let parents = [0, 1, 2];
    let z: Vec<_> = (0..3)
        .map(|k| testing::coupled(0.4 + 0.1 * k as f64, 0.3, 0.3))
        .collect();
    let mut parts = testing::feeder(&parents, &z, h);
    parts.dg_units.push(testing::pv(
        0,
        2,
        Phase::B,
        vec![0.0, 0.0, 20.0, 40.0, 40.0, 20.0, 0.0, 0.0],
        20.0,
    ));
    let t_out: Vec<f64> = (0..h)
        .map(|t| 78.0 + 2.0 * (t as f64 * 0.8).sin())
        .collect();
    let mut households = Vec::new();
    for bus in 1..=3 {
        for phase in Phase::ALL {
            let id = households.len();
            households.push(Household {
                id,
                bus,
                phase,
                appliances: vec![
                    testing::critical(0, id, vec![6.0 + bus as f64; h], 0.9),
                    testing::air_conditioner(1, id, &t_out, -6.0, 1.0),
                    testing::interruptible(2, id, h, 1.0, 0.8, 2.0),
                    testing::deferrable(3, id, h, RingWindow::new(4 + (id % 3), 8), 0.7, 0.9, 1.0),
                ],
            });
        }
    }
    let event = DlcEvent {
        window: RingWindow::new(5, 8),
        s_cap_mva: cap_mva,
    };
    testing::scenario(parts, households, event)
}

#[test]
fn variable_count_matches_construction() {
    let scn = toy(f64::INFINITY);
    let net = scn.network.to_per_unit().unwrap();
    let op = OperatingPoint::flat(&net);
    let p = build_problem(
        &scn,
        &net,
        &ObjectiveSpec::default(),
        NetworkModel::Linearized(&op),
    )
    .unwrap();
    let h = net.horizon;
    let mut expected = (net.dg_units.len() + 3 * net.buses.len() + 6 * net.lines.len()) * h;
    for hh in &scn.households {
        for a in &hh.appliances {
            if a.is_critical() {
                continue;
            }
            expected += 2 * a.window.len(h);
            if matches!(a.kind, dlc_core::appliance::ApplianceKind::Thermostatic(_)) {
                expected += h;
            }
        }
    }
    assert_eq!(p.qp.n, expected);
}

#[test]
fn objective_hessian_is_positive_semidefinite() {
    let scn = toy(0.05);
    let net = scn.network.to_per_unit().unwrap();
    let op = OperatingPoint::flat(&net);
    let p = build_problem(
        &scn,
        &net,
        &ObjectiveSpec::default(),
        NetworkModel::Linearized(&op),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let v: Vec<f64> = (0..p.qp.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        // the stored objective is minimized, so the maximized one has −P
        assert!(-p.qp.hessian_quadratic_form(&v) / norm2 <= 1e-9);
    }
}

#[test]
fn without_event_or_costs_matches_comfort_baseline() {
    let mut scn = toy(f64::INFINITY);
    for bus in scn.network.buses.iter_mut() {
        bus.v_min = 0.5;
        bus.v_max = 10.0;
    }
    let sol = solve_dlc(&scn, &free_objective(), &DlcOptions::default()).unwrap();
    let base = baseline_wo_dlc(&scn);
    for (hi, hh) in scn.households.iter().enumerate() {
        for (ai, a) in hh.appliances.iter().enumerate() {
            if matches!(
                a.kind,
                dlc_core::appliance::ApplianceKind::Deferrable { .. }
            ) {
                continue;
            }
            let got = &sol.schedule.appliances[hi][ai].p;
            let want = &base.appliances[hi][ai].p;
            for t in 0..got.len() {
                assert!(
                    (got[t] - want[t]).abs() < 1e-4,
                    "{hi}/{ai} t={t}: {} vs {}",
                    got[t],
                    want[t]
                );
            }
        }
    }
}

#[test]
fn schedules_respect_appliance_models() {
    let scn = toy(0.05);
    let sol = solve_dlc(&scn, &ObjectiveSpec::default(), &DlcOptions::default()).unwrap();
    assert!(sol.residuals.max() <= 1e-6);
    for (hi, hh) in scn.households.iter().enumerate() {
        for (ai, a) in hh.appliances.iter().enumerate() {
            let s = &sol.schedule.appliances[hi][ai];
            assert!(check_schedule(a, s, 1.0) <= 1e-6);
            if !a.is_critical() {
                for t in 0..s.p.len() {
                    assert!((s.q[t] - s.p[t] * a.pf_ratio()).abs() <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn cap_holds_in_simulation() {
    let scn = toy(0.05);
    let sol = solve_dlc(&scn, &ObjectiveSpec::default(), &DlcOptions::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.cuts > 0);
    for t in scn.dlc_event.window.indices(8) {
        assert!(
            sol.simulation.pcc_mva[t] <= 0.05 * 1.005,
            "t={t}: {}",
            sol.simulation.pcc_mva[t]
        );
    }
}

/// Cutting-plane loop on one fixed linearization; returns the minimized
/// objective after each solve, the final primal point and the cuts used.
fn cut_sequence(scn: &Scenario, objective: &ObjectiveSpec) -> (Vec<f64>, Vec<f64>, Vec<Cut>) {
    let net = scn.network.to_per_unit().unwrap();
    let op = OperatingPoint::flat(&net);
    let mut p = build_problem(scn, &net, objective, NetworkModel::Linearized(&op)).unwrap();
    let cap = scn.dlc_event.s_cap_mva;
    let mut values = Vec::new();
    let mut all = Vec::new();
    loop {
        let sol = solve_qp(&p.qp, &QpOptions::default()).unwrap();
        values.push(sol.objective);
        let z: Vec<[f64; 6]> = (0..net.horizon).map(|t| p.pcc_value(&sol.x, t)).collect();
        match pcc_cap_cuts(&z, &scn.dlc_event, cap) {
            CutOutcome::Satisfied => return (values, sol.x, all),
            CutOutcome::Cuts(cuts) => {
                for c in cuts {
                    all.push(c.clone());
                    p.add_cut(&c, cap, all.len());
                }
            }
        }
        assert!(values.len() < 60);
    }
}

/// One QP at the flat point with a fixed set of cuts.
fn solve_with(scn: &Scenario, objective: &ObjectiveSpec, cuts: &[Cut]) -> Vec<f64> {
    let net = scn.network.to_per_unit().unwrap();
    let op = OperatingPoint::flat(&net);
    let mut p = build_problem(scn, &net, objective, NetworkModel::Linearized(&op)).unwrap();
    for (k, c) in cuts.iter().enumerate() {
        p.add_cut(c, scn.dlc_event.s_cap_mva, k + 1);
    }
    solve_qp(&p.qp, &QpOptions::default()).unwrap().x
}

#[test]
fn adding_cuts_never_improves_objective() {
    let (values, _, _) = cut_sequence(&toy(0.049), &ObjectiveSpec::default());
    assert!(values.len() > 2);
    for w in values.windows(2) {
        // minimization form: restricting the feasible set cannot lower it
        assert!(
            w[1] >= w[0] - 1e-7 * w[0].abs().max(1.0),
            "{} then {}",
            w[0],
            w[1]
        );
    }
}

#[test]
fn scaling_utility_and_cost_together_keeps_the_schedule() {
    let scn = toy(0.05);
    // same feasible set for both: cuts placed at slightly different points
    // would move the optimum along the cap surface by O(√tolerance)
    let (_, a, cuts) = cut_sequence(&scn, &ObjectiveSpec::default());
    let scaled = ObjectiveSpec {
        kappa: 3.5,
        cost_scale: 3.5,
        ..ObjectiveSpec::default()
    };
    let b = solve_with(&scn, &scaled, &cuts);
    for (xa, xb) in a.iter().zip(&b) {
        assert!((xa - xb).abs() <= 1e-6 * (1.0 + xa.abs()), "{xa} vs {xb}");
    }
}

#[test]
fn lossless_network_makes_both_policies_agree() {
    let mut scn = toy(0.05);
    testing::make_lossless(&mut scn);
    // zero impedance leaves a flat profile, keep the voltage rows slack
    let opts = DlcOptions::default();
    let prop = solve_dlc(&scn, &ObjectiveSpec::default(), &opts);
    let conv = baseline_conventional(&scn, &ObjectiveSpec::default(), &opts).unwrap();
    let _ = prop.as_ref().map(|_| ());
    let prop = prop.unwrap();
    let net = scn.network.to_per_unit().unwrap();
    for t in 0..8 {
        let a = pcc_magnitude(&net, &prop.simulation.states[t]);
        let b = pcc_magnitude(&net, &conv.simulation.states[t]);
        assert!((a - b).abs() < 1e-4, "t={t}: {a} vs {b}");
    }
}

#[test]
fn comfort_baseline_closed_forms() {
    let h = 24;
    let parts = testing::feeder(&[0], &[testing::coupled(0.2, 0.1, 0.0)], h);
    let mut ac = testing::air_conditioner(0, 0, &vec![75.0; h], -6.0, 1.0);
    if let dlc_core::appliance::ApplianceKind::Thermostatic(th) = &mut ac.kind {
        th.t_init = 75.0;
    }
    let washer = testing::deferrable(1, 0, h, RingWindow::new(19, 20), 0.7, 0.9, 1.0);
    let mut dryer = testing::deferrable(2, 0, h, RingWindow::new(21, 24), 5.0, 9.0, 1.0);
    dryer.name = "dryer".into();
    let hh = vec![Household {
        id: 0,
        bus: 1,
        phase: Phase::A,
        appliances: vec![ac, washer, dryer],
    }];
    let scn = testing::scenario(parts, hh, DlcEvent::none(h));
    let s = baseline_wo_dlc(&scn);
    assert!(s.appliances[0][0].p.iter().all(|p| p.abs() < 1e-12));
    let w = &s.appliances[0][1].p;
    assert!((w[18] - 0.7).abs() < 1e-12 && (w[19] - 0.2).abs() < 1e-12);
    let d = &s.appliances[0][2].p;
    assert!((d[20] - 5.0).abs() < 1e-12 && (d[21] - 4.0).abs() < 1e-12 && d[22] == 0.0);
}

#[test]
fn qp_options_are_forwarded() {
    let scn = toy(0.05);
    let opts = DlcOptions {
        qp: QpOptions {
            max_iter: 1,
            ..QpOptions::default()
        },
        ..DlcOptions::default()
    };
    assert!(solve_dlc(&scn, &ObjectiveSpec::default(), &opts).is_err());
    let _ = solve_qp;
}
