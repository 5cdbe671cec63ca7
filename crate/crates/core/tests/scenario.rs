use dlc_core::appliance::ApplianceKind;
use dlc_core::netmodel::{parse_scenario, scenario_to_string};
use dlc_core::scenario::{generate, synth_profiles, ScenarioSpec, SpecError};

fn spec(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        rng_seed: seed,
        ..ScenarioSpec::default()
    }
}

#[test]
fn same_seed_gives_identical_scenario_files() {
    let a = scenario_to_string(&generate(&spec(1)).unwrap());
    let b = scenario_to_string(&generate(&spec(1)).unwrap());
    assert_eq!(a, b);
    let c = scenario_to_string(&generate(&spec(2)).unwrap());
    assert_ne!(a, c);
}

#[test]
fn default_feeder_has_fifteen_households_on_nine_buses() {
    let scn = generate(&spec(42)).unwrap();
    assert_eq!(scn.households.len(), 135);
    for bus in 1..=9 {
        assert_eq!(scn.households.iter().filter(|h| h.bus == bus).count(), 15);
    }
    assert_eq!(scn.network.buses.len(), 10);
}

#[test]
fn washer_windows_are_two_slots_inside_evening() {
    for seed in 0..5 {
        let scn = generate(&spec(seed)).unwrap();
        for h in &scn.households {
            let w = h.appliances.iter().find(|a| a.name == "washer").unwrap();
            assert_eq!(w.window.len(24), 2, "{w}");
            assert!(
                w.window.first >= 18 && w.window.last <= 21,
                "{w}: {:?}",
                w.window
            );
        }
    }
}

#[test]
fn mean_power_factor_is_centred() {
    let mut etas = Vec::new();
    let mut seed = 0;
    while etas.len() < 1000 {
        let scn = generate(&spec(seed)).unwrap();
        etas.extend(
            scn.households
                .iter()
                .flat_map(|h| h.appliances.iter().map(|a| a.eta)),
        );
        seed += 1;
    }
    etas.truncate(1000);
    assert!(etas.iter().all(|e| (0.8..=0.9).contains(e)));
    let mean = etas.iter().sum::<f64>() / etas.len() as f64;
    assert!((0.845..=0.855).contains(&mean), "mean η {mean}");
}

#[test]
fn default_profiles_have_expected_shape() {
    let p = synth_profiles(&ScenarioSpec::default());
    assert_eq!(p.t_out_f.len(), 24);
    for (t, s) in p.pv_shape.iter().enumerate() {
        let label = t + 1;
        if !(6..=19).contains(&label) {
            assert_eq!(*s, 0.0, "PV at label {label}");
        }
    }
    let hottest = p
        .t_out_f
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0
        + 1;
    assert!(
        (14..=16).contains(&hottest),
        "T_out peaks at label {hottest}"
    );
    for shape in [&p.critical_shape, &p.pv_shape, &p.price_shape] {
        assert!(shape.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}

#[test]
fn file_round_trip_is_byte_identical() {
    let scn = generate(&spec(7)).unwrap();
    let text = scenario_to_string(&scn);
    let back = parse_scenario(&text, "memory").unwrap();
    assert_eq!(scenario_to_string(&back), text);

    let spec_text = spec(7).to_json();
    let again = generate(&ScenarioSpec::from_json(&spec_text, "memory").unwrap()).unwrap();
    assert_eq!(scenario_to_string(&again), text);
}

#[test]
fn bounds_vanish_outside_work_windows() {
    let scn = generate(&spec(3)).unwrap();
    for a in scn.households.iter().flat_map(|h| &h.appliances) {
        if matches!(a.kind, ApplianceKind::Critical { .. }) {
            continue;
        }
        for t in 0..24 {
            if !a.window.contains_label(t + 1) {
                assert_eq!(
                    (a.p_min[t], a.p_max[t]),
                    (0.0, 0.0),
                    "{a} at label {}",
                    t + 1
                );
            }
        }
    }
}

#[test]
fn unknown_spec_fields_are_rejected_with_their_path() {
    let err = ScenarioSpec::from_json(r#"{"feeder": {"bogus": 1}}"#, "inline").unwrap_err();
    match err {
        SpecError::Parse { path, .. } => assert!(path.starts_with("feeder"), "{path}"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn base_loads_follow_the_critical_shape() {
    let s = spec(0);
    let scn = generate(&s).unwrap();
    let shape = synth_profiles(&s).critical_shape;
    for l in &s.feeder.base_loads {
        let bus = &scn.network.buses[l.bus];
        for ph in 0..3 {
            for t in 0..24 {
                assert!((bus.base_p[ph][t] - l.p_kw / 3.0 * shape[t]).abs() < 1e-12);
                assert!((bus.base_q[ph][t] - l.q_kvar / 3.0 * shape[t]).abs() < 1e-12);
            }
        }
    }
}
