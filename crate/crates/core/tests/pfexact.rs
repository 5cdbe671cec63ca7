mod common;

use dlc_core::distflow::{linearize, OperatingPoint, Var, VarIndex};
use dlc_core::netmodel::{DlcEvent, Phase};
use dlc_core::pfexact::{solve_pf, PfOptions};
use dlc_core::testing;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random tree on `n` buses; some laterals drop to one or two phases.
#[test]
fn sweep_agrees_with_zbus_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..10 {
        let n = rng.gen_range(2..=10);
        let net = common::networks::random_network(&mut rng, n);
        let load = common::networks::random_loads(&mut rng, &net, 0.02);
        let sweep = solve_pf(&net, &load, &PfOptions::default()).unwrap();
        let oracle = common::zbus::solve(&net, &load, 1e-13, 500);
        for b in 0..n {
            for ph in 0..3 {
                let d = (sweep.voltage[b][ph] - oracle[b][ph]).norm();
                assert!(d < 1e-6, "case {case} bus {b} phase {ph}: {d:.2e}");
            }
        }
    }
}

#[test]
fn relabelling_buses_does_not_change_voltages() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let parents = [0, 1, 1, 0, 4, 2];
    let z: Vec<_> = (0..6)
        .map(|_| testing::coupled(rng.gen_range(0.1..0.5), 0.2, 0.3))
        .collect();
    let parts = testing::feeder(&parents, &z, 1);
    let net = testing::scenario(parts.clone(), vec![], DlcEvent::none(1))
        .network
        .to_per_unit()
        .unwrap();
    let load = common::networks::random_loads(&mut rng, &net, 0.03);
    let base = solve_pf(&net, &load, &PfOptions::default()).unwrap();

    // permutation fixing the root; lines listed in reverse order and reversed direction
    let perm = [0, 5, 3, 6, 1, 2, 4];
    let mut shuffled = parts.clone();
    for line in shuffled.lines.iter_mut() {
        let (f, t) = (perm[line.from], perm[line.to]);
        line.from = t;
        line.to = f;
    }
    shuffled.lines.reverse();
    let net2 = testing::scenario(shuffled, vec![], DlcEvent::none(1))
        .network
        .to_per_unit()
        .unwrap();
    let mut load2 = load.clone();
    for b in 0..7 {
        load2[perm[b]] = load[b];
    }
    let other = solve_pf(&net2, &load2, &PfOptions::default()).unwrap();
    for b in 0..7 {
        for ph in 0..3 {
            assert!((base.voltage[b][ph] - other.voltage[perm[b]][ph]).norm() < 1e-10);
        }
    }
}

#[test]
fn load_scaling_lowers_minimum_voltage() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = common::networks::random_network(&mut rng, 8);
    let load: Vec<_> = common::networks::random_loads(&mut rng, &net, 0.01)
        .into_iter()
        .map(|s| s.map(|c| Complex64::new(c.re.abs(), c.im.abs())))
        .collect();
    let vmin = |k: f64| {
        let l: Vec<_> = load.iter().map(|s| s.map(|c| c * k)).collect();
        let st = solve_pf(&net, &l, &PfOptions::default()).unwrap();
        st.voltage
            .iter()
            .flatten()
            .filter(|c| c.norm() > 0.0)
            .map(|c| c.norm())
            .fold(f64::INFINITY, f64::min)
    };
    for _ in 0..10 {
        let a = rng.gen_range(0.1..3.0);
        let b = a + rng.gen_range(0.05..1.0);
        assert!(vmin(b) < vmin(a), "scales {a} < {b}");
    }
}

#[test]
fn linear_model_at_flat_point_tracks_exact_voltages() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let net = common::networks::random_network(&mut rng, 8);
        let load = common::networks::random_loads(&mut rng, &net, 0.003);
        let op = OperatingPoint::flat(&net);
        let mut idx = VarIndex::new();
        idx.push_network(&net, 0);
        let mut net_fixed = net.clone();
        for (b, bus) in net_fixed.buses.iter_mut().enumerate() {
            for ph in 0..3 {
                bus.critical_p[ph][0] = load[b][ph].re;
                bus.critical_q[ph][0] = load[b][ph].im;
            }
        }
        let rows = linearize(&op, &net_fixed, &[], &idx, 0).unwrap().eq;
        let n = idx.len();
        assert_eq!(rows.len(), n);
        let mut a = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for (r, row) in rows.iter().enumerate() {
            for &(k, c) in &row.terms {
                a[(r, k)] += c;
            }
            rhs[r] = row.rhs;
        }
        let x = a.lu().solve(&rhs).unwrap();
        let exact = solve_pf(&net, &load, &PfOptions::default()).unwrap();
        for (b, bus) in net.buses.iter().enumerate() {
            for ph in Phase::ALL {
                if !bus.phases[ph.index()] {
                    continue;
                }
                let lin = x[idx
                    .get(&Var::BusV {
                        bus: b,
                        phase: ph,
                        t: 0,
                    })
                    .unwrap()];
                let ex = exact.voltage[b][ph.index()].norm_sqr();
                assert!(
                    (lin - ex).abs() <= 0.005 * net.v_ref * net.v_ref,
                    "bus {b} {ph}: {lin} vs {ex}"
                );
            }
        }
    }
}
