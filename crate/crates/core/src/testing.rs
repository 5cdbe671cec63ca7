//! Small programmatic scenarios for examples and tests.

use crate::appliance::{Appliance, ApplianceKind, Household, Thermal};
use crate::netmodel::{
    CostProfile, DgUnit, DlcEvent, Line, NetworkParts, Phase, Profiles, Scenario,
};
use crate::time::RingWindow;
use nalgebra::Matrix3;

/// Coupled 3×3 impedance: `r`, `x` on the diagonal, `mutual` times that
/// off the diagonal.
pub fn coupled(r: f64, x: f64, mutual: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let m = |d: f64| Matrix3::from_fn(|i, j| if i == j { d } else { mutual * d });
    (m(r), m(x))
}

/// Radial feeder where bus `k + 1` hangs off `parents[k]`.
pub fn feeder(
    parents: &[usize],
    z: &[(Matrix3<f64>, Matrix3<f64>)],
    horizon: usize,
) -> NetworkParts {
    assert_eq!(parents.len(), z.len());
    NetworkParts {
        buses: (0..=parents.len()).map(|b| (b, [true; 3], None)).collect(),
        lines: parents
            .iter()
            .zip(z)
            .enumerate()
            .map(|(k, (&p, (r, x)))| Line {
                from: p,
                to: k + 1,
                r: *r,
                x: *x,
                p_limits: None,
                q_limits: None,
            })
            .collect(),
        base_loads: vec![],
        dg_units: vec![],
        v_ref_kv: 4.16,
        v_min_kv: 4.05,
        v_max_kv: 4.37,
        s_base_mva: 1.0,
        horizon,
        dt_h: 1.0,
    }
}

pub fn flat_profiles(horizon: usize, t_out: f64) -> Profiles {
    Profiles {
        t_out_f: vec![t_out; horizon],
        critical_shape: vec![1.0; horizon],
        pv_shape: vec![0.0; horizon],
        price_shape: vec![1.0; horizon],
        pcc_cost: CostProfile {
            a: vec![1e-5; horizon],
            b: vec![0.05; horizon],
            c: vec![0.0; horizon],
        },
    }
}

pub fn critical(id: usize, household: usize, p: Vec<f64>, eta: f64) -> Appliance {
    let q = p
        .iter()
        .map(|x| x * crate::appliance::pf_ratio(eta).unwrap())
        .collect();
    Appliance {
        id,
        household,
        name: "base".into(),
        eta,
        p_min: p.clone(),
        p_max: p.clone(),
        window: RingWindow::all_day(p.len()),
        utility_weight: 0.0,
        kind: ApplianceKind::Critical { p, q },
    }
}

pub fn interruptible(
    id: usize,
    household: usize,
    horizon: usize,
    p_max: f64,
    p_pref: f64,
    b: f64,
) -> Appliance {
    Appliance {
        id,
        household,
        name: "lighting".into(),
        kind: ApplianceKind::Interruptible {
            p_pref: vec![p_pref; horizon],
        },
        eta: 0.9,
        p_min: vec![0.0; horizon],
        p_max: vec![p_max; horizon],
        window: RingWindow::all_day(horizon),
        utility_weight: b,
    }
}

pub fn air_conditioner(id: usize, household: usize, t_out: &[f64], beta: f64, b: f64) -> Appliance {
    let h = t_out.len();
    Appliance {
        id,
        household,
        name: "ac".into(),
        kind: ApplianceKind::Thermostatic(Thermal {
            alpha: 0.9,
            beta,
            t_conf: vec![75.0; h],
            t_min: vec![70.0; h],
            t_max: vec![79.0; h],
            t_out: t_out.to_vec(),
            t_init: 75.0,
        }),
        eta: 0.85,
        p_min: vec![0.0; h],
        p_max: vec![3.5; h],
        window: RingWindow::all_day(h),
        utility_weight: b,
    }
}

/// A household per (bus, phase) pair with a critical base load and an
/// interruptible appliance.
pub fn households_at(
    placements: &[(usize, Phase)],
    horizon: usize,
    base_kw: f64,
    flex_kw: f64,
) -> Vec<Household> {
    placements
        .iter()
        .enumerate()
        .map(|(id, &(bus, phase))| Household {
            id,
            bus,
            phase,
            appliances: vec![
                critical(0, id, vec![base_kw; horizon], 0.9),
                interruptible(1, id, horizon, flex_kw, flex_kw, 1.0),
            ],
        })
        .collect()
}

pub fn pv(id: usize, bus: usize, phase: Phase, p_kw: Vec<f64>, q_kvar: f64) -> DgUnit {
    DgUnit {
        id,
        bus,
        phase,
        p_max: p_kw,
        q_min: -q_kvar,
        q_max: q_kvar,
        cost: None,
    }
}

pub fn scenario(parts: NetworkParts, households: Vec<Household>, event: DlcEvent) -> Scenario {
    let t = parts.horizon;
    Scenario::assemble(parts, households, flat_profiles(t, 75.0), event, 0)
        .expect("toy scenario must be valid")
}

/// Path feeder 0-1-…-n with coupled lines and one household of each phase
/// at every load bus.
pub fn path_scenario(n: usize, horizon: usize, base_kw: f64, flex_kw: f64) -> Scenario {
    let parents: Vec<usize> = (0..n).collect();
    let z: Vec<_> = (0..n)
        .map(|k| coupled(0.3 + 0.05 * k as f64, 0.2, 0.3))
        .collect();
    let placements: Vec<(usize, Phase)> =
        (1..=n).flat_map(|b| Phase::ALL.map(|p| (b, p))).collect();
    scenario(
        feeder(&parents, &z, horizon),
        households_at(&placements, horizon, base_kw, flex_kw),
        DlcEvent::none(horizon),
    )
}

/// Sets every line resistance and reactance to zero after validation.
pub fn make_lossless(s: &mut Scenario) {
    for line in s.network.lines.iter_mut() {
        line.r = Matrix3::zeros();
        line.x = Matrix3::zeros();
    }
}

/// Deferrable appliance with energy fixed at `energy_kwh` and the greedy
/// preferred profile.
pub fn deferrable(
    id: usize,
    household: usize,
    horizon: usize,
    window: RingWindow,
    p_max: f64,
    energy_kwh: f64,
    b: f64,
) -> Appliance {
    let mask = window.mask(horizon);
    let cap: Vec<f64> = mask
        .iter()
        .map(|&on| if on { p_max } else { 0.0 })
        .collect();
    Appliance {
        id,
        household,
        name: "washer".into(),
        kind: ApplianceKind::Deferrable {
            e_min: energy_kwh,
            e_max: energy_kwh,
            p_pref: crate::netmodel::greedy_profile(&window, &cap, energy_kwh, 1.0),
        },
        eta: 0.85,
        p_min: vec![0.0; horizon],
        p_max: cap,
        window,
        utility_weight: b,
    }
}
