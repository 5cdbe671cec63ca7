//! Feeder model: buses, three-phase lines, DG units, profiles and the DLC
//! event, plus per-unit conversion and scenario validation.

mod file;
mod topology;

pub use file::{greedy_profile, load_scenario, parse_scenario, save_scenario, scenario_to_string};
pub use topology::{validate_topology, Topology, TopologyError};

use crate::appliance::{ApplianceError, ApplianceKind, Household};
use crate::time::RingWindow;
use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Phase {
        Phase::ALL[i]
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

/// Which of the three conductors exist, in A, B, C order.
pub type PhaseSet = [bool; 3];

pub fn phase_set_to_string(set: &PhaseSet) -> String {
    Phase::ALL
        .iter()
        .filter(|p| set[p.index()])
        .map(|p| p.to_string())
        .collect()
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("I/O error on {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: parse error at `{field}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid {entity}: {reason}")]
    Invalid { entity: String, reason: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Appliance(#[from] ApplianceError),
    #[error("per-unit base must be positive (v = {v_kv} kV, s = {s_mva} MVA)")]
    Base { v_kv: f64, s_mva: f64 },
}

fn invalid(entity: impl Into<String>, reason: impl Into<String>) -> NetError {
    NetError::Invalid {
        entity: entity.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub phases: PhaseSet,
    pub households: Vec<(usize, Phase)>,
    pub dg: Option<usize>,
    /// Per-phase aggregated critical load (kW / kvar, or pu).
    pub critical_p: [Vec<f64>; 3],
    pub critical_q: [Vec<f64>; 3],
    /// Part of the critical load that belongs to no household.
    pub base_p: [Vec<f64>; 3],
    pub base_q: [Vec<f64>; 3],
    pub v_min: f64,
    pub v_max: f64,
}

/// Per-phase (min, max) box.
pub type FlowLimits = [(f64, f64); 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: Matrix3<f64>,
    pub x: Matrix3<f64>,
    pub p_limits: Option<FlowLimits>,
    pub q_limits: Option<FlowLimits>,
}

impl Line {
    pub fn z(&self) -> Matrix3<Complex64> {
        Matrix3::from_fn(|i, j| Complex64::new(self.r[(i, j)], self.x[(i, j)]))
    }
}

/// Quadratic cost a·P² + b·P + c per slot, with P in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    #[serde(rename = "a_per_kw2")]
    pub a: Vec<f64>,
    #[serde(rename = "b_per_kw")]
    pub b: Vec<f64>,
    #[serde(rename = "c")]
    pub c: Vec<f64>,
}

impl CostProfile {
    pub fn eval(&self, t: usize, p_kw: f64) -> f64 {
        self.a[t] * p_kw * p_kw + self.b[t] * p_kw + self.c[t]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgUnit {
    pub id: usize,
    pub bus: usize,
    pub phase: Phase,
    pub p_max: Vec<f64>,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: Option<CostProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Base {
    pub v_kv: f64,
    pub s_mva: f64,
}

impl Base {
    pub fn new(v_kv: f64, s_mva: f64) -> Result<Self, NetError> {
        if !(v_kv > 0.0 && s_mva > 0.0) {
            return Err(NetError::Base { v_kv, s_mva });
        }
        Ok(Base { v_kv, s_mva })
    }

    pub fn z_ohm(&self) -> f64 {
        self.v_kv * self.v_kv / self.s_mva
    }

    pub fn s_kva(&self) -> f64 {
        1000.0 * self.s_mva
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    /// kV, Ω, kW, kvar.
    Si,
    PerUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub dg_units: Vec<DgUnit>,
    pub v_ref: f64,
    pub base: Base,
    pub horizon: usize,
    pub dt_h: f64,
    pub units: Units,
    pub topology: Topology,
}

impl Network {
    pub fn line_phases(&self, l: usize) -> PhaseSet {
        self.buses[self.lines[l].to].phases
    }

    pub fn to_per_unit(&self) -> Result<Network, NetError> {
        if self.units == Units::PerUnit {
            return Ok(self.clone());
        }
        let b = Base::new(self.base.v_kv, self.base.s_mva)?;
        Ok(self.rescale(
            1.0 / b.z_ohm(),
            1.0 / b.s_kva(),
            1.0 / b.v_kv,
            Units::PerUnit,
        ))
    }

    pub fn from_per_unit(&self) -> Result<Network, NetError> {
        if self.units == Units::Si {
            return Ok(self.clone());
        }
        let b = Base::new(self.base.v_kv, self.base.s_mva)?;
        Ok(self.rescale(b.z_ohm(), b.s_kva(), b.v_kv, Units::Si))
    }

    fn rescale(&self, z: f64, s: f64, v: f64, units: Units) -> Network {
        let mut out = self.clone();
        out.units = units;
        out.v_ref *= v;
        let lim = |l: &Option<FlowLimits>| l.map(|arr| arr.map(|(lo, hi)| (lo * s, hi * s)));
        for line in out.lines.iter_mut() {
            line.r *= z;
            line.x *= z;
            line.p_limits = lim(&line.p_limits);
            line.q_limits = lim(&line.q_limits);
        }
        for bus in out.buses.iter_mut() {
            bus.v_min *= v;
            bus.v_max *= v;
            for ph in 0..3 {
                bus.critical_p[ph].iter_mut().for_each(|x| *x *= s);
                bus.critical_q[ph].iter_mut().for_each(|x| *x *= s);
                bus.base_p[ph].iter_mut().for_each(|x| *x *= s);
                bus.base_q[ph].iter_mut().for_each(|x| *x *= s);
            }
        }
        for dg in out.dg_units.iter_mut() {
            dg.p_max.iter_mut().for_each(|x| *x *= s);
            dg.q_min *= s;
            dg.q_max *= s;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlcEvent {
    pub window: RingWindow,
    pub s_cap_mva: f64,
}

impl DlcEvent {
    pub fn none(horizon: usize) -> Self {
        DlcEvent {
            window: RingWindow::all_day(horizon),
            s_cap_mva: f64::INFINITY,
        }
    }
}

/// Day profiles shared by all households and the PCC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    pub t_out_f: Vec<f64>,
    pub critical_shape: Vec<f64>,
    pub pv_shape: Vec<f64>,
    pub price_shape: Vec<f64>,
    pub pcc_cost: CostProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: Network,
    pub households: Vec<Household>,
    pub profiles: Profiles,
    pub dlc_event: DlcEvent,
    pub rng_seed: u64,
}

/// Fixed per-phase demand at a bus from customers outside the DLC program
/// (kW / kvar).
#[derive(Debug, Clone, PartialEq)]
pub struct BaseLoad {
    pub bus: usize,
    pub p: [Vec<f64>; 3],
    pub q: [Vec<f64>; 3],
}

/// Bus id, phases present and optional `(v_min_kv, v_max_kv)` override.
pub type BusSpec = (usize, PhaseSet, Option<(f64, f64)>);

/// Raw network pieces before aggregation and validation.
#[derive(Debug, Clone)]
pub struct NetworkParts {
    pub buses: Vec<BusSpec>,
    pub lines: Vec<Line>,
    pub base_loads: Vec<BaseLoad>,
    pub dg_units: Vec<DgUnit>,
    pub v_ref_kv: f64,
    pub v_min_kv: f64,
    pub v_max_kv: f64,
    pub s_base_mva: f64,
    pub horizon: usize,
    pub dt_h: f64,
}

impl Scenario {
    /// Assembles an SI scenario: orients lines, attaches households and DG,
    /// folds critical appliances into bus loads, and checks invariants.
    pub fn assemble(
        parts: NetworkParts,
        households: Vec<Household>,
        profiles: Profiles,
        dlc_event: DlcEvent,
        rng_seed: u64,
    ) -> Result<Scenario, NetError> {
        let t = parts.horizon;
        let n = parts.buses.len();
        if t == 0 {
            return Err(invalid("network", "horizon must be positive"));
        }
        if !(parts.dt_h > 0.0) {
            return Err(invalid("network", "dt must be positive"));
        }
        let base = Base::new(parts.v_ref_kv, parts.s_base_mva)?;
        if !(parts.v_min_kv < parts.v_ref_kv && parts.v_ref_kv < parts.v_max_kv) {
            return Err(invalid("network", "require v_min < v_ref < v_max"));
        }

        let mut slots = vec![None; n];
        for (id, phases, limits) in &parts.buses {
            if *id >= n {
                return Err(invalid(
                    format!("bus {id}"),
                    format!("ids must be 0..{}", n.saturating_sub(1)),
                ));
            }
            if slots[*id].is_some() {
                return Err(invalid(format!("bus {id}"), "duplicate bus id"));
            }
            if !phases.iter().any(|p| *p) {
                return Err(invalid(format!("bus {id}"), "no phases present"));
            }
            let (v_min, v_max) = limits.unwrap_or((parts.v_min_kv, parts.v_max_kv));
            if !(v_min < v_max) {
                return Err(invalid(format!("bus {id}"), "v_min must be below v_max"));
            }
            slots[*id] = Some(Bus {
                id: *id,
                phases: *phases,
                households: Vec::new(),
                dg: None,
                critical_p: [vec![0.0; t], vec![0.0; t], vec![0.0; t]],
                critical_q: [vec![0.0; t], vec![0.0; t], vec![0.0; t]],
                base_p: [vec![0.0; t], vec![0.0; t], vec![0.0; t]],
                base_q: [vec![0.0; t], vec![0.0; t], vec![0.0; t]],
                v_min,
                v_max,
            });
        }
        let mut buses: Vec<Bus> = slots.into_iter().map(Option::unwrap).collect();
        if buses.is_empty() {
            return Err(invalid("network", "no buses"));
        }

        let edges: Vec<(usize, usize)> = parts.lines.iter().map(|l| (l.from, l.to)).collect();
        let topology = validate_topology(n, &edges)?;
        let mut lines = parts.lines;
        for (l, line) in lines.iter_mut().enumerate() {
            if topology.reversed[l] {
                std::mem::swap(&mut line.from, &mut line.to);
            }
        }
        for line in &lines {
            let name = format!("line {}-{}", line.from, line.to);
            let (pf, pt) = (buses[line.from].phases, buses[line.to].phases);
            for ph in 0..3 {
                if pt[ph] && !pf[ph] {
                    return Err(invalid(
                        &name,
                        format!("phase {} missing upstream", Phase::from_index(ph)),
                    ));
                }
            }
            for (m, what) in [(&line.r, "R"), (&line.x, "X")] {
                if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                    return Err(invalid(&name, format!("{what} is not symmetric")));
                }
                for i in 0..3 {
                    for j in 0..3 {
                        if (!pt[i] || !pt[j]) && m[(i, j)] != 0.0 {
                            return Err(invalid(
                                &name,
                                format!("{what} has entries on an absent phase"),
                            ));
                        }
                    }
                }
            }
            for ph in 0..3 {
                if pt[ph] && !(line.r[(ph, ph)] > 0.0) {
                    return Err(invalid(
                        &name,
                        format!(
                            "R diagonal must be positive on phase {}",
                            Phase::from_index(ph)
                        ),
                    ));
                }
            }
            for lim in [&line.p_limits, &line.q_limits].into_iter().flatten() {
                if lim.iter().any(|(lo, hi)| !(lo <= hi)) {
                    return Err(invalid(&name, "flow limit with min > max"));
                }
            }
        }

        for dg in &parts.dg_units {
            let name = format!("dg {}", dg.id);
            let bus = buses
                .get_mut(dg.bus)
                .ok_or_else(|| invalid(&name, format!("unknown bus {}", dg.bus)))?;
            if dg.bus == 0 {
                return Err(invalid(&name, "bus 0 is the PCC and cannot host DG"));
            }
            if bus.dg.is_some() {
                return Err(invalid(&name, format!("bus {} already hosts a DG", dg.bus)));
            }
            if !bus.phases[dg.phase.index()] {
                return Err(invalid(&name, format!("phase {} absent at bus", dg.phase)));
            }
            if !(dg.q_min <= dg.q_max) {
                return Err(invalid(&name, "q_min exceeds q_max"));
            }
            if dg.p_max.len() != t || dg.p_max.iter().any(|p| !(*p >= 0.0)) {
                return Err(invalid(
                    &name,
                    "p_max profile must be nonnegative with length T",
                ));
            }
            if let Some(c) = &dg.cost {
                check_cost(c, t, &name)?;
            }
            bus.dg = Some(dg.id);
        }

        for load in &parts.base_loads {
            let name = format!("base load at bus {}", load.bus);
            let bus = buses
                .get_mut(load.bus)
                .ok_or_else(|| invalid(&name, "unknown bus"))?;
            if load.bus == 0 {
                return Err(invalid(&name, "bus 0 is the PCC and cannot host loads"));
            }
            for ph in 0..3 {
                if load.p[ph].len() != t || load.q[ph].len() != t {
                    return Err(invalid(&name, "series must have length T"));
                }
                if load.p[ph].iter().any(|p| !(*p >= 0.0)) {
                    return Err(invalid(&name, "active power must be nonnegative"));
                }
                let used = load.p[ph].iter().chain(&load.q[ph]).any(|v| *v != 0.0);
                if used && !bus.phases[ph] {
                    return Err(invalid(
                        &name,
                        format!("phase {} absent", Phase::from_index(ph)),
                    ));
                }
                for k in 0..t {
                    bus.base_p[ph][k] += load.p[ph][k];
                    bus.base_q[ph][k] += load.q[ph][k];
                    bus.critical_p[ph][k] += load.p[ph][k];
                    bus.critical_q[ph][k] += load.q[ph][k];
                }
            }
        }

        let mut seen_households = std::collections::BTreeSet::new();
        for h in &households {
            let name = format!("household {}", h.id);
            if !seen_households.insert(h.id) {
                return Err(invalid(&name, "duplicate household id"));
            }
            let bus = buses
                .get_mut(h.bus)
                .ok_or_else(|| invalid(&name, format!("unknown bus {}", h.bus)))?;
            if h.bus == 0 {
                return Err(invalid(&name, "bus 0 is the PCC and cannot host loads"));
            }
            if !bus.phases[h.phase.index()] {
                return Err(invalid(
                    &name,
                    format!("phase {} absent at bus {}", h.phase, h.bus),
                ));
            }
            let mut ids = std::collections::BTreeSet::new();
            for a in &h.appliances {
                if !ids.insert(a.id) {
                    return Err(invalid(&name, format!("duplicate appliance id {}", a.id)));
                }
                if a.household != h.id {
                    return Err(invalid(
                        &name,
                        format!("appliance {} owned by another household", a.id),
                    ));
                }
                if a.horizon() != t {
                    return Err(invalid(
                        &name,
                        format!("appliance {} horizon differs", a.id),
                    ));
                }
                a.validate()?;
                if let ApplianceKind::Critical { p, q } = &a.kind {
                    let ph = h.phase.index();
                    for k in 0..t {
                        bus.critical_p[ph][k] += p[k];
                        bus.critical_q[ph][k] += q[k];
                    }
                }
            }
            bus.households.push((h.id, h.phase));
        }

        let shapes = [
            (&profiles.t_out_f, "t_out_f", false),
            (&profiles.critical_shape, "critical_shape", true),
            (&profiles.pv_shape, "pv_shape", true),
            (&profiles.price_shape, "price_shape", true),
        ];
        for (v, name, unit) in shapes {
            if v.len() != t {
                return Err(invalid("profiles", format!("{name} must have length {t}")));
            }
            if unit && v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(invalid("profiles", format!("{name} must lie in [0, 1]")));
            }
        }
        check_cost(&profiles.pcc_cost, t, "pcc cost")?;
        if !dlc_event.window.is_valid(t) {
            return Err(invalid("dlc_event", "window outside horizon"));
        }
        if !(dlc_event.s_cap_mva > 0.0) {
            return Err(invalid("dlc_event", "s_cap must be positive"));
        }

        Ok(Scenario {
            network: Network {
                buses,
                lines,
                dg_units: parts.dg_units,
                v_ref: parts.v_ref_kv,
                base,
                horizon: t,
                dt_h: parts.dt_h,
                units: Units::Si,
                topology,
            },
            households,
            profiles,
            dlc_event,
            rng_seed,
        })
    }

    pub fn appliance_count(&self) -> usize {
        self.households.iter().map(|h| h.appliances.len()).sum()
    }
}

fn check_cost(c: &CostProfile, t: usize, name: &str) -> Result<(), NetError> {
    if c.a.len() != t || c.b.len() != t || c.c.len() != t {
        return Err(invalid(name, format!("cost series must have length {t}")));
    }
    if c.a.iter().any(|a| !(*a >= 0.0)) {
        return Err(invalid(
            name,
            "quadratic cost coefficient must be nonnegative",
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_bus() -> NetworkParts {
        NetworkParts {
            buses: vec![(0, [true; 3], None), (1, [true; 3], None)],
            base_loads: vec![],
            lines: vec![Line {
                from: 0,
                to: 1,
                r: Matrix3::from_diagonal_element(1.0),
                x: Matrix3::from_diagonal_element(0.5),
                p_limits: None,
                q_limits: None,
            }],
            dg_units: vec![],
            v_ref_kv: 4.16,
            v_min_kv: 4.05,
            v_max_kv: 4.37,
            s_base_mva: 1.0,
            horizon: 2,
            dt_h: 1.0,
        }
    }

    pub(crate) fn flat_profiles(t: usize) -> Profiles {
        Profiles {
            t_out_f: vec![80.0; t],
            critical_shape: vec![0.5; t],
            pv_shape: vec![0.0; t],
            price_shape: vec![1.0; t],
            pcc_cost: CostProfile {
                a: vec![0.0; t],
                b: vec![0.1; t],
                c: vec![0.0; t],
            },
        }
    }

    fn assemble(parts: NetworkParts) -> Result<Scenario, NetError> {
        let t = parts.horizon;
        Scenario::assemble(parts, vec![], flat_profiles(t), DlcEvent::none(t), 0)
    }

    #[test]
    fn per_unit_impedance() {
        let s = assemble(two_bus()).unwrap();
        let pu = s.network.to_per_unit().unwrap();
        assert!((pu.lines[0].r[(0, 0)] - 1.0 / (4.16f64 * 4.16)).abs() < 1e-15);
        assert!((pu.lines[0].r[(0, 0)] - 0.05779).abs() < 1e-5);
        assert_eq!(pu.v_ref, 1.0);
    }

    #[test]
    fn per_unit_round_trip_and_ratio() {
        let s = assemble(two_bus()).unwrap();
        let pu = s.network.to_per_unit().unwrap();
        let back = pu.from_per_unit().unwrap();
        let (a, b) = (&s.network.lines[0], &back.lines[0]);
        assert!(((a.r - b.r).amax() / a.r.amax()) < 1e-12);
        assert_eq!(
            pu.lines[0].r[(0, 0)] / pu.lines[0].x[(0, 0)],
            a.r[(0, 0)] / a.x[(0, 0)]
        );
        assert!(((back.buses[1].v_min - 4.05) / 4.05).abs() < 1e-12);
    }

    #[test]
    fn per_unit_is_idempotent_on_normalized_network() {
        let pu = assemble(two_bus()).unwrap().network.to_per_unit().unwrap();
        assert_eq!(pu.to_per_unit().unwrap(), pu);
    }

    #[test]
    fn appliance_power_in_per_unit() {
        let b = Base::new(4.16, 1.0).unwrap();
        assert!((3.5 / b.s_kva() - 0.0035).abs() < 1e-15);
    }

    #[test]
    fn bad_base_rejected() {
        assert!(matches!(Base::new(0.0, 1.0), Err(NetError::Base { .. })));
        let mut parts = two_bus();
        parts.s_base_mva = -1.0;
        assert!(assemble(parts).is_err());
    }

    #[test]
    fn duplicate_bus_rejected() {
        let mut parts = two_bus();
        parts.buses[1].0 = 0;
        match assemble(parts) {
            Err(NetError::Invalid { entity, reason }) => {
                assert_eq!(entity, "bus 0");
                assert!(reason.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn asymmetric_impedance_rejected() {
        let mut parts = two_bus();
        parts.lines[0].x[(0, 1)] = 0.1;
        assert!(assemble(parts).is_err());
    }

    #[test]
    fn reversed_line_is_oriented() {
        let mut parts = two_bus();
        parts.lines[0].from = 1;
        parts.lines[0].to = 0;
        let s = assemble(parts).unwrap();
        assert_eq!((s.network.lines[0].from, s.network.lines[0].to), (0, 1));
    }
}
