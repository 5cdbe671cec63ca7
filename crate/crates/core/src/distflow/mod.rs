//! Linearized three-phase DistFlow rows.
//!
//! All electrical quantities are per-unit; appliance and DG variables stay
//! in kW/kvar and enter the network rows scaled by 1/S_base.

mod terms;

pub use terms::{Branch, LossJacobian, LossTerms, ZeroVoltage};

use crate::appliance::{ApplianceKind, Household};
use crate::netmodel::{Network, Phase, Units};
use num_complex::Complex64;
use std::collections::HashMap;
use std::fmt;

/// Nominal balanced phasors 1∠{0°, −120°, 120°}.
pub fn nominal_phasors() -> [Complex64; 3] {
    let a = 2.0 * std::f64::consts::PI / 3.0;
    [
        Complex64::from_polar(1.0, 0.0),
        Complex64::from_polar(1.0, -a),
        Complex64::from_polar(1.0, a),
    ]
}

/// Network quantities at one time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    /// Squared voltage magnitudes per bus (pu²).
    pub v: Vec<[f64; 3]>,
    /// Sending-end flows per line (pu).
    pub p: Vec<[f64; 3]>,
    pub q: Vec<[f64; 3]>,
    /// Net consumption per bus (pu), loads minus generation.
    pub p_inj: Vec<[f64; 3]>,
    pub q_inj: Vec<[f64; 3]>,
}

impl NetworkState {
    pub fn zeros(buses: usize, lines: usize) -> Self {
        NetworkState {
            v: vec![[0.0; 3]; buses],
            p: vec![[0.0; 3]; lines],
            q: vec![[0.0; 3]; lines],
            p_inj: vec![[0.0; 3]; buses],
            q_inj: vec![[0.0; 3]; buses],
        }
    }
}

/// Expansion point for one slot: complex bus voltages and sending-end
/// line flows. The voltage angles set the phase rotation of the mutual
/// impedances; magnitudes give v⁰.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingSlice {
    pub voltage: Vec<[Complex64; 3]>,
    pub p: Vec<[f64; 3]>,
    pub q: Vec<[f64; 3]>,
}

impl OperatingSlice {
    pub fn v(&self, bus: usize) -> [f64; 3] {
        self.voltage[bus].map(|c| c.norm_sqr())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub slices: Vec<OperatingSlice>,
}

impl OperatingPoint {
    /// Balanced unit voltages and zero flow at every slot.
    pub fn flat(net: &Network) -> Self {
        let nominal = nominal_phasors();
        let slice = OperatingSlice {
            voltage: net
                .buses
                .iter()
                .map(|b| {
                    std::array::from_fn(|k| {
                        if b.phases[k] {
                            nominal[k]
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                })
                .collect(),
            p: vec![[0.0; 3]; net.lines.len()],
            q: vec![[0.0; 3]; net.lines.len()],
        };
        OperatingPoint {
            slices: vec![slice; net.horizon],
        }
    }
}

/// Evaluates the branch terms of line `l` at slot `t`.
pub fn loss_terms(
    op: &OperatingPoint,
    net: &Network,
    l: usize,
    t: usize,
) -> Result<LossTerms, ZeroVoltage> {
    let s = &op.slices[t];
    Ok(branch(op, net, l, t)?.terms(&s.p[l], &s.q[l]))
}

fn branch(op: &OperatingPoint, net: &Network, l: usize, t: usize) -> Result<Branch, ZeroVoltage> {
    let line = &net.lines[l];
    Branch::new(
        line.z(),
        op.slices[t].voltage[line.from],
        net.line_phases(l),
    )
}

/// Decision variable identity. Household and appliance fields are
/// positions in the scenario's household list; `line` and `bus` are
/// network indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    ApplianceP {
        h: usize,
        a: usize,
        t: usize,
    },
    ApplianceQ {
        h: usize,
        a: usize,
        t: usize,
    },
    IndoorTemp {
        h: usize,
        a: usize,
        t: usize,
    },
    DgQ {
        dg: usize,
        t: usize,
    },
    LineP {
        line: usize,
        phase: Phase,
        t: usize,
    },
    LineQ {
        line: usize,
        phase: Phase,
        t: usize,
    },
    BusV {
        bus: usize,
        phase: Phase,
        t: usize,
    },
    /// Aggregate per-phase demand used by the lossless baseline.
    TotalP {
        phase: Phase,
        t: usize,
    },
    TotalQ {
        phase: Phase,
        t: usize,
    },
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Var::ApplianceP { h, a, t } => write!(f, "p[household={h},appliance={a},t={}]", t + 1),
            Var::ApplianceQ { h, a, t } => write!(f, "q[household={h},appliance={a},t={}]", t + 1),
            Var::IndoorTemp { h, a, t } => {
                write!(f, "t_in[household={h},appliance={a},t={}]", t + 1)
            }
            Var::DgQ { dg, t } => write!(f, "q_dg[dg={dg},t={}]", t + 1),
            Var::LineP { line, phase, t } => write!(f, "P[line={line},phase={phase},t={}]", t + 1),
            Var::LineQ { line, phase, t } => write!(f, "Q[line={line},phase={phase},t={}]", t + 1),
            Var::BusV { bus, phase, t } => write!(f, "v[bus={bus},phase={phase},t={}]", t + 1),
            Var::TotalP { phase, t } => write!(f, "p_total[phase={phase},t={}]", t + 1),
            Var::TotalQ { phase, t } => write!(f, "q_total[phase={phase},t={}]", t + 1),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VarIndex {
    vars: Vec<Var>,
    map: HashMap<Var, usize>,
}

impl VarIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `v`; panics on duplicates since that is a builder bug.
    pub fn push(&mut self, v: Var) -> usize {
        let k = self.vars.len();
        let prev = self.map.insert(v, k);
        assert!(prev.is_none(), "variable {v} registered twice");
        self.vars.push(v);
        k
    }

    pub fn get(&self, v: &Var) -> Option<usize> {
        self.map.get(v).copied()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Registers flow and voltage variables for all present phases.
    pub fn push_network(&mut self, net: &Network, t: usize) {
        for l in 0..net.lines.len() {
            for ph in Phase::ALL {
                if net.line_phases(l)[ph.index()] {
                    self.push(Var::LineP {
                        line: l,
                        phase: ph,
                        t,
                    });
                    self.push(Var::LineQ {
                        line: l,
                        phase: ph,
                        t,
                    });
                }
            }
        }
        for (b, bus) in net.buses.iter().enumerate() {
            for ph in Phase::ALL {
                if bus.phases[ph.index()] {
                    self.push(Var::BusV {
                        bus: b,
                        phase: ph,
                        t,
                    });
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

/// Semantic row identity, rendered like `voltage_lower[bus=7,phase=C,t=22]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowLabel {
    BalanceP {
        bus: usize,
        phase: Phase,
        t: usize,
    },
    BalanceQ {
        bus: usize,
        phase: Phase,
        t: usize,
    },
    VoltageDrop {
        line: usize,
        phase: Phase,
        t: usize,
    },
    Slack {
        phase: Phase,
        t: usize,
    },
    Voltage {
        bound: Bound,
        bus: usize,
        phase: Phase,
        t: usize,
    },
    FlowP {
        bound: Bound,
        line: usize,
        phase: Phase,
        t: usize,
    },
    FlowQ {
        bound: Bound,
        line: usize,
        phase: Phase,
        t: usize,
    },
    PowerFactor {
        household: usize,
        appliance: usize,
        t: usize,
    },
    Energy {
        bound: Option<Bound>,
        household: usize,
        appliance: usize,
    },
    Thermal {
        household: usize,
        appliance: usize,
        t: usize,
    },
    TotalP {
        phase: Phase,
        t: usize,
    },
    TotalQ {
        phase: Phase,
        t: usize,
    },
    PccCap {
        t: usize,
        cut: usize,
    },
}

fn bound_str(b: Bound) -> &'static str {
    match b {
        Bound::Lower => "lower",
        Bound::Upper => "upper",
    }
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RowLabel::BalanceP { bus, phase, t } => {
                write!(f, "balance_p[bus={bus},phase={phase},t={}]", t + 1)
            }
            RowLabel::BalanceQ { bus, phase, t } => {
                write!(f, "balance_q[bus={bus},phase={phase},t={}]", t + 1)
            }
            RowLabel::VoltageDrop { line, phase, t } => {
                write!(f, "voltage_drop[line={line},phase={phase},t={}]", t + 1)
            }
            RowLabel::Slack { phase, t } => write!(f, "slack[phase={phase},t={}]", t + 1),
            RowLabel::Voltage {
                bound,
                bus,
                phase,
                t,
            } => write!(
                f,
                "voltage_{}[bus={bus},phase={phase},t={}]",
                bound_str(bound),
                t + 1
            ),
            RowLabel::FlowP {
                bound,
                line,
                phase,
                t,
            } => write!(
                f,
                "flow_p_{}[line={line},phase={phase},t={}]",
                bound_str(bound),
                t + 1
            ),
            RowLabel::FlowQ {
                bound,
                line,
                phase,
                t,
            } => write!(
                f,
                "flow_q_{}[line={line},phase={phase},t={}]",
                bound_str(bound),
                t + 1
            ),
            RowLabel::PowerFactor {
                household,
                appliance,
                t,
            } => write!(
                f,
                "power_factor[household={household},appliance={appliance},t={}]",
                t + 1
            ),
            RowLabel::Energy {
                bound,
                household,
                appliance,
            } => match bound {
                None => write!(f, "energy[household={household},appliance={appliance}]"),
                Some(b) => write!(
                    f,
                    "energy_{}[household={household},appliance={appliance}]",
                    bound_str(b)
                ),
            },
            RowLabel::Thermal {
                household,
                appliance,
                t,
            } => write!(
                f,
                "thermal[household={household},appliance={appliance},t={}]",
                t + 1
            ),
            RowLabel::TotalP { phase, t } => write!(f, "total_p[phase={phase},t={}]", t + 1),
            RowLabel::TotalQ { phase, t } => write!(f, "total_q[phase={phase},t={}]", t + 1),
            RowLabel::PccCap { t, cut } => write!(f, "pcc_cap[t={},cut={cut}]", t + 1),
        }
    }
}

/// `terms · x = rhs` (equality) or `terms · x ≤ rhs` (inequality).
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: RowLabel,
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearSystem {
    pub eq: Vec<Row>,
    pub ineq: Vec<Row>,
}

impl LinearSystem {
    pub fn append(&mut self, mut other: LinearSystem) {
        self.eq.append(&mut other.eq);
        self.ineq.append(&mut other.ineq);
    }
}

/// Affine expression `constant + Σ coef·x`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

/// Per bus, per phase net consumption expressions (pu) at slot `t`:
/// critical load plus appliance demand minus DG output. DG active power is
/// fixed at its maximum; DG reactive power is a variable.
pub fn nodal_injections(
    net: &Network,
    households: &[Household],
    index: &VarIndex,
    t: usize,
) -> Vec<[(Affine, Affine); 3]> {
    assert_eq!(
        net.units,
        Units::PerUnit,
        "network rows need a per-unit model"
    );
    let scale = 1.0 / net.base.s_kva();
    let mut out: Vec<[(Affine, Affine); 3]> = net
        .buses
        .iter()
        .map(|b| {
            std::array::from_fn(|ph| {
                (
                    Affine {
                        constant: b.critical_p[ph][t],
                        terms: vec![],
                    },
                    Affine {
                        constant: b.critical_q[ph][t],
                        terms: vec![],
                    },
                )
            })
        })
        .collect();
    for (hi, h) in households.iter().enumerate() {
        let ph = h.phase.index();
        for (ai, a) in h.appliances.iter().enumerate() {
            if matches!(a.kind, ApplianceKind::Critical { .. }) {
                continue;
            }
            if let Some(k) = index.get(&Var::ApplianceP { h: hi, a: ai, t }) {
                out[h.bus][ph].0.terms.push((k, scale));
            }
            if let Some(k) = index.get(&Var::ApplianceQ { h: hi, a: ai, t }) {
                out[h.bus][ph].1.terms.push((k, scale));
            }
        }
    }
    for (gi, dg) in net.dg_units.iter().enumerate() {
        let ph = dg.phase.index();
        out[dg.bus][ph].0.constant -= dg.p_max[t];
        if let Some(k) = index.get(&Var::DgQ { dg: gi, t }) {
            out[dg.bus][ph].1.terms.push((k, -scale));
        }
    }
    out
}

fn var(index: &VarIndex, v: Var) -> usize {
    index
        .get(&v)
        .unwrap_or_else(|| panic!("variable {v} missing from index"))
}

/// Flow balance, voltage drop and slack rows at slot `t`, with the branch
/// terms expanded to first order around `op`.
pub fn linearize(
    op: &OperatingPoint,
    net: &Network,
    households: &[Household],
    index: &VarIndex,
    t: usize,
) -> Result<LinearSystem, ZeroVoltage> {
    let mut sys = LinearSystem::default();
    let inj = nodal_injections(net, households, index, t);
    let slice = &op.slices[t];
    let v_ref2 = net.v_ref * net.v_ref;

    for ph in Phase::ALL {
        if net.buses[0].phases[ph.index()] {
            sys.eq.push(Row {
                label: RowLabel::Slack { phase: ph, t },
                terms: vec![(
                    var(
                        index,
                        Var::BusV {
                            bus: 0,
                            phase: ph,
                            t,
                        },
                    ),
                    1.0,
                )],
                rhs: v_ref2,
            });
        }
    }

    for &j in &net.topology.order[1..] {
        let l = net.topology.parent_line[j].expect("non-root bus has a parent line");
        let line = &net.lines[l];
        let phases = net.line_phases(l);
        let br = branch(op, net, l, t)?;
        let (p0, q0) = (slice.p[l], slice.q[l]);
        let f0 = br.terms(&p0, &q0);
        let jac = br.jacobian(&p0, &q0);
        let (rt, xt) = br.rotated_rx();
        let pvar = |ph: usize| {
            var(
                index,
                Var::LineP {
                    line: l,
                    phase: Phase::from_index(ph),
                    t,
                },
            )
        };
        let qvar = |ph: usize| {
            var(
                index,
                Var::LineQ {
                    line: l,
                    phase: Phase::from_index(ph),
                    t,
                },
            )
        };

        for i in 0..3 {
            if !phases[i] {
                continue;
            }
            let phase = Phase::from_index(i);
            // constant part of each expansion: f(x0) − J x0
            let lin_const = |f: f64, jp: &nalgebra::Matrix3<f64>, jq: &nalgebra::Matrix3<f64>| {
                f - (0..3)
                    .filter(|&k| phases[k])
                    .map(|k| jp[(i, k)] * p0[k] + jq[(i, k)] * q0[k])
                    .sum::<f64>()
            };

            for (is_q, f, jp, jq) in [
                (false, f0.p_loss[i], &jac.p_loss_p, &jac.p_loss_q),
                (true, f0.q_loss[i], &jac.q_loss_p, &jac.q_loss_q),
            ] {
                let own = if is_q { qvar(i) } else { pvar(i) };
                let mut terms = vec![(own, 1.0)];
                for k in (0..3).filter(|&k| phases[k]) {
                    terms.push((pvar(k), -jp[(i, k)]));
                    terms.push((qvar(k), -jq[(i, k)]));
                }
                for &cl in &net.topology.child_lines[j] {
                    let v = if is_q {
                        Var::LineQ { line: cl, phase, t }
                    } else {
                        Var::LineP { line: cl, phase, t }
                    };
                    if let Some(k) = index.get(&v) {
                        terms.push((k, -1.0));
                    }
                }
                let load = if is_q { &inj[j][i].1 } else { &inj[j][i].0 };
                terms.extend(load.terms.iter().map(|&(k, c)| (k, -c)));
                let label = if is_q {
                    RowLabel::BalanceQ { bus: j, phase, t }
                } else {
                    RowLabel::BalanceP { bus: j, phase, t }
                };
                sys.eq.push(Row {
                    label,
                    terms,
                    rhs: load.constant + lin_const(f, jp, jq),
                });
            }

            // v_j − v_i + 2(R̃P + X̃Q) − Δv̂ = 0
            let mut terms = vec![
                (var(index, Var::BusV { bus: j, phase, t }), 1.0),
                (
                    var(
                        index,
                        Var::BusV {
                            bus: line.from,
                            phase,
                            t,
                        },
                    ),
                    -1.0,
                ),
            ];
            for k in (0..3).filter(|&k| phases[k]) {
                terms.push((pvar(k), 2.0 * rt[(i, k)] - jac.dv_p[(i, k)]));
                terms.push((qvar(k), 2.0 * xt[(i, k)] - jac.dv_q[(i, k)]));
            }
            sys.eq.push(Row {
                label: RowLabel::VoltageDrop { line: l, phase, t },
                terms,
                rhs: lin_const(f0.dv[i], &jac.dv_p, &jac.dv_q),
            });
        }
    }
    Ok(sys)
}

/// Squared-voltage boxes on every non-root bus and optional flow boxes.
pub fn security_rows(net: &Network, index: &VarIndex, t: usize) -> Vec<Row> {
    let mut rows = Vec::new();
    for (b, bus) in net.buses.iter().enumerate().skip(1) {
        for phase in Phase::ALL {
            if !bus.phases[phase.index()] {
                continue;
            }
            let k = var(index, Var::BusV { bus: b, phase, t });
            if bus.v_min > 0.0 {
                rows.push(Row {
                    label: RowLabel::Voltage {
                        bound: Bound::Lower,
                        bus: b,
                        phase,
                        t,
                    },
                    terms: vec![(k, -1.0)],
                    rhs: -bus.v_min * bus.v_min,
                });
            }
            if bus.v_max.is_finite() {
                rows.push(Row {
                    label: RowLabel::Voltage {
                        bound: Bound::Upper,
                        bus: b,
                        phase,
                        t,
                    },
                    terms: vec![(k, 1.0)],
                    rhs: bus.v_max * bus.v_max,
                });
            }
        }
    }
    for (l, line) in net.lines.iter().enumerate() {
        let phases = net.line_phases(l);
        for (limits, is_q) in [(&line.p_limits, false), (&line.q_limits, true)] {
            let Some(lim) = limits else { continue };
            for phase in Phase::ALL.into_iter().filter(|p| phases[p.index()]) {
                let (lo, hi) = lim[phase.index()];
                let v = if is_q {
                    Var::LineQ { line: l, phase, t }
                } else {
                    Var::LineP { line: l, phase, t }
                };
                let k = var(index, v);
                let label = |bound| {
                    if is_q {
                        RowLabel::FlowQ {
                            bound,
                            line: l,
                            phase,
                            t,
                        }
                    } else {
                        RowLabel::FlowP {
                            bound,
                            line: l,
                            phase,
                            t,
                        }
                    }
                };
                if lo.is_finite() {
                    rows.push(Row {
                        label: label(Bound::Lower),
                        terms: vec![(k, -1.0)],
                        rhs: -lo,
                    });
                }
                if hi.is_finite() {
                    rows.push(Row {
                        label: label(Bound::Upper),
                        terms: vec![(k, 1.0)],
                        rhs: hi,
                    });
                }
            }
        }
    }
    rows
}
