//! Assembly of the day-ahead scheduling QP in minimization form.

use super::qp::{QpProblem, SparseRow};
use crate::appliance::{feasible_set_constraints, ApplianceKind, ConstraintKind, LocalVar};
use crate::distflow::{
    linearize, nodal_injections, security_rows, Bound, OperatingPoint, Row, RowLabel, Var,
    VarIndex, ZeroVoltage,
};
use crate::netmodel::{Network, Phase, Scenario, Units};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    /// Weight on aggregate household utility.
    pub kappa: f64,
    /// Multiplier on every cost coefficient.
    pub cost_scale: f64,
    /// Reactive dispatch cost per DG, $/kvar² per slot. Gives the DG
    /// reactive output curvature so re-linearization settles instead of
    /// jumping between the reactive limits.
    pub dg_q_cost: f64,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec {
            kappa: 1.0,
            cost_scale: 1.0,
            dg_q_cost: 1e-4,
        }
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    ZeroVoltage(#[from] ZeroVoltage),
}

/// Network representation inside the QP.
#[derive(Debug, Clone, Copy)]
pub enum NetworkModel<'a> {
    /// Three-phase branch flow expanded around an operating point, with
    /// voltage and flow limits.
    Linearized(&'a OperatingPoint),
    /// One lossless supply-demand balance per phase; no voltages.
    Aggregate,
}

#[derive(Debug, Clone)]
pub struct DlcProblem {
    pub qp: QpProblem,
    pub index: VarIndex,
    /// Per slot, linear forms of the stacked PCC vector
    /// (p_A, p_B, p_C, q_A, q_B, q_C) in pu.
    pub pcc: Vec<[SparseRow; 6]>,
}

/// A supporting hyperplane `normal · z(t) ≤ s_cap` of the PCC ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub t: usize,
    pub normal: [f64; 6],
}

impl DlcProblem {
    pub fn add_cut(&mut self, cut: &Cut, s_cap_pu: f64, ordinal: usize) {
        let mut row: SparseRow = Vec::new();
        for (k, form) in self.pcc[cut.t].iter().enumerate() {
            row.extend(form.iter().map(|&(j, c)| (j, c * cut.normal[k])));
        }
        self.qp.add_le(
            row,
            s_cap_pu,
            RowLabel::PccCap {
                t: cut.t,
                cut: ordinal,
            }
            .to_string(),
        );
    }

    /// PCC vector of a primal point.
    pub fn pcc_value(&self, x: &[f64], t: usize) -> [f64; 6] {
        std::array::from_fn(|k| self.pcc[t][k].iter().map(|&(j, c)| c * x[j]).sum())
    }
}

fn check_dims(scn: &Scenario, net: &Network) -> Result<(), BuildError> {
    let t = net.horizon;
    let bad = |what: &str| Err(BuildError::Dimension(what.to_string()));
    if net.units != Units::PerUnit {
        return bad("network must be per-unit");
    }
    let c = &scn.profiles.pcc_cost;
    if c.a.len() != t || c.b.len() != t || c.c.len() != t {
        return bad("PCC cost profile length differs from horizon");
    }
    for h in &scn.households {
        for a in &h.appliances {
            if a.horizon() != t || a.p_min.len() != t {
                return bad(&format!("household {} appliance {} horizon", h.id, a.id));
            }
        }
    }
    for dg in &net.dg_units {
        if dg.p_max.len() != t {
            return bad(&format!("dg {} profile length", dg.id));
        }
    }
    Ok(())
}

fn eq_rows(qp: &mut QpProblem, rows: Vec<Row>) {
    for r in rows {
        qp.add_eq(r.terms, r.rhs, r.label.to_string());
    }
}

fn le_rows(qp: &mut QpProblem, rows: Vec<Row>) {
    for r in rows {
        qp.add_le(r.terms, r.rhs, r.label.to_string());
    }
}

/// Builds the horizon-wide QP. Appliance quantities are in kW, kvar and
/// °F; network quantities in pu of `net`.
pub fn build_problem(
    scn: &Scenario,
    net: &Network,
    objective: &ObjectiveSpec,
    model: NetworkModel<'_>,
) -> Result<DlcProblem, BuildError> {
    check_dims(scn, net)?;
    let horizon = net.horizon;
    let dt = net.dt_h;
    let households = &scn.households;
    let s_kw = net.base.s_kva();

    let mut index = VarIndex::new();
    for t in 0..horizon {
        for (hi, h) in households.iter().enumerate() {
            for (ai, a) in h.appliances.iter().enumerate() {
                if a.is_critical() {
                    continue;
                }
                if a.window.contains_label(t + 1) {
                    index.push(Var::ApplianceP { h: hi, a: ai, t });
                    index.push(Var::ApplianceQ { h: hi, a: ai, t });
                }
                if matches!(a.kind, ApplianceKind::Thermostatic(_)) {
                    index.push(Var::IndoorTemp { h: hi, a: ai, t });
                }
            }
        }
        for dg in 0..net.dg_units.len() {
            index.push(Var::DgQ { dg, t });
        }
        match model {
            NetworkModel::Linearized(op) => {
                if op.slices.len() != horizon {
                    return Err(BuildError::Dimension("operating point horizon".into()));
                }
                index.push_network(net, t);
            }
            NetworkModel::Aggregate => {
                for phase in Phase::ALL {
                    index.push(Var::TotalP { phase, t });
                    index.push(Var::TotalQ { phase, t });
                }
            }
        }
    }

    let mut qp = QpProblem::new(index.len());
    qp.var_labels = index.vars().iter().map(|v| v.to_string()).collect();

    // appliance feasible sets and utilities
    let kappa = objective.kappa;
    for (hi, h) in households.iter().enumerate() {
        for (ai, a) in h.appliances.iter().enumerate() {
            if a.is_critical() {
                continue;
            }
            let local = feasible_set_constraints(a, dt);
            let map = |v: LocalVar| -> usize {
                let var = match v {
                    LocalVar::P(t) => Var::ApplianceP { h: hi, a: ai, t },
                    LocalVar::Q(t) => Var::ApplianceQ { h: hi, a: ai, t },
                    LocalVar::TIn(t) => Var::IndoorTemp { h: hi, a: ai, t },
                };
                index.get(&var).expect("local variable registered")
            };
            for b in &local.boxes {
                let k = map(b.var);
                qp.lb[k] = qp.lb[k].max(b.lo);
                qp.ub[k] = qp.ub[k].min(b.hi);
            }
            for row in &local.rows {
                let terms: SparseRow = row.terms.iter().map(|&(v, c)| (map(v), c)).collect();
                let t = row.t.unwrap_or(0);
                let label = |bound: Option<Bound>| match row.kind {
                    ConstraintKind::PowerFactor => RowLabel::PowerFactor {
                        household: hi,
                        appliance: ai,
                        t,
                    },
                    ConstraintKind::Thermal => RowLabel::Thermal {
                        household: hi,
                        appliance: ai,
                        t,
                    },
                    ConstraintKind::Energy => RowLabel::Energy {
                        bound,
                        household: hi,
                        appliance: ai,
                    },
                };
                if row.lo == row.hi {
                    qp.add_eq(terms, row.lo, label(None).to_string());
                    continue;
                }
                if row.hi.is_finite() {
                    qp.add_le(terms.clone(), row.hi, label(Some(Bound::Upper)).to_string());
                }
                if row.lo.is_finite() {
                    let neg = terms.iter().map(|&(k, c)| (k, -c)).collect();
                    qp.add_le(neg, -row.lo, label(Some(Bound::Lower)).to_string());
                }
            }

            let b = a.utility_weight * kappa;
            let horizon_a = a.horizon();
            match &a.kind {
                ApplianceKind::Interruptible { p_pref } => {
                    for t in 0..horizon_a {
                        match index.get(&Var::ApplianceP { h: hi, a: ai, t }) {
                            Some(k) => {
                                qp.add_hessian(k, k, 2.0 * b);
                                qp.c[k] -= 2.0 * b * p_pref[t];
                                qp.c0 += b * p_pref[t] * p_pref[t];
                            }
                            None => qp.c0 += b * p_pref[t] * p_pref[t],
                        }
                    }
                }
                ApplianceKind::Deferrable { p_pref, .. } => {
                    for t in 0..horizon_a {
                        let Some(k) = index.get(&Var::ApplianceP { h: hi, a: ai, t }) else {
                            continue;
                        };
                        let w = b * a.window.position(t, horizon_a).unwrap_or(0) as f64;
                        qp.c[k] -= b * dt;
                        qp.add_hessian(k, k, 2.0 * w);
                        qp.c[k] -= 2.0 * w * p_pref[t];
                        qp.c0 += w * p_pref[t] * p_pref[t];
                    }
                }
                ApplianceKind::Thermostatic(th) => {
                    for t in 0..horizon_a {
                        let k = index.get(&Var::IndoorTemp { h: hi, a: ai, t }).unwrap();
                        qp.add_hessian(k, k, 2.0 * b);
                        qp.c[k] -= 2.0 * b * th.t_conf[t];
                        qp.c0 += b * th.t_conf[t] * th.t_conf[t];
                    }
                }
                ApplianceKind::Critical { .. } => {}
            }
        }
    }

    // DG reactive limits (kvar) and fixed generation cost
    for (g, dg) in net.dg_units.iter().enumerate() {
        for t in 0..horizon {
            let k = index.get(&Var::DgQ { dg: g, t }).unwrap();
            qp.lb[k] = dg.q_min * s_kw;
            qp.ub[k] = dg.q_max * s_kw;
            qp.add_hessian(k, k, 2.0 * objective.cost_scale * objective.dg_q_cost);
            if let Some(cost) = &dg.cost {
                qp.c0 += objective.cost_scale * cost.eval(t, dg.p_max[t] * s_kw);
            }
        }
    }

    // network and PCC expressions
    let mut pcc = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut form: [SparseRow; 6] = Default::default();
        match model {
            NetworkModel::Linearized(op) => {
                let sys = linearize(op, net, households, &index, t)?;
                eq_rows(&mut qp, sys.eq);
                le_rows(&mut qp, security_rows(net, &index, t));
                for &l in &net.topology.child_lines[0] {
                    for phase in Phase::ALL {
                        let i = phase.index();
                        if let Some(k) = index.get(&Var::LineP { line: l, phase, t }) {
                            form[i].push((k, 1.0));
                        }
                        if let Some(k) = index.get(&Var::LineQ { line: l, phase, t }) {
                            form[3 + i].push((k, 1.0));
                        }
                    }
                }
            }
            NetworkModel::Aggregate => {
                let inj = nodal_injections(net, households, &index, t);
                for phase in Phase::ALL {
                    let i = phase.index();
                    for (is_q, var, label) in [
                        (
                            false,
                            Var::TotalP { phase, t },
                            RowLabel::TotalP { phase, t },
                        ),
                        (
                            true,
                            Var::TotalQ { phase, t },
                            RowLabel::TotalQ { phase, t },
                        ),
                    ] {
                        let k = index.get(&var).unwrap();
                        let mut row = vec![(k, 1.0)];
                        let mut rhs = 0.0;
                        for bus in &inj {
                            let e = if is_q { &bus[i].1 } else { &bus[i].0 };
                            rhs += e.constant;
                            row.extend(e.terms.iter().map(|&(j, c)| (j, -c)));
                        }
                        qp.add_eq(row, rhs, label.to_string());
                        form[if is_q { 3 + i } else { i }].push((k, 1.0));
                    }
                }
            }
        }

        // a(t)·P² + b(t)·P with P the total PCC active power in kW
        let kw = 1000.0 * net.base.s_mva;
        let cost = &scn.profiles.pcc_cost;
        let (ca, cb) = (
            objective.cost_scale * cost.a[t],
            objective.cost_scale * cost.b[t],
        );
        let p_terms = &form[0..3];
        let flat: Vec<(usize, f64)> = p_terms.iter().flatten().copied().collect();
        for (m, &(i, ci)) in flat.iter().enumerate() {
            qp.c[i] += cb * kw * ci;
            qp.add_hessian(i, i, 2.0 * ca * kw * kw * ci * ci);
            for &(j, cj) in &flat[m + 1..] {
                qp.add_hessian(i, j, 2.0 * ca * kw * kw * ci * cj);
            }
        }
        qp.c0 += objective.cost_scale * cost.c[t];
        pcc.push(form);
    }

    Ok(DlcProblem { qp, index, pcc })
}
