//! Cutting-plane and sequential re-linearization loops.

use super::build::{build_problem, BuildError, Cut, DlcProblem, NetworkModel, ObjectiveSpec};
use super::cuts::{pcc_cap_cuts, CutOutcome};
use super::qp::{solve_qp, KktResiduals, QpError, QpOptions, QpSolution};
use crate::appliance::{ApplianceKind, ApplianceSchedule};
use crate::distflow::{NetworkState, OperatingPoint, OperatingSlice, Var, VarIndex};
use crate::netmodel::{Network, Phase, Scenario};
use crate::pfexact::{simulate_schedule, PfError, PfOptions, Simulation};
use crate::schedule::Schedule;
use log::{debug, info, warn};
use thiserror::Error;

#[derive(Debug, Clone, Copy)]
pub struct DlcOptions {
    pub qp: QpOptions,
    pub pf: PfOptions,
    /// Largest change of simulated squared voltage (pu²) accepted as converged.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Cap on accumulated cuts per slot.
    pub max_cuts: usize,
}

impl Default for DlcOptions {
    fn default() -> Self {
        DlcOptions {
            qp: QpOptions::default(),
            pf: PfOptions::default(),
            outer_tol: 1e-4,
            max_outer: 10,
            max_cuts: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub schedule: Schedule,
    /// Network values predicted by the QP (empty for the aggregate model).
    pub linear_state: Vec<NetworkState>,
    /// Exact power flow of `schedule`.
    pub simulation: Simulation,
    /// κ·utility − cost of the final QP (maximization sense).
    pub objective: f64,
    /// Worst KKT residuals over every QP solve of the run.
    pub residuals: KktResiduals,
    pub cuts: usize,
    pub outer_iterations: usize,
    pub qp_solves: usize,
    pub converged: bool,
}

#[derive(Debug, Error)]
pub enum DlcError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("scheduling problem is infeasible; active rows: {}", active_rows.join(", "))]
    Infeasible { active_rows: Vec<String> },
    #[error("QP solver failed: {0}")]
    Qp(QpError),
    #[error(transparent)]
    PowerFlow(#[from] PfError),
    #[error("more than {limit} cuts needed at t={}", t + 1)]
    CutLimit { t: usize, limit: usize },
    #[error("outer loop stopped after {} iterations without settling", best.outer_iterations)]
    OuterLoopNotConverged { best: Box<Solution> },
}

impl From<QpError> for DlcError {
    fn from(e: QpError) -> Self {
        match e {
            QpError::Infeasible { active_rows } => DlcError::Infeasible { active_rows },
            other => DlcError::Qp(other),
        }
    }
}

pub(crate) struct CutLoop {
    pub solution: QpSolution,
    pub residuals: KktResiduals,
    pub solves: usize,
}

/// Solves `problem` with the accumulated `cuts`, adding new ones until the
/// cap holds at the QP optimum.
pub(crate) fn solve_with_cuts(
    problem: &mut DlcProblem,
    cuts: &mut Vec<Cut>,
    s_cap_pu: f64,
    scn: &Scenario,
    opts: &DlcOptions,
) -> Result<CutLoop, DlcError> {
    let horizon = problem.pcc.len();
    let mut per_slot = vec![0usize; horizon];
    for c in cuts.iter() {
        per_slot[c.t] += 1;
        problem.add_cut(c, s_cap_pu, per_slot[c.t]);
    }
    let mut worst = KktResiduals::default();
    let mut solves = 0;
    loop {
        let sol = solve_qp(&problem.qp, &opts.qp)?;
        solves += 1;
        worst = worst.worst_with(&sol.residuals);
        let z: Vec<[f64; 6]> = (0..horizon).map(|t| problem.pcc_value(&sol.x, t)).collect();
        match pcc_cap_cuts(&z, &scn.dlc_event, s_cap_pu) {
            CutOutcome::Satisfied => {
                return Ok(CutLoop {
                    solution: sol,
                    residuals: worst,
                    solves,
                })
            }
            CutOutcome::Cuts(new) => {
                debug!("adding {} cuts (objective {:.6})", new.len(), sol.objective);
                for c in new {
                    per_slot[c.t] += 1;
                    if per_slot[c.t] > opts.max_cuts {
                        return Err(DlcError::CutLimit {
                            t: c.t,
                            limit: opts.max_cuts,
                        });
                    }
                    problem.add_cut(&c, s_cap_pu, per_slot[c.t]);
                    cuts.push(c);
                }
            }
        }
    }
}

/// Device schedule from a primal point. Reactive powers follow the power
/// factor tie exactly and indoor temperatures are recomputed from the
/// thermal recurrence, so the schedule is consistent to rounding.
pub fn extract_schedule(scn: &Scenario, index: &VarIndex, x: &[f64]) -> Schedule {
    let horizon = scn.network.horizon;
    let mut sched = Schedule::idle(&scn.households, scn.network.dg_units.len(), horizon);
    for (hi, h) in scn.households.iter().enumerate() {
        for (ai, a) in h.appliances.iter().enumerate() {
            if a.is_critical() {
                continue;
            }
            let kappa = a.pf_ratio();
            let p: Vec<f64> = (0..horizon)
                .map(|t| {
                    index
                        .get(&Var::ApplianceP { h: hi, a: ai, t })
                        .map(|k| x[k].clamp(a.p_min[t], a.p_max[t]))
                        .unwrap_or(0.0)
                })
                .collect();
            let t_in = match &a.kind {
                ApplianceKind::Thermostatic(th) => Some(th.trajectory(&p)),
                _ => None,
            };
            sched.appliances[hi][ai] = ApplianceSchedule {
                q: p.iter().map(|v| v * kappa).collect(),
                p,
                t_in,
            };
        }
    }
    for (g, q) in sched.dg_q.iter_mut().enumerate() {
        for (t, v) in q.iter_mut().enumerate() {
            *v = index
                .get(&Var::DgQ { dg: g, t })
                .map(|k| x[k])
                .unwrap_or(0.0);
        }
    }
    sched
}

fn linear_state(net: &Network, index: &VarIndex, x: &[f64]) -> Vec<NetworkState> {
    (0..net.horizon)
        .map(|t| {
            let mut s = NetworkState::zeros(net.buses.len(), net.lines.len());
            for phase in Phase::ALL {
                let i = phase.index();
                for b in 0..net.buses.len() {
                    if let Some(k) = index.get(&Var::BusV { bus: b, phase, t }) {
                        s.v[b][i] = x[k];
                    }
                }
                for l in 0..net.lines.len() {
                    if let Some(k) = index.get(&Var::LineP { line: l, phase, t }) {
                        s.p[l][i] = x[k];
                    }
                    if let Some(k) = index.get(&Var::LineQ { line: l, phase, t }) {
                        s.q[l][i] = x[k];
                    }
                }
            }
            s
        })
        .collect()
}

/// Operating point at a simulated state.
pub fn operating_point(sim: &Simulation) -> OperatingPoint {
    OperatingPoint {
        slices: sim
            .voltages
            .iter()
            .zip(&sim.states)
            .map(|(v, s)| OperatingSlice {
                voltage: v.voltage.clone(),
                p: s.p.clone(),
                q: s.q.clone(),
            })
            .collect(),
    }
}

fn max_voltage_change(op: &OperatingPoint, sim: &Simulation) -> f64 {
    let mut worst: f64 = 0.0;
    for (slice, state) in op.slices.iter().zip(&sim.states) {
        for (b, v) in state.v.iter().enumerate() {
            let old = slice.v(b);
            for ph in 0..3 {
                worst = worst.max((v[ph] - old[ph]).abs());
            }
        }
    }
    worst
}

pub(crate) fn s_cap_pu(scn: &Scenario) -> f64 {
    scn.dlc_event.s_cap_mva / scn.network.base.s_mva
}

/// Proposed DLC: QP with the linearized three-phase network, PCC cuts, and
/// re-linearization at the exact power flow of each schedule.
pub fn solve_dlc(
    scn: &Scenario,
    objective: &ObjectiveSpec,
    opts: &DlcOptions,
) -> Result<Solution, DlcError> {
    let net = scn
        .network
        .to_per_unit()
        .map_err(|e| BuildError::Dimension(e.to_string()))?;
    let cap = s_cap_pu(scn);
    let mut op = OperatingPoint::flat(&net);
    let mut cuts: Vec<Cut> = Vec::new();
    let mut solves = 0;
    let mut worst = KktResiduals::default();
    let mut last: Option<Solution> = None;
    for it in 1..=opts.max_outer {
        let mut problem = build_problem(scn, &net, objective, NetworkModel::Linearized(&op))?;
        let run = solve_with_cuts(&mut problem, &mut cuts, cap, scn, opts)?;
        solves += run.solves;
        worst = worst.worst_with(&run.residuals);
        let x = &run.solution.x;
        let schedule = extract_schedule(scn, &problem.index, x);
        let simulation = simulate_schedule(&net, &scn.households, &schedule, &opts.pf)?;
        let change = max_voltage_change(&op, &simulation);
        let peak = scn
            .dlc_event
            .window
            .indices(net.horizon)
            .into_iter()
            .map(|t| simulation.pcc_mva[t])
            .fold(0.0, f64::max);
        info!(
            "outer iteration {it}: {} QP solves, {} cuts, Δv {change:.2e}, event peak {peak:.4} MVA",
            run.solves,
            cuts.len()
        );
        op = operating_point(&simulation);
        let solution = Solution {
            schedule,
            linear_state: linear_state(&net, &problem.index, x),
            simulation,
            objective: -run.solution.objective,
            residuals: worst,
            cuts: cuts.len(),
            outer_iterations: it,
            qp_solves: solves,
            converged: change <= opts.outer_tol,
        };
        if solution.converged {
            return Ok(solution);
        }
        last = Some(solution);
    }
    let best = last.expect("at least one outer iteration");
    warn!("outer loop did not settle in {} iterations", opts.max_outer);
    Err(DlcError::OuterLoopNotConverged {
        best: Box::new(best),
    })
}
