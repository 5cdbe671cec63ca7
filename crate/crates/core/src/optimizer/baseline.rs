//! Reference policies: no load control, and load control against a
//! lossless aggregate balance.

use super::build::{build_problem, BuildError, NetworkModel, ObjectiveSpec};
use super::dlc::{extract_schedule, s_cap_pu, solve_with_cuts, DlcError, DlcOptions, Solution};
use crate::appliance::{ApplianceKind, ApplianceSchedule};
use crate::netmodel::greedy_profile;
use crate::netmodel::Scenario;
use crate::pfexact::simulate_schedule;
use crate::schedule::Schedule;

/// Closed-form schedule that maximizes comfort alone: the AC holds the
/// comfort setpoint, deferrables run at full power from the start of their
/// window until their maximum energy is reached, interruptibles run at
/// their preferred power and DG reactive output stays at zero.
pub fn baseline_wo_dlc(scn: &Scenario) -> Schedule {
    let horizon = scn.network.horizon;
    let dt = scn.network.dt_h;
    let mut sched = Schedule::idle(&scn.households, scn.network.dg_units.len(), horizon);
    for (hi, h) in scn.households.iter().enumerate() {
        for (ai, a) in h.appliances.iter().enumerate() {
            let working: Vec<bool> = (0..horizon)
                .map(|t| a.window.contains_label(t + 1))
                .collect();
            let clip = |t: usize, p: f64| {
                if working[t] {
                    p.clamp(a.p_min[t], a.p_max[t])
                } else {
                    0.0
                }
            };
            let (p, t_in) = match &a.kind {
                ApplianceKind::Critical { .. } => continue,
                ApplianceKind::Interruptible { p_pref } => {
                    ((0..horizon).map(|t| clip(t, p_pref[t])).collect(), None)
                }
                ApplianceKind::Deferrable { e_max, .. } => {
                    (greedy_profile(&a.window, &a.p_max, *e_max, dt), None)
                }
                ApplianceKind::Thermostatic(th) => {
                    let mut p = vec![0.0; horizon];
                    let mut temp = Vec::with_capacity(horizon);
                    let mut prev = th.t_init;
                    for t in 0..horizon {
                        p[t] = clip(t, th.power_for(prev, th.t_out[t], th.t_conf[t]));
                        prev = crate::appliance::temperature_step(
                            prev,
                            th.t_out[t],
                            p[t],
                            th.alpha,
                            th.beta,
                        );
                        temp.push(prev);
                    }
                    (p, Some(temp))
                }
            };
            let kappa = a.pf_ratio();
            sched.appliances[hi][ai] = ApplianceSchedule {
                q: p.iter().map(|v: &f64| v * kappa).collect(),
                p,
                t_in,
            };
        }
    }
    sched
}

/// Same objective and appliance model as the proposed policy, but the
/// network is reduced to a lossless per-phase balance and the cap is
/// applied to total demand net of DG. No voltage limits.
pub fn baseline_conventional(
    scn: &Scenario,
    objective: &ObjectiveSpec,
    opts: &DlcOptions,
) -> Result<Solution, DlcError> {
    let net = scn
        .network
        .to_per_unit()
        .map_err(|e| BuildError::Dimension(e.to_string()))?;
    let mut problem = build_problem(scn, &net, objective, NetworkModel::Aggregate)?;
    let mut cuts = Vec::new();
    let run = solve_with_cuts(&mut problem, &mut cuts, s_cap_pu(scn), scn, opts)?;
    let schedule = extract_schedule(scn, &problem.index, &run.solution.x);
    let simulation = simulate_schedule(&net, &scn.households, &schedule, &opts.pf)?;
    Ok(Solution {
        schedule,
        linear_state: Vec::new(),
        simulation,
        objective: -run.solution.objective,
        residuals: run.residuals,
        cuts: cuts.len(),
        outer_iterations: 1,
        qp_solves: run.solves,
        converged: true,
    })
}
