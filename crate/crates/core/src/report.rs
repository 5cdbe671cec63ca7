//! Policy runs, their evaluation on the simulated network, and CSV reports.
//!
//! Every figure reported here is recomputed from the exact power flow of
//! the schedule, never taken from solver-internal values.

use crate::appliance::{utility, ApplianceKind};
use crate::distflow::NetworkState;
use crate::netmodel::Scenario;
use crate::optimizer::qp::KktResiduals;
use crate::optimizer::{
    baseline_conventional, baseline_wo_dlc, solve_dlc, DlcError, DlcOptions, ObjectiveSpec,
};
use crate::pfexact::{pcc_injection, simulate_schedule, Simulation};
use crate::schedule::Schedule;
use log::warn;
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

/// Relative slack before a simulated value counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    WoDlc,
    Conventional,
    Proposed,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::WoDlc, Policy::Conventional, Policy::Proposed];

    pub fn name(self) -> &'static str {
        match self {
            Policy::WoDlc => "wo-dlc",
            Policy::Conventional => "conventional",
            Policy::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                format!("unknown policy `{s}` (expected wo-dlc, conventional or proposed)")
            })
    }
}

#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub policy: Policy,
    pub schedule: Schedule,
    pub simulation: Simulation,
    /// Network values predicted by the linearized model (proposed policy only).
    pub linear_state: Vec<NetworkState>,
    /// Final QP objective; absent for the rule-based baseline.
    pub objective: Option<f64>,
    pub residuals: Option<KktResiduals>,
    pub cuts: usize,
    pub outer_iterations: usize,
    pub qp_solves: usize,
    pub converged: bool,
    pub solve_time_s: f64,
}

/// Runs one policy and simulates its schedule. A proposed run whose outer
/// loop does not settle is returned with `converged = false`.
pub fn run_policy(
    scn: &Scenario,
    policy: Policy,
    objective: &ObjectiveSpec,
    opts: &DlcOptions,
) -> Result<PolicyRun, DlcError> {
    let start = Instant::now();
    let solution = match policy {
        Policy::WoDlc => {
            let net = scn
                .network
                .to_per_unit()
                .map_err(|e| crate::optimizer::build::BuildError::Dimension(e.to_string()))?;
            let schedule = baseline_wo_dlc(scn);
            let simulation = simulate_schedule(&net, &scn.households, &schedule, &opts.pf)?;
            return Ok(PolicyRun {
                policy,
                schedule,
                simulation,
                linear_state: Vec::new(),
                objective: None,
                residuals: None,
                cuts: 0,
                outer_iterations: 0,
                qp_solves: 0,
                converged: true,
                solve_time_s: start.elapsed().as_secs_f64(),
            });
        }
        Policy::Conventional => baseline_conventional(scn, objective, opts)?,
        Policy::Proposed => match solve_dlc(scn, objective, opts) {
            Ok(s) => s,
            Err(DlcError::OuterLoopNotConverged { best }) => {
                warn!("using the last outer iterate of an unsettled run");
                *best
            }
            Err(e) => return Err(e),
        },
    };
    Ok(PolicyRun {
        policy,
        objective: Some(solution.objective),
        residuals: Some(solution.residuals),
        cuts: solution.cuts,
        outer_iterations: solution.outer_iterations,
        qp_solves: solution.qp_solves,
        converged: solution.converged,
        schedule: solution.schedule,
        simulation: solution.simulation,
        linear_state: solution.linear_state,
        solve_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub policy: Policy,
    pub objective: Option<f64>,
    /// Σ household utilities of the schedule.
    pub utility: f64,
    pub lse_cost: f64,
    pub cuts: usize,
    pub outer_iterations: usize,
    pub qp_solves: usize,
    pub converged: bool,
    /// Largest simulated ‖s_0‖ over the event window, MVA.
    pub peak_event_mva: f64,
    pub min_voltage_kv: f64,
    pub max_voltage_kv: f64,
    pub cap_violation: bool,
    pub voltage_violation: bool,
}

/// Simulated PCC active power per slot, kW.
pub fn pcc_active_kw(scn: &Scenario, sim: &Simulation) -> Vec<f64> {
    let kw = 1000.0 * scn.network.base.s_mva;
    sim.states
        .iter()
        .map(|s| pcc_injection(&scn.network, s).0.iter().sum::<f64>() * kw)
        .collect()
}

/// Supply cost of the LSE: PCC purchase at the simulated active power plus
/// DG generation cost.
pub fn lse_cost(scn: &Scenario, sim: &Simulation) -> f64 {
    let pcc = pcc_active_kw(scn, sim);
    let purchase: f64 = pcc
        .iter()
        .enumerate()
        .map(|(t, p)| scn.profiles.pcc_cost.eval(t, *p))
        .sum();
    let dg: f64 = scn
        .network
        .dg_units
        .iter()
        .filter_map(|d| d.cost.as_ref().map(|c| (d, c)))
        .flat_map(|(d, c)| (0..scn.network.horizon).map(move |t| c.eval(t, d.p_max[t])))
        .sum();
    purchase + dg
}

pub fn total_utility(scn: &Scenario, schedule: &Schedule) -> f64 {
    let dt = scn.network.dt_h;
    scn.households
        .iter()
        .zip(&schedule.appliances)
        .flat_map(|(h, s)| h.appliances.iter().zip(s))
        .filter(|(a, _)| !a.is_critical())
        .map(|(a, s)| utility(a, s, dt).unwrap_or(f64::NAN))
        .sum()
}

pub fn summarize(scn: &Scenario, run: &PolicyRun) -> Summary {
    let sim = &run.simulation;
    let net = &scn.network;
    let peak_event_mva = scn
        .dlc_event
        .window
        .indices(net.horizon)
        .into_iter()
        .map(|t| sim.pcc_mva[t])
        .fold(0.0, f64::max);
    let mut min_v = f64::INFINITY;
    let mut max_v: f64 = 0.0;
    let mut voltage_violation = false;
    for state in &sim.voltages {
        for (bus, v) in net.buses.iter().zip(&state.voltage) {
            for ph in (0..3).filter(|&ph| bus.phases[ph]) {
                let kv = v[ph].norm() * net.base.v_kv;
                min_v = min_v.min(kv);
                max_v = max_v.max(kv);
                if kv < bus.v_min * (1.0 - VIOLATION_TOL) || kv > bus.v_max * (1.0 + VIOLATION_TOL)
                {
                    voltage_violation = true;
                }
            }
        }
    }
    Summary {
        policy: run.policy,
        objective: run.objective,
        utility: total_utility(scn, &run.schedule),
        lse_cost: lse_cost(scn, sim),
        cuts: run.cuts,
        outer_iterations: run.outer_iterations,
        qp_solves: run.qp_solves,
        converged: run.converged,
        peak_event_mva,
        min_voltage_kv: min_v,
        max_voltage_kv: max_v,
        cap_violation: peak_event_mva > scn.dlc_event.s_cap_mva * (1.0 + VIOLATION_TOL),
        voltage_violation,
    }
}

const SUMMARY_HEADER: [&str; 14] = [
    "policy",
    "objective",
    "utility",
    "lse_cost",
    "cuts",
    "outer_iterations",
    "qp_solves",
    "converged",
    "peak_event_mva",
    "min_voltage_kv",
    "max_voltage_kv",
    "cap_violation",
    "voltage_violation",
    "s_cap_mva",
];

/// Shortest round-trip form; exponent notation for very small or large
/// magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn summary_record(s: &Summary, s_cap: f64) -> Vec<String> {
    vec![
        s.policy.to_string(),
        s.objective.map(num).unwrap_or_default(),
        num(s.utility),
        num(s.lse_cost),
        s.cuts.to_string(),
        s.outer_iterations.to_string(),
        s.qp_solves.to_string(),
        s.converged.to_string(),
        num(s.peak_event_mva),
        num(s.min_voltage_kv),
        num(s.max_voltage_kv),
        s.cap_violation.to_string(),
        s.voltage_violation.to_string(),
        num(s_cap),
    ]
}

fn csv_writer(path: &Path) -> io::Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_writer(std::fs::File::create(path)?))
}

fn io_err(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

/// Writes summary rows, one per policy, in the given order.
pub fn write_summary(path: &Path, scn: &Scenario, rows: &[Summary]) -> io::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SUMMARY_HEADER).map_err(io_err)?;
    for s in rows {
        w.write_record(summary_record(s, scn.dlc_event.s_cap_mva))
            .map_err(io_err)?;
    }
    w.flush()
}

/// Wall-clock solve times. Kept apart from the summary so that every other
/// report file is reproducible byte for byte.
pub fn write_timing(path: &Path, runs: &[&PolicyRun]) -> io::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["policy", "solve_time_s"]).map_err(io_err)?;
    for r in runs {
        w.write_record([r.policy.to_string(), format!("{:.3}", r.solve_time_s)])
            .map_err(io_err)?;
    }
    w.flush()
}

/// `t, <column>...` with one series per column; `t` is the 1-based label.
fn write_series(path: &Path, header: &[String], columns: &[Vec<f64>]) -> io::Result<()> {
    let mut w = csv_writer(path)?;
    let mut head = vec!["t".to_string()];
    head.extend(header.iter().cloned());
    w.write_record(&head).map_err(io_err)?;
    let len = columns.first().map_or(0, Vec::len);
    for t in 0..len {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(columns.iter().map(|c| num(c[t])));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()
}

fn vmin_columns(sim: &Simulation) -> Vec<Vec<f64>> {
    (0..3)
        .map(|ph| sim.v_min_kv.iter().map(|v| v[ph]).collect())
        .collect()
}

/// Writes `pcc.csv`, `vmin.csv`, `summary.csv`, `timing.csv` and one
/// `household_<id>.csv` per household into `dir`.
pub fn write_run(dir: &Path, scn: &Scenario, run: &PolicyRun) -> io::Result<Summary> {
    std::fs::create_dir_all(dir)?;
    let sim = &run.simulation;
    write_series(
        &dir.join("pcc.csv"),
        &["pcc_mva".into()],
        std::slice::from_ref(&sim.pcc_mva),
    )?;
    write_series(
        &dir.join("vmin.csv"),
        &["vmin_a_kv".into(), "vmin_b_kv".into(), "vmin_c_kv".into()],
        &vmin_columns(sim),
    )?;
    for (h, sched) in scn.households.iter().zip(&run.schedule.appliances) {
        let mut header = Vec::new();
        let mut columns = Vec::new();
        for (a, s) in h.appliances.iter().zip(sched) {
            header.push(format!("{}_kw", a.name));
            columns.push(s.p.clone());
            if let (ApplianceKind::Thermostatic(_), Some(t_in)) = (&a.kind, &s.t_in) {
                header.push(format!("{}_t_in_f", a.name));
                columns.push(t_in.clone());
            }
        }
        write_series(
            &dir.join(format!("household_{}.csv", h.id)),
            &header,
            &columns,
        )?;
    }
    let summary = summarize(scn, run);
    write_summary(
        &dir.join("summary.csv"),
        scn,
        std::slice::from_ref(&summary),
    )?;
    write_timing(&dir.join("timing.csv"), &[run])?;
    Ok(summary)
}

/// Merged series of several runs plus a markdown summary; each run's own
/// bundle goes into a subdirectory named after the policy.
pub fn write_comparison(
    dir: &Path,
    scn: &Scenario,
    runs: &[PolicyRun],
) -> io::Result<Vec<Summary>> {
    std::fs::create_dir_all(dir)?;
    let mut summaries = Vec::new();
    for r in runs {
        summaries.push(write_run(&dir.join(r.policy.name()), scn, r)?);
    }
    let names: Vec<String> = runs
        .iter()
        .map(|r| r.policy.name().replace('-', "_"))
        .collect();
    write_series(
        &dir.join("pcc.csv"),
        &names.iter().map(|n| format!("{n}_mva")).collect::<Vec<_>>(),
        &runs
            .iter()
            .map(|r| r.simulation.pcc_mva.clone())
            .collect::<Vec<_>>(),
    )?;
    let mut header = Vec::new();
    let mut columns = Vec::new();
    for (n, r) in names.iter().zip(runs) {
        for (ph, col) in ["a", "b", "c"].iter().zip(vmin_columns(&r.simulation)) {
            header.push(format!("{n}_vmin_{ph}_kv"));
            columns.push(col);
        }
    }
    write_series(&dir.join("vmin.csv"), &header, &columns)?;
    write_summary(&dir.join("summary.csv"), scn, &summaries)?;
    write_timing(&dir.join("timing.csv"), &runs.iter().collect::<Vec<_>>())?;
    std::fs::write(dir.join("summary.md"), markdown(scn, &summaries))?;
    Ok(summaries)
}

/// Markdown table of the summaries with the LSE cost change of each policy
/// relative to the first row.
pub fn markdown(scn: &Scenario, rows: &[Summary]) -> String {
    let mut out = format!(
        "# Policy comparison\n\nScenario seed {}, cap {} MVA over slots {}.\n\n",
        scn.rng_seed, scn.dlc_event.s_cap_mva, scn.dlc_event.window
    );
    out.push_str(
        "| policy | LSE cost | Δ cost | utility | event peak (MVA) | min V (kV) | cap violation | voltage violation |\n",
    );
    out.push_str("|---|---:|---:|---:|---:|---:|---|---|\n");
    let reference = rows.first().map(|r| r.lse_cost).unwrap_or(0.0);
    for r in rows {
        out.push_str(&format!(
            "| {} | {:.4} | {:+.4} | {:.4} | {:.4} | {:.4} | {} | {} |\n",
            r.policy,
            r.lse_cost,
            r.lse_cost - reference,
            r.utility,
            r.peak_event_mva,
            r.min_voltage_kv,
            r.cap_violation,
            r.voltage_violation
        ));
    }
    out
}
