//! Exact three-phase unbalanced power flow by backward/forward sweep with
//! constant-power loads.

use crate::appliance::Household;
use crate::distflow::{nominal_phasors, NetworkState};
use crate::netmodel::{Network, Units};
use crate::schedule::Schedule;
use log::trace;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfError {
    #[error("power flow did not converge{} after {iterations} iterations (residual {residual:.3e} pu)",
        t.map(|t| format!(" at t={}", t + 1)).unwrap_or_default())]
    NotConverged {
        t: Option<usize>,
        iterations: usize,
        residual: f64,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct PfOptions {
    pub max_iter: usize,
    /// Largest accepted |S_computed − S_specified| (pu).
    pub tol: f64,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVoltageState {
    pub voltage: Vec<[Complex64; 3]>,
    /// Series current of each line, from → to.
    pub current: Vec<[Complex64; 3]>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves one slot. `s_load[bus][phase]` is complex consumption (pu).
pub fn solve_pf(
    net: &Network,
    s_load: &[[Complex64; 3]],
    opts: &PfOptions,
) -> Result<ComplexVoltageState, PfError> {
    assert_eq!(net.units, Units::PerUnit);
    let n = net.buses.len();
    let present = |b: usize, ph: usize| net.buses[b].phases[ph];
    let slack = nominal_phasors().map(|c| c * net.v_ref);
    let zero = Complex64::new(0.0, 0.0);
    let mut v: Vec<[Complex64; 3]> = (0..n)
        .map(|b| std::array::from_fn(|ph| if present(b, ph) { slack[ph] } else { zero }))
        .collect();
    let z: Vec<_> = net.lines.iter().map(|l| l.z()).collect();
    let order = &net.topology.order;
    let mut current = vec![[zero; 3]; net.lines.len()];
    let mut residual = f64::INFINITY;
    // iterate past the acceptance tolerance for headroom
    let target = opts.tol * 1e-3;

    for it in 1..=opts.max_iter {
        let load_current = |b: usize, vb: &[Complex64; 3]| -> [Complex64; 3] {
            std::array::from_fn(|ph| {
                if present(b, ph) {
                    (s_load[b][ph] / vb[ph]).conj()
                } else {
                    zero
                }
            })
        };
        for &j in order.iter().rev().take(n - 1) {
            let l = net.topology.parent_line[j].unwrap();
            let mut i = load_current(j, &v[j]);
            for &cl in &net.topology.child_lines[j] {
                for ph in 0..3 {
                    i[ph] += current[cl][ph];
                }
            }
            current[l] = i;
        }
        let v_old = v.clone();
        for &j in order.iter().skip(1) {
            let l = net.topology.parent_line[j].unwrap();
            let from = net.lines[l].from;
            for ph in 0..3 {
                if present(j, ph) {
                    let drop: Complex64 = (0..3).map(|k| z[l][(ph, k)] * current[l][k]).sum();
                    v[j][ph] = v[from][ph] - drop;
                }
            }
        }
        // mismatch of the currents used in this sweep against the new voltages
        residual = 0.0;
        for &j in order.iter().skip(1) {
            let l = net.topology.parent_line[j].unwrap();
            for ph in 0..3 {
                if !present(j, ph) {
                    continue;
                }
                let mut i_net = current[l][ph];
                for &cl in &net.topology.child_lines[j] {
                    i_net -= current[cl][ph];
                }
                let s_calc = v[j][ph] * i_net.conj();
                residual = residual.max((s_calc - s_load[j][ph]).norm());
            }
        }
        let dv = v
            .iter()
            .zip(&v_old)
            .flat_map(|(a, b)| (0..3).map(move |ph| (a[ph] - b[ph]).norm()))
            .fold(0.0, f64::max);
        if !residual.is_finite() || !dv.is_finite() {
            break;
        }
        if residual <= target || (residual <= opts.tol && dv <= 1e-15) {
            trace!("sweep converged in {it} iterations, residual {residual:.2e}");
            return Ok(ComplexVoltageState {
                voltage: v,
                current,
                iterations: it,
                residual,
            });
        }
    }
    if residual <= opts.tol {
        return Ok(ComplexVoltageState {
            voltage: v,
            current,
            iterations: opts.max_iter,
            residual,
        });
    }
    Err(PfError::NotConverged {
        t: None,
        iterations: opts.max_iter,
        residual,
    })
}

/// Squared magnitudes and sending-end flows of a solved slot.
pub fn state_to_distflow(
    net: &Network,
    state: &ComplexVoltageState,
    s_load: &[[Complex64; 3]],
) -> NetworkState {
    let mut out = NetworkState::zeros(net.buses.len(), net.lines.len());
    for (b, vb) in state.voltage.iter().enumerate() {
        out.v[b] = vb.map(|c| c.norm_sqr());
        out.p_inj[b] = s_load[b].map(|c| c.re);
        out.q_inj[b] = s_load[b].map(|c| c.im);
    }
    for (l, line) in net.lines.iter().enumerate() {
        for ph in 0..3 {
            let s = state.voltage[line.from][ph] * state.current[l][ph].conj();
            out.p[l][ph] = s.re;
            out.q[l][ph] = s.im;
        }
    }
    out
}

/// PCC injection per phase: the sending-end flows of all lines leaving bus 0.
pub fn pcc_injection(net: &Network, state: &NetworkState) -> ([f64; 3], [f64; 3]) {
    let mut p = [0.0; 3];
    let mut q = [0.0; 3];
    for &l in &net.topology.child_lines[0] {
        for ph in 0..3 {
            p[ph] += state.p[l][ph];
            q[ph] += state.q[l][ph];
        }
    }
    (p, q)
}

/// 2-norm of the stacked (p, q) PCC injection (pu).
pub fn pcc_magnitude(net: &Network, state: &NetworkState) -> f64 {
    let (p, q) = pcc_injection(net, state);
    p.iter().chain(q.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// |S_pcc − Σ loads − Σ line losses| for one slot (pu).
pub fn energy_residual(
    net: &Network,
    state: &ComplexVoltageState,
    s_load: &[[Complex64; 3]],
) -> f64 {
    let mut s0 = Complex64::new(0.0, 0.0);
    for &l in &net.topology.child_lines[0] {
        for ph in 0..3 {
            s0 += state.voltage[0][ph] * state.current[l][ph].conj();
        }
    }
    let loads: Complex64 = s_load.iter().flat_map(|s| s.iter()).sum();
    let mut losses = Complex64::new(0.0, 0.0);
    for (l, line) in net.lines.iter().enumerate() {
        let z = line.z();
        let i = &state.current[l];
        for a in 0..3 {
            for b in 0..3 {
                losses += i[a].conj() * z[(a, b)] * i[b];
            }
        }
    }
    (s0 - loads - losses).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub states: Vec<NetworkState>,
    pub voltages: Vec<ComplexVoltageState>,
    /// ‖s_0(t)‖ in MVA.
    pub pcc_mva: Vec<f64>,
    /// Minimum |V| over buses per phase, kV.
    pub v_min_kv: Vec<[f64; 3]>,
    pub energy_residual: Vec<f64>,
}

/// Runs the sweep for every slot of a schedule. Slots are independent and
/// solved in parallel; results are collected in slot order.
pub fn simulate_schedule(
    net: &Network,
    households: &[Household],
    schedule: &Schedule,
    opts: &PfOptions,
) -> Result<Simulation, PfError> {
    let inj = schedule.injections(net, households);
    simulate_injections(net, &inj, opts)
}

pub fn simulate_injections(
    net: &Network,
    inj: &[Vec<[Complex64; 3]>],
    opts: &PfOptions,
) -> Result<Simulation, PfError> {
    let solved: Vec<ComplexVoltageState> = inj
        .par_iter()
        .enumerate()
        .map(|(t, s)| {
            solve_pf(net, s, opts).map_err(|e| match e {
                PfError::NotConverged {
                    iterations,
                    residual,
                    ..
                } => PfError::NotConverged {
                    t: Some(t),
                    iterations,
                    residual,
                },
            })
        })
        .collect::<Result<_, _>>()?;
    let mut sim = Simulation {
        states: Vec::with_capacity(inj.len()),
        voltages: Vec::with_capacity(inj.len()),
        pcc_mva: Vec::with_capacity(inj.len()),
        v_min_kv: Vec::with_capacity(inj.len()),
        energy_residual: Vec::with_capacity(inj.len()),
    };
    for (t, st) in solved.into_iter().enumerate() {
        let ns = state_to_distflow(net, &st, &inj[t]);
        sim.pcc_mva.push(pcc_magnitude(net, &ns) * net.base.s_mva);
        let mut vmin = [f64::INFINITY; 3];
        for (b, bus) in net.buses.iter().enumerate() {
            for ph in 0..3 {
                if bus.phases[ph] {
                    vmin[ph] = vmin[ph].min(st.voltage[b][ph].norm() * net.base.v_kv);
                }
            }
        }
        sim.v_min_kv.push(vmin);
        sim.energy_residual.push(energy_residual(net, &st, &inj[t]));
        sim.states.push(ns);
        sim.voltages.push(st);
    }
    Ok(sim)
}
