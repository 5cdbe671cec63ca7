//! Device-level decision values over the horizon.

use crate::appliance::{ApplianceKind, ApplianceSchedule, Household};
use crate::netmodel::{Network, Units};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// `[household position][appliance position]`, kW / kvar.
    pub appliances: Vec<Vec<ApplianceSchedule>>,
    /// DG reactive output `[dg][t]`, kvar.
    pub dg_q: Vec<Vec<f64>>,
}

impl Schedule {
    /// All flexible appliances off, DG reactive output zero; critical
    /// appliances follow their fixed profiles.
    pub fn idle(households: &[Household], dg_count: usize, horizon: usize) -> Self {
        let appliances = households
            .iter()
            .map(|h| {
                h.appliances
                    .iter()
                    .map(|a| match &a.kind {
                        ApplianceKind::Critical { p, q } => ApplianceSchedule {
                            p: p.clone(),
                            q: q.clone(),
                            t_in: None,
                        },
                        ApplianceKind::Thermostatic(th) => {
                            let p = vec![0.0; horizon];
                            ApplianceSchedule {
                                t_in: Some(th.trajectory(&p)),
                                q: p.clone(),
                                p,
                            }
                        }
                        _ => ApplianceSchedule {
                            p: vec![0.0; horizon],
                            q: vec![0.0; horizon],
                            t_in: None,
                        },
                    })
                    .collect()
            })
            .collect();
        Schedule {
            appliances,
            dg_q: vec![vec![0.0; horizon]; dg_count],
        }
    }

    /// Per-slot, per-bus complex consumption (pu) on a per-unit network:
    /// aggregated critical load plus flexible appliances minus DG.
    pub fn injections(&self, net: &Network, households: &[Household]) -> Vec<Vec<[Complex64; 3]>> {
        assert_eq!(net.units, Units::PerUnit);
        let scale = 1.0 / net.base.s_kva();
        (0..net.horizon)
            .map(|t| {
                let mut s: Vec<[Complex64; 3]> = net
                    .buses
                    .iter()
                    .map(|b| {
                        std::array::from_fn(|ph| {
                            Complex64::new(b.critical_p[ph][t], b.critical_q[ph][t])
                        })
                    })
                    .collect();
                for (h, hh) in households.iter().enumerate() {
                    let ph = hh.phase.index();
                    for (a, app) in hh.appliances.iter().enumerate() {
                        if app.is_critical() {
                            continue;
                        }
                        let sched = &self.appliances[h][a];
                        s[hh.bus][ph] += Complex64::new(sched.p[t], sched.q[t]) * scale;
                    }
                }
                for (g, dg) in net.dg_units.iter().enumerate() {
                    s[dg.bus][dg.phase.index()] -=
                        Complex64::new(dg.p_max[t], self.dg_q[g][t] * scale);
                }
                s
            })
            .collect()
    }
}
