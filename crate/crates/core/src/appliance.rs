//! Household appliance models: power-factor tie, thermal dynamics, utility
//! functions and the per-appliance feasible set.
//!
//! Powers are in kW, temperatures in °F. The optimizer maps the local
//! variables of [`feasible_set_constraints`] onto its global index space.

use crate::netmodel::Phase;
use crate::time::RingWindow;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ApplianceError {
    #[error("power factor {0} outside (0, 1]")]
    PowerFactor(f64),
    #[error("schedule does not match appliance {0}: {1}")]
    Mismatch(String, &'static str),
    #[error("appliance {id}: {reason}")]
    Invalid { id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ApplianceKind {
    /// Fixed consumption, folded into the bus load.
    Critical {
        p: Vec<f64>,
        q: Vec<f64>,
    },
    Interruptible {
        p_pref: Vec<f64>,
    },
    Deferrable {
        e_min: f64,
        e_max: f64,
        p_pref: Vec<f64>,
    },
    Thermostatic(Thermal),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thermal {
    pub alpha: f64,
    /// °F per kW; negative for cooling.
    pub beta: f64,
    pub t_conf: Vec<f64>,
    pub t_min: Vec<f64>,
    pub t_max: Vec<f64>,
    pub t_out: Vec<f64>,
    pub t_init: f64,
}

impl ApplianceKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ApplianceKind::Critical { .. } => "critical",
            ApplianceKind::Interruptible { .. } => "interruptible",
            ApplianceKind::Deferrable { .. } => "deferrable",
            ApplianceKind::Thermostatic(_) => "thermostatic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Appliance {
    pub id: usize,
    pub household: usize,
    pub name: String,
    pub kind: ApplianceKind,
    pub eta: f64,
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub window: RingWindow,
    pub utility_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Household {
    pub id: usize,
    pub bus: usize,
    pub phase: Phase,
    pub appliances: Vec<Appliance>,
}

/// Power trajectory of one appliance; `t_in` only for thermostatic kinds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApplianceSchedule {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub t_in: Option<Vec<f64>>,
}

impl fmt::Display for Appliance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}/{}#{}", self.household, self.name, self.id)
    }
}

/// Reactive-to-active ratio tan(arccos η).
pub fn pf_ratio(eta: f64) -> Result<f64, ApplianceError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(ApplianceError::PowerFactor(eta));
    }
    Ok((1.0 / (eta * eta) - 1.0).max(0.0).sqrt())
}

pub fn reactive_from_active(p: f64, eta: f64) -> Result<f64, ApplianceError> {
    Ok(p * pf_ratio(eta)?)
}

pub fn temperature_step(t_prev: f64, t_out: f64, p: f64, alpha: f64, beta: f64) -> f64 {
    t_prev + alpha * (t_out - t_prev) + beta * p
}

impl Thermal {
    /// Indoor temperature trajectory induced by `p`.
    pub fn trajectory(&self, p: &[f64]) -> Vec<f64> {
        let mut t = self.t_init;
        p.iter()
            .zip(&self.t_out)
            .map(|(&pt, &to)| {
                t = temperature_step(t, to, pt, self.alpha, self.beta);
                t
            })
            .collect()
    }

    /// Power that lands exactly on `target` from `t_prev` in one step.
    pub fn power_for(&self, t_prev: f64, t_out: f64, target: f64) -> f64 {
        (target - t_prev - self.alpha * (t_out - t_prev)) / self.beta
    }
}

impl Appliance {
    pub fn horizon(&self) -> usize {
        self.p_max.len()
    }

    /// Slots where the appliance may draw power.
    pub fn working(&self) -> Vec<usize> {
        self.window.indices(self.horizon())
    }

    pub fn pf_ratio(&self) -> f64 {
        pf_ratio(self.eta).unwrap_or(0.0)
    }

    pub fn is_critical(&self) -> bool {
        matches!(self.kind, ApplianceKind::Critical { .. })
    }

    pub fn validate(&self) -> Result<(), ApplianceError> {
        let bad = |reason: String| {
            Err(ApplianceError::Invalid {
                id: self.to_string(),
                reason,
            })
        };
        let t = self.horizon();
        pf_ratio(self.eta)?;
        if self.p_min.len() != t {
            return bad("p_min length differs from horizon".into());
        }
        if !self.window.is_valid(t) {
            return bad(format!("window {:?} outside 1..={t}", self.window));
        }
        let mask = self.window.mask(t);
        for k in 0..t {
            if !(0.0 <= self.p_min[k] && self.p_min[k] <= self.p_max[k]) {
                return bad(format!("power bounds invalid at t={}", k + 1));
            }
            if !mask[k] && self.p_max[k] != 0.0 {
                return bad(format!("nonzero power outside window at t={}", k + 1));
            }
        }
        if !self.is_critical() && self.utility_weight <= 0.0 {
            return bad("utility weight must be positive".into());
        }
        match &self.kind {
            ApplianceKind::Critical { p, q } => {
                if p.len() != t || q.len() != t {
                    return bad("critical profile length differs from horizon".into());
                }
            }
            ApplianceKind::Interruptible { p_pref } => {
                if p_pref.len() != t {
                    return bad("p_pref length differs from horizon".into());
                }
            }
            ApplianceKind::Deferrable {
                e_min,
                e_max,
                p_pref,
            } => {
                if p_pref.len() != t {
                    return bad("p_pref length differs from horizon".into());
                }
                if !(0.0 <= *e_min && e_min <= e_max) {
                    return bad(format!("energy window [{e_min}, {e_max}] invalid"));
                }
            }
            ApplianceKind::Thermostatic(th) => {
                if !(th.alpha > 0.0 && th.alpha < 1.0) {
                    return bad(format!("alpha {} outside (0, 1)", th.alpha));
                }
                if [&th.t_conf, &th.t_min, &th.t_max, &th.t_out]
                    .iter()
                    .any(|v| v.len() != t)
                {
                    return bad("temperature series length differs from horizon".into());
                }
                for k in 0..t {
                    if !(th.t_min[k] <= th.t_conf[k] && th.t_conf[k] <= th.t_max[k]) {
                        return bad(format!("comfort band inconsistent at t={}", k + 1));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Utility of a schedule (unitless; kW and °F inputs).
pub fn utility(app: &Appliance, sched: &ApplianceSchedule, dt: f64) -> Result<f64, ApplianceError> {
    let t = app.horizon();
    if sched.p.len() != t {
        return Err(ApplianceError::Mismatch(app.to_string(), "horizon length"));
    }
    let b = app.utility_weight;
    let u = match &app.kind {
        ApplianceKind::Critical { .. } => 0.0,
        ApplianceKind::Interruptible { p_pref } => {
            -b * (0..t)
                .map(|k| (sched.p[k] - p_pref[k]).powi(2))
                .sum::<f64>()
        }
        ApplianceKind::Deferrable { p_pref, .. } => deferrable_utility(app, p_pref, &sched.p, dt),
        ApplianceKind::Thermostatic(th) => {
            let t_in = match &sched.t_in {
                Some(v) if v.len() == t => v.clone(),
                Some(_) => return Err(ApplianceError::Mismatch(app.to_string(), "t_in length")),
                None => th.trajectory(&sched.p),
            };
            -b * (0..t)
                .map(|k| (t_in[k] - th.t_conf[k]).powi(2))
                .sum::<f64>()
        }
    };
    Ok(u)
}

/// b·(Σ p Δt − Σ k·(p − p_pref)²) with k the 1-based slot within the window.
pub fn deferrable_utility(app: &Appliance, p_pref: &[f64], p: &[f64], dt: f64) -> f64 {
    let t = app.horizon();
    let mut energy = 0.0;
    let mut penalty = 0.0;
    for k in 0..t {
        energy += p[k] * dt;
        if let Some(pos) = app.window.position(k, t) {
            penalty += pos as f64 * (p[k] - p_pref[k]).powi(2);
        }
    }
    app.utility_weight * (energy - penalty)
}

/// Variable of a single appliance's local model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LocalVar {
    P(usize),
    Q(usize),
    TIn(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    PowerFactor,
    Energy,
    Thermal,
}

/// `lo ≤ Σ coef·var + 0 ≤ hi`; equality when `lo == hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRow {
    pub kind: ConstraintKind,
    pub t: Option<usize>,
    pub terms: Vec<(LocalVar, f64)>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalBox {
    pub var: LocalVar,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalConstraints {
    pub rows: Vec<LocalRow>,
    pub boxes: Vec<LocalBox>,
}

/// Linear feasible set of one appliance. Powers exist only in working
/// slots; indoor temperature exists in every slot.
pub fn feasible_set_constraints(app: &Appliance, dt: f64) -> LocalConstraints {
    let mut out = LocalConstraints::default();
    if app.is_critical() {
        return out;
    }
    let kappa = app.pf_ratio();
    let working = app.working();
    for &t in &working {
        out.boxes.push(LocalBox {
            var: LocalVar::P(t),
            lo: app.p_min[t],
            hi: app.p_max[t],
        });
        out.rows.push(LocalRow {
            kind: ConstraintKind::PowerFactor,
            t: Some(t),
            terms: vec![(LocalVar::Q(t), 1.0), (LocalVar::P(t), -kappa)],
            lo: 0.0,
            hi: 0.0,
        });
    }
    match &app.kind {
        ApplianceKind::Deferrable { e_min, e_max, .. } => {
            out.rows.push(LocalRow {
                kind: ConstraintKind::Energy,
                t: None,
                terms: working.iter().map(|&t| (LocalVar::P(t), dt)).collect(),
                lo: *e_min,
                hi: *e_max,
            });
        }
        ApplianceKind::Thermostatic(th) => {
            let h = app.horizon();
            let mut on = vec![false; h];
            working.iter().for_each(|&t| on[t] = true);
            for t in 0..h {
                // T_in(t) − (1−α)T_in(t−1) − βp(t) = αT_out(t)
                let mut terms = vec![(LocalVar::TIn(t), 1.0)];
                let mut rhs = th.alpha * th.t_out[t];
                if t == 0 {
                    rhs += (1.0 - th.alpha) * th.t_init;
                } else {
                    terms.push((LocalVar::TIn(t - 1), -(1.0 - th.alpha)));
                }
                if on[t] {
                    terms.push((LocalVar::P(t), -th.beta));
                }
                out.rows.push(LocalRow {
                    kind: ConstraintKind::Thermal,
                    t: Some(t),
                    terms,
                    lo: rhs,
                    hi: rhs,
                });
                out.boxes.push(LocalBox {
                    var: LocalVar::TIn(t),
                    lo: th.t_min[t],
                    hi: th.t_max[t],
                });
            }
        }
        _ => {}
    }
    out
}

/// Independent check of a schedule against the appliance's feasible set.
/// Returns the largest violation found (0 when feasible).
pub fn check_schedule(app: &Appliance, s: &ApplianceSchedule, dt: f64) -> f64 {
    let h = app.horizon();
    let kappa = app.pf_ratio();
    let mut worst: f64 = 0.0;
    for t in 0..h {
        worst = worst.max(app.p_min[t] - s.p[t]).max(s.p[t] - app.p_max[t]);
        if !app.is_critical() {
            worst = worst.max((s.q[t] - kappa * s.p[t]).abs());
        }
    }
    match &app.kind {
        ApplianceKind::Critical { p, q } => {
            for t in 0..h {
                worst = worst.max((s.p[t] - p[t]).abs()).max((s.q[t] - q[t]).abs());
            }
        }
        ApplianceKind::Deferrable { e_min, e_max, .. } => {
            let e: f64 = s.p.iter().sum::<f64>() * dt;
            worst = worst.max(e_min - e).max(e - e_max);
        }
        ApplianceKind::Thermostatic(th) => {
            let traj = th.trajectory(&s.p);
            for t in 0..h {
                worst = worst.max(th.t_min[t] - traj[t]).max(traj[t] - th.t_max[t]);
            }
            if let Some(t_in) = &s.t_in {
                for t in 0..h {
                    worst = worst.max((t_in[t] - traj[t]).abs());
                }
            }
        }
        ApplianceKind::Interruptible { .. } => {}
    }
    worst
}
