//! Seeded generation of feeder scenarios: households with AC, washer, dryer,
//! lighting and plug loads on the load buses, PV units, day profiles and the
//! DLC event.
//!
//! Every household draws from its own ChaCha8 stream, keyed by
//! `(bus << 32) | slot`, so growing `households_per_bus` or adding buses
//! leaves earlier households untouched. PV units use streams with the top
//! bit set.

use crate::appliance::{pf_ratio, Appliance, ApplianceKind, Household, Thermal};
use crate::netmodel::{
    greedy_profile, BaseLoad, CostProfile, DgUnit, DlcEvent, Line, NetError, NetworkParts, Phase,
    Profiles, Scenario,
};
use crate::time::RingWindow;
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{origin}: {path}: {message}")]
    Parse {
        origin: String,
        path: String,
        message: String,
    },
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Network(#[from] NetError),
}

/// Closed interval `[lo, hi]` drawn uniformly.
pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeederSpec {
    pub v_ref_kv: f64,
    pub v_min_kv: f64,
    pub v_max_kv: f64,
    pub s_base_mva: f64,
    pub horizon: usize,
    pub dt_h: f64,
    /// Positive-sequence line data; every line carries all three phases.
    pub lines: Vec<LineSpec>,
    /// Off-diagonal entries of R and X as a fraction of the diagonal.
    pub mutual_coupling: f64,
    /// Factor applied to every published r, x.
    pub impedance_scale: f64,
    pub load_buses: Vec<usize>,
    /// Demand of customers outside the program, three-phase totals at the
    /// peak of the critical-load shape, split equally over the phases.
    pub base_loads: Vec<BaseLoadSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseLoadSpec {
    pub bus: usize,
    pub p_kw: f64,
    pub q_kvar: f64,
}

impl Default for FeederSpec {
    fn default() -> Self {
        let data = [
            (0.0922, 0.0470),
            (0.4930, 0.2511),
            (0.3660, 0.1864),
            (0.3811, 0.1941),
            (0.8190, 0.7070),
            (0.1872, 0.6188),
            (0.7114, 0.2351),
            (1.0300, 0.7400),
            (1.0440, 0.7400),
        ];
        FeederSpec {
            v_ref_kv: 4.16,
            v_min_kv: 4.05,
            v_max_kv: 4.37,
            s_base_mva: 1.0,
            horizon: 24,
            dt_h: 1.0,
            lines: data
                .iter()
                .enumerate()
                .map(|(k, &(r, x))| LineSpec {
                    from: k,
                    to: k + 1,
                    r_ohm: r,
                    x_ohm: x,
                })
                .collect(),
            mutual_coupling: 0.3,
            impedance_scale: 0.4,
            load_buses: (1..=9).collect(),
            base_loads: [
                (100.0, 60.0),
                (90.0, 40.0),
                (120.0, 80.0),
                (60.0, 30.0),
                (60.0, 20.0),
                (200.0, 100.0),
                (200.0, 100.0),
                (60.0, 20.0),
                (60.0, 20.0),
            ]
            .iter()
            .enumerate()
            .map(|(k, &(p_kw, q_kvar))| BaseLoadSpec {
                bus: k + 1,
                p_kw,
                q_kvar,
            })
            .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PvSpec {
    pub buses: Vec<usize>,
    pub capacity_kw: f64,
    pub q_max_kvar: f64,
}

impl Default for PvSpec {
    fn default() -> Self {
        PvSpec {
            buses: vec![2, 5, 7, 8],
            capacity_kw: 80.0,
            q_max_kvar: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcSpec {
    pub alpha: f64,
    pub beta_f_per_kw: Range,
    pub t_conf_f: Range,
    pub t_min_f: f64,
    pub t_max_f: f64,
    pub p_max_kw: f64,
    pub utility_weight: Range,
}

impl Default for AcSpec {
    fn default() -> Self {
        AcSpec {
            alpha: 0.9,
            beta_f_per_kw: [-8.0, -5.0],
            t_conf_f: [73.0, 76.0],
            t_min_f: 70.0,
            t_max_f: 79.0,
            p_max_kw: 3.5,
            utility_weight: [0.02, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WasherSpec {
    /// Arrival hour, drawn as an integer label.
    pub arrival: [usize; 2],
    pub start_after_arrival: usize,
    pub duration: usize,
    pub p_max_kw: f64,
    pub energy_kwh: f64,
    pub utility_weight: Range,
}

impl Default for WasherSpec {
    fn default() -> Self {
        WasherSpec {
            arrival: [17, 19],
            start_after_arrival: 1,
            duration: 2,
            p_max_kw: 0.7,
            energy_kwh: 0.9,
            utility_weight: [0.05, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DryerSpec {
    pub start_after_arrival: usize,
    /// Last slot label of the window; wraps past the end of the day.
    pub finish_label: usize,
    pub p_max_kw: f64,
    pub energy_kwh: Range,
    pub utility_weight: Range,
}

impl Default for DryerSpec {
    fn default() -> Self {
        DryerSpec {
            start_after_arrival: 3,
            finish_label: 1,
            p_max_kw: 5.0,
            energy_kwh: [4.5, 9.0],
            utility_weight: [0.05, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterruptibleSpec {
    pub window: RingWindow,
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    /// Preferred power, constant over the window.
    pub p_pref_kw: Range,
    pub utility_weight: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSpec {
    /// (hour label, value) knots, interpolated linearly on the ring.
    pub t_out_f: Vec<(f64, f64)>,
    pub critical_shape: Vec<(f64, f64)>,
    pub pv_shape: Vec<(f64, f64)>,
    pub price_shape: Vec<(f64, f64)>,
    /// PCC cost at price shape 1: a in $/kW², b in $/kW, c in $.
    pub cost_peak: [f64; 3],
    /// Per-household critical load at critical shape 1, kW.
    pub critical_peak_kw: Range,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec {
            t_out_f: vec![
                (0.0, 76.0),
                (3.0, 73.0),
                (6.0, 70.0),
                (9.0, 77.0),
                (12.0, 85.0),
                (15.0, 91.0),
                (17.0, 89.0),
                (19.0, 85.0),
                (21.0, 82.0),
                (24.0, 76.0),
            ],
            critical_shape: vec![
                (0.0, 0.55),
                (4.0, 0.4),
                (7.0, 0.5),
                (12.0, 0.6),
                (17.0, 0.75),
                (20.0, 0.95),
                (21.0, 1.0),
                (22.0, 0.95),
                (24.0, 0.55),
            ],
            pv_shape: vec![
                (6.0, 0.0),
                (8.0, 0.3),
                (10.0, 0.75),
                (13.0, 1.0),
                (16.0, 0.6),
                (18.0, 0.15),
                (19.0, 0.0),
            ],
            price_shape: vec![
                (0.0, 0.45),
                (5.0, 0.35),
                (9.0, 0.5),
                (14.0, 0.7),
                (18.0, 0.85),
                (21.0, 1.0),
                (24.0, 0.45),
            ],
            cost_peak: [2e-5, 0.12, 0.0],
            critical_peak_kw: [1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub window: RingWindow,
    pub s_cap_mva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub rng_seed: u64,
    pub households_per_bus: usize,
    pub eta: Range,
    pub feeder: FeederSpec,
    pub pv: PvSpec,
    pub ac: AcSpec,
    pub washer: WasherSpec,
    pub dryer: DryerSpec,
    pub lighting: InterruptibleSpec,
    pub plug: InterruptibleSpec,
    pub profiles: ProfileSpec,
    pub dlc_event: EventSpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            rng_seed: 42,
            households_per_bus: 15,
            eta: [0.8, 0.9],
            feeder: FeederSpec::default(),
            pv: PvSpec::default(),
            ac: AcSpec::default(),
            washer: WasherSpec::default(),
            dryer: DryerSpec::default(),
            lighting: InterruptibleSpec {
                window: RingWindow::new(19, 7),
                p_min_kw: 0.5,
                p_max_kw: 1.0,
                p_pref_kw: [0.5, 1.0],
                utility_weight: [0.1, 0.3],
            },
            plug: InterruptibleSpec {
                window: RingWindow::new(1, 24),
                p_min_kw: 0.0,
                p_max_kw: 0.5,
                p_pref_kw: [0.0, 0.5],
                utility_weight: [0.1, 0.3],
            },
            profiles: ProfileSpec::default(),
            dlc_event: EventSpec {
                window: RingWindow::new(19, 24),
                s_cap_mva: 0.95,
            },
        }
    }
}

impl ScenarioSpec {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, SpecError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| SpecError::Parse {
            origin: origin.to_string(),
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpecError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |m: String| Err(SpecError::Invalid(m));
        let ranges = [
            ("eta", self.eta),
            ("ac.beta_f_per_kw", self.ac.beta_f_per_kw),
            ("ac.t_conf_f", self.ac.t_conf_f),
            ("ac.utility_weight", self.ac.utility_weight),
            ("washer.utility_weight", self.washer.utility_weight),
            ("dryer.energy_kwh", self.dryer.energy_kwh),
            ("dryer.utility_weight", self.dryer.utility_weight),
            ("lighting.p_pref_kw", self.lighting.p_pref_kw),
            ("lighting.utility_weight", self.lighting.utility_weight),
            ("plug.p_pref_kw", self.plug.p_pref_kw),
            ("plug.utility_weight", self.plug.utility_weight),
            ("profiles.critical_peak_kw", self.profiles.critical_peak_kw),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name}: empty range [{lo}, {hi}]"));
            }
        }
        if !(self.eta[0] > 0.0 && self.eta[1] <= 1.0) {
            return bad("eta must lie in (0, 1]".into());
        }
        if self.washer.arrival[0] > self.washer.arrival[1] {
            return bad("washer.arrival: empty range".into());
        }
        if self.washer.duration == 0 {
            return bad("washer.duration must be positive".into());
        }
        let t = self.feeder.horizon;
        for (name, knots) in [
            ("t_out_f", &self.profiles.t_out_f),
            ("critical_shape", &self.profiles.critical_shape),
            ("pv_shape", &self.profiles.pv_shape),
            ("price_shape", &self.profiles.price_shape),
        ] {
            if knots.is_empty() {
                return bad(format!("profiles.{name}: no knots"));
            }
            if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                return bad(format!("profiles.{name}: knot hours must increase"));
            }
        }
        for (name, knots) in [
            ("critical_shape", &self.profiles.critical_shape),
            ("pv_shape", &self.profiles.pv_shape),
            ("price_shape", &self.profiles.price_shape),
        ] {
            if knots.iter().any(|k| !(0.0..=1.0).contains(&k.1)) {
                return bad(format!("profiles.{name}: values must lie in [0, 1]"));
            }
        }
        for w in [
            &self.lighting.window,
            &self.plug.window,
            &self.dlc_event.window,
        ] {
            if !w.is_valid(t) {
                return bad(format!("window {w:?} outside 1..={t}"));
            }
        }
        let n_bus = self.feeder.lines.len() + 1;
        if self
            .feeder
            .base_loads
            .iter()
            .any(|l| !(l.p_kw >= 0.0) || !l.q_kvar.is_finite())
        {
            return bad("feeder.base_loads: p_kw must be nonnegative and q_kvar finite".into());
        }
        let base_buses = self.feeder.base_loads.iter().map(|l| &l.bus);
        for &b in self
            .feeder
            .load_buses
            .iter()
            .chain(&self.pv.buses)
            .chain(base_buses)
        {
            if b == 0 || b >= n_bus {
                return bad(format!("bus {b} is not a load bus of a {n_bus}-bus feeder"));
            }
        }
        Ok(())
    }
}

/// Linear interpolation of `(hour, value)` knots at hour `h`; outside the
/// knot span the profile is held at the nearest end value, except that a
/// shape whose end knots are zero stays zero.
fn interpolate(knots: &[(f64, f64)], h: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if h <= first.0 {
        return first.1;
    }
    if h >= last.0 {
        return last.1;
    }
    let k = knots.partition_point(|k| k.0 <= h);
    let (a, b) = (knots[k - 1], knots[k]);
    a.1 + (b.1 - a.1) * (h - a.0) / (b.0 - a.0)
}

/// Samples every profile at the slot labels `1..=T` (hours `label·dt`).
pub fn synth_profiles(spec: &ScenarioSpec) -> Profiles {
    let t = spec.feeder.horizon;
    let dt = spec.feeder.dt_h;
    let p = &spec.profiles;
    let sample = |knots: &[(f64, f64)]| -> Vec<f64> {
        (1..=t).map(|l| interpolate(knots, l as f64 * dt)).collect()
    };
    let price = sample(&p.price_shape);
    Profiles {
        t_out_f: sample(&p.t_out_f),
        critical_shape: sample(&p.critical_shape),
        pv_shape: sample(&p.pv_shape),
        pcc_cost: CostProfile {
            a: price.iter().map(|s| p.cost_peak[0] * s).collect(),
            b: price.iter().map(|s| p.cost_peak[1] * s).collect(),
            c: price.iter().map(|s| p.cost_peak[2] * s).collect(),
        },
        price_shape: price,
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: Range) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

fn household_rng(seed: u64, bus: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((bus as u64) << 32) | slot as u64);
    rng
}

fn pv_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1u64 << 63) | k as u64);
    rng
}

fn masked(window: &RingWindow, t: usize, value: f64) -> Vec<f64> {
    window
        .mask(t)
        .into_iter()
        .map(|on| if on { value } else { 0.0 })
        .collect()
}

/// Wrap a 1-based label onto the ring `1..=t`.
fn wrap(label: usize, t: usize) -> usize {
    (label - 1) % t + 1
}

fn household(
    spec: &ScenarioSpec,
    profiles: &Profiles,
    id: usize,
    bus: usize,
    slot: usize,
) -> Household {
    let t = spec.feeder.horizon;
    let dt = spec.feeder.dt_h;
    let mut rng = household_rng(spec.rng_seed, bus, slot);
    let phase = Phase::from_index(rng.gen_range(0u32..3) as usize);
    let mut apps = Vec::with_capacity(6);

    // critical base load
    let eta = uniform(&mut rng, spec.eta);
    let peak = uniform(&mut rng, spec.profiles.critical_peak_kw);
    let p: Vec<f64> = profiles.critical_shape.iter().map(|s| peak * s).collect();
    let kappa = pf_ratio(eta).expect("eta validated");
    apps.push(Appliance {
        id: 0,
        household: id,
        name: "critical".into(),
        eta,
        p_min: p.clone(),
        p_max: p.clone(),
        window: RingWindow::all_day(t),
        utility_weight: 0.0,
        kind: ApplianceKind::Critical {
            q: p.iter().map(|x| x * kappa).collect(),
            p,
        },
    });

    // air conditioner
    let ac = &spec.ac;
    let eta = uniform(&mut rng, spec.eta);
    let beta = uniform(&mut rng, ac.beta_f_per_kw);
    let t_conf = uniform(&mut rng, ac.t_conf_f);
    let b = uniform(&mut rng, ac.utility_weight);
    apps.push(Appliance {
        id: 1,
        household: id,
        name: "ac".into(),
        eta,
        p_min: vec![0.0; t],
        p_max: vec![ac.p_max_kw; t],
        window: RingWindow::all_day(t),
        utility_weight: b,
        kind: ApplianceKind::Thermostatic(Thermal {
            alpha: ac.alpha,
            beta,
            t_conf: vec![t_conf; t],
            t_min: vec![ac.t_min_f; t],
            t_max: vec![ac.t_max_f; t],
            t_out: profiles.t_out_f.clone(),
            t_init: t_conf,
        }),
    });

    // washer and dryer share the arrival time
    let w = &spec.washer;
    let arrival = rng.gen_range(w.arrival[0] as u32..=w.arrival[1] as u32) as usize;
    let eta = uniform(&mut rng, spec.eta);
    let b = uniform(&mut rng, w.utility_weight);
    let start = wrap(arrival + w.start_after_arrival, t);
    let window = RingWindow::new(start, wrap(start + w.duration - 1, t));
    let p_max = masked(&window, t, w.p_max_kw);
    apps.push(Appliance {
        id: 2,
        household: id,
        name: "washer".into(),
        eta,
        p_min: vec![0.0; t],
        kind: ApplianceKind::Deferrable {
            e_min: w.energy_kwh,
            e_max: w.energy_kwh,
            p_pref: greedy_profile(&window, &p_max, w.energy_kwh, dt),
        },
        p_max,
        window,
        utility_weight: b,
    });

    let d = &spec.dryer;
    let eta = uniform(&mut rng, spec.eta);
    let e_max = uniform(&mut rng, d.energy_kwh);
    let b = uniform(&mut rng, d.utility_weight);
    let window = RingWindow::new(wrap(arrival + d.start_after_arrival, t), d.finish_label);
    let p_max = masked(&window, t, d.p_max_kw);
    apps.push(Appliance {
        id: 3,
        household: id,
        name: "dryer".into(),
        eta,
        p_min: vec![0.0; t],
        kind: ApplianceKind::Deferrable {
            e_min: d.energy_kwh[0],
            e_max,
            p_pref: greedy_profile(&window, &p_max, e_max, dt),
        },
        p_max,
        window,
        utility_weight: b,
    });

    for (k, (name, s)) in [("lighting", &spec.lighting), ("plug", &spec.plug)]
        .into_iter()
        .enumerate()
    {
        let eta = uniform(&mut rng, spec.eta);
        let pref = uniform(&mut rng, s.p_pref_kw).clamp(s.p_min_kw, s.p_max_kw);
        let b = uniform(&mut rng, s.utility_weight);
        apps.push(Appliance {
            id: 4 + k,
            household: id,
            name: name.into(),
            eta,
            p_min: masked(&s.window, t, s.p_min_kw),
            p_max: masked(&s.window, t, s.p_max_kw),
            window: s.window,
            utility_weight: b,
            kind: ApplianceKind::Interruptible {
                p_pref: masked(&s.window, t, pref),
            },
        });
    }

    Household {
        id,
        bus,
        phase,
        appliances: apps,
    }
}

/// Builds the scenario described by `spec`. Deterministic in the spec.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario, SpecError> {
    spec.validate()?;
    let f = &spec.feeder;
    let t = f.horizon;
    let profiles = synth_profiles(spec);
    let coupled = |d: f64| {
        let d = d * f.impedance_scale;
        Matrix3::from_fn(|i, j| if i == j { d } else { f.mutual_coupling * d })
    };
    let lines = f
        .lines
        .iter()
        .map(|l| Line {
            from: l.from,
            to: l.to,
            r: coupled(l.r_ohm),
            x: coupled(l.x_ohm),
            p_limits: None,
            q_limits: None,
        })
        .collect();
    let dg_units = spec
        .pv
        .buses
        .iter()
        .enumerate()
        .map(|(k, &bus)| {
            let mut rng = pv_rng(spec.rng_seed, k);
            DgUnit {
                id: k,
                bus,
                phase: Phase::from_index(rng.gen_range(0u32..3) as usize),
                p_max: profiles
                    .pv_shape
                    .iter()
                    .map(|s| spec.pv.capacity_kw * s)
                    .collect(),
                q_min: -spec.pv.q_max_kvar,
                q_max: spec.pv.q_max_kvar,
                cost: None,
            }
        })
        .collect();
    let base_loads = f
        .base_loads
        .iter()
        .map(|l| {
            let series = |total: f64| {
                let v: Vec<f64> = profiles
                    .critical_shape
                    .iter()
                    .map(|s| total / 3.0 * s)
                    .collect();
                [v.clone(), v.clone(), v]
            };
            BaseLoad {
                bus: l.bus,
                p: series(l.p_kw),
                q: series(l.q_kvar),
            }
        })
        .collect();
    let parts = NetworkParts {
        buses: (0..=f.lines.len()).map(|b| (b, [true; 3], None)).collect(),
        lines,
        base_loads,
        dg_units,
        v_ref_kv: f.v_ref_kv,
        v_min_kv: f.v_min_kv,
        v_max_kv: f.v_max_kv,
        s_base_mva: f.s_base_mva,
        horizon: t,
        dt_h: f.dt_h,
    };
    let mut households = Vec::new();
    for &bus in &f.load_buses {
        for slot in 0..spec.households_per_bus {
            let id = households.len();
            households.push(household(spec, &profiles, id, bus, slot));
        }
    }
    let event = DlcEvent {
        window: spec.dlc_event.window,
        s_cap_mva: spec.dlc_event.s_cap_mva,
    };
    Ok(Scenario::assemble(
        parts,
        households,
        profiles,
        event,
        spec.rng_seed,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_hits_knots_and_midpoints() {
        let k = [(0.0, 0.0), (2.0, 1.0), (4.0, 0.0)];
        assert_eq!(interpolate(&k, 2.0), 1.0);
        assert_eq!(interpolate(&k, 1.0), 0.5);
        assert_eq!(interpolate(&k, 5.0), 0.0);
        assert_eq!(interpolate(&k, -1.0), 0.0);
    }

    #[test]
    fn ring_wrap() {
        assert_eq!(wrap(24, 24), 24);
        assert_eq!(wrap(25, 24), 1);
        assert_eq!(wrap(22, 24), 22);
    }

    #[test]
    fn empty_range_is_rejected() {
        let spec = ScenarioSpec {
            eta: [0.9, 0.8],
            ..ScenarioSpec::default()
        };
        assert!(matches!(spec.validate(), Err(SpecError::Invalid(m)) if m.contains("eta")));
    }

    #[test]
    fn household_streams_are_independent_of_count() {
        let a = ScenarioSpec {
            households_per_bus: 2,
            ..ScenarioSpec::default()
        };
        let mut b = a.clone();
        b.households_per_bus = 3;
        let sa = generate(&a).unwrap();
        let sb = generate(&b).unwrap();
        // household (bus 1, slot 1) is id 1 in both
        assert_eq!(sa.households[1], sb.households[1]);
    }
}
