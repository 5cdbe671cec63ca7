//! JSON scenario documents. Field names carry their units; the in-memory
//! model drops the suffixes.

use super::{
    invalid, BaseLoad, CostProfile, DgUnit, DlcEvent, Line, NetError, NetworkParts, Phase,
    PhaseSet, Profiles, Scenario,
};
use crate::appliance::{Appliance, ApplianceKind, Household, Thermal};
use crate::time::RingWindow;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A number meaning "the same value in every slot it applies to", or an
/// explicit series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Scalar(f64),
    Values(Vec<f64>),
}

impl Series {
    fn expand(&self, t: usize, mask: Option<&[bool]>) -> Vec<f64> {
        match self {
            Series::Values(v) => v.clone(),
            Series::Scalar(x) => (0..t)
                .map(|k| if mask.is_none_or(|m| m[k]) { *x } else { 0.0 })
                .collect(),
        }
    }

    fn compress(v: &[f64], mask: Option<&[bool]>) -> Series {
        let inside: Vec<f64> = v
            .iter()
            .enumerate()
            .filter(|(k, _)| mask.is_none_or(|m| m[*k]))
            .map(|(_, x)| *x)
            .collect();
        let outside_zero = v
            .iter()
            .enumerate()
            .all(|(k, x)| mask.is_none_or(|m| m[k]) || *x == 0.0);
        match inside.first() {
            Some(first) if outside_zero && inside.iter().all(|x| x == first) => {
                Series::Scalar(*first)
            }
            _ => Series::Values(v.to_vec()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    rng_seed: u64,
    network: NetworkFile,
    households: Vec<HouseholdFile>,
    dg: Vec<DgFile>,
    profiles: Profiles,
    dlc_event: DlcEvent,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    v_ref_kv: f64,
    v_min_kv: f64,
    v_max_kv: f64,
    s_base_mva: f64,
    horizon: usize,
    dt_h: f64,
    buses: Vec<BusFile>,
    lines: Vec<LineFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusFile {
    id: usize,
    phases: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v_min_kv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v_max_kv: Option<f64>,
    /// Non-participating demand per phase A, B, C.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_p_kw: Option<[Series; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_q_kvar: Option<[Series; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineFile {
    from: usize,
    to: usize,
    r_ohm: [[f64; 3]; 3],
    x_ohm: [[f64; 3]; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_limits_kw: Option<[[f64; 2]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_limits_kvar: Option<[[f64; 2]; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DgFile {
    id: usize,
    bus: usize,
    phase: Phase,
    p_max_kw: Vec<f64>,
    q_min_kvar: f64,
    q_max_kvar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost: Option<CostProfile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HouseholdFile {
    id: usize,
    bus: usize,
    phase: Phase,
    appliances: Vec<ApplianceFile>,
}

// `deny_unknown_fields` does not combine with the flattened kind tag.
#[derive(Debug, Serialize, Deserialize)]
struct ApplianceFile {
    id: usize,
    name: String,
    #[serde(flatten)]
    kind: KindFile,
    #[serde(default = "unity")]
    eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<RingWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_min_kw: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_max_kw: Option<Series>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    utility_weight: Option<f64>,
}

fn unity() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum KindFile {
    Critical {
        p_kw: Vec<f64>,
        q_kvar: Vec<f64>,
    },
    Interruptible {
        p_pref_kw: Series,
    },
    Deferrable {
        e_min_kwh: f64,
        e_max_kwh: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p_pref_kw: Option<Series>,
    },
    Thermostatic {
        alpha: f64,
        beta_f_per_kw: f64,
        t_conf_f: Series,
        t_min_f: Series,
        t_max_f: Series,
        t_init_f: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_out_f: Option<Series>,
    },
}

fn parse_phases(s: &str, bus: usize) -> Result<PhaseSet, NetError> {
    let mut set = [false; 3];
    for ch in s.chars() {
        let i = match ch {
            'A' => 0,
            'B' => 1,
            'C' => 2,
            _ => {
                return Err(invalid(
                    format!("bus {bus}"),
                    format!("unknown phase `{ch}`"),
                ))
            }
        };
        if set[i] {
            return Err(invalid(
                format!("bus {bus}"),
                format!("phase `{ch}` repeated"),
            ));
        }
        set[i] = true;
    }
    Ok(set)
}

fn limits_in(l: Option<[[f64; 2]; 3]>) -> Option<[(f64, f64); 3]> {
    l.map(|a| a.map(|[lo, hi]| (lo, hi)))
}

fn limits_out(l: Option<[(f64, f64); 3]>) -> Option<[[f64; 2]; 3]> {
    l.map(|a| a.map(|(lo, hi)| [lo, hi]))
}

fn mat_in(m: [[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

fn mat_out(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

/// Max power until the energy target is met, in window order.
pub fn greedy_profile(window: &RingWindow, p_max: &[f64], energy: f64, dt: f64) -> Vec<f64> {
    let t = p_max.len();
    let mut out = vec![0.0; t];
    let mut left = energy;
    for k in window.indices(t) {
        let p = p_max[k].min(left / dt).max(0.0);
        out[k] = p;
        left -= p * dt;
    }
    out
}

fn appliance_in(
    a: ApplianceFile,
    household: usize,
    t: usize,
    dt: f64,
    t_out: &[f64],
) -> Result<Appliance, NetError> {
    let entity = || format!("household {household} appliance {}", a.id);
    if let KindFile::Critical { p_kw, q_kvar } = a.kind {
        return Ok(Appliance {
            id: a.id,
            household,
            name: a.name,
            eta: a.eta,
            p_min: p_kw.clone(),
            p_max: p_kw.clone(),
            window: RingWindow::all_day(t),
            utility_weight: a.utility_weight.unwrap_or(0.0),
            kind: ApplianceKind::Critical { p: p_kw, q: q_kvar },
        });
    }
    let window = a
        .window
        .ok_or_else(|| invalid(entity(), "missing window"))?;
    if !window.is_valid(t) {
        return Err(invalid(
            entity(),
            format!("window {window:?} outside 1..={t}"),
        ));
    }
    let mask = window.mask(t);
    let p_min = a
        .p_min_kw
        .map_or(vec![0.0; t], |s| s.expand(t, Some(&mask)));
    let p_max = a
        .p_max_kw
        .ok_or_else(|| invalid(entity(), "missing p_max_kw"))?
        .expand(t, Some(&mask));
    let kind = match a.kind {
        KindFile::Critical { .. } => unreachable!(),
        KindFile::Interruptible { p_pref_kw } => ApplianceKind::Interruptible {
            p_pref: p_pref_kw.expand(t, Some(&mask)),
        },
        KindFile::Deferrable {
            e_min_kwh,
            e_max_kwh,
            p_pref_kw,
        } => ApplianceKind::Deferrable {
            e_min: e_min_kwh,
            e_max: e_max_kwh,
            p_pref: p_pref_kw.map_or_else(
                || greedy_profile(&window, &p_max, e_max_kwh, dt),
                |s| s.expand(t, Some(&mask)),
            ),
        },
        KindFile::Thermostatic {
            alpha,
            beta_f_per_kw,
            t_conf_f,
            t_min_f,
            t_max_f,
            t_init_f,
            t_out_f,
        } => ApplianceKind::Thermostatic(Thermal {
            alpha,
            beta: beta_f_per_kw,
            t_conf: t_conf_f.expand(t, None),
            t_min: t_min_f.expand(t, None),
            t_max: t_max_f.expand(t, None),
            t_out: t_out_f.map_or_else(|| t_out.to_vec(), |s| s.expand(t, None)),
            t_init: t_init_f,
        }),
    };
    Ok(Appliance {
        id: a.id,
        household,
        name: a.name,
        kind,
        eta: a.eta,
        p_min,
        p_max,
        window,
        utility_weight: a
            .utility_weight
            .ok_or_else(|| invalid(entity(), "missing utility_weight"))?,
    })
}

fn appliance_out(a: &Appliance, t_out: &[f64], dt: f64) -> ApplianceFile {
    let t = a.horizon();
    let mask = a.window.mask(t);
    let windowed = |v: &[f64]| Series::compress(v, Some(&mask));
    let plain = |v: &[f64]| Series::compress(v, None);
    let (kind, window, p_min, p_max, weight) = match &a.kind {
        ApplianceKind::Critical { p, q } => (
            KindFile::Critical {
                p_kw: p.clone(),
                q_kvar: q.clone(),
            },
            None,
            None,
            None,
            None,
        ),
        other => {
            let kind = match other {
                ApplianceKind::Interruptible { p_pref } => KindFile::Interruptible {
                    p_pref_kw: windowed(p_pref),
                },
                ApplianceKind::Deferrable {
                    e_min,
                    e_max,
                    p_pref,
                } => KindFile::Deferrable {
                    e_min_kwh: *e_min,
                    e_max_kwh: *e_max,
                    p_pref_kw: if *p_pref == greedy_profile(&a.window, &a.p_max, *e_max, dt) {
                        None
                    } else {
                        Some(windowed(p_pref))
                    },
                },
                ApplianceKind::Thermostatic(th) => KindFile::Thermostatic {
                    alpha: th.alpha,
                    beta_f_per_kw: th.beta,
                    t_conf_f: plain(&th.t_conf),
                    t_min_f: plain(&th.t_min),
                    t_max_f: plain(&th.t_max),
                    t_init_f: th.t_init,
                    t_out_f: (th.t_out != t_out).then(|| plain(&th.t_out)),
                },
                ApplianceKind::Critical { .. } => unreachable!(),
            };
            let p_min = (a.p_min.iter().any(|x| *x != 0.0)).then(|| windowed(&a.p_min));
            (
                kind,
                Some(a.window),
                p_min,
                Some(windowed(&a.p_max)),
                Some(a.utility_weight),
            )
        }
    };
    ApplianceFile {
        id: a.id,
        name: a.name.clone(),
        kind,
        eta: a.eta,
        window,
        p_min_kw: p_min,
        p_max_kw: p_max,
        utility_weight: weight,
    }
}

fn from_file(f: ScenarioFile) -> Result<Scenario, NetError> {
    let n = f.network;
    let t = n.horizon;
    let mut buses = Vec::with_capacity(n.buses.len());
    let mut base_loads = Vec::new();
    let zero = || {
        [
            Series::Scalar(0.0),
            Series::Scalar(0.0),
            Series::Scalar(0.0),
        ]
    };
    for b in &n.buses {
        if b.base_p_kw.is_some() || b.base_q_kvar.is_some() {
            let expand = |s: &Option<[Series; 3]>| -> [Vec<f64>; 3] {
                let s = s.clone().unwrap_or_else(zero);
                [
                    s[0].expand(t, None),
                    s[1].expand(t, None),
                    s[2].expand(t, None),
                ]
            };
            base_loads.push(BaseLoad {
                bus: b.id,
                p: expand(&b.base_p_kw),
                q: expand(&b.base_q_kvar),
            });
        }
        let limits = match (b.v_min_kv, b.v_max_kv) {
            (None, None) => None,
            (lo, hi) => Some((lo.unwrap_or(n.v_min_kv), hi.unwrap_or(n.v_max_kv))),
        };
        buses.push((b.id, parse_phases(&b.phases, b.id)?, limits));
    }
    let lines = n
        .lines
        .into_iter()
        .map(|l| Line {
            from: l.from,
            to: l.to,
            r: mat_in(l.r_ohm),
            x: mat_in(l.x_ohm),
            p_limits: limits_in(l.p_limits_kw),
            q_limits: limits_in(l.q_limits_kvar),
        })
        .collect();
    let dg_units =
        f.dg.into_iter()
            .map(|d| DgUnit {
                id: d.id,
                bus: d.bus,
                phase: d.phase,
                p_max: d.p_max_kw,
                q_min: d.q_min_kvar,
                q_max: d.q_max_kvar,
                cost: d.cost,
            })
            .collect();
    if f.profiles.t_out_f.len() != t {
        return Err(invalid("profiles", format!("t_out_f must have length {t}")));
    }
    let mut households = Vec::with_capacity(f.households.len());
    for h in f.households {
        let appliances = h
            .appliances
            .into_iter()
            .map(|a| appliance_in(a, h.id, t, n.dt_h, &f.profiles.t_out_f))
            .collect::<Result<_, _>>()?;
        households.push(Household {
            id: h.id,
            bus: h.bus,
            phase: h.phase,
            appliances,
        });
    }
    Scenario::assemble(
        NetworkParts {
            buses,
            lines,
            base_loads,
            dg_units,
            v_ref_kv: n.v_ref_kv,
            v_min_kv: n.v_min_kv,
            v_max_kv: n.v_max_kv,
            s_base_mva: n.s_base_mva,
            horizon: t,
            dt_h: n.dt_h,
        },
        households,
        f.profiles,
        f.dlc_event,
        f.rng_seed,
    )
}

fn to_file(s: &Scenario, v_min_kv: f64, v_max_kv: f64) -> ScenarioFile {
    let net = &s.network;
    ScenarioFile {
        rng_seed: s.rng_seed,
        network: NetworkFile {
            v_ref_kv: net.v_ref,
            v_min_kv,
            v_max_kv,
            s_base_mva: net.base.s_mva,
            horizon: net.horizon,
            dt_h: net.dt_h,
            buses: net
                .buses
                .iter()
                .map(|b| {
                    let custom = b.v_min != v_min_kv || b.v_max != v_max_kv;
                    let series = |v: &[Vec<f64>; 3]| {
                        v.iter()
                            .any(|s| s.iter().any(|x| *x != 0.0))
                            .then(|| [0, 1, 2].map(|ph| Series::compress(&v[ph], None)))
                    };
                    BusFile {
                        base_p_kw: series(&b.base_p),
                        base_q_kvar: series(&b.base_q),
                        id: b.id,
                        phases: super::phase_set_to_string(&b.phases),
                        v_min_kv: custom.then_some(b.v_min),
                        v_max_kv: custom.then_some(b.v_max),
                    }
                })
                .collect(),
            lines: net
                .lines
                .iter()
                .map(|l| LineFile {
                    from: l.from,
                    to: l.to,
                    r_ohm: mat_out(&l.r),
                    x_ohm: mat_out(&l.x),
                    p_limits_kw: limits_out(l.p_limits),
                    q_limits_kvar: limits_out(l.q_limits),
                })
                .collect(),
        },
        households: s
            .households
            .iter()
            .map(|h| HouseholdFile {
                id: h.id,
                bus: h.bus,
                phase: h.phase,
                appliances: h
                    .appliances
                    .iter()
                    .map(|a| appliance_out(a, &s.profiles.t_out_f, net.dt_h))
                    .collect(),
            })
            .collect(),
        dg: net
            .dg_units
            .iter()
            .map(|d| DgFile {
                id: d.id,
                bus: d.bus,
                phase: d.phase,
                p_max_kw: d.p_max.clone(),
                q_min_kvar: d.q_min,
                q_max_kvar: d.q_max,
                cost: d.cost.clone(),
            })
            .collect(),
        profiles: s.profiles.clone(),
        dlc_event: s.dlc_event,
    }
}

/// Parses a scenario document. `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, NetError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        NetError::Parse {
            path: origin.to_string(),
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    from_file(file)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, NetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Serializes an SI scenario. The most common bus voltage limits become
/// the network-wide defaults.
pub fn scenario_to_string(s: &Scenario) -> String {
    let mut limits: Vec<(f64, f64)> = s.network.buses.iter().map(|b| (b.v_min, b.v_max)).collect();
    limits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut best = limits[0];
    let mut best_count = 0;
    let mut k = 0;
    while k < limits.len() {
        let run = limits[k..].iter().take_while(|x| **x == limits[k]).count();
        if run > best_count {
            best = limits[k];
            best_count = run;
        }
        k += run;
    }
    let mut out = serde_json::to_string_pretty(&to_file(s, best.0, best.1))
        .expect("scenario serialization cannot fail");
    out.push('\n');
    out
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), NetError> {
    let path = path.as_ref();
    std::fs::write(path, scenario_to_string(s)).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
      "rng_seed": 7,
      "network": {
        "v_ref_kv": 4.16, "v_min_kv": 4.05, "v_max_kv": 4.37,
        "s_base_mva": 1.0, "horizon": 2, "dt_h": 1.0,
        "buses": [{"id": 0, "phases": "ABC"}, {"id": 1, "phases": "ABC"}],
        "lines": [{"from": 0, "to": 1,
                   "r_ohm": [[0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]],
                   "x_ohm": [[0.05, 0, 0], [0, 0.05, 0], [0, 0, 0.05]]}]
      },
      "households": [{"id": 0, "bus": 1, "phase": "B", "appliances": [
        {"id": 0, "name": "base", "kind": "critical", "p_kw": [1, 2], "q_kvar": [0.5, 1]},
        {"id": 1, "name": "lamp", "kind": "interruptible", "p_pref_kw": 0.8,
         "eta": 0.9, "window": {"first": 2, "last": 2}, "p_max_kw": 1.0, "utility_weight": 2}
      ]}],
      "dg": [],
      "profiles": {
        "t_out_f": [80, 82], "critical_shape": [0.5, 1], "pv_shape": [0, 0],
        "price_shape": [1, 1],
        "pcc_cost": {"a_per_kw2": [0, 0], "b_per_kw": [0.1, 0.1], "c": [0, 0]}
      },
      "dlc_event": {"window": {"first": 1, "last": 2}, "s_cap_mva": 0.95}
    }"#;

    #[test]
    fn minimal_two_bus_scenario() {
        let s = parse_scenario(MINIMAL, "minimal").unwrap();
        assert_eq!(s.network.buses.len(), 2);
        assert_eq!(s.network.lines.len(), 1);
        assert_eq!(s.network.buses[1].critical_p[1], vec![1.0, 2.0]);
        let lamp = &s.households[0].appliances[1];
        assert_eq!(lamp.p_max, vec![0.0, 1.0]);
        assert_eq!(
            lamp.kind,
            ApplianceKind::Interruptible {
                p_pref: vec![0.0, 0.8]
            }
        );
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let s = parse_scenario(MINIMAL, "minimal").unwrap();
        let text = scenario_to_string(&s);
        let again = parse_scenario(&text, "again").unwrap();
        assert_eq!(again, s);
        assert_eq!(scenario_to_string(&again), text);
    }

    #[test]
    fn duplicate_bus_is_reported() {
        let text = MINIMAL.replace(
            r#"{"id": 1, "phases": "ABC"}"#,
            r#"{"id": 0, "phases": "ABC"}"#,
        );
        let err = parse_scenario(&text, "dup").unwrap_err();
        assert!(err.to_string().contains("duplicate bus id"), "{err}");
    }

    #[test]
    fn parse_error_names_field_and_line() {
        let text = MINIMAL.replace(r#""s_base_mva": 1.0"#, r#""s_base_mva": "big""#);
        match parse_scenario(&text, "bad").unwrap_err() {
            NetError::Parse { field, line, .. } => {
                assert_eq!(field, "network.s_base_mva");
                assert_eq!(line, 5);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn household_on_missing_phase_rejected() {
        let text = MINIMAL.replace(
            r#"{"id": 1, "phases": "ABC"}"#,
            r#"{"id": 1, "phases": "AC"}"#,
        );
        assert!(parse_scenario(&text, "phase").is_err());
    }

    #[test]
    fn greedy_washer_profile() {
        let w = RingWindow::new(18, 19);
        let p_max: Vec<f64> = (1..=24)
            .map(|l| if w.contains_label(l) { 0.7 } else { 0.0 })
            .collect();
        let p = greedy_profile(&w, &p_max, 0.9, 1.0);
        assert!((p[17] - 0.7).abs() < 1e-12);
        assert!((p[18] - 0.2).abs() < 1e-12);
        assert_eq!(p.iter().filter(|x| **x > 0.0).count(), 2);
    }
}
