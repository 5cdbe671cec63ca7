//! Outer approximation of the PCC apparent-power cap by supporting
//! hyperplanes.

use super::build::Cut;
use crate::netmodel::DlcEvent;

/// Slack allowed before a slot counts as violated (pu).
pub const CUT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum CutOutcome {
    Satisfied,
    Cuts(Vec<Cut>),
}

/// One cut per event slot whose stacked PCC vector `z[t]` lies outside the
/// ball of radius `s_cap` (pu). Each cut `(z/‖z‖)ᵀ z ≤ s_cap` touches the
/// ball at `s_cap · z/‖z‖` and strictly separates `z`.
pub fn pcc_cap_cuts(z: &[[f64; 6]], event: &DlcEvent, s_cap: f64) -> CutOutcome {
    if !s_cap.is_finite() {
        return CutOutcome::Satisfied;
    }
    let mut cuts = Vec::new();
    for t in event.window.indices(z.len()) {
        let norm = z[t].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > s_cap + CUT_TOLERANCE {
            cuts.push(Cut {
                t,
                normal: z[t].map(|x| x / norm),
            });
        }
    }
    if cuts.is_empty() {
        CutOutcome::Satisfied
    } else {
        CutOutcome::Cuts(cuts)
    }
}
