pub mod baseline;
pub mod build;
pub mod cuts;
pub mod dlc;
pub mod ldl;
pub mod qp;

pub use crate::netmodel::DlcEvent;
pub use baseline::{baseline_conventional, baseline_wo_dlc};
pub use build::{build_problem, Cut, DlcProblem, NetworkModel, ObjectiveSpec};
pub use cuts::{pcc_cap_cuts, CutOutcome};
pub use dlc::{solve_dlc, DlcError, DlcOptions, Solution};
pub use qp::{solve_qp, QpOptions, QpProblem};
