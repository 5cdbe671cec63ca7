pub mod appliance;
pub mod distflow;
pub mod netmodel;
pub mod optimizer;
pub mod pfexact;
pub mod report;
pub mod scenario;
pub mod schedule;
pub mod testing;
pub mod time;
