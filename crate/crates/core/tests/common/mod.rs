#![allow(dead_code)]
pub mod networks;
pub mod qp_oracle;
pub mod zbus;
