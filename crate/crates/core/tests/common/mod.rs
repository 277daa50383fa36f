//! Test-only oracles shared by the integration suites. Nothing here calls
//! into the estimator or gradient code it is used to check.

#![allow(dead_code)]

pub mod fd;
pub mod loops;
pub mod mc;
pub mod oracles;
pub mod synthetic;
