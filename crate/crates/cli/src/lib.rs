//! Command-line driver: scenario files in, CSV series and verification
//! reports out.

pub mod config;
pub mod functionals;
pub mod output;
pub mod run;
