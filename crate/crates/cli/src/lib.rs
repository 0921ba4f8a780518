//! Command-line front end for the Lyapunov lifting pipeline.

pub mod report;
pub mod run;
pub mod spec;
