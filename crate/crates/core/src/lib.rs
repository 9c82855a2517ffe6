//! Shape analysis by biabduction with shared learning and loop extrapolation.

pub mod biabduction;
pub mod engine;
pub mod extrapolation;
pub mod frontend;
pub mod interpreter;
pub mod memory;
pub mod seplogic;
pub mod testgen;
