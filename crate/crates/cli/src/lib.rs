//! Scenario file schema, builtin scenarios and CSV output for the
//! simulation CLI.

pub mod builtin;
pub mod csv_out;
pub mod schema;
