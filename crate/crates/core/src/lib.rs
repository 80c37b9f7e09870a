pub mod coeval;
pub mod diagnostics;
pub mod eval;
pub mod mapping;
pub mod model;
pub mod project;
pub mod qlang;
pub mod rdf;
pub mod unionfind;

pub use diagnostics::Diagnostic;
