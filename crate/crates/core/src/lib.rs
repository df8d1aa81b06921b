pub mod cognitive;
pub mod controller;
pub mod dialog;
pub mod distill;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod ontology;
pub mod policy;
pub mod regret;

pub use error::{Error, Result};
