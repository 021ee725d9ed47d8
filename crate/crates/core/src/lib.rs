pub mod analysis;
pub mod assembly;
pub mod error;
pub mod linalg;
pub mod minres;
pub mod model;
pub mod optimizer;
pub mod quadrature;
pub mod uzawa;

pub use error::{Error, Result};
