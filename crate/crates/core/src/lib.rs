pub mod data;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod features;
pub mod kernel;
pub mod linalg;
pub mod regression;
pub mod selection;

pub use error::{Error, ErrorKind, Result};
pub use exec::Backend;
