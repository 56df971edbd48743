pub mod certify;
pub mod command;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod geom;
pub mod model;
pub mod output;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
