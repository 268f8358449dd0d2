pub mod autodiff;
pub mod burgers;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod physics;
pub mod problems;
pub mod runner;

pub use error::Error;
