pub mod controlled;
pub mod error;
pub mod expr;
pub mod feynman_kac;
pub mod rde;
pub mod reference;
pub mod rng;
pub mod roughpath;
pub mod verify;

pub use error::{Error, Result};
