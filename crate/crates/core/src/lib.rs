//! Extended Swift–Hohenberg equation: normal form at onset, localised
//! states and their continuation, linear stability and time evolution.

pub mod continuation;
pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod normal_form;
pub mod stability;
pub mod steady;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Parity};
pub use model::ModelParams;
