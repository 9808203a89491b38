//! Dense `f64` arrays with reverse-mode automatic differentiation.
//!
//! A [`Tape`] is rebuilt for every forward pass. Parameters live in a
//! [`ParameterStore`] and are bound onto the tape with [`Tape::param`];
//! [`Tape::backward`] writes their gradients back into the store, after which
//! an [`Optimizer`] updates them in place.

pub mod array;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod params;
pub mod tape;

pub use array::Array;
pub use error::{AutodiffError, Result};
pub use nn::{BiGru, BiGruRun, Gru, GruRun, Linear, SeqBatch};
pub use optim::{adam_step, sgd_step, Optimizer};
pub use params::{ParamId, Parameter, ParameterStore};
pub use tape::{gelu, leaky_relu, sigmoid, Gradients, PoolKind, Tape, Var, DEFAULT_LEAKY_SLOPE};
