//! Numerical laboratory for direct error bounds and their sharpness in
//! univariate approximation by single-hidden-layer networks.

pub mod error;
pub mod experiments;
pub mod func_core;
pub mod gliding_hump;
pub mod network_approx;
pub mod resonance;
pub mod smoothness;
pub mod spline_approx;
pub mod zeros_vc;

pub use error::{Error, Result};
pub use func_core::{
    eval_activation, eval_network, norm, ActivationKind, FunctionHandle, Grid, PNorm, RidgeNetwork, Term,
};
