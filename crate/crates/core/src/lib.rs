//! Planar quasi-static simulation of a modular, tendon-driven compliant
//! robotic foot, plus the obstacle bench used to validate it.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: parametric foot description and band/joint stiffness derivation
//! - [`kinematics`]: planar forward kinematics of the two open chains,
//!   rolling couplings and the arch loop-closure residual
//! - [`tendon`]: minimal-path tendon routing over module pulleys
//! - [`contact`]: penetration-based soft contact against obstacles
//! - [`solver`]: damped dynamic relaxation to quasi-static equilibrium
//! - [`bench`]: the 48-trial obstacle protocol and its error metrics
//! - [`io`]: model files, CSV/JSON/SVG outputs and MJCF export

pub mod bench;
pub mod contact;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod model;
pub mod solver;
pub mod tendon;

pub use error::{Error, Result};
pub use model::{build_default_softfoot, validate_model, FootModel};

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.81;
