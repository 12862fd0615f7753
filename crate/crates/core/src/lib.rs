//! Hitting-time scaling, local dimension and strong Borel–Cantelli statistics
//! for a small suite of chaotic maps on the circle and the 2-torus.
//!
//! The numerical core is generic over [`Scalar`], implemented for `f32`, `f64`
//! and exact [`BigRational`](num_rational::BigRational). The aliases below fix
//! the scalar to `f64`, which is what the experiment runner uses.

pub mod correlation;
pub mod dimension;
pub mod error;
pub mod hitting;
pub mod measure;
pub mod oracle;
pub mod rng;
pub mod sbc;
pub mod scalar;
pub mod stats;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
pub use rng::BitTape;
pub use scalar::Scalar;
pub use systems::{Backend, Family, MeasureKind, Space};

pub type Point = systems::Point<f64>;
pub type SystemSpec = systems::SystemSpec<f64>;
pub type OrbitState = systems::OrbitState<f64>;
