//! Deterministic simulator and analysis library for current sharing among
//! parallel DC/DC buck converters on a common DC bus.
//!
//! Converters regulate their output voltage against a shared resistive load
//! reached through unequal cable resistances. Unequal cables make the
//! converters split the load current unevenly; virtual-resistance droop plus
//! an adaptive droop-gain algorithm driven by the communicated average
//! current equalizes the shares (or splits them per configured load
//! factors), while a slow secondary loop restores the bus voltage.
//!
//! Module map:
//! - [`circuit`]: averaged plant model and fixed-step RK4 integration
//! - [`control`]: PI loops, droop law, adaptive gain update, mode machine
//! - [`comm`]: sampled current sharing with delay and seeded dropout
//! - [`scenario`]: event-driven simulation engine, traces and summaries
//! - [`analysis`]: closed-form two-converter sharing formulas
//!
//! All model math is generic over the scalar type via [`Real`]; `*64`
//! aliases at the crate root pin `f64` for ordinary use.

pub mod analysis;
pub mod circuit;
pub mod comm;
pub mod control;
pub mod error;
pub mod scenario;

use core::fmt;

use num_traits::{Float, FromPrimitive};

pub use error::CoreError;

/// Scalar type for all model quantities. Implemented by `f32` and `f64`.
pub trait Real: Float + FromPrimitive + fmt::Debug + fmt::Display + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + fmt::Debug + fmt::Display + 'static {}

/// Converts an `f64` constant into the working scalar type.
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant must be representable in the scalar type")
}

pub type ConverterParams64 = circuit::ConverterParams<f64>;
pub type NetworkConfig64 = circuit::NetworkConfig<f64>;
pub type PlantState64 = circuit::PlantState<f64>;
pub type AdaptiveDroopConfig64 = control::AdaptiveDroopConfig<f64>;
pub type ConverterController64 = control::ConverterController<f64>;
pub type Scenario64 = scenario::Scenario<f64>;
pub type Event64 = scenario::Event<f64>;
pub type RunOutput64 = scenario::RunOutput<f64>;
pub type Summary64 = scenario::Summary<f64>;
pub type Trace64 = scenario::Trace<f64>;
pub type SharingAnalysis64 = analysis::SharingAnalysis<f64>;
