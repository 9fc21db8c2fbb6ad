//! Two-dimensional incompressible oil/water simulator (IMPES) used as the
//! forward operator, together with the measurement model.
//!
//! Units: m³/day, mD, m, kgf/cm², cP, days.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod data;
mod error;
mod pressure;
mod simulate;
mod transport;
pub mod units;

pub use config::{
    five_spot_wells, ChannelKind, DataChannels, FlowConfig, FluidSpec, NoiseSpec, RockSpec, Role, Schedule,
    TransportMode, WellSpec, DEFAULT_INJECTION_RATE, DEFAULT_PRODUCER_BHP,
};
pub use data::{observe, DataLabel, DataLayout, Observation};
pub use error::FlowError;
pub use pressure::{solve_pressure, Discretization, PressureSolution, WellCell};
pub use simulate::{data_len, simulate, simulate_ensemble, Diagnostics, SimResult, SimState};
pub use transport::{advance_saturation, max_stable_dt, TransportPlan, TransportStep};
