//! LQG control over a lossy wireless network whose sensor is powered by
//! simultaneous wireless information and power transfer (SWIPT).
//!
//! A single transmitter splits its power: a fraction α carries the control
//! packet to the actuator and the rest is harvested by the sensor, which
//! spends it on sending measurements back. The crate solves the coupled
//! modified Riccati equations, locates the α interval in which the
//! infinite-horizon cost is bounded, evaluates and minimizes the cost bounds
//! over α, and checks everything against a seeded Monte Carlo simulator.

pub mod bounds;
pub mod channels;
pub mod critical;
pub mod error;
pub mod linalg;
pub mod lqg;
pub mod model;
pub mod optimizer;
pub mod riccati;
pub mod sim;

pub use error::{Error, Result};
