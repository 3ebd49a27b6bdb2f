//! Offline power policies for joint information and energy cooperation
//! between an energy-harvesting primary transmitter and a secondary
//! transmitter that relays for it.

pub mod analysis;
pub mod baseline;
pub mod cli;
pub mod error;
pub mod fixture;
pub mod io;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod waterfill;

pub use error::{Error, Result};
