//! Layered space-time block codes with partial interference cancellation
//! (PIC) group decoding over quasi-static Rayleigh MIMO channels.

pub mod codes;
pub mod constellation;
pub mod cxnum;
pub mod detect;
pub mod diversity;
pub mod equivch;
pub mod error;
pub mod rotation;
pub mod sim;

pub use error::{Error, Result};
