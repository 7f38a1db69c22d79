//! Rolling-shutter camera simulation, virtual IMU synthesis from video and
//! tremor-based measurand authentication.

pub mod auth;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod features;
mod fft2;
pub mod register;
pub mod rse;
pub mod sidechan;
pub mod sigcore;
pub mod simulate;
pub mod video;

pub use error::{Error, Result};
