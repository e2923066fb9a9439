//! SPD Siamese networks for skeleton-based motion recognition, and an online
//! detector/classifier engine that segments and recognizes motions in
//! unsegmented frame streams.

pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod network;
pub mod online;
pub mod skeleton;
pub mod spd;

pub use error::{Error, Result};
