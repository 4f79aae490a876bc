//! Lossless dynamic point-cloud geometry codec.
//!
//! Each frame is turned into a dyadic occupancy pyramid
//! ([`pyramid`]); the 8-bit occupancy codes of every level are arithmetic
//! coded ([`coder`]) under probabilities predicted by a learned entropy
//! model ([`model`]) from spatial context, temporal context taken from the
//! previously decoded frame, and already decoded sibling codes.

pub mod codec;
pub mod coder;
pub mod error;
pub mod geom;
pub mod io;
pub mod model;
pub mod nn;
pub mod pyramid;

pub use error::{Error, Result};
