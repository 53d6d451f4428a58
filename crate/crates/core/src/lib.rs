//! Estimators for metric mean dimension with potential on finite samples.
//!
//! The pipeline runs bottom-up: a [`system`] and a sample give an
//! [`orbit`] table; [`pressure`] counts weighted separated and spanning sets on
//! it; [`estimate`] turns those counts into growth rates and mean-dimension
//! proxies; [`variational`] works on the dual side with finite dictionaries,
//! measures on the sample and the matrix-game solver in [`lp`].

pub mod config;
pub mod error;
pub mod estimate;
pub mod logspace;
pub mod lp;
pub mod orbit;
pub mod pressure;
pub mod system;
pub mod variational;

pub use error::{Error, Result};
