//! Texture-feature classification of mammogram images with concurrent
//! self-organizing maps.
//!
//! The pipeline runs image loading ([`imaging`]), region selection ([`roi`]),
//! co-occurrence texture features ([`texture`]), a Fisher projection
//! ([`fisher`]), and one self-organizing map per class ([`som`], [`csom`]).
//! [`eval`] scores pipelines with cross-validation.

pub mod config;
pub mod csom;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fisher;
pub mod imaging;
pub mod model_file;
pub mod roi;
pub mod som;
pub mod synthetic;
pub mod texture;

pub use error::{Error, Result};
