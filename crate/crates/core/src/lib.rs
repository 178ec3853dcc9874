//! Differentiable 3D Gaussian splatting with residual-split densification.
//!
//! This crate holds everything that is pure computation: the Gaussian model,
//! an exact CPU rasterizer with its analytic backward pass, the L1 + D-SSIM
//! loss, density control (residual split and the classic split/clone), the
//! image-pyramid stage schedule and the training loop. It is `no_std` with
//! `alloc`; the `std` feature parallelizes rendering over image rows.
//!
//! File formats, dataset loading and the command line live in the `resgs`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod densify;
pub mod error;
pub mod gradcheck;
pub mod image;
pub mod init;
pub mod loss;
pub mod math;
pub mod model;
pub mod optim;
mod par;
pub mod raster;
pub mod schedule;
pub mod sh;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use image::Image;
pub use model::{Camera, Gaussian, GaussianCloud};
pub use raster::{RenderOutput, RenderSettings, ViewspaceGradStats};
