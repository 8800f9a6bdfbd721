//! Fusion of a low-resolution hyperspectral image with a high-resolution
//! multispectral image using a pixel-token transformer that predicts the
//! residual over a bicubic upsampling.

pub mod rng;
pub mod tensor;
pub mod data;
pub mod model;
pub mod metrics;
pub mod train;
pub mod verify;
