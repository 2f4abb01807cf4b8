//! Correlation-based inverse synthetic aperture imaging of rotating targets.
//!
//! The pipeline synthesizes receiver echoes of a rigid, spinning point
//! cluster on a linear orbit, estimates the spin axis and rate from the
//! autocorrelation supports, migrates the cross-correlations to pairs of
//! image points and extracts single-point, rank-1 and Kirchhoff images.

pub mod config;
pub mod correlation;
pub mod eigen;
pub mod geometry;
pub mod harness;
pub mod migration;
pub mod optim;
pub mod resolution_analysis;
pub mod rotation_estimation;
pub mod scenario;
pub mod waveform;

pub use num_complex::Complex64;
