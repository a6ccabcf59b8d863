//! Simulation and estimation toolkit for Hong–Ou–Mandel polarization
//! microscopy.
//!
//! A birefringent sample in the signal arm of a two-photon interferometer
//! changes the coincidence rate at the centre of the HOM dip according to
//! P_c = ½·[1 − α·e^{−Δz²/l_c²}·cos²2θ]. This crate simulates photon-counting
//! raster scans of synthetic phantoms through that interferometer, including
//! photon loss, and recovers the per-pixel fast-axis angle θ with a
//! maximum-likelihood estimator.
//!
//! Module map:
//!
//! - [`polarization`]: Jones matrices, rotations, retarders, composition.
//! - [`hom`]: two-photon state evolution and coincidence probabilities.
//! - [`detection`]: lossy click statistics and multinomial log-likelihood.
//! - [`inference`]: Fisher information, calibration and the angle estimator.
//! - [`montecarlo`]: reproducible per-stream multinomial sampling.
//! - [`phantom`]: synthetic shard phantoms and their fixture format.
//! - [`scan`]: raster-scan acquisition, map building and dip studies.
//! - [`cli`]: the `hompol` command implementations.

pub mod cli;
pub mod config;
pub mod detection;
pub mod dipfit;
pub mod error;
pub mod hom;
pub mod inference;
pub mod io;
pub mod montecarlo;
pub mod phantom;
pub mod polarization;
pub mod scan;

pub use error::{Error, Result};
