//! Focusing of polarized light through plane-parallel uniaxial layers whose optic
//! axis is normal to the surfaces, and design of the positive-uniaxial plate that
//! cancels the polarization-dependent wavefront error of a negative-uniaxial
//! substrate (sapphire disc read through a quartz compensator).
//!
//! Lengths follow the conventions of the command-line tool: layer thicknesses in
//! millimetres, wavelengths in nanometres, wavefront errors in waves.

pub mod birefringence;
pub mod cli;
pub mod compensator;
pub mod error;
pub mod export;
pub mod materials;
pub mod parallel;
pub mod psf;
pub mod pupil;
pub mod search;
pub mod wavefront;
pub mod zernike;

pub use birefringence::{Layer, LayerStack, Mode, Polarization};
pub use compensator::{DesignMethod, DesignResult, ResidualReport};
pub use error::{Error, Result};
pub use materials::{Catalog, OpticalSign, UniaxialMaterial};
pub use wavefront::{FocusingConfig, WavefrontMap};
