//! Multistatic 3D SAR toolkit for two-line acquisition geometries.
//!
//! Transmitters and receivers move along two straight horizontal lines that
//! meet at an angle `beta`. Every transmitter/receiver pair defines a family
//! of confocal iso-delay ellipsoids, and the toolkit is organised around that
//! geometry:
//!
//! * [`geometry`] — trajectory parameterisations, the translation+rotation
//!   into ellipsoid-centred coordinates, and prolate spheroidal transforms.
//! * [`microlocal`] — the three-surface intersection residuals that govern
//!   which false scatterers can appear, the direction-matching determinant
//!   with its positivity bounds, and the derived time-gating rule.
//! * [`oracle`] — a brute-force grid-seeded Gauss-Newton solver that finds
//!   every point producing data indistinguishable from a given scatterer,
//!   used as independent ground truth for the gating claims.
//! * [`simulator`] — stepped-frequency phase-history synthesis for point
//!   scatterer scenes, plus fast/slow time gating of recorded data.
//! * [`imager`] — bistatic backprojection onto a voxel grid, a range
//!   compressed fast path, BEM virtual-aperture computation, MIP rendering
//!   and dB normalisation.
//! * [`persistence`] — bit-exact binary formats for phase histories and
//!   image volumes, CSV report writers, and run-configuration parsing.
//! * [`presets`] — ready-made desk-scale and full-scale run configurations.

// Validations use `!(x > 0)` rather than `x <= 0` so NaN inputs fail too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod imager;
pub mod microlocal;
pub mod oracle;
pub mod persistence;
pub mod presets;
pub mod simulator;
pub mod vec3;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;
