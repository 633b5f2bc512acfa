//! Heat semigroups, kernels and weights on the unit ball with the measure
//! `(1 - |x|^2)^{mu - 1/2} dx`, and the numerical checks built on them.

pub mod campaign;
pub mod config;
pub mod csv;
pub mod dd;
pub mod dirichlet;
pub mod error;
pub mod geometry;
pub mod jacobi;
pub mod kernel_lab;
pub mod par;
pub mod quadrature;
pub mod scalar;
pub mod spectral;
pub mod weights;

pub use error::{Error, Result};
pub use geometry::{BallPoint, BallRegion, ModelParams, RegionRule, SpherePoint};
pub use jacobi::MultiIndex;
pub use quadrature::{GridFunction, QuadratureRule};
pub use spectral::{HeatKernel, KernelValue, SpectralCoefficients, SpectralTransform, Truncation};
