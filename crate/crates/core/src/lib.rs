pub mod assembly;
pub mod bpx;
pub mod error;
pub mod interpolation;
pub mod mesh;
pub mod multilevel;
pub mod quadrature;
pub mod simplex;
pub mod sparse;
pub mod verification;
pub mod spectral;
