pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod field;
pub mod io;
pub mod norms;
pub mod sampling;
pub mod spectral;
pub mod util;

#[cfg(test)]
mod testing;

pub use error::{ConfigIssue, Error, Result};
pub use field::SphereField;
pub use norms::DiagnosticsRow;
pub use spectral::{DealiasPolicy, FourierField, RealField, SpectralGrid};
