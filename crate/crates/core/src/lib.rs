//! Eigenvalue estimation for non-normal matrices whose target eigenvalues lie
//! on a known curve, via discretized resolvents on a shifted contour.

pub mod numkit;
pub mod curves;
pub mod matgen;
pub mod kreiss;
pub mod resolvent;
pub mod estimator;
pub mod paramcurve;
pub mod suites;

/// Library version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
