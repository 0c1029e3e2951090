//! Simulation and analysis toolkit for Hong-Ou-Mandel interference between a
//! weak coherent source (WCS) and a heralded single-photon source (HSPS).
//!
//! The crate is organised bottom-up:
//!
//! * [`fock`]: truncated Fock-space states, tensor products, partial traces
//!   and threshold heralding.
//! * [`hom`]: the beam-splitter circuit, threshold POVM, three-fold
//!   coincidence probabilities and HOM visibility maps.
//! * [`temporal`]: the analytic coincidence profile versus detection delay
//!   (triangular gate envelope times a filter-limited dip).
//! * [`mc`]: a seeded event-level Monte Carlo that emits time tags.
//! * [`coincidence`]: tag-file I/O, herald-referenced histogramming and dip
//!   fitting.

pub mod coincidence;
pub mod fock;
pub mod hom;
pub mod mc;
pub mod temporal;
pub mod tolerance;

pub use num_complex::Complex64;

/// Labels used by the circuit. Modes 1 and 2 at the interference splitter are
/// `WCS` and `SIGNAL`; the heralding detector watches `IDLER`.
pub mod labels {
    pub const WCS: &str = "wcs";
    pub const SIGNAL: &str = "sig";
    pub const IDLER: &str = "idl";
}
