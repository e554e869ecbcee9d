//! Singular Hopf bifurcations and canard cycles in planar slow-fast systems.

pub mod jet;
pub mod normalform;
pub mod blowup;
pub mod allee;
pub mod sdi;
pub mod dynamics;
pub mod suite;
