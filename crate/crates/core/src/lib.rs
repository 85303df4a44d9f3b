//! Percolation Laplacians on Cayley graphs.
//!
//! Finite windows of Cayley graphs ([`graphs`]), subcritical percolation clusters
//! ([`percolation`]), the five Laplacian-type operators on them ([`operators`]), eigenvalue
//! tools and bound checkers ([`spectra`]), integrated density of states estimation and
//! exponent fits ([`ids`]), and random-walk return probabilities ([`walks`]).

pub mod error;
pub mod graphs;
pub mod ids;
pub mod operators;
pub mod percolation;
pub mod rng;
pub mod spectra;
pub mod walks;

pub use error::{Error, Result};
