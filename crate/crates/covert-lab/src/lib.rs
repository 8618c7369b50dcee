//! Covert-conversation laboratory.
//!
//! Mock language-model conversations, an exact-law bundle sampler, feedback
//! signaling over binary symmetric channels, an LSPN key exchange, toy and
//! ideal uniform-transcript key exchange, steganographic overlays, Fourier and
//! decoding distinguishers, and a seeded experiment harness.

pub mod bundle;
pub mod error;
pub mod mockmodel;
pub mod primitives;
pub mod prke;
pub mod signaling;
pub mod harness;
pub mod lspn;
pub mod attacks;
pub mod covert;

pub use error::{Error, Result};
