//! Parkinsonian speech classification toolkit.
//!
//! The pipeline turns labelled speech segments into 40-row MFCC matrices,
//! summarises them as 480-entry statistics vectors, ranks features with nine
//! filter methods, and evaluates SVM, kNN, random-forest and CNN classifiers
//! with leave-one-subject-out cross-validation.
//!
//! ```text
//! manifest/WAV -> MFCC (40 x n) -> feature vector (480) -> ranking -> top-m -> classifier
//!                        \-> 40x40 windows -> CNN -> trimmed mean per segment
//! ```

pub mod classical;
pub mod corpus;
pub mod deepnet;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod selection;

pub use error::{Error, Result};
