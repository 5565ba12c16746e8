//! Continuous valence/arousal regression from audio and visual feature tracks.
//!
//! The crate covers the full pipeline:
//!
//! * [`audio_io`] decodes WAV files into mono sample buffers.
//! * [`dsp`] turns a clip into one 168-dim MFCC + log-mel vector per video frame.
//! * [`dataset`] loads feature/label tracks, normalizes them and cuts 15-frame windows.
//! * [`nn`] holds the dense/recurrent layers with hand-written backward passes.
//! * [`model`] assembles the three-branch fusion network and its unimodal baselines.
//! * [`metrics`] computes the concordance correlation coefficient and MSE.
//! * [`train`] runs RMSprop training, checkpointing and per-frame prediction export.

pub mod audio_io;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
