//! Speech emotion recognition toolkit.
//!
//! The pipeline runs from WAV decoding ([`audio`]) through augmentation
//! ([`augment`]) and MFCC extraction ([`dsp`]) to a 1D convolutional network
//! with channel and spatial attention ([`nn`]) trained with Adam on a
//! softmax cross-entropy objective ([`learn`]). Labeled manifests for the
//! supported corpora come from [`corpus`].

pub mod audio;
pub mod augment;
pub mod corpus;
pub mod dsp;
pub mod learn;
pub mod nn;

#[cfg(test)]
mod testutil;
