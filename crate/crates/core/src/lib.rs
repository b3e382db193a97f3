//! Saliency-driven QP adaptation for video coding for machines.
//!
//! Object detections decide which coding tree units (CTUs) of a frame are
//! salient; salient CTUs keep the base QP while the rest are coded coarser.
//! The crate turns detections into per-CTU QP maps, runs them through a mock
//! or external codec, and scores the decoded result with instance-weighted
//! average precision and Bjøntegaard delta-rate.

pub mod bdrate;
pub mod codec;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod qpmap;

pub use error::{Error, Result};
