//! Desk-scale multimodal temporal-fusion pipeline.
//!
//! The crate builds, trains and evaluates a two-modality (visual +
//! audio) temporal grounding model end to end on synthetic data:
//!
//! - [`tensor`] / [`autodiff`] — dense f64 tensors with tape-based
//!   reverse-mode differentiation;
//! - [`nn`] — linear/attention/feed-forward building blocks;
//! - [`synthetic`] — deterministic feature generators and the toy
//!   grounding task;
//! - [`spatial`] / [`temporal`] — token reduction pathways (global
//!   residual pooling, grouped temporal convolution, temporal
//!   embeddings);
//! - [`fusion`] — the stacked dual-stream fusion transformer;
//! - [`bridge`] — query-based projector, frozen toy decoder and LoRA;
//! - [`objectives`] — contrastive / matching / generation losses;
//! - [`model`] — the assembled pipeline;
//! - [`training`] / [`checkpoint`] — staged training with freeze
//!   schedules, AdamW and checksummed checkpoints;
//! - [`grounding`] — structured segment output parsing and metrics;
//! - [`augment`] — template-based temporal QA augmentation.

pub mod augment;
pub mod autodiff;
pub mod bridge;
pub mod checkpoint;
pub mod config;
pub mod fusion;
pub mod gradcheck;
pub mod grounding;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod spatial;
pub mod synthetic;
pub mod temporal;
pub mod tensor;
pub mod training;
pub mod util;

pub use tensor::{Parameter, Tensor};
