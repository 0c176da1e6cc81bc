//! Sequence classification with ensemble members scheduled across frames.
//!
//! Instead of running every ensemble member on every frame of a sequence,
//! one member is applied per frame following a schedule and the per-frame
//! categorical predictions are averaged over time. This crate holds the
//! numerical core: a small dropout MLP with AdamW training, the sequence
//! fusion strategies, temperature scaling, scoring metrics, entropy-based
//! OOD detection and the synthetic data / augmentation machinery used to
//! exercise all of it.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! the experiment orchestration live in the `desot` crate.

#![no_std]

extern crate alloc;

pub mod calibration;
pub mod data;
pub mod dist;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod metrics;
pub mod mlp;
pub mod ood;
pub mod optim;
pub mod rng;
pub mod train;

pub use calibration::{
    apply_temperature, fit_temperature, validation_nll, NllMode, Temperature, TemperatureFit,
};
pub use dist::{softmax, CategoricalDist};
pub use error::{Error, Result};
pub use eval::{Ensemble, EvalSettings, Strategy};
pub use fusion::{CostCounter, MemberSchedule, SequenceSample};
pub use metrics::{EvalReport, Label, PredictionRecord};
pub use mlp::{ForwardMode, MlpModel};
pub use train::TrainConfig;
