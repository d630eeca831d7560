//! Modular 3D scene synthesis from a text prompt or a single image.

pub mod image;
pub mod mesh;
pub mod model;
pub mod oracle;
pub mod prompts;
pub mod providers;
pub mod runlog;
pub mod unproject;
pub mod pose;
pub mod postprocess;
pub mod assembly;
pub mod config;
pub mod metrics;
pub mod orchestrator;
