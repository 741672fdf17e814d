pub mod audio;
pub mod compose;
pub mod config;
pub mod curation;
pub mod dataset;
pub mod diffusion;
pub mod instruct;
pub mod metrics;
pub mod task;
