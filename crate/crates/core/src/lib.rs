pub mod augment;
pub mod autograd;
pub mod cli;
pub mod config;
pub mod data;
pub mod explain;
pub mod forest;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod spacenet;
pub mod svg;
pub mod synth;
