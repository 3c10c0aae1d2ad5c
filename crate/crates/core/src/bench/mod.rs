//! Experiment pipelines and the command-line front end.

pub mod cli;
pub mod config;
pub mod figure;
pub mod pipeline;
pub mod selftest;

pub use config::{ExperimentConfig, Mode};
pub use figure::{figure_csv, figure_fsp_vs_fsq, FigureRow};
pub use pipeline::{run, RunOutput, RunReport};
