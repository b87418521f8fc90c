//! Evaluation harness for promptable segmenters: dataset loading, segmenter
//! transports, run orchestration, reports and the `segeval` command line.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod manifest;
pub mod pipeline;
pub mod protocol;
pub mod report;
pub mod segmenters;
pub mod transport;
