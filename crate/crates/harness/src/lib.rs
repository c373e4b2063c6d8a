//! Batch experiments for the segmented-leg hopper: suites of design ×
//! behavior runs, rank-test reports and the stability heatmap.

pub mod error;
pub mod heatmap;
pub mod plan;
pub mod report;
pub mod runner;
