//! Spatial and group statistics.

mod anova;
mod groups;
mod sde;

pub use anova::{classic_anova, welch_test, GroupSummary, TestMethod, WelchResult};
pub use groups::{assign_groups, summarize, Observation, Scheme};
pub use sde::{centroid_path, ellipse_table, sde, CentroidStep, EllipseSummary, WeightedPoint};
