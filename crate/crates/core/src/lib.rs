//! Numerical realization of smooth isometric immersions of complete negatively curved
//! surfaces with finite total curvature.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod config;
pub mod curvature;
pub mod error;
pub mod immersion;
pub mod inner;
pub mod metric;
pub mod numerics;
pub mod oracle;
pub mod outer;
pub mod pipeline;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CurvatureSpec = curvature::CurvatureSpec<f64>;
pub type PolarMetric = metric::PolarMetric<f64>;
pub type GeodesicMetric = metric::GeodesicMetric<f64>;
pub type ChartMap = chart::ChartMap<f64>;
pub type DomainSplit = chart::DomainSplit<f64>;
pub type InnerState = inner::InnerState<f64>;
pub type BoundaryData = inner::BoundaryData<f64>;
pub type OuterState = outer::OuterState<f64>;
pub type OuterRun = outer::OuterRun<f64>;
pub type FundamentalForm = immersion::FundamentalForm<f64>;
pub type ImmersionMesh = immersion::ImmersionMesh<f64>;
pub type RadialMetric = oracle::RadialMetric<f64>;
