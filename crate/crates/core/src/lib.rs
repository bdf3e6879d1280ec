//! Volume rendering quadrature along a single ray.
//!
//! Two opacity models are implemented side by side: the classical piecewise
//! constant model (opacity of each interval taken from its left sample) and a
//! piecewise linear model whose interval probabilities are the exact integral
//! of linearly interpolated opacity. The linear model admits a continuous,
//! strictly increasing CDF, which [`sampling::precise_sample`] inverts in
//! closed form.
//!
//! Every closed form is checked against [`oracle`], which only knows how to
//! integrate a continuous field with adaptive Simpson and shares no code with
//! the quadrature routines.

// `!(a < b)` style guards deliberately reject NaN along with out-of-order values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gradients;
pub mod oracle;
pub mod polynomial;
pub mod quadrature;
pub mod ray;
pub mod sampling;
pub mod scenes;

pub use error::{Error, Result};
pub use quadrature::{interval_pmf, render, RayDistribution};
pub use ray::{
    ColorTrace, FarPlane, ModelKind, OpacityTrace, RaySegment, SampleGrid, OPACITY_FLOOR, OPAQUE,
};
