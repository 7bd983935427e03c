//! Calibration fields and sharp area bounds for free boundary minimal
//! surfaces in rotationally symmetric, conformally euclidean balls.
//!
//! The ambient metric is `g = dr² + h(r)² g_S`, equivalently `g = rho(s)² δ`
//! in the conformal chart. The crate computes the radial potentials, the
//! calibration field `W` with its exact tangential divergence, the largest
//! radius on which `div_Σ W ≤ 1` is certified, and discrete free boundary
//! surfaces whose area is audited against `2π I(R)`.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod config;
pub mod error;
pub mod fields;
pub mod interp;
pub mod mesh;
pub mod quad;
pub mod radial;
pub mod threshold;
pub mod util;
pub mod warp;

pub use audit::{calibration_audit, AuditRecord, AuditTolerances};
pub use error::{Error, Result};
pub use fields::{CalibrationField, FieldKind, TangentPlaneSample};
pub use mesh::{make_mesh, minimize, MinimizeOptions, Shape, SolveReport, TriMesh};
pub use radial::{build_chart, ConformalChart, RadialGeometry, RadialState};
pub use threshold::{find_r_bar, ThresholdReport};
pub use warp::{make_preset, ConformalFactor, Preset, WarpProfile};
