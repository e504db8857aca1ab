//! Geometric and statistical core of a two-stage "focus, then detect" region
//! search for small objects in aerial imagery.
//!
//! The crate covers everything around the two detector networks:
//!
//! - [`boxgeom`]: axis-aligned box arithmetic (area, intersection, IoU, clipping, affine remaps).
//! - [`mixture`]: grid-distance box features and a diagonal-covariance Gaussian mixture fit by EM.
//! - [`focal`]: focal regions from clusters, crop-level ground truth, detector-resolution maps,
//!   and the even six-tile partition baseline.
//! - [`fuse`]: remapping region detections, per-class NMS and incomplete box suppression (IBS).
//! - [`evalkit`]: COCO-style AP family and VOC AP at a fixed IoU threshold.
//! - [`scenes`]: seeded synthetic scenes and an oracle detector for closed-loop checks.
//! - [`pipeline`]: per-image stages and the closed loop over a dataset.
//! - [`io`]: VisDrone text and JSON readers/writers shared by the CLI and bindings.

pub mod boxgeom;
pub mod error;
pub mod evalkit;
pub mod focal;
pub mod fuse;
pub mod io;
pub mod mixture;
pub mod pipeline;
pub mod scenes;

mod rng;

pub use boxgeom::{AffineMap, BBox, ImageSize, ScoredBox};
pub use error::{Error, Result};
