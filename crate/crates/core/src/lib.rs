//! Chest X-ray triage pipeline core.
//!
//! Pure, in-memory building blocks for a staged CXR computer-aided detection
//! workflow:
//!
//! * [`ingest`]: explicit-VR little-endian DICOM parsing, anonymization,
//!   8-bit windowing and subgroup taxonomy.
//! * [`preprocess`]: letterbox resizing, keypoint rotation correction and
//!   multi-resolution fan-out.
//! * [`backends`]: the model-backend contract with a seeded tiny reference
//!   implementation and a fixture replay implementation.
//! * [`detection`]: anchors, IoU, NMS, proposal selection, box delta coding
//!   and smooth-L1.
//! * [`segmentation`]: U-Net family configuration calculus, toy forward
//!   passes and mask post-processing.
//! * [`metrics`]: agreement metrics, confidence intervals, AUC, detection
//!   matching, subgroup stratification and table rendering.
//! * [`pipeline`]: the end-to-end staged workflow and study lifecycle.
//!
//! Nothing in this crate performs network I/O; the only filesystem access is
//! loading a fixture file for the replay backend.

pub mod backends;
pub mod detection;
pub mod image;
pub mod ingest;
pub mod labels;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod records;
pub mod segmentation;
pub mod synth;

pub use image::{Image8, ImageDigest};
pub use labels::PathologyLabel;
