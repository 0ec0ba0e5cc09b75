//! Photorealistic style transfer with wavelet-corrected transfers.
//!
//! A VGG-19 encoder with Haar wavelet pooling feeds a mirror decoder that
//! unpools through the transposed wavelet kernels, so the encode/decode pair
//! loses no spatial detail. Whitening-and-coloring (or AdaIN) is applied at
//! chosen feature sites, optionally per segmentation region.

pub mod error;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod registry;
pub mod stylize;
pub mod tensor;
pub mod verify;
pub mod wavelet;
pub mod weights;

pub use error::{Error, Result};
pub use metrics::MetricReport;
pub use network::{build_model, random_weights, Model, Site, StylizeSchedule, UnpoolMode};
pub use pipeline::{ImageBuffer, StylizeJob, StylizeOptions};
pub use stylize::{FeatureTransform, SegmentationMap};
pub use tensor::{conv2d, ConvLayer, FeatureMap, PaddingMode};
pub use wavelet::{haar_pool, haar_unpool, HaarKernels, Pooling, WaveletSubbands};
pub use weights::{Tensor, WeightStore};
