//! Semantic image compression at ultra-low bitrates.
//!
//! An image is carried as three kinds of content: short text descriptions
//! (per-item name/detail pairs plus a whole-image description), one coarse
//! binary map per item locating it in the frame, and an extremely
//! downsampled pixel payload. All three travel in the MSCB container
//! ([`container`]). Decoding starts from the upsampled pixel payload and runs
//! one masked generation pass per item followed by a global pass, all through
//! a pluggable [`backend::Backend`].
//!
//! The crate is `no_std` (with `alloc`). IO, networking and the CLI live in
//! the companion `misc` crate.

#![no_std]

extern crate alloc;

pub mod backend;
pub mod container;
pub mod crc;
pub mod eval;
pub mod map;
pub mod mock;
pub mod pipeline;
pub mod pixel;
pub mod raster;
pub mod resample;
pub mod semantic;

pub use backend::{Backend, BackendError, DescribeResult, MetricRecord};
pub use container::{MiscContainer, RateReport, Section};
pub use map::{BinaryMap, FeatureKind, FeatureTensor, RawMap};
pub use mock::MockBackend;
pub use pipeline::{AblationFlags, LevelPolicy};
pub use pixel::{CodecPolicy, PixelPayload};
pub use raster::RgbImage;
pub use semantic::{ItemBudget, SemanticPayload};
