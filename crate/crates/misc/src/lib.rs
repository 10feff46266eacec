//! Std companion to `misc-core`: raster files, the model-service client,
//! report formats and the `misc` command line.

pub mod cli;
pub mod handle;
pub mod inspect;
pub mod io;
pub mod remote;
pub mod report;

pub use handle::BackendHandle;
pub use remote::{RemoteBackend, RemoteConfig};
