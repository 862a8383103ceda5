#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod acceptance;
pub mod bathspec;
pub mod camsim;
pub mod config;
pub mod constants;
pub mod denoise;
pub mod error;
pub mod fieldsolve;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod scenario;
pub mod spinphys;
pub mod stats;
pub mod svg;
pub mod vec3;

pub use error::{QdmError, Result};
pub use grid::{FieldMap, FrameStack, NvAxis, ProtocolTag, Roi};
pub use vec3::Vec3;
