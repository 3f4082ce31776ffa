//! Motion-trail rendering for stationary-camera image sequences.
//!
//! The crate covers every stage of the process: registering hand-held
//! frames ([`deshake`]), estimating a per-frame background with a sliding
//! geometric median ([`background`]), segmenting moving objects
//! ([`segmentation`]), flagging revealed-background ghosts ([`ghosts`]) and
//! compositing faded trails ([`trails`]). [`pipeline`] chains the stages over
//! frame directories.

// Negated comparisons in validation reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod background;
pub mod deshake;
pub mod error;
pub mod frameio;
pub mod ghosts;
pub mod imaging;
pub mod median;
pub mod pipeline;
pub mod segmentation;
pub mod trails;

pub use error::{Error, Result};
pub use imaging::{GrayImage, Offset2D, RasterImage, Rect, Rgb, YccPixel};
pub use median::{geometric_median, WeiszfeldOptions};
pub use segmentation::{BitMask, LabelMap};
