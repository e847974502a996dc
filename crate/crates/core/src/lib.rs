//! Semantic-aware synthetic fog for clear-weather driving scenes.
//!
//! The pipeline takes a clear image, a (noisy, incomplete) stereo disparity
//! map and a semantic labeling, completes depth with superpixel plane fits,
//! smooths the resulting transmittance with a dual-reference cross-bilateral
//! filter (semantic + CIELAB color), and composites fog with the
//! Koschmieder optical model. Around that sit a fog-density regressor for
//! ranking real foggy images, curriculum manifest generation for
//! light-to-dense adaptation, and a mean-IoU evaluator.

pub mod cli;
pub mod cmada;
pub mod depth_completion;
pub mod dual_bilateral;
pub mod error;
pub mod eval;
pub mod fog_density;
pub mod fog_synthesis;
pub mod imaging;
pub mod synthetic;

pub use error::{Error, Result};
