//! Geometric-algebra linear attention for consumer credit cycle analysis.
//!
//! Quarterly macro states `(u, s, r, v)` (unemployment, saving rate,
//! consumption growth, revolving credit growth) are embedded as multivectors
//! in Cl(4,0), attended over an 8-quarter strictly-past window with linear
//! attention, and mapped to the standardized charge-off rate by a linear or
//! MLP head. The interpretability tools (temporal weights, occlusion,
//! impulse responses, component magnitudes, regime labels, nowcasts) all
//! operate on the same forward pass.

pub mod analysis;
pub mod artifact;
pub mod attention;
pub mod attribution;
pub mod checks;
pub mod clifford;
pub mod config;
pub mod embed;
pub mod linalg;
pub mod model;
pub mod panel;
pub mod svg;
pub mod synthetic;
pub mod train;

pub use attention::{FeatureMap, ProjectionParams};
pub use clifford::{Multivector, Rotor};
pub use embed::EmbeddingParams;
pub use model::{HeadKind, HeadParams, ModelConfig, ModelParams};
pub use panel::{MonthlyPanel, Quarter, QuarterlyPanel, RawSeries};
