//! Semantic direct modeling: text-conditioned recognition of feature face sets
//! on tessellated B-rep models, natural-language command parsing, and a
//! mesh-level direct editing engine.

pub mod edit;
pub mod encoder;
pub mod error;
pub mod feature;
pub mod generator;
pub mod geometry;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod parser;
pub mod text;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
pub use feature::{FeatureFamily, FeatureTerm, FeatureType};
