//! Clinical information annotation and extraction toolkit.
//!
//! Data model and scheme registry for typed entity/relation/attribute
//! annotation over clinical text, standoff-format interop, a trainable
//! three-model extraction pipeline (linear-chain CRF entities, span
//! classifiers for relations and attributes), the matching evaluation
//! protocol, and corpus assembly utilities including a synthetic
//! corpus generator.

pub mod annotation;
pub mod bio;
pub mod checkpoint;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod eval;
pub mod features;
pub mod generate;
pub mod optim;
pub mod pipeline;
pub mod samples;
pub mod sampling;
pub mod scheme;
pub mod segment;
pub mod span;
pub mod standoff;
pub mod validate;

pub use annotation::{AnnotationSet, Attribute, Document, Entity, ModifyOutcome, Relation};
pub use error::{Error, Result};
pub use scheme::{builtin_scheme, SchemeRegistry};
