//! Recidivism risk assessment for intimate-partner-violence cases.
//!
//! Each module holds one stage of the pipeline. [`classifiers`] carries the
//! learned models, with nearest shrunken centroids as the main method, and
//! [`hybrid`] mixes their predictions with the weighted-score [`baseline`].
//! Corpus generation lives in [`synthgen`] and model selection in
//! [`experiments`].

pub mod baseline;
pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod hybrid;
pub mod io;
pub mod metrics;
pub mod seeds;
pub mod sensitivity;
pub mod synthgen;

pub use error::{Error, Result};
pub use dataset::RiskLabel;
