//! Domain types, the interchange format, validation and synthetic data.

pub mod dataset;
pub mod interchange;
pub mod layout;
pub mod synth;
pub mod validate;

pub use dataset::{Dataset, Signal, Target, Trial};
pub use interchange::{load_dataset, write_dataset};
pub use layout::ChannelLayout;
pub use synth::{synth_generate, Carrier, ClassRule, SynthConfig};
pub use validate::{validate_dataset, Issue, Severity, ValidationReport};
