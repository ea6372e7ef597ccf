//! Typosquatting detection for blockchain naming systems.

pub mod corpus;
pub mod ground_truth;
pub mod ingestion;
pub mod similarity;
pub mod simulator;
pub mod squat_detector;
pub mod tx_analysis;
pub mod typo_models;
pub mod typoguard;

pub use corpus::{normalize_name, Chain, Dataset, Name, Namespace, NamespaceFamily, Registration};
pub use typo_models::{Alphabet, TypoModel, TypoVariant};
