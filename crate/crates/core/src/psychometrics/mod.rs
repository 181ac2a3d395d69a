//! Questionnaire scoring and the statistics used to compare cohorts.
//!
//! MEQ30 item-to-factor assignment follows the validated instrument
//! (Barrett, Johnson and Griffiths 2015); the item sets are listed in
//! [`instruments::MEQ30_FACTORS`].

pub mod data;
pub mod instruments;
pub mod reference;
pub mod special;
pub mod stats;
pub mod synth;
pub mod wilcoxon;

use thiserror::Error;

pub use data::{
    bundled_reference, bundled_sm1, bundled_sm5, load_communitas, load_edi, load_factor_scores, load_ics, load_meq30,
    load_reference, Sm5Item,
};
pub use instruments::{
    communitas_scores, complete_mte, score_edi, score_ics, score_meq30, snap_to_lattice, Communitas, EdiScores,
    Factor, FactorScores, Meq30Response,
};
pub use reference::{compare_to_reference, summarize, ComparisonSummary, FactorOutcome, IntensityClass, ReferenceStudy, StudyComparison};
pub use stats::{
    cohort_summary, cronbach_alpha, pearson_and_ols, ttest_one_sample, ttest_two_sample_summary, CohortSummary,
    Regression, TTest,
};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsychError {
    #[error("item {index} out of range: {value} not in {min}..={max}")]
    ItemRange { index: usize, value: f64, min: f64, max: f64 },
    #[error("expected {expected} items, got {found}")]
    ItemCount { expected: usize, found: usize },
    #[error("invalid ICS choice {0:?}; expected a letter a to f")]
    IcsChoice(String),
    #[error("{0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
}
