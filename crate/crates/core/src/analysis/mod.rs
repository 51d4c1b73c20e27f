//! Quantitative analysis of study outputs: coverage scaling, code
//! frequency and overlap, expert metrics, and the time/cost ledger.
//!
//! Every function here is pure over its inputs. Randomness (team
//! subsampling) is driven by an explicit seed.

pub mod codes;
pub mod coverage;
pub mod expert;
pub mod ledger;

pub use codes::{
    apply_synonyms, code_frequency, load_coded, of_study, study_codes, venn_overlap, Code, CodeCount, Codebook,
    CodedTranscript, Study, Synonyms, VennRegions,
};
pub use coverage::{coverage, doubling_sizes, equivalency_ratio, expected_coverage, subsample_coverage, CoverageCurve};
pub use expert::{
    behavior_fidelity, combined_fidelity, icc_2_1, insight_fidelity, insight_helpfulness, jaccard, packets_to_table,
    ExpertPacket, RatingRow, RatingTable, StudyScores,
};
pub use ledger::{cost_time_report, CostTimeLedger, LedgerRow};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("human code set is empty")]
    EmptyHumanSet,
    #[error("team size {size} exceeds the population of {population}")]
    SizeExceedsPopulation { size: usize, population: usize },
    #[error("insufficient coverage: threshold {threshold} never reached (best {best:.4})")]
    InsufficientCoverage { threshold: f64, best: f64 },
    #[error("degenerate ratings: no variance")]
    DegenerateRatings,
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("transcript {transcript}: code {code:?} is not in the codebook")]
    UnknownCode { transcript: String, code: String },
    #[error("ledger has no row for {0:?}")]
    MissingRow(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("io: {0}")]
    Io(String),
}
