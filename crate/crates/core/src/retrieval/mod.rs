//! Bit-packed binary codes and Hamming-space retrieval evaluation.
//!
//! Relevance between a query and a database item means sharing at least one
//! label. Ranking quality is MAP over the full database ordered by Hamming
//! distance (ties by database index); lookup quality is precision, recall and
//! F-measure of the items inside a Hamming ball around the query.

mod codes;
mod metrics;

pub use codes::{hamming, words_for, CodeRow, CodeSet, CODES_MAGIC};
pub use metrics::{
    average_precision, evaluate, f_measure, hash_lookup, hash_lookup_with, map_eval, map_eval_with, LabelSet,
    LookupMetrics, RetrievalMetrics,
};
