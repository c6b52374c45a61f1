//! Scoring: ICD-9 normalization, Hit@K / Rec@K / Ave-Q, per-chapter
//! breakdown, the multiple-choice adapter and annotation sheets.

pub mod annotation;
pub mod mcq;
pub mod metrics;
pub mod normalize;
pub mod report;

pub use metrics::{category_of, hit_at_k, recall_at_k, same_category, MalformedCode};
pub use normalize::{NormalizationCache, Normalizer, OntologySearchClient, TerminologyService};
pub use report::{aggregate, AggregateMetrics, ChapterMetrics, EvalError, MetricReport, PatientMetrics};
