//! Benchmarks, scoring, baselines, method runs and evaluation statistics.

mod baselines;
mod benchmark;
mod methods;
mod parse_sample;
mod report;
mod scoring;
pub mod stats;

pub use baselines::{best_of_3, majority_vote, self_consistency_select, text_majority_index, text_mode_index};
pub use benchmark::{
    detect_kind, load_benchmark, read_benchmark, write_benchmark, BenchmarkError, BenchmarkKind, BenchmarkSet, SampleManifest,
};
pub use methods::{
    run_method, run_question, score, BaselineConfig, EvalContext, EvalError, MethodRun, MethodSpec, UnknownMethod,
    SC_DEFAULT_K, SC_TEMPERATURE,
};
pub use parse_sample::{parse_sample, BlindSample, SampleKey, PARSE_SAMPLE_SIZE, REQUIRED_FORMAT};
pub use report::{
    compute_stat_report, read_results, write_results, Comparison, MethodResult, MethodStats, QuestionRecord,
    ReportError, ResultsFileError, StatOptions, StatReport,
};
pub use scoring::{first_number, normalize_answer, score_em, score_mc1, score_rubric, Combine, Rubric, RubricCheck};
pub use stats::{
    bootstrap_accuracies, category_delta, holm_bonferroni, mcnemar, mcnemar_from_counts, selective_eval, stratified_bootstrap_ci,
    HolmResult, McNemar, Outcome, SelectiveStats, StatsError,
};
