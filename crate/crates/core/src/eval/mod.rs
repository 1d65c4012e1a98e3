//! Splitting, metrics, the benchmark driver, and report and model files.

mod benchmark;
mod metrics;
mod model_file;
mod report;
mod split;

pub use benchmark::{
    run_benchmark, run_benchmark_with_models, BenchmarkOutput, ClassReport, ClassifierStage, EvalReport,
    FeatureStage, ModelKind, ModelSpec, TrainedPipeline,
};
pub use metrics::{confusion, macro_metrics, normalize_row, ClassScores, ConfusionMatrix, MacroMetrics};
pub use model_file::{decode_model, encode_model, read_model_file, write_model_file, MODEL_MAGIC, MODEL_VERSION};
pub use report::{summary_table, write_reports_csv, write_reports_json, write_timings_csv};
pub use split::{stratified_split, Split, SplitSpec};
