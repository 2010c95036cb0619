//! Simulated-user evaluation: click placement, the interaction loop, metric
//! aggregation and the ablation runner.

pub mod ablation;
pub mod clicks;
pub mod instances;
pub mod metrics;
pub mod protocol;

pub use ablation::{mean_report, run_ablation, AblationReport, AblationRow, ToyAblation};
pub use instances::{eval_instances, InstanceSelection};
pub use clicks::{components, interior_point, next_click, sample_train_clicks, squared_distance_to_outside};
pub use metrics::{aggregate, aggregate_with_budget, InteractionTrace, MetricReport, MAX_CLICKS};
pub use protocol::{run_protocol, sat_latency, EmptySegmenter, EvalInstance, OracleSegmenter, ProtocolConfig, Segmenter};
