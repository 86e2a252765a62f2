//! Metrics, value surfaces and the generalization probe.

mod assignment;
mod metrics;
mod parallel;
mod probe;
mod surface;

pub use assignment::{empirical_w1, empirical_w2, min_cost_assignment};
pub use metrics::{
    evaluate, evaluate_run, grad_norm_sum, write_metrics, DomainMetric, GeneralizationReport,
    MetricReport, SigmaHatReport, PROBE_N, PROBE_RESAMPLES, SIGMA_TOL, SIGMA_TUPLES,
};
pub use parallel::{parallel_map, thread_count};
pub use probe::{
    generalization_probe, max_pairwise_gap, median, objective_estimate, GeneralizationProbe,
    ProbeConfig,
};
pub use surface::{
    export_surface, parse_surface_csv, surface_to_csv, surface_to_svg, value_surface, GridSpec,
    SurfaceFormat, SurfaceGrid,
};
