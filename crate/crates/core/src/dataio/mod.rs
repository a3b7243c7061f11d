//! Trace ingestion, projection, synthetic datasets and CSV artifacts.

pub mod export;
pub mod field;
pub mod projection;
pub mod synthetic;
pub mod trace;

pub use export::{
    export_heatmap_csv, export_log_csv, export_pdr_csv, parse_heatmap_csv, parse_log_csv,
    parse_pdr_csv,
};
pub use field::{field_pdr_curve, FieldPdrMode};
pub use projection::{project_enu, EnuPoint, GeoPoint, ProjectedSample, ProjectedTrace};
pub use synthetic::{
    generate_synthetic, synthetic_trace, SyntheticDataset, SyntheticSpec, Waypoint,
};
pub use trace::{
    export_trace_csv, parse_trace_csv, MessageDirection, MessageType, TimeFormat, Trace,
    TraceRecord, TransmissionType,
};
