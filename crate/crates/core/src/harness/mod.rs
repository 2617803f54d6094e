//! Data ingestion, synthetic fields and the evaluation sweeps.

mod check;
mod ingest;
mod sweep;
mod synth;

pub use check::{qoi_check, QoiCheckReport};
pub use ingest::{ingest, read_raw, write_f64, ByteOrder, DatasetSpec, Dtype};
pub use sweep::{
    default_schedule, load_originals, parse_schedule, qoi_values, sweep, write_sweep_csv, SweepRow,
};
pub use synth::{synth, synth_with, SynthKind, DEFAULT_ZERO_FRACTION};
