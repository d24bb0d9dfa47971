//! Packet-event and feature-file ingestion, attack labels, and the
//! chronological benign split.

mod event;
mod features;
mod label;

pub use event::{read_events, write_events, Direction, EventFormat, EventLog, MacAddr, PacketEvent, EVENT_CSV_HEADER};
pub use features::{
    read_feature_csv, read_feature_csv_from, split_chronological, split_sizes, write_feature_csv, write_feature_csv_to,
    DatasetSplit, FeatureRecord, HeaderMapping, LabelRule, SourceColumn,
};
pub use label::{
    label_at, read_label_segments, write_label_segments, AttackLabel, Family, LabelSegment, Vector,
    LABEL_SIDECAR_HEADER,
};
