//! Zipkin v2 JSON export.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::Span;

use super::Collector;

/// Virtual time zero maps to this wall-clock instant (microseconds since the
/// Unix epoch) in exported timestamps.
pub const EPOCH_OFFSET_MICROS: u64 = 1_600_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    #[serde(rename = "serviceName")]
    pub service_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZipkinSpan {
    pub id: String,
    #[serde(rename = "traceId")]
    pub trace_id: String,
    #[serde(rename = "parentId", default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub name: String,
    pub timestamp: u64,
    pub duration: u64,
    #[serde(rename = "localEndpoint")]
    pub local_endpoint: Endpoint,
    pub tags: BTreeMap<String, String>,
}

impl From<&Span> for ZipkinSpan {
    fn from(span: &Span) -> Self {
        ZipkinSpan {
            id: span.context.span_id.to_string(),
            trace_id: span.context.trace_id.to_string(),
            parent_id: span.parent_span_id.map(|p| p.to_string()),
            name: span.name.clone(),
            timestamp: EPOCH_OFFSET_MICROS + span.start.millis() * 1000,
            duration: span.duration().millis() * 1000,
            local_endpoint: Endpoint {
                service_name: span.component.clone(),
            },
            tags: span.tags.clone(),
        }
    }
}

pub fn to_zipkin(spans: &[Span]) -> Vec<ZipkinSpan> {
    spans.iter().map(ZipkinSpan::from).collect()
}

/// Serialises every collected span, in arrival order, as a Zipkin v2 JSON array.
pub fn export_zipkin_v2(collector: &Collector) -> Vec<u8> {
    serde_json::to_vec(&to_zipkin(collector.spans())).expect("zipkin spans serialise")
}
