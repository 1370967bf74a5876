use std::collections::BTreeMap;

use crate::model::{Span, Trace, TraceId};

/// In-memory span sink. Append-only while a run is in progress.
#[derive(Debug, Clone, Default)]
pub struct Collector {
    spans: Vec<Span>,
    by_trace: BTreeMap<TraceId, Vec<usize>>,
    dropped_batches: u64,
    accepted_batches: u64,
    available: bool,
}

impl Collector {
    pub fn new() -> Self {
        Collector {
            available: true,
            ..Default::default()
        }
    }

    /// A collector that drops every batch, modelling an unreachable backend.
    pub fn unavailable() -> Self {
        Collector {
            available: false,
            ..Default::default()
        }
    }

    pub fn is_available(&self) -> bool {
        self.available
    }

    pub fn set_available(&mut self, available: bool) {
        self.available = available;
    }

    /// Spans in arrival order.
    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn span_count(&self) -> usize {
        self.spans.len()
    }

    pub fn trace_count(&self) -> usize {
        self.by_trace.len()
    }

    pub fn dropped_batches(&self) -> u64 {
        self.dropped_batches
    }

    pub fn accepted_batches(&self) -> u64 {
        self.accepted_batches
    }

    pub fn trace_ids(&self) -> impl Iterator<Item = &TraceId> {
        self.by_trace.keys()
    }

    pub fn trace(&self, id: &TraceId) -> Option<Trace> {
        self.by_trace.get(id).map(|idx| Trace {
            trace_id: *id,
            spans: idx.iter().map(|&i| self.spans[i].clone()).collect(),
        })
    }

    pub fn traces(&self) -> Vec<Trace> {
        self.by_trace.keys().filter_map(|id| self.trace(id)).collect()
    }

    pub(crate) fn accept(&mut self, batch: Vec<Span>) -> bool {
        if !self.available {
            self.dropped_batches += 1;
            return false;
        }
        self.accepted_batches += 1;
        for span in batch {
            self.by_trace
                .entry(span.context.trace_id)
                .or_default()
                .push(self.spans.len());
            self.spans.push(span);
        }
        true
    }
}

/// Delivers a batch of finished spans. Fire-and-forget: a down collector
/// counts the batch as dropped and the caller carries on.
///
/// Returns whether the batch was stored. Empty batches are ignored.
pub fn report_spans(collector: &mut Collector, batch: Vec<Span>) -> bool {
    if batch.is_empty() {
        return false;
    }
    collector.accept(batch)
}
