use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorEvent {
    /// Frames received when the event was produced.
    pub frame_index: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    StateSample {
        window_start: usize,
        window_end: usize,
        state: u32,
    },
    TransitionCandidate {
        from: u32,
        to: u32,
        trigger_frame: usize,
    },
    TransitionConfirmed {
        from: u32,
        to: u32,
        trigger_frame: usize,
        transition_frame: usize,
        votes: usize,
        tests: usize,
    },
    TransitionRejected {
        from: u32,
        to: u32,
        trigger_frame: usize,
        votes: usize,
        tests: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    SegmentComplete {
        start_frame: usize,
        end_frame: usize,
        class: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class_name: Option<String>,
        decision_latency_frames: usize,
    },
    SegmentDiscarded {
        start_frame: usize,
        end_frame: usize,
        min_frames: usize,
    },
    MotionRecognized {
        start_frame: usize,
        end_frame: usize,
        class: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class_name: Option<String>,
        early: bool,
        decision_latency_frames: usize,
    },
    BudgetViolation {
        window_end: usize,
        seconds: f64,
        budget_seconds: f64,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::StateSample { .. } => "state_sample",
            EventKind::TransitionCandidate { .. } => "transition_candidate",
            EventKind::TransitionConfirmed { .. } => "transition_confirmed",
            EventKind::TransitionRejected { .. } => "transition_rejected",
            EventKind::SegmentComplete { .. } => "segment_complete",
            EventKind::SegmentDiscarded { .. } => "segment_discarded",
            EventKind::MotionRecognized { .. } => "motion_recognized",
            EventKind::BudgetViolation { .. } => "budget_violation",
        }
    }
}

/// A finished motion as reported by `segment_complete`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub start_frame: usize,
    pub end_frame: usize,
    pub class: u32,
    pub decision_latency_frames: usize,
}

/// Completed segments in log order.
pub fn segments_from_events(events: &[DetectorEvent]) -> Vec<SegmentPrediction> {
    events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::SegmentComplete {
                start_frame,
                end_frame,
                class,
                decision_latency_frames,
                ..
            } => Some(SegmentPrediction {
                start_frame,
                end_frame,
                class,
                decision_latency_frames,
            }),
            _ => None,
        })
        .collect()
}

/// `(window_start, window_end, state)` of every state sample.
pub fn state_samples(events: &[DetectorEvent]) -> Vec<(usize, usize, u32)> {
    events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::StateSample { window_start, window_end, state } => Some((window_start, window_end, state)),
            _ => None,
        })
        .collect()
}

pub fn write_event<W: Write>(out: &mut W, event: &DetectorEvent) -> Result<()> {
    serde_json::to_writer(&mut *out, event).map_err(|e| Error::Io(e.into()))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_event_log<W: Write>(out: &mut W, events: &[DetectorEvent]) -> Result<()> {
    for e in events {
        write_event(out, e)?;
    }
    Ok(())
}

pub fn event_log_string(events: &[DetectorEvent]) -> String {
    let mut buf = Vec::new();
    write_event_log(&mut buf, events).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Parses a JSON-lines event log. Blank lines are skipped; frame indices must
/// not decrease.
pub fn parse_event_log(text: &str) -> Result<Vec<DetectorEvent>> {
    read_event_log(text.as_bytes())
}

pub fn read_event_log<R: BufRead>(reader: R) -> Result<Vec<DetectorEvent>> {
    let mut events: Vec<DetectorEvent> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: DetectorEvent = serde_json::from_str(&line).map_err(|err| Error::Parse(format!("event log line {}: {err}", n + 1)))?;
        if let Some(prev) = events.last() {
            if e.frame_index < prev.frame_index {
                return Err(Error::Parse(format!("event log line {}: frame index {} after {}", n + 1, e.frame_index, prev.frame_index)));
            }
        }
        events.push(e);
    }
    Ok(events)
}
