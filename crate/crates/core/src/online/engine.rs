use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{detect_window, DetectorEvent, DetectorModel, EventKind, OnlineConfig};
use crate::error::{mismatch, Error, Result};
use crate::model::RecognitionModel;
use crate::skeleton::{Frame, JointLayout, SkeletonSequence};

/// Labels a fixed-size window with a kinetic state.
pub trait StateDetector: Sync {
    fn window_size(&self) -> usize;
    fn detect(&self, window: &SkeletonSequence) -> Result<u32>;
}

/// Labels a finished (or truncated) motion segment.
pub trait SegmentClassifier: Sync {
    fn classify(&self, segment: &SkeletonSequence) -> Result<u32>;
    fn class_name(&self, _class: u32) -> Option<String> {
        None
    }
}

impl StateDetector for DetectorModel {
    fn window_size(&self) -> usize {
        self.ws
    }

    fn detect(&self, window: &SkeletonSequence) -> Result<u32> {
        detect_window(self, window)
    }
}

impl SegmentClassifier for RecognitionModel {
    fn classify(&self, segment: &SkeletonSequence) -> Result<u32> {
        RecognitionModel::classify(self, segment)
    }

    fn class_name(&self, class: u32) -> Option<String> {
        RecognitionModel::class_name(self, class).map(str::to_owned)
    }
}

/// Source of per-window inference times fed to the budget monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Every window takes this many seconds.
    Constant(f64),
    /// Window `k` takes `trace[k % len]` seconds.
    Trace(Vec<f64>),
    /// Wall-clock time of the detector call.
    Measured,
}

impl Default for Timing {
    fn default() -> Self {
        Timing::Constant(0.0)
    }
}

/// Replay evaluates every scheduled window. Live mode, after a window
/// overruns its budget, skips the windows that fell inside the busy period and
/// resumes on the schedule's next multiple of `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Replay,
    Live,
}

/// Outcome of a completed verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub votes: usize,
    pub tests: usize,
    pub confirmed: bool,
}

/// Majority vote over `te` window states, the trigger's state first: confirm
/// iff strictly more than half of them equal `target`.
pub fn verify_transition(target: u32, states: &[u32], te: usize) -> Result<Verdict> {
    if te == 0 {
        return Err(Error::Config("te >= 1 violated: te=0".into()));
    }
    if states.len() != te {
        return Err(mismatch(format!("{} states for {te} tests", states.len())));
    }
    let votes = states.iter().filter(|&&s| s == target).count();
    Ok(Verdict {
        votes,
        tests: te,
        confirmed: 2 * votes > te,
    })
}

#[derive(Debug, Clone)]
struct Pending {
    from: u32,
    to: u32,
    trigger: usize,
    states: Vec<u32>,
}

#[derive(Debug, Clone)]
struct OpenSegment {
    start: usize,
    early: Option<u32>,
}

/// Streaming detector: windows, verification, segments and recognition.
pub struct Engine<'a> {
    config: OnlineConfig,
    layout: JointLayout,
    detector: &'a dyn StateDetector,
    classifier: &'a dyn SegmentClassifier,
    timing: Timing,
    mode: RunMode,
    frames: VecDeque<Frame>,
    base: usize,
    received: usize,
    windows: usize,
    next_eval: usize,
    state: u32,
    pending: Option<Pending>,
    open: Option<OpenSegment>,
    boundary: usize,
    finished: bool,
}

impl<'a> Engine<'a> {
    pub fn new(config: OnlineConfig, layout: JointLayout, detector: &'a dyn StateDetector, classifier: &'a dyn SegmentClassifier) -> Result<Self> {
        config.validate()?;
        layout.validate()?;
        if detector.window_size() != config.ws {
            return Err(Error::Config(format!("detector was trained with ws={} but the engine uses ws={}", detector.window_size(), config.ws)));
        }
        Ok(Engine {
            config,
            layout,
            detector,
            classifier,
            timing: Timing::default(),
            mode: RunMode::Replay,
            frames: VecDeque::new(),
            base: 0,
            received: 0,
            windows: 0,
            next_eval: config.ws,
            state: 0,
            pending: None,
            open: None,
            boundary: 0,
            finished: false,
        })
    }

    pub fn with_timing(mut self, timing: Timing) -> Self {
        self.timing = timing;
        self
    }

    pub fn with_mode(mut self, mode: RunMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn config(&self) -> &OnlineConfig {
        &self.config
    }

    pub fn frames_received(&self) -> usize {
        self.received
    }

    /// Confirmed kinetic state.
    pub fn state(&self) -> u32 {
        self.state
    }

    fn span(&self, start: usize, end: usize) -> Result<SkeletonSequence> {
        debug_assert!(start >= self.base && end <= self.received && start < end);
        let frames: Vec<Frame> = self.frames.range(start - self.base..end - self.base).cloned().collect();
        SkeletonSequence::new(frames, self.config.capture_rate, self.layout.clone())
    }

    fn inference_seconds(&self, measured: f64) -> f64 {
        match &self.timing {
            Timing::Constant(s) => *s,
            Timing::Trace(t) if t.is_empty() => 0.0,
            Timing::Trace(t) => t[self.windows % t.len()],
            Timing::Measured => measured,
        }
    }

    /// Ingests one frame and returns the events it produced, in order.
    pub fn push_frame(&mut self, frame: Frame) -> Result<Vec<DetectorEvent>> {
        if self.finished {
            return Err(Error::InvalidArgument("engine already finished".into()));
        }
        if frame.len() != self.layout.joint_count {
            return Err(mismatch(format!("frame {} has {} joints, expected {}", self.received, frame.len(), self.layout.joint_count)));
        }
        if frame.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("frame {} has non-finite coordinates", self.received)));
        }
        self.frames.push_back(frame);
        self.received += 1;
        let n = self.received;
        let mut events = Vec::new();

        if n == self.next_eval {
            self.evaluate_window(n, &mut events)?;
        }
        self.check_deadline(n, &mut events)?;
        self.trim();
        Ok(events)
    }

    fn evaluate_window(&mut self, n: usize, events: &mut Vec<DetectorEvent>) -> Result<()> {
        let ws = self.config.ws;
        let window = self.span(n - ws, n)?;
        let clock = Instant::now();
        let state = self.detector.detect(&window)?;
        let seconds = self.inference_seconds(clock.elapsed().as_secs_f64());
        self.windows += 1;
        let r = self.config.refresh;
        self.next_eval = n + r;
        events.push(DetectorEvent {
            frame_index: n,
            kind: EventKind::StateSample {
                window_start: n - ws,
                window_end: n,
                state,
            },
        });
        let budget = self.config.budget_seconds();
        if seconds > budget {
            events.push(DetectorEvent {
                frame_index: n,
                kind: EventKind::BudgetViolation {
                    window_end: n,
                    seconds,
                    budget_seconds: budget,
                },
            });
            if self.mode == RunMode::Live {
                let busy = (seconds * self.config.capture_rate).ceil() as usize;
                self.next_eval = n + busy.div_ceil(r).max(1) * r;
            }
        }
        self.verification_step(n, state, events)
    }

    fn verification_step(&mut self, n: usize, state: u32, events: &mut Vec<DetectorEvent>) -> Result<()> {
        let te = self.config.tests;
        match &mut self.pending {
            Some(p) => p.states.push(state),
            None if state != self.state => {
                events.push(DetectorEvent {
                    frame_index: n,
                    kind: EventKind::TransitionCandidate {
                        from: self.state,
                        to: state,
                        trigger_frame: n,
                    },
                });
                self.pending = Some(Pending {
                    from: self.state,
                    to: state,
                    trigger: n,
                    states: vec![state],
                });
            }
            None => return Ok(()),
        }
        let ready = self.pending.as_ref().is_some_and(|p| p.states.len() == te);
        if !ready {
            return Ok(());
        }
        let p = self.pending.take().expect("pending verification");
        let verdict = verify_transition(p.to, &p.states, te)?;
        if !verdict.confirmed {
            events.push(DetectorEvent {
                frame_index: n,
                kind: EventKind::TransitionRejected {
                    from: p.from,
                    to: p.to,
                    trigger_frame: p.trigger,
                    votes: verdict.votes,
                    tests: te,
                    reason: None,
                },
            });
            return Ok(());
        }
        let at = p.trigger.saturating_sub(self.config.offset()).max(self.boundary);
        events.push(DetectorEvent {
            frame_index: n,
            kind: EventKind::TransitionConfirmed {
                from: p.from,
                to: p.to,
                trigger_frame: p.trigger,
                transition_frame: at,
                votes: verdict.votes,
                tests: te,
            },
        });
        self.state = p.to;
        if self.open.is_some() {
            self.close_segment(at, n, events)?;
        }
        if p.to != 0 {
            self.open = Some(OpenSegment { start: at, early: None });
        }
        Ok(())
    }

    fn check_deadline(&mut self, n: usize, events: &mut Vec<DetectorEvent>) -> Result<()> {
        let Some(d) = self.config.deadline_frames() else { return Ok(()) };
        let Some(seg) = &self.open else { return Ok(()) };
        if seg.early.is_some() {
            return Ok(());
        }
        let (start, end) = (seg.start, seg.start + d);
        if n < end {
            return Ok(());
        }
        let class = self.classifier.classify(&self.span(start, end)?)?;
        if let Some(seg) = &mut self.open {
            seg.early = Some(class);
        }
        events.push(DetectorEvent {
            frame_index: n,
            kind: EventKind::MotionRecognized {
                start_frame: start,
                end_frame: end,
                class,
                class_name: self.classifier.class_name(class),
                early: true,
                decision_latency_frames: n - start,
            },
        });
        Ok(())
    }

    fn close_segment(&mut self, end: usize, n: usize, events: &mut Vec<DetectorEvent>) -> Result<()> {
        let Some(seg) = self.open.take() else { return Ok(()) };
        let end = end.max(seg.start);
        self.boundary = end;
        let min = self.config.min_segment_frames().max(1);
        if end - seg.start < min {
            events.push(DetectorEvent {
                frame_index: n,
                kind: EventKind::SegmentDiscarded {
                    start_frame: seg.start,
                    end_frame: end,
                    min_frames: min,
                },
            });
            return Ok(());
        }
        let class = match seg.early {
            Some(c) => c,
            None => {
                let c = self.classifier.classify(&self.span(seg.start, end)?)?;
                events.push(DetectorEvent {
                    frame_index: n,
                    kind: EventKind::MotionRecognized {
                        start_frame: seg.start,
                        end_frame: end,
                        class: c,
                        class_name: self.classifier.class_name(c),
                        early: false,
                        decision_latency_frames: n - seg.start,
                    },
                });
                c
            }
        };
        events.push(DetectorEvent {
            frame_index: n,
            kind: EventKind::SegmentComplete {
                start_frame: seg.start,
                end_frame: end,
                class,
                class_name: self.classifier.class_name(class),
                decision_latency_frames: n - end,
            },
        });
        Ok(())
    }

    /// Drops frames no window, pending transition or open segment can reach.
    fn trim(&mut self) {
        let mut keep = self.received.saturating_sub(self.config.ws.max(self.config.offset()));
        if let Some(p) = &self.pending {
            keep = keep.min(p.trigger.saturating_sub(self.config.offset()));
        }
        if let Some(seg) = &self.open {
            keep = keep.min(seg.start);
        }
        while self.base < keep {
            self.frames.pop_front();
            self.base += 1;
        }
    }

    /// Ends the stream: an unfinished verification is rejected and an open
    /// segment is closed at the last frame.
    pub fn finish(&mut self) -> Result<Vec<DetectorEvent>> {
        if self.finished {
            return Ok(Vec::new());
        }
        self.finished = true;
        let n = self.received;
        let mut events = Vec::new();
        if let Some(p) = self.pending.take() {
            let votes = p.states.iter().filter(|&&s| s == p.to).count();
            events.push(DetectorEvent {
                frame_index: n,
                kind: EventKind::TransitionRejected {
                    from: p.from,
                    to: p.to,
                    trigger_frame: p.trigger,
                    votes,
                    tests: self.config.tests,
                    reason: Some(format!("stream ended after {} of {} tests", p.states.len(), self.config.tests)),
                },
            });
        }
        if self.open.is_some() {
            self.close_segment(n, n, &mut events)?;
        }
        Ok(events)
    }

    /// Feeds a whole recorded stream and finishes it.
    pub fn run(mut self, frames: impl IntoIterator<Item = Frame>) -> Result<Vec<DetectorEvent>> {
        let mut events = Vec::new();
        for f in frames {
            events.extend(self.push_frame(f)?);
        }
        events.extend(self.finish()?);
        Ok(events)
    }
}
