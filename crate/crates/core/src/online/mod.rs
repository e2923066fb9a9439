//! Streaming motion detection: the state detector, the verification process,
//! segmentation, early classification and the latency budget.

mod config;
mod detector;
mod engine;
mod events;

pub use config::OnlineConfig;
pub use detector::{detect_window, state_names, train_detector, DetectorMode, DetectorModel, DetectorOptions};
pub use engine::{verify_transition, Engine, RunMode, SegmentClassifier, StateDetector, Timing, Verdict};
pub use events::{
    event_log_string, parse_event_log, read_event_log, segments_from_events, state_samples, write_event, write_event_log, DetectorEvent, EventKind, SegmentPrediction,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use crate::skeleton::{Frame, JointLayout, SkeletonSequence};

    /// Frames whose first joint stores the frame index, so stubs can tell
    /// where a window sits.
    fn stream(len: usize) -> Vec<Frame> {
        (0..len).map(|t| vec![[t as f64, 0.0, 0.0], [t as f64, 1.0, 0.0]]).collect()
    }

    fn layout() -> JointLayout {
        JointLayout::custom(2).unwrap()
    }

    fn end_of(window: &SkeletonSequence) -> usize {
        window.frames().last().unwrap()[0][0] as usize + 1
    }

    /// State as a function of the window's end frame.
    struct Scripted<F: Fn(usize) -> u32 + Sync>(usize, F);

    impl<F: Fn(usize) -> u32 + Sync> StateDetector for Scripted<F> {
        fn window_size(&self) -> usize {
            self.0
        }
        fn detect(&self, w: &SkeletonSequence) -> Result<u32> {
            Ok((self.1)(end_of(w)))
        }
    }

    /// Class 7, whatever the segment.
    struct Fixed;

    impl SegmentClassifier for Fixed {
        fn classify(&self, _: &SkeletonSequence) -> Result<u32> {
            Ok(7)
        }
    }

    fn run(cfg: OnlineConfig, det: &dyn StateDetector, len: usize) -> Vec<DetectorEvent> {
        Engine::new(cfg, layout(), det, &Fixed).unwrap().run(stream(len)).unwrap()
    }

    fn kinds(events: &[DetectorEvent], name: &str) -> Vec<DetectorEvent> {
        events.iter().filter(|e| e.kind.name() == name).cloned().collect()
    }

    #[test]
    fn majority_vote_examples() {
        let v = verify_transition(1, &[0, 1, 1, 1, 0], 5).unwrap();
        assert_eq!((v.votes, v.confirmed), (3, true));
        assert!(verify_transition(1, &[1, 1, 1], 3).unwrap().confirmed);
        assert!(!verify_transition(1, &[1, 0, 0], 3).unwrap().confirmed);
        assert!(!verify_transition(1, &[1, 1, 0, 0], 4).unwrap().confirmed);
        assert!(verify_transition(1, &[1], 1).unwrap().confirmed);
        assert!(verify_transition(1, &[1, 1], 3).is_err());
    }

    #[test]
    fn majority_vote_agrees_with_counting() {
        for te in 1..=7usize {
            for mask in 0..(1u32 << te) {
                let states: Vec<u32> = (0..te).map(|i| (mask >> i) & 1).collect();
                let ones = states.iter().filter(|&&s| s == 1).count();
                assert_eq!(verify_transition(1, &states, te).unwrap().confirmed, ones * 2 > te);
            }
        }
    }

    #[test]
    fn window_schedule() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 3);
        let events = run(cfg, &Scripted(20, |_| 0), 100);
        let samples = state_samples(&events);
        let expected: Vec<_> = (0..).map(|k| (6 * k, 20 + 6 * k, 0)).take_while(|w| w.1 <= 100).collect();
        assert_eq!(samples, expected);
        assert!(kinds(&events, "transition_candidate").is_empty());
    }

    #[test]
    fn confirmed_start_and_latency() {
        // states flip to 1 for windows ending at 44..=80, so 44 triggers
        let cfg = OnlineConfig::new(20, 6, 30.0, 5);
        let det = Scripted(20, |n| u32::from((44..=80).contains(&n)));
        let events = run(cfg, &det, 150);
        let confirmed = kinds(&events, "transition_confirmed");
        assert_eq!(confirmed.len(), 2);
        match confirmed[0].kind {
            EventKind::TransitionConfirmed { trigger_frame, transition_frame, votes, .. } => {
                assert_eq!(trigger_frame, 44);
                assert_eq!(transition_frame, 38);
                assert_eq!(votes, 5);
                assert_eq!(confirmed[0].frame_index - trigger_frame, 4 * 6);
            }
            _ => unreachable!(),
        }
        let segs = segments_from_events(&events);
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start_frame, segs[0].end_frame, segs[0].class), (38, 80, 7));
    }

    #[test]
    fn figure_four_majority() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 5);
        // trigger at 44, then 0, 1, 1, 0: 3 votes of 5
        let det = Scripted(20, |n| match n {
            44 | 56 | 62 => 1,
            _ => 0,
        });
        let events = run(cfg, &det, 80);
        let c = kinds(&events, "transition_confirmed");
        assert_eq!(c.len(), 1);
        assert!(matches!(c[0].kind, EventKind::TransitionConfirmed { transition_frame: 38, votes: 3, tests: 5, .. }));
    }

    #[test]
    fn flicker_is_rejected() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 3);
        let det = Scripted(20, |n| u32::from(n == 44));
        let events = run(cfg, &det, 100);
        assert_eq!(kinds(&events, "transition_candidate").len(), 1);
        assert_eq!(kinds(&events, "transition_rejected").len(), 1);
        assert!(kinds(&events, "transition_confirmed").is_empty());
        assert!(segments_from_events(&events).is_empty());
    }

    #[test]
    fn short_segment_is_discarded() {
        let mut cfg = OnlineConfig::new(20, 3, 30.0, 1);
        cfg.min_segment_seconds = 0.5;
        let det = Scripted(20, |n| u32::from((41..=47).contains(&n)));
        let events = run(cfg, &det, 90);
        assert_eq!(kinds(&events, "segment_discarded").len(), 1);
        assert!(kinds(&events, "motion_recognized").is_empty());
    }

    #[test]
    fn stream_end_mid_verification() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 5);
        let det = Scripted(20, |n| u32::from(n >= 44));
        let events = run(cfg, &det, 55);
        let rejected = kinds(&events, "transition_rejected");
        assert_eq!(rejected.len(), 1);
        assert!(matches!(&rejected[0].kind, EventKind::TransitionRejected { reason: Some(_), .. }));
    }

    #[test]
    fn open_segment_closes_at_stream_end() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 3);
        let det = Scripted(20, |n| u32::from(n >= 44));
        let events = run(cfg, &det, 120);
        let segs = segments_from_events(&events);
        assert_eq!((segs[0].start_frame, segs[0].end_frame), (38, 120));
    }

    #[test]
    fn multiclass_handover() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 3);
        let det = Scripted(20, |n| match n {
            0..=43 => 0,
            44..=79 => 2,
            _ => 3,
        });
        let events = run(cfg, &det, 140);
        let segs = segments_from_events(&events);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].end_frame, segs[1].start_frame);
        assert_eq!(segs[1].end_frame, 140);
    }

    #[test]
    fn early_recognition_at_deadline() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 3).with_deadline(1.0);
        let det = Scripted(20, |n| u32::from((44..=140).contains(&n)));
        let events = run(cfg, &det, 200);
        let rec = kinds(&events, "motion_recognized");
        assert_eq!(rec.len(), 1);
        assert_eq!(rec[0].frame_index, 38 + 30);
        assert!(matches!(rec[0].kind, EventKind::MotionRecognized { early: true, start_frame: 38, end_frame: 68, .. }));
        let segs = segments_from_events(&events);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].class, 7);
    }

    #[test]
    fn early_deadline_after_end_falls_through() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 3).with_deadline(3.0);
        let det = Scripted(20, |n| u32::from((44..=80).contains(&n)));
        let with = run(cfg, &det, 200);
        let without = run(OnlineConfig::new(20, 6, 30.0, 3), &det, 200);
        assert_eq!(with, without);
    }

    #[test]
    fn budget_violations() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 3);
        let det = Scripted(20, |_| 0);
        let quick = Engine::new(cfg, layout(), &det, &Fixed).unwrap().with_timing(Timing::Constant(0.1)).run(stream(100)).unwrap();
        assert!(kinds(&quick, "budget_violation").is_empty());
        let slow = Engine::new(cfg, layout(), &det, &Fixed).unwrap().with_timing(Timing::Constant(0.25)).run(stream(100)).unwrap();
        assert_eq!(kinds(&slow, "budget_violation").len(), state_samples(&slow).len());

        let trace = vec![0.1, 0.3, 0.19, 0.21, 0.0];
        let events = Engine::new(cfg, layout(), &det, &Fixed).unwrap().with_timing(Timing::Trace(trace.clone())).run(stream(100)).unwrap();
        let windows = state_samples(&events).len();
        let brute = (0..windows).filter(|k| trace[k % trace.len()] > 6.0 / 30.0).count();
        assert_eq!(kinds(&events, "budget_violation").len(), brute);
    }

    #[test]
    fn live_mode_realigns_after_overrun() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 3);
        let det = Scripted(20, |_| 0);
        let events = Engine::new(cfg, layout(), &det, &Fixed)
            .unwrap()
            .with_mode(RunMode::Live)
            .with_timing(Timing::Trace(vec![0.0, 0.5, 0.0, 0.0]))
            .run(stream(80))
            .unwrap();
        let ends: Vec<usize> = state_samples(&events).iter().map(|s| s.1).collect();
        // second window overruns by 15 frames: the next 18 frames are skipped
        assert_eq!(ends, vec![20, 26, 44, 50, 56, 62, 80]);
        assert!(ends.iter().all(|e| (e - 20) % 6 == 0));
    }

    #[test]
    fn rejects_bad_frames_and_mismatched_detector() {
        let cfg = OnlineConfig::new(20, 6, 30.0, 3);
        let det = Scripted(20, |_| 0);
        let mut e = Engine::new(cfg, layout(), &det, &Fixed).unwrap();
        assert!(e.push_frame(vec![[0.0; 3]]).is_err());
        assert!(e.push_frame(vec![[f64::NAN, 0.0, 0.0], [0.0; 3]]).is_err());
        assert!(Engine::new(cfg, layout(), &Scripted(21, |_| 0), &Fixed).is_err());
    }

    #[test]
    fn classifier_sees_exact_segment() {
        struct Span;
        impl SegmentClassifier for Span {
            fn classify(&self, s: &SkeletonSequence) -> Result<u32> {
                Ok((end_of(s) - s.frames()[0][0][0] as usize) as u32)
            }
        }
        let cfg = OnlineConfig::new(20, 6, 30.0, 3);
        let det = Scripted(20, |n| u32::from((44..=80).contains(&n)));
        let events = Engine::new(cfg, layout(), &det, &Span).unwrap().run(stream(150)).unwrap();
        let segs = segments_from_events(&events);
        assert_eq!(segs[0].class as usize, segs[0].end_frame - segs[0].start_frame);
    }
}
