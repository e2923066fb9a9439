use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for the floating-point side of the constraint checks.
const CONSTRAINT_TOL: f64 = 1e-9;

/// Streaming parameters. Frame counts are integers; times are seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    /// Window size in frames.
    pub ws: usize,
    /// Frames between two detector evaluations.
    pub refresh: usize,
    /// Frames per second of the stream.
    pub capture_rate: f64,
    /// Verification tests per candidate transition, trigger included.
    pub tests: usize,
    /// Early-classification deadline in seconds.
    #[serde(default)]
    pub deadline: Option<f64>,
    /// Frames subtracted from the trigger window's end to place a confirmed
    /// transition. Defaults to `refresh`.
    #[serde(default)]
    pub start_offset: Option<usize>,
    /// Confirmed segments shorter than this are dropped as false detections.
    #[serde(default = "default_min_segment")]
    pub min_segment_seconds: f64,
}

fn default_min_segment() -> f64 {
    0.3
}

impl OnlineConfig {
    pub fn new(ws: usize, refresh: usize, capture_rate: f64, tests: usize) -> Self {
        OnlineConfig {
            ws,
            refresh,
            capture_rate,
            tests,
            deadline: None,
            start_offset: None,
            min_segment_seconds: default_min_segment(),
        }
    }

    pub fn with_deadline(mut self, seconds: f64) -> Self {
        self.deadline = Some(seconds);
        self
    }

    /// Checks every constraint and names the first one violated.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let (ws, r, cr, te) = (self.ws, self.refresh, self.capture_rate, self.tests);
        if !(cr.is_finite() && cr > 0.0) {
            return fail(format!("capture rate must be positive, got {cr}"));
        }
        if r == 0 {
            return fail("refresh rate r must be at least 1 frame".into());
        }
        if te == 0 {
            return fail("te >= 1 violated: te=0".into());
        }
        if ws < 2 {
            return fail(format!("ws >= 2 violated: ws={ws}"));
        }
        if ws < r {
            return fail(format!("ws >= r violated: ws={ws}, r={r}"));
        }
        let limit = 0.3 * cr;
        if r as f64 > limit + CONSTRAINT_TOL {
            return fail(format!("r <= 0.3 * cr violated: r={r}, cr={cr} (limit {limit})"));
        }
        if !(self.min_segment_seconds.is_finite() && self.min_segment_seconds >= 0.0) {
            return fail(format!("minimum segment length must be non-negative, got {}", self.min_segment_seconds));
        }
        if let Some(t) = self.deadline {
            if !(t.is_finite() && t > 0.0) {
                return fail(format!("deadline T must be positive, got {t}"));
            }
            if t * cr + CONSTRAINT_TOL < r as f64 {
                return fail(format!("T * cr >= r violated: deadline of {} frames is shorter than one refresh interval r={r}", t * cr));
            }
            let max_te = t / r as f64 * cr;
            if te as f64 > max_te + CONSTRAINT_TOL {
                return fail(format!("te <= (T / r) * cr violated: te={te}, T={t}, r={r}, cr={cr} (limit {max_te})"));
            }
        }
        Ok(())
    }

    pub fn offset(&self) -> usize {
        self.start_offset.unwrap_or(self.refresh)
    }

    /// Deadline in frames, `round(T · cr)`.
    pub fn deadline_frames(&self) -> Option<usize> {
        self.deadline.map(|t| (t * self.capture_rate).round() as usize)
    }

    pub fn min_segment_frames(&self) -> usize {
        (self.min_segment_seconds * self.capture_rate).round() as usize
    }

    /// Wall time one window inference may take: `r / cr` seconds.
    pub fn budget_seconds(&self) -> f64 {
        self.refresh as f64 / self.capture_rate
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: OnlineConfig = serde_json::from_str(text).map_err(|e| Error::Parse(format!("engine config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
