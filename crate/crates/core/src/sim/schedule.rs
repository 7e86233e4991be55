use serde::{Deserialize, Serialize};
use std::fmt;

/// Event streams, declared in tie-break order for equal timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Control,
    Depth,
    Rgb,
    Detect,
    Replan,
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Control => "control",
            Self::Depth => "depth",
            Self::Rgb => "rgb",
            Self::Detect => "detect",
            Self::Replan => "replan",
        })
    }
}

/// Stream rates in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub rgb: f64,
    pub depth: f64,
    pub detect: f64,
    pub control: f64,
    pub replan: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            rgb: 30.0,
            depth: 15.0,
            detect: 10.0,
            control: 500.0,
            replan: 0.5,
        }
    }
}

impl ScheduleConfig {
    pub fn rates(&self) -> [(Stream, f64); 5] {
        [
            (Stream::Control, self.control),
            (Stream::Depth, self.depth),
            (Stream::Rgb, self.rgb),
            (Stream::Detect, self.detect),
            (Stream::Replan, self.replan),
        ]
    }

    pub fn validate(&self) -> Result<(), String> {
        for (s, r) in self.rates() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(format!("schedule.{s} must be a positive rate"));
            }
        }
        if self.control < 500.0 {
            return Err("schedule.control must be at least 500 Hz".into());
        }
        if self.rates().iter().any(|(s, r)| *s != Stream::Control && *r > self.control) {
            return Err("schedule.control must be the fastest stream".into());
        }
        if self.detect > self.rgb {
            return Err("schedule.detect must not exceed schedule.rgb".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    pub stream: Stream,
    pub index: u64,
    pub time: f64,
}

/// Merges fixed-rate streams into one timestamp-ordered event sequence.
/// Tick `k` of a stream at rate `r` fires at `k / r`; equal times fire in
/// [`Stream`] order.
#[derive(Debug, Clone)]
pub struct Scheduler {
    streams: Vec<(Stream, f64, u64)>,
}

impl Scheduler {
    pub fn new(cfg: &ScheduleConfig) -> Self {
        Self {
            streams: cfg.rates().iter().map(|&(s, r)| (s, r, 0)).collect(),
        }
    }
}

impl Iterator for Scheduler {
    type Item = Tick;

    fn next(&mut self) -> Option<Tick> {
        let (slot, tick) = self
            .streams
            .iter()
            .enumerate()
            .map(|(i, &(stream, rate, k))| {
                (
                    i,
                    Tick {
                        stream,
                        index: k,
                        time: k as f64 / rate,
                    },
                )
            })
            .min_by(|(_, a), (_, b)| a.time.total_cmp(&b.time).then(a.stream.cmp(&b.stream)))?;
        self.streams[slot].2 += 1;
        Some(tick)
    }
}
