//! Domain types shared by every stage of the pipeline.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CYCLE_TOLERANCE: f64 = 1e-9;

/// Sampling rate, mains frequency and segment duration of a recording.
///
/// Construction guarantees a whole number of samples per mains cycle and a
/// whole number of cycles per segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawContext", into = "RawContext")]
pub struct SamplingContext {
    fs: u32,
    f0: u32,
    duration: f64,
    cycles: usize,
}

#[derive(Serialize, Deserialize)]
struct RawContext {
    fs: u32,
    f0: u32,
    #[serde(default = "default_duration")]
    duration: f64,
}

fn default_duration() -> f64 {
    SamplingContext::DEFAULT_DURATION
}

impl TryFrom<RawContext> for SamplingContext {
    type Error = Error;

    fn try_from(raw: RawContext) -> Result<Self> {
        SamplingContext::new(raw.fs, raw.f0, raw.duration)
    }
}

impl From<SamplingContext> for RawContext {
    fn from(ctx: SamplingContext) -> Self {
        RawContext {
            fs: ctx.fs,
            f0: ctx.f0,
            duration: ctx.duration,
        }
    }
}

impl SamplingContext {
    pub const DEFAULT_DURATION: f64 = 0.5;

    pub fn new(fs: u32, f0: u32, duration: f64) -> Result<Self> {
        if fs == 0 || f0 == 0 {
            return Err(Error::NonIntegralCycles(format!(
                "frequencies must be positive (f_s = {fs}, f_0 = {f0})"
            )));
        }
        if !fs.is_multiple_of(f0) {
            return Err(Error::NonIntegralCycles(format!(
                "f_s = {fs} Hz is not a multiple of f_0 = {f0} Hz"
            )));
        }
        let exact = duration * f64::from(f0);
        let cycles = exact.round();
        if !duration.is_finite() || cycles < 1.0 || (exact - cycles).abs() > CYCLE_TOLERANCE {
            return Err(Error::NonIntegralCycles(format!(
                "{duration} s at {f0} Hz is not a whole number of cycles"
            )));
        }
        Ok(Self {
            fs,
            f0,
            duration,
            cycles: cycles as usize,
        })
    }

    /// Context with the default 0.5 s segment duration.
    pub fn with_default_duration(fs: u32, f0: u32) -> Result<Self> {
        Self::new(fs, f0, Self::DEFAULT_DURATION)
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn f0(&self) -> u32 {
        self.f0
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Number of mains cycles per segment (n_p).
    pub fn cycles(&self) -> usize {
        self.cycles
    }

    pub fn samples_per_cycle(&self) -> usize {
        (self.fs / self.f0) as usize
    }

    pub fn samples_per_segment(&self) -> usize {
        self.samples_per_cycle() * self.cycles
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / f64::from(self.fs)
    }
}

/// Free function form of [`SamplingContext::new`].
pub fn make_context(fs: u32, f0: u32, duration: f64) -> Result<SamplingContext> {
    SamplingContext::new(fs, f0, duration)
}

/// A two-channel startup waveform of fixed duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSegment {
    current: Vec<f64>,
    voltage: Vec<f64>,
    label: Option<String>,
    timestamp: f64,
    context: SamplingContext,
}

impl EventSegment {
    pub fn new(
        current: Vec<f64>,
        voltage: Vec<f64>,
        label: Option<String>,
        timestamp: f64,
        context: SamplingContext,
    ) -> Result<Self> {
        let expected = context.samples_per_segment();
        for (name, channel) in [("current", &current), ("voltage", &voltage)] {
            if channel.len() != expected {
                return Err(Error::LengthMismatch {
                    expected,
                    found: channel.len(),
                });
            }
            if channel.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSegment(format!("{name} contains non-finite samples")));
            }
        }
        if !timestamp.is_finite() {
            return Err(Error::InvalidSegment("non-finite timestamp".into()));
        }
        Ok(Self {
            current,
            voltage,
            label,
            timestamp,
            context,
        })
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn voltage(&self) -> &[f64] {
        &self.voltage
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn context(&self) -> &SamplingContext {
        &self.context
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }
}

/// Labeled segments plus the ordered class list.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    segments: Vec<EventSegment>,
    class_names: Vec<String>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    /// Validates that every segment carries a known label, every class is
    /// populated and all segments share one sampling context.
    pub fn new(segments: Vec<EventSegment>, class_names: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&str> = class_names.iter().map(String::as_str).collect();
        if unique.len() != class_names.len() {
            let dup = class_names
                .iter()
                .enumerate()
                .find(|(i, n)| class_names[..*i].contains(n))
                .map(|(_, n)| n.clone())
                .unwrap_or_default();
            return Err(Error::DuplicateClassName(dup));
        }
        if class_names.is_empty() {
            return Err(Error::InvalidDataset("no classes".into()));
        }
        let mut labels = Vec::with_capacity(segments.len());
        let mut counts = vec![0usize; class_names.len()];
        for (i, seg) in segments.iter().enumerate() {
            let label = seg
                .label()
                .ok_or_else(|| Error::InvalidDataset(format!("segment {i} has no label")))?;
            let idx = class_names
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| Error::InvalidDataset(format!("segment {i} has unknown label `{label}`")))?;
            counts[idx] += 1;
            labels.push(idx);
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidDataset(format!(
                "class `{}` has no segments",
                class_names[empty]
            )));
        }
        if let Some(first) = segments.first() {
            if segments.iter().any(|s| s.context() != first.context()) {
                return Err(Error::InvalidDataset("segments use different sampling contexts".into()));
            }
        }
        Ok(Self {
            segments,
            class_names,
            labels,
        })
    }

    /// Builds a dataset whose class list is the sorted set of segment labels.
    pub fn from_segments(segments: Vec<EventSegment>) -> Result<Self> {
        let names: BTreeSet<String> = segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.label()
                    .map(str::to_owned)
                    .ok_or_else(|| Error::InvalidDataset(format!("segment {i} has no label")))
            })
            .collect::<Result<_>>()?;
        Self::new(segments, names.into_iter().collect())
    }

    pub fn segments(&self) -> &[EventSegment] {
        &self.segments
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Class index of every segment.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn context(&self) -> Option<&SamplingContext> {
        self.segments.first().map(EventSegment::context)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}
