//! Segment files and synthetic appliance startup transients.

use std::collections::BTreeSet;
use std::f64::consts::{PI, SQRT_2};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{EventSegment, LabeledDataset, SamplingContext};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const SEGMENT_MAGIC: &[u8; 8] = b"NILMSEG1";

/// Nominal mains RMS voltage of the synthetic supply.
pub const NOMINAL_VOLTAGE_RMS: f64 = 230.0;

/// Parameters of a synthetic appliance's switch-on current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceSignature {
    pub name: String,
    /// Steady-state current amplitude (peak), amperes.
    pub steady_amplitude: f64,
    /// Peak inrush over steady amplitude, >= 1.
    pub inrush_ratio: f64,
    /// Exponential time constant of the inrush decay, seconds.
    pub inrush_decay: f64,
    /// Current lag behind voltage, radians in [-pi/2, pi/2].
    pub phase_shift: f64,
    /// Relative amplitudes of the odd harmonics 3, 5, 7, ...
    #[serde(default)]
    pub harmonic_weights: Vec<f64>,
    /// Additive white noise on the current, amperes.
    #[serde(default)]
    pub noise_std: f64,
    /// Relative standard deviation of the per-event load level.
    #[serde(default)]
    pub load_variation: f64,
}

impl ApplianceSignature {
    /// A clean resistive load: no inrush, no harmonics, no noise.
    pub fn resistive(name: impl Into<String>, steady_amplitude: f64) -> Self {
        Self {
            name: name.into(),
            steady_amplitude,
            inrush_ratio: 1.0,
            inrush_decay: 0.05,
            phase_shift: 0.0,
            harmonic_weights: Vec::new(),
            noise_std: 0.0,
            load_variation: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidSignature {
                name: self.name.clone(),
                reason: reason.to_owned(),
            })
        };
        if !(self.steady_amplitude > 0.0 && self.steady_amplitude.is_finite()) {
            return fail("steady amplitude must be positive");
        }
        if !(self.inrush_ratio >= 1.0 && self.inrush_ratio.is_finite()) {
            return fail("inrush ratio must be >= 1");
        }
        if !(self.inrush_decay > 0.0 && self.inrush_decay.is_finite()) {
            return fail("inrush decay must be positive");
        }
        if !(self.phase_shift.abs() <= PI / 2.0) {
            return fail("phase shift must lie in [-pi/2, pi/2]");
        }
        if self.harmonic_weights.iter().any(|w| !w.is_finite()) {
            return fail("harmonic weights must be finite");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail("noise std must be non-negative");
        }
        if !(self.load_variation >= 0.0 && self.load_variation < 1.0) {
            return fail("load variation must lie in [0, 1)");
        }
        Ok(())
    }

    /// Startup envelope `1 + (r - 1) exp(-t / tau)`.
    pub fn envelope(&self, t: f64) -> f64 {
        1.0 + (self.inrush_ratio - 1.0) * (-t / self.inrush_decay).exp()
    }

    fn synthesize(
        &self,
        context: &SamplingContext,
        timestamp: f64,
        rng: &mut Rng,
    ) -> Result<EventSegment> {
        let n = context.samples_per_segment();
        let omega = 2.0 * PI * f64::from(context.f0());
        let dt = context.sample_period();
        // Switch-on happens at an arbitrary point of the mains cycle.
        let onset = rng.uniform_range(0.0, 2.0 * PI);
        let gain = if self.load_variation > 0.0 {
            (1.0 + self.load_variation * rng.normal()).max(0.1)
        } else {
            1.0
        };
        let amplitude = gain * self.steady_amplitude;
        let v_peak = NOMINAL_VOLTAGE_RMS * SQRT_2;

        let mut current = Vec::with_capacity(n);
        let mut voltage = Vec::with_capacity(n);
        for k in 0..n {
            let t = k as f64 * dt;
            let angle = omega * t + onset;
            let lagged = angle - self.phase_shift;
            let mut wave = lagged.sin();
            for (j, w) in self.harmonic_weights.iter().enumerate() {
                let order = (2 * j + 3) as f64;
                wave += w * (order * lagged).sin();
            }
            let mut i = amplitude * self.envelope(t) * wave;
            if self.noise_std > 0.0 {
                i += self.noise_std * rng.normal();
            }
            current.push(i);
            voltage.push(v_peak * angle.sin());
        }
        EventSegment::new(current, voltage, Some(self.name.clone()), timestamp, *context)
    }
}

/// Synthesizes `per_class` startup segments for every signature.
///
/// Each class draws from its own stream derived from `rng` and the class
/// name, so adding or reordering signatures leaves the other classes intact.
/// Segments are emitted in signature order; class names are sorted.
pub fn generate_dataset(
    signatures: &[ApplianceSignature],
    per_class: usize,
    context: &SamplingContext,
    rng: &Rng,
) -> Result<LabeledDataset> {
    if signatures.is_empty() {
        return Err(Error::InvalidDataset("no appliance signatures".into()));
    }
    if per_class == 0 {
        return Err(Error::InvalidDataset("per_class must be at least 1".into()));
    }
    let mut seen = BTreeSet::new();
    for sig in signatures {
        if !seen.insert(sig.name.as_str()) {
            return Err(Error::DuplicateClassName(sig.name.clone()));
        }
        sig.validate()?;
    }

    let mut segments = Vec::with_capacity(signatures.len() * per_class);
    for (c, sig) in signatures.iter().enumerate() {
        let mut class_rng = rng.derive(&format!("generate/{}", sig.name));
        for j in 0..per_class {
            let timestamp = ((c * per_class + j) as f64) * 30.0;
            segments.push(sig.synthesize(context, timestamp, &mut class_rng)?);
        }
    }
    LabeledDataset::from_segments(segments)
}

/// A deterministic catalogue of `n` mutually distinguishable signatures.
///
/// The first entries are loosely modelled on household appliances; beyond the
/// named list, amplitudes keep growing geometrically.
pub fn synthetic_catalogue(n: usize) -> Vec<ApplianceSignature> {
    // name, amplitude (A peak), inrush ratio, decay (s), phase (rad), 3rd, 5th, 7th harmonic
    const NAMED: &[(&str, f64, f64, f64, f64, [f64; 3])] = &[
        ("laptop", 0.6, 4.0, 0.010, -0.30, [0.60, 0.35, 0.20]),
        ("fridge", 1.4, 6.0, 0.080, 0.70, [0.05, 0.02, 0.00]),
        ("lcd_monitor", 1.4, 3.0, 0.010, -0.25, [0.70, 0.45, 0.25]),
        ("hoover", 3.0, 2.5, 0.120, 0.35, [0.12, 0.06, 0.03]),
        ("microwave", 4.6, 1.6, 0.030, 0.20, [0.25, 0.10, 0.05]),
        ("toaster", 6.5, 1.05, 0.020, 0.00, [0.00, 0.00, 0.00]),
        ("hair_dryer", 6.5, 1.4, 0.060, 0.05, [0.15, 0.00, 0.00]),
        ("kettle", 11.0, 1.0, 0.020, 0.00, [0.01, 0.00, 0.00]),
        ("washing_machine", 2.2, 3.5, 0.200, 0.60, [0.10, 0.05, 0.02]),
        ("tv", 0.9, 5.0, 0.008, -0.20, [0.55, 0.30, 0.15]),
        ("iron", 8.0, 1.0, 0.020, 0.00, [0.00, 0.00, 0.00]),
        ("dishwasher", 3.8, 2.0, 0.150, 0.40, [0.08, 0.04, 0.00]),
    ];
    (0..n)
        .map(|i| {
            let (name, amp, ratio, decay, phase, harm) = match NAMED.get(i) {
                Some(&(name, a, r, d, p, h)) => (name.to_owned(), a, r, d, p, h),
                None => {
                    let k = (i - NAMED.len()) as f64;
                    let alt = if i % 2 == 0 { 1.0 } else { -1.0 };
                    (
                        format!("appliance_{i:02}"),
                        12.0 * 1.25f64.powf(k),
                        1.0 + 0.5 * (k % 4.0),
                        0.02 + 0.02 * (k % 3.0),
                        alt * 0.1 * (k % 5.0),
                        [0.05 * (k % 3.0), 0.02 * (k % 2.0), 0.0],
                    )
                }
            };
            ApplianceSignature {
                name,
                steady_amplitude: amp,
                inrush_ratio: ratio,
                inrush_decay: decay,
                phase_shift: phase,
                harmonic_weights: harm.to_vec(),
                noise_std: 0.02 * amp + 0.02,
                load_variation: 0.04,
            }
        })
        .collect()
}

/// Low-rate per-appliance power measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    timestamps: Vec<f64>,
    power: Vec<f64>,
}

impl PowerSeries {
    pub fn new(timestamps: Vec<f64>, power: Vec<f64>) -> Result<Self> {
        if timestamps.len() != power.len() {
            return Err(Error::LengthMismatch {
                expected: timestamps.len(),
                found: power.len(),
            });
        }
        if power.iter().chain(&timestamps).any(|v| !v.is_finite()) {
            return Err(Error::Format("power series contains non-finite values".into()));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("timestamps must be strictly increasing".into()));
        }
        Ok(Self { timestamps, power })
    }

    /// Series sampled every `period` seconds from `start`.
    pub fn uniform(start: f64, period: f64, power: Vec<f64>) -> Result<Self> {
        let timestamps = (0..power.len()).map(|i| start + i as f64 * period).collect();
        Self::new(timestamps, power)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }
}

/// Writes `dataset` in the `NILMSEG1` format, replacing any existing file.
pub fn write_segments(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let context = dataset
        .context()
        .ok_or_else(|| Error::InvalidDataset("cannot write an empty dataset".into()))?;
    if dataset.n_classes() > usize::from(u16::MAX) {
        return Err(Error::InvalidDataset("more than 65535 classes".into()));
    }
    let io = |e| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);

    let mut header = Vec::new();
    header.extend_from_slice(SEGMENT_MAGIC);
    header.extend_from_slice(&context.fs().to_le_bytes());
    header.extend_from_slice(&context.f0().to_le_bytes());
    header.extend_from_slice(&(context.samples_per_segment() as u32).to_le_bytes());
    header.extend_from_slice(&(dataset.len() as u32).to_le_bytes());
    header.extend_from_slice(&(dataset.n_classes() as u16).to_le_bytes());
    for name in dataset.class_names() {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| Error::InvalidDataset(format!("class name `{name}` too long")))?;
        header.extend_from_slice(&len.to_le_bytes());
        header.extend_from_slice(bytes);
    }
    w.write_all(&header).map_err(io)?;

    let mut record = Vec::with_capacity(10 + 16 * context.samples_per_segment());
    for (seg, &label) in dataset.segments().iter().zip(dataset.labels()) {
        record.clear();
        record.extend_from_slice(&(label as u16).to_le_bytes());
        record.extend_from_slice(&seg.timestamp().to_le_bytes());
        for v in seg.current().iter().chain(seg.voltage()) {
            record.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&record).map_err(io)?;
    }
    w.flush().map_err(io)
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format(format!("truncated file while reading {what}")))?;
        Ok(buf)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        self.bytes::<2>(what).map(u16::from_le_bytes)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.bytes::<4>(what).map(u32::from_le_bytes)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut raw = vec![0u8; 8 * n];
        self.inner
            .read_exact(&mut raw)
            .map_err(|_| Error::Format(format!("truncated file while reading {what}")))?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

/// Reads a `NILMSEG1` file and validates every record against `context`.
pub fn read_segments(path: impl AsRef<Path>, context: &SamplingContext) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        inner: BufReader::new(file),
    };

    let magic = cur.bytes::<8>("magic")?;
    if &magic != SEGMENT_MAGIC {
        return Err(Error::Format("bad magic, not a NILMSEG1 file".into()));
    }
    let fs = cur.u32("f_s")?;
    let f0 = cur.u32("f_0")?;
    let samples = cur.u32("samples per segment")? as usize;
    let records = cur.u32("record count")? as usize;
    if fs != context.fs() || f0 != context.f0() {
        return Err(Error::Format(format!(
            "file recorded at f_s = {fs} Hz, f_0 = {f0} Hz but context expects {} Hz / {} Hz",
            context.fs(),
            context.f0()
        )));
    }
    let expected = context.samples_per_segment();
    if samples != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: samples,
        });
    }

    let n_classes = usize::from(cur.u16("class count")?);
    let mut class_table = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let len = usize::from(cur.u16("class name length")?);
        let mut buf = vec![0u8; len];
        cur.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format("truncated class name".into()))?;
        let name = String::from_utf8(buf).map_err(|_| Error::Format("class name is not UTF-8".into()))?;
        class_table.push(name);
    }

    let mut segments = Vec::with_capacity(records);
    for r in 0..records {
        let class = usize::from(cur.u16("class index")?);
        let name = class_table
            .get(class)
            .ok_or_else(|| Error::Format(format!("record {r} refers to unknown class {class}")))?;
        let timestamp = f64::from_le_bytes(cur.bytes::<8>("timestamp")?);
        let current = cur.f64s(samples, "current samples")?;
        let voltage = cur.f64s(samples, "voltage samples")?;
        segments.push(
            EventSegment::new(current, voltage, Some(name.clone()), timestamp, *context)
                .map_err(|e| Error::Format(format!("record {r}: {e}")))?,
        );
    }
    let mut trailing = [0u8; 1];
    if cur.inner.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    LabeledDataset::from_segments(segments)
}
