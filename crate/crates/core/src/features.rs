//! Hand-crafted electrical features, the per-cycle RMS vector and random
//! sub-sampling of the raw current.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::domain::{EventSegment, LabeledDataset, SamplingContext};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One feature vector with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub names: Vec<String>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Row-major sample × dimension matrix with per-row class indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    names: Vec<String>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        data: Vec<f64>,
        n_cols: usize,
        names: Vec<String>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if names.len() != n_cols {
            return Err(Error::DimMismatch {
                expected: n_cols,
                found: names.len(),
            });
        }
        let n_rows = labels.len();
        if data.len() != n_rows * n_cols {
            return Err(Error::LengthMismatch {
                expected: n_rows * n_cols,
                found: data.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidDataset(format!("label index {bad} out of range")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("feature matrix contains non-finite values".into()));
        }
        Ok(Self {
            data,
            n_rows,
            n_cols,
            names,
            labels,
            class_names,
        })
    }

    /// Unlabeled-looking convenience constructor: every row gets class 0 of a
    /// single anonymous class.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidDataset("ragged rows".into()));
        }
        let names = (0..n_cols).map(|j| format!("x{j}")).collect();
        Self::new(
            rows.concat(),
            n_cols,
            names,
            vec![0; rows.len()],
            vec!["_".into()],
        )
    }

    /// Rows plus their class indices.
    pub fn labeled(rows: &[Vec<f64>], labels: &[usize], class_names: &[&str]) -> Result<Self> {
        let mut m = Self::from_rows(rows)?;
        m.labels = labels.to_vec();
        m.class_names = class_names.iter().map(|s| s.to_string()).collect();
        if m.labels.len() != m.n_rows {
            return Err(Error::LengthMismatch {
                expected: m.n_rows,
                found: m.labels.len(),
            });
        }
        if m.labels.iter().any(|&l| l >= m.class_names.len()) {
            return Err(Error::InvalidDataset("label index out of range".into()));
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact would yield nothing for zero-width matrices.
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            n_rows: indices.len(),
            n_cols: self.n_cols,
            names: self.names.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Same labels, new values and column names.
    pub fn with_data(&self, data: Vec<f64>, names: Vec<String>) -> Result<Self> {
        Self::new(
            data,
            names.len(),
            names,
            self.labels.clone(),
            self.class_names.clone(),
        )
    }
}

/// Which hand-crafted feature groups to compute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub active_power: bool,
    pub apparent_power: bool,
    pub reactive_power: bool,
    pub admittance: bool,
    pub crest_factor: bool,
    pub form_factor: bool,
    pub phase_shift: bool,
    pub harmonics: bool,
    pub thd: bool,
    pub spectral_flatness: bool,
    pub cycle_rms_stats: bool,
    pub max_inrush_ratio: bool,
    pub inrush_current_ratio: bool,
    /// Number of harmonics of the mains frequency analysed, fundamental included.
    pub harmonic_count: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::all()
    }
}

impl FeatureConfig {
    pub const DEFAULT_HARMONICS: usize = 15;

    pub fn all() -> Self {
        Self::with_all(true)
    }

    pub fn none() -> Self {
        Self::with_all(false)
    }

    fn with_all(on: bool) -> Self {
        Self {
            active_power: on,
            apparent_power: on,
            reactive_power: on,
            admittance: on,
            crest_factor: on,
            form_factor: on,
            phase_shift: on,
            harmonics: on,
            thd: on,
            spectral_flatness: on,
            cycle_rms_stats: on,
            max_inrush_ratio: on,
            inrush_current_ratio: on,
            harmonic_count: Self::DEFAULT_HARMONICS,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.column_names().is_empty()
    }

    fn uses_voltage(&self) -> bool {
        self.active_power || self.apparent_power || self.reactive_power || self.admittance || self.phase_shift
    }

    fn needs_harmonics(&self) -> bool {
        self.harmonics || self.thd
    }

    /// Column names in output order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        let scalar = |names: &mut Vec<String>, on: bool, name: &str| {
            if on {
                names.push(name.to_owned());
            }
        };
        scalar(&mut names, self.active_power, "active_power");
        scalar(&mut names, self.apparent_power, "apparent_power");
        scalar(&mut names, self.reactive_power, "reactive_power");
        scalar(&mut names, self.admittance, "admittance");
        scalar(&mut names, self.crest_factor, "crest_factor");
        scalar(&mut names, self.form_factor, "form_factor");
        scalar(&mut names, self.phase_shift, "phase_shift");
        if self.harmonics {
            for k in 1..=self.harmonic_count {
                names.push(format!("harmonic_{k:02}"));
            }
        }
        scalar(&mut names, self.thd, "thd");
        scalar(&mut names, self.spectral_flatness, "spectral_flatness");
        if self.cycle_rms_stats {
            for s in ["mean", "std", "max", "min"] {
                names.push(format!("cycle_rms_{s}"));
            }
        }
        scalar(&mut names, self.max_inrush_ratio, "max_inrush_ratio");
        scalar(&mut names, self.inrush_current_ratio, "inrush_current_ratio");
        names
    }
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// RMS of each mains cycle.
pub fn cycle_rms(x: &[f64], context: &SamplingContext) -> Vec<f64> {
    x.chunks_exact(context.samples_per_cycle()).map(rms).collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Precomputed tables for one sampling context and feature configuration.
pub struct HandcraftedExtractor {
    config: FeatureConfig,
    context: SamplingContext,
    names: Vec<String>,
    sin_table: Vec<f64>,
    cos_table: Vec<f64>,
    fft: Option<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for HandcraftedExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HandcraftedExtractor")
            .field("config", &self.config)
            .field("context", &self.context)
            .finish_non_exhaustive()
    }
}

impl HandcraftedExtractor {
    pub fn new(config: &FeatureConfig, context: &SamplingContext) -> Result<Self> {
        let names = config.column_names();
        if names.is_empty() {
            return Err(Error::EmptyConfig);
        }
        if config.needs_harmonics() || config.spectral_flatness {
            if config.harmonic_count == 0 {
                return Err(Error::InvalidConfig("harmonic_count must be at least 1".into()));
            }
            // Highest analysed harmonic must stay below Nyquist.
            if 2 * config.harmonic_count * context.f0() as usize >= context.fs() as usize {
                return Err(Error::InvalidConfig(format!(
                    "{} harmonics of {} Hz exceed the Nyquist limit of f_s = {} Hz",
                    config.harmonic_count,
                    context.f0(),
                    context.fs()
                )));
            }
        }
        let period = context.samples_per_cycle();
        let (sin_table, cos_table) = (0..period)
            .map(|m| {
                let a = 2.0 * PI * m as f64 / period as f64;
                (a.sin(), a.cos())
            })
            .unzip();
        let fft = config
            .spectral_flatness
            .then(|| FftPlanner::new().plan_fft_forward(context.samples_per_segment()));
        Ok(Self {
            config: config.clone(),
            context: *context,
            names,
            sin_table,
            cos_table,
            fft,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Sine and cosine correlation of `x` with harmonic `k` of the mains
    /// frequency, scaled to amplitude units: `x ≈ a sin + b cos`.
    fn harmonic_component(&self, x: &[f64], k: usize) -> (f64, f64) {
        let period = self.sin_table.len();
        let mut s = 0.0;
        let mut c = 0.0;
        let mut idx = 0usize;
        for &v in x {
            s += v * self.sin_table[idx];
            c += v * self.cos_table[idx];
            idx += k;
            if idx >= period {
                idx %= period;
            }
        }
        let scale = 2.0 / x.len() as f64;
        (s * scale, c * scale)
    }

    /// Harmonic amplitudes 1..=count of `x` (absolute, not normalized).
    pub fn harmonic_amplitudes(&self, x: &[f64], count: usize) -> Vec<f64> {
        (1..=count)
            .map(|k| {
                let (a, b) = self.harmonic_component(x, k);
                a.hypot(b)
            })
            .collect()
    }

    fn spectral_flatness(&self, x: &[f64]) -> f64 {
        let fft = self.fft.as_ref().expect("planned when enabled");
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.process(&mut buf);
        let top = (self.config.harmonic_count * self.context.cycles()).min(buf.len() / 2);
        let mags: Vec<f64> = buf[1..=top].iter().map(|z| z.norm()).collect();
        let mean = mags.iter().sum::<f64>() / mags.len() as f64;
        if mean <= 0.0 || mags.iter().any(|&m| m <= 0.0) {
            return 0.0;
        }
        let log_mean = mags.iter().map(|m| m.ln()).sum::<f64>() / mags.len() as f64;
        log_mean.exp() / mean
    }

    pub fn extract(&self, segment: &EventSegment) -> Result<FeatureVector> {
        if segment.context() != &self.context {
            return Err(Error::InvalidSegment("segment context differs from extractor context".into()));
        }
        let cfg = &self.config;
        let i = segment.current();
        let v = segment.voltage();
        let rms_i = rms(i);
        let rms_v = rms(v);
        if rms_v == 0.0 && cfg.uses_voltage() {
            return Err(Error::DegenerateSignal("voltage channel is all zero".into()));
        }
        if rms_i == 0.0 {
            log::warn!("silent current channel; ratio features set to 0");
        }

        let mut out = Vec::with_capacity(self.names.len());
        let active = i.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / i.len() as f64;
        let apparent = rms_v * rms_i;
        if cfg.active_power {
            out.push(active);
        }
        if cfg.apparent_power {
            out.push(apparent);
        }
        if cfg.reactive_power {
            out.push((apparent * apparent - active * active).max(0.0).sqrt());
        }
        if cfg.admittance {
            out.push(ratio(rms_i, rms_v));
        }
        if cfg.crest_factor {
            let peak = i.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            out.push(ratio(peak, rms_i));
        }
        if cfg.form_factor {
            let mean_abs = i.iter().map(|x| x.abs()).sum::<f64>() / i.len() as f64;
            out.push(ratio(rms_i, mean_abs));
        }
        if cfg.phase_shift {
            let (ai, bi) = self.harmonic_component(i, 1);
            let (av, bv) = self.harmonic_component(v, 1);
            let phi = if ai.hypot(bi) > 0.0 && av.hypot(bv) > 0.0 {
                wrap_angle(bv.atan2(av) - bi.atan2(ai))
            } else {
                0.0
            };
            out.push(phi);
        }
        if cfg.needs_harmonics() {
            let amps = self.harmonic_amplitudes(i, cfg.harmonic_count);
            let fundamental = amps[0];
            let rel: Vec<f64> = amps.iter().map(|&a| ratio(a, fundamental)).collect();
            if cfg.harmonics {
                out.extend_from_slice(&rel);
            }
            if cfg.thd {
                out.push(rel[1..].iter().map(|h| h * h).sum::<f64>().sqrt());
            }
        }
        if cfg.spectral_flatness {
            out.push(self.spectral_flatness(i));
        }
        if cfg.cycle_rms_stats || cfg.max_inrush_ratio || cfg.inrush_current_ratio {
            let cycles = cycle_rms(i, &self.context);
            let n = cycles.len() as f64;
            let first = cycles[0];
            let last = cycles[cycles.len() - 1];
            let max = cycles.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if cfg.cycle_rms_stats {
                let mean = cycles.iter().sum::<f64>() / n;
                let var = cycles.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
                let min = cycles.iter().cloned().fold(f64::INFINITY, f64::min);
                out.extend_from_slice(&[mean, var.sqrt(), max, min]);
            }
            if cfg.max_inrush_ratio {
                out.push(ratio(max, last));
            }
            if cfg.inrush_current_ratio {
                out.push(ratio(first, last));
            }
        }
        debug_assert_eq!(out.len(), self.names.len());
        Ok(FeatureVector {
            values: out,
            names: self.names.clone(),
        })
    }
}

/// Wraps an angle into `(-pi, pi]`.
fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Hand-crafted features of a single segment.
pub fn extract_handcrafted(segment: &EventSegment, config: &FeatureConfig) -> Result<FeatureVector> {
    HandcraftedExtractor::new(config, segment.context())?.extract(segment)
}

/// Current RMS of every mains cycle (25 values for a 0.5 s segment at 50 Hz).
pub fn rms25(segment: &EventSegment) -> FeatureVector {
    let values = cycle_rms(segment.current(), segment.context());
    let names = (0..values.len()).map(|j| format!("cycle_rms_{j:02}")).collect();
    FeatureVector { values, names }
}

/// A fixed set of current sample positions, drawn once per experiment and
/// applied to every segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSubsampler {
    indices: Vec<usize>,
    segment_len: usize,
}

impl RandomSubsampler {
    pub fn new(segment_len: usize, dims: usize, rng: &mut Rng) -> Result<Self> {
        if dims > segment_len {
            return Err(Error::DimsTooLarge {
                dims,
                available: segment_len,
            });
        }
        let mut indices = rng.sample_indices(segment_len, dims);
        indices.sort_unstable();
        Ok(Self { indices, segment_len })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn apply(&self, segment: &EventSegment) -> Result<FeatureVector> {
        if segment.len() != self.segment_len {
            return Err(Error::DimMismatch {
                expected: self.segment_len,
                found: segment.len(),
            });
        }
        let current = segment.current();
        Ok(FeatureVector {
            values: self.indices.iter().map(|&i| current[i]).collect(),
            names: self.indices.iter().map(|i| format!("sample_{i:05}")).collect(),
        })
    }
}

/// Current values at `dims` distinct random positions, sorted by position.
pub fn random_subsample(segment: &EventSegment, dims: usize, rng: &mut Rng) -> Result<FeatureVector> {
    RandomSubsampler::new(segment.len(), dims, rng)?.apply(segment)
}

/// Per-segment feature extractor used to build a [`FeatureMatrix`].
#[derive(Debug, Clone)]
pub enum Extractor {
    Handcrafted(FeatureConfig),
    Rms25,
    RandomSubsample(RandomSubsampler),
    /// Raw current samples, optionally followed by the raw voltage samples.
    RawWaveform { with_voltage: bool },
}

enum Prepared<'a> {
    Handcrafted(HandcraftedExtractor),
    Rms25,
    RandomSubsample(&'a RandomSubsampler),
    Raw(bool),
}

impl Prepared<'_> {
    fn run(&self, seg: &EventSegment) -> Result<FeatureVector> {
        match self {
            Prepared::Handcrafted(h) => h.extract(seg),
            Prepared::Rms25 => Ok(rms25(seg)),
            Prepared::RandomSubsample(s) => s.apply(seg),
            Prepared::Raw(with_voltage) => {
                let mut values = seg.current().to_vec();
                let mut names: Vec<String> = (0..seg.len()).map(|k| format!("i_{k:05}")).collect();
                if *with_voltage {
                    values.extend_from_slice(seg.voltage());
                    names.extend((0..seg.len()).map(|k| format!("v_{k:05}")));
                }
                Ok(FeatureVector { values, names })
            }
        }
    }
}

/// Applies `extractor` to every segment; row order follows the dataset.
pub fn extract_matrix(dataset: &LabeledDataset, extractor: &Extractor) -> Result<FeatureMatrix> {
    let context = dataset
        .context()
        .ok_or_else(|| Error::InvalidDataset("empty dataset".into()))?;
    let prepared = match extractor {
        Extractor::Handcrafted(cfg) => Prepared::Handcrafted(HandcraftedExtractor::new(cfg, context)?),
        Extractor::Rms25 => Prepared::Rms25,
        Extractor::RandomSubsample(s) => {
            if s.indices().is_empty() {
                return Err(Error::EmptyConfig);
            }
            Prepared::RandomSubsample(s)
        }
        Extractor::RawWaveform { with_voltage } => Prepared::Raw(*with_voltage),
    };
    let rows: Vec<FeatureVector> = dataset
        .segments()
        .par_iter()
        .map(|seg| prepared.run(seg))
        .collect::<Result<_>>()?;
    let names = rows[0].names.clone();
    let n_cols = names.len();
    let mut data = Vec::with_capacity(rows.len() * n_cols);
    for r in &rows {
        data.extend_from_slice(&r.values);
    }
    FeatureMatrix::new(
        data,
        n_cols,
        names,
        dataset.labels().to_vec(),
        dataset.class_names().to_vec(),
    )
}
