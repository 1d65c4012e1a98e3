//! Threshold event detection and startup segment extraction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{EventSegment, SamplingContext};
use crate::error::{Error, Result};
use crate::ingest::PowerSeries;

/// Switch-on and switch-off power levels of one appliance, watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventThresholds {
    on: f64,
    off: f64,
}

impl EventThresholds {
    pub fn new(on: f64, off: f64) -> Result<Self> {
        if !(on.is_finite() && off.is_finite() && off >= 0.0 && on > off) {
            return Err(Error::InvalidThresholds { on, off });
        }
        Ok(Self { on, off })
    }

    pub fn on(&self) -> f64 {
        self.on
    }

    pub fn off(&self) -> f64 {
        self.off
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventKind {
    On,
    Off,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::On => "ON",
            EventKind::Off => "OFF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedEvent {
    pub kind: EventKind,
    pub timestamp: f64,
}

/// Hysteresis detector.
///
/// Starting from the OFF state, the appliance switches on at the first sample
/// whose power reaches the on threshold and switches off at the first sample
/// at or below the off threshold. Samples in between keep the current state.
pub fn detect_events(series: &PowerSeries, thresholds: &EventThresholds) -> Vec<DetectedEvent> {
    let mut on = false;
    let mut events = Vec::new();
    for (&t, &p) in series.timestamps().iter().zip(series.power()) {
        if !on && p >= thresholds.on {
            on = true;
            events.push(DetectedEvent {
                kind: EventKind::On,
                timestamp: t,
            });
        } else if on && p <= thresholds.off {
            on = false;
            events.push(DetectedEvent {
                kind: EventKind::Off,
                timestamp: t,
            });
        }
    }
    events
}

/// Cuts one segment out of a continuous aggregate stream.
///
/// The segment starts at the sample nearest to `event_time`; the returned
/// segment carries no label.
pub fn extract_segment(
    aggregate_current: &[f64],
    aggregate_voltage: &[f64],
    context: &SamplingContext,
    event_time: f64,
    stream_start: f64,
) -> Result<EventSegment> {
    if aggregate_current.len() != aggregate_voltage.len() {
        return Err(Error::LengthMismatch {
            expected: aggregate_current.len(),
            found: aggregate_voltage.len(),
        });
    }
    let offset = ((event_time - stream_start) * f64::from(context.fs())).round();
    let len = context.samples_per_segment();
    if !offset.is_finite() || offset < 0.0 || offset as usize + len > aggregate_current.len() {
        return Err(Error::OutOfRange { event_time });
    }
    let start = offset as usize;
    EventSegment::new(
        aggregate_current[start..start + len].to_vec(),
        aggregate_voltage[start..start + len].to_vec(),
        None,
        event_time,
        *context,
    )
}

/// Per-appliance thresholds of the residential dataset (watts, on/off),
/// keyed by normalized appliance name.
const BUILTIN_THRESHOLDS: &[(&str, f64, f64)] = &[
    ("boiler", 70.0, 20.0),
    ("solar_thermal_pump", 40.0, 20.0),
    ("laptop", 20.0, 2.0),
    ("washing_machine", 1500.0, 1.0),
    ("dishwasher", 100.0, 20.0),
    ("tv", 70.0, 10.0),
    ("kitchen_lights", 70.0, 20.0),
    ("htpc", 70.0, 20.0),
    ("kettle", 2000.0, 10.0),
    ("toaster", 1000.0, 10.0),
    ("fridge", 70.0, 10.0),
    ("microwave", 500.0, 10.0),
    ("lcd_office", 30.0, 4.0),
    ("breadmaker", 400.0, 20.0),
    ("amp_livingroom", 18.0, 10.0),
    ("hoover", 400.0, 10.0),
    ("coffee_machine", 1000.0, 10.0),
    ("hair_dryer", 100.0, 20.0),
    ("straightener", 300.0, 5.0),
    ("iron", 1000.0, 10.0),
    ("gas_oven", 35.0, 10.0),
    ("office_fan", 20.0, 2.0),
    ("led_printer", 800.0, 3.0),
    // Office dataset: a single 25 W level; the off level sits below it so the
    // hysteresis stays well defined.
    ("blond_default", 25.0, 20.0),
];

/// `"Washing Machine"` → `"washing_machine"`.
pub fn normalize_appliance_name(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| if c.is_whitespace() || c == '-' { '_' } else { c.to_ascii_lowercase() })
        .collect()
}

/// Built-in thresholds for `appliance`.
pub fn default_thresholds(appliance: &str) -> Result<EventThresholds> {
    ThresholdTable::builtin().get(appliance)
}

/// Threshold lookup table, optionally overridden from a text file.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    entries: BTreeMap<String, EventThresholds>,
}

impl ThresholdTable {
    pub fn builtin() -> Self {
        let entries = BUILTIN_THRESHOLDS
            .iter()
            .map(|&(name, on, off)| (name.to_owned(), EventThresholds { on, off }))
            .collect();
        Self { entries }
    }

    pub fn get(&self, appliance: &str) -> Result<EventThresholds> {
        self.entries
            .get(&normalize_appliance_name(appliance))
            .copied()
            .ok_or_else(|| Error::UnknownAppliance(appliance.to_owned()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Applies `name, on, off` lines on top of the current entries.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Format(format!("threshold line {}: `{line}`", lineno + 1));
            if fields.len() != 3 || fields[0].is_empty() {
                return Err(bad());
            }
            let on: f64 = fields[1].parse().map_err(|_| bad())?;
            let off: f64 = fields[2].parse().map_err(|_| bad())?;
            self.entries
                .insert(normalize_appliance_name(fields[0]), EventThresholds::new(on, off)?);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_context;

    fn series(power: &[f64]) -> PowerSeries {
        PowerSeries::uniform(0.0, 1.0, power.to_vec()).unwrap()
    }

    #[test]
    fn kettle_activation() {
        let th = default_thresholds("kettle").unwrap();
        assert_eq!((th.on(), th.off()), (2000.0, 10.0));
        let ev = detect_events(&series(&[0.0, 0.0, 2500.0, 2500.0, 5.0]), &th);
        assert_eq!(
            ev,
            vec![
                DetectedEvent { kind: EventKind::On, timestamp: 2.0 },
                DetectedEvent { kind: EventKind::Off, timestamp: 4.0 },
            ]
        );
    }

    #[test]
    fn silence_has_no_events() {
        let th = default_thresholds("fridge").unwrap();
        assert!(detect_events(&series(&[0.0; 10]), &th).is_empty());
    }

    #[test]
    fn dip_between_thresholds_does_not_retrigger() {
        let th = EventThresholds::new(25.0, 10.0).unwrap();
        let ev = detect_events(&series(&[0.0, 30.0, 20.0, 30.0, 5.0]), &th);
        let got: Vec<_> = ev.iter().map(|e| (e.kind, e.timestamp)).collect();
        assert_eq!(got, vec![(EventKind::On, 1.0), (EventKind::Off, 4.0)]);
    }

    #[test]
    fn table_values() {
        let fridge = default_thresholds("fridge").unwrap();
        assert_eq!((fridge.on(), fridge.off()), (70.0, 10.0));
        let blond = default_thresholds("blond_default").unwrap();
        assert_eq!((blond.on(), blond.off()), (25.0, 20.0));
        let wm = default_thresholds("Washing Machine").unwrap();
        assert_eq!((wm.on(), wm.off()), (1500.0, 1.0));
        assert!(matches!(default_thresholds("toothbrush"), Err(Error::UnknownAppliance(_))));
        // 23 residential appliances plus the office default.
        assert_eq!(ThresholdTable::builtin().len(), 24);
    }

    #[test]
    fn thresholds_must_form_a_hysteresis() {
        assert!(EventThresholds::new(25.0, 25.0).is_err());
        assert!(EventThresholds::new(25.0, -1.0).is_err());
        assert!(EventThresholds::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn overrides_replace_builtins() {
        let mut table = ThresholdTable::builtin();
        table
            .apply_overrides("# custom\nkettle, 1500, 50\n\nnew thing, 5, 1\n")
            .unwrap();
        assert_eq!(table.get("kettle").unwrap(), EventThresholds::new(1500.0, 50.0).unwrap());
        assert_eq!(table.get("new_thing").unwrap().on(), 5.0);
        assert!(table.apply_overrides("kettle, 10").is_err());
        assert!(table.apply_overrides("kettle, 10, 20").is_err());
    }

    #[test]
    fn extraction_offsets() {
        let ctx = make_context(16_000, 50, 0.5).unwrap();
        let n = 16_000 * 2;
        let current: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let voltage: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();

        let seg = extract_segment(&current, &voltage, &ctx, 100.0, 100.0).unwrap();
        assert_eq!(seg.current()[0], 0.0);
        assert_eq!(seg.current()[7999], 7999.0);
        assert!(seg.label().is_none());

        let seg = extract_segment(&current, &voltage, &ctx, 101.0, 100.0).unwrap();
        assert_eq!(seg.current()[0], 16_000.0);
        assert_eq!(seg.current()[7999], 23_999.0);
        assert_eq!(seg.voltage()[0], -16_000.0);

        let again = extract_segment(&current, &voltage, &ctx, 101.0, 100.0).unwrap();
        assert_eq!(seg, again);

        assert!(matches!(
            extract_segment(&current, &voltage, &ctx, 101.7, 100.0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            extract_segment(&current, &voltage, &ctx, 99.0, 100.0),
            Err(Error::OutOfRange { .. })
        ));
    }
}
