use serde::{Deserialize, Serialize};

use crate::domain::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    /// Share of the training part held out for validation; `None` disables it.
    pub validation_fraction: Option<f64>,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            validation_fraction: Some(0.2),
            stratified: true,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.test_fraction) || self.validation_fraction.is_some_and(|f| !ok(f)) {
            return Err(Error::InvalidConfig("split fractions must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Disjoint, exhaustive, ascending dataset indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Training and validation indices together.
    pub fn train_and_validation(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        all.sort_unstable();
        all
    }
}

/// `round(n · fraction)` kept inside `[1, n − 1]`.
fn held_out(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

fn split_group(mut idx: Vec<usize>, spec: &SplitSpec, rng: &mut Rng, out: &mut Split) {
    rng.shuffle(&mut idx);
    let n_test = held_out(idx.len(), spec.test_fraction);
    out.test.extend_from_slice(&idx[..n_test]);
    let rest = &idx[n_test..];
    match spec.validation_fraction {
        Some(f) => {
            let n_val = held_out(rest.len(), f);
            out.validation.extend_from_slice(&rest[..n_val]);
            out.train.extend_from_slice(&rest[n_val..]);
        }
        None => out.train.extend_from_slice(rest),
    }
}

/// Shuffled split, per class when stratified.
///
/// Every class needs two samples, three when validation is requested.
pub fn stratified_split(dataset: &LabeledDataset, spec: &SplitSpec, rng: &mut Rng) -> Result<Split> {
    spec.validate()?;
    let required = if spec.validation_fraction.is_some() { 3 } else { 2 };
    let mut out = Split { train: Vec::new(), validation: Vec::new(), test: Vec::new() };
    if spec.stratified {
        for (c, name) in dataset.class_names().iter().enumerate() {
            let idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels()[i] == c).collect();
            if idx.len() < required {
                return Err(Error::ClassTooSmall { class: name.clone(), count: idx.len(), required });
            }
            split_group(idx, spec, rng, &mut out);
        }
    } else {
        if dataset.len() < required {
            return Err(Error::ClassTooSmall { class: "<all>".into(), count: dataset.len(), required });
        }
        split_group((0..dataset.len()).collect(), spec, rng, &mut out);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
