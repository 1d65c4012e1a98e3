use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{confusion, macro_metrics, ConfusionMatrix};
use super::split::{stratified_split, Split, SplitSpec};
use crate::classify::{self, ClassifierKind, ClassifierParams, TrainedClassifier};
use crate::domain::{LabeledDataset, SamplingContext};
use crate::error::{Error, Result};
use crate::features::{extract_matrix, Extractor, FeatureConfig, FeatureMatrix, RandomSubsampler};
use crate::nn::{self, Architecture, NetConfig, Network, Samples};
use crate::rng::Rng;
use crate::transform::{apply, fit_norm, fit_pca, NormKind, NormalizerState, PcaState};

/// The seven classification models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Handcrafted,
    Ae,
    Cae,
    Cnn,
    RandomSubsample,
    Rms25,
    Pca,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Handcrafted,
        ModelKind::Ae,
        ModelKind::Cae,
        ModelKind::Cnn,
        ModelKind::RandomSubsample,
        ModelKind::Rms25,
        ModelKind::Pca,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Handcrafted => "handcrafted",
            ModelKind::Ae => "ae",
            ModelKind::Cae => "cae",
            ModelKind::Cnn => "cnn",
            ModelKind::RandomSubsample => "random_subsample",
            ModelKind::Rms25 => "rms25",
            ModelKind::Pca => "pca",
        }
    }

    /// Whether the model classifies by itself instead of feeding classifiers.
    pub fn is_end_to_end(&self) -> bool {
        *self == ModelKind::Cnn
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let key = match key.as_str() {
            "hand_crafted" => "handcrafted",
            "rms_25" => "rms25",
            "subsample" | "random" => "random_subsample",
            other => other,
        }
        .to_owned();
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model '{s}'")))
    }
}

/// One model with its classifiers and settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub model: ModelKind,
    /// Ignored by end-to-end models.
    pub classifiers: Vec<ClassifierKind>,
    /// Output dimensions for random sub-sampling and PCA.
    pub dims: usize,
    pub features: FeatureConfig,
    /// Network settings for AE, CAE and CNN; `None` picks a preset that
    /// matches the sampling context.
    pub net: Option<NetConfig>,
    /// Normalization of the classifier inputs.
    pub classifier_norm: NormKind,
    pub variance_norm_uses_std: bool,
    /// Fit normalizers on each set separately instead of on training data.
    pub per_set_norm: bool,
    pub classifier_params: ClassifierParams,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::new(ModelKind::Handcrafted)
    }
}

impl ModelSpec {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            classifiers: ClassifierKind::ALL.to_vec(),
            dims: 212,
            features: FeatureConfig::default(),
            net: None,
            classifier_norm: NormKind::MaxAbs,
            variance_norm_uses_std: false,
            per_set_norm: false,
            classifier_params: ClassifierParams::default(),
        }
    }

    /// All seven models with all four classifiers.
    pub fn all() -> Vec<Self> {
        ModelKind::ALL.into_iter().map(Self::new).collect()
    }

    pub fn with_classifiers(mut self, classifiers: &[ClassifierKind]) -> Self {
        self.classifiers = classifiers.to_vec();
        self
    }

    /// Reports this spec produces.
    pub fn report_count(&self) -> usize {
        if self.model.is_end_to_end() {
            1
        } else {
            self.classifiers.len()
        }
    }

    /// The explicit network config, or the preset for this context.
    pub fn net_config(&self, context: &SamplingContext) -> Result<NetConfig> {
        if let Some(cfg) = &self.net {
            return Ok(cfg.clone());
        }
        let suffix = match self.model {
            ModelKind::Ae => "ae",
            ModelKind::Cae => "cae",
            ModelKind::Cnn => "cnn",
            other => return Err(Error::InvalidConfig(format!("model '{other}' has no network"))),
        };
        let prefix = match (context.fs(), context.f0()) {
            (16000, 50) => "ukdale",
            (50000, 50) => "blond",
            _ => "desk",
        };
        NetConfig::preset(&format!("{prefix}-{suffix}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub test_count: usize,
    /// Samples of this class in the whole dataset.
    pub sample_count: usize,
    /// Mean active power over the class's segments (W).
    pub mean_active_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    /// `None` for end-to-end models.
    pub classifier: Option<ClassifierKind>,
    pub feature_dims: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Training epochs for network models.
    pub epochs_run: Option<usize>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f_score: f64,
    pub per_class: Vec<ClassReport>,
    pub confusion: ConfusionMatrix,
    /// Wall-clock time; kept out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl EvalReport {
    /// `model+classifier`, or the model name for end-to-end models.
    pub fn label(&self) -> String {
        match self.classifier {
            Some(c) => format!("{}+{}", self.model, c.as_str()),
            None => self.model.to_string(),
        }
    }

    pub fn classifier_name(&self) -> &'static str {
        self.classifier.map_or("end_to_end", |c| c.as_str())
    }
}

/// Feature computation learned from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum FeatureStage {
    Handcrafted { config: FeatureConfig },
    Rms25,
    RandomSubsample { sampler: RandomSubsampler },
    Pca { pca: PcaState },
    /// AE/CAE codes or CNN outputs from normalized raw waveforms.
    Network {
        input_norm: NormalizerState,
        network: Network,
        with_voltage: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierStage {
    pub norm: NormalizerState,
    pub classifier: TrainedClassifier,
}

/// A fitted model that can label new segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub model: ModelKind,
    pub context: SamplingContext,
    pub class_names: Vec<String>,
    pub features: FeatureStage,
    pub classifier: Option<ClassifierStage>,
}

impl TrainedPipeline {
    /// Kind tag used in model files.
    pub const FILE_KIND: &'static str = "pipeline";

    pub fn predict(&self, dataset: &LabeledDataset) -> Result<Vec<usize>> {
        let features = match &self.features {
            FeatureStage::Handcrafted { config } => extract_matrix(dataset, &Extractor::Handcrafted(config.clone()))?,
            FeatureStage::Rms25 => extract_matrix(dataset, &Extractor::Rms25)?,
            FeatureStage::RandomSubsample { sampler } => {
                extract_matrix(dataset, &Extractor::RandomSubsample(sampler.clone()))?
            }
            FeatureStage::Pca { pca } => apply(pca, &raw(dataset, false)?)?,
            FeatureStage::Network { input_norm, network, with_voltage } => {
                let x = apply(input_norm, &raw(dataset, *with_voltage)?)?;
                if network.code_layer().is_some() {
                    nn::encode(network, &x)?
                } else {
                    return nn::predict_cnn(network, &x);
                }
            }
        };
        let stage = self
            .classifier
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("feature pipeline without classifier".into()))?;
        stage.classifier.predict(&apply(&stage.norm, &features)?)
    }
}

/// Reports in input order, with fitted pipelines when requested.
#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub split: Split,
    pub reports: Vec<EvalReport>,
    /// Parallel to `reports` when models were kept.
    pub pipelines: Vec<TrainedPipeline>,
}

fn raw(dataset: &LabeledDataset, with_voltage: bool) -> Result<FeatureMatrix> {
    extract_matrix(dataset, &Extractor::RawWaveform { with_voltage })
}

/// Fits a normalizer on `train` and applies it to every matrix; in
/// per-set mode each matrix is normalized with its own statistics.
fn normalize(
    kind: NormKind,
    use_std: bool,
    per_set: bool,
    train: &FeatureMatrix,
    others: &[&FeatureMatrix],
) -> Result<(NormalizerState, FeatureMatrix, Vec<FeatureMatrix>)> {
    let state = fit_norm(kind, train, use_std)?;
    let train_out = apply(&state, train)?;
    let others = others
        .iter()
        .map(|m| {
            if per_set && !m.is_empty() {
                apply(&fit_norm(kind, m, use_std)?, m)
            } else {
                apply(&state, m)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((state, train_out, others))
}

struct Shared<'a> {
    dataset: &'a LabeledDataset,
    split: &'a Split,
    train_all: Vec<usize>,
    sample_counts: Vec<usize>,
    mean_power: Vec<f64>,
    keep_models: bool,
}

impl Shared<'_> {
    fn report(
        &self,
        model: ModelKind,
        classifier: Option<ClassifierKind>,
        feature_dims: usize,
        predicted: &[usize],
        epochs_run: Option<usize>,
        runtime_seconds: f64,
    ) -> Result<EvalReport> {
        let truth: Vec<usize> = self.split.test.iter().map(|&i| self.dataset.labels()[i]).collect();
        let n = self.dataset.n_classes();
        let metrics = macro_metrics(&truth, predicted, n)?;
        let confusion = confusion(&truth, predicted, n)?;
        let per_class = metrics
            .per_class
            .iter()
            .enumerate()
            .map(|(c, s)| ClassReport {
                name: self.dataset.class_names()[c].clone(),
                precision: s.precision,
                recall: s.recall,
                f_score: s.f_score,
                test_count: confusion.counts[c].iter().sum(),
                sample_count: self.sample_counts[c],
                mean_active_power: self.mean_power[c],
            })
            .collect();
        let (n_train, n_validation) = if model.is_end_to_end() {
            (self.split.train.len(), self.split.validation.len())
        } else {
            (self.train_all.len(), 0)
        };
        Ok(EvalReport {
            model,
            classifier,
            feature_dims,
            n_train,
            n_validation,
            n_test: self.split.test.len(),
            epochs_run,
            macro_precision: metrics.precision,
            macro_recall: metrics.recall,
            macro_f_score: metrics.f_score,
            per_class,
            confusion,
            runtime_seconds,
        })
    }
}

type PipelineResult = Vec<(EvalReport, Option<TrainedPipeline>)>;

/// Normalized raw inputs for network training and the fitted normalizer.
struct NetInputs {
    norm: NormalizerState,
    train: FeatureMatrix,
    validation: FeatureMatrix,
    rest: Vec<FeatureMatrix>,
}

fn net_inputs(spec: &ModelSpec, cfg: &NetConfig, shared: &Shared, rest: &[&[usize]]) -> Result<NetInputs> {
    let with_voltage = cfg.two_channel;
    let all = raw(shared.dataset, with_voltage)?;
    let train = all.select_rows(&shared.split.train);
    let validation = all.select_rows(&shared.split.validation);
    let rest_m: Vec<FeatureMatrix> = rest.iter().map(|idx| all.select_rows(idx)).collect();
    let mut others: Vec<&FeatureMatrix> = vec![&validation];
    others.extend(rest_m.iter());
    let (norm, train, mut out) = normalize(
        cfg.input_norm,
        spec.variance_norm_uses_std,
        spec.per_set_norm,
        &train,
        &others,
    )?;
    let validation = out.remove(0);
    Ok(NetInputs { norm, train, validation, rest: out })
}

fn train_net(
    cfg: &NetConfig,
    inputs: &NetInputs,
    context: &SamplingContext,
    n_classes: usize,
    rng: &Rng,
) -> Result<(Network, nn::History)> {
    let blueprint = nn::blueprint_for(cfg, context, n_classes)?;
    let rng = rng.derive(&format!("network/{}", cfg.seed));
    let mut init = rng.derive("network/init");
    let net = Network::new(&blueprint, &mut init)?;
    let (train, val) = if cfg.architecture == Architecture::Cnn {
        (Samples::classes(&inputs.train), Samples::classes(&inputs.validation))
    } else {
        (Samples::reconstruction(&inputs.train), Samples::reconstruction(&inputs.validation))
    };
    let mut train_rng = rng.derive("network/train");
    nn::train_network(net, train, val, cfg, &mut train_rng)
}

fn run_pipeline(spec: &ModelSpec, shared: &Shared, rng: &Rng) -> Result<PipelineResult> {
    let start = Instant::now();
    let dataset = shared.dataset;
    let context = *dataset
        .context()
        .ok_or_else(|| Error::InvalidDataset("empty dataset".into()))?;
    let split = shared.split;
    let n_classes = dataset.n_classes();
    let pipeline = |features, classifier| TrainedPipeline {
        model: spec.model,
        context,
        class_names: dataset.class_names().to_vec(),
        features,
        classifier,
    };

    if spec.model == ModelKind::Cnn {
        let cfg = spec.net_config(&context)?;
        if cfg.architecture != Architecture::Cnn {
            return Err(Error::InvalidConfig("cnn model needs a cnn network config".into()));
        }
        let inputs = net_inputs(spec, &cfg, shared, &[&split.test])?;
        let (net, history) = train_net(&cfg, &inputs, &context, n_classes, rng)?;
        let predicted = nn::predict_cnn(&net, &inputs.rest[0])?;
        let report = shared.report(
            spec.model,
            None,
            net.input_width(),
            &predicted,
            Some(history.epochs_run()),
            start.elapsed().as_secs_f64(),
        )?;
        let kept = shared.keep_models.then(|| {
            pipeline(
                FeatureStage::Network { input_norm: inputs.norm, network: net, with_voltage: cfg.two_channel },
                None,
            )
        });
        return Ok(vec![(report, kept)]);
    }

    // Features for the classifier training part (train + validation) and test.
    let (train_x, test_x, stage, epochs_run) = match spec.model {
        ModelKind::Handcrafted | ModelKind::Rms25 | ModelKind::RandomSubsample => {
            let (extractor, stage) = match spec.model {
                ModelKind::Handcrafted => (
                    Extractor::Handcrafted(spec.features.clone()),
                    FeatureStage::Handcrafted { config: spec.features.clone() },
                ),
                ModelKind::Rms25 => (Extractor::Rms25, FeatureStage::Rms25),
                _ => {
                    let len = context.samples_per_segment();
                    let mut r = rng.derive("subsample");
                    let sampler = RandomSubsampler::new(len, spec.dims.min(len), &mut r)?;
                    (Extractor::RandomSubsample(sampler.clone()), FeatureStage::RandomSubsample { sampler })
                }
            };
            let all = extract_matrix(dataset, &extractor)?;
            (all.select_rows(&shared.train_all), all.select_rows(&split.test), stage, None)
        }
        ModelKind::Pca => {
            let all = raw(dataset, false)?;
            let train = all.select_rows(&shared.train_all);
            let test = all.select_rows(&split.test);
            let k = spec.dims.min(train.n_rows().saturating_sub(1)).min(train.n_cols());
            let pca = fit_pca(&train, k)?;
            let train_x = apply(&pca, &train)?;
            let test_x = apply(&pca, &test)?;
            (train_x, test_x, FeatureStage::Pca { pca }, None)
        }
        ModelKind::Ae | ModelKind::Cae => {
            let cfg = spec.net_config(&context)?;
            let want = if spec.model == ModelKind::Ae { Architecture::Ae } else { Architecture::Cae };
            if cfg.architecture != want {
                return Err(Error::InvalidConfig(format!("{} model needs a matching network config", spec.model)));
            }
            let inputs = net_inputs(spec, &cfg, shared, &[&shared.train_all, &split.test])?;
            let (net, history) = train_net(&cfg, &inputs, &context, n_classes, rng)?;
            let train_x = nn::encode(&net, &inputs.rest[0])?;
            let test_x = nn::encode(&net, &inputs.rest[1])?;
            let stage = FeatureStage::Network { input_norm: inputs.norm, network: net, with_voltage: cfg.two_channel };
            (train_x, test_x, stage, Some(history.epochs_run()))
        }
        ModelKind::Cnn => unreachable!("handled above"),
    };
    let feature_seconds = start.elapsed().as_secs_f64();

    let (norm, train_n, test_n) = normalize(
        spec.classifier_norm,
        spec.variance_norm_uses_std,
        spec.per_set_norm,
        &train_x,
        &[&test_x],
    )?;
    let test_n = &test_n[0];
    let mut out = Vec::with_capacity(spec.classifiers.len());
    for &kind in &spec.classifiers {
        let t = Instant::now();
        let mut crng = rng.derive(&format!("classifier/{}", kind.as_str()));
        let model = classify::train(kind, &train_n, &spec.classifier_params, &mut crng)?;
        let predicted = model.predict(test_n)?;
        let report = shared.report(
            spec.model,
            Some(kind),
            train_x.n_cols(),
            &predicted,
            epochs_run,
            feature_seconds + t.elapsed().as_secs_f64(),
        )?;
        let kept = shared.keep_models.then(|| {
            pipeline(stage.clone(), Some(ClassifierStage { norm: norm.clone(), classifier: model }))
        });
        out.push((report, kept));
    }
    Ok(out)
}

/// Trains and evaluates every model on one shared split.
pub fn run_benchmark(
    dataset: &LabeledDataset,
    models: &[ModelSpec],
    spec: &SplitSpec,
    rng: &Rng,
) -> Result<Vec<EvalReport>> {
    Ok(run_benchmark_with_models(dataset, models, spec, rng, false)?.reports)
}

/// [`run_benchmark`], optionally keeping each fitted pipeline.
///
/// The split is drawn from the split spec's seed; each model draws from a
/// stream of `rng` keyed by its name, so adding or removing models leaves
/// the others' results unchanged.
pub fn run_benchmark_with_models(
    dataset: &LabeledDataset,
    models: &[ModelSpec],
    spec: &SplitSpec,
    rng: &Rng,
    keep_models: bool,
) -> Result<BenchmarkOutput> {
    if models.is_empty() {
        return Err(Error::InvalidConfig("no models requested".into()));
    }
    if let Some(m) = models.iter().find(|m| !m.model.is_end_to_end() && m.classifiers.is_empty()) {
        return Err(Error::InvalidConfig(format!("model '{}' has no classifiers", m.model)));
    }
    let split = stratified_split(dataset, spec, &mut Rng::new(spec.seed).derive("split"))?;
    let n = dataset.n_classes();
    let mut power_sum = vec![0.0; n];
    for (seg, &l) in dataset.segments().iter().zip(dataset.labels()) {
        let p: f64 = seg.current().iter().zip(seg.voltage()).map(|(i, v)| i * v).sum::<f64>() / seg.len() as f64;
        power_sum[l] += p;
    }
    let sample_counts = dataset.class_counts();
    let mean_power = power_sum
        .iter()
        .zip(&sample_counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    let shared = Shared {
        dataset,
        split: &split,
        train_all: split.train_and_validation(),
        sample_counts,
        mean_power,
        keep_models,
    };
    let results: Vec<PipelineResult> = models
        .par_iter()
        .map(|m| {
            let r = rng.derive(&format!("model/{}", m.model));
            let out = run_pipeline(m, &shared, &r);
            if let Ok(reports) = &out {
                for (rep, _) in reports {
                    log::info!("{}: macro F {:.4}", rep.label(), rep.macro_f_score);
                }
            }
            out
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    let mut pipelines = Vec::new();
    for (report, kept) in results.into_iter().flatten() {
        reports.push(report);
        pipelines.extend(kept);
    }
    Ok(BenchmarkOutput { split, reports, pipelines })
}
