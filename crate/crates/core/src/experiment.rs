//! Config-driven experiments: train, unlearn, recover, evaluate, cost.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{cost_report, CostInputs, CostReport, Method, PhaseCost, Ratio};
use crate::data::{
    generate_synthetic, load_dataset, partition_exclusive_class, partition_iid, partition_lda,
    FederatedDataset,
};
use crate::engine::{train, ClientId, FedState, LocalHyper, Participation, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::metrics::{delta_report, summarize_deltas, DeltaSummary, EfficacyMetrics, EfficacyReport, Evaluator};
use crate::nn::ModelArch;
use crate::rng::{self, Purpose};
use crate::unlearn::{
    apply_strategy, recover, retrain_baseline, scope_views, PgaParams, RecoveryPlan, Scope, Strategy,
    StrategyParams, UnlearnRequest,
};

pub const DEFAULT_ETA_S: f64 = 1.0;
pub const DEFAULT_ETA_R: f64 = 1.0;
pub const DEFAULT_ETA_U_SPECIAL: f64 = 2.0;
pub const DEFAULT_ETA_U_REGULAR: f64 = 20.0;
/// Forget-loss stop levels at 100 classes, rescaled by `ln k` for other `k`.
pub const PGA_STOP_LOSS_IID_100: f64 = 9.0;
pub const PGA_STOP_LOSS_NON_IID_100: f64 = 6.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub clients: usize,
    pub rounds: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub partition: PartitionSpec,
    #[serde(default)]
    pub arch: ArchSpec,
    #[serde(default)]
    pub hyper: HyperSpec,
    pub unlearn: UnlearnSpec,
    #[serde(default)]
    pub recovery: RecoverySpec,
    #[serde(default)]
    pub cost_inputs: CostOverrides,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian class clusters, regenerated for every seed.
    Synthetic {
        num_classes: usize,
        feature_dim: usize,
        samples_per_class: usize,
        class_separation: f64,
    },
    /// A saved, already partitioned dataset shared by every seed.
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    #[default]
    Iid,
    Lda {
        alpha: f64,
        #[serde(default = "default_min_per_client")]
        min_per_client: usize,
    },
    ExclusiveClass { holder: ClientId, class: usize },
}

fn default_min_per_client() -> usize {
    2
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchSpec {
    #[default]
    Logistic,
    Mlp { hidden_dim: usize },
}

impl ArchSpec {
    pub fn resolve(self, feature_dim: usize, num_classes: usize) -> ModelArch {
        match self {
            ArchSpec::Logistic => ModelArch::Logistic {
                feature_dim,
                num_classes,
            },
            ArchSpec::Mlp { hidden_dim } => ModelArch::Mlp {
                feature_dim,
                hidden_dim,
                num_classes,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrScheduleOffset {
    /// Recovery continues the decay from the unlearning round.
    Continue,
    /// Recovery restarts the decay at exponent 0.
    Reset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperSpec {
    pub local_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub lr_decay: f64,
    pub eta_s: f64,
    pub participation: Participation,
    pub lr_schedule_offset: LrScheduleOffset,
}

impl Default for HyperSpec {
    fn default() -> Self {
        Self {
            local_epochs: 1,
            lr: 0.1,
            batch_size: 32,
            lr_decay: 0.998,
            eta_s: DEFAULT_ETA_S,
            participation: Participation::All,
            lr_schedule_offset: LrScheduleOffset::Continue,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    Client,
    Sample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnSpec {
    pub strategy: Strategy,
    pub targets: Vec<ClientId>,
    #[serde(default = "default_scope")]
    pub scope: ScopeKind,
    /// Share of each target's samples to forget under `scope = "sample"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forget_fraction: Option<f64>,
    #[serde(default)]
    pub eta_r: Option<f64>,
    #[serde(default)]
    pub eta_u: Option<f64>,
    #[serde(default)]
    pub not_negate_bias: bool,
    #[serde(default)]
    pub pga: PgaSpec,
}

fn default_scope() -> ScopeKind {
    ScopeKind::Client
}

/// PGA knobs. Unset `batch_size` and `lr` follow `hyper`; unset
/// `early_stop_loss` is derived from the class count and partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgaSpec {
    pub ascent_epochs: usize,
    pub clip_threshold: f64,
    pub ball_radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
}

impl Default for PgaSpec {
    fn default() -> Self {
        Self {
            ascent_epochs: 5,
            clip_threshold: 5.0,
            ball_radius: 1.0,
            early_stop_loss: None,
            batch_size: None,
            lr: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverySpec {
    pub max_rounds: u64,
}

impl Default for RecoverySpec {
    fn default() -> Self {
        Self { max_rounds: 50 }
    }
}

/// Overrides of cost inputs that are otherwise derived from the experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bytes_per_param: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classifier_params: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flops_per_sample: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_client: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remaining_clients: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retention_rounds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_epochs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degradation_rounds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub memory_rounds: Option<f64>,
    /// Recovery rounds per method for the `costs` table. Missing methods use 0.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub recovery_rounds: BTreeMap<Method, f64>,
}

/// Parses and validates TOML text, filling every default that does not
/// depend on the data.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| {
        let key = e.span().map_or_else(|| "<root>".to_string(), |s| format!("byte {}", s.start));
        Error::config(key, e.message().to_string())
    })?;
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::config(key, e.into_inner().message().to_string())
    })?;
    cfg.fill_defaults();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<root>", e.to_string()))
    }

    fn fill_defaults(&mut self) {
        let u = &mut self.unlearn;
        u.eta_r.get_or_insert(DEFAULT_ETA_R);
        u.eta_u.get_or_insert(match u.strategy {
            Strategy::PufRegular => DEFAULT_ETA_U_REGULAR,
            _ => DEFAULT_ETA_U_SPECIAL,
        });
        u.pga.batch_size.get_or_insert(self.hyper.batch_size);
        u.pga.lr.get_or_insert(self.hyper.lr);
        if u.pga.early_stop_loss.is_none() {
            if let DatasetSpec::Synthetic { num_classes, .. } = self.dataset {
                u.pga.early_stop_loss = default_early_stop(num_classes, &self.partition);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |k: &str, m: String| Err(Error::config(k, m));
        if self.seeds.is_empty() {
            return cfg("seeds", "at least one seed is required".into());
        }
        if self.clients == 0 {
            return cfg("clients", "must be >= 1".into());
        }
        if self.rounds == 0 {
            return cfg("rounds", "must be >= 1".into());
        }
        if let DatasetSpec::Synthetic {
            num_classes,
            feature_dim,
            samples_per_class,
            class_separation,
        } = self.dataset
        {
            if num_classes == 0 || feature_dim == 0 || samples_per_class == 0 {
                return cfg(
                    "dataset",
                    "num_classes, feature_dim and samples_per_class must be >= 1".into(),
                );
            }
            if !(class_separation >= 0.0 && class_separation.is_finite()) {
                return cfg("dataset.class_separation", "must be finite and >= 0".into());
            }
            if let PartitionSpec::ExclusiveClass { class, .. } = self.partition {
                if class >= num_classes {
                    return cfg(
                        "partition.class",
                        format!("class {class} does not exist ({num_classes} classes)"),
                    );
                }
            }
        }
        match self.partition {
            PartitionSpec::Iid => {}
            PartitionSpec::Lda { alpha, .. } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return cfg("partition.alpha", format!("must be finite and > 0, got {alpha}"));
                }
            }
            PartitionSpec::ExclusiveClass { holder, .. } => {
                if holder >= self.clients {
                    return cfg(
                        "partition.holder",
                        format!("client {holder} does not exist (clients = {})", self.clients),
                    );
                }
            }
        }
        if let ArchSpec::Mlp { hidden_dim: 0 } = self.arch {
            return cfg("arch.hidden_dim", "must be >= 1".into());
        }
        let h = &self.hyper;
        if h.local_epochs == 0 {
            return cfg("hyper.local_epochs", "must be >= 1".into());
        }
        if h.batch_size == 0 {
            return cfg("hyper.batch_size", "must be >= 1".into());
        }
        if !(h.lr >= 0.0 && h.lr.is_finite()) {
            return cfg("hyper.lr", "must be finite and >= 0".into());
        }
        if !(h.lr_decay > 0.0 && h.lr_decay.is_finite()) {
            return cfg("hyper.lr_decay", "must be finite and > 0".into());
        }
        if !(h.eta_s > 0.0 && h.eta_s.is_finite()) {
            return cfg("hyper.eta_s", "must be finite and > 0".into());
        }
        if let Participation::Sample { k: 0 } = h.participation {
            return cfg("hyper.participation.sample.k", "must be >= 1".into());
        }
        let u = &self.unlearn;
        if u.targets.is_empty() {
            return cfg("unlearn.targets", "at least one target is required".into());
        }
        for (i, &t) in u.targets.iter().enumerate() {
            if t >= self.clients {
                return cfg(
                    &format!("unlearn.targets[{i}]"),
                    format!("client {t} does not exist (clients = {})", self.clients),
                );
            }
        }
        if u.targets.iter().collect::<BTreeSet<_>>().len() != u.targets.len() {
            return cfg("unlearn.targets", "targets must be distinct".into());
        }
        match (u.scope, u.forget_fraction) {
            (ScopeKind::Client, Some(_)) => {
                return cfg("unlearn.forget_fraction", "only valid with scope = \"sample\"".into())
            }
            (ScopeKind::Sample, None) => {
                return cfg("unlearn.forget_fraction", "required with scope = \"sample\"".into())
            }
            (ScopeKind::Sample, Some(f)) if !(f > 0.0 && f < 1.0) => {
                return cfg("unlearn.forget_fraction", format!("must be in (0, 1), got {f}"))
            }
            _ => {}
        }
        if u.scope == ScopeKind::Client && u.targets.len() >= self.clients {
            return cfg(
                "unlearn.targets",
                "client-scope unlearning must leave at least one client".into(),
            );
        }
        for (key, v) in [("unlearn.eta_r", u.eta_r), ("unlearn.eta_u", u.eta_u)] {
            if v.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                return cfg(key, "must be finite and >= 0".into());
            }
        }
        let p = &u.pga;
        if p.ascent_epochs == 0 {
            return cfg("unlearn.pga.ascent_epochs", "must be >= 1".into());
        }
        if !(p.clip_threshold > 0.0) {
            return cfg("unlearn.pga.clip_threshold", "must be > 0".into());
        }
        if !(p.ball_radius >= 0.0 && p.ball_radius.is_finite()) {
            return cfg("unlearn.pga.ball_radius", "must be finite and >= 0".into());
        }
        if p.early_stop_loss.is_some_and(|t| !(t > 0.0)) {
            return cfg("unlearn.pga.early_stop_loss", "must be > 0".into());
        }
        if p.batch_size == Some(0) {
            return cfg("unlearn.pga.batch_size", "must be >= 1".into());
        }
        if p.lr.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return cfg("unlearn.pga.lr", "must be finite and > 0".into());
        }
        if self.recovery.max_rounds == 0 {
            return cfg("recovery.max_rounds", "must be >= 1".into());
        }
        let c = &self.cost_inputs;
        for (key, v) in [
            ("params", c.params),
            ("bytes_per_param", c.bytes_per_param),
            ("classifier_params", c.classifier_params),
            ("flops_per_sample", c.flops_per_sample),
            ("samples_per_client", c.samples_per_client),
            ("remaining_clients", c.remaining_clients),
            ("retention_rounds", c.retention_rounds),
            ("calibration_epochs", c.calibration_epochs),
            ("degradation_rounds", c.degradation_rounds),
            ("memory_rounds", c.memory_rounds),
        ] {
            if v.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                return cfg(&format!("cost_inputs.{key}"), "must be finite and >= 0".into());
            }
        }
        for (m, v) in &c.recovery_rounds {
            if !(*v >= 0.0 && v.is_finite()) {
                return cfg(
                    &format!("cost_inputs.recovery_rounds.{}", m.name()),
                    "must be finite and >= 0".into(),
                );
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rounds: self.rounds,
            local: LocalHyper {
                epochs: self.hyper.local_epochs,
                lr: self.hyper.lr,
                batch_size: self.hyper.batch_size,
            },
            lr_decay: self.hyper.lr_decay,
            eta_s: self.hyper.eta_s,
            participation: self.hyper.participation,
        }
    }

    /// The dataset of one seed.
    pub fn build_dataset(&self, seed: u64) -> Result<FederatedDataset> {
        match &self.dataset {
            DatasetSpec::Synthetic {
                num_classes,
                feature_dim,
                samples_per_class,
                class_separation,
            } => {
                let (train, test) =
                    generate_synthetic(*num_classes, *feature_dim, *samples_per_class, *class_separation, seed)?;
                let fd = match self.partition {
                    PartitionSpec::Iid => partition_iid(&train, &test, self.clients, seed)?,
                    PartitionSpec::Lda {
                        alpha,
                        min_per_client,
                    } => partition_lda(&train, &test, self.clients, alpha, min_per_client, seed)?,
                    PartitionSpec::ExclusiveClass { holder, class } => {
                        partition_exclusive_class(&train, &test, self.clients, holder, class, seed)?
                    }
                };
                // the test split must carry every class so that
                // FederatedDataset::num_classes matches the generator
                if fd.num_classes() != *num_classes {
                    return FederatedDataset::new(fd.clients().to_vec(), fd.test().clone(), *num_classes);
                }
                Ok(fd)
            }
            DatasetSpec::File { path } => {
                let fd = load_dataset(path)?;
                if fd.num_clients() != self.clients {
                    return Err(Error::config(
                        "clients",
                        format!("{} holds {} clients, config says {}", path.display(), fd.num_clients(), self.clients),
                    ));
                }
                Ok(fd)
            }
        }
    }

    pub fn strategy_params(&self, num_classes: usize) -> StrategyParams {
        let u = &self.unlearn;
        StrategyParams {
            eta_r: u.eta_r.unwrap_or(DEFAULT_ETA_R),
            eta_u: u.eta_u.unwrap_or(DEFAULT_ETA_U_SPECIAL),
            not_negate_bias: u.not_negate_bias,
            pga: PgaParams {
                ascent_epochs: u.pga.ascent_epochs,
                clip_threshold: u.pga.clip_threshold,
                ball_radius: u.pga.ball_radius,
                early_stop_loss: u
                    .pga
                    .early_stop_loss
                    .or_else(|| default_early_stop(num_classes, &self.partition)),
                batch_size: u.pga.batch_size.unwrap_or(self.hyper.batch_size),
                lr: u.pga.lr.unwrap_or(self.hyper.lr),
            },
        }
    }

    fn scope(&self, seed: u64) -> Scope {
        match (self.unlearn.scope, self.unlearn.forget_fraction) {
            (ScopeKind::Sample, Some(fraction)) => Scope::Sample {
                fraction,
                seed: rng::derive_seed(seed, Purpose::ForgetSplit, &[]),
            },
            _ => Scope::Client,
        }
    }

    /// Cost inputs for `arch` and `dataset`, with overrides applied.
    pub fn cost_inputs(&self, arch: &ModelArch, num_samples: usize, pga: &PgaParams) -> CostInputs {
        let o = &self.cost_inputs;
        let c = self.clients as f64;
        let c_u = self.unlearn.targets.len() as f64;
        let c_r = match self.unlearn.scope {
            ScopeKind::Client => c - c_u,
            ScopeKind::Sample => c,
        };
        let head = match *arch {
            ModelArch::Logistic {
                feature_dim,
                num_classes,
            } => (feature_dim + 1) * num_classes,
            ModelArch::Mlp {
                hidden_dim,
                num_classes,
                ..
            } => (hidden_dim + 1) * num_classes,
        };
        CostInputs {
            params: o.params.unwrap_or(arch.num_params() as f64),
            bytes_per_param: o.bytes_per_param.unwrap_or(4.0),
            classifier_params: o.classifier_params.unwrap_or(head as f64),
            clients: c,
            unlearn_clients: c_u,
            remaining_clients: o.remaining_clients.unwrap_or(c_r),
            // forward 2 MACs per multiply-add, backward twice the forward
            flops_per_sample: o.flops_per_sample.unwrap_or(6.0 * arch.forward_macs() as f64),
            samples_per_client: o.samples_per_client.unwrap_or(num_samples as f64 / c),
            local_epochs: self.hyper.local_epochs as f64,
            rounds: self.rounds as f64,
            retention_rounds: o.retention_rounds.unwrap_or(self.rounds as f64),
            calibration_epochs: o.calibration_epochs.unwrap_or(0.5),
            ascent_epochs: pga.ascent_epochs as f64,
            degradation_rounds: o.degradation_rounds.unwrap_or(6.0),
            memory_rounds: o.memory_rounds.unwrap_or(10.0),
            recovery_rounds: 0.0,
        }
    }

    /// Cost table for every method without training. Dimensions that depend
    /// on data come from the dataset spec or the overrides.
    pub fn cost_table(&self) -> Result<CostReport> {
        let (feature_dim, num_classes, num_samples) = match &self.dataset {
            DatasetSpec::Synthetic {
                num_classes,
                feature_dim,
                samples_per_class,
                ..
            } => {
                let n_train = if *samples_per_class == 1 {
                    1
                } else {
                    ((*samples_per_class as f64 * 0.8).round() as usize).clamp(1, samples_per_class - 1)
                };
                (*feature_dim, *num_classes, n_train * num_classes)
            }
            DatasetSpec::File { .. } => {
                let fd = self.build_dataset(0)?;
                (fd.feature_dim(), fd.num_classes(), fd.num_samples())
            }
        };
        let arch = self.arch.resolve(feature_dim, num_classes);
        let params = self.strategy_params(num_classes);
        let inputs = self.cost_inputs(&arch, num_samples, &params.pga);
        let rows: Vec<(Method, f64)> = Method::ALL
            .iter()
            .map(|&m| (m, self.cost_inputs.recovery_rounds.get(&m).copied().unwrap_or(0.0)))
            .collect();
        cost_report(&inputs, &rows)
    }
}

fn default_early_stop(num_classes: usize, partition: &PartitionSpec) -> Option<f64> {
    let at_100 = match partition {
        PartitionSpec::Iid => PGA_STOP_LOSS_IID_100,
        _ => PGA_STOP_LOSS_NON_IID_100,
    };
    (num_classes >= 2).then(|| at_100 * (num_classes as f64).ln() / 100f64.ln())
}

pub fn strategy_method(strategy: Strategy) -> Method {
    match strategy {
        Strategy::PufRegular => Method::PufRegular,
        Strategy::PufSpecial => Method::PufSpecial,
        Strategy::Not => Method::Not,
        Strategy::Pga => Method::Pga,
        Strategy::Natural => Method::Natural,
        Strategy::Retrain => Method::Retrain,
    }
}

/// Values the run used that are not spelled out in the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub arch: ModelArch,
    pub eta_r: f64,
    pub eta_u: f64,
    pub not_negate_bias: bool,
    pub pga: PgaParams,
    /// Round index of the unlearning step.
    pub unlearn_round: u64,
    pub recovery_first_round: u64,
    pub recovery_lr_offset: u64,
    /// Equal to the retrained model's test accuracy.
    pub stop_target_acc: f64,
    /// Scope seed actually used for the forget split, if any.
    pub forget_split_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub resolved: ResolvedParams,
    pub original: EfficacyMetrics,
    pub retrained: EfficacyMetrics,
    /// Final model after recovery against the retrained model.
    pub efficacy: EfficacyReport,
    pub recovery_rounds: u64,
    pub recovery_capped: bool,
    /// Entry 0 is the unlearned model before any recovery round.
    pub recovery_curve: Vec<EfficacyMetrics>,
    pub unlearn_participants: Vec<ClientId>,
    pub original_history: TrainHistory,
    pub retrain_history: TrainHistory,
    pub recovery_history: TrainHistory,
    pub costs: CostReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SeedOutcome {
    Ok(Box<SeedReport>),
    Failed { seed: u64, error: String },
}

impl SeedOutcome {
    pub fn seed(&self) -> u64 {
        match self {
            SeedOutcome::Ok(r) => r.seed,
            SeedOutcome::Failed { seed, .. } => *seed,
        }
    }

    pub fn report(&self) -> Option<&SeedReport> {
        match self {
            SeedOutcome::Ok(r) => Some(r),
            SeedOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub code_version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedOutcome>,
    /// Mean and std of the deltas over successful seeds.
    pub summary: Option<DeltaSummary>,
    /// Retrain and the run's strategy at the mean measured recovery length.
    pub costs: Option<CostReport>,
}

impl ExperimentReport {
    pub fn successful(&self) -> impl Iterator<Item = &SeedReport> {
        self.seeds.iter().filter_map(SeedOutcome::report)
    }
}

/// Runs every seed. Seeds run in parallel on the current rayon pool; results
/// do not depend on the pool size.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let seeds: Vec<SeedOutcome> = config
        .seeds
        .par_iter()
        .map(|&seed| match run_seed(config, seed) {
            Ok(r) => SeedOutcome::Ok(Box::new(r)),
            Err(e) => SeedOutcome::Failed {
                seed,
                error: e.to_string(),
            },
        })
        .collect();
    let ok: Vec<&SeedReport> = seeds.iter().filter_map(SeedOutcome::report).collect();
    let summary = summarize_deltas(&ok.iter().map(|r| r.efficacy).collect::<Vec<_>>());
    let costs = match ok.first() {
        Some(first) => {
            let mean_rec = ok.iter().map(|r| r.recovery_rounds as f64).sum::<f64>() / ok.len() as f64;
            let method = strategy_method(config.unlearn.strategy);
            let mut rows = vec![(Method::Retrain, 0.0)];
            if method != Method::Retrain {
                rows.push((method, mean_rec));
            }
            Some(cost_report(&first.costs.inputs, &rows)?)
        }
        None => None,
    };
    Ok(ExperimentReport {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds,
        summary,
        costs,
    })
}

/// [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(config))
}

/// Train, retrain, unlearn, recover and score one seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedReport> {
    let dataset = config.build_dataset(seed)?;
    let arch = config.arch.resolve(dataset.feature_dim(), dataset.num_classes());
    let cfg = config.train_config();
    let scope = config.scope(seed);
    let request = UnlearnRequest {
        targets: config.unlearn.targets.iter().copied().collect(),
        scope,
        strategy: config.unlearn.strategy,
    };
    let views = scope_views(&request, &dataset)?;
    let params = config.strategy_params(dataset.num_classes());

    let original = train(&dataset, &arch, &cfg, seed)?;
    let retrained = retrain_baseline(&views, &arch, &cfg, seed)?;

    let all: Vec<ClientId> = (0..dataset.num_clients()).collect();
    let full_pool = dataset.pooled(&all)?;
    let evaluator = Evaluator {
        test: dataset.test(),
        forget: &views.forget,
        retain: &views.retain,
        seed,
    };
    let original_metrics = evaluator.evaluate(&original.model, &full_pool)?;
    let retrained_metrics = evaluator.evaluate(&retrained.model, &views.retain)?;

    let unlearn_round = config.rounds;
    let outcome = apply_strategy(
        config.unlearn.strategy,
        &original,
        &views,
        &retrained.model,
        &params,
        &cfg,
        unlearn_round,
        seed,
    )?;
    let first_round = unlearn_round + u64::from(outcome.used_round);
    let lr_offset = match config.hyper.lr_schedule_offset {
        LrScheduleOffset::Continue => first_round,
        LrScheduleOffset::Reset => 0,
    };
    let plan = RecoveryPlan {
        max_rounds: config.recovery.max_rounds,
        stop_target_acc: retrained_metrics.test_acc,
        first_round,
        lr_offset,
    };
    let rec = recover(
        FedState::new(outcome.model),
        &views.recovery,
        &views.recovery_clients,
        &cfg,
        &plan,
        |w| evaluator.evaluate(w, &views.retain),
        seed,
    )?;
    let last = *rec.curve.last().expect("recovery curve starts with round 0");
    let efficacy = delta_report(&last, &retrained_metrics);

    let method = strategy_method(config.unlearn.strategy);
    let inputs = config.cost_inputs(&arch, dataset.num_samples(), &params.pga);
    let mut rows = vec![(Method::Retrain, 0.0)];
    if method != Method::Retrain {
        rows.push((method, rec.rounds as f64));
    }
    let costs = cost_report(&inputs, &rows)?;

    Ok(SeedReport {
        seed,
        resolved: ResolvedParams {
            arch,
            eta_r: params.eta_r,
            eta_u: params.eta_u,
            not_negate_bias: params.not_negate_bias,
            pga: params.pga,
            unlearn_round,
            recovery_first_round: first_round,
            recovery_lr_offset: lr_offset,
            stop_target_acc: plan.stop_target_acc,
            forget_split_seed: match scope {
                Scope::Sample { seed, .. } => Some(seed),
                Scope::Client => None,
            },
        },
        original: original_metrics,
        retrained: retrained_metrics,
        efficacy,
        recovery_rounds: rec.rounds,
        recovery_capped: rec.capped,
        recovery_curve: rec.curve,
        unlearn_participants: outcome.participants,
        original_history: original.history,
        retrain_history: retrained.history,
        recovery_history: rec.state.history,
        costs,
    })
}

pub const ROUNDS_HEADER: &str = "seed,phase,round,test_acc,forget_acc,mia_song,mia_yeom";
pub const COSTS_HEADER: &str = "method,phase,comm_bytes,comp_flops,storage_bytes,ratio_vs_retrain";

pub fn summary_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Per-seed metric rows: the original and retrained models at round R, then
/// the recovery curve starting at the unlearned model.
pub fn rounds_csv(report: &ExperimentReport) -> String {
    let mut out = format!("{ROUNDS_HEADER}\n");
    let mut row = |seed: u64, phase: &str, round: u64, m: &EfficacyMetrics| {
        let _ = writeln!(
            out,
            "{seed},{phase},{round},{},{},{},{}",
            m.test_acc, m.forget_acc, m.mia_song, m.mia_yeom
        );
    };
    for r in report.successful() {
        let rounds = r.resolved.unlearn_round;
        row(r.seed, "original", rounds, &r.original);
        row(r.seed, "retrain", rounds, &r.retrained);
        for (i, m) in r.recovery_curve.iter().enumerate() {
            row(r.seed, "recovery", i as u64, m);
        }
    }
    out
}

fn ratio_cell(r: &Ratio) -> String {
    match r {
        Ratio::Finite(v) => v.to_string(),
        Ratio::Unbounded => "inf".to_string(),
    }
}

/// One row per method and phase. `ratio_vs_retrain` is filled on total rows
/// as `comm;comp;storage`.
pub fn costs_csv(costs: &CostReport) -> String {
    let mut out = format!("{COSTS_HEADER}\n");
    for m in &costs.methods {
        let phases: [(&str, &PhaseCost); 3] = [
            ("unlearn", &m.unlearn),
            ("recovery", &m.recovery),
            ("total", &m.total),
        ];
        for (phase, c) in phases {
            let ratio = if phase == "total" {
                format!(
                    "{};{};{}",
                    ratio_cell(&m.ratios.comm),
                    ratio_cell(&m.ratios.comp),
                    ratio_cell(&m.ratios.storage)
                )
            } else {
                String::new()
            };
            let _ = writeln!(
                out,
                "{},{phase},{},{},{},{ratio}",
                m.method.name(),
                c.comm_bytes.value,
                c.comp_flops.value,
                c.storage_bytes.value
            );
        }
    }
    out
}

/// Writes `summary.json`, `rounds.csv` and `costs.csv` into `dir`.
pub fn emit_reports(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let costs = report.costs.as_ref().map(costs_csv).unwrap_or_else(|| format!("{COSTS_HEADER}\n"));
    let files = [
        ("summary.json", summary_json(report)?),
        ("rounds.csv", rounds_csv(report)),
        ("costs.csv", costs),
    ];
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

pub fn load_report(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
