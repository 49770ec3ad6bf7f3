//! FedAvg as server-side SGD on pseudo-gradients.
//!
//! A round runs `client_opt` for every participant (in parallel via rayon;
//! only the immutable global model is shared), aggregates the returned deltas
//! weighted by sample count, and lets the server take an SGD step along the
//! aggregate. Aggregation always sums in ascending client id order, so the
//! result does not depend on the thread count.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FederatedDataset;
use crate::error::{Error, Result};
use crate::nn::{init_model, loss_and_grad, predict_accuracy, LabeledBatch, ModelArch, ParameterVector};
use crate::rng::{self, Purpose};

pub type ClientId = usize;

/// `delta = w_local - w_global` together with the client's sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdate {
    pub client_id: ClientId,
    pub delta: ParameterVector,
    pub weight: u64,
    /// Sample-weighted mean mini-batch loss seen during local training.
    pub train_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundMode {
    Standard,
    PufRegular,
    PufSpecial,
}

/// Who takes part in one round and how their updates are combined.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundPlan {
    pub round_index: u64,
    /// Clients whose updates are applied as usual.
    pub retained: BTreeSet<ClientId>,
    /// Clients whose aggregated update is negated.
    pub targets: BTreeSet<ClientId>,
    pub eta_s: f64,
    pub eta_r: f64,
    pub eta_u: f64,
    pub mode: RoundMode,
}

impl RoundPlan {
    pub fn standard(round_index: u64, participants: impl IntoIterator<Item = ClientId>, eta_s: f64) -> Self {
        Self {
            round_index,
            retained: participants.into_iter().collect(),
            targets: BTreeSet::new(),
            eta_s,
            eta_r: 1.0,
            eta_u: 0.0,
            mode: RoundMode::Standard,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.retained.intersection(&self.targets).next() {
            return Err(Error::InvalidArgument(format!(
                "client {c} is both retained and a target"
            )));
        }
        for (name, v) in [("eta_s", self.eta_s), ("eta_r", self.eta_r), ("eta_u", self.eta_u)] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite, got {v}")));
            }
        }
        match self.mode {
            RoundMode::Standard if !self.targets.is_empty() => Err(Error::InvalidArgument(
                "a standard round has no target clients".into(),
            )),
            RoundMode::Standard if self.retained.is_empty() => {
                Err(Error::Empty("participants of a standard round"))
            }
            RoundMode::PufSpecial if !self.retained.is_empty() => Err(Error::InvalidArgument(
                "only target clients take part in a PUF-Special round".into(),
            )),
            RoundMode::PufSpecial if self.targets.is_empty() => {
                Err(Error::Empty("targets of a PUF-Special round"))
            }
            RoundMode::PufRegular if self.retained.is_empty() => Err(Error::Empty(
                "retained clients of a PUF-Regular round (use PUF-Special instead)",
            )),
            _ => Ok(()),
        }
    }

    pub fn participants(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.retained.union(&self.targets).copied()
    }
}

/// Local optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalHyper {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl LocalHyper {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "local epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "local lr must be finite and >= 0, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u64,
    pub test_acc: Option<f64>,
    pub mean_train_loss: f64,
    pub participants: Vec<ClientId>,
    pub mode: RoundMode,
}

/// Per-round log; round indices strictly increase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    records: Vec<RoundRecord>,
}

impl TrainHistory {
    pub fn push(&mut self, record: RoundRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.round_index <= last.round_index {
                return Err(Error::InvalidArgument(format!(
                    "round {} recorded after round {}",
                    record.round_index, last.round_index
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// A client's most recent update and the `n` it was aggregated with.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredUpdate {
    pub update: ClientUpdate,
    pub round_index: u64,
    pub round_total: u64,
}

/// Everything the orchestrator carries between rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct FedState {
    pub model: ParameterVector,
    pub history: TrainHistory,
    /// Last update of every client that has participated; only PGA reads it.
    pub last_updates: BTreeMap<ClientId, StoredUpdate>,
}

impl FedState {
    pub fn new(model: ParameterVector) -> Self {
        Self {
            model,
            history: TrainHistory::default(),
            last_updates: BTreeMap::new(),
        }
    }
}

/// Local training: `epochs` passes of mini-batch SGD from `w_t`, reshuffled
/// every epoch. Returns `w_final - w_t`.
pub fn client_opt(
    client_id: ClientId,
    client_data: &LabeledBatch,
    w_t: &ParameterVector,
    hyper: &LocalHyper,
    seed: u64,
) -> Result<ClientUpdate> {
    hyper.validate()?;
    if client_data.is_empty() {
        return Err(Error::Empty("client data"));
    }
    let mut w = w_t.clone();
    let mut order: Vec<usize> = (0..client_data.len()).collect();
    let mut loss_sum = 0.0;
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng::stream(seed, Purpose::Shuffle, &[epoch as u64]));
        for chunk in order.chunks(hyper.batch_size) {
            let batch = client_data.select(chunk);
            let (loss, grad) = loss_and_grad(&w, &batch)?;
            loss_sum += loss * chunk.len() as f64;
            if hyper.lr > 0.0 {
                w.axpy(-hyper.lr, &grad)?;
            }
        }
    }
    Ok(ClientUpdate {
        client_id,
        delta: w.sub(w_t)?,
        weight: client_data.len() as u64,
        train_loss: loss_sum / (hyper.epochs * client_data.len()) as f64,
    })
}

/// `sum((weight_i / n) * delta_i)`, summed in ascending client id order.
///
/// `n` is the sample total of every participant in the round, which may
/// exceed the weights of the subset passed here.
pub fn aggregate(updates: &[ClientUpdate], n: u64) -> Result<ParameterVector> {
    if n == 0 {
        return Err(Error::InvalidArgument("aggregation total n must be > 0".into()));
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    if let Some(w) = sorted.windows(2).find(|w| w[0].client_id == w[1].client_id) {
        return Err(Error::InvalidArgument(format!(
            "client {} submitted two updates",
            w[0].client_id
        )));
    }
    let first = sorted.first().ok_or(Error::Empty("updates to aggregate"))?;
    let mut acc = first.delta.zeros_like();
    for u in &sorted {
        if u.weight == 0 {
            return Err(Error::InvalidArgument(format!(
                "client {} has weight 0",
                u.client_id
            )));
        }
        acc.axpy(u.weight as f64 / n as f64, &u.delta)?;
    }
    Ok(acc)
}

/// Server SGD on the pseudo-gradient `-delta`: `w_t + eta_s * delta`.
pub fn server_step(w_t: &ParameterVector, delta: &ParameterVector, eta_s: f64) -> Result<ParameterVector> {
    w_t.add_scaled(eta_s, delta)
}

/// Seed handed to `client_opt` for one client in one round.
pub fn client_seed(seed: u64, round_index: u64, client: ClientId) -> u64 {
    rng::derive_seed(seed, Purpose::Shuffle, &[round_index, client as u64])
}

/// Result of one round before it is folded into a [`FedState`].
#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub model: ParameterVector,
    pub updates: Vec<ClientUpdate>,
    /// Sample total over all participants.
    pub round_total: u64,
}

impl RoundOutcome {
    pub fn mean_train_loss(&self) -> f64 {
        let w: u64 = self.updates.iter().map(|u| u.weight).sum();
        self.updates
            .iter()
            .map(|u| u.train_loss * u.weight as f64)
            .sum::<f64>()
            / w as f64
    }
}

/// Runs one round of any mode against `client_data(id)`.
///
/// Every participant runs the same unmodified `client_opt`; modes differ only
/// in how the server combines the two aggregates:
/// - standard: `w + eta_s * D+`
/// - PUF-Regular: `w + eta_s * (eta_r * D+ - eta_u * D-)`
/// - PUF-Special: `w + eta_s * (-eta_u * D-)`
///
/// where both aggregates share `n` over all participants.
pub fn execute_round<'a, F>(
    w_t: &ParameterVector,
    client_data: F,
    plan: &RoundPlan,
    hyper: &LocalHyper,
    seed: u64,
) -> Result<RoundOutcome>
where
    F: Fn(ClientId) -> Result<&'a LabeledBatch> + Sync,
{
    plan.validate()?;
    let participants: Vec<ClientId> = plan.participants().collect();
    let updates = participants
        .par_iter()
        .map(|&id| {
            let data = client_data(id)?;
            client_opt(id, data, w_t, hyper, client_seed(seed, plan.round_index, id))
        })
        .collect::<Result<Vec<_>>>()?;
    let round_total: u64 = updates.iter().map(|u| u.weight).sum();

    let (plus, minus): (Vec<ClientUpdate>, Vec<ClientUpdate>) = updates
        .iter()
        .cloned()
        .partition(|u| plan.retained.contains(&u.client_id));
    let delta_plus = if plus.is_empty() {
        w_t.zeros_like()
    } else {
        aggregate(&plus, round_total)?
    };
    let delta_minus = if minus.is_empty() {
        w_t.zeros_like()
    } else {
        aggregate(&minus, round_total)?
    };
    let combined = match plan.mode {
        RoundMode::Standard => delta_plus,
        RoundMode::PufRegular => delta_plus
            .scaled(plan.eta_r)?
            .add_scaled(-plan.eta_u, &delta_minus)?,
        RoundMode::PufSpecial => delta_minus.scaled(-plan.eta_u)?,
    };
    Ok(RoundOutcome {
        model: server_step(w_t, &combined, plan.eta_s)?,
        updates,
        round_total,
    })
}

/// Folds a finished round into the state: new model, stored updates and a
/// history record evaluated on `test`.
pub fn commit_round(
    mut state: FedState,
    outcome: RoundOutcome,
    plan: &RoundPlan,
    test: &LabeledBatch,
) -> Result<FedState> {
    let test_acc = if test.is_empty() {
        None
    } else {
        Some(predict_accuracy(&outcome.model, test)?)
    };
    state.history.push(RoundRecord {
        round_index: plan.round_index,
        test_acc,
        mean_train_loss: outcome.mean_train_loss(),
        participants: plan.participants().collect(),
        mode: plan.mode,
    })?;
    for u in &outcome.updates {
        state.last_updates.insert(
            u.client_id,
            StoredUpdate {
                update: u.clone(),
                round_index: plan.round_index,
                round_total: outcome.round_total,
            },
        );
    }
    state.model = outcome.model;
    Ok(state)
}

/// One standard FedAvg round over `plan.retained`.
pub fn run_round(
    state: FedState,
    dataset: &FederatedDataset,
    plan: &RoundPlan,
    hyper: &LocalHyper,
    seed: u64,
) -> Result<FedState> {
    if plan.mode != RoundMode::Standard {
        return Err(Error::InvalidArgument(
            "run_round only runs standard rounds; unlearning rounds go through the unlearn module"
                .into(),
        ));
    }
    let outcome = execute_round(&state.model, |id| dataset.client(id), plan, hyper, seed)?;
    commit_round(state, outcome, plan, dataset.test())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Participation {
    All,
    /// `k` clients drawn uniformly without replacement each round.
    Sample { k: usize },
}

/// Settings of a run of standard rounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub rounds: u64,
    pub local: LocalHyper,
    /// Client lr in round `t` is `local.lr * lr_decay^t`.
    pub lr_decay: f64,
    pub eta_s: f64,
    pub participation: Participation,
}

impl TrainConfig {
    pub fn hyper_at(&self, exponent: u64) -> LocalHyper {
        LocalHyper {
            lr: self.local.lr * self.lr_decay.powi(exponent as i32),
            ..self.local
        }
    }
}

/// Participants of round `round_index` drawn from `eligible`.
pub fn select_participants(
    eligible: &[ClientId],
    participation: Participation,
    seed: u64,
    round_index: u64,
) -> Result<Vec<ClientId>> {
    if eligible.is_empty() {
        return Err(Error::Empty("eligible clients"));
    }
    match participation {
        Participation::All => Ok(eligible.to_vec()),
        Participation::Sample { k } => {
            if k == 0 {
                return Err(Error::InvalidArgument("participation k must be >= 1".into()));
            }
            let mut rng = rng::stream(seed, Purpose::Participation, &[round_index]);
            let mut chosen: Vec<ClientId> = eligible
                .choose_multiple(&mut rng, k.min(eligible.len()))
                .copied()
                .collect();
            chosen.sort_unstable();
            Ok(chosen)
        }
    }
}

/// Continues `state` for `rounds` standard rounds numbered from `first_round`.
/// The lr exponent of round `t` is `t - first_round + lr_offset`.
pub fn continue_training(
    mut state: FedState,
    dataset: &FederatedDataset,
    eligible: &[ClientId],
    cfg: &TrainConfig,
    first_round: u64,
    lr_offset: u64,
    seed: u64,
) -> Result<FedState> {
    for r in 0..cfg.rounds {
        let t = first_round + r;
        let participants = select_participants(eligible, cfg.participation, seed, t)?;
        let plan = RoundPlan::standard(t, participants, cfg.eta_s);
        state = run_round(state, dataset, &plan, &cfg.hyper_at(lr_offset + r), seed)?;
    }
    Ok(state)
}

/// Trains from a fresh model (initialized from `seed`) using only `eligible`
/// clients.
pub fn train_with_clients(
    dataset: &FederatedDataset,
    arch: &ModelArch,
    cfg: &TrainConfig,
    eligible: &[ClientId],
    seed: u64,
) -> Result<FedState> {
    if cfg.rounds == 0 {
        return Err(Error::InvalidArgument("training needs at least one round".into()));
    }
    let state = FedState::new(init_model(arch, seed)?);
    continue_training(state, dataset, eligible, cfg, 0, 0, seed)
}

/// FedAvg over every client of `dataset`.
pub fn train(
    dataset: &FederatedDataset,
    arch: &ModelArch,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FedState> {
    let all: Vec<ClientId> = (0..dataset.num_clients()).collect();
    train_with_clients(dataset, arch, cfg, &all, seed)
}
