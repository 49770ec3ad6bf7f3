//! Unlearning strategies and the recovery phase.
//!
//! PUF removes target clients by negating their aggregated pseudo-gradient:
//! either inside an ordinary round (`puf_regular_round`) or in a round only
//! the targets join (`puf_special_round`). Targets run the unmodified
//! [`client_opt`](crate::engine::client_opt); only the server-side combination
//! changes. Baselines: Natural (do nothing), Retrain (train from scratch
//! without the targets), NoT (negate the first layer) and PGA (projected
//! gradient ascent on the forget data).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{select_forget_subset, FederatedDataset};
use crate::engine::{
    execute_round, run_round, select_participants, train_with_clients, ClientId, FedState,
    LocalHyper, RoundMode, RoundOutcome, RoundPlan, StoredUpdate, TrainConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{mean_loss, EfficacyMetrics};
use crate::nn::{loss_and_grad, LabeledBatch, ModelArch, ParameterVector};
use crate::rng::{self, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    PufRegular,
    PufSpecial,
    Not,
    Pga,
    Natural,
    Retrain,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::PufRegular => "puf_regular",
            Strategy::PufSpecial => "puf_special",
            Strategy::Not => "not",
            Strategy::Pga => "pga",
            Strategy::Natural => "natural",
            Strategy::Retrain => "retrain",
        }
    }
}

/// What is forgotten from each target client.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Scope {
    /// The whole client.
    Client,
    /// A uniformly drawn `fraction` of each target's samples.
    Sample { fraction: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnRequest {
    pub targets: BTreeSet<ClientId>,
    pub scope: Scope,
    pub strategy: Strategy,
}

impl UnlearnRequest {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Empty("unlearning targets"));
        }
        if let Some(&t) = self.targets.iter().find(|&&t| t >= num_clients) {
            return Err(Error::InvalidArgument(format!(
                "target {t} does not exist ({num_clients} clients)"
            )));
        }
        if let Scope::Sample { fraction, .. } = self.scope {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "sample fraction must be in (0, 1), got {fraction}"
                )));
            }
        } else if self.targets.len() == num_clients {
            return Err(Error::InvalidArgument(
                "cannot forget every client; no one is left to recover with".into(),
            ));
        }
        Ok(())
    }
}

/// The data each phase sees once the request's scope is applied.
#[derive(Clone, Debug)]
pub struct ScopeViews {
    pub targets: BTreeSet<ClientId>,
    /// What each target trains on in the unlearning round.
    pub unlearn_data: BTreeMap<ClientId, LabeledBatch>,
    /// Dataset for recovery and retraining; sample-scope targets hold only
    /// their retain data here.
    pub recovery: FederatedDataset,
    /// Clients allowed to take part in recovery and retraining.
    pub recovery_clients: Vec<ClientId>,
    /// Pooled forget data `D_u` in target id order.
    pub forget: LabeledBatch,
    /// Pooled data of every recovery client as seen during recovery.
    pub retain: LabeledBatch,
}

/// Splits `dataset` according to `request.scope`.
///
/// Client scope: targets unlearn with their full data and leave recovery.
/// Sample scope: targets unlearn with their forget subset and stay in
/// recovery with the retain subset.
pub fn scope_views(request: &UnlearnRequest, dataset: &FederatedDataset) -> Result<ScopeViews> {
    request.validate(dataset.num_clients())?;
    let mut unlearn_data = BTreeMap::new();
    let mut recovery = dataset.clone();
    let recovery_clients: Vec<ClientId> = match request.scope {
        Scope::Client => {
            for &t in &request.targets {
                unlearn_data.insert(t, dataset.client(t)?.clone());
            }
            (0..dataset.num_clients())
                .filter(|c| !request.targets.contains(c))
                .collect()
        }
        Scope::Sample { fraction, seed } => {
            for &t in &request.targets {
                let split = select_forget_subset(dataset.client(t)?, t, fraction, seed)?;
                unlearn_data.insert(t, split.forget);
                recovery = recovery.with_client_data(t, split.retain)?;
            }
            (0..dataset.num_clients()).collect()
        }
    };
    let forget = LabeledBatch::concat(dataset.feature_dim(), unlearn_data.values())?;
    let retain = recovery.pooled(&recovery_clients)?;
    Ok(ScopeViews {
        targets: request.targets.clone(),
        unlearn_data,
        recovery,
        recovery_clients,
        forget,
        retain,
    })
}

impl ScopeViews {
    /// Training data of `id` during the unlearning round.
    pub fn unlearning_client(&self, id: ClientId) -> Result<&LabeledBatch> {
        match self.unlearn_data.get(&id) {
            Some(d) => Ok(d),
            None => self.recovery.client(id),
        }
    }
}

/// Round index, local optimizer and seed for one unlearning round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundContext {
    pub round_index: u64,
    pub hyper: LocalHyper,
    pub seed: u64,
}

/// `w_t + eta_r * D+ - eta_u * D-` with `n` shared over both sets.
///
/// An empty `s_minus` degenerates to a standard round when `eta_r = 1`.
pub fn puf_regular_round<'a, F>(
    w_t: &ParameterVector,
    client_data: F,
    s_plus: &BTreeSet<ClientId>,
    s_minus: &BTreeSet<ClientId>,
    eta_r: f64,
    eta_u: f64,
    ctx: &RoundContext,
) -> Result<RoundOutcome>
where
    F: Fn(ClientId) -> Result<&'a LabeledBatch> + Sync,
{
    let plan = RoundPlan {
        round_index: ctx.round_index,
        retained: s_plus.clone(),
        targets: s_minus.clone(),
        eta_s: 1.0,
        eta_r,
        eta_u,
        mode: RoundMode::PufRegular,
    };
    execute_round(w_t, client_data, &plan, &ctx.hyper, ctx.seed)
}

/// `w_t - eta_u * D-` where only the targets train and `n` sums their sizes.
pub fn puf_special_round<'a, F>(
    w_t: &ParameterVector,
    client_data: F,
    s_minus: &BTreeSet<ClientId>,
    eta_u: f64,
    ctx: &RoundContext,
) -> Result<RoundOutcome>
where
    F: Fn(ClientId) -> Result<&'a LabeledBatch> + Sync,
{
    let plan = RoundPlan {
        round_index: ctx.round_index,
        retained: BTreeSet::new(),
        targets: s_minus.clone(),
        eta_s: 1.0,
        eta_r: 1.0,
        eta_u,
        mode: RoundMode::PufSpecial,
    };
    execute_round(w_t, client_data, &plan, &ctx.hyper, ctx.seed)
}

/// Negates the first weight tensor, and its bias when `negate_bias` is set.
/// Does not look at who asked to be forgotten.
pub fn not_unlearn(w_t: &ParameterVector, negate_bias: bool) -> Result<ParameterVector> {
    let schema = w_t.schema();
    if schema.is_empty() {
        return Err(Error::SchemaMismatch("model has no layers".into()));
    }
    let mut values = w_t.as_slice().to_vec();
    let mut negate = vec![w_t.layer_range(0)];
    if negate_bias && schema.len() > 1 && schema[1].dims.len() == 1 {
        negate.push(w_t.layer_range(1));
    }
    for range in negate {
        values[range].iter_mut().for_each(|v| *v = -*v);
    }
    w_t.with_values(values)
}

/// Settings for projected gradient ascent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgaParams {
    pub ascent_epochs: usize,
    pub clip_threshold: f64,
    /// Radius of the L2 ball around the reference model.
    pub ball_radius: f64,
    /// Stop once the mean forget loss reaches this value; `None` never stops.
    pub early_stop_loss: Option<f64>,
    pub batch_size: usize,
    pub lr: f64,
}

impl PgaParams {
    pub fn validate(&self) -> Result<()> {
        let bad = self.ascent_epochs == 0
            || self.batch_size == 0
            || !(self.clip_threshold > 0.0)
            || !(self.lr > 0.0)
            || !(self.ball_radius >= 0.0 && self.ball_radius.is_finite())
            || self.early_stop_loss.is_some_and(|t| !(t > 0.0));
        if bad {
            Err(Error::InvalidArgument(format!("invalid PGA parameters: {self:?}")))
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgaOutcome {
    pub model: ParameterVector,
    pub steps: usize,
    pub stopped_early: bool,
    pub final_forget_loss: f64,
}

fn project_to_ball(w: &mut ParameterVector, center: &ParameterVector, radius: f64) -> Result<()> {
    let dist = w.distance(center)?;
    if dist > radius {
        let offset = w.sub(center)?;
        let scale = if dist > 0.0 { radius / dist } else { 0.0 };
        *w = center.add_scaled(scale, &offset)?;
    }
    Ok(())
}

/// Mini-batch gradient ascent on `target_data` starting from `w_t`.
///
/// Each batch gradient is clipped to L2 norm `clip_threshold`; after every
/// step the model is projected onto the sphere of radius `ball_radius` around
/// `w_ref` if it left the ball.
pub fn pga_unlearn(
    w_t: &ParameterVector,
    target_data: &LabeledBatch,
    w_ref: &ParameterVector,
    params: &PgaParams,
    seed: u64,
) -> Result<PgaOutcome> {
    params.validate()?;
    if target_data.is_empty() {
        return Err(Error::Empty("PGA target data"));
    }
    let mut w = w_t.clone();
    project_to_ball(&mut w, w_ref, params.ball_radius)?;
    let mut order: Vec<usize> = (0..target_data.len()).collect();
    let mut steps = 0;
    let mut loss = mean_loss(&w, target_data)?;
    for epoch in 0..params.ascent_epochs {
        order.shuffle(&mut rng::stream(seed, Purpose::Ascent, &[epoch as u64]));
        for chunk in order.chunks(params.batch_size) {
            let (_, mut grad) = loss_and_grad(&w, &target_data.select(chunk))?;
            let norm = grad.norm();
            if norm > params.clip_threshold {
                grad = grad.scaled(params.clip_threshold / norm)?;
            }
            w = w.add_scaled(params.lr, &grad)?;
            project_to_ball(&mut w, w_ref, params.ball_radius)?;
            steps += 1;
            loss = mean_loss(&w, target_data)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("forget loss {loss} after {steps} ascent steps")));
            }
            if params.early_stop_loss.is_some_and(|t| loss >= t) {
                return Ok(PgaOutcome {
                    model: w,
                    steps,
                    stopped_early: true,
                    final_forget_loss: loss,
                });
            }
        }
    }
    Ok(PgaOutcome {
        model: w,
        steps,
        stopped_early: false,
        final_forget_loss: loss,
    })
}

/// Removes a stored update from the global model:
/// `w_t - (weight / n) * delta`.
pub fn make_pga_reference(w_t: &ParameterVector, stored: &StoredUpdate) -> Result<ParameterVector> {
    if stored.round_total == 0 {
        return Err(Error::InvalidArgument("stored update has n = 0".into()));
    }
    let coeff = stored.update.weight as f64 / stored.round_total as f64;
    w_t.add_scaled(-coeff, &stored.update.delta)
}

/// Reference model with every target's last update removed.
pub fn pga_reference_for(
    w_t: &ParameterVector,
    last_updates: &BTreeMap<ClientId, StoredUpdate>,
    targets: &BTreeSet<ClientId>,
) -> Result<ParameterVector> {
    let mut w = w_t.clone();
    for &t in targets {
        let stored = last_updates
            .get(&t)
            .ok_or(Error::MissingStoredUpdate { client: t })?;
        w = make_pga_reference(&w, stored)?;
    }
    Ok(w)
}

/// Trains from scratch on the recovery view, i.e. as if the forgotten data
/// had never been there.
pub fn retrain_baseline(
    views: &ScopeViews,
    arch: &ModelArch,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FedState> {
    train_with_clients(&views.recovery, arch, cfg, &views.recovery_clients, seed)
}

/// First index whose accuracy reaches `target`.
pub fn first_recovery_round(test_accs: &[f64], target: f64) -> Option<usize> {
    test_accs.iter().position(|&a| a >= target)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveryPlan {
    pub max_rounds: u64,
    pub stop_target_acc: f64,
    /// Round index of the first recovery round.
    pub first_round: u64,
    /// lr decay exponent of the first recovery round.
    pub lr_offset: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryOutcome {
    pub state: FedState,
    /// Rounds run before the stop rule fired (or `max_rounds` when capped).
    pub rounds: u64,
    pub capped: bool,
    /// Metrics after every recovery round; entry 0 is the unlearned model.
    pub curve: Vec<EfficacyMetrics>,
}

/// Standard rounds among the recovery clients until test accuracy first
/// reaches `stop_target_acc`. `evaluate` scores the model after every round.
pub fn recover<E>(
    start: FedState,
    dataset: &FederatedDataset,
    eligible: &[ClientId],
    cfg: &TrainConfig,
    plan: &RecoveryPlan,
    mut evaluate: E,
    seed: u64,
) -> Result<RecoveryOutcome>
where
    E: FnMut(&ParameterVector) -> Result<EfficacyMetrics>,
{
    if plan.max_rounds == 0 {
        return Err(Error::InvalidArgument("recovery needs max_rounds >= 1".into()));
    }
    let mut state = start;
    let mut curve = vec![evaluate(&state.model)?];
    let mut rounds = 0;
    while curve[rounds as usize].test_acc < plan.stop_target_acc {
        if rounds == plan.max_rounds {
            return Ok(RecoveryOutcome {
                state,
                rounds,
                capped: true,
                curve,
            });
        }
        let t = plan.first_round + rounds;
        let participants = select_participants(eligible, cfg.participation, seed, t)?;
        let round_plan = RoundPlan::standard(t, participants, cfg.eta_s);
        state = run_round(state, dataset, &round_plan, &cfg.hyper_at(plan.lr_offset + rounds), seed)?;
        rounds += 1;
        curve.push(evaluate(&state.model)?);
    }
    Ok(RecoveryOutcome {
        state,
        rounds,
        capped: false,
        curve,
    })
}

/// Strategy-specific knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategyParams {
    pub eta_r: f64,
    pub eta_u: f64,
    pub not_negate_bias: bool,
    pub pga: PgaParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnOutcome {
    pub model: ParameterVector,
    /// Whether the strategy spent a federated round.
    pub used_round: bool,
    /// Clients that trained during the unlearning phase.
    pub participants: Vec<ClientId>,
}

/// Applies `strategy` to the trained `original` state at round `round_index`.
///
/// `retrained` is only read by [`Strategy::Retrain`].
#[allow(clippy::too_many_arguments)]
pub fn apply_strategy(
    strategy: Strategy,
    original: &FedState,
    views: &ScopeViews,
    retrained: &ParameterVector,
    params: &StrategyParams,
    cfg: &TrainConfig,
    round_index: u64,
    seed: u64,
) -> Result<UnlearnOutcome> {
    let ctx = RoundContext {
        round_index,
        hyper: cfg.hyper_at(round_index),
        seed,
    };
    let data = |id| views.unlearning_client(id);
    let targets: Vec<ClientId> = views.targets.iter().copied().collect();
    let out = match strategy {
        Strategy::PufSpecial => {
            let o = puf_special_round(&original.model, data, &views.targets, params.eta_u, &ctx)?;
            UnlearnOutcome {
                model: o.model,
                used_round: true,
                participants: targets,
            }
        }
        Strategy::PufRegular => {
            let others: Vec<ClientId> = views
                .recovery_clients
                .iter()
                .copied()
                .filter(|c| !views.targets.contains(c))
                .collect();
            let s_plus: BTreeSet<ClientId> =
                select_participants(&others, cfg.participation, seed, round_index)?
                    .into_iter()
                    .collect();
            let o = puf_regular_round(
                &original.model,
                data,
                &s_plus,
                &views.targets,
                params.eta_r,
                params.eta_u,
                &ctx,
            )?;
            UnlearnOutcome {
                model: o.model,
                used_round: true,
                participants: s_plus.union(&views.targets).copied().collect(),
            }
        }
        Strategy::Not => UnlearnOutcome {
            model: not_unlearn(&original.model, params.not_negate_bias)?,
            used_round: false,
            participants: Vec::new(),
        },
        Strategy::Pga => {
            let w_ref = pga_reference_for(&original.model, &original.last_updates, &views.targets)?;
            let o = pga_unlearn(&original.model, &views.forget, &w_ref, &params.pga, seed)?;
            UnlearnOutcome {
                model: o.model,
                used_round: true,
                participants: targets,
            }
        }
        Strategy::Natural => UnlearnOutcome {
            model: original.model.clone(),
            used_round: false,
            participants: Vec::new(),
        },
        Strategy::Retrain => UnlearnOutcome {
            model: retrained.clone(),
            used_round: false,
            participants: Vec::new(),
        },
    };
    Ok(out)
}
