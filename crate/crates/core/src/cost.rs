//! Closed-form communication, computation and storage costs.
//!
//! All quantities are `f64` because several inputs are fractional (e.g.
//! half-epoch calibration) and totals reach 1e16.
//!
//! | method      | communication (bytes)     | computation (FLOPs)      | storage (bytes) |
//! |-------------|---------------------------|--------------------------|-----------------|
//! | FedEraser   | 2 P B C_r R_ret           | F N E_cal C_r R_ret      | C R_ret P B     |
//! | PGA         | 2 P B                     | F N E_asc C_u            | (C + 1) P B     |
//! | FedAU       | 2 P_c B                   | negligible               | P B             |
//! | MoDe        | 2 P B (C_r R_d + C R_m)   | F N E (C_r R_d + C R_m)  | 2 P B           |
//! | PUF-Special | 2 P B C_u                 | F N E C_u                | P B             |
//! | PUF-Regular | 2 P B C                   | F N E C                  | P B             |
//! | NoT         | negligible                | negligible               | P B             |
//! | Natural     | 0                         | 0                        | P B             |
//! | Retrain     | 2 P B C_r R               | F N E C_r R              | P B             |
//!
//! Recovery adds `2 P B C_r R_rec` bytes and `F N E C_r R_rec` FLOPs for every
//! method except Retrain, whose from-scratch run already reaches the target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the cost formulas. Field docs give the conventional symbol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostInputs {
    /// P
    pub params: f64,
    /// B
    pub bytes_per_param: f64,
    /// P_c, classifier head size (FedAU)
    pub classifier_params: f64,
    /// C
    pub clients: f64,
    /// C_u
    pub unlearn_clients: f64,
    /// C_r
    pub remaining_clients: f64,
    /// F, per sample, forward and backward
    pub flops_per_sample: f64,
    /// N
    pub samples_per_client: f64,
    /// E
    pub local_epochs: f64,
    /// R, rounds of a from-scratch run
    pub rounds: f64,
    /// R_ret (FedEraser)
    pub retention_rounds: f64,
    /// E_cal (FedEraser)
    pub calibration_epochs: f64,
    /// E_asc (PGA)
    pub ascent_epochs: f64,
    /// R_d (MoDe)
    pub degradation_rounds: f64,
    /// R_m (MoDe)
    pub memory_rounds: f64,
    /// R_rec
    pub recovery_rounds: f64,
}

impl CostInputs {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("params", self.params),
            ("bytes_per_param", self.bytes_per_param),
            ("classifier_params", self.classifier_params),
            ("clients", self.clients),
            ("unlearn_clients", self.unlearn_clients),
            ("remaining_clients", self.remaining_clients),
            ("flops_per_sample", self.flops_per_sample),
            ("samples_per_client", self.samples_per_client),
            ("local_epochs", self.local_epochs),
            ("rounds", self.rounds),
            ("retention_rounds", self.retention_rounds),
            ("calibration_epochs", self.calibration_epochs),
            ("ascent_epochs", self.ascent_epochs),
            ("degradation_rounds", self.degradation_rounds),
            ("memory_rounds", self.memory_rounds),
            ("recovery_rounds", self.recovery_rounds),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "cost input {name} must be finite and >= 0, got {v}"
            )));
        }
        if self.clients < self.unlearn_clients || self.clients < self.remaining_clients {
            return Err(Error::InvalidArgument(format!(
                "C = {} cannot be smaller than C_u = {} or C_r = {}",
                self.clients, self.unlearn_clients, self.remaining_clients
            )));
        }
        Ok(())
    }

    fn model_bytes(&self) -> f64 {
        self.params * self.bytes_per_param
    }

    fn round_flops(&self, epochs: f64) -> f64 {
        self.flops_per_sample * self.samples_per_client * epochs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FedEraser,
    Pga,
    FedAu,
    MoDe,
    PufSpecial,
    PufRegular,
    Not,
    Natural,
    Retrain,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Retrain,
        Method::FedEraser,
        Method::Pga,
        Method::MoDe,
        Method::FedAu,
        Method::Not,
        Method::Natural,
        Method::PufSpecial,
        Method::PufRegular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FedEraser => "fed_eraser",
            Method::Pga => "pga",
            Method::FedAu => "fed_au",
            Method::MoDe => "mo_de",
            Method::PufSpecial => "puf_special",
            Method::PufRegular => "puf_regular",
            Method::Not => "not",
            Method::Natural => "natural",
            Method::Retrain => "retrain",
        }
    }
}

/// A cost figure. `negligible` marks entries treated as zero by convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Amount {
    pub value: f64,
    pub negligible: bool,
}

impl Amount {
    pub const NEGLIGIBLE: Amount = Amount {
        value: 0.0,
        negligible: true,
    };

    pub fn exact(value: f64) -> Self {
        Self {
            value,
            negligible: false,
        }
    }

    fn plus(self, other: Amount) -> Amount {
        Amount {
            value: self.value + other.value,
            negligible: (self.negligible || self.value == 0.0)
                && (other.negligible || other.value == 0.0)
                && (self.negligible || other.negligible),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub comm_bytes: Amount,
    pub comp_flops: Amount,
    pub storage_bytes: Amount,
}

/// Bytes exchanged in one round, uplink plus downlink.
pub fn comm_round(params: f64, bytes_per_param: f64, participants: f64) -> f64 {
    2.0 * params * bytes_per_param * participants
}

/// Recovery-phase `(bytes, flops)`.
pub fn recovery_costs(inputs: &CostInputs) -> (f64, f64) {
    let rounds = inputs.remaining_clients * inputs.recovery_rounds;
    (
        comm_round(inputs.params, inputs.bytes_per_param, rounds),
        inputs.round_flops(inputs.local_epochs) * rounds,
    )
}

/// Unlearning-phase costs of `method`.
pub fn method_costs(method: Method, inputs: &CostInputs) -> PhaseCost {
    let i = inputs;
    let pb = i.model_bytes();
    let ex = Amount::exact;
    let (comm, comp, storage) = match method {
        Method::FedEraser => (
            ex(comm_round(i.params, i.bytes_per_param, i.remaining_clients * i.retention_rounds)),
            ex(i.round_flops(i.calibration_epochs) * i.remaining_clients * i.retention_rounds),
            ex(i.clients * i.retention_rounds * pb),
        ),
        // every client keeps its last update and the server keeps the model
        Method::Pga => (
            ex(comm_round(i.params, i.bytes_per_param, 1.0)),
            ex(i.round_flops(i.ascent_epochs) * i.unlearn_clients),
            ex((i.clients + 1.0) * pb),
        ),
        Method::FedAu => (
            ex(comm_round(i.classifier_params, i.bytes_per_param, 1.0)),
            Amount::NEGLIGIBLE,
            ex(pb),
        ),
        Method::MoDe => {
            let client_rounds = i.remaining_clients * i.degradation_rounds + i.clients * i.memory_rounds;
            (
                ex(comm_round(i.params, i.bytes_per_param, client_rounds)),
                ex(i.round_flops(i.local_epochs) * client_rounds),
                ex(2.0 * pb),
            )
        }
        Method::PufSpecial => (
            ex(comm_round(i.params, i.bytes_per_param, i.unlearn_clients)),
            ex(i.round_flops(i.local_epochs) * i.unlearn_clients),
            ex(pb),
        ),
        Method::PufRegular => (
            ex(comm_round(i.params, i.bytes_per_param, i.clients)),
            ex(i.round_flops(i.local_epochs) * i.clients),
            ex(pb),
        ),
        Method::Not => (Amount::NEGLIGIBLE, Amount::NEGLIGIBLE, ex(pb)),
        Method::Natural => (ex(0.0), ex(0.0), ex(pb)),
        Method::Retrain => (
            ex(comm_round(i.params, i.bytes_per_param, i.remaining_clients * i.rounds)),
            ex(i.round_flops(i.local_epochs) * i.remaining_clients * i.rounds),
            ex(pb),
        ),
    };
    PhaseCost {
        comm_bytes: comm,
        comp_flops: comp,
        storage_bytes: storage,
    }
}

/// `retrain / method` on one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ratio {
    Finite(f64),
    /// The method's cost is zero or negligible.
    Unbounded,
}

impl Ratio {
    fn of(retrain: f64, method: f64) -> Ratio {
        if method > 0.0 {
            Ratio::Finite(retrain / method)
        } else {
            Ratio::Unbounded
        }
    }

    /// One decimal for ratios of at least 0.1, three significant digits below.
    pub fn display(&self) -> String {
        match *self {
            Ratio::Unbounded => "—".to_string(),
            Ratio::Finite(r) if r >= 0.1 || r == 0.0 => format!("{r:.1}×"),
            Ratio::Finite(r) => {
                let digits = (2 - r.log10().floor() as i32).max(0) as usize;
                format!("{r:.digits$}×")
            }
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Ratio::Finite(r) => Some(r),
            Ratio::Unbounded => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub comm: Ratio,
    pub comp: Ratio,
    pub storage: Ratio,
}

/// Improvement of `total` over the retrain totals on every axis.
pub fn improvement_ratios(total: &PhaseCost, retrain_total: &PhaseCost) -> Result<Ratios> {
    let r = retrain_total;
    if !(r.comm_bytes.value > 0.0 && r.comp_flops.value > 0.0 && r.storage_bytes.value > 0.0) {
        return Err(Error::InvalidArgument(
            "retrain totals must be positive to form ratios".into(),
        ));
    }
    Ok(Ratios {
        comm: Ratio::of(r.comm_bytes.value, total.comm_bytes.value),
        comp: Ratio::of(r.comp_flops.value, total.comp_flops.value),
        storage: Ratio::of(r.storage_bytes.value, total.storage_bytes.value),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodCost {
    pub method: Method,
    pub recovery_rounds: f64,
    pub unlearn: PhaseCost,
    pub recovery: PhaseCost,
    pub total: PhaseCost,
    pub ratios: Ratios,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub inputs: CostInputs,
    pub methods: Vec<MethodCost>,
}

/// Unlearning, recovery and total costs for each `(method, R_rec)` pair.
///
/// Storage is a peak, not a flow, so the recovery phase adds none.
pub fn cost_report(inputs: &CostInputs, methods: &[(Method, f64)]) -> Result<CostReport> {
    inputs.validate()?;
    let phases = |method: Method, recovery_rounds: f64| -> Result<(PhaseCost, PhaseCost, PhaseCost)> {
        if !(recovery_rounds >= 0.0 && recovery_rounds.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "recovery rounds for {} must be >= 0, got {recovery_rounds}",
                method.name()
            )));
        }
        let unlearn = method_costs(method, inputs);
        let rec_rounds = if method == Method::Retrain { 0.0 } else { recovery_rounds };
        let (bytes, flops) = recovery_costs(&CostInputs {
            recovery_rounds: rec_rounds,
            ..*inputs
        });
        let recovery = PhaseCost {
            comm_bytes: Amount::exact(bytes),
            comp_flops: Amount::exact(flops),
            storage_bytes: Amount::exact(0.0),
        };
        let total = PhaseCost {
            comm_bytes: unlearn.comm_bytes.plus(recovery.comm_bytes),
            comp_flops: unlearn.comp_flops.plus(recovery.comp_flops),
            storage_bytes: unlearn.storage_bytes,
        };
        Ok((unlearn, recovery, total))
    };
    let (_, _, retrain_total) = phases(Method::Retrain, 0.0)?;
    let rows = methods
        .iter()
        .map(|&(method, rr)| {
            let (unlearn, recovery, total) = phases(method, rr)?;
            Ok(MethodCost {
                method,
                recovery_rounds: if method == Method::Retrain { 0.0 } else { rr },
                unlearn,
                recovery,
                total,
                ratios: improvement_ratios(&total, &retrain_total)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostReport {
        inputs: *inputs,
        methods: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CostInputs {
        CostInputs {
            params: 10.0,
            bytes_per_param: 4.0,
            classifier_params: 2.0,
            clients: 4.0,
            unlearn_clients: 1.0,
            remaining_clients: 3.0,
            flops_per_sample: 5.0,
            samples_per_client: 7.0,
            local_epochs: 1.0,
            rounds: 6.0,
            retention_rounds: 6.0,
            calibration_epochs: 0.5,
            ascent_epochs: 5.0,
            degradation_rounds: 2.0,
            memory_rounds: 3.0,
            recovery_rounds: 2.0,
        }
    }

    #[test]
    fn comm_round_examples() {
        assert_eq!(comm_round(10.0, 4.0, 3.0), 240.0);
        assert_eq!(comm_round(10.0, 4.0, 0.0), 0.0);
        assert_eq!(comm_round(10.0, 4.0, 6.0), 2.0 * comm_round(10.0, 4.0, 3.0));
    }

    #[test]
    fn recovery_examples() {
        assert_eq!(recovery_costs(&small()).0, 480.0);
        let zero = CostInputs {
            recovery_rounds: 0.0,
            ..small()
        };
        assert_eq!(recovery_costs(&zero), (0.0, 0.0));
    }

    #[test]
    fn hand_computed_unlearn_costs() {
        let i = small();
        let pb = 40.0;
        let c = method_costs(Method::MoDe, &i);
        // C_r R_d + C R_m = 3*2 + 4*3 = 18 client-rounds
        assert_eq!(c.comm_bytes.value, 2.0 * pb * 18.0);
        assert_eq!(c.comp_flops.value, 35.0 * 18.0);
        assert_eq!(c.storage_bytes.value, 2.0 * pb);
        let c = method_costs(Method::FedEraser, &i);
        assert_eq!(c.comp_flops.value, 35.0 * 0.5 * 3.0 * 6.0);
        assert_eq!(c.storage_bytes.value, 4.0 * 6.0 * pb);
        assert_eq!(method_costs(Method::FedAu, &i).comm_bytes.value, 16.0);
        assert!(method_costs(Method::FedAu, &i).comp_flops.negligible);
        assert_eq!(method_costs(Method::PufRegular, &i).comm_bytes.value, 2.0 * pb * 4.0);
        assert_eq!(method_costs(Method::PufSpecial, &i).comp_flops.value, 35.0);
    }

    #[test]
    fn retrain_ratio_is_one_and_halving_doubles() {
        let r = cost_report(&small(), &[(Method::Retrain, 5.0), (Method::MoDe, 0.0)]).unwrap();
        let retrain = &r.methods[0];
        assert_eq!(retrain.recovery_rounds, 0.0);
        for ratio in [retrain.ratios.comm, retrain.ratios.comp, retrain.ratios.storage] {
            assert_eq!(ratio, Ratio::Finite(1.0));
        }
        assert_eq!(r.methods[1].ratios.storage, Ratio::Finite(0.5));

        let mut half = retrain.total;
        half.comm_bytes.value /= 2.0;
        let ratios = improvement_ratios(&half, &retrain.total).unwrap();
        assert_eq!(ratios.comm, Ratio::Finite(2.0));
    }

    #[test]
    fn negligible_cost_gives_unbounded_ratio() {
        let i = CostInputs {
            recovery_rounds: 0.0,
            ..small()
        };
        let r = cost_report(&i, &[(Method::Not, 0.0)]).unwrap();
        assert_eq!(r.methods[0].ratios.comm, Ratio::Unbounded);
        assert!(r.methods[0].total.comm_bytes.negligible);
        assert_eq!(r.methods[0].ratios.comm.display(), "—");
    }

    #[test]
    fn ratio_display() {
        assert_eq!(Ratio::Finite(16.43).display(), "16.4×");
        assert_eq!(Ratio::Finite(0.5).display(), "0.5×");
        assert_eq!(Ratio::Finite(1.0 / 11.0).display(), "0.0909×");
        assert_eq!(Ratio::Finite(0.0005).display(), "0.000500×");
    }

    #[test]
    fn invalid_inputs() {
        let bad = CostInputs {
            params: -1.0,
            ..small()
        };
        assert!(cost_report(&bad, &[]).is_err());
        let bad = CostInputs {
            unlearn_clients: 9.0,
            ..small()
        };
        assert!(bad.validate().is_err());
    }
}
