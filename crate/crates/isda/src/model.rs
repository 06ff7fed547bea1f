//! Terminal types, their inner states and the per-slot evolution rules.
//!
//! Three QoS classes are modeled: age-of-information sources, inter-delivery
//! terminals powered by energy harvesting, and throughput (queue) terminals.
//! All state counters are integral; costs come out as a [`Real`] scalar.
//!
//! Intra-slot ordering is fixed: arrivals realize first, policies and
//! eligibility are evaluated on the post-arrival view, then contention and
//! the data slot happen, then the state evolves and the cost is sampled from
//! the post-update state.

use crate::num::Real;

/// QoS class of a terminal. Immutable over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    /// Status-update source minimizing age of information.
    Aoi,
    /// Energy-harvesting terminal minimizing inter-delivery time.
    IdtEh,
    /// Throughput terminal minimizing queue length.
    Queue,
}

/// Inner state of an AoI terminal: the age of the buffered packet (if any)
/// and the age of information at the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AoiState {
    /// Age of the single buffered packet; `None` when the buffer is empty.
    pub buffered_age: Option<u32>,
    /// AoI at the destination, tracked via receiver feedback.
    pub destination_aoi: u32,
}

/// Inner state of an inter-delivery / energy-harvesting terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdtEhState {
    /// Slots elapsed since the last successful delivery.
    pub elapsed_since_delivery: u32,
    /// Energy packets currently buffered.
    pub energy_level: u32,
    /// Energy buffer capacity B.
    pub energy_capacity: u32,
}

/// Inner state of a throughput terminal: the FCFS queue length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueState {
    pub queue_length: u32,
}

/// Tagged union over the three per-terminal states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerState {
    Aoi(AoiState),
    IdtEh(IdtEhState),
    Queue(QueueState),
}

/// Static description of one terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalConfig<F: Real> {
    pub kind: TerminalKind,
    /// Bernoulli data arrival probability per slot. Unused for IdtEh
    /// terminals, which always have fresh data to deliver.
    pub data_arrival_rate: F,
    /// Bernoulli energy arrival probability per slot (IdtEh only).
    pub energy_arrival_rate: Option<F>,
    /// Energy buffer size B (IdtEh only).
    pub energy_capacity: Option<u32>,
    /// Weight of this terminal's objective in the shared cost.
    pub weight: F,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{field}: rate must lie in [0, 1]")]
    RateOutOfRange { field: &'static str },
    #[error("weight must be nonnegative and finite")]
    BadWeight,
    #[error("energy fields must be present iff kind is idt_eh")]
    EnergyFieldMismatch,
    #[error("energy_capacity must be >= 1")]
    ZeroCapacity,
}

impl<F: Real> TerminalConfig<F> {
    pub fn aoi(data_arrival_rate: F, weight: F) -> Self {
        Self {
            kind: TerminalKind::Aoi,
            data_arrival_rate,
            energy_arrival_rate: None,
            energy_capacity: None,
            weight,
        }
    }

    pub fn queue(data_arrival_rate: F, weight: F) -> Self {
        Self {
            kind: TerminalKind::Queue,
            data_arrival_rate,
            energy_arrival_rate: None,
            energy_capacity: None,
            weight,
        }
    }

    pub fn idt_eh(energy_arrival_rate: F, energy_capacity: u32, weight: F) -> Self {
        Self {
            kind: TerminalKind::IdtEh,
            data_arrival_rate: F::zero(),
            energy_arrival_rate: Some(energy_arrival_rate),
            energy_capacity: Some(energy_capacity),
            weight,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |v: F, field: &'static str| {
            if v >= F::zero() && v <= F::one() {
                Ok(())
            } else {
                Err(ConfigError::RateOutOfRange { field })
            }
        };
        unit(self.data_arrival_rate, "data_arrival_rate")?;
        if !(self.weight >= F::zero()) || !self.weight.is_finite() {
            return Err(ConfigError::BadWeight);
        }
        match self.kind {
            TerminalKind::IdtEh => {
                let rate = self
                    .energy_arrival_rate
                    .ok_or(ConfigError::EnergyFieldMismatch)?;
                unit(rate, "energy_arrival_rate")?;
                let cap = self.energy_capacity.ok_or(ConfigError::EnergyFieldMismatch)?;
                if cap == 0 {
                    return Err(ConfigError::ZeroCapacity);
                }
            }
            _ => {
                if self.energy_arrival_rate.is_some() || self.energy_capacity.is_some() {
                    return Err(ConfigError::EnergyFieldMismatch);
                }
            }
        }
        Ok(())
    }
}

/// Empty-system starting state: h=1 with an empty buffer, d=1 with an empty
/// energy buffer, q=0.
pub fn initial_state<F: Real>(config: &TerminalConfig<F>) -> InnerState {
    match config.kind {
        TerminalKind::Aoi => InnerState::Aoi(AoiState {
            buffered_age: None,
            destination_aoi: 1,
        }),
        TerminalKind::IdtEh => InnerState::IdtEh(IdtEhState {
            elapsed_since_delivery: 1,
            energy_level: 0,
            energy_capacity: config.energy_capacity.expect("validated IdtEh config"),
        }),
        TerminalKind::Queue => InnerState::Queue(QueueState { queue_length: 0 }),
    }
}

impl AoiState {
    /// Post-arrival view of the state within a slot. A fresh packet has age 1
    /// and replaces anything buffered; a packet that is already as stale as
    /// the destination's information (only possible while h = 1) is dropped,
    /// since delivering it cannot reduce the AoI.
    pub fn after_arrival(self, new_arrival: bool) -> AoiState {
        if new_arrival {
            AoiState {
                buffered_age: if self.destination_aoi > 1 { Some(1) } else { None },
                destination_aoi: self.destination_aoi,
            }
        } else {
            self
        }
    }
}

impl IdtEhState {
    /// Post-arrival view: one harvested unit joins the buffer, capped at B.
    pub fn after_arrival(self, energy_arrival: bool) -> IdtEhState {
        IdtEhState {
            energy_level: (self.energy_level + u32::from(energy_arrival)).min(self.energy_capacity),
            ..self
        }
    }
}

impl QueueState {
    pub fn after_arrival(self, new_arrival: bool) -> QueueState {
        QueueState {
            queue_length: self.queue_length + u32::from(new_arrival),
        }
    }
}

impl InnerState {
    /// Post-arrival view used for policy evaluation and eligibility. The
    /// arrival flag means a data arrival for AoI/Queue terminals and an
    /// energy arrival for IdtEh terminals.
    pub fn after_arrival(self, arrival: bool) -> InnerState {
        match self {
            InnerState::Aoi(s) => InnerState::Aoi(s.after_arrival(arrival)),
            InnerState::IdtEh(s) => InnerState::IdtEh(s.after_arrival(arrival)),
            InnerState::Queue(s) => InnerState::Queue(s.after_arrival(arrival)),
        }
    }
}

/// One-slot AoI evolution: h' = h + 1 - x (h - a), with arrival processing
/// first and the buffer emptied on delivery.
///
/// Panics if `delivered` is set while the (post-arrival) buffer is empty.
pub fn step_aoi(s: AoiState, new_arrival: bool, delivered: bool) -> AoiState {
    let s = s.after_arrival(new_arrival);
    if delivered {
        let age = s
            .buffered_age
            .expect("delivery requires a buffered packet");
        AoiState {
            buffered_age: None,
            destination_aoi: age + 1,
        }
    } else {
        AoiState {
            buffered_age: s.buffered_age.map(|a| a + 1),
            destination_aoi: s.destination_aoi + 1,
        }
    }
}

/// One-slot inter-delivery / energy evolution: d' = d + 1 - x d, and
/// e' = min(e + arrival - consumed, B) where one energy unit is consumed
/// whenever the terminal transmitted in the data slot (collisions included).
///
/// Panics if the terminal transmitted without energy for it.
pub fn step_idt_eh(
    s: IdtEhState,
    energy_arrival: bool,
    transmitted: bool,
    delivered: bool,
) -> IdtEhState {
    assert!(!delivered || transmitted, "delivery implies transmission");
    let available = s.after_arrival(energy_arrival).energy_level;
    assert!(
        !transmitted || available >= 1,
        "transmission requires at least one energy packet"
    );
    let net = s.energy_level + u32::from(energy_arrival) - u32::from(transmitted);
    IdtEhState {
        elapsed_since_delivery: if delivered { 1 } else { s.elapsed_since_delivery + 1 },
        energy_level: net.min(s.energy_capacity),
        energy_capacity: s.energy_capacity,
    }
}

/// One-slot queue evolution: q' = max(q + arrival - x, 0).
///
/// Panics if `delivered` is set while the post-arrival queue is empty.
pub fn step_queue(s: QueueState, new_arrival: bool, delivered: bool) -> QueueState {
    let q = s.after_arrival(new_arrival).queue_length;
    assert!(
        !delivered || q >= 1,
        "delivery requires a queued packet"
    );
    QueueState {
        queue_length: q - u32::from(delivered),
    }
}

/// The instantaneous cost whose time average is each terminal's objective:
/// h for AoI, d for inter-delivery, q for queue length.
pub fn instantaneous_cost<F: Real>(s: &InnerState) -> F {
    match s {
        InnerState::Aoi(s) => F::from_u32_(s.destination_aoi),
        InnerState::IdtEh(s) => F::from_u32_(s.elapsed_since_delivery),
        InnerState::Queue(s) => F::from_u32_(s.queue_length),
    }
}

/// Whether the terminal has anything to send and the energy to send it.
pub fn can_transmit(s: &InnerState) -> bool {
    match s {
        InnerState::Aoi(s) => s.buffered_age.is_some(),
        InnerState::IdtEh(s) => s.energy_level >= 1,
        InnerState::Queue(s) => s.queue_length >= 1,
    }
}
