//! Slotted frame simulation: contention mini-slots with carrier-sense
//! deferral, collision resolution in the data slot, ACK/NACK, and episode
//! execution with the weighted episodic cost.

use rand::Rng;

use crate::model::{
    can_transmit, initial_state, instantaneous_cost, step_aoi, step_idt_eh, step_queue,
    InnerState, TerminalConfig, TerminalKind,
};
use crate::num::Real;

/// Frame timing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MacConfig<F: Real> {
    /// Data slot length T_s in ms.
    pub data_slot_ms: F,
    /// Contention mini-slot length delta in ms.
    pub mini_slot_ms: F,
    /// Number of contention mini-slots K per data slot.
    pub mini_slot_count: usize,
    /// When true, elapsed time includes the consumed mini-slots; when false,
    /// a slot counts exactly T_s.
    pub count_overhead_in_time: bool,
}

impl<F: Real> MacConfig<F> {
    pub fn validate(&self) -> Result<(), MacError> {
        if !(self.data_slot_ms > F::zero()) || !(self.mini_slot_ms > F::zero()) {
            return Err(MacError::BadTiming);
        }
        if self.mini_slot_count == 0 {
            return Err(MacError::NoMiniSlots);
        }
        Ok(())
    }
}

/// Result of one contention period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentionOutcome {
    /// No terminal signaled in any mini-slot.
    Idle,
    /// Exactly one terminal signaled in the first active mini-slot.
    Success(usize),
    /// Two or more terminals signaled simultaneously; the data slot is lost.
    Collision(Vec<usize>),
}

/// Contention result plus how many mini-slots elapsed before it resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentionDetail {
    pub outcome: ContentionOutcome,
    pub mini_slots_used: usize,
}

/// Per-episode result: time-averaged cost per terminal, the weighted scalar
/// cost, and elapsed simulated time.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord<F: Real> {
    pub per_terminal_avg_cost: Vec<F>,
    pub weighted_cost: F,
    pub sim_time_ms: F,
}

/// A complete simulated system: the terminal population and frame timing.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<F: Real> {
    pub terminals: Vec<TerminalConfig<F>>,
    pub mac: MacConfig<F>,
}

impl<F: Real> Scenario<F> {
    pub fn validate(&self) -> Result<(), MacError> {
        if self.terminals.is_empty() {
            return Err(MacError::NoTerminals);
        }
        for t in &self.terminals {
            t.validate().map_err(MacError::Terminal)?;
        }
        if self.terminals.iter().all(|t| t.weight == F::zero()) {
            return Err(MacError::AllWeightsZero);
        }
        self.mac.validate()
    }

    pub fn weights(&self) -> Vec<F> {
        self.terminals.iter().map(|t| t.weight).collect()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MacError {
    #[error("probability vector is empty")]
    EmptyProbs,
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("scenario has no terminals")]
    NoTerminals,
    #[error("terminal weights are all zero")]
    AllWeightsZero,
    #[error("slot and mini-slot lengths must be positive")]
    BadTiming,
    #[error("at least one contention mini-slot is required")]
    NoMiniSlots,
    #[error("terminal config invalid: {0}")]
    Terminal(crate::model::ConfigError),
    #[error("terminal {terminal}: parameter vector has length {got}, expected {want}")]
    ParamLength { terminal: usize, got: usize, want: usize },
}

/// Maps a (post-arrival) inner state to a transmission probability.
pub trait TransmitPolicy<F: Real> {
    fn prob(&self, terminal: usize, state: &InnerState) -> F;
}

/// Pure-CSMA: the same constant probability for every terminal.
#[derive(Debug, Clone, Copy)]
pub struct ConstPolicy<F: Real>(pub F);

impl<F: Real> TransmitPolicy<F> for ConstPolicy<F> {
    fn prob(&self, _terminal: usize, _state: &InnerState) -> F {
        self.0
    }
}

/// One contention period: in each of K mini-slots, every still-silent
/// eligible terminal signals independently with its probability. The first
/// mini-slot with at least one signal ends contention; the signaling set
/// proceeds to the data slot and everyone else defers by carrier sense.
pub fn contention_round_detailed<F: Real, R: Rng>(
    probs: &[F],
    eligible: &[bool],
    mini_slots: usize,
    rng: &mut R,
) -> Result<ContentionDetail, MacError> {
    if probs.is_empty() {
        return Err(MacError::EmptyProbs);
    }
    if probs.len() != eligible.len() {
        return Err(MacError::LengthMismatch { left: probs.len(), right: eligible.len() });
    }
    // One uniform per terminal per mini-slot is always consumed, so the
    // stream position after a slot is independent of state and policy. This
    // keeps episodes sharing an environment stream perfectly coupled.
    let mut resolved: Option<ContentionDetail> = None;
    for k in 1..=mini_slots {
        let mut signaled = Vec::new();
        for (i, &p) in probs.iter().enumerate() {
            let u = rng.random::<f64>();
            if resolved.is_none() && eligible[i] && u < p.to_f64_() {
                signaled.push(i);
            }
        }
        if resolved.is_none() && !signaled.is_empty() {
            let outcome = if signaled.len() == 1 {
                ContentionOutcome::Success(signaled[0])
            } else {
                ContentionOutcome::Collision(signaled)
            };
            resolved = Some(ContentionDetail { outcome, mini_slots_used: k });
        }
    }
    Ok(resolved.unwrap_or(ContentionDetail {
        outcome: ContentionOutcome::Idle,
        mini_slots_used: mini_slots,
    }))
}

pub fn contention_round<F: Real, R: Rng>(
    probs: &[F],
    eligible: &[bool],
    mini_slots: usize,
    rng: &mut R,
) -> Result<ContentionOutcome, MacError> {
    contention_round_detailed(probs, eligible, mini_slots, rng).map(|d| d.outcome)
}

/// Result of one full slot: delivery flags (from the error-free ACK/NACK),
/// transmission flags, and the raw contention outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotResult {
    pub delivered: Vec<bool>,
    pub transmitted: Vec<bool>,
    pub outcome: ContentionOutcome,
    pub mini_slots_used: usize,
}

/// Run contention for one slot over the post-arrival states. Only a lone
/// winner delivers; a collision loses the data slot for all involved.
pub fn run_slot<F: Real, R: Rng>(
    post_arrival: &[InnerState],
    probs: &[F],
    mini_slots: usize,
    rng: &mut R,
) -> Result<SlotResult, MacError> {
    let eligible: Vec<bool> = post_arrival.iter().map(can_transmit).collect();
    let detail = contention_round_detailed(probs, &eligible, mini_slots, rng)?;
    let n = post_arrival.len();
    let mut delivered = vec![false; n];
    let mut transmitted = vec![false; n];
    match &detail.outcome {
        ContentionOutcome::Idle => {}
        ContentionOutcome::Success(i) => {
            delivered[*i] = true;
            transmitted[*i] = true;
        }
        ContentionOutcome::Collision(set) => {
            for &i in set {
                transmitted[i] = true;
            }
        }
    }
    Ok(SlotResult {
        delivered,
        transmitted,
        outcome: detail.outcome,
        mini_slots_used: detail.mini_slots_used,
    })
}

/// Weighted episodic cost: the dot product of per-terminal averages and
/// terminal weights.
pub fn weighted_cost<F: Real>(avg_costs: &[F], weights: &[F]) -> Result<F, MacError> {
    if avg_costs.len() != weights.len() {
        return Err(MacError::LengthMismatch { left: avg_costs.len(), right: weights.len() });
    }
    Ok(avg_costs
        .iter()
        .zip(weights)
        .fold(F::zero(), |acc, (&c, &w)| acc + c * w))
}

/// Run one episode of `t_epi` slots from the empty-system start and return
/// time-averaged per-terminal costs plus the weighted cost.
pub fn run_episode<F: Real, P: TransmitPolicy<F>, R: Rng>(
    scenario: &Scenario<F>,
    policy: &P,
    t_epi: usize,
    rng: &mut R,
) -> Result<EpisodeRecord<F>, MacError> {
    let n = scenario.terminals.len();
    if n == 0 {
        return Err(MacError::NoTerminals);
    }
    let mut states: Vec<InnerState> =
        scenario.terminals.iter().map(initial_state).collect();
    let mut cost_sums = vec![F::zero(); n];
    let mut mini_slots_total = 0usize;

    for _ in 0..t_epi {
        // 1. Arrivals realize (data for AoI/Queue, energy for IdtEh).
        let arrivals: Vec<bool> = scenario
            .terminals
            .iter()
            .map(|t| {
                let rate = match t.kind {
                    TerminalKind::IdtEh => t.energy_arrival_rate.expect("validated"),
                    _ => t.data_arrival_rate,
                };
                rng.random::<f64>() < rate.to_f64_()
            })
            .collect();

        // 2. Policies see the post-arrival view.
        let post_arrival: Vec<InnerState> = states
            .iter()
            .zip(&arrivals)
            .map(|(s, &a)| s.after_arrival(a))
            .collect();
        let probs: Vec<F> = post_arrival
            .iter()
            .enumerate()
            .map(|(i, s)| policy.prob(i, s))
            .collect();

        // 3. Contention and data slot.
        let slot = run_slot(&post_arrival, &probs, scenario.mac.mini_slot_count, rng)?;
        mini_slots_total += slot.mini_slots_used;

        // 4. State evolution, then cost sampled from the post-update state.
        for i in 0..n {
            states[i] = match states[i] {
                InnerState::Aoi(s) => {
                    InnerState::Aoi(step_aoi(s, arrivals[i], slot.delivered[i]))
                }
                InnerState::IdtEh(s) => InnerState::IdtEh(step_idt_eh(
                    s,
                    arrivals[i],
                    slot.transmitted[i],
                    slot.delivered[i],
                )),
                InnerState::Queue(s) => {
                    InnerState::Queue(step_queue(s, arrivals[i], slot.delivered[i]))
                }
            };
            cost_sums[i] = cost_sums[i] + instantaneous_cost::<F>(&states[i]);
        }
    }

    let t = F::from_usize_(t_epi.max(1));
    let per_terminal_avg_cost: Vec<F> = cost_sums.iter().map(|&c| c / t).collect();
    let weighted = weighted_cost(&per_terminal_avg_cost, &scenario.weights())?;
    let slots_ms = F::from_usize_(t_epi) * scenario.mac.data_slot_ms;
    let sim_time_ms = if scenario.mac.count_overhead_in_time {
        slots_ms + F::from_usize_(mini_slots_total) * scenario.mac.mini_slot_ms
    } else {
        slots_ms
    };
    Ok(EpisodeRecord { per_terminal_avg_cost, weighted_cost: weighted, sim_time_ms })
}
