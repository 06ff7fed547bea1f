//! Reference schemes: pure-CSMA with a fixed contention probability, and a
//! centralized Whittle-index scheduler for all-AoI populations.

use rand::Rng;

use crate::mac::{run_episode, ConstPolicy, EpisodeRecord, MacError, Scenario};
use crate::model::{initial_state, step_aoi, AoiState, InnerState, TerminalKind};
use crate::num::Real;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BaselineError {
    #[error("whittle index is undefined for arrival rate 0")]
    ZeroArrivalRate,
    #[error("whittle oracle requires all-AoI terminals, terminal {0} is not")]
    NonAoiTerminal(usize),
    #[error(transparent)]
    Mac(#[from] MacError),
}

/// Inputs to the AoI Whittle index: the buffered packet age a, the AoI gap
/// b = h - a, and the known arrival probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhittleInputs<F: Real> {
    pub buffered_age: u32,
    pub aoi_gap: u32,
    pub arrival_rate: F,
}

/// Closed-form AoI Whittle index. Piecewise: for b above the threshold
/// (lambda/2)(a^2 - a) + a the quadratic branch applies, otherwise b / lambda.
pub fn whittle_index<F: Real>(inputs: &WhittleInputs<F>) -> Result<F, BaselineError> {
    let lambda = inputs.arrival_rate;
    if lambda <= F::zero() {
        return Err(BaselineError::ZeroArrivalRate);
    }
    let a = F::from_u32_(inputs.buffered_age);
    let b = F::from_u32_(inputs.aoi_gap);
    let half = F::from_f64_(0.5);
    let threshold = lambda * half * (a * a - a) + a;
    if b > threshold {
        let x = (b + a * (a - F::one()) * half * lambda) / (F::one() - lambda + a * lambda);
        Ok(half * x * x + (F::one() / lambda - half) * x)
    } else {
        Ok(b / lambda)
    }
}

/// Pure-CSMA baseline: every eligible terminal contends with the same fixed
/// probability for `slots` slots.
pub fn run_pure_csma<F: Real, R: Rng>(
    scenario: &Scenario<F>,
    p_const: F,
    slots: usize,
    rng: &mut R,
) -> Result<EpisodeRecord<F>, MacError> {
    run_episode(scenario, &ConstPolicy(p_const), slots, rng)
}

/// Centralized Whittle-index scheduler over an all-AoI population: each slot
/// the largest-index backlogged terminal transmits alone, with no contention
/// and no collisions. Returns the per-terminal average AoI.
pub fn run_whittle_oracle<F: Real, R: Rng>(
    scenario: &Scenario<F>,
    slots: usize,
    rng: &mut R,
) -> Result<Vec<F>, BaselineError> {
    let n = scenario.terminals.len();
    for (i, t) in scenario.terminals.iter().enumerate() {
        if t.kind != TerminalKind::Aoi {
            return Err(BaselineError::NonAoiTerminal(i));
        }
        if t.data_arrival_rate <= F::zero() {
            return Err(BaselineError::ZeroArrivalRate);
        }
    }
    let mut states: Vec<AoiState> = scenario
        .terminals
        .iter()
        .map(|t| match initial_state(t) {
            InnerState::Aoi(s) => s,
            _ => unreachable!(),
        })
        .collect();
    let mut cost_sums = vec![F::zero(); n];

    for _ in 0..slots {
        let arrivals: Vec<bool> = scenario
            .terminals
            .iter()
            .map(|t| rng.random::<f64>() < t.data_arrival_rate.to_f64_())
            .collect();
        let post: Vec<AoiState> = states
            .iter()
            .zip(&arrivals)
            .map(|(s, &a)| s.after_arrival(a))
            .collect();

        // Largest index among backlogged terminals wins; ties go to the
        // lowest terminal index.
        let mut winner: Option<(usize, F)> = None;
        for (i, s) in post.iter().enumerate() {
            if let Some(age) = s.buffered_age {
                let idx = whittle_index(&WhittleInputs {
                    buffered_age: age,
                    aoi_gap: s.destination_aoi - age,
                    arrival_rate: scenario.terminals[i].data_arrival_rate,
                })?;
                if winner.map_or(true, |(_, best)| idx > best) {
                    winner = Some((i, idx));
                }
            }
        }

        for i in 0..n {
            let delivered = winner.map_or(false, |(w, _)| w == i);
            states[i] = step_aoi(states[i], arrivals[i], delivered);
            cost_sums[i] = cost_sums[i] + F::from_u32_(states[i].destination_aoi);
        }
    }

    let t = F::from_usize_(slots.max(1));
    Ok(cost_sums.into_iter().map(|c| c / t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::MacConfig;
    use crate::model::TerminalConfig;
    use crate::rng::baseline_rng;

    fn index(a: u32, b: u32, lambda: f64) -> f64 {
        whittle_index(&WhittleInputs { buffered_age: a, aoi_gap: b, arrival_rate: lambda }).unwrap()
    }

    #[test]
    fn whittle_worked_examples() {
        assert_eq!(index(1, 1, 0.5), 2.0);
        assert_eq!(index(1, 3, 0.5), 9.0);
        assert_eq!(index(1, 1, 1.0), 1.0);
    }

    #[test]
    fn whittle_zero_rate_rejected() {
        assert_eq!(
            whittle_index(&WhittleInputs { buffered_age: 1, aoi_gap: 1, arrival_rate: 0.0 }),
            Err(BaselineError::ZeroArrivalRate)
        );
    }

    fn aoi_scenario(n: usize, lambda: f64) -> Scenario<f64> {
        Scenario {
            terminals: (0..n).map(|_| TerminalConfig::aoi(lambda, 1.0)).collect(),
            mac: MacConfig {
                data_slot_ms: 1.0,
                mini_slot_ms: 0.25,
                mini_slot_count: 3,
                count_overhead_in_time: false,
            },
        }
    }

    #[test]
    fn saturated_oracle_terminal_reaches_fixed_point() {
        let avg = run_whittle_oracle(&aoi_scenario(1, 1.0), 20_000, &mut baseline_rng(5)).unwrap();
        assert!((avg[0] - 2.0).abs() < 1e-3, "{avg:?}");
    }

    #[test]
    fn oracle_rejects_non_aoi() {
        let mut scenario = aoi_scenario(2, 0.5);
        scenario.terminals[1] = TerminalConfig::queue(0.5, 1.0);
        assert_eq!(
            run_whittle_oracle(&scenario, 10, &mut baseline_rng(5)),
            Err(BaselineError::NonAoiTerminal(1))
        );
    }

    #[test]
    fn oracle_beats_pure_csma_on_same_seed() {
        let scenario = aoi_scenario(3, 0.1);
        let oracle = run_whittle_oracle(&scenario, 200_000, &mut baseline_rng(9)).unwrap();
        let csma =
            run_pure_csma(&scenario, 1.0 / 3.0, 200_000, &mut baseline_rng(9)).unwrap();
        let oracle_avg: f64 = oracle.iter().sum::<f64>() / 3.0;
        let csma_avg: f64 = csma.per_terminal_avg_cost.iter().sum::<f64>() / 3.0;
        assert!(oracle_avg < csma_avg, "oracle {oracle_avg} vs csma {csma_avg}");
    }

    #[test]
    fn saturated_csma_terminal_reaches_fixed_point() {
        let scenario = aoi_scenario(1, 1.0);
        let rec = run_pure_csma(&scenario, 1.0, 20_000, &mut baseline_rng(2)).unwrap();
        assert!((rec.per_terminal_avg_cost[0] - 2.0).abs() < 1e-3);
    }
}
