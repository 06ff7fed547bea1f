//! Distributed cross-entropy learning loop.
//!
//! Each terminal keeps a diagonal Gaussian over its own parameter vector.
//! Every iteration runs a block of episodes with freshly sampled parameters,
//! the receiver picks the lowest-cost elite episodes on the shared weighted
//! cost and broadcasts the index set, and each terminal refits its Gaussian
//! to its own samples at those indices, with a decreasing variance floor
//! z_{m+1} = z0 / (m+1) to avoid premature convergence.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::mac::{EpisodeRecord, MacError, Scenario};
use crate::num::Real;
use crate::policy::{NetShape, NnPolicyBundle, PolicyParams};
use crate::rng::{episode_rng, eval_rng, iteration_env_rng};

/// Per-component Gaussian over one terminal's parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDistribution<F: Real> {
    pub mean: Vec<F>,
    pub variance: Vec<F>,
}

impl<F: Real> ParamDistribution<F> {
    pub fn isotropic(len: usize, mean: F, variance: F) -> Self {
        Self { mean: vec![mean; len], variance: vec![variance; len] }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Hyperparameters of the episodic CE loop.
#[derive(Debug, Clone, PartialEq)]
pub struct CeHyperparams<F: Real> {
    /// Slots per episode (T_epi).
    pub episode_length: usize,
    /// Episodes per evaluation iteration (M_fb).
    pub episodes_per_iteration: usize,
    /// Elite selection ratio (rho).
    pub elite_fraction: F,
    /// Initial noise variance z0 of the decreasing-noise schedule.
    pub initial_noise: F,
    /// Number of evaluation iterations (M).
    pub iterations: usize,
    /// Episodes used to evaluate the mean-parameter policy for the trace.
    pub eval_episodes: usize,
    pub init_mean: F,
    pub init_variance: F,
}

impl<F: Real> CeHyperparams<F> {
    pub fn elite_count(&self) -> usize {
        (self.elite_fraction.to_f64_() * self.episodes_per_iteration as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<(), CeError> {
        if self.episode_length == 0 {
            return Err(CeError::EmptyEpisode);
        }
        if self.elite_fraction <= F::zero()
            || self.elite_fraction > F::one()
            || self.elite_count() == 0
        {
            return Err(CeError::EmptyEliteSet);
        }
        if !(self.initial_noise >= F::zero()) {
            return Err(CeError::NegativeNoise);
        }
        if !(self.init_variance >= F::zero()) {
            return Err(CeError::NegativeVariance);
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CeError {
    #[error("elite set is empty: floor(rho * M_fb) must be >= 1")]
    EmptyEliteSet,
    #[error("episode length must be >= 1")]
    EmptyEpisode,
    #[error("initial noise must be nonnegative")]
    NegativeNoise,
    #[error("initial variance must be nonnegative")]
    NegativeVariance,
    #[error("parameter lengths differ across elite samples")]
    EliteLengthMismatch,
    #[error(transparent)]
    Mac(#[from] MacError),
}

/// One row of the training trace, recorded per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<F: Real> {
    /// 1-based iteration index.
    pub iteration: usize,
    /// Average weighted cost over the iteration's sampled episodes.
    pub mean_sampled_cost: F,
    /// Average weighted cost over the elite episodes.
    pub elite_mean_cost: F,
    /// Weighted cost of the mean-parameter policy after the update.
    pub eval_cost: F,
    /// Per-terminal average costs of the mean-parameter evaluation.
    pub per_terminal_eval: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace<F: Real> {
    pub records: Vec<IterationRecord<F>>,
}

impl<F: Real> Default for TrainingTrace<F> {
    fn default() -> Self {
        Self { records: Vec::new() }
    }
}

/// Draw one parameter vector: mean + sqrt(variance) * standard normal,
/// componentwise.
pub fn sample_params<F: Real, R: Rng>(dist: &ParamDistribution<F>, rng: &mut R) -> PolicyParams<F> {
    let values = dist
        .mean
        .iter()
        .zip(&dist.variance)
        .map(|(&m, &v)| {
            let z: f64 = StandardNormal.sample(rng);
            m + v.sqrt() * F::from_f64_(z)
        })
        .collect();
    PolicyParams::new(values)
}

/// Indices of the floor(rho * M_fb) lowest costs, ties broken by lower
/// episode index. All objectives are minimizations.
pub fn select_elites<F: Real>(costs: &[F], elite_fraction: F) -> Result<Vec<usize>, CeError> {
    let count = (elite_fraction.to_f64_() * costs.len() as f64).floor() as usize;
    if count == 0 {
        return Err(CeError::EmptyEliteSet);
    }
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| {
        costs[a]
            .partial_cmp(&costs[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(count);
    order.sort_unstable();
    Ok(order)
}

/// Refit the Gaussian to the elite samples: componentwise mean, population
/// variance plus the decreasing noise z_{m+1} = z0 / (m+1), where `m` is the
/// 0-based iteration index of the update.
pub fn update_distribution<F: Real>(
    elite_params: &[PolicyParams<F>],
    initial_noise: F,
    iteration: usize,
) -> Result<ParamDistribution<F>, CeError> {
    let first = elite_params.first().ok_or(CeError::EmptyEliteSet)?;
    let len = first.len();
    if elite_params.iter().any(|p| p.len() != len) {
        return Err(CeError::EliteLengthMismatch);
    }
    let count = F::from_usize_(elite_params.len());
    let mut mean = vec![F::zero(); len];
    for p in elite_params {
        for (m, &v) in mean.iter_mut().zip(&p.values) {
            *m = *m + v;
        }
    }
    for m in mean.iter_mut() {
        *m = *m / count;
    }
    let noise = initial_noise / F::from_usize_(iteration + 1);
    let mut variance = vec![noise; len];
    for p in elite_params {
        for (j, &v) in p.values.iter().enumerate() {
            let d = v - mean[j];
            variance[j] = variance[j] + d * d / count;
        }
    }
    Ok(ParamDistribution { mean, variance })
}

/// An episodic environment the CE loop can optimize over: a fixed number of
/// agents, a parameter length per agent, and a cost per episode.
pub trait EpisodeEnv<F: Real>: Sync {
    fn param_lens(&self) -> Vec<usize>;

    /// Run one episode with the given per-agent parameters. The rng is the
    /// episode's private stream.
    fn run(
        &self,
        params: &[PolicyParams<F>],
        rng: &mut ChaCha8Rng,
    ) -> Result<EpisodeRecord<F>, MacError>;
}

/// The real simulator as a CE environment.
#[derive(Debug, Clone)]
pub struct SimEnv<F: Real> {
    pub scenario: Scenario<F>,
    pub hidden_dim: usize,
    pub norm: F,
    pub episode_length: usize,
}

impl<F: Real> SimEnv<F> {
    pub fn shapes(&self) -> Vec<NetShape> {
        self.scenario
            .terminals
            .iter()
            .map(|t| NetShape::for_kind(t.kind, self.hidden_dim))
            .collect()
    }

    pub fn bundle(&self, params: Vec<PolicyParams<F>>) -> Result<NnPolicyBundle<F>, MacError> {
        let kinds: Vec<_> = self.scenario.terminals.iter().map(|t| t.kind).collect();
        NnPolicyBundle::new(&kinds, self.hidden_dim, self.norm, params)
    }
}

impl<F: Real> EpisodeEnv<F> for SimEnv<F> {
    fn param_lens(&self) -> Vec<usize> {
        self.shapes().iter().map(|s| s.param_count()).collect()
    }

    fn run(
        &self,
        params: &[PolicyParams<F>],
        rng: &mut ChaCha8Rng,
    ) -> Result<EpisodeRecord<F>, MacError> {
        let bundle = self.bundle(params.to_vec())?;
        crate::mac::run_episode(&self.scenario, &bundle, self.episode_length, rng)
    }
}

/// Outcome of a full training run.
#[derive(Debug, Clone)]
pub struct TrainResult<F: Real> {
    /// Distributions after the last iteration.
    pub distributions: Vec<ParamDistribution<F>>,
    /// Distributions of the iteration whose mean-parameter policy evaluated
    /// best, with its 1-based index. Falls back to the final iteration when
    /// evaluation is disabled.
    pub best_distributions: Vec<ParamDistribution<F>>,
    pub best_iteration: usize,
    pub trace: TrainingTrace<F>,
}

impl<F: Real> TrainResult<F> {
    /// Mean-parameter policy of each terminal's final distribution.
    pub fn mean_params(&self) -> Vec<PolicyParams<F>> {
        self.distributions
            .iter()
            .map(|d| PolicyParams::new(d.mean.clone()))
            .collect()
    }

    /// Mean-parameter policy of the best-evaluated iteration.
    pub fn best_mean_params(&self) -> Vec<PolicyParams<F>> {
        self.best_distributions
            .iter()
            .map(|d| PolicyParams::new(d.mean.clone()))
            .collect()
    }
}

fn evaluate_mean<F: Real, E: EpisodeEnv<F>>(
    env: &E,
    dists: &[ParamDistribution<F>],
    seed: u64,
    iteration: usize,
    eval_episodes: usize,
) -> Result<(F, Vec<F>), CeError> {
    let params: Vec<PolicyParams<F>> = dists
        .iter()
        .map(|d| PolicyParams::new(d.mean.clone()))
        .collect();
    let records: Vec<EpisodeRecord<F>> = (0..eval_episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = eval_rng(seed, iteration, e);
            env.run(&params, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let count = F::from_usize_(records.len().max(1));
    let mut weighted = F::zero();
    let mut per_terminal = vec![F::zero(); records.first().map_or(0, |r| r.per_terminal_avg_cost.len())];
    for r in &records {
        weighted = weighted + r.weighted_cost / count;
        for (p, &c) in per_terminal.iter_mut().zip(&r.per_terminal_avg_cost) {
            *p = *p + c / count;
        }
    }
    Ok((weighted, per_terminal))
}

/// Run the full CE loop: `iterations` rounds of M_fb episodes, global elite
/// selection on the weighted cost, and a per-terminal refit. Episodes run in
/// parallel; results are bit-identical regardless of thread count because
/// each episode owns a stream derived from (seed, iteration, episode).
pub fn train<F: Real, E: EpisodeEnv<F>>(
    env: &E,
    hyper: &CeHyperparams<F>,
    seed: u64,
) -> Result<TrainResult<F>, CeError> {
    hyper.validate()?;
    let lens = env.param_lens();
    let mut dists: Vec<ParamDistribution<F>> = lens
        .iter()
        .map(|&l| ParamDistribution::isotropic(l, hyper.init_mean, hyper.init_variance))
        .collect();
    let mut trace = TrainingTrace::default();
    let mut best: Option<(F, usize, Vec<ParamDistribution<F>>)> = None;

    for m in 0..hyper.iterations {
        // Parameters are episode-private; the environment realization is
        // shared across the iteration (common random numbers), so the elite
        // selection compares parameters on identical arrival sequences.
        let env_rng = iteration_env_rng(seed, m);
        let episodes: Vec<(Vec<PolicyParams<F>>, EpisodeRecord<F>)> = (0..hyper
            .episodes_per_iteration)
            .into_par_iter()
            .map(|e| {
                let mut param_rng = episode_rng(seed, m, e);
                let params: Vec<PolicyParams<F>> =
                    dists.iter().map(|d| sample_params(d, &mut param_rng)).collect();
                let record = env.run(&params, &mut env_rng.clone())?;
                Ok((params, record))
            })
            .collect::<Result<_, MacError>>()?;

        let costs: Vec<F> = episodes.iter().map(|(_, r)| r.weighted_cost).collect();
        let elites = select_elites(&costs, hyper.elite_fraction)?;

        let mean_sampled_cost =
            costs.iter().fold(F::zero(), |a, &c| a + c) / F::from_usize_(costs.len());
        let elite_mean_cost = elites
            .iter()
            .fold(F::zero(), |a, &i| a + costs[i])
            / F::from_usize_(elites.len());

        // Each terminal refits from its own samples at the broadcast indices.
        for (agent, dist) in dists.iter_mut().enumerate() {
            let elite_params: Vec<PolicyParams<F>> = elites
                .iter()
                .map(|&i| episodes[i].0[agent].clone())
                .collect();
            *dist = update_distribution(&elite_params, hyper.initial_noise, m)?;
        }

        let (eval_cost, per_terminal_eval) = if hyper.eval_episodes > 0 {
            evaluate_mean(env, &dists, seed, m, hyper.eval_episodes)?
        } else {
            (F::nan(), Vec::new())
        };

        // The refit mean keeps moving under the sampling noise, so remember
        // the iterate whose mean policy evaluated best rather than trusting
        // the last one.
        if eval_cost.is_finite()
            && best.as_ref().is_none_or(|(c, _, _)| eval_cost < *c)
        {
            best = Some((eval_cost, m + 1, dists.clone()));
        }

        trace.records.push(IterationRecord {
            iteration: m + 1,
            mean_sampled_cost,
            elite_mean_cost,
            eval_cost,
            per_terminal_eval,
        });
    }

    let (best_iteration, best_distributions) = match best {
        Some((_, it, d)) => (it, d),
        None => (hyper.iterations, dists.clone()),
    };
    Ok(TrainResult { distributions: dists, best_distributions, best_iteration, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn degenerate_gaussian_is_deterministic() {
        let dist = ParamDistribution { mean: vec![1.0, -2.0], variance: vec![0.0, 0.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_params(&dist, &mut rng).values, vec![1.0, -2.0]);
    }

    #[test]
    fn sample_statistics_match_standard_normal() {
        let dist = ParamDistribution::isotropic(1, 0.0f64, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_params(&dist, &mut rng).values[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean = {mean}");
        assert!((var - 1.0).abs() < 0.1, "var = {var}");
    }

    #[test]
    fn elite_selection_examples() {
        assert_eq!(select_elites(&[5.0, 1.0, 3.0, 2.0], 0.5).unwrap(), vec![1, 3]);
        assert_eq!(select_elites(&[2.0, 2.0, 2.0], 0.34).unwrap(), vec![0]);
        assert!(select_elites(&[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn elite_selection_matches_sort_oracle() {
        let costs: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64).collect();
        let selected = select_elites(&costs, 0.1).unwrap();
        let mut oracle: Vec<usize> = (0..costs.len()).collect();
        oracle.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
        let mut oracle: Vec<usize> = oracle[..10].to_vec();
        oracle.sort_unstable();
        assert_eq!(selected, oracle);
    }

    #[test]
    fn elite_selection_scale_invariant() {
        let costs = vec![4.0, 9.0, 1.0, 7.0, 3.0, 8.0, 2.0, 6.0, 5.0, 0.5];
        let base = select_elites(&costs, 0.3).unwrap();
        let scaled: Vec<f64> = costs.iter().map(|c| c * 17.5).collect();
        assert_eq!(base, select_elites(&scaled, 0.3).unwrap());
    }

    #[test]
    fn update_examples() {
        let p = |v: &[f64]| PolicyParams::new(v.to_vec());
        let d = update_distribution(&[p(&[1.0, 2.0]), p(&[3.0, 4.0])], 0.0, 0).unwrap();
        assert_eq!(d.mean, vec![2.0, 3.0]);
        assert_eq!(d.variance, vec![1.0, 1.0]);

        let d = update_distribution(&[p(&[7.0])], 1.0, 1).unwrap();
        assert_eq!(d.mean, vec![7.0]);
        assert_eq!(d.variance, vec![0.5]);

        let d = update_distribution(&[p(&[2.0]), p(&[2.0])], 0.0, 0).unwrap();
        assert_eq!(d.variance, vec![0.0]);
    }

    #[test]
    fn variance_floor_is_exact_on_identical_elites() {
        let p = PolicyParams::new(vec![1.5f64; 4]);
        for m in 0..5 {
            let d = update_distribution(&[p.clone(), p.clone()], 0.8, m).unwrap();
            for &v in &d.variance {
                assert_eq!(v, 0.8 / (m as f64 + 1.0));
            }
        }
    }
}
