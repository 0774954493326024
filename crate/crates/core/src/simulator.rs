//! Reproducible Monte Carlo engine for the treatment-selection game.
//!
//! Replications are mutually independent and each draws from its own
//! counter-derived stream (see [`crate::rng`]), so estimates are
//! bit-identical for a given master seed no matter how many threads run
//! them. Win-probability estimation samples the per-agent statistics from
//! their exact sampling distributions (a Normal sample mean is Normal, a
//! Poisson sample mean is a scaled Poisson total by superposition), which
//! is distribution-identical to per-unit simulation at a fraction of the
//! cost; [`run_game_once`] keeps the full unit-level path.

use crate::asymptotics::{CertMethod, ICCertificate, ICVerdict, Witness};
use crate::interference::InterferenceAlgebra;
use crate::outcome_models::{
    four_cell_rates, sample_assignment, sample_outcomes, two_cell_rates, Action, ActionProfile,
    ActionSpace, Family, ModelError, OutcomeModel,
};
use crate::rng::{tag, StreamTree};
use crate::scoring::{
    apply_transform, compute_statistic, declare_winner, ScoreError, ScoreFunction, Statistic,
    Transform,
};
use crate::stats::binomial_se;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("best-response search needs {cells} cells, over the budget of {budget}")]
    BudgetExceeded { cells: u64, budget: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Interference(#[from] crate::interference::InterferenceError),
}

/// How multi-block scores decide the experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    /// Winner is the agent with the largest sum of per-block scores.
    SummedScores,
    /// Per-block winners first, then the agent winning the most blocks.
    MajorityOfBlocks,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::SummedScores => "summed_scores",
            Aggregation::MajorityOfBlocks => "majority_of_blocks",
        }
    }
}

/// A fully specified experiment scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    model: OutcomeModel,
    score: ScoreFunction,
    spaces: Vec<ActionSpace>,
    m: usize,
    n: usize,
    blocks: usize,
    aggregation: Aggregation,
}

impl Scenario {
    pub fn new(
        model: OutcomeModel,
        score: ScoreFunction,
        spaces: Vec<ActionSpace>,
        m: usize,
        n: usize,
        blocks: usize,
        aggregation: Aggregation,
    ) -> Result<Self, SimError> {
        if n == 0 || blocks == 0 || m == 0 {
            return Err(SimError::InvalidDimensions(
                "m, n and blocks must be positive".into(),
            ));
        }
        if spaces.len() != n {
            return Err(SimError::InvalidDimensions(format!(
                "{} action spaces for {n} agents",
                spaces.len()
            )));
        }
        if !m.is_multiple_of(n * blocks) {
            return Err(SimError::InvalidDimensions(format!(
                "m = {m} is not divisible by n * blocks = {}",
                n * blocks
            )));
        }
        if spaces.iter().any(|s| s.family() != model.family()) {
            return Err(SimError::Model(ModelError::FamilyMismatch {
                family: model.family(),
            }));
        }
        if model.family().is_interference() {
            if n != 2 {
                return Err(SimError::Model(ModelError::UnsupportedAgentCount(n)));
            }
            if blocks != 1 {
                return Err(SimError::InvalidDimensions(
                    "interference designs use a single block".into(),
                ));
            }
        }
        if model.family() == Family::PoissonInterferenceFourCell && !m.is_multiple_of(4) {
            return Err(SimError::InvalidDimensions(format!(
                "four-cell layout needs m divisible by 4, got {m}"
            )));
        }
        let wants_adjusted = score.statistic == Statistic::SpilloverAdjusted;
        let is_four_cell = model.family() == Family::PoissonInterferenceFourCell;
        if wants_adjusted && !is_four_cell {
            return Err(SimError::InvalidDimensions(
                "spillover_adjusted statistic requires the four-cell family".into(),
            ));
        }
        Ok(Self {
            model,
            score,
            spaces,
            m,
            n,
            blocks,
            aggregation,
        })
    }

    pub fn model(&self) -> &OutcomeModel {
        &self.model
    }

    pub fn score(&self) -> &ScoreFunction {
        &self.score
    }

    pub fn spaces(&self) -> &[ActionSpace] {
        &self.spaces
    }

    pub fn units(&self) -> usize {
        self.m
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    /// Units per agent per block.
    pub fn k(&self) -> usize {
        self.m / (self.n * self.blocks)
    }

    /// The natural action profile, one per block (spaces are shared across
    /// blocks).
    pub fn natural_profiles(&self) -> Vec<ActionProfile> {
        let profile = ActionProfile::new(self.spaces.iter().map(|s| *s.natural()).collect());
        vec![profile; self.blocks]
    }

    fn validate_profiles(&self, profiles: &[ActionProfile]) -> Result<(), SimError> {
        if profiles.len() != self.blocks {
            return Err(SimError::InvalidDimensions(format!(
                "{} per-block profiles for {} blocks",
                profiles.len(),
                self.blocks
            )));
        }
        if profiles.iter().any(|p| p.len() != self.n) {
            return Err(SimError::InvalidDimensions(format!(
                "every profile must list {} actions",
                self.n
            )));
        }
        Ok(())
    }
}

/// Result of one full game replication.
#[derive(Clone, Debug)]
pub struct GameOutcome {
    pub winner: usize,
    /// Aggregated (post-transform) score per agent.
    pub scores: Vec<f64>,
    /// FNV-1a hash of the raw outcome bits, for reproducibility checks.
    pub outcomes_digest: u64,
}

/// Monte Carlo win-probability estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct MCEstimate {
    pub p_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub reps: u64,
    pub seed: u64,
}

fn fnv1a(digest: &mut u64, bytes: &[u8]) {
    const PRIME: u64 = 0x0000_0100_0000_01B3;
    for &b in bytes {
        *digest ^= u64::from(b);
        *digest = digest.wrapping_mul(PRIME);
    }
}

/// Play the game once at the unit level: per block, sample an assignment
/// and per-unit outcomes, compute the statistic, transform it, then
/// aggregate across blocks and declare the winner.
pub fn run_game_once(
    scenario: &Scenario,
    profiles: &[ActionProfile],
    rep: &StreamTree,
) -> Result<GameOutcome, SimError> {
    scenario.validate_profiles(profiles)?;
    let per_block_units = scenario.m / scenario.blocks;
    let mut digest = 0xcbf2_9ce4_8422_2325u64;
    let mut block_scores = Vec::with_capacity(scenario.blocks);
    for (b, profile) in profiles.iter().enumerate() {
        let mut rng = rep.child(tag::BLOCK, b as u64).rng();
        let assignment = match scenario.model.family() {
            // the four-cell design stratifies its block into two groups
            Family::PoissonInterferenceFourCell => {
                sample_assignment(per_block_units, 2, 2, &mut rng)?
            }
            _ => sample_assignment(per_block_units, scenario.n, 1, &mut rng)?,
        };
        let outcomes = sample_outcomes(&scenario.model, &assignment, profile, &mut rng)?;
        for y in &outcomes.y {
            fnv1a(&mut digest, &y.to_bits().to_le_bytes());
        }
        let stats = compute_statistic(&scenario.score, &outcomes, scenario.model.gamma())?;
        let scores: Vec<f64> = stats
            .iter()
            .map(|&t| apply_transform(&scenario.score.transform, t))
            .collect();
        block_scores.push(scores);
    }
    let (winner, scores) = aggregate(&block_scores, scenario.aggregation, rep);
    Ok(GameOutcome {
        winner,
        scores,
        outcomes_digest: digest,
    })
}

/// Aggregate per-block score vectors into a winner.
fn aggregate(
    block_scores: &[Vec<f64>],
    aggregation: Aggregation,
    rep: &StreamTree,
) -> (usize, Vec<f64>) {
    let n = block_scores[0].len();
    match aggregation {
        Aggregation::SummedScores => {
            let totals: Vec<f64> = (0..n)
                .map(|i| block_scores.iter().map(|s| s[i]).sum())
                .collect();
            let mut tie_rng = rep.child(tag::TIE_BREAK, 0).rng();
            (declare_winner(&totals, &mut tie_rng), totals)
        }
        Aggregation::MajorityOfBlocks => {
            let mut blocks_won = vec![0.0f64; n];
            for (b, scores) in block_scores.iter().enumerate() {
                let mut tie_rng = rep.child(tag::TIE_BREAK, 1 + b as u64).rng();
                blocks_won[declare_winner(scores, &mut tie_rng)] += 1.0;
            }
            let mut tie_rng = rep.child(tag::TIE_BREAK, 0).rng();
            (declare_winner(&blocks_won, &mut tie_rng), blocks_won)
        }
    }
}

/// Sampler for one statistic component, at the exact sampling distribution
/// of the underlying cell mean.
#[derive(Clone, Copy, Debug)]
enum MeanSampler {
    Normal(Normal<f64>),
    /// Sum of `count` Poisson units is Pois(count * rate); divide back.
    PoissonMean {
        total: Option<Poisson<f64>>,
        inv_count: f64,
    },
}

impl MeanSampler {
    fn normal(mu: f64, sigma2: f64, count: usize) -> Self {
        MeanSampler::Normal(Normal::new(mu, (sigma2 / count as f64).sqrt()).unwrap())
    }

    fn poisson(rate: f64, count: usize) -> Self {
        let total = (rate > 0.0).then(|| Poisson::new(rate * count as f64).unwrap());
        MeanSampler::PoissonMean {
            total,
            inv_count: 1.0 / count as f64,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            MeanSampler::Normal(d) => d.sample(rng),
            MeanSampler::PoissonMean { total, inv_count } => {
                total.map_or(0.0, |d| d.sample(rng) * inv_count)
            }
        }
    }
}

/// Per-block statistic sampler prepared for a fixed profile.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
enum BlockSampler {
    /// Statistic component per agent, sampled independently.
    PerAgent(Vec<MeanSampler>),
    /// The four cell means of the split design, then either spillover
    /// adjustment or per-agent pooling.
    FourCell {
        cells: [MeanSampler; 4],
        adjusted: Option<Box<InterferenceAlgebra>>,
    },
}

impl BlockSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            BlockSampler::PerAgent(samplers) => samplers.iter().map(|s| s.sample(rng)).collect(),
            BlockSampler::FourCell { cells, adjusted } => {
                let mut y = [0.0; 4];
                for (slot, cell) in y.iter_mut().zip(cells) {
                    *slot = cell.sample(rng);
                }
                match adjusted {
                    Some(alg) => alg.compute_t(y).to_vec(),
                    // pooled per-agent mean over the agent's two equal cells
                    None => vec![(y[0] + y[2]) / 2.0, (y[1] + y[3]) / 2.0],
                }
            }
        }
    }
}

fn prepare_block(scenario: &Scenario, profile: &ActionProfile) -> Result<BlockSampler, SimError> {
    let k = scenario.k();
    match scenario.model.family() {
        Family::NormalMeanVar | Family::NormalCurved => Ok(BlockSampler::PerAgent(
            profile
                .actions
                .iter()
                .map(|a| match *a {
                    Action::NormalMeanVar { mu, sigma2 } => Ok(MeanSampler::normal(mu, sigma2, k)),
                    Action::NormalCurved { mu } => Ok(MeanSampler::normal(mu, mu.powi(4), k)),
                    _ => Err(SimError::Model(ModelError::FamilyMismatch {
                        family: scenario.model.family(),
                    })),
                })
                .collect::<Result<_, _>>()?,
        )),
        Family::PoissonIid => Ok(BlockSampler::PerAgent(
            profile
                .actions
                .iter()
                .map(|a| match *a {
                    Action::PoissonRate { lambda } => Ok(MeanSampler::poisson(lambda, k)),
                    _ => Err(SimError::Model(ModelError::FamilyMismatch {
                        family: scenario.model.family(),
                    })),
                })
                .collect::<Result<_, _>>()?,
        )),
        Family::PoissonInterferenceTwoCell => {
            let rates = two_cell_rates(scenario.model.gamma().unwrap(), &profile.actions);
            Ok(BlockSampler::PerAgent(
                rates.iter().map(|&r| MeanSampler::poisson(r, k)).collect(),
            ))
        }
        Family::PoissonInterferenceFourCell => {
            let rates = four_cell_rates(scenario.model.gamma().unwrap(), &profile.actions);
            let per_cell = scenario.m / 4;
            let cells = [
                MeanSampler::poisson(rates[0], per_cell),
                MeanSampler::poisson(rates[1], per_cell),
                MeanSampler::poisson(rates[2], per_cell),
                MeanSampler::poisson(rates[3], per_cell),
            ];
            let adjusted = match scenario.score.statistic {
                Statistic::SpilloverAdjusted => Some(Box::new(crate::interference::build_algebra(
                    scenario.model.gamma().unwrap(),
                )?)),
                Statistic::SampleMean => None,
            };
            Ok(BlockSampler::FourCell { cells, adjusted })
        }
    }
}

fn winner_of_rep(
    samplers: &[BlockSampler],
    transform: &Transform,
    aggregation: Aggregation,
    rep: &StreamTree,
) -> usize {
    let block_scores: Vec<Vec<f64>> = samplers
        .iter()
        .enumerate()
        .map(|(b, sampler)| {
            let mut rng = rep.child(tag::BLOCK, b as u64).rng();
            sampler
                .sample(&mut rng)
                .into_iter()
                .map(|t| apply_transform(transform, t))
                .collect()
        })
        .collect();
    aggregate(&block_scores, aggregation, rep).0
}

/// Estimate per-agent winning probabilities over `reps` independent
/// replications. Deterministic in `master_seed` regardless of the rayon
/// pool executing it.
///
/// ```
/// use icx_core::{estimate_win_prob, Action, ActionProfile, ActionSpace,
///                Aggregation, Family, OutcomeModel, Scenario,
///                ScoreFunction, Statistic, Transform};
///
/// let model = OutcomeModel::new(Family::PoissonIid, None).unwrap();
/// let space = |l| ActionSpace::new(
///     Family::PoissonIid, vec![Action::poisson_rate(l).unwrap()],
/// ).unwrap();
/// let scenario = Scenario::new(
///     model,
///     ScoreFunction::new(Statistic::SampleMean, Transform::Identity),
///     vec![space(5.0), space(4.0)],
///     100, 2, 1,
///     Aggregation::SummedScores,
/// ).unwrap();
/// let profiles = scenario.natural_profiles();
/// let est = estimate_win_prob(&scenario, &profiles, 10_000, 7).unwrap();
/// assert_eq!(est.p_hat.len(), 2);
/// assert_eq!(est, estimate_win_prob(&scenario, &profiles, 10_000, 7).unwrap());
/// ```
pub fn estimate_win_prob(
    scenario: &Scenario,
    profiles: &[ActionProfile],
    reps: u64,
    master_seed: u64,
) -> Result<MCEstimate, SimError> {
    scenario.validate_profiles(profiles)?;
    if reps == 0 {
        return Err(SimError::InvalidDimensions("reps must be positive".into()));
    }
    let samplers: Vec<BlockSampler> = profiles
        .iter()
        .map(|p| prepare_block(scenario, p))
        .collect::<Result<_, _>>()?;
    let root = StreamTree::new(master_seed);
    let n = scenario.n;
    let tally: Vec<u64> = (0..reps)
        .into_par_iter()
        .fold(
            || vec![0u64; n],
            |mut acc, r| {
                let rep = root.child(tag::REPLICATION, r);
                acc[winner_of_rep(
                    &samplers,
                    &scenario.score.transform,
                    scenario.aggregation,
                    &rep,
                )] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    debug_assert_eq!(tally.iter().sum::<u64>(), reps);
    let p_hat: Vec<f64> = tally.iter().map(|&t| t as f64 / reps as f64).collect();
    let se = p_hat.iter().map(|&p| binomial_se(p, reps)).collect();
    Ok(MCEstimate {
        p_hat,
        se,
        reps,
        seed: master_seed,
    })
}

/// Per-replication winners for `reps` replications of a fixed profile;
/// diagnostic companion to [`estimate_win_prob`] (same streams, same
/// winners).
pub fn simulate_winners(
    scenario: &Scenario,
    profiles: &[ActionProfile],
    reps: u64,
    master_seed: u64,
) -> Result<Vec<usize>, SimError> {
    scenario.validate_profiles(profiles)?;
    let samplers: Vec<BlockSampler> = profiles
        .iter()
        .map(|p| prepare_block(scenario, p))
        .collect::<Result<_, _>>()?;
    let root = StreamTree::new(master_seed);
    Ok((0..reps)
        .into_par_iter()
        .map(|r| {
            winner_of_rep(
                &samplers,
                &scenario.score.transform,
                scenario.aggregation,
                &root.child(tag::REPLICATION, r),
            )
        })
        .collect())
}

/// Options for [`mc_best_response`].
#[derive(Clone, Copy, Debug)]
pub struct BestResponseOptions {
    pub reps_per_cell: u64,
    pub master_seed: u64,
    /// Cap on (own action, opponent profile) cells across all agents.
    pub max_cells: u64,
}

impl Default for BestResponseOptions {
    fn default() -> Self {
        Self {
            reps_per_cell: 100_000,
            master_seed: 0,
            max_cells: 65_536,
        }
    }
}

/// Monte Carlo best-response search: for every agent and every opponent
/// grid profile, estimate the winning probability of each own action and
/// flag deviations that beat the natural action by more than three paired
/// standard errors. Opponent draws are shared across own actions (common
/// random numbers); for the Normal families the own-side noise is shared
/// too.
pub fn mc_best_response(
    scenario: &Scenario,
    opts: &BestResponseOptions,
) -> Result<ICCertificate, SimError> {
    if scenario.blocks != 1 {
        return Err(SimError::InvalidDimensions(
            "best-response search runs on single-block scenarios".into(),
        ));
    }
    let n = scenario.n;
    let spaces = &scenario.spaces;
    let mut cells = 0u64;
    for i in 0..n {
        let opponents: u64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| spaces[j].len() as u64)
            .product();
        cells += spaces[i].len() as u64 * opponents;
    }
    if cells > opts.max_cells {
        return Err(SimError::BudgetExceeded {
            cells,
            budget: opts.max_cells,
        });
    }

    let root = StreamTree::new(opts.master_seed);
    let reps = opts.reps_per_cell;
    let mut witnesses = Vec::new();
    let mut cell_counter = 0u64;
    for agent in 0..n {
        let natural_idx = spaces[agent].natural_index();
        let own_actions = spaces[agent].grid();
        let opponent_lens: Vec<usize> = (0..n)
            .filter(|&j| j != agent)
            .map(|j| spaces[j].len())
            .collect();
        for combo in index_combos(&opponent_lens) {
            let base_profile = ActionProfile::new(
                (0..n)
                    .map(|j| {
                        if j == agent {
                            own_actions[0]
                        } else {
                            let pos = j - usize::from(j > agent);
                            spaces[j].grid()[combo[pos]]
                        }
                    })
                    .collect(),
            );
            let cell_tree = root.child(tag::CELL, cell_counter);
            cell_counter += 1;

            let stats = estimate_own_action_row(
                scenario,
                agent,
                own_actions,
                &base_profile,
                reps,
                &cell_tree,
            )?;
            let p_nat = stats.wins[natural_idx] as f64 / reps as f64;
            for (idx, action) in own_actions.iter().enumerate() {
                if idx == natural_idx {
                    continue;
                }
                let p_dev = stats.wins[idx] as f64 / reps as f64;
                let p_joint = stats.joint_with_natural[idx] as f64 / reps as f64;
                let paired_var = (p_dev * (1.0 - p_dev) + p_nat * (1.0 - p_nat)
                    - 2.0 * (p_joint - p_dev * p_nat))
                    .max(0.0);
                let se = (paired_var / reps as f64).sqrt();
                let diff = p_dev - p_nat;
                if diff > 3.0 * se && diff > 0.0 {
                    let mut profile = base_profile.clone();
                    profile.actions[agent] = *action;
                    witnesses.push(Witness {
                        agent,
                        opponent_profile: profile,
                        deviation: *action,
                        natural: *spaces[agent].natural(),
                        win_prob_deviation: p_dev,
                        win_prob_natural: p_nat,
                    });
                }
            }
        }
    }
    let verdict = if witnesses.is_empty() {
        ICVerdict::Ic
    } else {
        ICVerdict::NotIc
    };
    Ok(ICCertificate {
        design_id: format!("{}/{}", scenario.model.family(), scenario.score.id()),
        verdict,
        witnesses,
        method: CertMethod::MonteCarlo,
        grid_sizes: spaces.iter().map(ActionSpace::len).collect(),
    })
}

struct RowTallies {
    wins: Vec<u64>,
    joint_with_natural: Vec<u64>,
}

/// Estimate win counts for every own action of `agent` against a fixed
/// opponent profile, sharing randomness across own actions where the
/// families permit.
fn estimate_own_action_row(
    scenario: &Scenario,
    agent: usize,
    own_actions: &[Action],
    base_profile: &ActionProfile,
    reps: u64,
    cell_tree: &StreamTree,
) -> Result<RowTallies, SimError> {
    let natural_idx = scenario.spaces[agent].natural_index();
    let n_actions = own_actions.len();

    if scenario.model.family().is_interference() {
        // own action changes the opponent's rates too; sample the full
        // statistic vector per action from its own stream
        let samplers: Vec<BlockSampler> = own_actions
            .iter()
            .map(|a| {
                let mut profile = base_profile.clone();
                profile.actions[agent] = *a;
                prepare_block(scenario, &profile)
            })
            .collect::<Result<_, _>>()?;
        let tallies = (0..reps)
            .into_par_iter()
            .fold(
                || RowTallies {
                    wins: vec![0; n_actions],
                    joint_with_natural: vec![0; n_actions],
                },
                |mut acc, r| {
                    let rep = cell_tree.child(tag::REPLICATION, r);
                    let mut won = vec![false; n_actions];
                    for (idx, sampler) in samplers.iter().enumerate() {
                        let mut rng = rep.child(tag::OWN_ACTION, idx as u64).rng();
                        let scores: Vec<f64> = sampler
                            .sample(&mut rng)
                            .into_iter()
                            .map(|t| apply_transform(&scenario.score.transform, t))
                            .collect();
                        let mut tie = rep.child(tag::TIE_BREAK, idx as u64).rng();
                        won[idx] = declare_winner(&scores, &mut tie) == agent;
                    }
                    merge_rep(&mut acc, &won, natural_idx);
                    acc
                },
            )
            .reduce(new_tallies(n_actions), merge_tallies);
        return Ok(tallies);
    }

    // no interference: opponents' statistics do not depend on the own
    // action, so draw them once per replication
    let opp_samplers: Vec<(usize, MeanSampler)> = base_profile
        .actions
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != agent)
        .map(|(j, a)| Ok((j, agent_mean_sampler(scenario, a)?)))
        .collect::<Result<_, SimError>>()?;
    let own_samplers: Vec<MeanSampler> = own_actions
        .iter()
        .map(|a| agent_mean_sampler(scenario, a))
        .collect::<Result<_, _>>()?;
    // Normal own-side noise can be shared across actions: mean + sd * z
    let shared_z = matches!(
        scenario.model.family(),
        Family::NormalMeanVar | Family::NormalCurved
    );

    let tallies = (0..reps)
        .into_par_iter()
        .fold(
            || RowTallies {
                wins: vec![0; n_actions],
                joint_with_natural: vec![0; n_actions],
            },
            |mut acc, r| {
                let rep = cell_tree.child(tag::REPLICATION, r);
                let mut scores = vec![0.0; scenario.n];
                let mut opp_rng = rep.child(tag::OPPONENT, 0).rng();
                for (j, sampler) in &opp_samplers {
                    scores[*j] =
                        apply_transform(&scenario.score.transform, sampler.sample(&mut opp_rng));
                }
                let z: f64 = if shared_z {
                    rep.child(tag::OWN_ACTION, u64::MAX)
                        .rng()
                        .sample(rand_distr::StandardNormal)
                } else {
                    0.0
                };
                let mut won = vec![false; n_actions];
                for (idx, sampler) in own_samplers.iter().enumerate() {
                    let stat = if shared_z {
                        match sampler {
                            MeanSampler::Normal(d) => d.mean() + d.std_dev() * z,
                            MeanSampler::PoissonMean { .. } => unreachable!(),
                        }
                    } else {
                        let mut rng = rep.child(tag::OWN_ACTION, idx as u64).rng();
                        sampler.sample(&mut rng)
                    };
                    scores[agent] = apply_transform(&scenario.score.transform, stat);
                    let mut tie = rep.child(tag::TIE_BREAK, idx as u64).rng();
                    won[idx] = declare_winner(&scores, &mut tie) == agent;
                }
                merge_rep(&mut acc, &won, natural_idx);
                acc
            },
        )
        .reduce(new_tallies(n_actions), merge_tallies);
    Ok(tallies)
}

fn agent_mean_sampler(scenario: &Scenario, action: &Action) -> Result<MeanSampler, SimError> {
    let k = scenario.k();
    match *action {
        Action::NormalMeanVar { mu, sigma2 } => Ok(MeanSampler::normal(mu, sigma2, k)),
        Action::NormalCurved { mu } => Ok(MeanSampler::normal(mu, mu.powi(4), k)),
        Action::PoissonRate { lambda } => Ok(MeanSampler::poisson(lambda, k)),
        Action::InterferencePair { .. } => Err(SimError::InvalidDimensions(
            "interference actions have no standalone sampler".into(),
        )),
    }
}

fn new_tallies(n_actions: usize) -> impl Fn() -> RowTallies {
    move || RowTallies {
        wins: vec![0; n_actions],
        joint_with_natural: vec![0; n_actions],
    }
}

fn merge_rep(acc: &mut RowTallies, won: &[bool], natural_idx: usize) {
    for (idx, &w) in won.iter().enumerate() {
        if w {
            acc.wins[idx] += 1;
            if won[natural_idx] {
                acc.joint_with_natural[idx] += 1;
            }
        }
    }
}

fn merge_tallies(mut a: RowTallies, b: RowTallies) -> RowTallies {
    for (x, y) in a.wins.iter_mut().zip(b.wins) {
        *x += y;
    }
    for (x, y) in a.joint_with_natural.iter_mut().zip(b.joint_with_natural) {
        *x += y;
    }
    a
}

/// Enumerate index combinations over grid lengths (odometer order).
pub(crate) fn index_combos(lens: &[usize]) -> Vec<Vec<usize>> {
    if lens.contains(&0) {
        return Vec::new();
    }
    let mut combos = Vec::new();
    let mut current = vec![0usize; lens.len()];
    loop {
        combos.push(current.clone());
        let mut pos = lens.len();
        loop {
            if pos == 0 {
                return combos;
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < lens[pos] {
                break;
            }
            current[pos] = 0;
        }
    }
}

/// One cell of the two-block transform study.
#[derive(Clone, Debug)]
pub struct TransformStudyCell {
    pub k: usize,
    pub transform: String,
    pub p_agent1: f64,
    pub se: f64,
    pub reps: u64,
}

/// Two-agent, multi-block Poisson study: for each units-per-block value and
/// each score transform, estimate how often agent 1 wins under summed
/// per-block scores. Outcome draws are shared across transforms within a
/// replication.
pub fn run_transform_study(
    rates: &[Vec<f64>],
    k_list: &[usize],
    transforms: &[Transform],
    reps: u64,
    master_seed: u64,
) -> Result<Vec<TransformStudyCell>, SimError> {
    if rates.len() != 2 {
        return Err(SimError::InvalidDimensions(
            "transform study takes exactly 2 agents".into(),
        ));
    }
    let blocks = rates[0].len();
    if blocks == 0 || rates[1].len() != blocks {
        return Err(SimError::InvalidDimensions(
            "agents must play the same number of blocks".into(),
        ));
    }
    if rates.iter().flatten().any(|&r| !(r > 0.0)) {
        return Err(SimError::InvalidDimensions(
            "block rates must be positive".into(),
        ));
    }
    let root = StreamTree::new(master_seed);
    let mut out = Vec::new();
    for (ki, &k) in k_list.iter().enumerate() {
        let samplers: Vec<Vec<MeanSampler>> = (0..blocks)
            .map(|b| {
                (0..2)
                    .map(|i| MeanSampler::poisson(rates[i][b], k))
                    .collect()
            })
            .collect();
        let k_tree = root.child(tag::CELL, ki as u64);
        let wins: Vec<u64> = (0..reps)
            .into_par_iter()
            .fold(
                || vec![0u64; transforms.len()],
                |mut acc, r| {
                    let rep = k_tree.child(tag::REPLICATION, r);
                    let mut means = vec![[0.0; 2]; blocks];
                    for (b, block) in samplers.iter().enumerate() {
                        let mut rng = rep.child(tag::BLOCK, b as u64).rng();
                        for (i, sampler) in block.iter().enumerate() {
                            means[b][i] = sampler.sample(&mut rng);
                        }
                    }
                    for (ti, transform) in transforms.iter().enumerate() {
                        let totals: Vec<f64> = (0..2)
                            .map(|i| means.iter().map(|m| apply_transform(transform, m[i])).sum())
                            .collect();
                        let mut tie = rep.child(tag::TRANSFORM, ti as u64).rng();
                        if declare_winner(&totals, &mut tie) == 0 {
                            acc[ti] += 1;
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u64; transforms.len()],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        for (ti, transform) in transforms.iter().enumerate() {
            let p = wins[ti] as f64 / reps as f64;
            out.push(TransformStudyCell {
                k,
                transform: transform.name(),
                p_agent1: p,
                se: binomial_se(p, reps),
                reps,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::analytic_win_prob;
    use approx::assert_abs_diff_eq;

    fn poisson_scenario(
        rates: &[Vec<f64>],
        m: usize,
        blocks: usize,
        transform: Transform,
    ) -> Scenario {
        let model = OutcomeModel::new(Family::PoissonIid, None).unwrap();
        let spaces = rates
            .iter()
            .map(|grid| {
                ActionSpace::new(
                    Family::PoissonIid,
                    grid.iter()
                        .map(|&l| Action::poisson_rate(l).unwrap())
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        Scenario::new(
            model,
            ScoreFunction::new(Statistic::SampleMean, transform),
            spaces,
            m,
            rates.len(),
            blocks,
            Aggregation::SummedScores,
        )
        .unwrap()
    }

    fn profile(rates: &[f64]) -> ActionProfile {
        ActionProfile::new(
            rates
                .iter()
                .map(|&l| Action::poisson_rate(l).unwrap())
                .collect(),
        )
    }

    #[test]
    fn scenario_validation() {
        let model = OutcomeModel::new(Family::PoissonIid, None).unwrap();
        let spaces = vec![
            ActionSpace::new(Family::PoissonIid, vec![Action::poisson_rate(5.0).unwrap()]).unwrap(),
            ActionSpace::new(Family::PoissonIid, vec![Action::poisson_rate(4.0).unwrap()]).unwrap(),
        ];
        let score = ScoreFunction::new(Statistic::SampleMean, Transform::Identity);
        assert!(matches!(
            Scenario::new(
                model,
                score.clone(),
                spaces.clone(),
                5,
                2,
                1,
                Aggregation::SummedScores
            ),
            Err(SimError::InvalidDimensions(_))
        ));
        assert!(matches!(
            Scenario::new(
                model,
                score.clone(),
                spaces.clone(),
                8,
                3,
                1,
                Aggregation::SummedScores
            ),
            Err(SimError::InvalidDimensions(_))
        ));
        // spillover statistic outside the four-cell family
        let bad = ScoreFunction::new(Statistic::SpilloverAdjusted, Transform::Identity);
        assert!(matches!(
            Scenario::new(model, bad, spaces, 8, 2, 1, Aggregation::SummedScores),
            Err(SimError::InvalidDimensions(_))
        ));

        let ok = poisson_scenario(&[vec![5.0], vec![4.0]], 8, 1, Transform::Identity);
        assert!(matches!(
            estimate_win_prob(&ok, &[profile(&[5.0, 4.0])], 0, 1),
            Err(SimError::InvalidDimensions(_))
        ));
    }

    #[test]
    fn estimates_are_bit_identical_across_thread_counts() {
        let scenario = poisson_scenario(&[vec![5.0], vec![4.0]], 100, 1, Transform::Identity);
        let prof = [profile(&[5.0, 4.0])];
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| estimate_win_prob(&scenario, &prof, 20_000, 7).unwrap())
        };
        let a = run(1);
        let b = run(4);
        let c = run(13);
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(
            a.p_hat.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            b.p_hat.iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn estimate_matches_analytic_poisson() {
        let scenario = poisson_scenario(&[vec![5.0], vec![4.0]], 100, 1, Transform::Identity);
        let prof = [profile(&[5.0, 4.0])];
        let est = estimate_win_prob(&scenario, &prof, 100_000, 11).unwrap();
        let exact =
            analytic_win_prob(scenario.model(), scenario.score(), &prof[0], scenario.k()).unwrap();
        assert!(
            (est.p_hat[0] - exact[0]).abs() <= 3.0 * est.se[0],
            "{} vs {}",
            est.p_hat[0],
            exact[0]
        );
        assert_eq!(est.reps, 100_000);
        assert_abs_diff_eq!(est.p_hat[0] + est.p_hat[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_rates_split_evenly() {
        let scenario = poisson_scenario(&[vec![5.0], vec![5.0]], 100, 1, Transform::Identity);
        let est = estimate_win_prob(&scenario, &[profile(&[5.0, 5.0])], 50_000, 3).unwrap();
        assert!((est.p_hat[0] - 0.5).abs() <= 3.0 * est.se[0]);
    }

    #[test]
    fn single_replication_is_one_hot() {
        let scenario = poisson_scenario(&[vec![5.0], vec![4.0]], 100, 1, Transform::Identity);
        let est = estimate_win_prob(&scenario, &[profile(&[5.0, 4.0])], 1, 5).unwrap();
        let ones = est.p_hat.iter().filter(|&&p| p == 1.0).count();
        let zeros = est.p_hat.iter().filter(|&&p| p == 0.0).count();
        assert_eq!((ones, zeros), (1, 1));
    }

    #[test]
    fn unit_level_game_declares_dominant_winner() {
        let scenario = poisson_scenario(&[vec![100.0], vec![0.01]], 200, 1, Transform::Identity);
        let prof = [profile(&[100.0, 0.01])];
        let root = StreamTree::new(17);
        let reps = 10_000u64;
        let wins: u64 = (0..reps)
            .map(|r| {
                let out =
                    run_game_once(&scenario, &prof, &root.child(tag::REPLICATION, r)).unwrap();
                u64::from(out.winner == 0)
            })
            .sum();
        assert!(wins as f64 / reps as f64 >= 0.999, "wins = {wins}");
    }

    #[test]
    fn unit_level_and_statistic_level_paths_agree() {
        let scenario = poisson_scenario(&[vec![5.0], vec![4.4]], 60, 1, Transform::Identity);
        let prof = [profile(&[5.0, 4.4])];
        let reps = 20_000u64;
        let root = StreamTree::new(23);
        let slow_wins: u64 = (0..reps)
            .map(|r| {
                let out =
                    run_game_once(&scenario, &prof, &root.child(tag::REPLICATION, r)).unwrap();
                u64::from(out.winner == 0)
            })
            .sum();
        let p_slow = slow_wins as f64 / reps as f64;
        let fast = estimate_win_prob(&scenario, &prof, reps, 24).unwrap();
        let pooled = (fast.se[0] * fast.se[0] + p_slow * (1.0 - p_slow) / reps as f64).sqrt();
        assert!(
            (fast.p_hat[0] - p_slow).abs() <= 4.0 * pooled,
            "fast {} vs slow {p_slow}",
            fast.p_hat[0]
        );
    }

    #[test]
    fn game_outcome_is_reproducible() {
        let scenario = poisson_scenario(&[vec![5.0], vec![4.0]], 20, 1, Transform::Identity);
        let prof = [profile(&[5.0, 4.0])];
        let rep = StreamTree::new(9).child(tag::REPLICATION, 0);
        let a = run_game_once(&scenario, &prof, &rep).unwrap();
        let b = run_game_once(&scenario, &prof, &rep).unwrap();
        assert_eq!(a.winner, b.winner);
        assert_eq!(a.outcomes_digest, b.outcomes_digest);
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn two_block_symmetric_profiles_split_evenly() {
        let scenario = poisson_scenario(&[vec![5.0], vec![5.0]], 40, 2, Transform::Identity);
        let prof = vec![profile(&[5.0, 5.0]); 2];
        let est = estimate_win_prob(&scenario, &prof, 50_000, 31).unwrap();
        assert!((est.p_hat[0] - 0.5).abs() <= 3.0 * est.se[0]);
    }

    #[test]
    fn majority_rule_with_opposite_dominance_ties_out() {
        let model = OutcomeModel::new(Family::PoissonIid, None).unwrap();
        let spaces = vec![
            ActionSpace::new(
                Family::PoissonIid,
                vec![
                    Action::poisson_rate(100.0).unwrap(),
                    Action::poisson_rate(0.01).unwrap(),
                ],
            )
            .unwrap(),
            ActionSpace::new(
                Family::PoissonIid,
                vec![
                    Action::poisson_rate(100.0).unwrap(),
                    Action::poisson_rate(0.01).unwrap(),
                ],
            )
            .unwrap(),
        ];
        let scenario = Scenario::new(
            model,
            ScoreFunction::new(Statistic::SampleMean, Transform::Identity),
            spaces,
            80,
            2,
            2,
            Aggregation::MajorityOfBlocks,
        )
        .unwrap();
        let prof = vec![profile(&[100.0, 0.01]), profile(&[0.01, 100.0])];
        let est = estimate_win_prob(&scenario, &prof, 50_000, 37).unwrap();
        assert!(
            (est.p_hat[0] - 0.5).abs() <= 3.0 * est.se[0],
            "{:?}",
            est.p_hat
        );
    }

    #[test]
    fn winners_invariant_under_monotone_transform() {
        let id = poisson_scenario(&[vec![5.0], vec![4.0]], 40, 1, Transform::Identity);
        let sq = poisson_scenario(&[vec![5.0], vec![4.0]], 40, 1, Transform::ScaledSqrt);
        let prof = [profile(&[5.0, 4.0])];
        let w_id = simulate_winners(&id, &prof, 5_000, 41).unwrap();
        let w_sq = simulate_winners(&sq, &prof, 5_000, 41).unwrap();
        assert_eq!(w_id, w_sq);
    }

    #[test]
    fn best_response_flags_risky_deviation() {
        let model = OutcomeModel::new(Family::NormalMeanVar, None).unwrap();
        let spaces = vec![
            ActionSpace::new(
                Family::NormalMeanVar,
                vec![
                    Action::normal_mean_var(1.5, 100.0).unwrap(),
                    Action::normal_mean_var(2.0, 20.0).unwrap(),
                ],
            )
            .unwrap(),
            ActionSpace::new(
                Family::NormalMeanVar,
                vec![Action::normal_mean_var(9.0, 1.0).unwrap()],
            )
            .unwrap(),
        ];
        let scenario = Scenario::new(
            model,
            ScoreFunction::new(Statistic::SampleMean, Transform::Identity),
            spaces,
            2,
            2,
            1,
            Aggregation::SummedScores,
        )
        .unwrap();
        let cert = mc_best_response(
            &scenario,
            &BestResponseOptions {
                reps_per_cell: 200_000,
                master_seed: 101,
                max_cells: 1000,
            },
        )
        .unwrap();
        assert_eq!(cert.verdict, crate::asymptotics::ICVerdict::NotIc);
        let w = &cert.witnesses[0];
        // analytic values 0.2277 / 0.0633 at k = 1
        assert!(
            (w.win_prob_deviation - 0.2277).abs() < 0.006,
            "{}",
            w.win_prob_deviation
        );
        assert!(
            (w.win_prob_natural - 0.0633).abs() < 0.004,
            "{}",
            w.win_prob_natural
        );
    }

    #[test]
    fn best_response_certifies_stabilized_curved_design() {
        let model = OutcomeModel::new(Family::NormalCurved, None).unwrap();
        let spaces = vec![
            ActionSpace::new(
                Family::NormalCurved,
                vec![
                    Action::normal_curved(1.5).unwrap(),
                    Action::normal_curved(2.0).unwrap(),
                ],
            )
            .unwrap(),
            ActionSpace::new(
                Family::NormalCurved,
                vec![Action::normal_curved(9.0).unwrap()],
            )
            .unwrap(),
        ];
        let scenario = Scenario::new(
            model,
            ScoreFunction::new(Statistic::SampleMean, Transform::NegReciprocal),
            spaces,
            200,
            2,
            1,
            Aggregation::SummedScores,
        )
        .unwrap();
        let cert = mc_best_response(
            &scenario,
            &BestResponseOptions {
                reps_per_cell: 100_000,
                master_seed: 103,
                max_cells: 1000,
            },
        )
        .unwrap();
        assert_eq!(cert.verdict, crate::asymptotics::ICVerdict::Ic);
    }

    #[test]
    fn best_response_certifies_four_cell_design() {
        let family = Family::PoissonInterferenceFourCell;
        let model = OutcomeModel::new(family, Some(0.5)).unwrap();
        let mk = |pairs: &[(f64, f64)]| {
            ActionSpace::new(
                family,
                pairs
                    .iter()
                    .map(|&(l, c)| Action::interference_pair(l, c).unwrap())
                    .collect(),
            )
            .unwrap()
        };
        let scenario = Scenario::new(
            model,
            ScoreFunction::new(Statistic::SpilloverAdjusted, Transform::Identity),
            vec![
                mk(&[(3.0, 1.0), (2.0, 4.0), (5.0, 0.5)]),
                mk(&[(2.0, 2.0), (1.0, 4.5)]),
            ],
            800,
            2,
            1,
            Aggregation::SummedScores,
        )
        .unwrap();
        let cert = mc_best_response(
            &scenario,
            &BestResponseOptions {
                reps_per_cell: 60_000,
                master_seed: 107,
                max_cells: 1000,
            },
        )
        .unwrap();
        assert_eq!(
            cert.verdict,
            crate::asymptotics::ICVerdict::Ic,
            "{:?}",
            cert.witnesses
        );
    }

    #[test]
    fn best_response_respects_budget_and_blocks() {
        let scenario = poisson_scenario(
            &[vec![5.0, 4.0], vec![4.0, 3.0]],
            40,
            1,
            Transform::Identity,
        );
        assert!(matches!(
            mc_best_response(
                &scenario,
                &BestResponseOptions {
                    reps_per_cell: 10,
                    master_seed: 0,
                    max_cells: 3,
                },
            ),
            Err(SimError::BudgetExceeded {
                cells: 8,
                budget: 3
            })
        ));
        let multi = poisson_scenario(&[vec![5.0], vec![4.0]], 40, 2, Transform::Identity);
        assert!(matches!(
            mc_best_response(&multi, &BestResponseOptions::default()),
            Err(SimError::InvalidDimensions(_))
        ));
    }

    #[test]
    fn single_point_grids_certify_trivially() {
        let scenario = poisson_scenario(&[vec![5.0], vec![4.0]], 40, 1, Transform::Identity);
        let cert = mc_best_response(
            &scenario,
            &BestResponseOptions {
                reps_per_cell: 100,
                master_seed: 0,
                max_cells: 10,
            },
        )
        .unwrap();
        assert_eq!(cert.verdict, crate::asymptotics::ICVerdict::Ic);
        assert!(cert.witnesses.is_empty());
    }

    #[test]
    fn transform_study_prefers_sqrt_and_saturates() {
        let rates = vec![vec![5.0, 10.0], vec![4.25, 9.95]];
        let cells = run_transform_study(
            &rates,
            &[25, 1000],
            &[Transform::Identity, Transform::ScaledSqrt],
            10_000,
            2024,
        )
        .unwrap();
        assert_eq!(cells.len(), 4);
        let p = |k: usize, t: &str| {
            cells
                .iter()
                .find(|c| c.k == k && c.transform == t)
                .unwrap()
                .p_agent1
        };
        assert!(p(25, "scaled_sqrt") > p(25, "identity"));
        assert!(p(1000, "identity") > 0.999);
        assert!(p(1000, "scaled_sqrt") > 0.999);
    }

    /// Poisson pmf table by the multiplicative recurrence (test oracle).
    fn pois_pmf(lambda: f64, hi: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(hi);
        let mut p = (-lambda).exp();
        out.push(p);
        for x in 1..hi {
            p *= lambda / x as f64;
            out.push(p);
        }
        out
    }

    #[test]
    fn transform_study_matches_exact_enumeration_at_k5() {
        // Exact winner probabilities at k = 5 by brute-force enumeration,
        // independent of the simulator: identity scoring reduces to
        // Pois(75) vs Pois(71) totals; sqrt scoring enumerates the joint
        // distribution of sqrt(X1/5) + sqrt(X2/5) per agent.
        let x = pois_pmf(75.0, 400);
        let y = pois_pmf(71.0, 400);
        let mut cum_y = Vec::with_capacity(y.len());
        let mut c = 0.0;
        for &p in &y {
            cum_y.push(c);
            c += p;
        }
        let exact_identity: f64 = x
            .iter()
            .enumerate()
            .map(|(v, &px)| px * (cum_y[v] + 0.5 * y[v]))
            .sum();
        assert!((exact_identity - 0.629598).abs() < 1e-5);

        let score_dist = |l1: f64, l2: f64| -> Vec<(f64, f64)> {
            let p1 = pois_pmf(l1, 150);
            let p2 = pois_pmf(l2, 220);
            let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(p1.len() * p2.len());
            for (a, &pa) in p1.iter().enumerate() {
                let sa = (a as f64 / 5.0).sqrt();
                for (b, &pb) in p2.iter().enumerate() {
                    atoms.push((sa + (b as f64 / 5.0).sqrt(), pa * pb));
                }
            }
            atoms.sort_by(|u, v| u.0.total_cmp(&v.0));
            atoms
        };
        let s1 = score_dist(25.0, 50.0);
        let s2 = score_dist(21.25, 49.75);
        let mut cum2 = Vec::with_capacity(s2.len());
        let mut c = 0.0;
        for &(_, p) in &s2 {
            cum2.push(c);
            c += p;
        }
        let mut exact_sqrt = 0.0;
        for &(v, p) in &s1 {
            let i = s2.partition_point(|&(w, _)| w < v - 1e-12);
            let below = if i < s2.len() { cum2[i] } else { c };
            let mut tie = 0.0;
            let mut j = i;
            while j < s2.len() && (s2[j].0 - v).abs() <= 1e-12 {
                tie += s2[j].1;
                j += 1;
            }
            exact_sqrt += p * (below + 0.5 * tie);
        }
        assert!((exact_sqrt - 0.658352).abs() < 1e-5, "{exact_sqrt}");

        // the simulator must land within Monte Carlo error of both
        let rates = vec![vec![5.0, 10.0], vec![4.25, 9.95]];
        let cells = run_transform_study(
            &rates,
            &[5],
            &[Transform::Identity, Transform::ScaledSqrt],
            100_000,
            606,
        )
        .unwrap();
        for (name, exact) in [("identity", exact_identity), ("scaled_sqrt", exact_sqrt)] {
            let cell = cells.iter().find(|c| c.transform == name).unwrap();
            assert!(
                (cell.p_agent1 - exact).abs() <= 4.0 * cell.se,
                "{name}: {} vs exact {exact}",
                cell.p_agent1
            );
        }
    }

    #[test]
    fn transform_study_validates_inputs() {
        assert!(matches!(
            run_transform_study(&[vec![5.0]], &[5], &[Transform::Identity], 10, 0),
            Err(SimError::InvalidDimensions(_))
        ));
        assert!(matches!(
            run_transform_study(
                &[vec![5.0, 0.0], vec![4.0, 1.0]],
                &[5],
                &[Transform::Identity],
                10,
                0
            ),
            Err(SimError::InvalidDimensions(_))
        ));
    }

    #[test]
    fn index_combo_enumeration() {
        assert_eq!(index_combos(&[2, 3]).len(), 6);
        assert_eq!(index_combos(&[]), vec![Vec::<usize>::new()]);
        assert!(index_combos(&[2, 0]).is_empty());
    }
}
