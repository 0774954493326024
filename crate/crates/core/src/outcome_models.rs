//! Parametric outcome families, agent actions and experiment sampling.
//!
//! An agent's action fixes the distribution of outcomes on the units it
//! treats. Five families are supported: Normal outcomes with a free
//! variance, Normal outcomes whose variance is tied to the mean as mu^4,
//! i.i.d. Poisson counts, and two Poisson layouts with spillover between
//! agents — the plain two-cell layout where each agent is scored on its own
//! test set only, and the four-cell split layout where the unit pool is
//! halved and both agents are scored inside each half.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("action does not belong to family {family:?}")]
    FamilyMismatch { family: Family },
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("interference families support exactly 2 agents, got {0}")]
    UnsupportedAgentCount(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// The outcome families of the treatment-selection game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// Normal outcomes; the action picks mean and variance independently.
    NormalMeanVar,
    /// Normal outcomes with variance locked to mean^4.
    NormalCurved,
    /// Independent Poisson counts; the action picks the rate.
    PoissonIid,
    /// Poisson with spillover: each agent scored on its own test set only.
    PoissonInterferenceTwoCell,
    /// Poisson with spillover: units split in two groups, both agents
    /// scored inside each group (four test sets).
    PoissonInterferenceFourCell,
}

impl Family {
    pub fn is_interference(self) -> bool {
        matches!(
            self,
            Family::PoissonInterferenceTwoCell | Family::PoissonInterferenceFourCell
        )
    }

    /// Number of real parameters in one action of this family.
    pub fn action_arity(self) -> usize {
        match self {
            Family::NormalMeanVar => 2,
            Family::NormalCurved | Family::PoissonIid => 1,
            Family::PoissonInterferenceTwoCell | Family::PoissonInterferenceFourCell => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::NormalMeanVar => "normal_mean_var",
            Family::NormalCurved => "normal_curved",
            Family::PoissonIid => "poisson",
            Family::PoissonInterferenceTwoCell => "poisson_interference_two_cell",
            Family::PoissonInterferenceFourCell => "poisson_interference_four_cell",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One treatment version an agent can administer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Action {
    /// Mean and variance of the unit outcome.
    NormalMeanVar { mu: f64, sigma2: f64 },
    /// Mean of the unit outcome; variance is implicitly mu^4.
    NormalCurved { mu: f64 },
    /// Poisson rate on own units.
    PoissonRate { lambda: f64 },
    /// Own-side and cross-side seed rates for the spillover families.
    InterferencePair { lam: f64, lamc: f64 },
}

impl Action {
    pub fn normal_mean_var(mu: f64, sigma2: f64) -> Result<Self, ModelError> {
        if !(sigma2 > 0.0) || !mu.is_finite() || !sigma2.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "normal action requires finite mu and sigma2 > 0, got ({mu}, {sigma2})"
            )));
        }
        Ok(Action::NormalMeanVar { mu, sigma2 })
    }

    pub fn normal_curved(mu: f64) -> Result<Self, ModelError> {
        if mu == 0.0 || !mu.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "curved normal action requires finite nonzero mu, got {mu}"
            )));
        }
        Ok(Action::NormalCurved { mu })
    }

    pub fn poisson_rate(lambda: f64) -> Result<Self, ModelError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "poisson action requires lambda > 0, got {lambda}"
            )));
        }
        Ok(Action::PoissonRate { lambda })
    }

    pub fn interference_pair(lam: f64, lamc: f64) -> Result<Self, ModelError> {
        if !(lam >= 0.0) || !(lamc >= 0.0) || !(lam + lamc > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "interference action requires lam >= 0, lamc >= 0, lam + lamc > 0, got ({lam}, {lamc})"
            )));
        }
        Ok(Action::InterferencePair { lam, lamc })
    }

    /// Build an action of `family` from a flat parameter list (config form).
    pub fn from_params(family: Family, params: &[f64]) -> Result<Self, ModelError> {
        if params.len() != family.action_arity() {
            return Err(ModelError::InvalidParameter(format!(
                "family {family} expects {} parameter(s) per action, got {}",
                family.action_arity(),
                params.len()
            )));
        }
        match family {
            Family::NormalMeanVar => Action::normal_mean_var(params[0], params[1]),
            Family::NormalCurved => Action::normal_curved(params[0]),
            Family::PoissonIid => Action::poisson_rate(params[0]),
            Family::PoissonInterferenceTwoCell | Family::PoissonInterferenceFourCell => {
                Action::interference_pair(params[0], params[1])
            }
        }
    }

    pub fn belongs_to(&self, family: Family) -> bool {
        matches!(
            (self, family),
            (Action::NormalMeanVar { .. }, Family::NormalMeanVar)
                | (Action::NormalCurved { .. }, Family::NormalCurved)
                | (Action::PoissonRate { .. }, Family::PoissonIid)
                | (
                    Action::InterferencePair { .. },
                    Family::PoissonInterferenceTwoCell
                )
                | (
                    Action::InterferencePair { .. },
                    Family::PoissonInterferenceFourCell
                )
        )
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Action::NormalMeanVar { mu, sigma2 } => vec![mu, sigma2],
            Action::NormalCurved { mu } => vec![mu],
            Action::PoissonRate { lambda } => vec![lambda],
            Action::InterferencePair { lam, lamc } => vec![lam, lamc],
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Action::NormalMeanVar { mu, sigma2 } => write!(f, "(mu={mu}, sigma2={sigma2})"),
            Action::NormalCurved { mu } => write!(f, "(mu={mu})"),
            Action::PoissonRate { lambda } => write!(f, "(lambda={lambda})"),
            Action::InterferencePair { lam, lamc } => write!(f, "(lam={lam}, lamc={lamc})"),
        }
    }
}

/// Finite action grid for one agent, with the performance-maximizing grid
/// point cached. Ties break toward the lowest index so certificates are
/// reproducible.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    family: Family,
    grid: Vec<Action>,
    natural_index: usize,
}

impl ActionSpace {
    pub fn new(family: Family, grid: Vec<Action>) -> Result<Self, ModelError> {
        if grid.is_empty() {
            return Err(ModelError::InvalidDimensions(
                "action grid must be non-empty".into(),
            ));
        }
        if let Some(bad) = grid.iter().find(|a| !a.belongs_to(family)) {
            let _ = bad;
            return Err(ModelError::FamilyMismatch { family });
        }
        let natural_index = grid
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| {
                let (pa, pb) = (performance_of(family, a), performance_of(family, b));
                // strictly-greater comparison with lowest-index ties
                pa.partial_cmp(&pb).unwrap().then_with(|| j.cmp(i))
            })
            .map(|(i, _)| i)
            .unwrap();
        Ok(Self {
            family,
            grid,
            natural_index,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn grid(&self) -> &[Action] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn natural_index(&self) -> usize {
        self.natural_index
    }

    pub fn natural(&self) -> &Action {
        &self.grid[self.natural_index]
    }
}

/// Joint action profile, one action per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionProfile {
    pub actions: Vec<Action>,
}

impl ActionProfile {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// The outcome model: a family plus, for the spillover families, the known
/// cross-influence discount.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeModel {
    family: Family,
    gamma: Option<f64>,
}

impl OutcomeModel {
    pub fn new(family: Family, gamma: Option<f64>) -> Result<Self, ModelError> {
        match (family.is_interference(), gamma) {
            (true, Some(g)) if (0.0..1.0).contains(&g) => Ok(Self {
                family,
                gamma: Some(g),
            }),
            (true, Some(g)) => Err(ModelError::InvalidParameter(format!(
                "gamma must lie in [0, 1), got {g}"
            ))),
            (true, None) => Err(ModelError::InvalidParameter(
                "interference families require gamma".into(),
            )),
            (false, None) => Ok(Self {
                family,
                gamma: None,
            }),
            (false, Some(_)) => Err(ModelError::InvalidParameter(format!(
                "family {family} does not take gamma"
            ))),
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }
}

/// Realized treatment assignment: agent index per unit, plus the block (or
/// group) index per unit when the assignment was stratified.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub n_agents: usize,
    pub z: Vec<usize>,
    pub block: Option<Vec<usize>>,
}

impl Assignment {
    pub fn units(&self) -> usize {
        self.z.len()
    }

    /// Units per agent (per block when stratified); assignments produced by
    /// [`sample_assignment`] are exactly balanced.
    pub fn units_per_agent(&self) -> usize {
        let strata = self
            .block
            .as_ref()
            .map_or(1, |b| b.iter().max().map_or(1, |&m| m + 1));
        self.z.len() / self.n_agents / strata
    }
}

/// Observed outcomes together with the assignment that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedOutcomes {
    pub y: Vec<f64>,
    pub assignment: Assignment,
}

fn performance_of(family: Family, action: &Action) -> f64 {
    match (family, action) {
        (Family::NormalMeanVar, Action::NormalMeanVar { mu, .. }) => *mu,
        (Family::NormalCurved, Action::NormalCurved { mu }) => *mu,
        (Family::PoissonIid, Action::PoissonRate { lambda }) => *lambda,
        (
            Family::PoissonInterferenceTwoCell | Family::PoissonInterferenceFourCell,
            Action::InterferencePair { lam, lamc },
        ) => lam + lamc,
        _ => f64::NAN,
    }
}

/// Expected outcome of a single unit when every agent is a replicate of the
/// one playing `alpha`: mu for the Normal families, lambda for i.i.d.
/// Poisson, and lam + lamc for the spillover families (a replicate's
/// cross-rate is not discounted).
pub fn performance(model: &OutcomeModel, alpha: &Action) -> Result<f64, ModelError> {
    if !alpha.belongs_to(model.family()) {
        return Err(ModelError::FamilyMismatch {
            family: model.family(),
        });
    }
    Ok(performance_of(model.family(), alpha))
}

/// Performance of every action in a profile.
pub fn performance_vector(
    model: &OutcomeModel,
    profile: &ActionProfile,
) -> Result<Vec<f64>, ModelError> {
    profile
        .actions
        .iter()
        .map(|a| performance(model, a))
        .collect()
}

/// Sample a completely randomized assignment: within each block, every
/// agent receives exactly `m / (n * blocks)` units, uniformly over all such
/// assignments. Blocks partition the unit index range contiguously.
pub fn sample_assignment(
    m: usize,
    n: usize,
    blocks: usize,
    rng: &mut impl Rng,
) -> Result<Assignment, ModelError> {
    if m == 0 || n == 0 || blocks == 0 {
        return Err(ModelError::InvalidDimensions(
            "m, n and blocks must be positive".into(),
        ));
    }
    if !m.is_multiple_of(n * blocks) {
        return Err(ModelError::InvalidDimensions(format!(
            "m = {m} is not divisible by n * blocks = {}",
            n * blocks
        )));
    }
    let per_block = m / blocks;
    let k = per_block / n;
    let mut z = Vec::with_capacity(m);
    for _ in 0..blocks {
        let mut labels: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect();
        labels.shuffle(rng);
        z.extend(labels);
    }
    let block = (blocks > 1).then(|| {
        (0..blocks)
            .flat_map(|b| std::iter::repeat_n(b, per_block))
            .collect()
    });
    Ok(Assignment {
        n_agents: n,
        z,
        block,
    })
}

/// Per-unit outcome rates/means implied by an assignment and profile.
///
/// For the four-cell spillover family the assignment must carry the group
/// labels (two groups), as produced by `sample_assignment(m, 2, 2, ..)`.
pub fn unit_means(
    model: &OutcomeModel,
    assignment: &Assignment,
    profile: &ActionProfile,
) -> Result<Vec<f64>, ModelError> {
    validate_profile(model, assignment, profile)?;
    match model.family() {
        Family::NormalMeanVar | Family::NormalCurved | Family::PoissonIid => Ok(assignment
            .z
            .iter()
            .map(|&i| performance_of(model.family(), &profile.actions[i]))
            .collect()),
        Family::PoissonInterferenceTwoCell => {
            let gamma = model.gamma().unwrap();
            let rates = two_cell_rates(gamma, &profile.actions);
            Ok(assignment.z.iter().map(|&i| rates[i]).collect())
        }
        Family::PoissonInterferenceFourCell => {
            let gamma = model.gamma().unwrap();
            let groups = assignment.block.as_ref().ok_or_else(|| {
                ModelError::InvalidDimensions(
                    "four-cell layout requires an assignment with group labels".into(),
                )
            })?;
            let rates = four_cell_rates(gamma, &profile.actions);
            Ok(assignment
                .z
                .iter()
                .zip(groups)
                .map(|(&i, &g)| rates[g * 2 + i])
                .collect())
        }
    }
}

/// Test-set rates (agent 1's set, agent 2's set) of the two-cell layout.
pub fn two_cell_rates(gamma: f64, actions: &[Action]) -> [f64; 2] {
    let (l1, c1) = pair(&actions[0]);
    let (l2, c2) = pair(&actions[1]);
    [l1 + gamma * c2, l2 + gamma * c1]
}

/// Cell rates of the four-cell layout, ordered (G11, G12, G21, G22):
/// group 1 agent 1, group 1 agent 2, group 2 agent 1, group 2 agent 2.
pub fn four_cell_rates(gamma: f64, actions: &[Action]) -> [f64; 4] {
    let (l1, c1) = pair(&actions[0]);
    let (l2, c2) = pair(&actions[1]);
    [
        l1 + gamma * c2,
        c2 + gamma * l1,
        c1 + gamma * l2,
        l2 + gamma * c1,
    ]
}

fn pair(action: &Action) -> (f64, f64) {
    match *action {
        Action::InterferencePair { lam, lamc } => (lam, lamc),
        _ => unreachable!("validated upstream"),
    }
}

fn validate_profile(
    model: &OutcomeModel,
    assignment: &Assignment,
    profile: &ActionProfile,
) -> Result<(), ModelError> {
    if model.family().is_interference() && assignment.n_agents != 2 {
        return Err(ModelError::UnsupportedAgentCount(assignment.n_agents));
    }
    if profile.len() != assignment.n_agents {
        return Err(ModelError::InvalidDimensions(format!(
            "profile has {} actions for {} agents",
            profile.len(),
            assignment.n_agents
        )));
    }
    if let Some(a) = profile
        .actions
        .iter()
        .find(|a| !a.belongs_to(model.family()))
    {
        let _ = a;
        return Err(ModelError::FamilyMismatch {
            family: model.family(),
        });
    }
    Ok(())
}

/// Draw one outcome per unit, independently across units.
pub fn sample_outcomes(
    model: &OutcomeModel,
    assignment: &Assignment,
    profile: &ActionProfile,
    rng: &mut impl Rng,
) -> Result<ObservedOutcomes, ModelError> {
    let means = unit_means(model, assignment, profile)?;
    let y = match model.family() {
        Family::NormalMeanVar | Family::NormalCurved => assignment
            .z
            .iter()
            .zip(&means)
            .map(|(&i, &mu)| {
                let sigma2 = match profile.actions[i] {
                    Action::NormalMeanVar { sigma2, .. } => sigma2,
                    Action::NormalCurved { mu } => mu.powi(4),
                    _ => unreachable!(),
                };
                Normal::new(mu, sigma2.sqrt()).unwrap().sample(rng)
            })
            .collect(),
        Family::PoissonIid
        | Family::PoissonInterferenceTwoCell
        | Family::PoissonInterferenceFourCell => means
            .iter()
            .map(|&rate| sample_poisson(rate, rng))
            .collect(),
    };
    Ok(ObservedOutcomes {
        y,
        assignment: assignment.clone(),
    })
}

/// Poisson draw that tolerates a zero rate (a.s. zero).
pub fn sample_poisson(rate: f64, rng: &mut impl Rng) -> f64 {
    if rate == 0.0 {
        0.0
    } else {
        Poisson::new(rate)
            .expect("positive finite rate")
            .sample(rng)
    }
}
