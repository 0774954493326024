//! Asymptotic machinery: closed-form winning probabilities, delta-method
//! score covariances, incentive-compatibility certification over finite
//! action grids, variance-stabilizing transform construction, and design
//! power comparison.
//!
//! The certification logic compares, for every agent, every opponent grid
//! profile and every rival, the asymptotic probability that the agent's
//! score beats the rival's: Phi(sqrt(scale) * (f(chi_i) - f(chi_j)) /
//! sqrt(v_ij)), where v_ij is the variance of the score difference from the
//! delta method. The natural action must maximize that probability over the
//! agent's own grid, otherwise the best deviation is recorded as a witness.

use crate::interference::{build_algebra, InterferenceError};
use crate::linalg::Matrix;
use crate::outcome_models::{
    performance, performance_vector, two_cell_rates, Action, ActionProfile, ActionSpace, Family,
    ModelError, OutcomeModel,
};
use crate::quadrature::adaptive_simpson;
use crate::scoring::{apply_transform, MonotoneTable, ScoreFunction, Statistic, Transform};
use crate::simulator::{estimate_win_prob, Aggregation, Scenario, SimError};
use crate::stats::normal_cdf;
use thiserror::Error;

/// A deviation only counts as an incentive violation when it beats the
/// natural action by more than this margin on the z scale; smaller gaps are
/// floating-point ties.
pub const IC_Z_MARGIN: f64 = 1e-9;

/// Tolerance for the finite-difference convexity tests of the stabilizer.
pub const CONVEXITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error("no closed-form winning probability for {family} with {score}")]
    NoClosedForm { family: Family, score: String },
    #[error("{family} has no identifying statistic")]
    NoIdentifyingStatistic { family: Family },
    #[error("transform {transform} is not differentiable at chi = {at}")]
    SingularTransform { transform: String, at: f64 },
    #[error("pairwise variance requires two distinct agent indices, got ({i}, {j})")]
    InvalidPair { i: usize, j: usize },
    #[error("{family} violates the no-interference assumption")]
    AssumptionViolated { family: Family },
    #[error("performance is not invertible: {0}")]
    NotInvertible(String),
    #[error("invalid variance: {0}")]
    InvalidVariance(String),
    #[error("design {0} is not certified incentive-compatible")]
    NotCertified(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Interference(#[from] InterferenceError),
    #[error(transparent)]
    Simulation(#[from] Box<SimError>),
}

/// An experiment design: the assignment rule is complete randomization
/// throughout, so a design is identified by its score function.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub id: String,
    pub score: ScoreFunction,
}

impl Design {
    pub fn new(score: ScoreFunction) -> Self {
        Self {
            id: score.id(),
            score,
        }
    }
}

/// How a certificate was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ICVerdict {
    Ic,
    NotIc,
}

impl std::fmt::Display for ICVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ICVerdict::Ic => "IC",
            ICVerdict::NotIc => "NotIC",
        })
    }
}

/// A profitable deviation found during certification.
#[derive(Clone, Debug)]
pub struct Witness {
    pub agent: usize,
    /// Full profile with the deviation in the agent's slot.
    pub opponent_profile: ActionProfile,
    pub deviation: Action,
    pub natural: Action,
    pub win_prob_deviation: f64,
    pub win_prob_natural: f64,
}

/// Grid-search evidence that the natural action is (or is not) dominant.
#[derive(Clone, Debug)]
pub struct ICCertificate {
    pub design_id: String,
    pub verdict: ICVerdict,
    pub witnesses: Vec<Witness>,
    pub method: CertMethod,
    pub grid_sizes: Vec<usize>,
}

/// Covariance Sigma(A) of the identifying statistic, in the per-test-set
/// normalization sqrt(scale) (T - chi(A)) -> N(0, Sigma(A)).
pub fn identifying_covariance(
    model: &OutcomeModel,
    profile: &ActionProfile,
) -> Result<Matrix, AsymptoticsError> {
    match model.family() {
        Family::NormalMeanVar | Family::NormalCurved | Family::PoissonIid => {
            let diag: Vec<f64> = profile
                .actions
                .iter()
                .map(|a| action_variance(model.family(), a))
                .collect::<Result<_, _>>()?;
            Ok(Matrix::diagonal(&diag))
        }
        Family::PoissonInterferenceTwoCell => Err(AsymptoticsError::NoIdentifyingStatistic {
            family: model.family(),
        }),
        Family::PoissonInterferenceFourCell => {
            let alg = build_algebra(model.gamma().unwrap())?;
            Ok(alg.statistic_covariance(profile)?)
        }
    }
}

/// Per-unit outcome variance implied by one action (diagonal of Sigma for
/// the no-interference families).
fn action_variance(family: Family, action: &Action) -> Result<f64, AsymptoticsError> {
    match (family, action) {
        (Family::NormalMeanVar, Action::NormalMeanVar { sigma2, .. }) => Ok(*sigma2),
        (Family::NormalCurved, Action::NormalCurved { mu }) => Ok(mu.powi(4)),
        (Family::PoissonIid, Action::PoissonRate { lambda }) => Ok(*lambda),
        _ => Err(ModelError::FamilyMismatch { family }.into()),
    }
}

/// Units behind each component of the identifying statistic, as a function
/// of units per agent k: the four-cell design halves an agent's units
/// across its two test sets.
pub fn statistic_scale(model: &OutcomeModel, k: usize) -> f64 {
    match model.family() {
        Family::PoissonInterferenceFourCell => k as f64 / 2.0,
        _ => k as f64,
    }
}

/// Delta-method covariance of the transformed score vector:
/// V_f(A) = J Sigma(A) J' with J = diag(f'(chi_i)).
pub fn delta_covariance(
    sigma: &Matrix,
    transform: &Transform,
    chi: &[f64],
) -> Result<Matrix, AsymptoticsError> {
    let n = chi.len();
    assert_eq!(sigma.rows(), n, "sigma and chi dimensions must agree");
    let derivs: Vec<f64> = chi
        .iter()
        .map(|&c| {
            transform
                .derivative(c)
                .ok_or_else(|| AsymptoticsError::SingularTransform {
                    transform: transform.name(),
                    at: c,
                })
        })
        .collect::<Result<_, _>>()?;
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            v[(i, j)] = derivs[i] * sigma[(i, j)] * derivs[j];
        }
    }
    Ok(v)
}

/// Variance of the score difference phi_i - phi_j:
/// v_ii + v_jj - v_ij - v_ji.
pub fn pairwise_variance(v: &Matrix, i: usize, j: usize) -> Result<f64, AsymptoticsError> {
    if i == j || i >= v.rows() || j >= v.rows() {
        return Err(AsymptoticsError::InvalidPair { i, j });
    }
    Ok(v[(i, i)] + v[(j, j)] - v[(i, j)] - v[(j, i)])
}

/// Asymptotic law of the transformed score vector at a fixed profile:
/// mean f(chi_i) per agent and covariance V_f(A), under the normalization
/// sqrt(scale) (phi - mean) -> N(0, V_f(A)). Under no interference the
/// covariance is diagonal.
#[derive(Clone, Debug)]
pub struct AsymptoticScoreLaw {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    /// Units behind each statistic component (k, or k/2 for the four-cell
    /// split design).
    pub scale: f64,
}

/// Compute the asymptotic score law for a (model, score) pair.
pub fn score_law(
    model: &OutcomeModel,
    score: &ScoreFunction,
    profile: &ActionProfile,
    k: usize,
) -> Result<AsymptoticScoreLaw, AsymptoticsError> {
    let chi = performance_vector(model, profile)?;
    let sigma = identifying_covariance(model, profile)?;
    let cov = delta_covariance(&sigma, &score.transform, &chi)?;
    let mean = chi
        .iter()
        .map(|&c| apply_transform(&score.transform, c))
        .collect();
    Ok(AsymptoticScoreLaw {
        mean,
        cov,
        scale: statistic_scale(model, k),
    })
}

/// z-score of P(phi_i > phi_j) through the identifying-statistic machinery.
fn pairwise_win_z(
    model: &OutcomeModel,
    score: &ScoreFunction,
    profile: &ActionProfile,
    k: usize,
    i: usize,
    j: usize,
) -> Result<f64, AsymptoticsError> {
    let law = score_law(model, score, profile, k)?;
    let vij = pairwise_variance(&law.cov, i, j)?;
    Ok(z_from(law.mean[i] - law.mean[j], vij, law.scale))
}

fn z_from(diff: f64, variance: f64, scale: f64) -> f64 {
    if variance > 0.0 {
        scale.sqrt() * diff / variance.sqrt()
    } else if diff > 0.0 {
        f64::INFINITY
    } else if diff < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

/// The sufficiency objective f(chi_i) / sqrt(v_ij) whose grid argmax must
/// sit at the natural action; useful as a diagnostic (the certification
/// itself compares win probabilities).
pub fn sufficiency_objective(
    model: &OutcomeModel,
    score: &ScoreFunction,
    profile: &ActionProfile,
    i: usize,
    j: usize,
) -> Result<f64, AsymptoticsError> {
    let chi = performance_vector(model, profile)?;
    let sigma = identifying_covariance(model, profile)?;
    let v = delta_covariance(&sigma, &score.transform, &chi)?;
    let vij = pairwise_variance(&v, i, j)?;
    Ok(apply_transform(&score.transform, chi[i]) / vij.sqrt())
}

/// z-score of the cataloged two-agent closed forms, for the agent playing
/// `own` against `other`.
fn catalog_z(
    model: &OutcomeModel,
    score: &ScoreFunction,
    own: &Action,
    other: &Action,
    k: usize,
) -> Result<f64, AsymptoticsError> {
    let no_closed_form = || AsymptoticsError::NoClosedForm {
        family: model.family(),
        score: score.id(),
    };
    if score.statistic != Statistic::SampleMean {
        return Err(no_closed_form());
    }
    let kf = k as f64;
    match (model.family(), &score.transform, own, other) {
        (
            Family::NormalMeanVar,
            Transform::Identity,
            Action::NormalMeanVar { mu: m1, sigma2: s1 },
            Action::NormalMeanVar { mu: m2, sigma2: s2 },
        ) => Ok(kf.sqrt() * (m1 - m2) / (s1 + s2).sqrt()),
        (
            Family::NormalCurved,
            Transform::Identity,
            Action::NormalCurved { mu: m1 },
            Action::NormalCurved { mu: m2 },
        ) => Ok(kf.sqrt() * (m1 - m2) / (m1.powi(4) + m2.powi(4)).sqrt()),
        (
            Family::PoissonIid,
            Transform::Identity,
            Action::PoissonRate { lambda: l1 },
            Action::PoissonRate { lambda: l2 },
        ) => Ok(kf.sqrt() * (l1 - l2) / (l1 + l2).sqrt()),
        (
            Family::PoissonIid,
            Transform::ScaledSqrt,
            Action::PoissonRate { lambda: l1 },
            Action::PoissonRate { lambda: l2 },
        ) => Ok((2.0 * kf).sqrt() * (l1.sqrt() - l2.sqrt())),
        (
            Family::PoissonInterferenceTwoCell,
            Transform::Identity | Transform::ScaledSqrt,
            Action::InterferencePair { .. },
            Action::InterferencePair { .. },
        ) => {
            let gamma = model.gamma().unwrap();
            let [e_own, e_other] = two_cell_rates(gamma, &[*own, *other]);
            match score.transform {
                Transform::Identity => Ok(kf.sqrt() * (e_own - e_other) / (e_own + e_other).sqrt()),
                _ => Ok((2.0 * kf).sqrt() * (e_own.sqrt() - e_other.sqrt())),
            }
        }
        _ => Err(no_closed_form()),
    }
}

/// Closed-form asymptotic winning probabilities for the cataloged
/// two-agent (model, score) pairs. The two probabilities sum to one
/// exactly; uncataloged combinations return `NoClosedForm` so the caller
/// can fall back to Monte Carlo.
///
/// ```
/// use icx_core::{analytic_win_prob, Action, ActionProfile, Family,
///                OutcomeModel, ScoreFunction, Statistic, Transform};
///
/// let model = OutcomeModel::new(Family::PoissonIid, None).unwrap();
/// let score = ScoreFunction::new(Statistic::SampleMean, Transform::Identity);
/// let profile = ActionProfile::new(vec![
///     Action::poisson_rate(5.0).unwrap(),
///     Action::poisson_rate(4.0).unwrap(),
/// ]);
/// let p = analytic_win_prob(&model, &score, &profile, 50).unwrap();
/// assert!((p[0] - 0.9907889).abs() < 1e-6);
/// ```
pub fn analytic_win_prob(
    model: &OutcomeModel,
    score: &ScoreFunction,
    profile: &ActionProfile,
    k: usize,
) -> Result<[f64; 2], AsymptoticsError> {
    if profile.len() != 2 {
        return Err(AsymptoticsError::NoClosedForm {
            family: model.family(),
            score: format!("{} with {} agents", score.id(), profile.len()),
        });
    }
    let z = catalog_z(model, score, &profile.actions[0], &profile.actions[1], k)?;
    let p1 = normal_cdf(z);
    Ok([p1, 1.0 - p1])
}

/// Iterate index combinations over a list of grid lengths.
struct Odometer {
    lens: Vec<usize>,
    current: Vec<usize>,
    done: bool,
}

impl Odometer {
    fn new(lens: Vec<usize>) -> Self {
        let done = lens.contains(&0);
        Self {
            current: vec![0; lens.len()],
            lens,
            done,
        }
    }
}

impl Iterator for Odometer {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        self.done = true;
        for pos in (0..self.lens.len()).rev() {
            self.current[pos] += 1;
            if self.current[pos] < self.lens[pos] {
                self.done = false;
                break;
            }
            self.current[pos] = 0;
        }
        if self.lens.is_empty() {
            self.done = true;
        }
        Some(out)
    }
}

fn validate_spaces(model: &OutcomeModel, spaces: &[ActionSpace]) -> Result<(), AsymptoticsError> {
    for s in spaces {
        if s.family() != model.family() {
            return Err(ModelError::FamilyMismatch {
                family: model.family(),
            }
            .into());
        }
    }
    Ok(())
}

/// Grid certification driven by a per-pair z-score function.
fn certify_with<F>(
    design_id: String,
    spaces: &[ActionSpace],
    method: CertMethod,
    mut z_of: F,
) -> Result<ICCertificate, AsymptoticsError>
where
    F: FnMut(usize, usize, &ActionProfile) -> Result<f64, AsymptoticsError>,
{
    let n = spaces.len();
    let mut witnesses = Vec::new();
    for agent in 0..n {
        let natural_idx = spaces[agent].natural_index();
        let opponent_lens: Vec<usize> = (0..n)
            .filter(|&j| j != agent)
            .map(|j| spaces[j].len())
            .collect();
        for combo in Odometer::new(opponent_lens) {
            let mut profile = ActionProfile::new(
                (0..n)
                    .map(|j| {
                        if j == agent {
                            *spaces[agent].natural()
                        } else {
                            let pos = j - usize::from(j > agent);
                            spaces[j].grid()[combo[pos]]
                        }
                    })
                    .collect(),
            );
            for rival in (0..n).filter(|&j| j != agent) {
                profile.actions[agent] = *spaces[agent].natural();
                let z_nat = z_of(agent, rival, &profile)?;
                for (dev_idx, deviation) in spaces[agent].grid().iter().enumerate() {
                    if dev_idx == natural_idx {
                        continue;
                    }
                    profile.actions[agent] = *deviation;
                    let z_dev = z_of(agent, rival, &profile)?;
                    if z_dev > z_nat + IC_Z_MARGIN {
                        witnesses.push(Witness {
                            agent,
                            opponent_profile: profile.clone(),
                            deviation: *deviation,
                            natural: *spaces[agent].natural(),
                            win_prob_deviation: normal_cdf(z_dev),
                            win_prob_natural: normal_cdf(z_nat),
                        });
                    }
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
        design_id,
        verdict,
        witnesses,
        method,
        grid_sizes: spaces.iter().map(ActionSpace::len).collect(),
    })
}

/// Certify incentive compatibility through the identifying statistic: for
/// every agent, opponent grid profile and rival, the asymptotic probability
/// of out-scoring the rival must be maximized at the natural action.
pub fn check_ic_via_statistic(
    model: &OutcomeModel,
    score: &ScoreFunction,
    spaces: &[ActionSpace],
    k: usize,
) -> Result<ICCertificate, AsymptoticsError> {
    validate_spaces(model, spaces)?;
    // fail fast when the family has no identifying statistic
    if model.family() == Family::PoissonInterferenceTwoCell {
        return Err(AsymptoticsError::NoIdentifyingStatistic {
            family: model.family(),
        });
    }
    let design_id = format!("{}/{}", model.family(), score.id());
    certify_with(design_id, spaces, CertMethod::Analytic, |i, j, profile| {
        pairwise_win_z(model, score, profile, k, i, j)
    })
}

/// Certify (or refute) incentive compatibility directly from the cataloged
/// closed-form winning probabilities. Unlike [`check_ic_via_statistic`] this
/// works for the two-cell spillover design, which has closed forms but no
/// identifying statistic.
pub fn analytic_best_response(
    model: &OutcomeModel,
    score: &ScoreFunction,
    spaces: &[ActionSpace],
    k: usize,
) -> Result<ICCertificate, AsymptoticsError> {
    validate_spaces(model, spaces)?;
    if spaces.len() != 2 {
        return Err(AsymptoticsError::NoClosedForm {
            family: model.family(),
            score: format!("{} with {} agents", score.id(), spaces.len()),
        });
    }
    let design_id = format!("{}/{}", model.family(), score.id());
    certify_with(design_id, spaces, CertMethod::Analytic, |i, j, profile| {
        catalog_z(model, score, &profile.actions[i], &profile.actions[j], k)
    })
}

/// Outcome of the sufficiency conditions for incentive compatibility under
/// no interference: score composed as f(T_i), constant score variance over
/// each agent's grid, and f preserving the performance argmax.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SufficiencyReport {
    pub is_composed: bool,
    pub variance_const: bool,
    pub monotone: bool,
    /// All three conditions hold, certifying the design. When false the
    /// design may still be incentive-compatible (the conditions are
    /// sufficient, not necessary).
    pub certified: bool,
}

pub fn check_ic_sufficiency(
    model: &OutcomeModel,
    score: &ScoreFunction,
    spaces: &[ActionSpace],
    var_tolerance: f64,
) -> Result<SufficiencyReport, AsymptoticsError> {
    if model.family().is_interference() {
        return Err(AsymptoticsError::AssumptionViolated {
            family: model.family(),
        });
    }
    validate_spaces(model, spaces)?;
    // scores are built as transform(statistic_i) by construction
    let is_composed = true;

    let mut variance_const = true;
    let mut monotone = true;
    for space in spaces {
        let mut min_var = f64::INFINITY;
        let mut max_var = f64::NEG_INFINITY;
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (idx, action) in space.grid().iter().enumerate() {
            let chi = performance(model, action)?;
            let sigma2 = action_variance(model.family(), action)?;
            let deriv = score.transform.derivative(chi).ok_or_else(|| {
                AsymptoticsError::SingularTransform {
                    transform: score.transform.name(),
                    at: chi,
                }
            })?;
            let var = deriv * deriv * sigma2;
            min_var = min_var.min(var);
            max_var = max_var.max(var);
            let f_chi = apply_transform(&score.transform, chi);
            if f_chi > best.0 {
                best = (f_chi, idx);
            }
        }
        if !(max_var <= min_var * (1.0 + var_tolerance)) {
            variance_const = false;
        }
        if best.1 != space.natural_index() {
            monotone = false;
        }
    }
    Ok(SufficiencyReport {
        is_composed,
        variance_const,
        monotone,
        certified: is_composed && variance_const && monotone,
    })
}

/// Convexity diagnostics of a built stabilizer, from second differences on
/// the knot grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvexityFlags {
    pub nu_convex: bool,
    pub inv_sqrt_convex: bool,
    pub sigma2_convex: bool,
}

/// A variance-stabilizing transform built by quadrature, with the sampled
/// variance profile and convexity diagnostics attached.
#[derive(Clone, Debug)]
pub struct StabilizedTransform {
    pub base: Transform,
    pub sigma2_at_knots: Vec<f64>,
    pub convexity: ConvexityFlags,
    pub quad_error: f64,
}

impl StabilizedTransform {
    pub fn table(&self) -> &MonotoneTable {
        match &self.base {
            Transform::Tabulated(t) => t,
            _ => unreachable!("stabilizers are always tabulated"),
        }
    }
}

/// Inputs for [`build_stabilizer`].
pub struct StabilizerSpec<'a> {
    /// Variance of the identifying statistic as a function of the
    /// performance value z (that is, sigma^2(chi^{-1}(z))).
    pub sigma2_of_chi: &'a dyn Fn(f64) -> f64,
    /// Performance values of the action grid, used to verify that the
    /// performance map is one-to-one on the grid.
    pub chi_samples: &'a [f64],
    /// Performance range [chi_lo, chi_hi] to tabulate; the transform is
    /// anchored at nu(chi_lo) = 0.
    pub range: (f64, f64),
    /// Absolute quadrature tolerance for the whole table.
    pub quad_tol: f64,
    /// Number of knots in the emitted table.
    pub knots: usize,
}

/// Build nu(y) = integral_{chi_lo}^{y} dz / sqrt(sigma^2(chi^{-1}(z))) on an
/// even knot grid by adaptive Simpson quadrature.
pub fn build_stabilizer(spec: &StabilizerSpec) -> Result<StabilizedTransform, AsymptoticsError> {
    let (lo, hi) = spec.range;
    if !(lo < hi) {
        return Err(AsymptoticsError::NotInvertible(format!(
            "empty performance range [{lo}, {hi}]"
        )));
    }
    if spec.chi_samples.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(AsymptoticsError::NotInvertible(
            "performance is not strictly increasing over the sampled actions".into(),
        ));
    }
    if spec.knots < 2 {
        return Err(AsymptoticsError::InvalidVariance(
            "stabilizer needs at least 2 knots".into(),
        ));
    }
    let n = spec.knots;
    let h = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
    let sigma2: Vec<f64> = xs.iter().map(|&x| (spec.sigma2_of_chi)(x)).collect();
    if let Some(bad) = sigma2.iter().position(|&s| !(s > 0.0)) {
        return Err(AsymptoticsError::InvalidVariance(format!(
            "sigma^2 = {} at chi = {}",
            sigma2[bad], xs[bad]
        )));
    }
    let integrand = |z: f64| 1.0 / (spec.sigma2_of_chi)(z).sqrt();
    let seg_tol = (spec.quad_tol / (n - 1) as f64).max(1e-300);
    let mut nus = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut err = 0.0;
    nus.push(0.0);
    for w in xs.windows(2) {
        let r = adaptive_simpson(&integrand, w[0], w[1], seg_tol);
        acc += r.value;
        err += r.error_estimate;
        nus.push(acc);
    }
    let inv_sqrt: Vec<f64> = xs.iter().map(|&x| integrand(x)).collect();
    let convexity = ConvexityFlags {
        nu_convex: is_convex(&nus, h),
        inv_sqrt_convex: is_convex(&inv_sqrt, h),
        sigma2_convex: is_convex(&sigma2, h),
    };
    let table = MonotoneTable::new(xs, nus)
        .map_err(|e| AsymptoticsError::InvalidVariance(e.to_string()))?;
    Ok(StabilizedTransform {
        base: Transform::Tabulated(table),
        sigma2_at_knots: sigma2,
        convexity,
        quad_error: err,
    })
}

/// Second-difference convexity test with relative tolerance.
fn is_convex(values: &[f64], h: f64) -> bool {
    let second: Vec<f64> = values
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]) / (h * h))
        .collect();
    let scale = second.iter().fold(1.0f64, |m, d| m.max(d.abs()));
    second.iter().all(|&d| d >= -CONVEXITY_TOL * scale)
}

/// Variance of the identifying statistic as a function of the performance
/// value, for the families where that relationship is functional.
pub fn variance_profile(family: Family) -> Option<fn(f64) -> f64> {
    match family {
        Family::PoissonIid => Some(|z| z),
        Family::NormalCurved => Some(|z| z * z * z * z),
        _ => None,
    }
}

/// How winning probabilities are computed in [`power_compare`].
#[derive(Clone, Copy, Debug)]
pub enum PowerMethod {
    Analytic,
    MonteCarlo { reps: u64, seed: u64 },
}

/// Power comparison of two certified designs.
#[derive(Clone, Debug)]
pub struct PowerReport {
    /// The highest-quality agent under the natural profile.
    pub tau: usize,
    pub p_tau_d: f64,
    pub p_tau_dprime: f64,
    pub more_powerful: bool,
    /// Standard errors when estimated by Monte Carlo.
    pub se: Option<(f64, f64)>,
}

/// Compare the winning probability of the highest-quality agent at the
/// natural profile under two incentive-compatible designs. Both designs
/// must carry an IC certificate.
#[allow(clippy::too_many_arguments)]
pub fn power_compare(
    design_d: &Design,
    cert_d: &ICCertificate,
    design_dprime: &Design,
    cert_dprime: &ICCertificate,
    model: &OutcomeModel,
    natural_profile: &ActionProfile,
    k: usize,
    method: PowerMethod,
) -> Result<PowerReport, AsymptoticsError> {
    for (design, cert) in [(design_d, cert_d), (design_dprime, cert_dprime)] {
        if cert.verdict != ICVerdict::Ic {
            return Err(AsymptoticsError::NotCertified(design.id.clone()));
        }
    }
    let chi = performance_vector(model, natural_profile)?;
    let tau = chi
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.partial_cmp(b).unwrap().then_with(|| j.cmp(i)))
        .map(|(i, _)| i)
        .unwrap();
    match method {
        PowerMethod::Analytic => {
            let p_d = analytic_win_prob(model, &design_d.score, natural_profile, k)?[tau];
            let p_dp = analytic_win_prob(model, &design_dprime.score, natural_profile, k)?[tau];
            Ok(PowerReport {
                tau,
                p_tau_d: p_d,
                p_tau_dprime: p_dp,
                more_powerful: p_dp >= p_d - 1e-12,
                se: None,
            })
        }
        PowerMethod::MonteCarlo { reps, seed } => {
            let n = natural_profile.len();
            let estimate = |score: &ScoreFunction, salt: u64| {
                let spaces: Vec<ActionSpace> = natural_profile
                    .actions
                    .iter()
                    .map(|a| ActionSpace::new(model.family(), vec![*a]))
                    .collect::<Result<_, _>>()?;
                let scenario = Scenario::new(
                    *model,
                    score.clone(),
                    spaces,
                    k * n,
                    n,
                    1,
                    Aggregation::SummedScores,
                )
                .map_err(Box::new)?;
                let est = estimate_win_prob(
                    &scenario,
                    std::slice::from_ref(natural_profile),
                    reps,
                    seed.wrapping_add(salt),
                )
                .map_err(Box::new)?;
                Ok::<_, AsymptoticsError>((est.p_hat[tau], est.se[tau]))
            };
            let (p_d, se_d) = estimate(&design_d.score, 0)?;
            let (p_dp, se_dp) = estimate(&design_dprime.score, 1)?;
            let margin = 3.0 * (se_d * se_d + se_dp * se_dp).sqrt();
            Ok(PowerReport {
                tau,
                p_tau_d: p_d,
                p_tau_dprime: p_dp,
                more_powerful: p_dp >= p_d - margin,
                se: Some((se_d, se_dp)),
            })
        }
    }
}
