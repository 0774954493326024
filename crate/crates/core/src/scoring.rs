//! Score functions: the statistic computed from observed outcomes, the
//! transform applied to it, and the winner rule.
//!
//! Transforms map out-of-domain inputs to a negative-infinity sentinel
//! instead of erroring, so the winner rule stays total over every sample
//! path a Monte Carlo run can produce (a Poisson sample mean of zero under
//! a reciprocal score simply loses that replication).

use crate::interference::build_algebra;
use crate::outcome_models::ObservedOutcomes;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("missing parameter: {0}")]
    MissingParameter(String),
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
}

/// Strictly ordered knots with nondecreasing values; evaluation is
/// piecewise-linear with clamped extrapolation beyond the ends.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneTable {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl MonotoneTable {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self, ScoreError> {
        if xs.len() != values.len() {
            return Err(ScoreError::InvalidTable(format!(
                "{} knots but {} values",
                xs.len(),
                values.len()
            )));
        }
        if xs.len() < 2 {
            return Err(ScoreError::InvalidTable("need at least 2 knots".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ScoreError::InvalidTable(
                "knot abscissae must be strictly increasing".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(ScoreError::InvalidTable(
                "knot values must be nondecreasing".into(),
            ));
        }
        if xs.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(ScoreError::InvalidTable("knots must be finite".into()));
        }
        Ok(Self { xs, values })
    }

    /// Parse the two-column `x value` text format (one knot per line,
    /// blank lines and `#` comments ignored).
    pub fn parse_text(text: &str) -> Result<Self, ScoreError> {
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<f64, ScoreError> {
                s.ok_or_else(|| {
                    ScoreError::InvalidTable(format!("line {}: expected two columns", lineno + 1))
                })?
                .parse()
                .map_err(|e| ScoreError::InvalidTable(format!("line {}: {e}", lineno + 1)))
            };
            xs.push(parse(cols.next())?);
            values.push(parse(cols.next())?);
            if cols.next().is_some() {
                return Err(ScoreError::InvalidTable(format!(
                    "line {}: expected exactly two columns",
                    lineno + 1
                )));
            }
        }
        Self::new(xs, values)
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn segment_of(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|k| k.total_cmp(&x)) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.xs.len() - 2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(self.xs[0], self.xs[self.xs.len() - 1]);
        let s = self.segment_of(x);
        let (x0, x1) = (self.xs[s], self.xs[s + 1]);
        let t = (x - x0) / (x1 - x0);
        self.values[s] + t * (self.values[s + 1] - self.values[s])
    }

    /// Derivative estimate at `x` from the cubic through the four knots
    /// bracketing it (fewer near the ends or for short tables).
    pub fn derivative(&self, x: f64) -> f64 {
        let x = x.clamp(self.xs[0], self.xs[self.xs.len() - 1]);
        let s = self.segment_of(x);
        let lo = s.saturating_sub(1);
        let hi = (s + 2).min(self.xs.len() - 1);
        lagrange_derivative(&self.xs[lo..=hi], &self.values[lo..=hi], x)
    }

    /// Shift every knot value by a constant (scores shift; winners do not).
    #[must_use]
    pub fn shifted(&self, c: f64) -> MonotoneTable {
        MonotoneTable {
            xs: self.xs.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }
}

/// Derivative at `x` of the polynomial interpolating `(xs, ys)`.
fn lagrange_derivative(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let mut acc = 0.0;
    for i in 0..n {
        let denom: f64 = (0..n).filter(|&r| r != i).map(|r| xs[i] - xs[r]).product();
        let mut basis_deriv = 0.0;
        for m in 0..n {
            if m == i {
                continue;
            }
            let prod: f64 = (0..n)
                .filter(|&r| r != i && r != m)
                .map(|r| x - xs[r])
                .product();
            basis_deriv += prod;
        }
        acc += ys[i] * basis_deriv / denom;
    }
    acc
}

/// Score transform f applied elementwise to the identifying statistic.
#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    Identity,
    /// f(x) = 1/x; x = 0 maps to the losing sentinel.
    Reciprocal,
    /// f(x) = -1/x; x = 0 maps to the losing sentinel.
    NegReciprocal,
    /// f(x) = 2 sqrt(x); x < 0 maps to the losing sentinel.
    ScaledSqrt,
    Tabulated(MonotoneTable),
}

impl Transform {
    pub fn name(&self) -> String {
        match self {
            Transform::Identity => "identity".into(),
            Transform::Reciprocal => "reciprocal".into(),
            Transform::NegReciprocal => "neg_reciprocal".into(),
            Transform::ScaledSqrt => "scaled_sqrt".into(),
            Transform::Tabulated(t) => format!("tabulated[{}]", t.len()),
        }
    }

    /// f'(x) where defined; `None` at points where the transform is not
    /// differentiable (reciprocals at zero, scaled sqrt at x <= 0).
    pub fn derivative(&self, x: f64) -> Option<f64> {
        match self {
            Transform::Identity => Some(1.0),
            Transform::Reciprocal => (x != 0.0).then(|| -1.0 / (x * x)),
            Transform::NegReciprocal => (x != 0.0).then(|| 1.0 / (x * x)),
            Transform::ScaledSqrt => (x > 0.0).then(|| 1.0 / x.sqrt()),
            Transform::Tabulated(t) => Some(t.derivative(x)),
        }
    }
}

impl std::fmt::Display for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// Apply a transform; out-of-domain inputs return -inf so the replication
/// is lost rather than poisoned.
pub fn apply_transform(t: &Transform, x: f64) -> f64 {
    match t {
        Transform::Identity => x,
        Transform::Reciprocal => {
            if x == 0.0 {
                f64::NEG_INFINITY
            } else {
                1.0 / x
            }
        }
        Transform::NegReciprocal => {
            if x == 0.0 {
                f64::NEG_INFINITY
            } else {
                -1.0 / x
            }
        }
        Transform::ScaledSqrt => {
            if x < 0.0 {
                f64::NEG_INFINITY
            } else {
                2.0 * x.sqrt()
            }
        }
        Transform::Tabulated(table) => table.eval(x),
    }
}

/// Which statistic the score is built on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statistic {
    /// Per-agent sample mean of observed outcomes.
    SampleMean,
    /// Spillover-adjusted recovery T = B C^{-1} Y from the four-cell design.
    SpilloverAdjusted,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::SampleMean => "sample_mean",
            Statistic::SpilloverAdjusted => "spillover_adjusted",
        }
    }
}

/// A score function: statistic followed by a transform.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreFunction {
    pub statistic: Statistic,
    pub transform: Transform,
}

impl ScoreFunction {
    pub fn new(statistic: Statistic, transform: Transform) -> Self {
        Self {
            statistic,
            transform,
        }
    }

    pub fn id(&self) -> String {
        format!("{}/{}", self.statistic.name(), self.transform)
    }
}

/// Compute the pre-transform statistic vector from observed outcomes.
///
/// `gamma` is required for (and only for) the spillover-adjusted statistic.
pub fn compute_statistic(
    score_fn: &ScoreFunction,
    outcomes: &ObservedOutcomes,
    gamma: Option<f64>,
) -> Result<Vec<f64>, ScoreError> {
    match score_fn.statistic {
        Statistic::SampleMean => sample_means(outcomes),
        Statistic::SpilloverAdjusted => {
            let gamma = gamma.ok_or_else(|| {
                ScoreError::MissingParameter("spillover_adjusted statistic requires gamma".into())
            })?;
            let cells = cell_means(outcomes)?;
            let alg =
                build_algebra(gamma).map_err(|e| ScoreError::MissingParameter(e.to_string()))?;
            Ok(alg.compute_t(cells).to_vec())
        }
    }
}

/// Per-agent means, pooled over all of an agent's units.
pub fn sample_means(outcomes: &ObservedOutcomes) -> Result<Vec<f64>, ScoreError> {
    let n = outcomes.assignment.n_agents;
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for (&agent, &y) in outcomes.assignment.z.iter().zip(&outcomes.y) {
        sums[agent] += y;
        counts[agent] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            if c == 0 {
                Err(ScoreError::InvalidDimensions(
                    "agent with no assigned units".into(),
                ))
            } else {
                Ok(s / c as f64)
            }
        })
        .collect()
}

/// The four cell means (G11, G12, G21, G22) of a grouped two-agent
/// assignment.
pub fn cell_means(outcomes: &ObservedOutcomes) -> Result<[f64; 4], ScoreError> {
    let groups = outcomes.assignment.block.as_ref().ok_or_else(|| {
        ScoreError::InvalidDimensions("assignment carries no group labels".into())
    })?;
    if outcomes.assignment.n_agents != 2 {
        return Err(ScoreError::InvalidDimensions(
            "cell means are defined for 2 agents".into(),
        ));
    }
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for ((&agent, &group), &y) in outcomes.assignment.z.iter().zip(groups).zip(&outcomes.y) {
        if group > 1 {
            return Err(ScoreError::InvalidDimensions(
                "four-cell layout expects exactly 2 groups".into(),
            ));
        }
        let cell = group * 2 + agent;
        sums[cell] += y;
        counts[cell] += 1;
    }
    let mut means = [0.0; 4];
    for cell in 0..4 {
        if counts[cell] == 0 {
            return Err(ScoreError::InvalidDimensions(format!(
                "empty test set (cell {cell})"
            )));
        }
        means[cell] = sums[cell] / counts[cell] as f64;
    }
    Ok(means)
}

/// Winner rule: index of the maximum score, ties resolved uniformly at
/// random so per-replication win probabilities always sum to one.
pub fn declare_winner(scores: &[f64], rng: &mut impl Rng) -> usize {
    debug_assert!(!scores.is_empty());
    debug_assert!(scores.iter().all(|s| !s.is_nan()));
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // -inf == -inf, so an all-sentinel vector is an n-way tie
    let tied: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == max)
        .map(|(i, _)| i)
        .collect();
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcome_models::Assignment;
    use crate::rng::{tag, StreamTree};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn obs(y: Vec<f64>, z: Vec<usize>, n: usize) -> ObservedOutcomes {
        ObservedOutcomes {
            y,
            assignment: Assignment {
                n_agents: n,
                z,
                block: None,
            },
        }
    }

    #[test]
    fn sample_mean_reference_case() {
        let o = obs(vec![0.0, 1.0, 4.0, 1.0], vec![0, 1, 0, 1], 2);
        let sf = ScoreFunction::new(Statistic::SampleMean, Transform::Identity);
        assert_eq!(compute_statistic(&sf, &o, None).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn sample_mean_constant_data() {
        let o = obs(vec![3.0; 6], vec![0, 1, 2, 0, 1, 2], 3);
        let sf = ScoreFunction::new(Statistic::SampleMean, Transform::Identity);
        assert_eq!(
            compute_statistic(&sf, &o, None).unwrap(),
            vec![3.0, 3.0, 3.0]
        );
    }

    #[test]
    fn spillover_statistic_requires_gamma() {
        let o = ObservedOutcomes {
            y: vec![2.0, 3.0, 5.0, 7.0],
            assignment: Assignment {
                n_agents: 2,
                z: vec![0, 1, 0, 1],
                block: Some(vec![0, 0, 1, 1]),
            },
        };
        let sf = ScoreFunction::new(Statistic::SpilloverAdjusted, Transform::Identity);
        assert!(matches!(
            compute_statistic(&sf, &o, None),
            Err(ScoreError::MissingParameter(_))
        ));
        // gamma = 0: permutation case, T = (Y11 + Y21, Y12 + Y22)
        let t = compute_statistic(&sf, &o, Some(0.0)).unwrap();
        assert_abs_diff_eq!(t[0], 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[1], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_values() {
        assert_eq!(apply_transform(&Transform::NegReciprocal, 2.0), -0.5);
        assert_eq!(apply_transform(&Transform::ScaledSqrt, 9.0), 6.0);
        // not order-preserving across zero: 2 > -1 yet f(2) < f(-1)
        assert_eq!(apply_transform(&Transform::NegReciprocal, -1.0), 1.0);
        assert_eq!(
            apply_transform(&Transform::Reciprocal, 0.0),
            f64::NEG_INFINITY
        );
        assert_eq!(
            apply_transform(&Transform::ScaledSqrt, -0.5),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn neg_reciprocal_not_globally_increasing() {
        let f = |x: f64| apply_transform(&Transform::NegReciprocal, x);
        // increasing on each side of zero
        assert!(f(1.0) < f(2.0));
        assert!(f(-2.0) < f(-1.0));
        // but not globally
        assert!(f(-1.0) > f(2.0));
    }

    #[test]
    fn winner_basics() {
        let mut rng = StreamTree::new(1).child(tag::TIE_BREAK, 0).rng();
        assert_eq!(declare_winner(&[2.0, 1.0], &mut rng), 0);
        assert_eq!(declare_winner(&[f64::NEG_INFINITY, 0.1], &mut rng), 1);
    }

    #[test]
    fn winner_ties_are_uniform() {
        let root = StreamTree::new(2);
        let reps = 20_000;
        let wins: usize = (0..reps)
            .map(|r| declare_winner(&[3.0, 3.0], &mut root.child(tag::TIE_BREAK, r).rng()))
            .sum();
        let p = wins as f64 / reps as f64;
        assert!(
            (p - 0.5).abs() < 4.0 * (0.25f64 / reps as f64).sqrt(),
            "p = {p}"
        );
    }

    #[test]
    fn winner_handles_all_neg_infinite() {
        let mut rng = StreamTree::new(3).child(tag::TIE_BREAK, 0).rng();
        let w = declare_winner(&[f64::NEG_INFINITY, f64::NEG_INFINITY], &mut rng);
        assert!(w < 2);
    }

    #[test]
    fn table_reproduces_knots_and_clamps() {
        let t = MonotoneTable::new(vec![0.0, 1.0, 2.0], vec![0.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.eval(0.0), 0.0);
        assert_eq!(t.eval(1.0), 3.0);
        assert_eq!(t.eval(2.0), 4.0);
        assert_eq!(t.eval(0.5), 1.5);
        assert_eq!(t.eval(-10.0), 0.0); // clamped
        assert_eq!(t.eval(10.0), 4.0);
    }

    #[test]
    fn table_rejects_bad_input() {
        assert!(MonotoneTable::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(MonotoneTable::new(vec![0.0, 1.0], vec![2.0, 1.0]).is_err());
        assert!(MonotoneTable::new(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn table_text_round_trip() {
        let t = MonotoneTable::parse_text("# knots\n0.0 0.0\n1.0 2.0\n2.5 3.0\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.eval(1.0), 2.0);
        assert!(MonotoneTable::parse_text("0.0\n1.0 2.0\n").is_err());
    }

    #[test]
    fn table_derivative_is_accurate_on_smooth_function() {
        // dense tabulation of 2 sqrt(x); derivative should be ~ x^(-1/2)
        let xs: Vec<f64> = (0..=2000).map(|i| 0.5 + i as f64 * 0.005).collect();
        let vals: Vec<f64> = xs.iter().map(|x| 2.0 * x.sqrt()).collect();
        let t = MonotoneTable::new(xs, vals).unwrap();
        for x in [0.8, 1.0, 2.3, 5.0, 9.7] {
            let exact = 1.0 / f64::sqrt(x);
            assert!(
                (t.derivative(x) - exact).abs() < 1e-7 * exact,
                "x = {x}: {} vs {exact}",
                t.derivative(x)
            );
        }
    }

    proptest! {
        // winners are invariant under strictly increasing transforms of
        // finite scores (same tie pattern, same tie stream)
        #[test]
        fn winner_invariant_under_increasing_map(
            raw in proptest::collection::vec(-50.0..50.0f64, 2..6),
            scale in 0.1..4.0f64,
            shift in -10.0..10.0f64,
            seed in 0..u64::MAX,
        ) {
            // quantize so distinct scores stay distinct after the map
            let scores: Vec<f64> = raw.iter().map(|s| (s * 8.0).round() / 8.0).collect();
            let mapped: Vec<f64> = scores.iter().map(|s| (s * scale + shift).exp()).collect();
            let w1 = declare_winner(&scores, &mut StreamTree::new(seed).rng());
            let w2 = declare_winner(&mapped, &mut StreamTree::new(seed).rng());
            prop_assert_eq!(w1, w2);
        }

        #[test]
        fn table_is_monotone_between_knots(
            raw in proptest::collection::vec((0.01..1.0f64, 0.0..1.0f64), 3..12),
            query in 0.0..1.0f64,
        ) {
            // build strictly increasing xs / nondecreasing values from gaps
            let mut x = 0.0;
            let mut v = 0.0;
            let (mut xs, mut vals) = (Vec::new(), Vec::new());
            for (dx, dv) in raw {
                x += dx;
                v += dv;
                xs.push(x);
                vals.push(v);
            }
            let lo = xs[0];
            let hi = *xs.last().unwrap();
            let t = MonotoneTable::new(xs, vals).unwrap();
            let a = lo + query * (hi - lo);
            let b = (a + 0.05).min(hi);
            prop_assert!(t.eval(a) <= t.eval(b) + 1e-12);
        }
    }
}
