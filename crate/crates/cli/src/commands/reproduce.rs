//! `icx reproduce`: re-run the bundled reference studies and diff the
//! results against their expected values. Exits nonzero if any row fails.

use super::CmdError;
use crate::exit;
use crate::report::{fmt_sig, Format, Report};
use icx_core::{
    analytic_win_prob, build_algebra, check_ic_sufficiency, check_ic_via_statistic,
    delta_covariance, identifying_covariance, pairwise_variance, power_compare, rng,
    run_transform_study, stats::normal_cdf, Action, ActionProfile, ActionSpace, Design, Family,
    ICVerdict, OutcomeModel, PowerMethod, ScoreFunction, Statistic, Transform,
};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReproduceTarget {
    Table2,
    Example2a,
    Example2d,
    Example3b,
    Example3g,
}

impl ReproduceTarget {
    pub fn parse(name: &str) -> Result<Self, String> {
        match name {
            "table2" => Ok(Self::Table2),
            "example2a" => Ok(Self::Example2a),
            "example2d" => Ok(Self::Example2d),
            "example3b" => Ok(Self::Example3b),
            "example3g" => Ok(Self::Example3g),
            other => Err(format!(
                "unknown target `{other}` (expected table2, example2a, example2d, example3b or \
                 example3g)"
            )),
        }
    }
}

/// Expected agent-1 win rates of the two-block transform study:
/// (units/block, identity, sqrt), at 10,000 replications.
pub const TRANSFORM_STUDY_EXPECTED: [(usize, f64, f64); 7] = [
    (5, 0.62, 0.65),
    (10, 0.67, 0.72),
    (25, 0.77, 0.82),
    (50, 0.85, 0.91),
    (100, 0.93, 0.97),
    (500, 1.00, 1.00),
    (1000, 1.00, 1.00),
];

/// Block rates of the reference study: agent 1 plays (5, 10), agent 2
/// plays (4.25, 9.95).
pub const TRANSFORM_STUDY_RATES: [[f64; 2]; 2] = [[5.0, 10.0], [4.25, 9.95]];

pub const TRANSFORM_STUDY_TOLERANCE: f64 = 0.02;

struct Checker {
    report: Report,
    failures: usize,
}

impl Checker {
    fn new() -> Self {
        Self {
            report: Report::new(vec![
                "check", "computed", "expected", "delta", "tol", "status",
            ]),
            failures: 0,
        }
    }

    fn value(&mut self, name: &str, computed: f64, expected: f64, tol: f64) {
        let delta = (computed - expected).abs();
        let pass = delta <= tol;
        if !pass {
            self.failures += 1;
        }
        self.report.push_row(vec![
            name.to_string(),
            fmt_sig(computed, 6),
            fmt_sig(expected, 6),
            fmt_sig(delta, 3),
            fmt_sig(tol, 3),
            if pass { "pass" } else { "FAIL" }.to_string(),
        ]);
    }

    fn flag(&mut self, name: &str, computed: bool, expected: bool) {
        let pass = computed == expected;
        if !pass {
            self.failures += 1;
        }
        self.report.push_row(vec![
            name.to_string(),
            computed.to_string(),
            expected.to_string(),
            "-".to_string(),
            "-".to_string(),
            if pass { "pass" } else { "FAIL" }.to_string(),
        ]);
    }

    fn finish(self, format: Format) -> Result<u8, CmdError> {
        print!("{}", self.report.render(format));
        if self.failures == 0 {
            println!("all checks passed");
            Ok(exit::OK)
        } else {
            println!("{} check(s) FAILED", self.failures);
            Ok(exit::RUNTIME)
        }
    }
}

pub fn reproduce(
    target: ReproduceTarget,
    seed: Option<u64>,
    reps: Option<u64>,
    format: Format,
) -> Result<u8, CmdError> {
    match target {
        ReproduceTarget::Table2 => table2(seed.unwrap_or(20240), reps.unwrap_or(10_000), format),
        ReproduceTarget::Example2a => example2a(format),
        ReproduceTarget::Example2d => example2d(format),
        ReproduceTarget::Example3b => example3b(format),
        ReproduceTarget::Example3g => example3g(seed.unwrap_or(30), reps.unwrap_or(10_000), format),
    }
}

fn table2(seed: u64, reps: u64, format: Format) -> Result<u8, CmdError> {
    let rates: Vec<Vec<f64>> = TRANSFORM_STUDY_RATES.iter().map(|r| r.to_vec()).collect();
    let k_list: Vec<usize> = TRANSFORM_STUDY_EXPECTED
        .iter()
        .map(|(k, _, _)| *k)
        .collect();
    let cells = run_transform_study(
        &rates,
        &k_list,
        &[Transform::Identity, Transform::ScaledSqrt],
        reps,
        seed,
    )
    .map_err(|e| CmdError::runtime(e.to_string()))?;
    let mut checker = Checker::new();
    for &(k, expect_id, expect_sqrt) in &TRANSFORM_STUDY_EXPECTED {
        for (transform, expected) in [("identity", expect_id), ("scaled_sqrt", expect_sqrt)] {
            let cell = cells
                .iter()
                .find(|c| c.k == k && c.transform == transform)
                .expect("cell present");
            checker.value(
                &format!("k={k} nu={transform}"),
                cell.p_agent1,
                expected,
                TRANSFORM_STUDY_TOLERANCE,
            );
        }
    }
    checker.finish(format)
}

fn example2a(format: Format) -> Result<u8, CmdError> {
    // two mean/variance actions against a fixed strong rival, mean score,
    // one unit per agent
    let model = OutcomeModel::new(Family::NormalMeanVar, None).unwrap();
    let score = ScoreFunction::new(Statistic::SampleMean, Transform::Identity);
    let natural = ActionProfile::new(vec![
        Action::normal_mean_var(2.0, 20.0).unwrap(),
        Action::normal_mean_var(9.0, 1.0).unwrap(),
    ]);
    let deviation = ActionProfile::new(vec![
        Action::normal_mean_var(1.5, 100.0).unwrap(),
        Action::normal_mean_var(9.0, 1.0).unwrap(),
    ]);
    let p_nat = analytic_win_prob(&model, &score, &natural, 1).unwrap()[0];
    let p_dev = analytic_win_prob(&model, &score, &deviation, 1).unwrap()[0];
    let mut checker = Checker::new();
    checker.value("P1(natural, k=1)", p_nat, 0.063315, 1e-6);
    checker.value("P1(deviation, k=1)", p_dev, 0.227750, 1e-6);
    checker.flag("deviation beats natural", p_dev > p_nat, true);
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
    let cert = check_ic_via_statistic(&model, &score, &spaces, 1)
        .map_err(|e| CmdError::runtime(e.to_string()))?;
    checker.flag(
        "design certified NotIC",
        cert.verdict == ICVerdict::NotIc,
        true,
    );
    checker.finish(format)
}

fn example2d(format: Format) -> Result<u8, CmdError> {
    // negated reciprocal of the sample mean on the mean^4-variance family
    let model = OutcomeModel::new(Family::NormalCurved, None).unwrap();
    let score = ScoreFunction::new(Statistic::SampleMean, Transform::NegReciprocal);
    let spaces = vec![
        ActionSpace::new(
            Family::NormalCurved,
            vec![
                Action::normal_curved(1.5).unwrap(),
                Action::normal_curved(2.0).unwrap(),
                Action::normal_curved(3.0).unwrap(),
            ],
        )
        .unwrap(),
        ActionSpace::new(
            Family::NormalCurved,
            vec![
                Action::normal_curved(2.0).unwrap(),
                Action::normal_curved(9.0).unwrap(),
            ],
        )
        .unwrap(),
    ];
    let mut checker = Checker::new();
    let t2 = check_ic_sufficiency(&model, &score, &spaces, 1e-9)
        .map_err(|e| CmdError::runtime(e.to_string()))?;
    checker.flag("score composed as f(T)", t2.is_composed, true);
    checker.flag("score variance constant", t2.variance_const, true);
    checker.flag("transform preserves argmax", t2.monotone, true);
    checker.flag("sufficiency certified", t2.certified, true);
    let cert = check_ic_via_statistic(&model, &score, &spaces, 100)
        .map_err(|e| CmdError::runtime(e.to_string()))?;
    checker.flag("design certified IC", cert.verdict == ICVerdict::Ic, true);
    checker.finish(format)
}

fn example3b(format: Format) -> Result<u8, CmdError> {
    let model = OutcomeModel::new(Family::PoissonIid, None).unwrap();
    let id = Design::new(ScoreFunction::new(
        Statistic::SampleMean,
        Transform::Identity,
    ));
    let sq = Design::new(ScoreFunction::new(
        Statistic::SampleMean,
        Transform::ScaledSqrt,
    ));
    let profile = ActionProfile::new(vec![
        Action::poisson_rate(5.0).unwrap(),
        Action::poisson_rate(4.0).unwrap(),
    ]);
    let k = 50;
    let p_id = analytic_win_prob(&model, &id.score, &profile, k).unwrap()[0];
    let p_sq = analytic_win_prob(&model, &sq.score, &profile, k).unwrap()[0];
    let mut checker = Checker::new();
    checker.value("P1(identity, k=50)", p_id, 0.990789, 1e-6);
    checker.value("P1(sqrt, k=50)", p_sq, 0.990879, 1e-6);
    checker.flag("sqrt design wins more", p_sq > p_id, true);

    // strict dominance over a 20x20 rate grid at both unit counts
    let mut violations = 0usize;
    for k in [10.0f64, 100.0] {
        for i in 1..20 {
            for j in 0..i {
                let l1 = 0.1 + i as f64 * (19.9 / 19.0);
                let l2 = 0.1 + j as f64 * (19.9 / 19.0);
                let z_sqrt = (2.0 * k).sqrt() * (l1.sqrt() - l2.sqrt());
                let z_id = k.sqrt() * (l1 - l2) / (l1 + l2).sqrt();
                if z_sqrt <= z_id || normal_cdf(z_sqrt) < normal_cdf(z_id) {
                    violations += 1;
                }
            }
        }
    }
    checker.value("dominance violations on grid", violations as f64, 0.0, 0.0);

    let spaces = vec![
        ActionSpace::new(
            Family::PoissonIid,
            vec![
                Action::poisson_rate(5.0).unwrap(),
                Action::poisson_rate(4.0).unwrap(),
            ],
        )
        .unwrap(),
        ActionSpace::new(
            Family::PoissonIid,
            vec![
                Action::poisson_rate(4.0).unwrap(),
                Action::poisson_rate(3.0).unwrap(),
            ],
        )
        .unwrap(),
    ];
    let cert_id = check_ic_via_statistic(&model, &id.score, &spaces, k)
        .map_err(|e| CmdError::runtime(e.to_string()))?;
    let cert_sq = check_ic_via_statistic(&model, &sq.score, &spaces, k)
        .map_err(|e| CmdError::runtime(e.to_string()))?;
    let power = power_compare(
        &id,
        &cert_id,
        &sq,
        &cert_sq,
        &model,
        &profile,
        k,
        PowerMethod::Analytic,
    )
    .map_err(|e| CmdError::runtime(e.to_string()))?;
    checker.flag("sqrt design more powerful", power.more_powerful, true);
    checker.finish(format)
}

fn example3g(seed: u64, reps: u64, format: Format) -> Result<u8, CmdError> {
    let gamma = 0.5;
    let model = OutcomeModel::new(Family::PoissonInterferenceFourCell, Some(gamma)).unwrap();
    let score = ScoreFunction::new(Statistic::SpilloverAdjusted, Transform::Identity);
    let mut checker = Checker::new();

    // closed-form vs dense pairwise variance over random draws
    let mut rng_stream = rng::StreamTree::new(seed).child(rng::tag::CELL, 0).rng();
    let mut max_delta = 0.0f64;
    for _ in 0..100 {
        let g: f64 = rng_stream.random::<f64>() * 0.95;
        let mut draw = || 0.1 + 9.9 * rng_stream.random::<f64>();
        let profile = ActionProfile::new(vec![
            Action::interference_pair(draw(), draw()).unwrap(),
            Action::interference_pair(draw(), draw()).unwrap(),
        ]);
        let alg = build_algebra(g).map_err(|e| CmdError::runtime(e.to_string()))?;
        let closed = alg.pairwise_variance_closed_form(&profile).unwrap();
        let draw_model = OutcomeModel::new(Family::PoissonInterferenceFourCell, Some(g)).unwrap();
        let chi: Vec<f64> = profile
            .actions
            .iter()
            .map(|a| icx_core::performance(&draw_model, a).unwrap())
            .collect();
        let sigma = identifying_covariance(&draw_model, &profile).unwrap();
        let v = delta_covariance(&sigma, &Transform::Identity, &chi).unwrap();
        let dense = pairwise_variance(&v, 0, 1).unwrap();
        max_delta = max_delta.max((closed - dense).abs());
    }
    checker.value(
        "max |closed - dense| pairwise variance",
        max_delta,
        0.0,
        1e-10,
    );

    // unbiasedness of the spillover-adjusted statistic: E[T] = (4, 6)
    let profile = ActionProfile::new(vec![
        Action::interference_pair(3.0, 1.0).unwrap(),
        Action::interference_pair(2.0, 4.0).unwrap(),
    ]);
    let alg = build_algebra(gamma).unwrap();
    let rates = icx_core::outcome_models::four_cell_rates(gamma, &profile.actions);
    let per_cell = 1000usize; // m = 4000
    let root = rng::StreamTree::new(seed);
    let mut sums = [0.0f64; 2];
    let mut sq_sums = [0.0f64; 2];
    for r in 0..reps {
        let mut cell_rng = root.child(rng::tag::REPLICATION, r).rng();
        let mut cells = [0.0f64; 4];
        for (cell, &rate) in cells.iter_mut().zip(&rates) {
            *cell = icx_core::outcome_models::sample_poisson(rate * per_cell as f64, &mut cell_rng)
                / per_cell as f64;
        }
        let t = alg.compute_t(cells);
        for (i, &ti) in t.iter().enumerate() {
            sums[i] += ti;
            sq_sums[i] += ti * ti;
        }
    }
    for (i, expected) in [(0usize, 4.0f64), (1, 6.0)] {
        let mean = sums[i] / reps as f64;
        let var = (sq_sums[i] / reps as f64 - mean * mean).max(0.0);
        let se = (var / reps as f64).sqrt();
        checker.value(
            &format!("E[T{}] (3 SE = {})", i + 1, fmt_sig(3.0 * se, 3)),
            mean,
            expected,
            3.0 * se,
        );
    }

    // incentives aligned under the spillover-adjusted design
    let mk = |pairs: &[(f64, f64)]| {
        ActionSpace::new(
            Family::PoissonInterferenceFourCell,
            pairs
                .iter()
                .map(|&(l, c)| Action::interference_pair(l, c).unwrap())
                .collect(),
        )
        .unwrap()
    };
    let spaces = vec![
        mk(&[(3.0, 1.0), (2.0, 4.0), (5.0, 0.5)]),
        mk(&[(2.0, 2.0), (1.0, 4.5), (3.0, 0.5)]),
    ];
    let cert = check_ic_via_statistic(&model, &score, &spaces, 200)
        .map_err(|e| CmdError::runtime(e.to_string()))?;
    checker.flag("design certified IC", cert.verdict == ICVerdict::Ic, true);
    checker.finish(format)
}
