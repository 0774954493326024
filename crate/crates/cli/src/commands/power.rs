//! `icx power`: compare the power of the configured design against an
//! alternative transform of the same statistic.

use super::{CmdError, CommonOpts, Method};
use crate::config::parse_transform;
use crate::exit;
use crate::report::{fmt_sig, Report};
use icx_core::{
    check_ic_via_statistic, mc_best_response, power_compare, BestResponseOptions, Design,
    ICCertificate, PowerMethod, ScoreFunction,
};

pub fn power(opts: &CommonOpts, alt_transform: &str, method: Method) -> Result<u8, CmdError> {
    let built = opts.load()?;
    let scenario = &built.scenario;
    let alt = parse_transform(alt_transform, opts.config_dir()).map_err(CmdError::config)?;
    let base = Design::new(scenario.score().clone());
    let alt_design = Design::new(ScoreFunction::new(scenario.score().statistic, alt));

    let certify = |score: &ScoreFunction, salt: u64| -> Result<ICCertificate, CmdError> {
        match method {
            Method::Analytic => {
                check_ic_via_statistic(scenario.model(), score, scenario.spaces(), scenario.k())
                    .map_err(|e| CmdError::runtime(e.to_string()))
            }
            Method::MonteCarlo => {
                let alt_scenario = icx_core::Scenario::new(
                    *scenario.model(),
                    score.clone(),
                    scenario.spaces().to_vec(),
                    scenario.units(),
                    scenario.agents(),
                    scenario.blocks(),
                    scenario.aggregation(),
                )
                .map_err(|e| CmdError::runtime(e.to_string()))?;
                mc_best_response(
                    &alt_scenario,
                    &BestResponseOptions {
                        reps_per_cell: built.reps,
                        master_seed: built.seed.wrapping_add(salt),
                        max_cells: built.analysis.max_cells,
                    },
                )
                .map_err(|e| CmdError::runtime(e.to_string()))
            }
        }
    };
    let cert_base = certify(&base.score, 1)?;
    let cert_alt = certify(&alt_design.score, 2)?;

    let natural = scenario.natural_profiles().remove(0);
    let power_method = match method {
        Method::Analytic => PowerMethod::Analytic,
        Method::MonteCarlo => PowerMethod::MonteCarlo {
            reps: built.reps,
            seed: built.seed,
        },
    };
    let report = match power_compare(
        &base,
        &cert_base,
        &alt_design,
        &cert_alt,
        scenario.model(),
        &natural,
        scenario.k(),
        power_method,
    ) {
        Ok(r) => r,
        Err(icx_core::AsymptoticsError::NotCertified(id)) => {
            opts.emit(&format!(
                "design {id} is not incentive-compatible; power comparison requires certified \
                 designs\n"
            ))?;
            return Ok(exit::NOT_IC);
        }
        Err(e) => return Err(CmdError::runtime(e.to_string())),
    };

    let mut table = Report::new(vec!["design", "transform", "p_tau", "se"]);
    let (se_d, se_dp) = report.se.unwrap_or((0.0, 0.0));
    table.push_row(vec![
        "D".to_string(),
        base.score.transform.name(),
        fmt_sig(report.p_tau_d, 6),
        fmt_sig(se_d, 6),
    ]);
    table.push_row(vec![
        "D'".to_string(),
        alt_design.score.transform.name(),
        fmt_sig(report.p_tau_dprime, 6),
        fmt_sig(se_dp, 6),
    ]);
    let mut text = format!("best agent tau: {}\n", report.tau + 1);
    text.push_str(&table.render(opts.format));
    text.push_str(&format!(
        "more_powerful(D' vs D): {}\n",
        report.more_powerful
    ));
    opts.emit(&text)?;
    Ok(exit::OK)
}
