//! `icx simulate`: Monte Carlo winning probabilities at the natural
//! profile, one CSV row per (units-per-agent, agent). With
//! `[analysis].k_list` set, the scenario is re-run at each listed size.

use super::{CmdError, CommonOpts};
use crate::exit;
use crate::report::{fmt_sig, Report};
use icx_core::{estimate_win_prob, Scenario};

pub fn simulate(opts: &CommonOpts) -> Result<u8, CmdError> {
    let built = opts.load()?;
    let base = &built.scenario;
    let k_list = match &built.analysis.k_list {
        Some(ks) if !ks.is_empty() => ks.clone(),
        _ => vec![base.k()],
    };
    let mut report = Report::new(vec![
        "scenario_id",
        "k",
        "transform",
        "agent",
        "p_hat",
        "se",
        "reps",
        "seed",
    ]);
    for &k in &k_list {
        let scenario = if k == base.k() {
            base.clone()
        } else {
            Scenario::new(
                *base.model(),
                base.score().clone(),
                base.spaces().to_vec(),
                k * base.agents() * base.blocks(),
                base.agents(),
                base.blocks(),
                base.aggregation(),
            )
            .map_err(|e| CmdError::config(format!("[analysis].k_list ({k}): {e}")))?
        };
        let profiles = scenario.natural_profiles();
        let est = estimate_win_prob(&scenario, &profiles, built.reps, built.seed)
            .map_err(|e| CmdError::runtime(e.to_string()))?;
        for (agent, (&p, &se)) in est.p_hat.iter().zip(&est.se).enumerate() {
            report.push_row(vec![
                built.id.clone(),
                k.to_string(),
                scenario.score().transform.name(),
                (agent + 1).to_string(),
                fmt_sig(p, 6),
                fmt_sig(se, 6),
                est.reps.to_string(),
                est.seed.to_string(),
            ]);
        }
    }
    opts.emit(&report.render(opts.format))?;
    Ok(exit::OK)
}
