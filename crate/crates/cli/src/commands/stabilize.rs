//! `icx stabilize`: build the variance-stabilizing transform for the
//! configured family and write it as a two-column knot file usable as
//! `tabulated:<path>`.

use super::{CmdError, CommonOpts};
use crate::exit;
use crate::report::fmt_sig;
use icx_core::{build_stabilizer, performance, AsymptoticsError, StabilizerSpec};
use std::path::Path;

pub fn stabilize(opts: &CommonOpts, out: &Path) -> Result<u8, CmdError> {
    let built = opts.load()?;
    let scenario = &built.scenario;
    let model = scenario.model();
    let sigma2_of_chi =
        icx_core::asymptotics::variance_profile(model.family()).ok_or_else(|| {
            CmdError::runtime(format!(
                "family {} has no functional variance profile to stabilize",
                model.family()
            ))
        })?;

    // performance values over the union of the agents' grids
    let mut chi: Vec<f64> = scenario
        .spaces()
        .iter()
        .flat_map(|s| s.grid().iter())
        .map(|a| performance(model, a).expect("grid actions match the family"))
        .collect();
    chi.sort_by(f64::total_cmp);
    chi.dedup();

    let range = match built.analysis.chi_range {
        Some([lo, hi]) => (lo, hi),
        None => (chi[0], *chi.last().unwrap()),
    };
    let spec = StabilizerSpec {
        sigma2_of_chi: &sigma2_of_chi,
        chi_samples: &chi,
        range,
        quad_tol: built.analysis.quad_tol,
        knots: built.analysis.stabilizer_knots,
    };
    let st = match build_stabilizer(&spec) {
        Ok(st) => st,
        Err(e @ (AsymptoticsError::NotInvertible(_) | AsymptoticsError::InvalidVariance(_))) => {
            return Err(CmdError::runtime(e.to_string()))
        }
        Err(e) => return Err(CmdError::runtime(e.to_string())),
    };

    let mut knot_file = String::with_capacity(st.table().len() * 24);
    knot_file.push_str("# x nu(x)\n");
    for (x, nu) in st.table().knots() {
        knot_file.push_str(&format!("{x:.12e} {nu:.12e}\n"));
    }
    std::fs::write(out, knot_file)
        .map_err(|e| CmdError::runtime(format!("cannot write {}: {e}", out.display())))?;

    let mut text = format!(
        "wrote {} knots over [{}, {}] to {}\n",
        st.table().len(),
        fmt_sig(range.0, 6),
        fmt_sig(range.1, 6),
        out.display()
    );
    text.push_str(&format!(
        "quadrature error estimate: {}\n",
        fmt_sig(st.quad_error, 3)
    ));
    text.push_str(&format!(
        "convexity: nu_convex={} inv_sqrt_convex={} sigma2_convex={}\n",
        st.convexity.nu_convex, st.convexity.inv_sqrt_convex, st.convexity.sigma2_convex
    ));
    text.push_str(&format!("use as transform: tabulated:{}\n", out.display()));
    opts.emit(&text)?;
    Ok(exit::OK)
}
