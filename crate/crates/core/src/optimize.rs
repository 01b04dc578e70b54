//! Exhaustive (r, s) grid search minimizing the two-stage ETI for given
//! prevalence and sensitivity.

use crate::analytic::{eti_individual, eti_pooled_rs};
use crate::model::{DesignParams, PracticalParams};
use serde::{Deserialize, Serialize};

/// Result of an ETI grid search. `runner_up` is the second-best design,
/// useful for spotting near-ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub design: DesignParams,
    pub eti: f64,
    pub runner_up: Option<(DesignParams, f64)>,
}

/// Minimize ETI over individual testing and all pooled (r, s) with
/// `1 <= r <= r_max`, `2 <= s <= s_max`.
///
/// Candidates are scanned in (r, s) ascending order with individual
/// testing first, and a candidate replaces the incumbent only on strict
/// improvement, so ties resolve to smaller r, then smaller s.
pub fn optimize_design(params: &PracticalParams, r_max: u32, s_max: u32) -> Optimum {
    let mut best = (DesignParams::individual(), eti_individual(params));
    let mut second: Option<(DesignParams, f64)> = None;

    let mut offer = |design: DesignParams, eti: f64, best: &mut (DesignParams, f64)| {
        if eti < best.1 {
            second = Some(*best);
            *best = (design, eti);
        } else if second.is_none_or(|(_, e)| eti < e) {
            second = Some((design, eti));
        }
    };

    for r in 1..=r_max {
        for s in 2..=s_max {
            let eti = eti_pooled_rs(params, r, s)
                .expect("s >= 2 in search grid")
                .eti;
            let design = DesignParams::random_regular(r, s).expect("valid grid cell");
            offer(design, eti, &mut best);
        }
    }

    Optimum {
        design: best.0,
        eti: best.1,
        runner_up: second,
    }
}

/// Apply [`optimize_design`] cellwise to a parameter grid, preserving
/// input order (p-rows by u-columns when the grid is built that way).
pub fn table(params_grid: &[PracticalParams], r_max: u32, s_max: u32) -> Vec<Optimum> {
    params_grid
        .iter()
        .map(|p| optimize_design(p, r_max, s_max))
        .collect()
}

/// The prevalence/sensitivity grid used for the reference ETI tables.
pub fn reference_grid() -> Vec<PracticalParams> {
    let ps = [0.1, 0.05, 0.02, 0.01, 0.005];
    let us = [0.6, 0.7, 0.8, 0.9];
    ps.iter()
        .flat_map(|&p| us.iter().map(move |&u| PracticalParams::new(p, u).unwrap()))
        .collect()
}
