//! Dominance verdicts over the subgroup-total configurations of a design,
//! and grid scans reproducing the frontier `2L + Lp >= K`.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combin::{binomial, BoundedCompositions};
use crate::error::{Error, Result};
use crate::model::{Design, PopulationMatrix, PriorWeights};
use crate::risk::{closed_form_delta, delta_bound, exact_risk, exact_risk_xonly, Rule, DOMINANCE_TOLERANCE};

/// Largest number of row-sum configurations a verdict will enumerate.
pub const CONFIG_LIMIT: u128 = 10_000_000;

/// All compositions of `k` into `m` nonnegative parts, lexicographic.
pub fn enumerate_row_sum_configs(k: u64, m: usize) -> BoundedCompositions {
    BoundedCompositions::unbounded(m, k)
}

pub fn row_sum_config_count(k: u64, m: usize) -> Result<u128> {
    if m == 0 {
        return Ok(0);
    }
    binomial(k + m as u64 - 1, m as u64 - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceVerdict {
    pub design: Design,
    pub dominates: bool,
    pub worst_delta: f64,
    pub worst_row_sums: Vec<u64>,
    /// `2L + Lp - K`.
    pub frontier_value: i64,
    /// `m >= 2`, `L <= K - 2` and `Lp >= 1`.
    pub theorem_applicable: bool,
    pub k_over_m_integral: bool,
}

impl DominanceVerdict {
    /// True when the verdict contradicts the frontier characterization:
    /// a nonnegative frontier value without dominance, or (for `K/m`
    /// integral) a negative one with dominance.
    pub fn contradicts_frontier(&self) -> bool {
        if !self.theorem_applicable {
            return false;
        }
        if self.frontier_value >= 0 {
            !self.dominates
        } else {
            self.k_over_m_integral && self.dominates
        }
    }

    pub fn delta_bound(&self) -> f64 {
        delta_bound(&self.design)
    }
}

/// How `Δ` is evaluated per configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaMethod {
    ClosedForm,
    /// Exact enumeration of both surveys at a representative population
    /// for each configuration.
    Exact,
}

fn exact_delta(design: &Design, prior: &PriorWeights, row_sums: &[u64]) -> Result<f64> {
    let pop = PopulationMatrix::spread_rows(row_sums, design.n)?;
    Ok(exact_risk(design, prior, &pop, Rule::Full)? - exact_risk_xonly(design, prior, &pop)?)
}

/// Verdict under the symmetric prior using the closed form where it
/// applies and exact enumeration otherwise.
pub fn check_dominance(design: &Design) -> Result<DominanceVerdict> {
    let method = if design.l + 2 <= design.k && design.lp >= 1 {
        DeltaMethod::ClosedForm
    } else {
        DeltaMethod::Exact
    };
    check_dominance_with(design, method)
}

pub fn check_dominance_with(design: &Design, method: DeltaMethod) -> Result<DominanceVerdict> {
    design.validate()?;
    let configs = row_sum_config_count(design.k, design.m)?;
    if configs > CONFIG_LIMIT {
        return Err(Error::ResourceLimit {
            what: "row-sum configurations",
            needed: configs,
            limit: CONFIG_LIMIT,
        });
    }
    let prior = PriorWeights::symmetric(design.m, design.n)?;
    let k_over_m_integral = design.k % design.m as u64 == 0;
    let balanced = vec![design.k / design.m as u64; design.m];

    let mut worst: Option<(f64, Vec<u64>)> = None;
    let mut balanced_delta = None;
    for rows in enumerate_row_sum_configs(design.k, design.m) {
        let delta = match method {
            DeltaMethod::ClosedForm => closed_form_delta(design, &rows)?,
            DeltaMethod::Exact => exact_delta(design, &prior, &rows)?,
        };
        if k_over_m_integral && rows == balanced {
            balanced_delta = Some(delta);
        }
        if worst.as_ref().is_none_or(|(w, _)| delta > *w) {
            worst = Some((delta, rows));
        }
    }
    let (mut worst_delta, mut worst_row_sums) = worst.expect("at least one configuration");
    // the balanced vector wins near-ties
    if let Some(b) = balanced_delta {
        if b >= worst_delta - DOMINANCE_TOLERANCE {
            worst_delta = worst_delta.max(b);
            worst_row_sums = balanced;
        }
    }
    Ok(DominanceVerdict {
        design: *design,
        dominates: worst_delta <= DOMINANCE_TOLERANCE,
        worst_delta,
        worst_row_sums,
        frontier_value: 2 * design.l as i64 + design.lp as i64 - design.k as i64,
        theorem_applicable: design.m >= 2 && design.l + 2 <= design.k && design.lp >= 1,
        k_over_m_integral,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDesign {
    pub design: Design,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrontierScan {
    pub verdicts: Vec<DominanceVerdict>,
    pub skipped: Vec<SkippedDesign>,
}

impl FrontierScan {
    pub fn counterexamples(&self) -> impl Iterator<Item = &DominanceVerdict> {
        self.verdicts.iter().filter(|v| v.contradicts_frontier())
    }
}

/// Designs covered by a scan: every `(K, m, n)` in the ranges with
/// `m >= 2`, and every `1 <= L <= K - 2`, `1 <= Lp <= K - L`.
pub fn frontier_designs(
    k_range: RangeInclusive<u64>,
    m_range: RangeInclusive<usize>,
    n_range: RangeInclusive<usize>,
) -> Vec<Design> {
    let mut out = Vec::new();
    for k in k_range {
        for m in m_range.clone().filter(|&m| m >= 2) {
            for n in n_range.clone().filter(|&n| n >= 1) {
                for l in 1..=k.saturating_sub(2) {
                    for lp in 1..=k - l {
                        out.push(Design { k, m, n, l, lp });
                    }
                }
            }
        }
    }
    out
}

/// Verdicts for every admissible design in the grid, in grid order. Designs
/// exceeding a guard are recorded as skipped rather than aborting the scan.
pub fn scan_frontier(
    k_range: RangeInclusive<u64>,
    m_range: RangeInclusive<usize>,
    n_range: RangeInclusive<usize>,
) -> FrontierScan {
    let designs = frontier_designs(k_range, m_range, n_range);
    let results: Vec<(Design, Result<DominanceVerdict>)> = designs
        .par_iter()
        .map(|d| (*d, check_dominance(d)))
        .collect();
    let mut scan = FrontierScan::default();
    for (design, r) in results {
        match r {
            Ok(v) => scan.verdicts.push(v),
            Err(e) => scan.skipped.push(SkippedDesign {
                design,
                reason: e.to_string(),
            }),
        }
    }
    scan
}
