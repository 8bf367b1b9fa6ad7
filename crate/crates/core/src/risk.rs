//! Squared-error risk of the two Bayes rules.
//!
//! Risks are available three ways: exact enumeration over both surveys,
//! Monte Carlo over seeded two-stage draws, and a semi-analytic route that
//! enumerates only the first survey and integrates the second through its
//! hypergeometric conditional moments. For the symmetric prior the risk
//! difference also has a closed form in the subgroup totals alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{bayes_full, bayes_xonly, Estimate};
use crate::model::{
    enumerate_support_x, enumerate_support_y, max_support_y_size, pmf_x, pmf_y_given_x,
    sample_two_stage_with, support_x_size, CountGrid, Design, Observation, PopulationMatrix,
    PriorWeights,
};
use crate::summation::{compensated_sum, ordered_chunked_sum, NeumaierSum};

/// Largest `|D| * max|supp(Y)|` the exact routes will enumerate.
pub const ENUMERATION_LIMIT: u128 = 100_000_000;

/// `Δ <= DOMINANCE_TOLERANCE` counts as no loss from using the second survey.
pub const DOMINANCE_TOLERANCE: f64 = 1e-9;

/// `sum (d[i][j] - K[i][j])^2`.
pub fn loss(d: &Estimate, pop: &PopulationMatrix) -> Result<f64> {
    let counts = pop.counts();
    if d.rows() != counts.rows() || d.cols() != counts.cols() {
        return Err(Error::dims(
            format!("{}x{}", counts.rows(), counts.cols()),
            format!("estimate of shape {}x{}", d.rows(), d.cols()),
        ));
    }
    Ok(compensated_sum(
        d.as_slice()
            .iter()
            .zip(counts.as_slice())
            .map(|(&e, &k)| (e - k as f64).powi(2)),
    ))
}

/// The two Bayes rules compared throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Uses the first-stage counts and the subgroup totals.
    Full,
    /// Ignores the second survey.
    XOnly,
}

impl Rule {
    pub fn estimate(self, design: &Design, prior: &PriorWeights, obs: &Observation) -> Result<Estimate> {
        match self {
            Rule::Full => bayes_full(design, prior, obs),
            Rule::XOnly => bayes_xonly(design, prior, obs.x()),
        }
    }
}

fn enumeration_guard(design: &Design, pop: &PopulationMatrix, with_y: bool) -> Result<()> {
    let xs = support_x_size(design, pop)?;
    let ys = if with_y { max_support_y_size(design, pop)? } else { 1 };
    let needed = xs.saturating_mul(ys);
    if needed > ENUMERATION_LIMIT {
        return Err(Error::ResourceLimit {
            what: "risk enumeration",
            needed,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Exact risk of an arbitrary decision rule by enumerating both surveys.
///
/// The first-stage support is split into fixed chunks summed in parallel and
/// merged in order, so the result does not depend on the worker count.
pub fn exact_risk_with<F>(design: &Design, pop: &PopulationMatrix, rule: F) -> Result<f64>
where
    F: Fn(&Observation) -> Result<Estimate> + Sync,
{
    enumeration_guard(design, pop, true)?;
    let support: Vec<CountGrid> = enumerate_support_x(design, pop)?.collect();
    ordered_chunked_sum(&support, |x| {
        let px = pmf_x(design, pop, x)?;
        let mut inner = NeumaierSum::new();
        for y in enumerate_support_y(design, pop, x)? {
            let py = pmf_y_given_x(design, pop, x, &y)?;
            let obs = Observation::new(x.clone(), y)?;
            inner.add(py * loss(&rule(&obs)?, pop)?);
        }
        Ok(px * inner.value())
    })
}

pub fn exact_risk(
    design: &Design,
    prior: &PriorWeights,
    pop: &PopulationMatrix,
    rule: Rule,
) -> Result<f64> {
    prior.check(design)?;
    exact_risk_with(design, pop, |obs| rule.estimate(design, prior, obs))
}

/// Risk of the first-stage-only rule, enumerating the first survey alone.
pub fn exact_risk_xonly(design: &Design, prior: &PriorWeights, pop: &PopulationMatrix) -> Result<f64> {
    prior.check(design)?;
    enumeration_guard(design, pop, false)?;
    let support: Vec<CountGrid> = enumerate_support_x(design, pop)?.collect();
    ordered_chunked_sum(&support, |x| {
        Ok(pmf_x(design, pop, x)? * loss(&bayes_xonly(design, prior, x)?, pop)?)
    })
}

/// Monte Carlo risk estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Running mean and variance (Welford).
#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    fn estimate(&self) -> McEstimate {
        let var = if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        McEstimate {
            mean: self.mean,
            std_error: (var / self.count as f64).sqrt(),
        }
    }
}

fn check_replicates(replicates: u64) -> Result<()> {
    if replicates < 2 {
        return Err(Error::invalid(format!(
            "Monte Carlo needs at least 2 replicates, got {replicates}"
        )));
    }
    Ok(())
}

pub fn mc_risk_with<F>(
    design: &Design,
    pop: &PopulationMatrix,
    rule: F,
    replicates: u64,
    seed: u64,
) -> Result<McEstimate>
where
    F: Fn(&Observation) -> Result<Estimate>,
{
    check_replicates(replicates)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Moments::default();
    for _ in 0..replicates {
        let (obs, _) = sample_two_stage_with(design, pop, &mut rng)?;
        acc.push(loss(&rule(&obs)?, pop)?);
    }
    Ok(acc.estimate())
}

/// Sample mean of the loss over `replicates` seeded two-stage draws.
pub fn mc_risk(
    design: &Design,
    prior: &PriorWeights,
    pop: &PopulationMatrix,
    rule: Rule,
    replicates: u64,
    seed: u64,
) -> Result<McEstimate> {
    prior.check(design)?;
    mc_risk_with(design, pop, |obs| rule.estimate(design, prior, obs), replicates, seed)
}

/// Conditional mean and variance of `Y[i]` given `R[i] = K[i] - X[i]` of
/// subgroup `i` remain after the first survey.
///
/// The variance is taken as zero when `K - L <= 1`, where `Y` is degenerate.
pub fn conditional_y_moments(design: &Design, remaining: u64) -> Result<(f64, f64)> {
    let left = design.after_first();
    if remaining > left {
        return Err(Error::invalid(format!(
            "remaining count {remaining} exceeds K - L = {left}"
        )));
    }
    if left == 0 {
        return Ok((0.0, 0.0));
    }
    let (left, r, lp) = (left as f64, remaining as f64, design.lp as f64);
    let mean = lp * r / left;
    let var = if design.after_first() <= 1 {
        0.0
    } else {
        lp * (left - lp) / (left * left * (left - 1.0)) * r * (left - r)
    };
    Ok((mean, var))
}

/// Risk of the full rule under the symmetric prior, integrating the second
/// survey through its conditional moments instead of enumerating it.
pub fn semi_analytic_risk_full(design: &Design, pop: &PopulationMatrix) -> Result<f64> {
    enumeration_guard(design, pop, false)?;
    let support: Vec<CountGrid> = enumerate_support_x(design, pop)?.collect();
    let n = design.n as f64;
    let unsampled_share = design.unsampled() as f64 / design.cells() as f64;
    ordered_chunked_sum(&support, |x| {
        let mut per_x = NeumaierSum::new();
        for (i, (&ki, xi)) in pop.row_sums().iter().zip(x.row_sums()).enumerate() {
            let (mean, var) = conditional_y_moments(design, ki - xi)?;
            for j in 0..design.n {
                let bias = mean / n + x.get(i, j) as f64 + unsampled_share - pop.get(i, j) as f64;
                per_x.add(var / (n * n) + bias * bias);
            }
        }
        Ok(pmf_x(design, pop, x)? * per_x.value())
    })
}

/// `E[(K[i] - X[i])^2]` for a subgroup of total `row_sum`.
pub fn row_sum_second_moment(design: &Design, row_sum: u64) -> Result<f64> {
    if design.k < 2 {
        return Err(Error::invalid("row-sum second moment needs K >= 2"));
    }
    if row_sum > design.k {
        return Err(Error::invalid(format!(
            "row sum {row_sum} exceeds K = {}",
            design.k
        )));
    }
    let (k, l, r) = (design.k as f64, design.l as f64, row_sum as f64);
    let quad = (k - l) * ((k - 1.0) * (k - l) - l) / (k * k * (k - 1.0));
    let lin = l * (k - l) / (k * (k - 1.0));
    Ok(quad * r * r + lin * r)
}

/// Closed-form `Δ = risk(full) - risk(xonly)` under the symmetric prior; it
/// depends on the population only through its subgroup totals.
pub fn closed_form_delta(design: &Design, row_sums: &[u64]) -> Result<f64> {
    design.validate()?;
    if design.l + 2 > design.k {
        return Err(Error::UnsupportedDesign(format!(
            "closed form needs L <= K - 2 (K={}, L={})",
            design.k, design.l
        )));
    }
    if design.lp == 0 {
        return Err(Error::UnsupportedDesign("closed form needs Lp >= 1".into()));
    }
    if row_sums.len() != design.m {
        return Err(Error::dims(
            format!("{} row sums", design.m),
            format!("{}", row_sums.len()),
        ));
    }
    let total: u64 = row_sums.iter().sum();
    if total != design.k {
        return Err(Error::invalid(format!(
            "row sums total {total}, expected K = {}",
            design.k
        )));
    }
    let left = design.after_first() as f64;
    let lp = design.lp as f64;
    let shrink = design.unsampled() as f64 / (left - 1.0);
    let mut second = NeumaierSum::new();
    for &r in row_sums {
        second.add(row_sum_second_moment(design, r)?);
    }
    let spread = second.value() / (left * left);
    let bracket =
        -(2.0 * left - lp + shrink) * spread + (2.0 * left - lp) / design.m as f64 + shrink;
    Ok(lp / design.n as f64 * bracket)
}

/// Upper bound on `Δ`, `(Lp/n)(1 - 1/m)(K - 2L - Lp)/(K - 1)`, attained at
/// equal subgroup totals.
pub fn delta_bound(design: &Design) -> f64 {
    if design.lp == 0 || design.m == 1 {
        return 0.0;
    }
    let (k, l, lp) = (design.k as f64, design.l as f64, design.lp as f64);
    lp / design.n as f64 * (1.0 - 1.0 / design.m as f64) * (k - 2.0 * l - lp) / (k - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    Exact,
    MonteCarlo,
    SemiAnalytic,
}

/// Risks of both rules at one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub risk_full: f64,
    pub risk_xonly: f64,
    pub delta: f64,
    pub delta_bound: f64,
    pub method: RiskMethod,
    /// Standard error of `delta` over paired draws.
    pub mc_std_error: Option<f64>,
    pub replicates: Option<u64>,
}

impl RiskReport {
    pub fn full_dominates_here(&self) -> bool {
        self.delta <= DOMINANCE_TOLERANCE
    }
}

pub fn risk_report_exact(
    design: &Design,
    prior: &PriorWeights,
    pop: &PopulationMatrix,
) -> Result<RiskReport> {
    let risk_full = exact_risk(design, prior, pop, Rule::Full)?;
    let risk_xonly = exact_risk_xonly(design, prior, pop)?;
    Ok(RiskReport {
        risk_full,
        risk_xonly,
        delta: risk_full - risk_xonly,
        delta_bound: delta_bound(design),
        method: RiskMethod::Exact,
        mc_std_error: None,
        replicates: None,
    })
}

/// Symmetric-prior report through the conditional-moment route.
pub fn risk_report_semi_analytic(design: &Design, pop: &PopulationMatrix) -> Result<RiskReport> {
    let prior = PriorWeights::symmetric(design.m, design.n)?;
    let risk_full = semi_analytic_risk_full(design, pop)?;
    let risk_xonly = exact_risk_xonly(design, &prior, pop)?;
    Ok(RiskReport {
        risk_full,
        risk_xonly,
        delta: risk_full - risk_xonly,
        delta_bound: delta_bound(design),
        method: RiskMethod::SemiAnalytic,
        mc_std_error: None,
        replicates: None,
    })
}

/// Monte Carlo report; both rules are scored on the same draws.
pub fn risk_report_mc(
    design: &Design,
    prior: &PriorWeights,
    pop: &PopulationMatrix,
    replicates: u64,
    seed: u64,
) -> Result<RiskReport> {
    prior.check(design)?;
    check_replicates(replicates)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut full, mut xonly, mut diff) =
        (Moments::default(), Moments::default(), Moments::default());
    for _ in 0..replicates {
        let (obs, _) = sample_two_stage_with(design, pop, &mut rng)?;
        let lf = loss(&bayes_full(design, prior, &obs)?, pop)?;
        let lx = loss(&bayes_xonly(design, prior, obs.x())?, pop)?;
        full.push(lf);
        xonly.push(lx);
        diff.push(lf - lx);
    }
    let d = diff.estimate();
    Ok(RiskReport {
        risk_full: full.estimate().mean,
        risk_xonly: xonly.estimate().mean,
        delta: d.mean,
        delta_bound: delta_bound(design),
        method: RiskMethod::MonteCarlo,
        mc_std_error: Some(d.std_error),
        replicates: Some(replicates),
    })
}
