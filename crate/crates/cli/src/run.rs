use aggmvh::dominance::check_dominance;
use aggmvh::estimators::{bayes_full, bayes_xonly};
use aggmvh::model::{pmf_x, pmf_y_given_x, PopulationMatrix};
use aggmvh::risk::{closed_form_delta, delta_bound, exact_risk, exact_risk_xonly, risk_report_exact, risk_report_mc, Rule};
use aggmvh::{scan_frontier, Error as ModelError};

use crate::config::{ExperimentConfig, Mode, ResolvedPopulation};
use crate::error::CliError;
use crate::output::{
    round_grid, round_sig, DeltaResult, DeltaSource, EstimateResult, PmfResult, RunOutput, RunResult, ScanResult,
    ScanRow, TOOL, VERSION,
};

/// Runs a validated configuration and returns its output record.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mode = config.mode();
    config.validate(mode)?;
    let result = match mode {
        Mode::Pmf => run_pmf(config)?,
        Mode::Estimate => run_estimate(config)?,
        Mode::RiskExact => {
            let report = risk_report_exact(&config.design()?, &config.resolved_prior()?, &config.counts_population()?)?;
            RunResult::Risk(report.into())
        }
        Mode::RiskMc => {
            let replicates = config.replicates.expect("validated");
            let report = risk_report_mc(
                &config.design()?,
                &config.resolved_prior()?,
                &config.counts_population()?,
                replicates,
                config.seed,
            )?;
            RunResult::Risk(report.into())
        }
        Mode::Delta => run_delta(config)?,
        Mode::Scan => run_scan(config),
    };
    Ok(RunOutput {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        mode: mode.name().to_string(),
        seed: config.seed,
        config: config.clone(),
        result,
    })
}

fn run_pmf(config: &ExperimentConfig) -> Result<RunResult, CliError> {
    let design = config.design()?;
    let pop = config.counts_population()?;
    let (x, y) = config.observation_for_pmf()?;
    let px = pmf_x(&design, &pop, &x)?;
    let py = match &y {
        Some(y) if px > 0.0 => Some(pmf_y_given_x(&design, &pop, &x, y)?),
        Some(_) => Some(0.0),
        None => None,
    };
    Ok(RunResult::Pmf(PmfResult {
        pmf_x: round_sig(px),
        pmf_y_given_x: py.map(round_sig),
        joint: py.map(|p| round_sig(p * px)),
    }))
}

fn run_estimate(config: &ExperimentConfig) -> Result<RunResult, CliError> {
    let design = config.design()?;
    let prior = config.resolved_prior()?;
    let obs = config.observation()?;
    let full = bayes_full(&design, &prior, &obs)?;
    let xonly = bayes_xonly(&design, &prior, obs.x())?;
    Ok(RunResult::Estimate(EstimateResult {
        full: round_grid(full.to_rows()),
        xonly: round_grid(xonly.to_rows()),
    }))
}

fn run_delta(config: &ExperimentConfig) -> Result<RunResult, CliError> {
    let design = config.design()?;
    let population = config.population()?;
    let row_sums = population.row_sums();
    let (delta, delta_source) = match closed_form_delta(&design, &row_sums) {
        Ok(d) => (d, DeltaSource::ClosedForm),
        Err(ModelError::UnsupportedDesign(_)) => {
            let prior = config.resolved_prior()?;
            let pop = match population {
                ResolvedPopulation::Counts(p) => p,
                ResolvedPopulation::RowSums(r) => PopulationMatrix::spread_rows(&r, design.n)?,
            };
            let d = exact_risk(&design, &prior, &pop, Rule::Full)? - exact_risk_xonly(&design, &prior, &pop)?;
            (d, DeltaSource::Exact)
        }
        Err(e) => return Err(e.into()),
    };
    let verdict = check_dominance(&design)?;
    Ok(RunResult::Delta(DeltaResult {
        row_sums,
        delta: round_sig(delta),
        delta_source,
        delta_bound: round_sig(delta_bound(&design)),
        dominates: verdict.dominates,
        worst_delta: round_sig(verdict.worst_delta),
        worst_row_sums: verdict.worst_row_sums,
        frontier_value: verdict.frontier_value,
        theorem_applicable: verdict.theorem_applicable,
        k_over_m_integral: verdict.k_over_m_integral,
    }))
}

fn run_scan(config: &ExperimentConfig) -> RunResult {
    let spec = config.scan.as_ref().expect("validated");
    let scan = scan_frontier(spec.k[0]..=spec.k[1], spec.m[0]..=spec.m[1], spec.n[0]..=spec.n[1]);
    for s in &scan.skipped {
        eprintln!("warning: skipped {:?}: {}", s.design, s.reason);
    }
    RunResult::Scan(ScanResult {
        rows: scan.verdicts.iter().map(ScanRow::from).collect(),
        skipped: scan.skipped,
    })
}
