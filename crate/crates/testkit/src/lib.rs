//! Independent oracles for the test suites.
//!
//! Nothing here calls into the estimators or risk code: the posterior is
//! built directly from Bayes' rule with its own binomial table, so it can
//! check the closed-form estimators.

use aggmvh::{CountGrid, Design, PriorWeights};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pascal's triangle up to `max_n`.
pub struct BinomialTable {
    rows: Vec<Vec<f64>>,
}

impl BinomialTable {
    pub fn new(max_n: usize) -> Self {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(max_n + 1);
        for n in 0..=max_n {
            let mut row = vec![1.0; n + 1];
            for k in 1..n {
                row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
            }
            rows.push(row);
        }
        Self { rows }
    }

    pub fn get(&self, n: u64, k: u64) -> f64 {
        if k > n {
            0.0
        } else {
            self.rows[n as usize][k as usize]
        }
    }
}

/// Every vector of `parts` nonnegative integers summing to `total`, built by
/// plain recursion.
pub fn compositions(parts: usize, total: u64) -> Vec<Vec<u64>> {
    fn rec(parts: usize, total: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 0..=total {
            prefix.push(v);
            rec(parts - 1, total - v, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(parts, total, &mut Vec::new(), &mut out);
    out
}

fn factorial(n: u64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Multinomial prior mass of a flattened population.
pub fn prior_mass(k: u64, probs: &[f64], pop: &[u64]) -> f64 {
    let mut v = factorial(k);
    for (&c, &p) in pop.iter().zip(probs) {
        v *= p.powi(c as i32) / factorial(c);
    }
    v
}

fn row_sums(flat: &[u64], n: usize) -> Vec<u64> {
    flat.chunks(n).map(|r| r.iter().sum()).collect()
}

/// `P(X = x | pop)` without its `C(K, L)` denominator.
fn first_stage(table: &BinomialTable, pop: &[u64], x: &[u64]) -> f64 {
    pop.iter().zip(x).map(|(&k, &xv)| table.get(k, xv)).product()
}

/// `P(Y = y | x, pop)` without its `C(K - L, Lp)` denominator.
fn second_stage(table: &BinomialTable, n: usize, pop: &[u64], x: &[u64], y: &[u64]) -> f64 {
    let kr = row_sums(pop, n);
    let xr = row_sums(x, n);
    let mut v = 1.0;
    for i in 0..y.len() {
        if kr[i] < xr[i] {
            return 0.0;
        }
        v *= table.get(kr[i] - xr[i], y[i]);
    }
    v
}

/// Candidate populations `x + r` for every composition `r` of `K - L`.
/// Populations below `x` in any cell have zero likelihood.
fn candidate_pops(design: &Design, x: &[u64]) -> Vec<Vec<u64>> {
    compositions(design.cells(), design.k - design.l)
        .into_iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| a + b).collect())
        .collect()
}

/// Posterior mean of the population given `x` and `y`, by enumeration.
pub fn posterior_mean_full(design: &Design, prior: &PriorWeights, x: &CountGrid, y: &[u64]) -> Vec<f64> {
    posterior_means_full(design, prior, x, std::slice::from_ref(&y.to_vec())).remove(0)
}

/// [`posterior_mean_full`] for several second-stage outcomes sharing one `x`.
pub fn posterior_means_full(design: &Design, prior: &PriorWeights, x: &CountGrid, ys: &[Vec<u64>]) -> Vec<Vec<f64>> {
    let table = BinomialTable::new(design.k as usize);
    let weighted: Vec<(Vec<u64>, f64)> = candidate_pops(design, x.as_slice())
        .into_iter()
        .map(|pop| {
            let w = prior_mass(design.k, prior.as_slice(), &pop) * first_stage(&table, &pop, x.as_slice());
            (pop, w)
        })
        .collect();
    ys.iter()
        .map(|y| {
            let mut norm = 0.0;
            let mut acc = vec![0.0; design.cells()];
            for (pop, base) in &weighted {
                let w = base * second_stage(&table, design.n, pop, x.as_slice(), y);
                norm += w;
                for (a, &c) in acc.iter_mut().zip(pop) {
                    *a += w * c as f64;
                }
            }
            acc.into_iter().map(|a| a / norm).collect()
        })
        .collect()
}

/// Posterior mean of the population given `x` alone, summing the joint
/// posterior of `(pop, y)` over every second-stage outcome.
pub fn posterior_mean_xonly(design: &Design, prior: &PriorWeights, x: &CountGrid) -> Vec<f64> {
    let table = BinomialTable::new(design.k as usize);
    let ys = compositions(design.m, design.lp);
    let mut norm = 0.0;
    let mut acc = vec![0.0; design.cells()];
    let second_den = table.get(design.k - design.l, design.lp);
    for pop in candidate_pops(design, x.as_slice()) {
        let base = prior_mass(design.k, prior.as_slice(), &pop) * first_stage(&table, &pop, x.as_slice());
        for y in &ys {
            let w = base * second_stage(&table, design.n, &pop, x.as_slice(), y) / second_den;
            norm += w;
            for (a, &c) in acc.iter_mut().zip(&pop) {
                *a += w * c as f64;
            }
        }
    }
    acc.into_iter().map(|a| a / norm).collect()
}

/// Pearson chi-square goodness of fit. Cells with expected count below 5
/// are pooled into one. Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> (f64, usize, f64) {
    let total: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * total as f64;
        if e < 5.0 {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pooled_exp > 0.0 {
        cells.push((pooled_obs, pooled_exp));
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len().saturating_sub(1).max(1);
    let p = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat);
    (stat, dof, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(3, 4).len(), 15);
        assert_eq!(compositions(1, 4), vec![vec![4]]);
        assert_eq!(compositions(0, 0), vec![Vec::<u64>::new()]);
    }

    #[test]
    fn binomial_table_values() {
        let t = BinomialTable::new(10);
        assert_eq!(t.get(10, 3), 120.0);
        assert_eq!(t.get(3, 4), 0.0);
    }

    #[test]
    fn prior_mass_normalizes() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let s: f64 = compositions(4, 6).iter().map(|p| prior_mass(6, &probs, p)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_accepts_exact_counts() {
        let (_, dof, p) = chi_square_gof(&[250, 250, 500], &[0.25, 0.25, 0.5]);
        assert_eq!(dof, 2);
        assert!(p > 0.99);
        let (_, _, p) = chi_square_gof(&[400, 100, 500], &[0.25, 0.25, 0.5]);
        assert!(p < 1e-6);
    }
}
