//! The two-stage sampling model.
//!
//! A population of `K` individuals is split into `m` subgroups of `n`
//! categories each. A first survey draws `L` individuals without replacement
//! and records every category count `X[i][j]`. A second survey draws `Lp` of
//! the remaining `K - L` individuals but only the subgroup totals `Y[i]` are
//! recorded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Hypergeometric};
use serde::{Deserialize, Serialize};

use crate::combin::{binomial, count_bounded_compositions, BoundedCompositions};
use crate::error::{Error, Result};

/// Known constants of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    /// Population size.
    #[serde(rename = "K")]
    pub k: u64,
    /// Number of subgroups.
    pub m: usize,
    /// Categories per subgroup.
    pub n: usize,
    /// First-stage sample size.
    #[serde(rename = "L")]
    pub l: u64,
    /// Second-stage sample size. Zero is allowed and means no second survey.
    #[serde(rename = "Lp")]
    pub lp: u64,
}

impl Design {
    pub fn new(k: u64, m: usize, n: usize, l: u64, lp: u64) -> Result<Self> {
        let d = Design { k, m, n, l, lp };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if self.m == 0 || self.n == 0 {
            return Err(Error::invalid(format!(
                "m and n must be at least 1 (m={}, n={})",
                self.m, self.n
            )));
        }
        if self.l == 0 || self.l > self.k {
            return Err(Error::invalid(format!(
                "L must lie in [1, K] (L={}, K={})",
                self.l, self.k
            )));
        }
        if self.lp > self.k - self.l {
            return Err(Error::invalid(format!(
                "Lp must lie in [0, K - L] (Lp={}, K-L={})",
                self.lp,
                self.k - self.l
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.m * self.n
    }

    /// Individuals left after the first survey, `K - L`.
    pub fn after_first(&self) -> u64 {
        self.k - self.l
    }

    /// Individuals never sampled, `K - L - Lp`.
    pub fn unsampled(&self) -> u64 {
        self.k - self.l - self.lp
    }
}

/// Row-major grid of nonnegative counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountGrid {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl CountGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<u64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(
                format!("{rows}x{cols} = {} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::dims(
                format!("{cols} columns in every row"),
                format!("a row with {} columns", bad.len()),
            ));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.data
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    fn check_shape(&self, design: &Design, what: &str) -> Result<()> {
        if self.rows != design.m || self.cols != design.n {
            return Err(Error::dims(
                format!("{what} of shape {}x{}", design.m, design.n),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }
}

/// The unknown parameter: category counts `K[i][j]` summing to `K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PopulationMatrix {
    counts: CountGrid,
    row_sums: Vec<u64>,
}

impl PopulationMatrix {
    pub fn new(counts: CountGrid) -> Self {
        let row_sums = counts.row_sums();
        Self { counts, row_sums }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        Ok(Self::new(CountGrid::from_rows(rows)?))
    }

    /// Equal counts `K / (m n)` in every cell.
    pub fn balanced(design: &Design) -> Result<Self> {
        let cells = design.cells() as u64;
        if design.k % cells != 0 {
            return Err(Error::invalid(format!(
                "balanced population needs K divisible by m*n (K={}, m*n={cells})",
                design.k
            )));
        }
        Ok(Self::new(CountGrid {
            rows: design.m,
            cols: design.n,
            data: vec![design.k / cells; design.cells()],
        }))
    }

    /// A population with the given row sums, each row spread as evenly as
    /// possible with the remainder going to the leading categories.
    pub fn spread_rows(row_sums: &[u64], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        let mut data = Vec::with_capacity(row_sums.len() * n);
        for &s in row_sums {
            let base = s / n as u64;
            let extra = (s % n as u64) as usize;
            data.extend((0..n).map(|j| base + u64::from(j < extra)));
        }
        Ok(Self::new(CountGrid {
            rows: row_sums.len(),
            cols: n,
            data,
        }))
    }

    pub fn counts(&self) -> &CountGrid {
        &self.counts
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts.get(i, j)
    }

    /// Checks shape and total against `design`.
    pub fn check(&self, design: &Design) -> Result<()> {
        self.counts.check_shape(design, "population")?;
        let total = self.counts.total();
        if total != design.k {
            return Err(Error::invalid(format!(
                "population sums to {total}, expected K = {}",
                design.k
            )));
        }
        Ok(())
    }
}

/// Multinomial prior cell probabilities `p[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorWeights {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
    row_sums: Vec<f64>,
}

/// Tolerance on the total prior mass.
pub const PRIOR_SUM_TOLERANCE: f64 = 1e-12;

impl PriorWeights {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::dims(
                format!("{rows}x{cols} nonempty prior"),
                format!("{} entries", probs.len()),
            ));
        }
        // a single cell necessarily carries all the mass
        let single = probs.len() == 1;
        if let Some(p) = probs
            .iter()
            .find(|&&p| !(p > 0.0 && (p < 1.0 || (single && p == 1.0))))
        {
            return Err(Error::invalid(format!(
                "prior probabilities must lie in (0, 1), got {p}"
            )));
        }
        let total: f64 = crate::summation::compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > PRIOR_SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "prior probabilities sum to {total}, expected 1"
            )));
        }
        let row_sums = probs.chunks(cols).map(|r| r.iter().sum()).collect();
        Ok(Self {
            rows,
            cols,
            probs,
            row_sums,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("prior rows have unequal lengths"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// `p[i][j] = 1 / (m n)`.
    pub fn symmetric(m: usize, n: usize) -> Result<Self> {
        let cells = m * n;
        if cells == 0 {
            return Err(Error::invalid("m and n must be at least 1"));
        }
        Ok(Self {
            rows: m,
            cols: n,
            probs: vec![1.0 / cells as f64; cells],
            row_sums: vec![1.0 / m as f64; m],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.cols + j]
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.probs.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        let p = 1.0 / self.probs.len() as f64;
        self.probs.iter().all(|q| (q - p).abs() <= PRIOR_SUM_TOLERANCE)
    }

    pub fn check(&self, design: &Design) -> Result<()> {
        if self.rows != design.m || self.cols != design.n {
            return Err(Error::dims(
                format!("prior of shape {}x{}", design.m, design.n),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }
}

/// First-stage counts plus aggregated second-stage subgroup totals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    x: CountGrid,
    x_row_sums: Vec<u64>,
    y: Vec<u64>,
}

impl Observation {
    pub fn new(x: CountGrid, y: Vec<u64>) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::dims(
                format!("y of length {}", x.rows()),
                format!("length {}", y.len()),
            ));
        }
        let x_row_sums = x.row_sums();
        Ok(Self { x, x_row_sums, y })
    }

    /// An observation with no second-stage data.
    pub fn first_stage_only(x: CountGrid) -> Self {
        let y = vec![0; x.rows()];
        let x_row_sums = x.row_sums();
        Self { x, x_row_sums, y }
    }

    pub fn x(&self) -> &CountGrid {
        &self.x
    }

    pub fn x_row_sums(&self) -> &[u64] {
        &self.x_row_sums
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    /// Checks shape and the sample-size identities `sum x = L`, `sum y = Lp`.
    pub fn check(&self, design: &Design) -> Result<()> {
        self.x.check_shape(design, "x")?;
        let sx = self.x.total();
        if sx != design.l {
            return Err(Error::invalid(format!("x sums to {sx}, expected L = {}", design.l)));
        }
        let sy: u64 = self.y.iter().sum();
        if sy != design.lp {
            return Err(Error::invalid(format!("y sums to {sy}, expected Lp = {}", design.lp)));
        }
        Ok(())
    }
}

/// Per-category second-stage counts `Y*[i][j]`; never observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentSecondStage {
    pub y_star: CountGrid,
}

fn check_pop(design: &Design, pop: &PopulationMatrix) -> Result<()> {
    design.validate()?;
    pop.check(design)
}

/// Exact first-stage mass as `(numerator, denominator)`.
pub fn pmf_x_ratio(design: &Design, pop: &PopulationMatrix, x: &CountGrid) -> Result<(u128, u128)> {
    check_pop(design, pop)?;
    x.check_shape(design, "x")?;
    let den = binomial(design.k, design.l)?;
    if x.total() != design.l {
        return Ok((0, den));
    }
    let mut num: u128 = 1;
    for (&kij, &xij) in pop.counts.as_slice().iter().zip(x.as_slice()) {
        let c = binomial(kij, xij)?;
        if c == 0 {
            return Ok((0, den));
        }
        num = num
            .checked_mul(c)
            .ok_or_else(|| Error::Overflow("first-stage numerator".into()))?;
    }
    Ok((num, den))
}

/// `P(X = x) = prod C(K[i][j], x[i][j]) / C(K, L)`.
pub fn pmf_x(design: &Design, pop: &PopulationMatrix, x: &CountGrid) -> Result<f64> {
    let (num, den) = pmf_x_ratio(design, pop, x)?;
    Ok(num as f64 / den as f64)
}

/// Exact conditional mass of the subgroup totals as `(numerator, denominator)`.
pub fn pmf_y_given_x_ratio(
    design: &Design,
    pop: &PopulationMatrix,
    x: &CountGrid,
    y: &[u64],
) -> Result<(u128, u128)> {
    let (px, _) = pmf_x_ratio(design, pop, x)?;
    if px == 0 {
        return Err(Error::invalid("x is outside the first-stage support"));
    }
    if y.len() != design.m {
        return Err(Error::dims(
            format!("y of length {}", design.m),
            format!("length {}", y.len()),
        ));
    }
    let den = binomial(design.after_first(), design.lp)?;
    if y.iter().sum::<u64>() != design.lp {
        return Ok((0, den));
    }
    let mut num: u128 = 1;
    for ((&ki, xi), &yi) in pop.row_sums.iter().zip(x.row_sums()).zip(y) {
        let c = binomial(ki - xi, yi)?;
        if c == 0 {
            return Ok((0, den));
        }
        num = num
            .checked_mul(c)
            .ok_or_else(|| Error::Overflow("second-stage numerator".into()))?;
    }
    Ok((num, den))
}

/// `P(Y = y | X = x) = prod C(K[i] - x[i], y[i]) / C(K - L, Lp)` over row totals.
pub fn pmf_y_given_x(
    design: &Design,
    pop: &PopulationMatrix,
    x: &CountGrid,
    y: &[u64],
) -> Result<f64> {
    let (num, den) = pmf_y_given_x_ratio(design, pop, x, y)?;
    Ok(num as f64 / den as f64)
}

/// First-stage support in lexicographic order over the row-major cells.
#[derive(Debug, Clone)]
pub struct SupportX {
    rows: usize,
    cols: usize,
    inner: BoundedCompositions,
}

impl Iterator for SupportX {
    type Item = CountGrid;

    fn next(&mut self) -> Option<CountGrid> {
        self.inner.next().map(|data| CountGrid {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

pub fn enumerate_support_x(design: &Design, pop: &PopulationMatrix) -> Result<SupportX> {
    check_pop(design, pop)?;
    Ok(SupportX {
        rows: design.m,
        cols: design.n,
        inner: BoundedCompositions::new(pop.counts.as_slice().to_vec(), design.l),
    })
}

/// `|D|`, counted without enumerating.
pub fn support_x_size(design: &Design, pop: &PopulationMatrix) -> Result<u128> {
    check_pop(design, pop)?;
    Ok(count_bounded_compositions(pop.counts.as_slice(), design.l))
}

fn remaining_rows(design: &Design, pop: &PopulationMatrix, x: &CountGrid) -> Result<Vec<u64>> {
    check_pop(design, pop)?;
    x.check_shape(design, "x")?;
    Ok(pop
        .row_sums
        .iter()
        .zip(x.row_sums())
        .map(|(k, x)| k.saturating_sub(x))
        .collect())
}

/// Second-stage support given `x`, in lexicographic order.
pub fn enumerate_support_y(
    design: &Design,
    pop: &PopulationMatrix,
    x: &CountGrid,
) -> Result<BoundedCompositions> {
    let bounds = remaining_rows(design, pop, x)?;
    Ok(BoundedCompositions::new(bounds, design.lp))
}

/// Largest possible second-stage support over any `x`, used for size guards.
pub fn max_support_y_size(design: &Design, pop: &PopulationMatrix) -> Result<u128> {
    check_pop(design, pop)?;
    Ok(count_bounded_compositions(pop.row_sums(), design.lp))
}

/// Draws `draws` individuals without replacement from `stock` (counts per
/// category) by splitting category by category.
pub(crate) fn split_hypergeometric<R: Rng + ?Sized>(
    stock: &[u64],
    draws: u64,
    rng: &mut R,
) -> Vec<u64> {
    let mut left_total: u64 = stock.iter().sum();
    let mut left_draws = draws;
    let mut out = Vec::with_capacity(stock.len());
    for (c, &s) in stock.iter().enumerate() {
        let take = if left_draws == 0 || s == 0 {
            0
        } else if c + 1 == stock.len() || s == left_total {
            left_draws
        } else if left_draws == left_total {
            s
        } else {
            Hypergeometric::new(left_total, s, left_draws)
                .expect("hypergeometric parameters are consistent")
                .sample(rng)
        };
        out.push(take);
        left_total -= s;
        left_draws -= take;
    }
    debug_assert_eq!(left_draws, 0);
    out
}

/// Simulates both surveys with an explicit generator.
pub fn sample_two_stage_with<R: Rng + ?Sized>(
    design: &Design,
    pop: &PopulationMatrix,
    rng: &mut R,
) -> Result<(Observation, LatentSecondStage)> {
    check_pop(design, pop)?;
    let x = split_hypergeometric(pop.counts.as_slice(), design.l, rng);
    let left: Vec<u64> = pop
        .counts
        .as_slice()
        .iter()
        .zip(&x)
        .map(|(k, x)| k - x)
        .collect();
    let y_star = split_hypergeometric(&left, design.lp, rng);
    let x = CountGrid {
        rows: design.m,
        cols: design.n,
        data: x,
    };
    let y_star = CountGrid {
        rows: design.m,
        cols: design.n,
        data: y_star,
    };
    let obs = Observation::new(x, y_star.row_sums())?;
    Ok((obs, LatentSecondStage { y_star }))
}

/// Simulates both surveys; deterministic in `seed`.
pub fn sample_two_stage(
    design: &Design,
    pop: &PopulationMatrix,
    seed: u64,
) -> Result<(Observation, LatentSecondStage)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_two_stage_with(design, pop, &mut rng)
}
