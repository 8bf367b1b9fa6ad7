//! Bayes estimators under a multinomial prior on the population.
//!
//! Given both surveys the posterior mean is
//! `X[i][j] + (p[i][j] / p[i]) Y[i] + p[i][j] (K - L - Lp)`; given the first
//! survey alone it is `X[i][j] + p[i][j] (K - L)`. The posterior itself
//! factors into an outer multinomial over the unseen subgroup totals and one
//! inner multinomial per subgroup, which [`PosteriorFactorization`] exposes
//! for exact evaluation and for sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::combin::ln_factorial;
use crate::error::{Error, Result};
use crate::model::{CountGrid, Design, Observation, PopulationMatrix, PriorWeights};

/// Absolute tolerance on `sum(estimate) = K`.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A real-valued `m x n` estimate of the population counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Estimate {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::dims(
                format!("{} entries", rows * cols),
                format!("{} entries", values.len()),
            ));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        crate::summation::compensated_sum(self.values.iter().copied())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

impl From<&CountGrid> for Estimate {
    fn from(g: &CountGrid) -> Self {
        Self {
            rows: g.rows(),
            cols: g.cols(),
            values: g.as_slice().iter().map(|&v| v as f64).collect(),
        }
    }
}

fn check_inputs(design: &Design, prior: &PriorWeights) -> Result<()> {
    design.validate()?;
    prior.check(design)
}

/// Posterior mean given both the first-stage counts and the subgroup totals.
pub fn bayes_full(design: &Design, prior: &PriorWeights, obs: &Observation) -> Result<Estimate> {
    check_inputs(design, prior)?;
    obs.check(design)?;
    let unsampled = design.unsampled() as f64;
    let x = obs.x();
    let mut values = Vec::with_capacity(design.cells());
    for i in 0..design.m {
        let row_mass = prior.row_sums()[i];
        let yi = obs.y()[i] as f64;
        for j in 0..design.n {
            let p = prior.get(i, j);
            values.push(x.get(i, j) as f64 + (p / row_mass) * yi + p * unsampled);
        }
    }
    Estimate::new(design.m, design.n, values)
}

/// Posterior mean given the first-stage counts only.
pub fn bayes_xonly(design: &Design, prior: &PriorWeights, x: &CountGrid) -> Result<Estimate> {
    check_inputs(design, prior)?;
    if x.rows() != design.m || x.cols() != design.n {
        return Err(Error::dims(
            format!("x of shape {}x{}", design.m, design.n),
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    if x.total() != design.l {
        return Err(Error::invalid(format!(
            "x sums to {}, expected L = {}",
            x.total(),
            design.l
        )));
    }
    let after_first = design.after_first() as f64;
    let values = x
        .as_slice()
        .iter()
        .zip(prior.as_slice())
        .map(|(&xij, &p)| xij as f64 + p * after_first)
        .collect();
    Estimate::new(design.m, design.n, values)
}

/// The posterior of the unseen counts as a product of multinomials.
///
/// The unsampled subgroup totals `K[i] - X[i] - Y[i]` follow
/// `Multinomial(K - L - Lp, p[i])`; given those, the unseen counts of row `i`,
/// `K[i][j] - X[i][j]`, follow `Multinomial(Y[i] + unsampled[i], p[i][j] / p[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFactorization {
    pub outer_trials: u64,
    pub outer_probs: Vec<f64>,
    /// Row-major `m x n`; each row sums to one.
    pub inner_probs: Vec<f64>,
    pub x: CountGrid,
    pub y: Vec<u64>,
}

impl PosteriorFactorization {
    pub fn m(&self) -> usize {
        self.outer_probs.len()
    }

    pub fn n(&self) -> usize {
        self.x.cols()
    }

    pub fn inner_row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.inner_probs[i * n..(i + 1) * n]
    }
}

pub fn posterior_factorization(
    design: &Design,
    prior: &PriorWeights,
    obs: &Observation,
) -> Result<PosteriorFactorization> {
    check_inputs(design, prior)?;
    obs.check(design)?;
    let mut inner_probs = Vec::with_capacity(design.cells());
    for i in 0..design.m {
        let row_mass = prior.row_sums()[i];
        inner_probs.extend((0..design.n).map(|j| prior.get(i, j) / row_mass));
    }
    Ok(PosteriorFactorization {
        outer_trials: design.unsampled(),
        outer_probs: prior.row_sums().to_vec(),
        inner_probs,
        x: obs.x().clone(),
        y: obs.y().to_vec(),
    })
}

fn ln_multinomial(trials: u64, counts: &[u64], probs: &[f64]) -> f64 {
    let mut acc = ln_factorial(trials);
    for (&c, &p) in counts.iter().zip(probs) {
        acc -= ln_factorial(c);
        if c > 0 {
            acc += c as f64 * p.ln();
        }
    }
    acc
}

/// Normalized posterior log-mass of `pop` given both surveys; `-inf` off the
/// posterior support.
pub fn posterior_log_mass(
    design: &Design,
    prior: &PriorWeights,
    obs: &Observation,
    pop: &PopulationMatrix,
) -> Result<f64> {
    let fact = posterior_factorization(design, prior, obs)?;
    pop.check(design)?;
    let mut row_unsampled = Vec::with_capacity(design.m);
    for i in 0..design.m {
        let seen = obs.x_row_sums()[i] + obs.y()[i];
        match pop.row_sums()[i].checked_sub(seen) {
            Some(r) => row_unsampled.push(r),
            None => return Ok(f64::NEG_INFINITY),
        }
    }
    let mut acc = ln_multinomial(fact.outer_trials, &row_unsampled, &fact.outer_probs);
    let mut unseen = vec![0u64; design.n];
    for i in 0..design.m {
        for (j, slot) in unseen.iter_mut().enumerate() {
            match pop.get(i, j).checked_sub(obs.x().get(i, j)) {
                Some(r) => *slot = r,
                None => return Ok(f64::NEG_INFINITY),
            }
        }
        acc += ln_multinomial(obs.y()[i] + row_unsampled[i], &unseen, fact.inner_row(i));
    }
    Ok(acc)
}

/// Draws from `Multinomial(trials, probs)` by sequential binomial splitting.
pub(crate) fn sample_multinomial<R: Rng + ?Sized>(
    trials: u64,
    probs: &[f64],
    rng: &mut R,
) -> Vec<u64> {
    let mut left = trials;
    let mut mass_left = 1.0f64;
    let mut out = Vec::with_capacity(probs.len());
    for (c, &p) in probs.iter().enumerate() {
        let draw = if left == 0 {
            0
        } else if c + 1 == probs.len() {
            left
        } else {
            let q = (p / mass_left).clamp(0.0, 1.0);
            Binomial::new(left, q)
                .expect("binomial probability is clamped to [0, 1]")
                .sample(rng)
        };
        out.push(draw);
        left -= draw;
        mass_left -= p;
    }
    out
}

pub fn posterior_sample_with<R: Rng + ?Sized>(
    fact: &PosteriorFactorization,
    rng: &mut R,
) -> PopulationMatrix {
    let n = fact.n();
    let outer = sample_multinomial(fact.outer_trials, &fact.outer_probs, rng);
    let mut data = Vec::with_capacity(fact.m() * n);
    for (i, unsampled) in outer.into_iter().enumerate() {
        let inner = sample_multinomial(fact.y[i] + unsampled, fact.inner_row(i), rng);
        data.extend(fact.x.row(i).iter().zip(inner).map(|(x, k)| x + k));
    }
    PopulationMatrix::new(
        CountGrid::new(fact.m(), n, data).expect("shape follows the factorization"),
    )
}

/// One posterior draw of the population; deterministic in `seed`.
pub fn posterior_sample(fact: &PosteriorFactorization, seed: u64) -> PopulationMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    posterior_sample_with(fact, &mut rng)
}
