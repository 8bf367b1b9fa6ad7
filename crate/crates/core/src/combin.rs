//! Exact integer combinatorics and bounded-composition enumeration.

use crate::error::{Error, Result};

/// Exact binomial coefficient `C(n, k)`; zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        // acc * (n - k + i) / i stays integral at every step
        acc = acc
            .checked_mul(n as u128 - k as u128 + i)
            .ok_or_else(|| Error::Overflow(format!("C({n}, {k})")))?
            / i;
    }
    Ok(acc)
}

/// `ln(n!)` accumulated term by term.
pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Number of vectors `v` with `0 <= v[i] <= bounds[i]` summing to `total`.
pub fn count_bounded_compositions(bounds: &[u64], total: u64) -> u128 {
    let t = total as usize;
    // ways[s] = number of ways the processed prefix sums to s
    let mut ways = vec![0u128; t + 1];
    ways[0] = 1;
    for &b in bounds {
        let mut next = vec![0u128; t + 1];
        for (s, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let hi = (s as u64 + b).min(total) as usize;
            for slot in &mut next[s..=hi] {
                *slot = slot.saturating_add(w);
            }
        }
        ways = next;
    }
    ways[t]
}

/// Iterates every vector with entries in `[0, bounds[i]]` summing to `total`,
/// in ascending lexicographic order.
#[derive(Debug, Clone)]
pub struct BoundedCompositions {
    bounds: Vec<u64>,
    /// `capacity[i]` = sum of `bounds[i..]`.
    capacity: Vec<u64>,
    current: Option<Vec<u64>>,
}

impl BoundedCompositions {
    pub fn new(bounds: Vec<u64>, total: u64) -> Self {
        let mut capacity = vec![0u64; bounds.len() + 1];
        for i in (0..bounds.len()).rev() {
            capacity[i] = capacity[i + 1].saturating_add(bounds[i]);
        }
        let current = if total > capacity[0] {
            None
        } else {
            let mut v = vec![0; bounds.len()];
            fill_smallest(&mut v, &capacity, 0, total);
            Some(v)
        };
        Self {
            bounds,
            capacity,
            current,
        }
    }

    /// Unbounded compositions of `total` into `parts` nonnegative parts.
    pub fn unbounded(parts: usize, total: u64) -> Self {
        Self::new(vec![total; parts], total)
    }

    fn advance(&mut self) {
        let Some(cur) = self.current.as_mut() else {
            return;
        };
        let len = cur.len();
        let mut tail = 0u64;
        for i in (0..len.saturating_sub(1)).rev() {
            tail += cur[i + 1];
            if cur[i] < self.bounds[i] && tail >= 1 {
                cur[i] += 1;
                fill_smallest(cur, &self.capacity, i + 1, tail - 1);
                return;
            }
        }
        self.current = None;
    }
}

/// Writes the lexicographically smallest composition of `total` into `v[from..]`.
fn fill_smallest(v: &mut [u64], capacity: &[u64], from: usize, mut total: u64) {
    for j in from..v.len() {
        let rest = capacity[j + 1];
        let x = total.saturating_sub(rest);
        v[j] = x;
        total -= x;
    }
    debug_assert_eq!(total, 0);
}

impl Iterator for BoundedCompositions {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        let out = self.current.clone()?;
        self.advance();
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(4, 2).unwrap(), 6);
        assert_eq!(binomial(0, 0).unwrap(), 1);
        assert_eq!(binomial(3, 5).unwrap(), 0);
        assert_eq!(binomial(60, 30).unwrap(), 118_264_581_564_861_424);
    }

    #[test]
    fn binomial_pascal_rule() {
        for n in 1..70u64 {
            for k in 1..n {
                let lhs = binomial(n, k).unwrap();
                let rhs = binomial(n - 1, k - 1).unwrap() + binomial(n - 1, k).unwrap();
                assert_eq!(lhs, rhs, "C({n},{k})");
            }
        }
    }

    #[test]
    fn binomial_overflow_is_reported() {
        assert!(matches!(binomial(200, 100), Err(Error::Overflow(_))));
    }

    #[test]
    fn ln_factorial_matches_exact() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(10) - 3_628_800f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn compositions_lexicographic() {
        let all: Vec<_> = BoundedCompositions::new(vec![1, 1], 1).collect();
        assert_eq!(all, vec![vec![0, 1], vec![1, 0]]);
        let all: Vec<_> = BoundedCompositions::unbounded(2, 2).collect();
        assert_eq!(all, vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
    }

    #[test]
    fn compositions_infeasible_and_empty() {
        assert_eq!(BoundedCompositions::new(vec![1, 1], 3).count(), 0);
        assert_eq!(
            BoundedCompositions::new(vec![], 0).collect::<Vec<_>>(),
            vec![Vec::<u64>::new()]
        );
        assert_eq!(BoundedCompositions::new(vec![], 1).count(), 0);
    }

    #[test]
    fn compositions_match_brute_force() {
        let bounds = vec![1u64, 2, 0, 3, 2];
        for total in 0..=9u64 {
            // mixed-radix odometer, first entry most significant
            let radices: Vec<u64> = bounds.iter().map(|b| b + 1).collect();
            let states: u64 = radices.iter().product();
            let brute: Vec<Vec<u64>> = (0..states)
                .map(|mut code| {
                    let mut v = vec![0u64; radices.len()];
                    for (slot, r) in v.iter_mut().zip(&radices).rev() {
                        *slot = code % r;
                        code /= r;
                    }
                    v
                })
                .filter(|v| v.iter().sum::<u64>() == total)
                .collect();
            let fast: Vec<_> = BoundedCompositions::new(bounds.clone(), total).collect();
            assert_eq!(fast, brute, "total {total}");
            assert_eq!(count_bounded_compositions(&bounds, total), brute.len() as u128);
        }
    }
}
