//! Unsigned Stirling numbers of the first kind in log space, and the
//! table-count (Antoniak) distribution built on them.

use std::sync::{OnceLock, RwLock};

use rand::Rng;

use crate::dist;
use crate::error::{Error, Result};

/// Lazily grown triangle of `ln s(n, m)` for `0 <= m <= n`.
#[derive(Debug)]
pub struct StirlingTable {
    rows: RwLock<Vec<Vec<f64>>>,
}

impl Default for StirlingTable {
    fn default() -> Self {
        Self::new()
    }
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl StirlingTable {
    pub fn new() -> Self {
        Self {
            rows: RwLock::new(vec![vec![0.0]]),
        }
    }

    /// Process-wide table shared by all chains.
    pub fn global() -> &'static StirlingTable {
        static TABLE: OnceLock<StirlingTable> = OnceLock::new();
        TABLE.get_or_init(StirlingTable::new)
    }

    pub fn max_n(&self) -> usize {
        self.rows.read().expect("stirling table lock").len() - 1
    }

    fn grow(&self, n: usize) {
        if n <= self.max_n() {
            return;
        }
        let mut rows = self.rows.write().expect("stirling table lock");
        while rows.len() <= n {
            let prev_n = rows.len() - 1;
            let prev = &rows[prev_n];
            let ln_n = (prev_n as f64).ln();
            let mut next = vec![f64::NEG_INFINITY; prev_n + 2];
            for (m, slot) in next.iter_mut().enumerate() {
                let from_new = if m >= 1 {
                    prev[m - 1]
                } else {
                    f64::NEG_INFINITY
                };
                let from_old = if m <= prev_n && prev_n > 0 {
                    ln_n + prev[m]
                } else {
                    f64::NEG_INFINITY
                };
                *slot = ln_add_exp(from_new, from_old);
            }
            rows.push(next);
        }
    }

    /// `ln s(n, m)`; `-inf` where the number is zero.
    pub fn ln_stirling1(&self, n: usize, m: usize) -> f64 {
        if m > n {
            return f64::NEG_INFINITY;
        }
        self.grow(n);
        self.rows.read().expect("stirling table lock")[n][m]
    }

    /// Apply `f` to the row `ln s(n, 0..=n)`.
    pub fn with_row<T>(&self, n: usize, f: impl FnOnce(&[f64]) -> T) -> T {
        self.grow(n);
        let rows = self.rows.read().expect("stirling table lock");
        f(&rows[n])
    }
}

/// `ln s(n, m)` from the shared table.
pub fn log_stirling1(n: usize, m: usize) -> f64 {
    StirlingTable::global().ln_stirling1(n, m)
}

fn check_concentration(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "table-count concentration must be positive, got {a}"
        )))
    }
}

/// Probabilities `P(m | n, a) ∝ s(n, m) a^m` for `m = 0..=n`.
pub fn table_count_probs(n: usize, a: f64) -> Result<Vec<f64>> {
    check_concentration(a)?;
    if n == 0 {
        return Ok(vec![1.0]);
    }
    let ln_a = a.ln();
    let logw: Vec<f64> = StirlingTable::global().with_row(n, |row| {
        row.iter()
            .enumerate()
            .map(|(m, &ls)| ls + m as f64 * ln_a)
            .collect()
    });
    let norm = dist::log_sum_exp(&logw);
    Ok(logw.iter().map(|w| (w - norm).exp()).collect())
}

/// Number of tables formed by `n` customers of a Chinese restaurant with concentration `a`.
pub fn sample_table_count<R: Rng + ?Sized>(n: usize, a: f64, rng: &mut R) -> Result<usize> {
    check_concentration(a)?;
    if n <= 1 {
        return Ok(n);
    }
    let probs = table_count_probs(n, a)?;
    let target = rng.random::<f64>();
    let mut acc = 0.0;
    for (m, p) in probs.iter().enumerate().skip(1) {
        acc += p;
        if target < acc {
            return Ok(m);
        }
    }
    Ok(n)
}
