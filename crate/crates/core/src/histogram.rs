use serde::{Deserialize, Serialize};

use crate::distributions::Pmf;
use crate::error::{Error, Result};

/// Frequency table of readout counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountHistogram {
    counts: Vec<u64>,
}

impl CountHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from a table where entry `n` is the number of runs with `n_c = n`.
    pub fn from_table(counts: Vec<u64>) -> Self {
        let mut h = Self { counts };
        h.trim();
        h
    }

    pub fn add(&mut self, n_c: u64) {
        let n = n_c as usize;
        if self.counts.len() <= n {
            self.counts.resize(n + 1, 0);
        }
        self.counts[n] += 1;
    }

    fn trim(&mut self) {
        while self.counts.last() == Some(&0) {
            self.counts.pop();
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, n_c: usize) -> u64 {
        self.counts.get(n_c).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Largest observed count, if any.
    pub fn max_count(&self) -> Option<usize> {
        self.counts.iter().rposition(|&c| c > 0)
    }

    pub fn mean(&self) -> f64 {
        let total = self.total() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(n, &c)| n as f64 * c as f64)
            .sum::<f64>()
            / total
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let total = self.total() as f64;
        let mean = self.mean();
        let ss: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(n, &c)| (n as f64 - mean).powi(2) * c as f64)
            .sum();
        ss / (total - 1.0)
    }

    /// Number of entries with `n_c > threshold`.
    pub fn above(&self, threshold: u64) -> u64 {
        self.counts
            .iter()
            .skip(threshold as usize + 1)
            .copied()
            .sum()
    }

    /// Relative frequencies.
    pub fn to_pmf(&self) -> Result<Pmf> {
        if self.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        Pmf::normalized(self.counts.iter().map(|&c| c as f64).collect())
    }
}

impl FromIterator<u64> for CountHistogram {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut h = CountHistogram::new();
        for n in iter {
            h.add(n);
        }
        h
    }
}
