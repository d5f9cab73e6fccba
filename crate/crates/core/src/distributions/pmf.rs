use serde::{Deserialize, Serialize};

use super::MAX_PMF_TERMS;
use crate::error::{Error, Result};

/// A count distribution on `0..=n_max` plus the mass beyond `n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    masses: Vec<f64>,
    tail_mass: f64,
}

impl Pmf {
    /// Build from explicit masses. The tail is whatever is missing from 1.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidParams("pmf needs at least one mass".into()));
        }
        if let Some(bad) = masses.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::InvalidParams(format!("pmf mass {bad} outside [0, 1]")));
        }
        let total: f64 = masses.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidParams(format!("pmf masses sum to {total} > 1")));
        }
        Ok(Self {
            masses,
            tail_mass: (1.0 - total).max(0.0),
        })
    }

    /// Point mass at `n`.
    pub fn point(n: usize) -> Self {
        let mut masses = vec![0.0; n + 1];
        masses[n] = 1.0;
        Self {
            masses,
            tail_mass: 0.0,
        }
    }

    /// Evaluate `mass(n)` for `n = 0, 1, …` until at least `min_len` terms
    /// are present and the missing mass is below `cutoff`.
    pub fn from_fn<F>(cutoff: f64, min_len: usize, mut mass: F) -> Result<Self>
    where
        F: FnMut(usize) -> Result<f64>,
    {
        let mut masses = Vec::new();
        let mut total = 0.0;
        for n in 0..MAX_PMF_TERMS {
            let m = mass(n)?;
            masses.push(m);
            total += m;
            if n + 1 >= min_len && 1.0 - total < cutoff {
                break;
            }
        }
        Ok(Self {
            masses,
            tail_mass: (1.0 - total).max(0.0),
        })
    }

    /// Normalize arbitrary nonnegative weights into a pmf with zero tail.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParams("weights have no positive mass".into()));
        }
        Ok(Self {
            masses: weights.into_iter().map(|w| w / total).collect(),
            tail_mass: 0.0,
        })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Largest represented count.
    pub fn n_max(&self) -> usize {
        self.masses.len() - 1
    }

    /// Mass at `n`; zero beyond `n_max`.
    pub fn mass(&self, n: usize) -> f64 {
        self.masses.get(n).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.tail_mass
    }

    pub fn mean(&self) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(n, m)| n as f64 * m)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.masses
            .iter()
            .enumerate()
            .map(|(n, m)| (n as f64 - mean).powi(2) * m)
            .sum()
    }

    /// `P(X ≤ n)` for every represented `n`.
    pub fn cdf(&self) -> Vec<f64> {
        self.masses
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }

    /// `P(X > n)` for every represented `n`, summed from the top so small
    /// tails keep their relative precision.
    pub fn survival(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.masses.len()];
        let mut acc = self.tail_mass;
        for n in (0..self.masses.len()).rev() {
            out[n] = acc;
            acc += self.masses[n];
        }
        out
    }

    /// Append zero-mass bins up to `n_max`.
    pub fn padded(&self, n_max: usize) -> Self {
        let mut masses = self.masses.clone();
        if masses.len() < n_max + 1 {
            masses.resize(n_max + 1, 0.0);
        }
        Self {
            masses,
            tail_mass: self.tail_mass,
        }
    }

    /// Discrete convolution (sum of independent counts).
    pub fn convolve(&self, other: &Pmf) -> Self {
        let len = self.masses.len() + other.masses.len() - 1;
        let mut masses = vec![0.0; len];
        for (i, a) in self.masses.iter().enumerate() {
            for (j, b) in other.masses.iter().enumerate() {
                masses[i + j] += a * b;
            }
        }
        let total: f64 = masses.iter().sum();
        Self {
            masses,
            tail_mass: (1.0 - total).max(0.0),
        }
    }

    /// Total-variation distance, treating missing bins as zero.
    pub fn total_variation(&self, other: &Pmf) -> f64 {
        let len = self.masses.len().max(other.masses.len());
        let body: f64 = (0..len)
            .map(|n| (self.mass(n) - other.mass(n)).abs())
            .sum();
        0.5 * (body + (self.tail_mass - other.tail_mass).abs())
    }

    /// Write as CSV with columns `n_c,mass`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["n_c", "mass"])?;
        for (n, m) in self.masses.iter().enumerate() {
            wtr.write_record([n.to_string(), m.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<pmf csv>", e))?;
        Ok(())
    }
}
