//! Observed data: rows of (noisy covariates, outcome, binary treatment).
//!
//! Covariates are stored row-major in one flat buffer. Treatment arms are
//! addressed by `z` and, inside an arm, by the row's position among the rows
//! sharing that treatment value (the order used by [`crate::WeightTable`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedDataset {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<u8>,
}

impl ObservedDataset {
    /// Builds a dataset from a flat row-major covariate buffer.
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<f64>, z: Vec<u8>) -> Result<Self> {
        let n = y.len();
        if z.len() != n {
            return Err(Error::dim(format!("{} outcomes but {} treatments", n, z.len())));
        }
        if x.len() != n * dim {
            return Err(Error::dim(format!(
                "covariate buffer has {} values, expected {} rows x {} columns",
                x.len(),
                n,
                dim
            )));
        }
        if let Some(bad) = z.iter().position(|&t| t > 1) {
            return Err(Error::invalid(format!("treatment at row {} is {}, expected 0 or 1", bad, z[bad])));
        }
        if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("outcome at row {} is not finite", bad)));
        }
        if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("covariate at row {} is not finite", bad / dim.max(1))));
        }
        Ok(Self { dim, x, y, z })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, z: Vec<u8>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::dim(format!("row {} has {} covariates, expected {}", bad, rows[bad].len(), dim)));
        }
        Self::new(dim, rows.concat(), y, z)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of covariate columns.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn treatments(&self) -> &[u8] {
        &self.z
    }

    /// Row indices belonging to arm `z`, in dataset order.
    pub fn arm_rows(&self, z: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.z[i] == z).collect()
    }

    pub fn arm_count(&self, z: u8) -> usize {
        self.z.iter().filter(|&&t| t == z).count()
    }

    /// Replaces the covariate block, keeping outcomes and treatments.
    pub fn with_covariates(&self, dim: usize, x: Vec<f64>) -> Result<Self> {
        Self::new(dim, x, self.y.clone(), self.z.clone())
    }

    /// Centers every covariate column and scales it to unit variance.
    /// Constant columns are only centered.
    pub fn standardized(&self) -> Self {
        let n = self.len();
        let mut x = self.x.clone();
        if n == 0 {
            return self.clone();
        }
        for j in 0..self.dim {
            let mean = (0..n).map(|i| x[i * self.dim + j]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (x[i * self.dim + j] - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            for i in 0..n {
                let v = &mut x[i * self.dim + j];
                *v -= mean;
                if sd > 0.0 {
                    *v /= sd;
                }
            }
        }
        Self { dim: self.dim, x, y: self.y.clone(), z: self.z.clone() }
    }

    /// Rows at the given indices, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut x = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            x.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            x,
            y: rows.iter().map(|&i| self.y[i]).collect(),
            z: rows.iter().map(|&i| self.z[i]).collect(),
        }
    }

    pub(crate) fn require_both_arms(&self) -> Result<()> {
        for arm in 0..2u8 {
            if self.arm_count(arm) == 0 {
                return Err(Error::Positivity(format!("no rows with z = {}", arm)));
            }
        }
        Ok(())
    }
}

/// Row positions of each arm plus the position of every row within its arm.
#[derive(Clone, Debug)]
pub struct ArmIndex {
    pub rows: [Vec<usize>; 2],
    pub position: Vec<usize>,
}

impl ArmIndex {
    pub fn new(data: &ObservedDataset) -> Self {
        let mut rows = [Vec::new(), Vec::new()];
        let mut position = vec![0; data.len()];
        for (i, &z) in data.treatments().iter().enumerate() {
            let arm = &mut rows[z as usize];
            position[i] = arm.len();
            arm.push(i);
        }
        Self { rows, position }
    }

    pub fn count(&self, z: usize) -> usize {
        self.rows[z].len()
    }
}
