//! Chained-equations imputation with deterministic least-squares regressions.
//!
//! Every incomplete column is regressed (OLS with intercept) on all other
//! columns and its missing entries are replaced by the fitted values.
//! Columns are visited in index order and the sweep repeats until no imputed
//! value moves by more than `tolerance`.
//! Each regression is refitted every sweep on the rows where its target is
//! observed, with the current imputations standing in for missing predictors.
//! There is no posterior draw, so the result is a single deterministic
//! completion rather than a set of multiple imputations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FeatureVector, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiceConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for MiceConfig {
    fn default() -> Self {
        MiceConfig { max_iterations: 20, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiceOutcome {
    pub rows: Vec<FeatureVector>,
    /// Number of full sweeps performed.
    pub iterations: usize,
    /// Largest absolute change of any imputed value, per sweep.
    pub max_changes: Vec<f64>,
    pub converged: bool,
}

fn check_rows(rows: &[FeatureVector]) -> Result<usize, ScenarioError> {
    if rows.len() < 2 {
        return Err(ScenarioError::InvalidImputation("need at least two rows".into()));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width || r.mask.len() != width) {
        return Err(ScenarioError::InvalidImputation("ragged rows".into()));
    }
    for col in 0..width {
        if rows.iter().all(|r| !r.mask[col]) {
            return Err(ScenarioError::UnimputableColumn(col));
        }
    }
    Ok(width)
}

fn column_means(rows: &[FeatureVector], width: usize) -> Vec<f64> {
    (0..width)
        .map(|c| {
            let (sum, n) = rows
                .iter()
                .filter(|r| r.mask[c])
                .fold((0.0, 0usize), |(s, n), r| (s + r.values[c], n + 1));
            sum / n as f64
        })
        .collect()
}

/// Replaces each missing entry by its column's observed mean.
pub fn mean_impute(rows: &[FeatureVector]) -> Result<Vec<FeatureVector>, ScenarioError> {
    let width = check_rows(rows)?;
    let means = column_means(rows, width);
    Ok(rows
        .iter()
        .map(|r| {
            FeatureVector::observed(
                (0..width).map(|c| if r.mask[c] { r.values[c] } else { means[c] }).collect(),
            )
        })
        .collect())
}

pub fn mice_impute(rows: &[FeatureVector], config: &MiceConfig) -> Result<MiceOutcome, ScenarioError> {
    let width = check_rows(rows)?;
    if !(0..width).any(|c| rows.iter().all(|r| r.mask[c])) {
        return Err(ScenarioError::InvalidImputation("no fully observed column".into()));
    }
    let means = column_means(rows, width);
    let n = rows.len();
    let mut data: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..width).map(|c| if r.mask[c] { r.values[c] } else { means[c] }).collect())
        .collect();
    let incomplete: Vec<usize> = (0..width).filter(|&c| rows.iter().any(|r| !r.mask[c])).collect();

    let mut max_changes = Vec::new();
    let mut converged = incomplete.is_empty();
    let mut iterations = 0;
    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for &col in &incomplete {
            let observed: Vec<usize> = (0..n).filter(|&i| rows[i].mask[col]).collect();
            let coef = fit_ols(&data, &observed, col, width);
            for i in (0..n).filter(|&i| !rows[i].mask[col]) {
                let pred = predict(&coef, &data[i], col);
                max_change = max_change.max((pred - data[i][col]).abs());
                data[i][col] = pred;
            }
        }
        max_changes.push(max_change);
        converged = max_change < config.tolerance;
    }
    Ok(MiceOutcome {
        rows: data.into_iter().map(FeatureVector::observed).collect(),
        iterations,
        max_changes,
        converged,
    })
}

/// Coefficients `[intercept, w_0 .. w_{width-1}]` with `w_target` fixed at 0.
fn fit_ols(data: &[Vec<f64>], rows: &[usize], target: usize, width: usize) -> Vec<f64> {
    let predictors: Vec<usize> = (0..width).filter(|&c| c != target).collect();
    let x = DMatrix::from_fn(rows.len(), predictors.len() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            data[rows[r]][predictors[c - 1]]
        }
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| data[r][target]));
    // SVD least squares handles collinear or underdetermined designs by
    // returning the minimum-norm solution.
    let svd = x.svd(true, true);
    let beta = svd.solve(&y, 1e-12).expect("svd computed with u and v");
    let mut coef = vec![0.0; width + 1];
    coef[0] = beta[0];
    for (k, &c) in predictors.iter().enumerate() {
        coef[c + 1] = beta[k + 1];
    }
    coef
}

fn predict(coef: &[f64], row: &[f64], target: usize) -> f64 {
    coef[0]
        + row
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != target)
            .map(|(c, v)| coef[c + 1] * v)
            .sum::<f64>()
}
