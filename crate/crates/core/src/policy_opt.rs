//! Parameter search for the finite-battery policy families.
//!
//! All candidates of one search are scored on the same seeds so that demand,
//! generation and policy uniforms are shared between them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::leakage_sim::estimate_leakage_seeded;
use crate::model::GridModel;
use crate::policies::Policy;

/// Simulation effort for each candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct SimBudget {
    pub n: u64,
    pub seeds: Vec<u64>,
}

impl SimBudget {
    pub fn new(n: u64, seeds: u64) -> Self {
        Self {
            n,
            seeds: (0..seeds).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub leakage: f64,
    pub std_error: f64,
}

fn score(model: &GridModel, policy: &Policy, budget: &SimBudget) -> Result<Score> {
    let est = estimate_leakage_seeded(model, policy, budget.n, &budget.seeds)?;
    Ok(Score {
        leakage: est.bits_per_slot,
        std_error: est.std_error,
    })
}

fn grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::InvalidArgument(format!("grid step {step} outside (0, 0.5]")));
    }
    let count = (1.0 / step).round() as usize;
    if ((count as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("grid step {step} does not divide 1")));
    }
    Ok((0..=count).map(|i| i as f64 / count as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub best_pv: f64,
    pub best: Score,
    /// `(p_v, score)` in increasing `p_v`.
    pub curve: Vec<(f64, Score)>,
}

/// Battery-independent masking probability on the grid `{0, step, ..., 1}`.
/// Ties go to the larger `p_v`.
pub fn scan_pv(model: &GridModel, grid_step: f64, budget: &SimBudget) -> Result<ScanResult> {
    let points = grid(grid_step)?;
    let curve = points
        .par_iter()
        .map(|&p_v| Ok((p_v, score(model, &Policy::BatteryIndependent { p_v }, budget)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut best = curve[0];
    for &(p_v, s) in &curve[1..] {
        if s.leakage <= best.1.leakage {
            best = (p_v, s);
        }
    }
    Ok(ScanResult {
        best_pv: best.0,
        best: best.1,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdOptions {
    pub probes: usize,
    pub radius: f64,
    pub learning_rate: f64,
    pub threshold: f64,
    pub max_iter: usize,
    /// Seed of the perturbation stream.
    pub seed: u64,
}

impl Default for SgdOptions {
    fn default() -> Self {
        Self {
            probes: 16,
            radius: 0.05,
            learning_rate: 0.2,
            threshold: 1e-3,
            max_iter: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SgdStep {
    pub iteration: usize,
    pub p_v: Vec<f64>,
    pub leakage: f64,
    pub std_error: f64,
    /// Lowest leakage seen up to and including this iteration.
    pub best_leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SgdResult {
    pub p_v: Vec<f64>,
    pub best: Score,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<SgdStep>,
}

/// Least-squares slope of `values` against `offsets` with an intercept.
pub fn fit_gradient(offsets: &[Vec<f64>], values: &[f64]) -> Result<Vec<f64>> {
    let m = offsets.len();
    let d = offsets.first().map_or(0, Vec::len);
    if m != values.len() || m < d + 1 {
        return Err(Error::InvalidArgument(format!(
            "{m} probes cannot fit a {d}-dimensional gradient"
        )));
    }
    let a = DMatrix::from_fn(m, d + 1, |i, j| if j == 0 { 1.0 } else { offsets[i][j - 1] });
    let b = DVector::from_column_slice(values);
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(coef.iter().skip(1).copied().collect())
}

/// Finite-difference stochastic gradient descent over per-SOC masking
/// probabilities, projected onto `[0, 1]` coordinatewise.
pub fn sgd_battery_conditioned(
    model: &GridModel,
    init: &[f64],
    opts: &SgdOptions,
    budget: &SimBudget,
) -> Result<SgdResult> {
    let conditioned = |p_v: &[f64]| Policy::BatteryConditioned { p_v: p_v.to_vec() };
    conditioned(init).validate(model)?;
    if opts.probes < init.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} probes cannot fit {} coordinates",
            opts.probes,
            init.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut theta = init.to_vec();
    let mut current = score(model, &conditioned(&theta), budget)?;
    let mut best = (theta.clone(), current);
    let mut trace = vec![SgdStep {
        iteration: 0,
        p_v: theta.clone(),
        leakage: current.leakage,
        std_error: current.std_error,
        best_leakage: current.leakage,
    }];
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=opts.max_iter {
        iterations = k;
        let offsets: Vec<Vec<f64>> = (0..opts.probes)
            .map(|_| {
                theta
                    .iter()
                    .map(|&t| (t + rng.gen_range(-opts.radius..=opts.radius)).clamp(0.0, 1.0) - t)
                    .collect()
            })
            .collect();
        let values = offsets
            .par_iter()
            .map(|off| {
                let probe: Vec<f64> = theta.iter().zip(off).map(|(t, o)| t + o).collect();
                score(model, &conditioned(&probe), budget).map(|s| s.leakage)
            })
            .collect::<Result<Vec<_>>>()?;
        let grad = fit_gradient(&offsets, &values)?;
        let next: Vec<f64> = theta
            .iter()
            .zip(&grad)
            .map(|(t, g)| (t - opts.learning_rate * g).clamp(0.0, 1.0))
            .collect();
        let next_score = score(model, &conditioned(&next), budget)?;
        let improvement = current.leakage - next_score.leakage;
        theta = next;
        current = next_score;
        if current.leakage < best.1.leakage {
            best = (theta.clone(), current);
        }
        trace.push(SgdStep {
            iteration: k,
            p_v: theta.clone(),
            leakage: current.leakage,
            std_error: current.std_error,
            best_leakage: best.1.leakage,
        });
        if improvement.abs() < opts.threshold {
            converged = true;
            break;
        }
    }
    Ok(SgdResult {
        p_v: best.0,
        best: best.1,
        iterations,
        converged,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreeLevelResult {
    pub p: [f64; 6],
    pub best: Score,
    pub evaluated: usize,
}

/// Exhaustive grid over `(p_i, p_{i+3})` pairs with `p_i + p_{i+3} <= 1`.
pub fn search_three_level(model: &GridModel, grid_step: f64, budget: &SimBudget) -> Result<ThreeLevelResult> {
    let points = grid(grid_step)?;
    let last = points.len() - 1;
    let mut pairs = Vec::new();
    for i in 0..=last {
        for j in 0..=last - i {
            pairs.push((points[i], points[j]));
        }
    }
    let mut candidates = Vec::with_capacity(pairs.len().pow(3));
    for a in &pairs {
        for b in &pairs {
            for c in &pairs {
                candidates.push([a.0, b.0, c.0, a.1, b.1, c.1]);
            }
        }
    }
    let scores = candidates
        .par_iter()
        .map(|&p| score(model, &Policy::ThreeLevel { p }, budget))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.leakage < scores[best].leakage {
            best = i;
        }
    }
    Ok(ThreeLevelResult {
        p: candidates[best],
        best: scores[best],
        evaluated: candidates.len(),
    })
}
