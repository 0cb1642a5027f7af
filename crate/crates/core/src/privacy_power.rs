//! Single-letter privacy-power function: the least `I(X;Y)` over channels with
//! `0 <= x - y <= P_hat` and `E[X - Y] <= P_bar`.
//!
//! The problem is a rate-distortion problem with distortion `d(x, y) = x - y`
//! restricted to the band `x - P_hat <= y <= x`. For a fixed slope `s` (bits
//! per quantum) the Blahut-Arimoto iteration
//!
//! ```text
//! q(y|x) = r(y) 2^{-s d(x,y)} / Z_x,      r(y) = sum_x p(x) q(y|x)
//! ```
//!
//! converges to the point of the curve with tangent slope `-s`. An outer
//! bisection on `s` brackets the requested average draw, and the two bracketing
//! channels are time-shared so the returned channel meets `P_bar` exactly.
//! Off-band entries are never represented.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pmf::{entropy, expected_battery_draw, mutual_information, ConditionalPmf, Pmf};

#[derive(Debug, Clone, PartialEq)]
pub struct PpfOptions {
    /// Inner stopping rule on the per-iteration change in leakage (bits).
    pub tol: f64,
    pub max_iter: usize,
    /// Upper end of the slope bracket, bits per quantum.
    pub slope_max: f64,
    pub bisection_steps: usize,
    /// Subtracted from `P_bar` before solving, for callers that need the
    /// average constraint to hold strictly.
    pub backoff: f64,
}

impl Default for PpfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            slope_max: 64.0,
            bisection_steps: 60,
            backoff: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpfResult {
    pub leakage_bits: f64,
    pub channel: ConditionalPmf,
    pub achieved_avg_draw: f64,
    /// Total inner iterations across all slopes.
    pub iterations: usize,
    pub converged: bool,
}

/// Privacy-power function with default options and inner tolerance `tol`.
pub fn ppf(p_x: &Pmf, p_bar: f64, p_hat: u64, tol: f64) -> Result<PpfResult> {
    ppf_with(
        p_x,
        p_bar,
        p_hat,
        &PpfOptions {
            tol,
            ..PpfOptions::default()
        },
    )
}

pub fn ppf_with(p_x: &Pmf, p_bar: f64, p_hat: u64, opts: &PpfOptions) -> Result<PpfResult> {
    if p_bar.is_nan() || p_bar < 0.0 {
        return Err(Error::InvalidArgument(format!("P_bar must be >= 0, got {p_bar}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", opts.tol)));
    }
    let budget = (p_bar - opts.backoff.max(0.0)).max(0.0);
    let band = Band::new(p_x.len(), p_hat);

    if budget <= 0.0 || p_hat == 0 {
        let channel = ConditionalPmf::identity(p_x.len())?;
        return Ok(PpfResult {
            leakage_bits: entropy(p_x),
            channel,
            achieved_avg_draw: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let mut solver = BlahutArimoto::new(p_x, band, opts);

    // slope 0: the least leakage reachable at all
    let flat = solver.solve(0.0);
    if flat.draw <= budget {
        return solver.finish(flat, None, budget);
    }

    let mut lo = flat;
    let mut hi = solver.solve(opts.slope_max);
    if hi.draw > budget {
        // budget below what the steepest slope reaches; time-share with Y = X
        let identity = solver.identity_point();
        return solver.finish(identity, Some(hi), budget);
    }
    let (mut s_lo, mut s_hi) = (0.0, opts.slope_max);
    for _ in 0..opts.bisection_steps {
        let mid = 0.5 * (s_lo + s_hi);
        let point = solver.solve(mid);
        if point.draw <= budget {
            hi = point;
            s_hi = mid;
        } else {
            lo = point;
            s_lo = mid;
        }
    }
    solver.finish(hi, Some(lo), budget)
}

/// Pointwise evaluation on an ascending grid of average draws.
///
/// A channel feasible at a smaller `P_bar` stays feasible at larger ones, so
/// each point carries forward the best channel found so far.
pub fn ppf_curve(p_x: &Pmf, p_hat: u64, p_bar_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    ppf_curve_with(p_x, p_hat, p_bar_grid, &PpfOptions::default())
}

pub fn ppf_curve_with(
    p_x: &Pmf,
    p_hat: u64,
    p_bar_grid: &[f64],
    opts: &PpfOptions,
) -> Result<Vec<(f64, f64)>> {
    if p_bar_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("P_bar grid must be sorted ascending".into()));
    }
    let points = p_bar_grid
        .par_iter()
        .map(|&p_bar| ppf_with(p_x, p_bar, p_hat, opts).map(|r| r.leakage_bits))
        .collect::<Result<Vec<_>>>()?;
    let mut best = f64::INFINITY;
    Ok(p_bar_grid
        .iter()
        .zip(points)
        .map(|(&p_bar, v)| {
            best = best.min(v);
            (p_bar, best)
        })
        .collect())
}

/// Expected single-state privacy-power function `sum_e p_E(e) I(e, e)`: the
/// no-storage leakage when the meter reader also observes generation.
pub fn ppf_zero_known(p_x: &Pmf, p_e: &Pmf) -> Result<f64> {
    ppf_zero_known_capped(p_x, p_e, None)
}

/// As [`ppf_zero_known`] with the per-slot draw limited to `min(e, cap)`.
pub fn ppf_zero_known_capped(p_x: &Pmf, p_e: &Pmf, cap: Option<u64>) -> Result<f64> {
    let opts = PpfOptions::default();
    let mut total = 0.0;
    for (e, &pe) in p_e.probs().iter().enumerate() {
        if pe == 0.0 {
            continue;
        }
        let limit = cap.map_or(e as u64, |c| c.min(e as u64));
        total += pe * ppf_with(p_x, limit as f64, limit, &opts)?.leakage_bits;
    }
    Ok(total)
}

/// Allowed outputs `lo(x) ..= x` with `lo(x) = max(0, x - P_hat)`.
#[derive(Debug, Clone, Copy)]
struct Band {
    size: usize,
    p_hat: usize,
}

impl Band {
    fn new(size: usize, p_hat: u64) -> Self {
        Self {
            size,
            p_hat: usize::try_from(p_hat).unwrap_or(usize::MAX),
        }
    }

    fn lo(&self, x: usize) -> usize {
        x.saturating_sub(self.p_hat)
    }
}

#[derive(Debug, Clone)]
struct Point {
    /// Band rows: `rows[x][j]` is `q(lo(x) + j | x)`.
    rows: Vec<Vec<f64>>,
    draw: f64,
    converged: bool,
}

struct BlahutArimoto<'a> {
    p_x: &'a Pmf,
    band: Band,
    opts: &'a PpfOptions,
    /// Warm start carried across slopes.
    marginal: Vec<f64>,
    iterations: usize,
}

impl<'a> BlahutArimoto<'a> {
    fn new(p_x: &'a Pmf, band: Band, opts: &'a PpfOptions) -> Self {
        let n = band.size;
        Self {
            p_x,
            band,
            opts,
            marginal: vec![1.0 / n as f64; n],
            iterations: 0,
        }
    }

    fn solve(&mut self, slope: f64) -> Point {
        let n = self.band.size;
        let px = self.p_x.probs();
        // keep every output reachable after a warm start
        let floor = 1e-9 / n as f64;
        let mut r: Vec<f64> = self.marginal.iter().map(|v| v + floor).collect();
        let total: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= total);

        // 2^{-s k} for draws k = 0 ..= P_hat
        let widest = self.band.p_hat.min(n - 1);
        let weight: Vec<f64> = (0..=widest).map(|k| (-slope * k as f64).exp2()).collect();

        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|x| vec![0.0; x - self.band.lo(x) + 1])
            .collect();
        let mut prev = f64::INFINITY;
        let mut prev_draw = f64::INFINITY;
        let mut done = false;
        let mut next = vec![0.0; n];
        for _ in 0..self.opts.max_iter {
            self.iterations += 1;
            next.iter_mut().for_each(|v| *v = 0.0);
            for (x, row) in rows.iter_mut().enumerate() {
                let lo = self.band.lo(x);
                let mut z = 0.0;
                for (j, q) in row.iter_mut().enumerate() {
                    *q = r[lo + j] * weight[x - lo - j];
                    z += *q;
                }
                if z > 0.0 {
                    row.iter_mut().for_each(|q| *q /= z);
                } else {
                    row.iter_mut().for_each(|q| *q = 0.0);
                    *row.last_mut().unwrap() = 1.0;
                }
                for (j, q) in row.iter().enumerate() {
                    next[lo + j] += px[x] * q;
                }
            }
            std::mem::swap(&mut r, &mut next);
            let (leakage, draw) = self.evaluate(&rows, &r);
            if (leakage - prev).abs() < self.opts.tol && (draw - prev_draw).abs() < self.opts.tol {
                done = true;
                prev_draw = draw;
                break;
            }
            prev = leakage;
            prev_draw = draw;
        }
        self.marginal.clone_from(&r);
        Point {
            rows,
            draw: prev_draw,
            converged: done,
        }
    }

    fn evaluate(&self, rows: &[Vec<f64>], r: &[f64]) -> (f64, f64) {
        let px = self.p_x.probs();
        let mut leakage = 0.0;
        let mut draw = 0.0;
        for (x, row) in rows.iter().enumerate() {
            if px[x] == 0.0 {
                continue;
            }
            let lo = self.band.lo(x);
            for (j, &q) in row.iter().enumerate() {
                if q > 0.0 {
                    leakage += px[x] * q * (q / r[lo + j]).log2();
                    draw += px[x] * q * (x - lo - j) as f64;
                }
            }
        }
        (leakage.max(0.0), draw)
    }

    fn identity_point(&self) -> Point {
        let rows = (0..self.band.size)
            .map(|x| {
                let mut row = vec![0.0; x - self.band.lo(x) + 1];
                *row.last_mut().unwrap() = 1.0;
                row
            })
            .collect();
        Point {
            rows,
            draw: 0.0,
            converged: true,
        }
    }

    fn to_channel(&self, rows: &[Vec<f64>]) -> Result<ConditionalPmf> {
        let n = self.band.size;
        let full = rows
            .iter()
            .enumerate()
            .map(|(x, row)| {
                let lo = self.band.lo(x);
                let mut dense = vec![0.0; n];
                dense[lo..=x].copy_from_slice(row);
                Pmf::from_weights(&dense)
            })
            .collect::<Result<Vec<_>>>()?;
        ConditionalPmf::from_rows(full)
    }

    /// Builds the result from `feasible` (draw within budget) and an optional
    /// `over` point (draw above budget), time-sharing the two so the draw meets
    /// the budget exactly, and keeping whichever feasible channel leaks less.
    fn finish(&self, feasible: Point, over: Option<Point>, budget: f64) -> Result<PpfResult> {
        let mut channel = self.to_channel(&feasible.rows)?;
        let mut leakage = mutual_information(self.p_x, &channel)?;
        let mut converged = feasible.converged;

        if let Some(over) = over {
            if over.draw > feasible.draw {
                let lambda = ((budget - feasible.draw) / (over.draw - feasible.draw)).clamp(0.0, 1.0);
                let mixed_rows: Vec<Vec<f64>> = feasible
                    .rows
                    .iter()
                    .zip(&over.rows)
                    .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (1.0 - lambda) * u + lambda * v).collect())
                    .collect();
                let mixed = self.to_channel(&mixed_rows)?;
                let mixed_leakage = mutual_information(self.p_x, &mixed)?;
                let mixed_draw = expected_battery_draw(self.p_x, &mixed)?;
                if mixed_leakage < leakage && mixed_draw <= budget + 1e-12 {
                    channel = mixed;
                    leakage = mixed_leakage;
                    converged &= over.converged;
                }
            }
        }

        let achieved_avg_draw = expected_battery_draw(self.p_x, &channel)?;
        Ok(PpfResult {
            leakage_bits: leakage,
            channel,
            achieved_avg_draw,
            iterations: self.iterations,
            converged,
        })
    }
}
