//! No storage: generation `E_t` acts as a random per-slot peak on the draw.
//!
//! When only the energy management unit sees `E`, the meter reader faces the
//! mixture channel `p(y|x) = sum_e p_E(e) p(y|x,e)` and the optimal leakage is
//! the least `I(X;Y)` over state channels supported on
//! `x - min(e, cap) <= y <= x`. When the meter reader also sees `E`, the answer
//! is `E_E[I(E, E)]` from [`crate::privacy_power`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmf::{mutual_information, ConditionalPmf, Pmf};
use crate::privacy_power::ppf_zero_known_capped;

/// `p(y|x,e)`: one channel per generation level `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateChannel {
    kernels: Vec<ConditionalPmf>,
}

impl StateChannel {
    pub fn new(kernels: Vec<ConditionalPmf>) -> Result<Self> {
        let size = kernels
            .first()
            .ok_or_else(|| Error::InvalidArgument("state channel needs at least one state".into()))?
            .size();
        if let Some(k) = kernels.iter().find(|k| k.size() != size) {
            return Err(Error::DimensionMismatch {
                expected: size,
                got: k.size(),
            });
        }
        Ok(Self { kernels })
    }

    pub fn kernel(&self, e: usize) -> &ConditionalPmf {
        &self.kernels[e]
    }

    pub fn kernels(&self) -> &[ConditionalPmf] {
        &self.kernels
    }

    /// True when every `(x, e)` row lies in `x - min(e, cap) ..= x`.
    pub fn is_feasible(&self, cap: Option<u64>) -> bool {
        self.kernels.iter().enumerate().all(|(e, k)| {
            let limit = draw_limit(e, cap);
            k.rows().iter().enumerate().all(|(x, row)| {
                row.probs()
                    .iter()
                    .enumerate()
                    .all(|(y, &w)| w == 0.0 || (y <= x && x - y <= limit))
            })
        })
    }

    /// Channel seen by a meter reader who does not observe `E`.
    pub fn induced(&self, p_e: &Pmf) -> Result<ConditionalPmf> {
        if p_e.len() != self.kernels.len() {
            return Err(Error::DimensionMismatch {
                expected: self.kernels.len(),
                got: p_e.len(),
            });
        }
        let n = self.kernels[0].size();
        let rows = (0..n)
            .map(|x| {
                let mut row = vec![0.0; n];
                for (k, pe) in self.kernels.iter().zip(p_e.probs()) {
                    for (acc, w) in row.iter_mut().zip(k.row(x).probs()) {
                        *acc += pe * w;
                    }
                }
                Pmf::from_weights(&row)
            })
            .collect::<Result<Vec<_>>>()?;
        ConditionalPmf::from_rows(rows)
    }
}

fn draw_limit(e: usize, cap: Option<u64>) -> usize {
    match cap {
        Some(c) => e.min(usize::try_from(c).unwrap_or(usize::MAX)),
        None => e,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroOptions {
    /// Stop once the leakage changes by less than this between iterations.
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    /// Step size is `step_scale / sqrt(iteration)`.
    pub step_scale: f64,
    pub seed: u64,
    /// Optional peak `P_hat`; the per-slot limit becomes `min(E_t, P_hat)`.
    pub cap: Option<u64>,
}

impl Default for ZeroOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20_000,
            restarts: 5,
            step_scale: 0.5,
            seed: 0,
            cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSolution {
    pub leakage_bits: f64,
    pub channel: StateChannel,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimum leakage without storage when the meter reader does not see `E`.
pub fn solve_zero_unknown(p_x: &Pmf, p_e: &Pmf, tol: f64) -> Result<ZeroSolution> {
    solve_zero_unknown_with(
        p_x,
        p_e,
        &ZeroOptions {
            tol,
            ..ZeroOptions::default()
        },
    )
}

pub fn solve_zero_unknown_with(p_x: &Pmf, p_e: &Pmf, opts: &ZeroOptions) -> Result<ZeroSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", opts.tol)));
    }
    let problem = Problem::new(p_x, p_e, opts.cap);
    let restarts = opts.restarts.max(1);
    let runs = (0..restarts)
        .into_par_iter()
        .map(|i| problem.descend(i, opts))
        .collect::<Vec<_>>();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.leakage.total_cmp(&b.leakage))
        .expect("at least one restart");
    let channel = problem.to_state_channel(&best.blocks)?;
    let leakage_bits = mutual_information(p_x, &channel.induced(p_e)?)?;
    Ok(ZeroSolution {
        leakage_bits,
        channel,
        iterations: best.iterations,
        converged: best.converged,
    })
}

/// Minimum leakage without storage when the meter reader also sees `E`.
pub fn solve_zero_known(p_x: &Pmf, p_e: &Pmf) -> Result<f64> {
    ppf_zero_known_capped(p_x, p_e, None)
}

pub fn solve_zero_known_capped(p_x: &Pmf, p_e: &Pmf, cap: Option<u64>) -> Result<f64> {
    ppf_zero_known_capped(p_x, p_e, cap)
}

struct Problem<'a> {
    p_x: &'a Pmf,
    p_e: &'a Pmf,
    n: usize,
    /// `lo[e][x]`: smallest allowed output.
    lo: Vec<Vec<usize>>,
}

struct Run {
    /// `blocks[e][x][j]` is `p(lo + j | x, e)`.
    blocks: Vec<Vec<Vec<f64>>>,
    leakage: f64,
    iterations: usize,
    converged: bool,
}

impl<'a> Problem<'a> {
    fn new(p_x: &'a Pmf, p_e: &'a Pmf, cap: Option<u64>) -> Self {
        let n = p_x.len();
        let lo = (0..p_e.len())
            .map(|e| {
                let limit = draw_limit(e, cap);
                (0..n).map(|x| x.saturating_sub(limit)).collect()
            })
            .collect();
        Self { p_x, p_e, n, lo }
    }

    fn init(&self, restart: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
        self.lo
            .iter()
            .map(|lo_e| {
                lo_e.iter()
                    .enumerate()
                    .map(|(x, &lo)| {
                        let width = x - lo + 1;
                        let mut block: Vec<f64> = if restart == 0 {
                            vec![1.0; width]
                        } else {
                            (0..width).map(|_| rng.gen_range(0.05..1.0)).collect()
                        };
                        let total: f64 = block.iter().sum();
                        block.iter_mut().for_each(|v| *v /= total);
                        block
                    })
                    .collect()
            })
            .collect()
    }

    fn induced(&self, blocks: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
        let mut w = vec![vec![0.0; self.n]; self.n];
        for (e, (block_e, &pe)) in blocks.iter().zip(self.p_e.probs()).enumerate() {
            if pe == 0.0 {
                continue;
            }
            for (x, block) in block_e.iter().enumerate() {
                let lo = self.lo[e][x];
                for (j, &v) in block.iter().enumerate() {
                    w[x][lo + j] += pe * v;
                }
            }
        }
        w
    }

    /// Leakage of the induced channel and the per-entry gradient
    /// `log2(W(y|x) / r(y))`, which is `dI/dW(y|x)` up to the weight `p(x)`.
    fn objective(&self, w: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let px = self.p_x.probs();
        let mut r = vec![0.0; self.n];
        for (p, row) in px.iter().zip(w) {
            for (ry, v) in r.iter_mut().zip(row) {
                *ry += p * v;
            }
        }
        let mut leakage = 0.0;
        let grad = w
            .iter()
            .zip(px)
            .map(|(row, &p)| {
                row.iter()
                    .zip(&r)
                    .map(|(&v, &ry)| {
                        if v > 0.0 {
                            let g = (v / ry).log2();
                            leakage += p * v * g;
                            g
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        (leakage.max(0.0), grad)
    }

    fn descend(&self, restart: usize, opts: &ZeroOptions) -> Run {
        let mut blocks = self.init(restart, opts.seed);
        let px = self.p_x.probs();
        let (mut leakage, mut grad) = self.objective(&self.induced(&blocks));
        let mut best = (leakage, blocks.clone());
        let mut converged = false;
        let mut iterations = 0;
        for k in 1..=opts.max_iter {
            iterations = k;
            let step = opts.step_scale / (k as f64).sqrt();
            // Each (x, e) block is a simplex; the common p(x) p_E(e) factor
            // of its gradient is divided out.
            for (e, block_e) in blocks.iter_mut().enumerate() {
                if self.p_e.get(e) == 0.0 {
                    continue;
                }
                for (x, block) in block_e.iter_mut().enumerate() {
                    if px[x] == 0.0 || block.len() == 1 {
                        continue;
                    }
                    let lo = self.lo[e][x];
                    let g = &grad[x][lo..lo + block.len()];
                    let shift = g.iter().copied().fold(f64::INFINITY, f64::min);
                    let mut total = 0.0;
                    for (v, gy) in block.iter_mut().zip(g) {
                        if *v > 0.0 {
                            *v *= (-step * (gy - shift)).exp2();
                            total += *v;
                        }
                    }
                    block.iter_mut().for_each(|v| *v /= total);
                }
            }
            let (next, next_grad) = self.objective(&self.induced(&blocks));
            let change = (next - leakage).abs();
            leakage = next;
            grad = next_grad;
            if leakage < best.0 {
                best = (leakage, blocks.clone());
            }
            if change < opts.tol && k > 10 {
                converged = true;
                break;
            }
        }
        Run {
            blocks: best.1,
            leakage: best.0,
            iterations,
            converged,
        }
    }

    fn to_state_channel(&self, blocks: &[Vec<Vec<f64>>]) -> Result<StateChannel> {
        let kernels = blocks
            .iter()
            .enumerate()
            .map(|(e, block_e)| {
                let rows = block_e
                    .iter()
                    .enumerate()
                    .map(|(x, block)| {
                        let lo = self.lo[e][x];
                        let mut dense = vec![0.0; self.n];
                        dense[lo..=x].copy_from_slice(block);
                        Pmf::from_weights(&dense)
                    })
                    .collect::<Result<Vec<_>>>()?;
                ConditionalPmf::from_rows(rows)
            })
            .collect::<Result<Vec<_>>>()?;
        StateChannel::new(kernels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary::{leak_zero_known, leak_zero_unknown};
    use crate::pmf::entropy;
    use crate::privacy_power::ppf;

    #[test]
    fn no_generation_leaks_entropy() {
        let px = Pmf::new(vec![0.2, 0.3, 0.5]).unwrap();
        let pe = Pmf::point_mass(0, 3).unwrap();
        let sol = solve_zero_unknown(&px, &pe, 1e-12).unwrap();
        assert!((sol.leakage_bits - entropy(&px)).abs() < 1e-12);
        assert!(sol.channel.is_feasible(None));
        assert!((solve_zero_known(&px, &pe).unwrap() - entropy(&px)).abs() < 1e-12);
    }

    #[test]
    fn binary_half_generation() {
        let px = Pmf::uniform(2).unwrap();
        let pe = Pmf::uniform(2).unwrap();
        let sol = solve_zero_unknown(&px, &pe, 1e-12).unwrap();
        let want = leak_zero_unknown(0.5, 1.0, 0.5).unwrap();
        assert!((sol.leakage_bits - want).abs() < 1e-4, "{} vs {want}", sol.leakage_bits);
        assert!((sol.leakage_bits - 0.311278).abs() < 1e-4);
        // masking whenever possible
        assert!(sol.channel.kernel(1).prob(1, 0) > 0.99);

        let known = solve_zero_known(&px, &pe).unwrap();
        assert!((known - leak_zero_known(0.5, 0.5).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn full_generation_masks_everything() {
        let px = Pmf::new(vec![0.3, 0.4, 0.3]).unwrap();
        let pe = Pmf::point_mass(2, 3).unwrap();
        let sol = solve_zero_unknown(&px, &pe, 1e-12).unwrap();
        assert!(sol.leakage_bits < 1e-4, "{}", sol.leakage_bits);
    }

    #[test]
    fn split_generation_known_is_half_entropy() {
        let px = Pmf::new(vec![0.3, 0.4, 0.3]).unwrap();
        let pe = Pmf::new(vec![0.5, 0.0, 0.5]).unwrap();
        let known = solve_zero_known(&px, &pe).unwrap();
        assert!((known - 0.5 * entropy(&px)).abs() < 1e-8);
    }

    #[test]
    fn unknown_between_relaxation_and_known() {
        let cases = [
            (vec![0.2, 0.5, 0.3], vec![0.4, 0.4, 0.2]),
            (vec![0.25, 0.25, 0.25, 0.25], vec![0.5, 0.3, 0.2]),
            (vec![0.6, 0.4], vec![0.3, 0.7]),
        ];
        for (px, pe) in cases {
            let px = Pmf::new(px).unwrap();
            let pe = Pmf::new(pe).unwrap();
            let sol = solve_zero_unknown(&px, &pe, 1e-12).unwrap();
            assert!(sol.channel.is_feasible(None));
            let known = solve_zero_known(&px, &pe).unwrap();
            let relaxed = ppf(&px, pe.mean(), pe.max_point() as u64, 1e-9).unwrap().leakage_bits;
            assert!(sol.leakage_bits <= known + 1e-6, "{} > {known}", sol.leakage_bits);
            assert!(sol.leakage_bits + 1e-6 >= relaxed, "{} < {relaxed}", sol.leakage_bits);
        }
    }

    #[test]
    fn cap_restricts_support() {
        let px = Pmf::uniform(3).unwrap();
        let pe = Pmf::new(vec![0.2, 0.3, 0.5]).unwrap();
        let opts = ZeroOptions {
            cap: Some(1),
            ..ZeroOptions::default()
        };
        let capped = solve_zero_unknown_with(&px, &pe, &opts).unwrap();
        assert!(capped.channel.is_feasible(Some(1)));
        let free = solve_zero_unknown(&px, &pe, 1e-12).unwrap();
        assert!(capped.leakage_bits + 1e-6 >= free.leakage_bits);
    }

    #[test]
    fn induced_channel_is_pe_weighted() {
        let stay = ConditionalPmf::identity(2).unwrap();
        let mask = ConditionalPmf::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let sc = StateChannel::new(vec![stay, mask]).unwrap();
        let w = sc.induced(&Pmf::new(vec![0.75, 0.25]).unwrap()).unwrap();
        assert!((w.prob(1, 0) - 0.25).abs() < 1e-15);
        assert!(sc.is_feasible(None));
        assert!(!sc.is_feasible(Some(0)));
    }
}
