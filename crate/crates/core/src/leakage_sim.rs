//! Simulation estimates of the leakage rate of finite-battery policies, an
//! enumeration oracle for short horizons, and the hiding-phase random walk.
//!
//! The pair `(X_t, Y_t)` is a hidden Markov process driven by the state of
//! charge, so `-(1/n) log2 P(y^n)` and `-(1/n) log2 P(y^n | x^n)` are computed
//! with per-step normalized forward recursions over the battery state.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Capacity, GridModel};
use crate::pmf::{entropy, ConditionalPmf, Pmf};
use crate::policies::{battery_update, build_chain, policy_step, ChainSpec, Policy, SimState};

/// Enumeration budget for [`brute_force_rate`], in live `(x^t, y^t, b)` cells.
pub const BRUTE_FORCE_BUDGET: u128 = 1 << 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub hy_rate: f64,
    pub hy_given_x_rate: f64,
}

impl SeedRecord {
    pub fn leakage(&self) -> f64 {
        self.hy_rate - self.hy_given_x_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageEstimate {
    pub bits_per_slot: f64,
    pub std_error: f64,
    pub n: u64,
    pub seeds: u64,
    pub hy_rate: f64,
    pub hy_given_x_rate: f64,
    pub records: Vec<SeedRecord>,
}

impl LeakageEstimate {
    fn from_records(n: u64, records: Vec<SeedRecord>) -> Self {
        let k = records.len() as f64;
        let hy_rate = records.iter().map(|r| r.hy_rate).sum::<f64>() / k;
        let hy_given_x_rate = records.iter().map(|r| r.hy_given_x_rate).sum::<f64>() / k;
        let bits_per_slot = hy_rate - hy_given_x_rate;
        let std_error = if records.len() > 1 {
            let var = records
                .iter()
                .map(|r| (r.leakage() - bits_per_slot).powi(2))
                .sum::<f64>()
                / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        Self {
            bits_per_slot,
            std_error,
            n,
            seeds: records.len() as u64,
            hy_rate,
            hy_given_x_rate,
            records,
        }
    }
}

/// Normalized forward filter over battery states.
#[derive(Debug, Clone)]
pub struct ForwardFilter<'a> {
    chain: &'a ChainSpec,
    /// `p(y, b' | b)` with the demand summed out, dense `[b][y][b']`.
    emission_y: Vec<f64>,
    belief: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> ForwardFilter<'a> {
    /// Starts from an empty battery.
    pub fn new(chain: &'a ChainSpec) -> Self {
        let (s, k) = (chain.states(), chain.symbols());
        let mut emission_y = vec![0.0; s * k * s];
        for b in 0..s {
            for x in 0..k {
                for y in 0..k {
                    let row = &mut emission_y[(b * k + y) * s..(b * k + y + 1) * s];
                    for (acc, v) in row.iter_mut().zip(chain.next_states(b, x, y)) {
                        *acc += v;
                    }
                }
            }
        }
        let mut belief = vec![0.0; s];
        belief[0] = 1.0;
        Self {
            chain,
            emission_y,
            belief,
            scratch: vec![0.0; s],
        }
    }

    pub fn belief(&self) -> &[f64] {
        &self.belief
    }

    /// Absorbs one observation and returns `log2` of its predictive
    /// probability. With `x` given the joint `(x, y)` is scored, otherwise only
    /// `y`.
    pub fn step(&mut self, x: Option<usize>, y: usize, t: u64) -> Result<f64> {
        let s = self.chain.states();
        let k = self.chain.symbols();
        self.scratch.iter_mut().for_each(|v| *v = 0.0);
        for (b, &w) in self.belief.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = match x {
                Some(x) => self.chain.next_states(b, x, y),
                None => &self.emission_y[(b * k + y) * s..(b * k + y + 1) * s],
            };
            for (acc, v) in self.scratch.iter_mut().zip(row) {
                *acc += w * v;
            }
        }
        let total: f64 = self.scratch.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroProbability { step: t as usize });
        }
        for (b, v) in self.belief.iter_mut().zip(&self.scratch) {
            *b = v / total;
        }
        Ok(total.log2())
    }
}

fn simulate_seed(
    model: &GridModel,
    policy: &Policy,
    chain: &ChainSpec,
    n: u64,
    seed: u64,
) -> Result<SeedRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = SimState::default();
    let mut y_filter = ForwardFilter::new(chain);
    let mut xy_filter = ForwardFilter::new(chain);
    let (mut log_y, mut log_xy, mut log_x) = (0.0, 0.0, 0.0);
    for t in 0..n {
        let x = model.p_x.sample(rng.gen());
        let e = model.p_e.sample(rng.gen());
        let (y, next) = policy_step(policy, model, x, e, state, rng.gen())?;
        state = next;
        log_y += y_filter.step(None, y, t)?;
        log_xy += xy_filter.step(Some(x), y, t)?;
        log_x += model.p_x.get(x).log2();
    }
    let n = n as f64;
    Ok(SeedRecord {
        seed,
        hy_rate: -log_y / n,
        hy_given_x_rate: -(log_xy - log_x) / n,
    })
}

/// Leakage rate of a stationary policy on a finite battery, seeds `0..seeds`.
pub fn estimate_leakage(model: &GridModel, policy: &Policy, n: u64, seeds: u64) -> Result<LeakageEstimate> {
    let list: Vec<u64> = (0..seeds).collect();
    estimate_leakage_seeded(model, policy, n, &list)
}

/// As [`estimate_leakage`] with an explicit seed list, so that several
/// policies can share demand and generation streams.
pub fn estimate_leakage_seeded(
    model: &GridModel,
    policy: &Policy,
    n: u64,
    seeds: &[u64],
) -> Result<LeakageEstimate> {
    if n == 0 || seeds.is_empty() {
        return Err(Error::InvalidArgument("need n >= 1 and at least one seed".into()));
    }
    let chain = build_chain(model, policy)?;
    let records = seeds
        .par_iter()
        .map(|&seed| simulate_seed(model, policy, &chain, n, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(LeakageEstimate::from_records(n, records))
}

/// Exact `(1/n) I(X^n; Y^n)` by enumerating every demand and generation
/// sequence and every policy outcome, starting from an empty battery.
pub fn brute_force_rate(model: &GridModel, policy: &Policy, n: u32) -> Result<f64> {
    brute_force_rate_with_budget(model, policy, n, BRUTE_FORCE_BUDGET)
}

pub fn brute_force_rate_with_budget(model: &GridModel, policy: &Policy, n: u32, budget: u128) -> Result<f64> {
    if n == 0 || n > 12 {
        return Err(Error::Precondition(format!("horizon {n} outside 1..=12")));
    }
    policy.validate(model)?;
    let k = model.x_size() as u64;
    // cells keyed by (x code, y code, state of charge)
    let mut cells: HashMap<(u64, u64, u64), f64> = HashMap::new();
    cells.insert((0, 0, 0), 1.0);
    for t in 0..n {
        let mut next: HashMap<(u64, u64, u64), f64> = HashMap::with_capacity(cells.len() * 2);
        for (&(xc, yc, b), &w) in &cells {
            for (x, &px) in model.p_x.probs().iter().enumerate() {
                if px == 0.0 {
                    continue;
                }
                for (e, &pe) in model.p_e.probs().iter().enumerate() {
                    if pe == 0.0 {
                        continue;
                    }
                    for (y, q) in policy.outcomes(x, e, b, t as u64, model.p_hat) {
                        let nb = battery_update(b, e, x, y, model.capacity)?;
                        let key = (xc * k + x as u64, yc * k + y as u64, nb);
                        *next.entry(key).or_insert(0.0) += w * px * pe * q;
                    }
                }
            }
            if next.len() as u128 > budget {
                return Err(Error::BudgetExceeded {
                    needed: next.len() as u128,
                    budget,
                });
            }
        }
        cells = next;
    }
    let mut joint: HashMap<(u64, u64), f64> = HashMap::new();
    let mut y_marg: HashMap<u64, f64> = HashMap::new();
    for (&(xc, yc, _), &w) in &cells {
        *joint.entry((xc, yc)).or_insert(0.0) += w;
        *y_marg.entry(yc).or_insert(0.0) += w;
    }
    let h = |it: &mut dyn Iterator<Item = f64>| -> f64 {
        it.filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum()
    };
    let h_xy = h(&mut joint.values().copied());
    let h_y = h(&mut y_marg.values().copied());
    let h_x = n as f64 * entropy(&model.p_x);
    Ok(((h_x + h_y - h_xy) / n as f64).max(0.0))
}

fn draw_pmf(p_x: &Pmf, channel: &ConditionalPmf) -> Result<Pmf> {
    if channel.size() != p_x.len() {
        return Err(Error::DimensionMismatch {
            expected: p_x.len(),
            got: channel.size(),
        });
    }
    let mut d = vec![0.0; p_x.len()];
    for (x, &px) in p_x.probs().iter().enumerate() {
        for (y, &w) in channel.row(x).probs().iter().enumerate() {
            if w > 0.0 && y > x {
                return Err(Error::SupportViolation { x, y, mass: w });
            }
            if w > 0.0 {
                d[x - y] += px * w;
            }
        }
    }
    Pmf::from_weights(&d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageResult {
    pub fraction: f64,
    pub std_error: f64,
    pub n: u64,
    pub seeds: u64,
}

/// Fraction of slots in which an unlimited battery cannot supply the draw
/// `x - y*` requested by the channel.
pub fn outage_experiment(
    model: &GridModel,
    channel: &ConditionalPmf,
    n: u64,
    seeds: u64,
) -> Result<OutageResult> {
    if model.capacity != Capacity::Infinite {
        return Err(Error::Precondition("outage experiment needs an unlimited battery".into()));
    }
    if n == 0 || seeds == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and at least one seed".into()));
    }
    let mean_draw = draw_pmf(&model.p_x, channel)?.mean();
    let p_bar = model.mean_renewable();
    let is_identity = mean_draw == 0.0;
    if !is_identity && mean_draw >= p_bar {
        return Err(Error::Precondition(format!(
            "mean draw {mean_draw} is not below mean generation {p_bar}"
        )));
    }
    let fractions: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut b: u64 = 0;
            let mut outages = 0u64;
            for _ in 0..n {
                let x = model.p_x.sample(rng.gen());
                let e = model.p_e.sample(rng.gen());
                let target = channel.row(x).sample(rng.gen());
                let draw = (x - target.min(x)) as u64;
                let stock = b + e as u64;
                if stock < draw || draw > model.p_hat {
                    outages += 1;
                    b = stock;
                } else {
                    b = stock - draw;
                }
            }
            outages as f64 / n as f64
        })
        .collect();
    let (fraction, std_error) = mean_and_se(&fractions);
    Ok(OutageResult {
        fraction,
        std_error,
        n,
        seeds,
    })
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Distribution of the per-slot increment `Q = E - (X - Y*)`, returned with
/// the offset of its first atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Increment {
    pub offset: i64,
    pub pmf: Pmf,
}

impl Increment {
    pub fn new(p_x: &Pmf, p_e: &Pmf, channel: &ConditionalPmf) -> Result<Self> {
        let d = draw_pmf(p_x, channel)?;
        let offset = -(d.max_point() as i64);
        let mut q = vec![0.0; d.len() + p_e.len() - 1];
        for (dv, &pd) in d.probs().iter().enumerate() {
            for (e, &pe) in p_e.probs().iter().enumerate() {
                q[(e as i64 - dv as i64 - offset) as usize] += pd * pe;
            }
        }
        Ok(Self {
            offset,
            pmf: Pmf::from_weights(&q)?,
        })
    }

    pub fn mean(&self) -> f64 {
        self.pmf.mean() + self.offset as f64
    }

    /// `ln E[e^{rQ}]`, evaluated with a shifted log-sum-exp.
    pub fn log_mgf(&self, r: f64) -> f64 {
        let terms: Vec<(f64, f64)> = self
            .pmf
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (p, r * (i as i64 + self.offset) as f64))
            .collect();
        let top = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|(p, a)| p * (a - top).exp()).sum::<f64>().ln()
    }

    fn has_negative_mass(&self) -> bool {
        self.pmf
            .probs()
            .iter()
            .enumerate()
            .any(|(i, &p)| p > 0.0 && (i as i64 + self.offset) < 0)
    }

    pub fn sample(&self, u: f64) -> i64 {
        self.pmf.sample(u) as i64 + self.offset
    }

    /// Negative root of the log-MGF; `-inf` when `Q` is never negative.
    pub fn negative_root(&self) -> Result<f64> {
        let mean = self.mean();
        if !(mean > 0.0) {
            return Err(Error::RootFinding(format!("increment mean {mean} is not positive")));
        }
        if !self.has_negative_mass() {
            return Ok(f64::NEG_INFINITY);
        }
        let (mut lo, mut hi) = (-64.0_f64, -1e-12_f64);
        if self.log_mgf(lo) <= 0.0 {
            return Err(Error::RootFinding("no sign change on [-64, 0)".into()));
        }
        if self.log_mgf(hi) >= 0.0 {
            return Err(Error::RootFinding("log-MGF not negative near zero".into()));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.log_mgf(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkResult {
    pub crossing_fraction: f64,
    pub std_error: f64,
    pub wald_bound: f64,
    pub r_star: f64,
    pub alpha: f64,
    pub s_n: u64,
    pub n: u64,
    pub trials: u64,
}

/// Upper bound `exp(-r* alpha)` on ever reaching `alpha = -s_n * E[E]`.
pub fn wald_bound(inc: &Increment, s_n: u64, p_bar: f64) -> Result<(f64, f64)> {
    let r = inc.negative_root()?;
    let alpha = -(s_n as f64) * p_bar;
    if r == f64::NEG_INFINITY {
        return Ok((r, 0.0));
    }
    Ok((r, (-r * alpha).exp()))
}

/// Simulates the hiding-phase walk `S_t = Q_1 + ... + Q_t` for `t <= n` and
/// counts trials in which it reaches `alpha`.
pub fn random_walk_experiment(
    model: &GridModel,
    channel: &ConditionalPmf,
    s_n: u64,
    n: u64,
    trials: u64,
) -> Result<WalkResult> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let inc = Increment::new(&model.p_x, &model.p_e, channel)?;
    if !(inc.mean() > 0.0) {
        return Err(Error::Precondition(format!(
            "walk drift {} is not positive",
            inc.mean()
        )));
    }
    let p_bar = model.mean_renewable();
    let (r_star, bound) = wald_bound(&inc, s_n, p_bar)?;
    let alpha = -(s_n as f64) * p_bar;
    let hits: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let mut s = 0i64;
            for _ in 0..n {
                s += inc.sample(rng.gen());
                if s as f64 <= alpha {
                    return 1.0;
                }
            }
            0.0
        })
        .collect();
    let (crossing_fraction, std_error) = mean_and_se(&hits);
    Ok(WalkResult {
        crossing_fraction,
        std_error,
        wald_bound: bound,
        r_star,
        alpha,
        s_n,
        n,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary::leak_zero_unknown;
    use crate::pmf::binary_entropy;

    fn binary(q: f64, pe: f64, cap: u64) -> GridModel {
        GridModel::binary(q, pe, Capacity::Finite(cap)).unwrap()
    }

    #[test]
    fn zero_battery_matches_closed_form() {
        let model = binary(0.5, 0.5, 0);
        let est = estimate_leakage(&model, &Policy::BatteryIndependent { p_v: 1.0 }, 200_000, 5).unwrap();
        let exact = leak_zero_unknown(0.5, 1.0, 0.5).unwrap();
        assert!((est.bits_per_slot - exact).abs() <= 3.0 * est.std_error + 2e-3, "{est:?}");
        assert!((est.bits_per_slot - (est.hy_rate - est.hy_given_x_rate)).abs() < 1e-12);
    }

    #[test]
    fn trivial_policies_leak_everything() {
        let h = binary_entropy(0.5).unwrap();
        for (pe, pv) in [(0.5, 0.0), (0.0, 1.0)] {
            let est = estimate_leakage(&binary(0.5, pe, 2), &Policy::BatteryIndependent { p_v: pv }, 20_000, 3).unwrap();
            assert!((est.bits_per_slot - h).abs() <= 3.0 * est.std_error + 1e-2, "{est:?}");
        }
    }

    #[test]
    fn filter_beliefs_stay_normalized() {
        let model = binary(0.4, 0.6, 3);
        let policy = Policy::ThreeLevel { p: [0.3, 0.6, 0.8, 0.2, 0.3, 0.1] };
        let chain = build_chain(&model, &policy).unwrap();
        let mut f = ForwardFilter::new(&chain);
        let mut g = ForwardFilter::new(&chain);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = SimState::default();
        for t in 0..5_000 {
            let x = model.p_x.sample(rng.gen());
            let e = model.p_e.sample(rng.gen());
            let (y, next) = policy_step(&policy, &model, x, e, state, rng.gen()).unwrap();
            state = next;
            f.step(None, y, t).unwrap();
            g.step(Some(x), y, t).unwrap();
            assert!((f.belief().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((g.belief().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn impossible_observation_is_an_error() {
        let model = binary(0.5, 0.5, 1);
        let chain = build_chain(&model, &Policy::BatteryIndependent { p_v: 1.0 }).unwrap();
        let mut f = ForwardFilter::new(&chain);
        // a reading above demand never happens
        assert!(matches!(f.step(Some(0), 1, 0), Err(Error::ZeroProbability { step: 0 })));
    }

    #[test]
    fn brute_force_single_slot() {
        let model = binary(0.5, 0.5, 0);
        let v = brute_force_rate(&model, &Policy::BatteryIndependent { p_v: 1.0 }, 1).unwrap();
        assert!((v - leak_zero_unknown(0.5, 1.0, 0.5).unwrap()).abs() < 1e-12);
        let v = brute_force_rate(&model, &Policy::BatteryIndependent { p_v: 0.0 }, 1).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brute_force_budget_and_horizon() {
        let model = binary(0.5, 0.5, 1);
        let p = Policy::BatteryIndependent { p_v: 0.5 };
        assert!(matches!(brute_force_rate(&model, &p, 13), Err(Error::Precondition(_))));
        assert!(matches!(
            brute_force_rate_with_budget(&model, &p, 6, 100),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn identity_channel_never_outages() {
        let model = GridModel::binary(0.5, 0.25, Capacity::Infinite).unwrap();
        let r = outage_experiment(&model, &ConditionalPmf::identity(2).unwrap(), 1_000, 2).unwrap();
        assert_eq!(r.fraction, 0.0);
    }

    #[test]
    fn outage_precondition() {
        let model = GridModel::binary(0.5, 0.1, Capacity::Infinite).unwrap();
        let ch = ConditionalPmf::new(vec![vec![1.0, 0.0], vec![0.4, 0.6]]).unwrap();
        assert!(matches!(outage_experiment(&model, &ch, 100, 1), Err(Error::Precondition(_))));
        let finite = model.with_capacity(Capacity::Finite(3));
        assert!(outage_experiment(&finite, &ch, 100, 1).is_err());
    }

    #[test]
    fn increment_law_and_root() {
        let model = GridModel::binary(0.5, 0.25, Capacity::Infinite).unwrap();
        let ch = ConditionalPmf::new(vec![vec![1.0, 0.0], vec![0.4, 0.6]]).unwrap();
        let inc = Increment::new(&model.p_x, &model.p_e, &ch).unwrap();
        assert_eq!(inc.offset, -1);
        assert!((inc.mean() - 0.05).abs() < 1e-15);
        let r = inc.negative_root().unwrap();
        assert!(r < 0.0);
        assert!(inc.log_mgf(r).abs() < 1e-12);
        // Q in {-1, 0, 1} with probabilities (0.15, 0.65, 0.2): e^{r*} = 0.75
        assert!((r - 0.75_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn monotone_walk_never_crosses() {
        let model = GridModel::binary(0.5, 1.0, Capacity::Infinite).unwrap();
        let ch = ConditionalPmf::identity(2).unwrap();
        let w = random_walk_experiment(&model, &ch, 10, 100, 50).unwrap();
        assert_eq!(w.crossing_fraction, 0.0);
        assert_eq!(w.wald_bound, 0.0);
    }

    #[test]
    fn doubling_storage_squares_bound() {
        let model = GridModel::binary(0.5, 0.25, Capacity::Infinite).unwrap();
        let ch = ConditionalPmf::new(vec![vec![1.0, 0.0], vec![0.4, 0.6]]).unwrap();
        let inc = Increment::new(&model.p_x, &model.p_e, &ch).unwrap();
        let (_, one) = wald_bound(&inc, 40, 0.25).unwrap();
        let (_, two) = wald_bound(&inc, 80, 0.25).unwrap();
        assert!((two - one * one).abs() < 1e-14);
    }

    #[test]
    fn wrong_drift_rejected() {
        let model = GridModel::binary(0.5, 0.1, Capacity::Infinite).unwrap();
        let ch = ConditionalPmf::new(vec![vec![1.0, 0.0], vec![0.4, 0.6]]).unwrap();
        assert!(random_walk_experiment(&model, &ch, 10, 10, 10).is_err());
    }
}
