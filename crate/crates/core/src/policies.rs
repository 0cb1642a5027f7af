//! Executable energy management policies and the battery state machine.
//!
//! Every policy decides the meter reading `y` from the current demand `x`,
//! generation `e` and state of charge `b`, subject to
//! `max(0, x - min(b + e, P_hat)) <= y <= x`, after which the battery moves to
//! `min(b + e - (x - y), B_max)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Capacity, GridModel};
use crate::pmf::{ConditionalPmf, Pmf};
use crate::privacy_power::{ppf_with, PpfOptions};

/// Accumulators beyond this many quanta are treated as overflow.
pub const SOC_LIMIT: u64 = 1 << 62;

/// Feasible meter readings `[y_lo, y_hi]`; never empty since `y = x` is
/// always allowed.
pub fn feasible_range(x: usize, e: usize, b: u64, p_hat: u64) -> (usize, usize) {
    let available = b.saturating_add(e as u64).min(p_hat);
    let lo = (x as u64).saturating_sub(available) as usize;
    (lo, x)
}

/// Next state of charge, `min(b + e - (x - y), B_max)`.
pub fn battery_update(b: u64, e: usize, x: usize, y: usize, capacity: Capacity) -> Result<u64> {
    let draw = x as i64 - y as i64;
    let stock = b.checked_add(e as u64).ok_or(Error::Overflow)?;
    if draw < 0 || draw as u64 > stock {
        return Err(Error::Infeasible {
            draw,
            available: stock,
            peak: u64::MAX,
        });
    }
    let next = capacity.cap(stock - draw as u64);
    if next > SOC_LIMIT {
        return Err(Error::Overflow);
    }
    Ok(next)
}

/// Default storage phase `s(n) = ceil(sqrt(n))` for store-and-hide.
pub fn default_storage_len(n: u64) -> u64 {
    let mut s = (n as f64).sqrt().ceil() as u64;
    while s > 0 && (s - 1) * (s - 1) >= n {
        s -= 1;
    }
    while s * s < n {
        s += 1;
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Follow `p*(y|x)`; fall back to `y = x` when the draw is not available.
    BestEffort { channel: ConditionalPmf },
    /// `y = x` for the first `storage_len` slots, then best effort.
    StoreAndHide {
        storage_len: u64,
        channel: ConditionalPmf,
    },
    /// Use the available energy with probability `p_v` whenever there is
    /// demand.
    BatteryIndependent { p_v: f64 },
    /// As [`Policy::BatteryIndependent`] with `p_v` chosen by the current
    /// state of charge.
    BatteryConditioned { p_v: Vec<f64> },
    /// Use all, half or none of the available energy. Entries `p[i]` and
    /// `p[i + 3]` are the full and half probabilities when `b + e` is below,
    /// equal to, or above `x` for `i = 0, 1, 2`.
    ThreeLevel { p: [f64; 6] },
}

/// Battery bookkeeping for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimState {
    pub b: u64,
    pub t: u64,
}

impl Policy {
    /// Best effort around the optimal single-letter channel for `P_bar = E[E]`.
    pub fn best_effort(model: &GridModel, opts: &PpfOptions) -> Result<Self> {
        let r = ppf_with(&model.p_x, model.mean_renewable(), model.p_hat, opts)?;
        Ok(Policy::BestEffort { channel: r.channel })
    }

    /// Store-and-hide for horizon `n` with the default storage length.
    pub fn store_and_hide(model: &GridModel, n: u64, opts: &PpfOptions) -> Result<Self> {
        let r = ppf_with(&model.p_x, model.mean_renewable(), model.p_hat, opts)?;
        Ok(Policy::StoreAndHide {
            storage_len: default_storage_len(n),
            channel: r.channel,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::BestEffort { .. } => "best_effort",
            Policy::StoreAndHide { .. } => "store_and_hide",
            Policy::BatteryIndependent { .. } => "battery_independent",
            Policy::BatteryConditioned { .. } => "battery_conditioned",
            Policy::ThreeLevel { .. } => "three_level",
        }
    }

    pub fn validate(&self, model: &GridModel) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidPolicy(format!("{name} = {v} outside [0, 1]")))
            }
        };
        match self {
            Policy::BestEffort { channel } | Policy::StoreAndHide { channel, .. } => {
                if channel.size() != model.x_size() {
                    return Err(Error::DimensionMismatch {
                        expected: model.x_size(),
                        got: channel.size(),
                    });
                }
                if channel.max_draw().is_none() {
                    return Err(Error::InvalidPolicy("channel puts mass on y > x".into()));
                }
            }
            Policy::BatteryIndependent { p_v } => unit("p_v", *p_v)?,
            Policy::BatteryConditioned { p_v } => {
                let cap = model.capacity.finite().ok_or_else(|| {
                    Error::InvalidPolicy("battery-conditioned policy needs finite capacity".into())
                })?;
                if p_v.len() as u64 != cap + 1 {
                    return Err(Error::InvalidPolicy(format!(
                        "expected {} per-SOC probabilities, got {}",
                        cap + 1,
                        p_v.len()
                    )));
                }
                for v in p_v {
                    unit("p_v", *v)?;
                }
            }
            Policy::ThreeLevel { p } => {
                for (i, v) in p.iter().enumerate() {
                    unit(&format!("p{}", i + 1), *v)?;
                }
                for i in 0..3 {
                    if p[i] + p[i + 3] > 1.0 + 1e-12 {
                        return Err(Error::InvalidPolicy(format!(
                            "p{} + p{} = {} exceeds 1",
                            i + 1,
                            i + 4,
                            p[i] + p[i + 3]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Distribution of the meter reading given `(x, e, b)` at slot `t`,
    /// before any randomness is drawn. Entries with zero probability are kept
    /// out.
    pub fn outcomes(&self, x: usize, e: usize, b: u64, t: u64, p_hat: u64) -> Vec<(usize, f64)> {
        let available = b.saturating_add(e as u64);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(3);
        let mut push = |y: usize, w: f64| {
            if w <= 0.0 {
                return;
            }
            match out.iter_mut().find(|(v, _)| *v == y) {
                Some(slot) => slot.1 += w,
                None => out.push((y, w)),
            }
        };
        match self {
            Policy::StoreAndHide { storage_len, .. } if t < *storage_len => push(x, 1.0),
            Policy::BestEffort { channel } | Policy::StoreAndHide { channel, .. } => {
                for (y, &w) in channel.row(x).probs().iter().enumerate() {
                    let draw = x.saturating_sub(y) as u64;
                    if y <= x && draw <= available && draw <= p_hat {
                        push(y, w);
                    } else {
                        push(x, w);
                    }
                }
            }
            Policy::BatteryIndependent { p_v } => mask(x, available, p_hat, *p_v, &mut push),
            Policy::BatteryConditioned { p_v } => {
                let pv = p_v[(b as usize).min(p_v.len() - 1)];
                mask(x, available, p_hat, pv, &mut push)
            }
            Policy::ThreeLevel { p } => {
                let (full, half) = three_level_pair(p, x, available);
                let (v_full, v_half) = three_level_draws(x, available, p_hat);
                if v_full == 0 {
                    push(x, 1.0);
                } else if v_half == 0 {
                    push(x - v_full, full);
                    push(x, 1.0 - full);
                } else {
                    push(x - v_full, full);
                    push(x - v_half, half);
                    push(x, 1.0 - full - half);
                }
            }
        }
        out
    }
}

fn mask(x: usize, available: u64, p_hat: u64, p_v: f64, push: &mut impl FnMut(usize, f64)) {
    let v = full_draw(x, available, p_hat);
    if v == 0 {
        push(x, 1.0);
    } else {
        push(x - v, p_v);
        push(x, 1.0 - p_v);
    }
}

fn full_draw(x: usize, available: u64, p_hat: u64) -> usize {
    (x as u64).min(available).min(p_hat) as usize
}

fn three_level_pair(p: &[f64; 6], x: usize, available: u64) -> (f64, f64) {
    let i = match available.cmp(&(x as u64)) {
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Equal => 1,
        std::cmp::Ordering::Greater => 2,
    };
    (p[i], p[i + 3])
}

/// Draws for the "all" and "half" actions; half rounds down and both are
/// capped by demand and peak.
fn three_level_draws(x: usize, available: u64, p_hat: u64) -> (usize, usize) {
    (full_draw(x, available, p_hat), full_draw(x, available / 2, p_hat))
}

/// Advances one slot. `u` is a uniform draw in `[0, 1)` that resolves the
/// policy's randomness.
pub fn policy_step(
    policy: &Policy,
    model: &GridModel,
    x: usize,
    e: usize,
    state: SimState,
    u: f64,
) -> Result<(usize, SimState)> {
    let b = state.b;
    let available = b.checked_add(e as u64).ok_or(Error::Overflow)?;
    let p_hat = model.p_hat;
    let y = match policy {
        Policy::StoreAndHide { storage_len, .. } if state.t < *storage_len => x,
        Policy::BestEffort { channel } | Policy::StoreAndHide { channel, .. } => {
            let target = channel.row(x).sample(u);
            if target > x {
                return Err(Error::InvalidPolicy(format!("channel output {target} > demand {x}")));
            }
            let draw = (x - target) as u64;
            if draw <= available && draw <= p_hat {
                target
            } else {
                x
            }
        }
        Policy::BatteryIndependent { p_v } => {
            if u < *p_v {
                x - full_draw(x, available, p_hat)
            } else {
                x
            }
        }
        Policy::BatteryConditioned { p_v } => {
            let pv = *p_v.get(b as usize).ok_or_else(|| {
                Error::InvalidPolicy(format!("no masking probability for SOC {b}"))
            })?;
            if u < pv {
                x - full_draw(x, available, p_hat)
            } else {
                x
            }
        }
        Policy::ThreeLevel { p } => {
            let (full, half) = three_level_pair(p, x, available);
            let (v_full, v_half) = three_level_draws(x, available, p_hat);
            if u < full {
                x - v_full
            } else if u < full + half {
                x - v_half
            } else {
                x
            }
        }
    };
    let (lo, hi) = feasible_range(x, e, b, p_hat);
    if y < lo || y > hi {
        return Err(Error::Infeasible {
            draw: x as i64 - y as i64,
            available,
            peak: p_hat,
        });
    }
    let next = battery_update(b, e, x, y, model.capacity)?;
    Ok((y, SimState { b: next, t: state.t + 1 }))
}

/// Finite-state description of a stationary policy: the joint kernel
/// `p(x, y, b' | b)` over states of charge `0 ..= B_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    states: usize,
    symbols: usize,
    /// Dense `[b][x][y][b']`.
    kernel: Vec<f64>,
}

impl ChainSpec {
    pub fn states(&self) -> usize {
        self.states
    }

    /// Alphabet size shared by demand and meter reading.
    pub fn symbols(&self) -> usize {
        self.symbols
    }

    fn index(&self, b: usize, x: usize, y: usize, next: usize) -> usize {
        ((b * self.symbols + x) * self.symbols + y) * self.states + next
    }

    pub fn joint(&self, b: usize, x: usize, y: usize, next: usize) -> f64 {
        self.kernel[self.index(b, x, y, next)]
    }

    /// Slice `p(x, y, . | b)` over next states.
    pub fn next_states(&self, b: usize, x: usize, y: usize) -> &[f64] {
        let start = self.index(b, x, y, 0);
        &self.kernel[start..start + self.states]
    }

    /// SOC transition matrix `T[b][b']`.
    pub fn transition(&self) -> Vec<Vec<f64>> {
        (0..self.states)
            .map(|b| {
                let mut row = vec![0.0; self.states];
                for x in 0..self.symbols {
                    for y in 0..self.symbols {
                        for (acc, v) in row.iter_mut().zip(self.next_states(b, x, y)) {
                            *acc += v;
                        }
                    }
                }
                row
            })
            .collect()
    }

    /// True when every state reaches every other and some state has a self
    /// loop, so a unique stationary law exists.
    pub fn is_ergodic(&self) -> bool {
        let t = self.transition();
        let reach = |from: usize, forward: bool| {
            let mut seen = vec![false; self.states];
            let mut stack = vec![from];
            seen[from] = true;
            while let Some(s) = stack.pop() {
                for other in 0..self.states {
                    let w = if forward { t[s][other] } else { t[other][s] };
                    if w > 0.0 && !seen[other] {
                        seen[other] = true;
                        stack.push(other);
                    }
                }
            }
            seen.into_iter().all(|v| v)
        };
        reach(0, true) && reach(0, false) && (0..self.states).any(|s| t[s][s] > 0.0)
    }

    /// Stationary SOC law by power iteration.
    pub fn stationary(&self) -> Vec<f64> {
        let t = self.transition();
        let mut pi = vec![1.0 / self.states as f64; self.states];
        for _ in 0..100_000 {
            let mut next = vec![0.0; self.states];
            for (b, row) in t.iter().enumerate() {
                for (acc, w) in next.iter_mut().zip(row) {
                    *acc += pi[b] * w;
                }
            }
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if diff < 1e-15 {
                break;
            }
        }
        pi
    }
}

/// Builds the SOC chain for a stationary policy on a finite battery.
pub fn build_chain(model: &GridModel, policy: &Policy) -> Result<ChainSpec> {
    let cap = model
        .capacity
        .finite()
        .ok_or_else(|| Error::InvalidArgument("chain needs a finite battery".into()))?;
    if matches!(policy, Policy::StoreAndHide { .. }) {
        return Err(Error::InvalidPolicy("store-and-hide is not stationary".into()));
    }
    policy.validate(model)?;
    let states = cap as usize + 1;
    let symbols = model.x_size();
    let mut chain = ChainSpec {
        states,
        symbols,
        kernel: vec![0.0; states * symbols * symbols * states],
    };
    for b in 0..states {
        for (x, &px) in model.p_x.probs().iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (e, &pe) in model.p_e.probs().iter().enumerate() {
                if pe == 0.0 {
                    continue;
                }
                for (y, w) in policy.outcomes(x, e, b as u64, 0, model.p_hat) {
                    let next = battery_update(b as u64, e, x, y, model.capacity)? as usize;
                    let i = chain.index(b, x, y, next);
                    chain.kernel[i] += px * pe * w;
                }
            }
        }
    }
    Ok(chain)
}

/// Demand and generation marginals of a chain row, for consistency checks.
pub fn chain_input_marginals(chain: &ChainSpec, b: usize) -> Result<Pmf> {
    let mut px = vec![0.0; chain.symbols];
    for (x, acc) in px.iter_mut().enumerate() {
        for y in 0..chain.symbols {
            *acc += chain.next_states(b, x, y).iter().sum::<f64>();
        }
    }
    Pmf::new(px)
}
