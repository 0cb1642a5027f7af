//! Probability mass functions on integer energy alphabets `{0, 1, .., K}` and
//! the entropy / mutual-information primitives built on them.
//!
//! Every energy quantity is an integer number of quanta, so a pmf is simply a
//! dense vector indexed by the alphabet point. Logs are base 2 throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization tolerance for pmfs supplied by callers.
pub const PMF_TOL: f64 = 1e-12;

/// `-p log2 p` with the continuity convention `0 log 0 = 0`.
#[inline]
pub(crate) fn neg_p_log2_p(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    /// Validates `probs`; inputs off by more than [`PMF_TOL`] are rejected, not
    /// renormalized.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPmf("empty alphabet".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidPmf(format!("entry {i} is {p}")));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::InvalidPmf(format!("entries sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Builds a pmf from non-negative weights by explicit normalization.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPmf("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidPmf("weights sum to zero".into()));
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn point_mass(at: usize, size: usize) -> Result<Self> {
        if at >= size {
            return Err(Error::InvalidPmf(format!(
                "point {at} outside alphabet of size {size}"
            )));
        }
        let mut probs = vec![0.0; size];
        probs[at] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidPmf("empty alphabet".into()));
        }
        Ok(Self {
            probs: vec![1.0 / size as f64; size],
        })
    }

    /// Bernoulli on `{0, 1}` with `Pr{1} = q`.
    pub fn bernoulli(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain { name: "q", value: q });
        }
        Ok(Self {
            probs: vec![1.0 - q, q],
        })
    }

    /// Binomial(`trials`, `p`) on `{0, .., trials}`.
    pub fn binomial(trials: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain { name: "p", value: p });
        }
        let mut probs = Vec::with_capacity(trials + 1);
        let mut coeff = 1.0f64;
        for k in 0..=trials {
            if k > 0 {
                coeff *= (trials - k + 1) as f64 / k as f64;
            }
            probs.push(coeff * p.powi(k as i32) * (1.0 - p).powi((trials - k) as i32));
        }
        Self::from_weights(&probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Largest alphabet point.
    pub fn max_point(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Mixture `lambda * self + (1 - lambda) * other` on a common alphabet.
    pub fn mix(&self, other: &Pmf, lambda: f64) -> Result<Pmf> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain {
                name: "lambda",
                value: lambda,
            });
        }
        Ok(Pmf {
            probs: self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect(),
        })
    }

    /// Inverse-cdf sample from a uniform draw in `[0, 1)`.
    pub fn sample(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        // u landed in the rounding gap above the cumulative sum
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Pmf::new(probs)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.probs
    }
}

/// `p(y|x)` with one row per input point; the output alphabet equals the input
/// alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ConditionalPmf {
    rows: Vec<Pmf>,
}

impl ConditionalPmf {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        let rows = rows
            .into_iter()
            .map(|r| {
                if r.len() != size {
                    return Err(Error::DimensionMismatch {
                        expected: size,
                        got: r.len(),
                    });
                }
                Pmf::new(r)
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Err(Error::InvalidPmf("empty channel".into()));
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: Vec<Pmf>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::InvalidPmf("empty channel".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != size) {
            return Err(Error::DimensionMismatch {
                expected: size,
                got: bad.len(),
            });
        }
        Ok(Self { rows })
    }

    /// `Y = X` with probability one.
    pub fn identity(size: usize) -> Result<Self> {
        let rows = (0..size)
            .map(|x| Pmf::point_mass(x, size))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, x: usize) -> &Pmf {
        &self.rows[x]
    }

    pub fn rows(&self) -> &[Pmf] {
        &self.rows
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[x].get(y)
    }

    /// Output marginal `r(y) = sum_x p(x) p(y|x)`.
    pub fn output_marginal(&self, p_x: &Pmf) -> Result<Vec<f64>> {
        self.check_input(p_x)?;
        let mut r = vec![0.0; self.size()];
        for (px, row) in p_x.probs().iter().zip(&self.rows) {
            for (ry, w) in r.iter_mut().zip(row.probs()) {
                *ry += px * w;
            }
        }
        Ok(r)
    }

    /// Largest battery draw `x - y` over entries with positive mass, or `None`
    /// if some entry has `y > x`.
    pub fn max_draw(&self) -> Option<usize> {
        let mut max = 0;
        for (x, row) in self.rows.iter().enumerate() {
            for (y, &w) in row.probs().iter().enumerate() {
                if w > 0.0 {
                    if y > x {
                        return None;
                    }
                    max = max.max(x - y);
                }
            }
        }
        Some(max)
    }

    fn check_input(&self, p_x: &Pmf) -> Result<()> {
        if p_x.len() != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                got: p_x.len(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for ConditionalPmf {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        ConditionalPmf::new(rows)
    }
}

impl From<ConditionalPmf> for Vec<Vec<f64>> {
    fn from(c: ConditionalPmf) -> Self {
        c.rows.into_iter().map(Vec::from).collect()
    }
}

/// Shannon entropy in bits.
pub fn entropy(p: &Pmf) -> f64 {
    p.probs().iter().map(|&q| neg_p_log2_p(q)).sum()
}

/// Binary entropy `h(p)` in bits. Arguments within 1e-12 of `[0, 1]` are
/// clamped; anything further out is a domain error.
pub fn binary_entropy(p: f64) -> Result<f64> {
    let p = clamp_unit("p", p)?;
    Ok(neg_p_log2_p(p) + neg_p_log2_p(1.0 - p))
}

pub(crate) fn clamp_unit(name: &'static str, v: f64) -> Result<f64> {
    if !v.is_finite() || v < -PMF_TOL || v > 1.0 + PMF_TOL {
        return Err(Error::Domain { name, value: v });
    }
    Ok(v.clamp(0.0, 1.0))
}

/// `I(X;Y)` in bits for input `p_x` through `channel`.
pub fn mutual_information(p_x: &Pmf, channel: &ConditionalPmf) -> Result<f64> {
    let r = channel.output_marginal(p_x)?;
    let mut info = 0.0;
    for (px, row) in p_x.probs().iter().zip(channel.rows()) {
        if *px == 0.0 {
            continue;
        }
        for (w, ry) in row.probs().iter().zip(&r) {
            if *w > 0.0 {
                info += px * w * (w / ry).log2();
            }
        }
    }
    Ok(info.max(0.0))
}

/// `E[X - Y]` in quanta. Fails if any `y > x` carries positive joint mass.
pub fn expected_battery_draw(p_x: &Pmf, channel: &ConditionalPmf) -> Result<f64> {
    channel.check_input(p_x)?;
    let mut draw = 0.0;
    for (x, (px, row)) in p_x.probs().iter().zip(channel.rows()).enumerate() {
        for (y, w) in row.probs().iter().enumerate() {
            let mass = px * w;
            if mass > 0.0 {
                if y > x {
                    return Err(Error::SupportViolation { x, y, mass });
                }
                draw += mass * (x - y) as f64;
            }
        }
    }
    Ok(draw)
}
