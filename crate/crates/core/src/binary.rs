//! Closed-form leakage rates for binary demand, generation and meter reading,
//! with `Pr{X=1} = q_x` and `Pr{E=1} = p_e`.

use crate::error::Result;
use crate::pmf::{binary_entropy, clamp_unit, neg_p_log2_p};

/// Minimum leakage with unlimited storage and unit peak draw.
///
/// Zero once generation covers demand on average (`p_e > q_x`).
pub fn leak_inf_battery(p_e: f64, q_x: f64) -> Result<f64> {
    let p_e = clamp_unit("p_e", p_e)?;
    let q_x = clamp_unit("q_x", q_x)?;
    if p_e <= q_x {
        let rest = 1.0 - q_x + p_e;
        // p log p - q log q - r log r, written with the 0 log 0 = 0 convention
        let value = -neg_p_log2_p(p_e) + neg_p_log2_p(q_x) + neg_p_log2_p(rest);
        Ok(value.max(0.0))
    } else {
        Ok(0.0)
    }
}

/// Leakage without storage when the meter reader does not see generation and
/// available energy is used with probability `p_v`.
pub fn leak_zero_unknown(p_e: f64, p_v: f64, q_x: f64) -> Result<f64> {
    let p_e = clamp_unit("p_e", p_e)?;
    let p_v = clamp_unit("p_v", p_v)?;
    let q_x = clamp_unit("q_x", q_x)?;
    let mask = p_e * p_v;
    Ok(binary_entropy(1.0 - q_x + q_x * mask)? - q_x * binary_entropy(mask)?)
}

/// The masking probability minimizing [`leak_zero_unknown`] for every
/// `(p_e, q_x)`.
pub fn optimal_pv() -> f64 {
    1.0
}

/// Leakage without storage when the meter reader also sees generation.
pub fn leak_zero_known(p_e: f64, q_x: f64) -> Result<f64> {
    let p_e = clamp_unit("p_e", p_e)?;
    let q_x = clamp_unit("q_x", q_x)?;
    Ok((1.0 - p_e) * binary_entropy(q_x)?)
}
