//! Independent reference computations shared by the integration suites.
#![allow(dead_code)]

/// `I(X;Y)` in bits from a joint table, computed from its marginals.
pub fn mi_from_joint(joint: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..joint[0].len())
        .map(|j| joint.iter().map(|r| r[j]).sum())
        .collect();
    let mut acc = 0.0;
    for (i, r) in joint.iter().enumerate() {
        for (j, &p) in r.iter().enumerate() {
            if p > 0.0 {
                acc += p * (p / (rows[i] * cols[j])).log2();
            }
        }
    }
    acc
}

pub fn h2(p: f64) -> f64 {
    let f = |v: f64| if v > 0.0 { -v * v.log2() } else { 0.0 };
    f(p) + f(1.0 - p)
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.log2()).sum()
}

/// Minimum leakage with unlimited storage, binary case, written out from
/// the `p log p` terms.
pub fn unlimited_binary(p_e: f64, q_x: f64) -> f64 {
    if p_e >= q_x {
        return 0.0;
    }
    let xlx = |v: f64| if v > 0.0 { v * v.log2() } else { 0.0 };
    xlx(p_e) - xlx(q_x) - xlx(1.0 - q_x + p_e)
}

/// Zero-battery binary leakage when the available unit is used with
/// probability `v`, from the explicit joint of `(X, Y)`.
pub fn zero_binary_joint_mi(q_x: f64, p_e: f64, v: f64) -> f64 {
    let masked = q_x * p_e * v;
    mi_from_joint(&[vec![1.0 - q_x, 0.0], vec![masked, q_x - masked]])
}

/// Grid minimum of [`zero_binary_joint_mi`] over `v`.
pub fn zero_binary_grid(q_x: f64, p_e: f64, step: f64) -> f64 {
    let count = (1.0 / step).round() as usize;
    (0..=count)
        .map(|i| zero_binary_joint_mi(q_x, p_e, i as f64 / count as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Single-letter leakage of a three-symbol demand with unit peak draw and
/// channel parameters `a = P(Y=0|X=1)`, `b = P(Y=1|X=2)`.
pub fn three_symbol_mi(p: &[f64; 3], a: f64, b: f64) -> f64 {
    mi_from_joint(&[
        vec![p[0], 0.0, 0.0],
        vec![p[1] * a, p[1] * (1.0 - a), 0.0],
        vec![0.0, p[2] * b, p[2] * (1.0 - b)],
    ])
}

/// Brute-force privacy-power value for the three-symbol, unit-peak problem:
/// a coarse two-dimensional sweep of the feasible region plus a fine sweep of
/// the tight plane `p1 a + p2 b = P_bar`.
pub fn three_symbol_ppf(p: &[f64; 3], p_bar: f64) -> f64 {
    let mut best = f64::INFINITY;
    let coarse = 200;
    for i in 0..=coarse {
        for j in 0..=coarse {
            let (a, b) = (i as f64 / coarse as f64, j as f64 / coarse as f64);
            if p[1] * a + p[2] * b <= p_bar + 1e-15 {
                best = best.min(three_symbol_mi(p, a, b));
            }
        }
    }
    let fine = 20_000;
    for i in 0..=fine {
        let a = i as f64 / fine as f64;
        let rest = p_bar - p[1] * a;
        if rest < 0.0 {
            break;
        }
        let b = (rest / p[2]).min(1.0);
        best = best.min(three_symbol_mi(p, a, b));
    }
    best
}

/// Simpson rule with `m` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Bin masses of an exponential with the given mean truncated to
/// `[0, width * bins)`, bins of width `width`.
pub fn discretized_exponential(mean: f64, width: f64, bins: usize) -> Vec<f64> {
    let cdf = |x: f64| -(-x / mean).exp_m1();
    let total = cdf(width * bins as f64);
    (0..bins)
        .map(|k| (cdf(width * (k + 1) as f64) - cdf(width * k as f64)) / total)
        .collect()
}

/// Zero-battery binary leakage `h(1 - q + q p_e p_v) - q h(p_e p_v)`.
pub fn zero_binary_closed(q_x: f64, p_e: f64, p_v: f64) -> f64 {
    h2(1.0 - q_x + q_x * p_e * p_v) - q_x * h2(p_e * p_v)
}
