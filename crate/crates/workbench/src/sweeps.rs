//! Parameter sweeps producing plot-ready tables. Rows always come out in grid
//! order.

use rayon::prelude::*;
use smartleak_core::binary::{leak_inf_battery, leak_zero_known};
use smartleak_core::policy_opt::{scan_pv, search_three_level, sgd_battery_conditioned, SimBudget};
use smartleak_core::privacy_power::{ppf_with, PpfOptions};
use smartleak_core::zero_battery::solve_zero_unknown;
use smartleak_core::{Capacity, GridModel, Pmf};

use crate::config::Config;
use crate::error::{Result, WorkbenchError};
use crate::table::{list, num, Table};

fn budget(cfg: &Config) -> SimBudget {
    SimBudget::new(cfg.sim.n, cfg.sim.seeds)
}

fn common_meta(t: &mut Table, cfg: &Config, figure: &str) {
    let seeds: Vec<u64> = (0..cfg.sim.seeds).collect();
    t.meta("figure", figure)
        .meta("n", cfg.sim.n)
        .meta("seeds", list(&seeds))
        .meta("tol", cfg.solver.tol)
        .meta("start", "empty battery")
        .meta("random_numbers", "shared seeds across all candidates");
}

fn ppf_opts(cfg: &Config) -> PpfOptions {
    PpfOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        ..PpfOptions::default()
    }
}

/// Best masking probability per generation rate and battery size.
pub fn sweep_figure4(cfg: &Config) -> Result<Table> {
    let s = &cfg.sweep;
    let caps = if s.capacities.is_empty() { vec![1, 2, 5, 10] } else { s.capacities.clone() };
    let grid: Vec<f64> = s.p_e_grid.iter().copied().filter(|&p| p > 0.0).collect();
    let cells: Vec<(f64, u64)> = grid.iter().flat_map(|&p| caps.iter().map(move |&b| (p, b))).collect();
    let budget = budget(cfg);
    let rows = cells
        .par_iter()
        .map(|&(p_e, cap)| {
            let model = GridModel::binary(s.q_x, p_e, Capacity::Finite(cap))?;
            let r = scan_pv(&model, s.pv_step, &budget)?;
            Ok(vec![num(p_e), cap.to_string(), num(r.best_pv), num(r.best.leakage), num(r.best.std_error)])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&["p_e", "b_max", "best_p_v", "leakage", "std_error"]);
    common_meta(&mut t, cfg, "4");
    t.meta("q_x", s.q_x).meta("pv_step", s.pv_step);
    for r in rows {
        t.push(r);
    }
    Ok(t)
}

/// Minimum leakage against generation rate for binary demand.
pub fn sweep_figure5(cfg: &Config) -> Result<Table> {
    let s = &cfg.sweep;
    let caps = if s.capacities.is_empty() { vec![1, 2, 5] } else { s.capacities.clone() };
    let budget = budget(cfg);
    let sgd = cfg.sgd.options();
    let per_rate = s
        .p_e_grid
        .par_iter()
        .map(|&p_e| {
            let mut rows = vec![
                vec![num(p_e), "0_known".into(), num(leak_zero_known(p_e, s.q_x)?), num(0.0)],
                vec![
                    num(p_e),
                    "0_unknown".into(),
                    num(solve_zero_unknown(&Pmf::bernoulli(s.q_x)?, &Pmf::bernoulli(p_e)?, 1e-12)?.leakage_bits),
                    num(0.0),
                ],
            ];
            for &cap in &caps {
                let model = GridModel::binary(s.q_x, p_e, Capacity::Finite(cap))?;
                let scan = scan_pv(&model, s.pv_step, &budget)?;
                let init = vec![scan.best_pv; cap as usize + 1];
                let r = sgd_battery_conditioned(&model, &init, &sgd, &budget)?;
                rows.push(vec![num(p_e), cap.to_string(), num(r.best.leakage), num(r.best.std_error)]);
            }
            rows.push(vec![num(p_e), "inf".into(), num(leak_inf_battery(p_e, s.q_x)?), num(0.0)]);
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&["p_e", "b_max", "leakage", "std_error"]);
    common_meta(&mut t, cfg, "5");
    t.meta("q_x", s.q_x)
        .meta("pv_step", s.pv_step)
        .meta(
            "sgd",
            format!(
                "probes={} radius={} learning_rate={} threshold={} max_iter={}",
                sgd.probes, sgd.radius, sgd.learning_rate, sgd.threshold, sgd.max_iter
            ),
        );
    for r in per_rate.into_iter().flatten() {
        t.push(r);
    }
    Ok(t)
}

/// Five-level demand and generation with the three-level policy.
pub fn sweep_figure6(cfg: &Config) -> Result<Table> {
    let s = &cfg.sweep;
    let caps = if s.capacities.is_empty() { vec![0, 1, 2] } else { s.capacities.clone() };
    let budget = budget(cfg);
    let opts = ppf_opts(cfg);
    let p_x = Pmf::uniform(5)?;
    let per_rate = s
        .p_e_grid
        .par_iter()
        .map(|&p_e| {
            let p_e_pmf = Pmf::binomial(4, p_e)?;
            let mut rows = Vec::new();
            for &cap in &caps {
                let model = GridModel::new(p_x.clone(), p_e_pmf.clone(), Capacity::Finite(cap), 4)?;
                let r = search_three_level(&model, s.three_level_step, &budget)?;
                rows.push(vec![num(p_e), cap.to_string(), num(r.best.leakage), num(r.best.std_error)]);
            }
            let inf = ppf_with(&p_x, p_e_pmf.mean(), 4, &opts)?;
            if !inf.converged {
                return Err(WorkbenchError::NonConvergence(format!("privacy-power solve at p_e = {p_e}")));
            }
            rows.push(vec![num(p_e), "inf".into(), num(inf.leakage_bits), num(0.0)]);
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&["p_e", "b_max", "leakage", "std_error"]);
    common_meta(&mut t, cfg, "6");
    t.meta("p_x", "uniform on 0..4")
        .meta("p_e", "binomial(4, p_e) so the support matches 0..4")
        .meta("p_hat", 4)
        .meta("three_level_step", s.three_level_step);
    for r in per_rate.into_iter().flatten() {
        t.push(r);
    }
    Ok(t)
}
