use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use smartleak_core::binary::{leak_inf_battery, leak_zero_known, leak_zero_unknown};
use smartleak_core::leakage_sim::estimate_leakage;
use smartleak_core::policy_opt::{scan_pv, search_three_level, sgd_battery_conditioned, SimBudget};
use smartleak_core::privacy_power::{ppf_with, PpfOptions};
use smartleak_core::slb::{fit_trunc_exp, slb_avg_peak, slb_peak_only};
use smartleak_core::zero_battery::{solve_zero_known_capped, solve_zero_unknown_with, ZeroOptions};

use crate::config::Config;
use crate::error::{Result, WorkbenchError};
use crate::ingest::ingest_profile;
use crate::sweeps::{sweep_figure4, sweep_figure5, sweep_figure6};
use crate::table::{list, num, Table};

#[derive(Debug, Parser)]
#[command(name = "smartleak", version, about = "Leakage of smart-meter energy management policies")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output CSV path; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of simulation seeds.
    #[arg(long, global = true)]
    pub seeds: Option<u64>,
    /// Simulated sequence length.
    #[arg(long, global = true)]
    pub n: Option<u64>,
    /// Solver tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads.
    #[arg(long, global = true, env = "SMARTLEAK_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Scan,
    Sgd,
    ThreeLevel,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Privacy-power function of the configured demand.
    Ppf {
        /// Average draw; defaults to the mean generation.
        #[arg(long)]
        p_bar: Option<f64>,
    },
    /// Zero-battery leakage with and without generation known to the reader.
    Zero,
    /// Closed-form binary leakage rates.
    Binary {
        #[arg(long)]
        q_x: f64,
        #[arg(long)]
        p_e: f64,
        #[arg(long, default_value_t = 1.0)]
        p_v: f64,
    },
    /// Simulated leakage of the configured policy.
    Simulate,
    /// Policy parameter search.
    Optimize {
        #[arg(long, value_enum, default_value_t = Method::Scan)]
        method: Method,
        /// Grid step for scan and three-level searches.
        #[arg(long)]
        step: Option<f64>,
        /// Starting masking probabilities for SGD, one per state of charge.
        #[arg(long, value_delimiter = ',')]
        init: Option<Vec<f64>>,
    },
    /// Shannon lower bounds for a continuous load with differential entropy `h_x`.
    Slb {
        #[arg(long)]
        h_x: f64,
        #[arg(long)]
        p_hat: f64,
        #[arg(long)]
        p_bar: Option<f64>,
    },
    /// Figure sweeps.
    Sweep {
        #[arg(long, value_parser = ["4", "5", "6"])]
        figure: String,
    },
    /// Empirical distribution from a one-column CSV profile.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Energy per quantum, in the units of the profile.
        #[arg(long)]
        quantum: f64,
        #[arg(long)]
        size: usize,
    },
}

/// A finished command: its table and whether every solver converged.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: Table,
    pub converged: bool,
}

impl Report {
    fn done(table: Table) -> Self {
        Self { table, converged: true }
    }
}

impl Cli {
    /// Configuration file merged with command-line overrides.
    pub fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(n) = self.n {
            cfg.sim.n = n;
        }
        if let Some(s) = self.seeds {
            cfg.sim.seeds = s;
        }
        if let Some(t) = self.tol {
            cfg.solver.tol = t;
        }
        if cfg.sim.n == 0 || cfg.sim.seeds == 0 {
            return Err(WorkbenchError::Config("n and seeds must be positive".into()));
        }
        if !(cfg.solver.tol > 0.0) {
            return Err(WorkbenchError::Config("tol must be positive".into()));
        }
        Ok(cfg)
    }
}

fn ppf_opts(cfg: &Config) -> PpfOptions {
    PpfOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        ..PpfOptions::default()
    }
}

pub fn run(cli: &Cli) -> Result<Report> {
    let cfg = cli.config()?;
    let budget = SimBudget::new(cfg.sim.n, cfg.sim.seeds);
    match &cli.command {
        Command::Ppf { p_bar } => {
            let model = cfg.model()?;
            let p_bar = p_bar.unwrap_or_else(|| model.mean_renewable());
            let r = ppf_with(&model.p_x, p_bar, model.p_hat, &ppf_opts(&cfg))?;
            let mut t = Table::new(&["p_bar", "p_hat", "leakage_bits", "achieved_avg_draw", "iterations", "converged"]);
            t.meta("tol", cfg.solver.tol);
            t.push(vec![
                num(p_bar),
                model.p_hat.to_string(),
                num(r.leakage_bits),
                num(r.achieved_avg_draw),
                r.iterations.to_string(),
                r.converged.to_string(),
            ]);
            Ok(Report {
                table: t,
                converged: r.converged,
            })
        }
        Command::Zero => {
            let model = cfg.model()?;
            let opts = ZeroOptions {
                cap: model.capacity.finite(),
                ..ZeroOptions::default()
            };
            let unknown = solve_zero_unknown_with(&model.p_x, &model.p_e, &opts)?;
            let known = solve_zero_known_capped(&model.p_x, &model.p_e, model.capacity.finite())?;
            let mut t = Table::new(&["variant", "leakage_bits", "converged"]);
            t.meta("restarts", opts.restarts).meta("seed", opts.seed);
            t.push(vec!["unknown".into(), num(unknown.leakage_bits), unknown.converged.to_string()]);
            t.push(vec!["known".into(), num(known), "true".into()]);
            Ok(Report {
                table: t,
                converged: unknown.converged,
            })
        }
        Command::Binary { q_x, p_e, p_v } => {
            let mut t = Table::new(&["quantity", "leakage_bits"]);
            t.meta("q_x", q_x).meta("p_e", p_e).meta("p_v", p_v);
            t.push(vec!["unlimited_battery".into(), num(leak_inf_battery(*p_e, *q_x)?)]);
            t.push(vec!["zero_battery_unknown".into(), num(leak_zero_unknown(*p_e, *p_v, *q_x)?)]);
            t.push(vec!["zero_battery_known".into(), num(leak_zero_known(*p_e, *q_x)?)]);
            Ok(Report::done(t))
        }
        Command::Simulate => {
            let model = cfg.model()?;
            let policy = cfg.policy()?;
            let est = estimate_leakage(&model, &policy, cfg.sim.n, cfg.sim.seeds)?;
            let mut t = Table::new(&["seed", "hy_rate", "hy_given_x_rate", "leakage"]);
            t.meta("policy", policy.name())
                .meta("n", est.n)
                .meta("seeds", est.seeds)
                .meta("start", "empty battery")
                .meta("bits_per_slot", num(est.bits_per_slot))
                .meta("std_error", num(est.std_error));
            for r in &est.records {
                t.push(vec![r.seed.to_string(), num(r.hy_rate), num(r.hy_given_x_rate), num(r.leakage())]);
            }
            Ok(Report::done(t))
        }
        Command::Optimize { method, step, init } => {
            let model = cfg.model()?;
            let seeds: Vec<u64> = (0..cfg.sim.seeds).collect();
            match method {
                Method::Scan => {
                    let step = step.unwrap_or(cfg.sweep.pv_step);
                    let r = scan_pv(&model, step, &budget)?;
                    let mut t = Table::new(&["p_v", "leakage", "std_error"]);
                    t.meta("n", cfg.sim.n)
                        .meta("seeds", list(&seeds))
                        .meta("best_p_v", num(r.best_pv))
                        .meta("best_leakage", num(r.best.leakage));
                    for (p, s) in &r.curve {
                        t.push(vec![num(*p), num(s.leakage), num(s.std_error)]);
                    }
                    Ok(Report::done(t))
                }
                Method::Sgd => {
                    let states = model
                        .capacity
                        .finite()
                        .ok_or_else(|| WorkbenchError::Config("sgd needs a finite capacity".into()))?
                        as usize
                        + 1;
                    let init = match init {
                        Some(v) => v.clone(),
                        None => vec![scan_pv(&model, cfg.sweep.pv_step, &budget)?.best_pv; states],
                    };
                    let opts = cfg.sgd.options();
                    let r = sgd_battery_conditioned(&model, &init, &opts, &budget)?;
                    let mut t = Table::new(&["iteration", "p_v", "leakage", "std_error", "best_leakage"]);
                    t.meta("n", cfg.sim.n)
                        .meta("seeds", list(&seeds))
                        .meta("random_numbers", "shared seeds across all probes and iterates")
                        .meta("best_p_v", list(&r.p_v))
                        .meta("converged", r.converged);
                    for s in &r.trace {
                        t.push(vec![
                            s.iteration.to_string(),
                            list(&s.p_v),
                            num(s.leakage),
                            num(s.std_error),
                            num(s.best_leakage),
                        ]);
                    }
                    Ok(Report {
                        table: t,
                        converged: r.converged,
                    })
                }
                Method::ThreeLevel => {
                    let step = step.unwrap_or(cfg.sweep.three_level_step);
                    let r = search_three_level(&model, step, &budget)?;
                    let mut t = Table::new(&["p1", "p2", "p3", "p4", "p5", "p6", "leakage", "std_error"]);
                    t.meta("n", cfg.sim.n).meta("seeds", list(&seeds)).meta("evaluated", r.evaluated);
                    let mut row: Vec<String> = r.p.iter().map(|v| num(*v)).collect();
                    row.push(num(r.best.leakage));
                    row.push(num(r.best.std_error));
                    t.push(row);
                    Ok(Report::done(t))
                }
            }
        }
        Command::Slb { h_x, p_hat, p_bar } => {
            let mut t = Table::new(&["bound", "value_bits"]);
            t.meta("h_x_bits", h_x).meta("p_hat", p_hat);
            t.push(vec!["peak_only".into(), num(slb_peak_only(*h_x, *p_hat)?)]);
            if let Some(p_bar) = p_bar {
                let fit = fit_trunc_exp(*p_bar, *p_hat)?;
                t.meta("p_bar", p_bar)
                    .meta("lambda0", num(fit.lambda0))
                    .meta("lambda1", num(fit.lambda1))
                    .meta("uniform_limit", fit.uniform);
                t.push(vec!["average_and_peak".into(), num(slb_avg_peak(*h_x, *p_bar, *p_hat)?)]);
            }
            t.meta(
                "note",
                "differential entropies; compare with discrete results after adding log2 of the quantum",
            );
            Ok(Report::done(t))
        }
        Command::Sweep { figure } => {
            let table = match figure.as_str() {
                "4" => sweep_figure4(&cfg)?,
                "5" => sweep_figure5(&cfg)?,
                _ => sweep_figure6(&cfg)?,
            };
            Ok(Report::done(table))
        }
        Command::Ingest { input, quantum, size } => {
            let r = ingest_profile(input, *quantum, *size)?;
            let mut t = Table::new(&["value", "probability"]);
            t.meta("quantum", quantum)
                .meta("samples", r.samples)
                .meta("clipped_mass", num(r.clipped_mass));
            for (i, p) in r.pmf.probs().iter().enumerate() {
                t.push(vec![i.to_string(), num(*p)]);
            }
            Ok(Report::done(t))
        }
    }
}

/// Runs the command and writes its table; returns the process exit status.
pub fn execute(cli: &Cli) -> i32 {
    if let Some(threads) = cli.threads {
        // a pool configured earlier in the process stays in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    let report = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let written = match &cli.out {
        Some(path) => std::fs::File::create(path)
            .map_err(WorkbenchError::from)
            .and_then(|f| report.table.write_to(std::io::BufWriter::new(f))),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            report.table.write_to(&mut lock).and_then(|_| lock.flush().map_err(Into::into))
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    if !report.converged {
        eprintln!("warning: solver did not converge");
        return 3;
    }
    0
}
