use std::io::Write;
use std::path::PathBuf;

use hidden_bandit::indexer::{compute_index_in, find_bracket, is_indexable, subsidy_sweep, IndexError, SolveCache};
use hidden_bandit::report::{self, fmt_sig};
use hidden_bandit::simulator::{
    compare_policies, precompute_index_tables, run_experiment_with_tables, trace_episode, PolicyKind, SimConfig,
    SimError,
};
use hidden_bandit::structure::{analyze, ThresholdShape};
use hidden_bandit::{solve, SolverError};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Format};
use crate::output::OutputDir;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Solver(SolverError::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}

/// Flag overrides shared by every command.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: PathBuf,
    /// Subsidy for solve, threshold and a single-point indexability check.
    #[arg(long)]
    pub w: Option<f64>,
    #[arg(long, requires_all = ["w_to", "w_step"])]
    pub w_from: Option<f64>,
    #[arg(long, requires_all = ["w_from", "w_step"])]
    pub w_to: Option<f64>,
    #[arg(long, requires_all = ["w_from", "w_to"])]
    pub w_step: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// A loaded config with overrides applied.
pub struct Run {
    pub config: ExperimentConfig,
    pub bytes: Vec<u8>,
    pub path: PathBuf,
    pub flags: Overrides,
}

impl Run {
    pub fn load(flags: Overrides) -> Result<Self, CliError> {
        let (config, bytes) = ExperimentConfig::load(&flags.config)?;
        if let Some(b) = flags.beta {
            if !(b > 0.0 && b < 1.0) {
                return Err(CliError::Usage(format!("--beta must lie in (0, 1), got {b}")));
            }
        }
        Ok(Self {
            config,
            bytes,
            path: flags.config.clone(),
            flags,
        })
    }

    fn beta(&self) -> f64 {
        self.flags.beta.unwrap_or(self.config.beta)
    }

    fn subsidy(&self) -> Result<f64, CliError> {
        self.flags
            .w
            .or(self.config.subsidy)
            .ok_or_else(|| CliError::Usage("no subsidy: pass --w or set subsidy in the config".into()))
    }

    fn subsidy_grid(&self) -> Result<Vec<f64>, CliError> {
        let sweep = |from: f64, to: f64, step: f64| {
            if !(step > 0.0 && from <= to) {
                return Err(CliError::Usage(format!("bad sweep {from}:{step}:{to}")));
            }
            Ok(subsidy_sweep(from, to, step))
        };
        if let (Some(f), Some(t), Some(s)) = (self.flags.w_from, self.flags.w_to, self.flags.w_step) {
            return sweep(f, t, s);
        }
        if let Some(w) = self.flags.w {
            return Ok(vec![w]);
        }
        if let Some(s) = &self.config.subsidy_sweep {
            return sweep(s.from, s.to, s.step);
        }
        Ok(vec![self.subsidy()?])
    }

    fn output(&self) -> Result<OutputDir, CliError> {
        let dir = self.flags.out.clone().unwrap_or_else(|| self.config.output.dir.clone());
        let formats = match self.flags.format {
            Some(f) => vec![f],
            None => self.config.output.formats.clone(),
        };
        Ok(OutputDir::create(&dir, &formats)?)
    }

    fn finish(&self, out: OutputDir, command: &str, seed: Option<u64>) -> Result<(), CliError> {
        let manifest = out.finish(command, &self.path, &self.bytes, seed)?;
        println!("manifest: {}", manifest.display());
        Ok(())
    }

    fn sim_config(&self) -> Result<SimConfig, CliError> {
        let sim = self
            .config
            .sim
            .as_ref()
            .ok_or_else(|| CliError::Config(ConfigError::Invalid("config has no sim section".into())))?;
        let cfg = SimConfig {
            arms: self.config.arms.clone(),
            beta: self.beta(),
            initial_pi: sim.initial_pi.clone(),
            initial_y: sim.initial_y.iter().map(|&y| y == 1).collect(),
            horizon: sim.horizon.into(),
            episodes: self.flags.episodes.unwrap_or(sim.episodes),
            seed: self.flags.seed.unwrap_or(sim.seed),
            policies: sim.policies.clone(),
            index_precompute: sim.index_precompute.unwrap_or_default(),
        };
        cfg.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for n in cfg.uncertified_index_arms() {
            log::warn!("arm {n}: outside the rested index assumptions, its index table is a heuristic");
        }
        Ok(cfg)
    }
}

fn warn_uncertified(config: &ExperimentConfig, policies: &[PolicyKind]) -> Vec<String> {
    if !policies.contains(&PolicyKind::Index) {
        return Vec::new();
    }
    config
        .arms
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.satisfies_rested_index_assumptions())
        .map(|(n, a)| {
            format!(
                "arm {n}: index policy requested but the arm is {:?} with theta.rest_unavailable = {}; its index is a heuristic",
                a.kind, a.theta.rest_unavailable
            )
        })
        .collect()
}

pub fn validate(run: &Run, strict: bool) -> Result<(), CliError> {
    let mut violations = 0;
    for (n, arm) in run.config.arms.iter().enumerate() {
        let v = arm.validate(strict);
        if v.is_empty() {
            println!("arm {n}: ok");
        }
        for x in &v {
            println!("arm {n}: {}: {}", x.field, x.message);
        }
        violations += v.len();
    }
    if let Some(sim) = &run.config.sim {
        if let Some(p) = sim.initial_pi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            println!("sim: initial belief {p} outside [0, 1]");
            violations += 1;
        }
        for w in warn_uncertified(&run.config, &sim.policies) {
            println!("warning: {w}");
        }
    }
    let b = run.config.beta;
    if !(b > 0.0 && b < 1.0) {
        println!("beta: must lie in (0, 1), got {b}");
        violations += 1;
    }
    if violations > 0 {
        return Err(CliError::Invalid(format!("{violations} violation(s)")));
    }
    println!("valid");
    Ok(())
}

pub fn solve_cmd(run: &Run) -> Result<(), CliError> {
    let w = run.subsidy()?;
    let cfg = run.config.solver_config(run.beta(), w);
    let mut out = run.output()?;
    for (n, arm) in run.config.arms.iter().enumerate() {
        let tables = solve(arm, &cfg)?;
        println!(
            "arm {n}: converged in {} iterations, residual {}",
            tables.iterations,
            fmt_sig(tables.residual)
        );
        out.emit(&format!("solve_arm{n}"), || report::value_table_csv(&tables), &tables)?;
    }
    run.finish(out, "solve", None)
}

fn shape_name(s: &ThresholdShape) -> &'static str {
    match s {
        ThresholdShape::AllPlay => "all_play",
        ThresholdShape::AllNotPlay => "all_not_play",
        ThresholdShape::Threshold { .. } => "threshold",
        ThresholdShape::NotThreshold { .. } => "not_threshold",
    }
}

pub fn threshold(run: &Run) -> Result<(), CliError> {
    let w = run.subsidy()?;
    let cfg = run.config.solver_config(run.beta(), w);
    let mut out = run.output()?;
    let mut reports = Vec::new();
    for arm in &run.config.arms {
        let tables = solve(arm, &cfg)?;
        reports.push(analyze(arm, &tables));
    }
    let csv = || {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["arm", "y", "shape", "pi_star_grid", "pi_star"]).expect("in-memory write");
        for (n, r) in reports.iter().enumerate() {
            for (y, refined) in [(1, r.refined.pi_star), (0, r.refined.pi_tilde)] {
                let shape = r.threshold.shape(y == 1);
                let grid = match shape {
                    ThresholdShape::Threshold { pi_star, .. } => fmt_sig(*pi_star),
                    _ => String::new(),
                };
                let refined = refined.map(fmt_sig).unwrap_or_default();
                w.write_record([n.to_string(), y.to_string(), shape_name(shape).into(), grid, refined])
                    .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    };
    for (n, r) in reports.iter().enumerate() {
        println!(
            "arm {n}: y=1 {}, y=0 {}",
            shape_name(&r.threshold.available),
            shape_name(&r.threshold.unavailable)
        );
    }
    out.emit("threshold", csv, &reports)?;
    run.finish(out, "threshold", None)
}

pub fn index(run: &Run) -> Result<(), CliError> {
    let cfg = run.config.solver_config(run.beta(), 0.0);
    let tol = run.config.index.w_tolerance;
    let mut out = run.output()?;
    for (n, arm) in run.config.arms.iter().enumerate() {
        let cache = SolveCache::new();
        let mut results = Vec::new();
        for y in [true, false] {
            for &pi in &run.config.index.beliefs {
                let bracket = find_bracket(arm, pi, y, &cfg, &cache)?;
                results.push(compute_index_in(arm, pi, y, &cfg, tol, bracket, &cache)?);
            }
        }
        if !arm.satisfies_rested_index_assumptions() {
            log::warn!("arm {n}: outside the rested index assumptions, values are heuristic");
        }
        println!("arm {n}: {} index values", results.len());
        out.emit(&format!("index_arm{n}"), || report::index_csv(&results), &results)?;
    }
    run.finish(out, "index", None)
}

pub fn indexability(run: &Run) -> Result<(), CliError> {
    let grid = run.subsidy_grid()?;
    let cfg = run.config.solver_config(run.beta(), 0.0);
    let mut out = run.output()?;
    for (n, arm) in run.config.arms.iter().enumerate() {
        let cache = SolveCache::new();
        let r = is_indexable(arm, &grid, &cfg, &cache)?;
        match &r.violation {
            None => println!("arm {n}: indexable on {} subsidies", grid.len()),
            Some(v) => println!("arm {n}: not indexable: {v:?}"),
        }
        out.emit(&format!("indexability_arm{n}"), || report::region_csv(&r.regions), &r)?;
    }
    run.finish(out, "indexability", None)
}

pub fn simulate(run: &Run) -> Result<(), CliError> {
    let cfg = run.sim_config()?;
    let tables = if cfg.policies.contains(&PolicyKind::Index) {
        Some(precompute_index_tables(&cfg)?)
    } else {
        None
    };
    let report = run_experiment_with_tables(&cfg, tables.as_deref())?;
    for s in &report.policies {
        println!(
            "{}: mean {} stderr {} over {} episodes",
            s.policy.name(),
            fmt_sig(s.mean_reward),
            fmt_sig(s.stderr),
            s.episodes
        );
    }
    if let Some(g) = &report.gain {
        println!(
            "gain {}%, paired difference {} (95% CI {} to {})",
            fmt_sig(g.gain_pct),
            fmt_sig(g.diff_mean),
            fmt_sig(g.ci95_low),
            fmt_sig(g.ci95_high)
        );
    }
    let mut out = run.output()?;
    out.emit("simulate", || report::simulation_csv(std::slice::from_ref(&report)), &report)?;
    let traces = run.config.sim.as_ref().map_or(0, |s| s.trace_episodes).min(cfg.episodes);
    if traces > 0 {
        let mut lines = Vec::new();
        for &p in &cfg.policies {
            for e in 0..traces {
                let t = trace_episode(&cfg, p, e, tables.as_deref())?;
                writeln!(lines, "{}", serde_json::to_string(&t).expect("traces serialize"))?;
            }
        }
        out.write("traces.jsonl", &String::from_utf8(lines).expect("utf-8"))?;
    }
    run.finish(out, "simulate", Some(cfg.seed))
}

pub fn compare(run: &Run) -> Result<(), CliError> {
    let cfg = run.sim_config()?;
    let betas = match run.flags.beta {
        Some(b) => vec![b],
        None => run
            .config
            .sim
            .as_ref()
            .and_then(|s| s.betas.clone())
            .unwrap_or_else(|| vec![run.config.beta]),
    };
    let cmp = compare_policies(&cfg, &betas)?;
    println!("beta myopic index gain%");
    for r in &cmp.rows {
        println!("{} {} {} {}", r.beta, fmt_sig(r.myopic), fmt_sig(r.index), fmt_sig(r.gain_pct));
    }
    let mut out = run.output()?;
    out.emit("compare", || report::comparison_csv(&cmp), &cmp)?;
    run.finish(out, "compare", Some(cfg.seed))
}
