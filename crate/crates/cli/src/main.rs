//! `drex` command-line runner.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use drex::pipeline::{self, ExperimentConfig, Stage};

#[derive(Parser)]
#[command(
    name = "drex",
    version,
    about = "Noise-ranked reward extrapolation on tabular MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in environment, overriding the config's environment.
    #[arg(long)]
    env: Option<String>,
    /// Seed; defaults to every seed listed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate demonstrations.
    DemoGen(Common),
    /// Behavioural cloning on the demonstrations.
    Clone(Common),
    /// Noise-injected rollouts and the degradation curve.
    Degrade(Common),
    /// Ranked dataset and snippet pairs.
    Rank(Common),
    /// Train the reward model.
    TrainReward(Common),
    /// Optimise policies for the learned reward.
    Optimize(Common),
    /// Evaluate all methods and write the summary tables.
    Evaluate(Common),
    /// Every pipeline stage in order.
    RunAll(Common),
    /// Ambiguity volumes and hypothesis elimination.
    Ambiguity(Common),
    /// Extrapolation condition, counterexample and degradation checks.
    Theory(Common),
}

struct Resolved {
    cfg: ExperimentConfig,
    seeds: Vec<u64>,
    out: PathBuf,
    workers: usize,
}

fn resolve(c: &Common) -> Result<Resolved> {
    let mut cfg = match &c.config {
        Some(p) => {
            ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &c.env {
        cfg.environment = pipeline::EnvSpec::Builtin(name.clone());
    }
    cfg.validate()?;
    cfg.environment.load().context("loading environment")?;
    Ok(Resolved {
        seeds: c.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]),
        out: c.out.clone().unwrap_or_else(|| cfg.output_dir.clone()),
        workers: c.workers.unwrap_or(cfg.workers).max(1),
        cfg,
    })
}

fn write_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

fn stage(stage: Stage, c: &Common) -> Result<()> {
    let r = resolve(c)?;
    write_config(&r.cfg, &r.out)?;
    for &seed in &r.seeds {
        let dir = pipeline::seed_dir(&r.out, seed);
        pipeline::run_stage(stage, &r.cfg, seed, &dir, r.workers)
            .with_context(|| format!("stage {} seed {seed}", stage.name()))?;
        eprintln!("{} seed {seed}: {}", stage.name(), dir.display());
    }
    Ok(())
}

fn run_all(c: &Common) -> Result<()> {
    let r = resolve(c)?;
    write_config(&r.cfg, &r.out)?;
    for &seed in &r.seeds {
        let dir = pipeline::seed_dir(&r.out, seed);
        for s in Stage::ALL {
            pipeline::run_stage(s, &r.cfg, seed, &dir, r.workers)
                .with_context(|| format!("stage {} seed {seed}", s.name()))?;
            eprintln!("{} seed {seed}: done", s.name());
        }
        print!(
            "{}",
            std::fs::read_to_string(dir.join(pipeline::SUMMARY_FILE))?
        );
    }
    Ok(())
}

fn ambiguity(c: &Common) -> Result<()> {
    let r = resolve(c)?;
    for &seed in &r.seeds {
        let out = pipeline::run_ambiguity(&r.cfg, seed, r.workers)?;
        let dir = pipeline::seed_dir(&r.out, seed);
        pipeline::write_ambiguity(&out, &dir)?;
        for p in &out.prop2 {
            println!(
                "seed {seed} {}: ranked volume {:.4} optimal volume {:.4} subset violations {}",
                p.mdp,
                p.report.ranked.fraction,
                p.report.optimal_only.fraction,
                p.report.subset_violations
            );
        }
    }
    Ok(())
}

fn theory(c: &Common) -> Result<()> {
    let r = resolve(c)?;
    for &seed in &r.seeds {
        let dir = pipeline::seed_dir(&r.out, seed);
        let out = pipeline::run_theory(&r.cfg, seed, Some(&dir), r.workers)?;
        pipeline::write_theory(&out, &dir)?;
        let t = &out.theorem1;
        println!(
            "seed {seed}: condition held in {}/{} instances, {} counterexamples, {} bound violations",
            t.condition_true, t.instances, t.counterexamples, t.bound_violations
        );
        let within = out.gap_check.iter().filter(|g| g.within).count();
        println!(
            "seed {seed}: degradation bound held at {within}/{} noise levels",
            out.gap_check.len()
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::DemoGen(c) => stage(Stage::DemoGen, &c),
        Command::Clone(c) => stage(Stage::Clone, &c),
        Command::Degrade(c) => stage(Stage::Degrade, &c),
        Command::Rank(c) => stage(Stage::Rank, &c),
        Command::TrainReward(c) => stage(Stage::TrainReward, &c),
        Command::Optimize(c) => stage(Stage::Optimize, &c),
        Command::Evaluate(c) => stage(Stage::Evaluate, &c),
        Command::RunAll(c) => run_all(&c),
        Command::Ambiguity(c) => ambiguity(&c),
        Command::Theory(c) => theory(&c),
    }
}
