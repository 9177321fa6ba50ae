use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use polydg::harness::{run_study, RunConfig, StudyKind};
use polydg::par::with_threads;

#[derive(Parser, Debug)]
#[command(name = "polydg", version, about = "DG solvers and benchmark studies on polygonal meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: current directory)
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for assembly and error evaluation
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Seed for mesh generation
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single assemble/solve/evaluate run
    Solve(Common),
    /// Convergence under mesh refinement
    #[command(name = "h-study")]
    HStudy(Common),
    /// Convergence under degree increase on a fixed mesh
    #[command(name = "p-study")]
    PStudy(Common),
    /// Effect of the lifting penalty χ on all mesh families
    #[command(name = "chi-study")]
    ChiStudy(Common),
    /// All four methods: timings, sparsity and conditioning
    Compare(Common),
    /// Variable degree with correct and inverted average direction
    Vardeg(Common),
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Solve(c) => (StudyKind::Solve, c),
        Command::HStudy(c) => (StudyKind::HStudy, c),
        Command::PStudy(c) => (StudyKind::PStudy, c),
        Command::ChiStudy(c) => (StudyKind::ChiStudy, c),
        Command::Compare(c) => (StudyKind::Compare, c),
        Command::Vardeg(c) => (StudyKind::Vardeg, c),
    };
    let mut cfg = RunConfig::parse_file(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = common.out.clone();
    let report = with_threads(common.threads, || run_study(kind, &cfg, Some(&out)))?;
    for note in &report.notes {
        println!("{note}");
    }
    for f in &report.fits {
        println!(
            "{} {} {} p={}: rate_l2 {} rate_cdg {}",
            f.study,
            f.method,
            f.mesh_type,
            f.p,
            f.rate_l2.map_or("-".into(), |r| format!("{r:.3}")),
            f.rate_cdg.map_or("-".into(), |r| format!("{r:.3}"))
        );
    }
    println!("{} rows written to {}", report.rows.len(), out.join("report.csv").display());
    Ok(())
}
