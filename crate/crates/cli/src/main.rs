//! `cpsim`: run collective-perception simulations from the shell.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use cpsim_core::config::{Policy, ScenarioConfig};
use cpsim_core::fig1;
use cpsim_core::metrics::RunMetrics;
use cpsim_core::rng::SimRng;
use cpsim_core::scheduler::run_scenario;

#[derive(Parser)]
#[command(
    name = "cpsim",
    version,
    about = "Collective-perception V2X simulator",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its metric CSV files.
    Run(RunArgs),
    /// Run a seed sweep, optionally over both policies, in parallel.
    Sweep(SweepArgs),
    /// Print the two-vehicle generation-rule schedules as CSV.
    Fig1(Fig1Args),
    /// Load a configuration, report its hash and fleet size.
    Validate(ValidateArgs),
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse::<Policy>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML; defaults to the built-in highway preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_policy, default_value = "etsi")]
    policy: Policy,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured duration, seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Output directory for the CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict to one policy; default sweeps both.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<Policy>,
    /// First seed of the sweep.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, default_value_t = 0)]
    parallel: usize,
}

#[derive(Args)]
struct Fig1Args {
    /// Restrict to one policy; default prints both.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<Policy>,
    /// Schedule horizon, seconds.
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    /// Output directory; omit to print to stdout only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<ScenarioConfig> {
    match path {
        Some(p) => {
            ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))
        }
        None => Ok(ScenarioConfig::default_highway()),
    }
}

fn apply_overrides(
    cfg: &mut ScenarioConfig,
    seed: Option<u64>,
    duration: Option<f64>,
) -> anyhow::Result<()> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = duration {
        if d <= cfg.warmup_s {
            bail!("duration {} s must exceed the {} s warmup", d, cfg.warmup_s);
        }
        cfg.duration_s = d;
    }
    Ok(())
}

fn print_summary(m: &RunMetrics) {
    println!(
        "policy={} seed={} cpm_rate={:.3} Hz objects/cpm={:.2} cbr={:.4} opr={:.4} \
         frames={} decoded={} mean_gap={:.3} s",
        m.policy,
        m.seed,
        m.cpm_rate_hz,
        m.mean_objects_per_cpm,
        m.mean_cbr,
        m.mean_opr,
        m.frames_sent,
        m.frames_decoded,
        m.mean_update_gap_s,
    );
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    apply_overrides(&mut cfg, args.seed, args.duration)?;
    let metrics = run_scenario(&cfg, args.policy)?;
    metrics.write_csvs(&args.out)?;
    print_summary(&metrics);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn sweep_rows_csv(rows: &[RunMetrics], base_hash: &str) -> String {
    let mut text = format!("# config_hash={base_hash} sweep\n");
    text.push_str(
        "policy,seed,cpm_rate_hz,mean_objects_per_cpm,mean_cpm_bytes,mean_cbr,mean_opr,\
         mean_update_gap_s,cpm_count,frames_sent,frames_decoded\n",
    );
    for m in rows {
        text.push_str(&format!(
            "{},{},{:.6},{:.6},{:.3},{:.6},{:.6},{:.6},{},{},{}\n",
            m.policy,
            m.seed,
            m.cpm_rate_hz,
            m.mean_objects_per_cpm,
            m.mean_cpm_bytes,
            m.mean_cbr,
            m.mean_opr,
            m.mean_update_gap_s,
            m.cpm_count,
            m.frames_sent,
            m.frames_decoded,
        ));
    }
    text
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut base = load_config(&args.config)?;
    apply_overrides(&mut base, None, args.duration)?;
    let policies: Vec<Policy> = match args.policy {
        Some(p) => vec![p],
        None => vec![Policy::Etsi, Policy::LookAhead],
    };
    let mut jobs = Vec::new();
    for &policy in &policies {
        for k in 0..args.seeds {
            let mut cfg = base.clone();
            cfg.seed = args.seed + k;
            jobs.push((policy, cfg));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.parallel)
        .build()
        .context("building worker pool")?;
    let results: Vec<anyhow::Result<RunMetrics>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|(policy, cfg)| Ok(run_scenario(cfg, *policy)?))
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    for result in results {
        rows.push(result?);
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for m in &rows {
        let dir = args.out.join(format!("{}_seed{}", m.policy, m.seed));
        m.write_csvs(&dir)?;
        print_summary(m);
    }
    let sweep_path = args.out.join("sweep.csv");
    std::fs::write(&sweep_path, sweep_rows_csv(&rows, &base.hash()))
        .with_context(|| format!("writing {}", sweep_path.display()))?;
    println!("wrote {}", sweep_path.display());
    Ok(())
}

fn fig1_csv(policies: &[Policy], duration: f64) -> String {
    let mut text = String::from("scenario,policy,time_ms,objects,size_bytes,sic\n");
    for &policy in policies {
        for (name, schedule) in [
            ("s1", fig1::scenario1(policy, duration)),
            ("s2", fig1::scenario2(policy, duration)),
        ] {
            for e in schedule {
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    name,
                    policy,
                    e.time.as_nanos() / 1_000_000,
                    e.objects.len(),
                    e.size_bytes,
                    u8::from(e.sic_present),
                ));
            }
        }
    }
    text
}

fn cmd_fig1(args: Fig1Args) -> anyhow::Result<()> {
    let policies: Vec<Policy> = match args.policy {
        Some(p) => vec![p],
        None => vec![Policy::Etsi, Policy::LookAhead],
    };
    let text = fig1_csv(&policies, args.duration);
    print!("{text}");
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("fig1.csv");
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> anyhow::Result<()> {
    let cfg = ScenarioConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let (mobility, _) = cpsim_core::mobility::build(&cfg, &SimRng::new(cfg.seed))?;
    println!(
        "ok hash={} scenario={} vehicles={} duration={} s warmup={} s seed={}",
        cfg.hash(),
        cfg.kind.name(),
        mobility.states().len(),
        cfg.duration_s,
        cfg.warmup_s,
        cfg.seed,
    );
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Fig1(args) => cmd_fig1(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig1_csv_has_lookahead_s2_cadence() {
        let text = fig1_csv(&[Policy::LookAhead], 2.0);
        let times: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("s2,look_ahead"))
            .map(|l| l.split(',').nth(2).unwrap())
            .collect();
        assert_eq!(&times[..5], &["0", "100", "200", "400", "700"]);
    }

    #[test]
    fn override_rejects_duration_inside_warmup() {
        let mut cfg = ScenarioConfig::default_highway();
        let warmup = cfg.warmup_s;
        assert!(apply_overrides(&mut cfg, None, Some(warmup)).is_err());
        assert!(apply_overrides(&mut cfg, Some(3), Some(60.0)).is_ok());
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.duration_s, 60.0);
    }
}
