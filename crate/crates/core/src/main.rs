use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use apl::agent::PolicySnapshot;
use apl::dataio::{
    generate_dataset, read_dataset, read_references, write_dataset, write_references, ReferenceFile, RunConfig, Tier,
};
use apl::envs::EnvKind;
use apl::orchestrator::{compute_references, evaluate, execute, RunRecord};

#[derive(Parser)]
#[command(name = "apl", version, about = "Adaptive offline-to-online policy learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an offline dataset.
    GenData {
        #[arg(long)]
        env: EnvKind,
        #[arg(long)]
        tier: Tier,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute random and expert reference returns.
    Baselines {
        #[arg(long)]
        env: EnvKind,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain on a dataset, then fine-tune online.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// key=value, applied after the config file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a saved policy.
    Eval {
        #[arg(long)]
        env: EnvKind,
        #[arg(long)]
        agent_snapshot: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference file; when given, the normalized score is printed too.
        #[arg(long)]
        references: Option<PathBuf>,
    },
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
        }
        _ => Ok(()),
    }
}

fn train(config: &Path, overrides: &[String]) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    for item in overrides {
        cfg.apply_override(item)?;
    }
    cfg.validate()?;
    let Some(dataset_path) = cfg.dataset.clone() else {
        bail!("config {} sets no dataset", config.display());
    };
    if !dataset_path.is_file() {
        bail!("dataset not found: {}", dataset_path.display());
    }
    let dataset = read_dataset(&dataset_path)?;
    if dataset.header.env_name != cfg.env.name() {
        bail!(
            "dataset {} was generated on {}, config trains on {}",
            dataset_path.display(),
            dataset.header.env_name,
            cfg.env
        );
    }

    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let snapshot_path = out.join("config.txt");
    std::fs::write(&snapshot_path, cfg.snapshot()).with_context(|| format!("writing {}", snapshot_path.display()))?;

    let refs = match &cfg.references {
        Some(path) => read_references(path)?,
        None => {
            let r = compute_references(cfg.env, cfg.seed, cfg.ref_episodes)?;
            ReferenceFile {
                env: cfg.env.name().to_string(),
                episodes: cfg.ref_episodes,
                seed: cfg.seed,
                random: r.random,
                expert: r.expert,
            }
        }
    };
    write_references(&out.join("references.json"), &refs)?;

    let mut record = RunRecord::default();
    let result = execute(&cfg, &dataset.records, refs.references(), &mut record);
    let metrics = out.join("metrics.csv");
    record.write_csv(&metrics)?;
    let agent = result?;
    let policy_path = out.join("agent.json");
    let json = serde_json::to_string(&agent.policy_snapshot())?;
    std::fs::write(&policy_path, json).with_context(|| format!("writing {}", policy_path.display()))?;
    match record.final_score() {
        Some(score) => println!(
            "final score {score:.2} after {} online steps; metrics in {}",
            record.s_on,
            metrics.display()
        ),
        None => println!("metrics in {}", metrics.display()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            env,
            tier,
            n,
            seed,
            out,
        } => {
            let dataset = generate_dataset(env, tier, n, seed)?;
            create_parent(&out)?;
            write_dataset(&out, &dataset)?;
            println!(
                "wrote {} {} transitions to {}",
                dataset.records.len(),
                tier,
                out.display()
            );
        }
        Command::Baselines {
            env,
            episodes,
            seed,
            out,
        } => {
            let r = compute_references(env, seed, episodes)?;
            create_parent(&out)?;
            write_references(
                &out,
                &ReferenceFile {
                    env: env.name().to_string(),
                    episodes,
                    seed,
                    random: r.random,
                    expert: r.expert,
                },
            )?;
            println!("random {} expert {}", r.random, r.expert);
        }
        Command::Train { config, overrides } => train(&config, &overrides)?,
        Command::Eval {
            env,
            agent_snapshot,
            episodes,
            seed,
            references,
        } => {
            let text = std::fs::read_to_string(&agent_snapshot)
                .with_context(|| format!("reading {}", agent_snapshot.display()))?;
            let policy: PolicySnapshot =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", agent_snapshot.display()))?;
            if policy.obs_dim() != env.spec().obs_dim {
                bail!(
                    "snapshot expects {} observations, {} provides {}",
                    policy.obs_dim(),
                    env,
                    env.spec().obs_dim
                );
            }
            let mean = evaluate(|obs| policy.act(obs), env, episodes, seed)?;
            match references {
                Some(path) => {
                    let score = read_references(&path)?.references().score(mean)?;
                    println!("mean return {mean} normalized score {score}");
                }
                None => println!("mean return {mean}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("apl: {err:#}");
            ExitCode::FAILURE
        }
    }
}
