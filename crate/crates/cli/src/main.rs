use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vreason_core::controller::QNetwork;
use vreason_core::harness::{load_dataset, MetricReport, RunConfig, TraceWriter};
use vreason_core::orchestrator::{
    evaluate, generate_synthetic, run_episode, train, write_synthetic, DqnPolicy, HighestConfidence, Policy,
    TrainOptions,
};
use vreason_core::state::{Query, TaskKind};
use vreason_core::Result;

const EXIT_UNANSWERED: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "vreason", version, about = "Iterative visual reasoning with a learned instruction selector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one query about one image.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        query: String,
        /// Image reference as understood by the toolkit (scene file in mock mode).
        #[arg(long)]
        image: String,
        #[arg(long, default_value = "vqa")]
        task: TaskKind,
        /// Trained controller; without it the most confident instruction is taken.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Write a JSONL trace with every step, prompt and completion.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a controller and write its checkpoint and reward curve.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint path; the reward curve goes next to it as `<out>.rewards.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30_000)]
        max_observations: u64,
        #[arg(long)]
        max_episodes: Option<usize>,
        /// Keep training after the reward curve has converged.
        #[arg(long)]
        no_early_stop: bool,
    },
    /// Run a checkpoint over a dataset and write a metric report.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic dataset, its scenes and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Infer { config, query, image, task, ckpt, trace, seed } => {
            let cfg = RunConfig::load(&config)?;
            let mut comps = cfg.components()?;
            comps.record_exchanges = trace.is_some();
            let policy = policy(&cfg, ckpt.as_deref())?;
            let query = Query::new(query, image, task)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let result = run_episode(&query, &cfg.loop_cfg, &comps, &*policy, &mut rng, "infer")?;
            if let Some(path) = trace {
                let mut w = TraceWriter::new(BufWriter::new(File::create(&path)?));
                w.write_episode("infer", &result)?;
                w.finish()?;
            }
            if let Some(err) = &result.error {
                eprintln!("episode aborted: {err}");
            }
            match result.answer.display() {
                Some(answer) => {
                    println!("{answer}");
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    println!("unanswered");
                    Ok(ExitCode::from(EXIT_UNANSWERED))
                }
            }
        }
        Command::Train { config, dataset, out, seed, max_observations, max_episodes, no_early_stop } => {
            let cfg = RunConfig::load(&config)?;
            let rows = load_dataset(&dataset)?;
            let comps = cfg.components()?;
            let opts = TrainOptions {
                max_observations,
                max_episodes: max_episodes.unwrap_or(usize::MAX),
                stop_on_convergence: !no_early_stop,
            };
            let outcome = train(&rows, &cfg.loop_cfg, &comps, cfg.hyper, seed, cfg.embedder()?, opts)?;
            outcome.net.save(&out)?;
            let mut csv = String::from("episode,reward\n");
            for (i, r) in outcome.episode_rewards.iter().enumerate() {
                writeln!(csv, "{},{r}", i + 1).expect("writing to a String");
            }
            std::fs::write(rewards_path(&out), csv)?;
            eprintln!(
                "trained on {} episodes, {} observations, {} updates{}",
                outcome.episode_rewards.len(),
                outcome.observations,
                outcome.train_steps,
                if outcome.converged { ", converged" } else { "" }
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { config, dataset, ckpt, metrics, seed } => {
            let cfg = RunConfig::load(&config)?;
            let rows = load_dataset(&dataset)?;
            let comps = cfg.components()?;
            let policy = policy(&cfg, Some(&ckpt))?;
            let results = evaluate(&rows, &cfg.loop_cfg, &comps, &*policy, cfg.eval_workers, seed)?;
            let answers: Vec<_> = results.into_iter().map(|r| r.answer).collect();
            let report = MetricReport::build(&rows, &answers);
            std::fs::write(&metrics, serde_json::to_string_pretty(&report)?)?;
            if let Some(acc) = report.accuracy {
                eprintln!("accuracy {acc:.4}");
            }
            if let (Some(miou), Some(at50)) = (report.mean_iou, report.iou_at_50) {
                eprintln!("mean iou {miou:.4}, iou@0.5 {at50:.4}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out, n, seed } => {
            let examples = generate_synthetic(n, seed);
            write_synthetic(&out, &examples)?;
            let mut cfg = RunConfig::default();
            cfg.paths.scenes = Some(PathBuf::from("scenes"));
            cfg.llm.seed = seed;
            cfg.save(out.join("config.txt"))?;
            eprintln!("wrote {n} examples to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn policy(cfg: &RunConfig, ckpt: Option<&Path>) -> Result<Box<dyn Policy>> {
    Ok(match ckpt {
        Some(path) => {
            let net = QNetwork::load(path, Some(cfg.loop_cfg.n_samples))?;
            Box::new(DqnPolicy { net, embedder: cfg.embedder()? })
        }
        None => Box::new(HighestConfidence),
    })
}

fn rewards_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".rewards.csv");
    PathBuf::from(name)
}
