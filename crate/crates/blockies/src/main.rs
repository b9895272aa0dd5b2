use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use blockies::analysis::{analyze, parse_duration, render_summary};
use blockies::client::{simulate_participant, Policy, SimulateRequest};
use blockies::config::{load_design, load_generation_config, StudyDefinition};
use blockies::data::{generate_dataset, GenerateRequest};
use blockies::fsutil::{atomic_write, encode_png, write_json};
use blockies::pipeline::{
    evaluate_split, load_model, make_plan, read_plan, read_predictions, scripted_predictions, train_advisor,
    write_predictions, TrainRequest,
};
use blockies::provenance::Provenance;
use blockies::report::{export_trial_logs, read_trial_logs};
use blockies::server::{serve, ServerConfig};
use blockies::store::SessionStore;
use blockies_core::advisor::{ArchConfig, Head, ScriptedConfidence, TrainingRecipe};
use blockies_core::dataset::{generate_sample, Split};
use blockies_core::render::{render, RenderSettings};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blockies", version, about = "Synthetic X-ray stimuli, an AI advisor and a trust-calibration study server")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Flatten,
    GlobalAverage,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and render one dataset split.
    Generate {
        #[arg(long)]
        split: Split,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        seed: u64,
        /// Generation config (TOML). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        resolution: u32,
    },
    /// Render a single sample to a PNG.
    RenderPreview {
        #[arg(long)]
        split: Split,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        resolution: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the learned advisor on the train and validation splits.
    Train {
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "advisor.model")]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        no_augmentation: bool,
        #[arg(long, value_enum, default_value = "flatten")]
        head: HeadArg,
        /// Worker threads for data-parallel batches. Results do not depend on it.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Run the learned advisor over a split and report accuracy.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long)]
        split: Split,
        /// Write the prediction table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a scripted advisor table with an exact number of correct entries.
    Schedule {
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "experimental")]
        split: Split,
        #[arg(long)]
        n_correct: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select tutorial and main stimuli and fix the trial orders.
    Plan {
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "experimental")]
        split: Split,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Study design (TOML) with narratives and bonus policies.
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long, default_value = "plan.json")]
        out: PathBuf,
    },
    /// Serve a study over HTTP.
    Serve {
        #[arg(long, env = "BLOCKIES_STUDY")]
        study: PathBuf,
        #[arg(long, env = "BLOCKIES_DATA_DIR", default_value = "study-data")]
        data_dir: PathBuf,
        #[arg(long, env = "BLOCKIES_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, env = "BLOCKIES_ADMIN_TOKEN", hide_env_values = true)]
        admin_token: Option<String>,
        /// Directory with the participant UI bundle.
        #[arg(long = "static", env = "BLOCKIES_STATIC")]
        static_dir: Option<PathBuf>,
    },
    /// Run scripted participants against a served study.
    SimulateParticipant {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        /// always-agree, always-disagree, ground-truth or noisy-expert:P.
        /// Without an advisor shown, agree/disagree answer with a seeded coin.
        #[arg(long)]
        policy: Policy,
        #[arg(long)]
        seed: u64,
        /// Plan JSON; required by ground-truth and noisy-expert.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value = "simulated")]
        participant: String,
        #[arg(long)]
        stratum: Option<String>,
        #[arg(long, default_value_t = 1)]
        count: u32,
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-participant metrics and group tests over exported trial logs.
    Analyze {
        /// Trial-log files or directories of *.jsonl files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Flag and exclude sessions shorter than this (e.g. 20m).
        #[arg(long)]
        min_duration: Option<String>,
        #[arg(long, default_value = "analysis.json")]
        out: PathBuf,
    },
    /// Write one self-contained trial-log file per stored session.
    Export {
        #[arg(long, env = "BLOCKIES_STUDY")]
        study: PathBuf,
        #[arg(long, env = "BLOCKIES_DATA_DIR", default_value = "study-data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "trial-logs")]
        out: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn sha_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { split, n, seed, config, out, resolution } => {
            let cfg = load_generation_config(config.as_deref())?;
            let report = generate_dataset(&GenerateRequest {
                config: cfg,
                split,
                n,
                seed,
                render: RenderSettings::default().with_resolution(resolution),
                out_dir: out,
            })?;
            print_json(&report)
        }
        Command::RenderPreview { split, seed, index, config, resolution, out } => {
            let cfg = load_generation_config(config.as_deref())?;
            let rec = generate_sample(&cfg, split, seed, index)?;
            let settings = RenderSettings::default().with_resolution(resolution);
            let png = encode_png(&render(&rec.params, &settings)?)?;
            atomic_write(&out, &png)?;
            Provenance::new("render-preview", Some(seed), Some(cfg.hash()))
                .setting("sample", &rec)
                .setting("render", &settings)
                .output("image", &png)
                .write_beside(&out)?;
            print_json(&rec)
        }
        Command::Train { data, seed, out, epochs, batch_size, no_augmentation, head, threads } => {
            let mut recipe = TrainingRecipe { seed, augmentation: !no_augmentation, ..Default::default() };
            if let Some(e) = epochs {
                recipe.epochs = e;
            }
            if let Some(b) = batch_size {
                recipe.batch_size = b;
            }
            let arch = ArchConfig {
                head: match head {
                    HeadArg::Flatten => Head::Flatten,
                    HeadArg::GlobalAverage => Head::GlobalAverage,
                },
                ..Default::default()
            };
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?;
            let req = TrainRequest {
                data_dir: data,
                train_split: Split::Train,
                val_split: Split::Validation,
                recipe,
                arch,
                out,
            };
            let log = pool.install(|| {
                train_advisor(&req, |e| {
                    tracing::info!(
                        epoch = e.epoch,
                        lr = e.learning_rate,
                        train_loss = e.train_loss,
                        val_loss = e.val_loss,
                        val_accuracy = e.val_accuracy,
                        checkpoint = e.checkpoint,
                        "epoch"
                    );
                })
            })?;
            println!("best epoch {} validation loss {:.5}", log.best_epoch, log.best_val_loss);
            Ok(())
        }
        Command::Evaluate { model, data, split, out } => {
            let (file, hash) = load_model(&model)?;
            let (table, eval) = evaluate_split(&file.network, &hash, &data, split)?;
            if let Some(out) = out {
                let prov = Provenance::new("evaluate", None, None)
                    .input("model", &sha_file(&model)?)
                    .setting("split", &split)
                    .setting("evaluation", &eval);
                write_predictions(&out, &table, prov)?;
            }
            print_json(&eval)
        }
        Command::Schedule { data, split, n_correct, seed, out } => {
            let table = scripted_predictions(&data, split, n_correct, seed, &ScriptedConfidence::default())?;
            let prov = Provenance::new("schedule", Some(seed), None)
                .setting("split", &split)
                .setting("n_correct", &n_correct)
                .setting("confidence", &ScriptedConfidence::default());
            write_predictions(&out, &table, prov)?;
            println!("{} entries, {} correct, written to {}", table.len(), n_correct, out.display());
            Ok(())
        }
        Command::Plan { data, split, predictions, seed, design, out } => {
            let table = read_predictions(&predictions)?;
            let design = load_design(design.as_deref())?;
            let plan = make_plan(&data, split, &table, design, seed)?;
            write_json(&out, &plan)?;
            Provenance::new("plan", Some(seed), None)
                .input("predictions", &sha_file(&predictions)?)
                .setting("split", &split)
                .output("plan", &sha_file(&out)?)
                .setting("plan_hash", &plan.hash())
                .write_beside(&out)?;
            println!("plan {} written to {}", plan.hash(), out.display());
            Ok(())
        }
        Command::Serve { study, data_dir, bind, admin_token, static_dir } => {
            let def = StudyDefinition::load(&study)?;
            std::fs::create_dir_all(&data_dir)?;
            Provenance::new("serve", Some(def.assignment_seed), None)
                .input("study", &sha_file(&study)?)
                .input("plan", &sha_file(&def.plan)?)
                .setting("bind", &bind.to_string())
                .write_beside(&data_dir.join("server"))?;
            let cfg = ServerConfig { study: def, data_dir, admin_token, static_dir };
            tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(serve(cfg, bind))
        }
        Command::SimulateParticipant { url, policy, seed, plan, participant, stratum, count, delay_ms, out } => {
            let plan = plan.as_deref().map(read_plan).transpose()?;
            let mut outcomes = Vec::new();
            for i in 0..count {
                let req = SimulateRequest {
                    base_url: url.clone(),
                    policy,
                    seed: blockies_core::rng::derive_seed(seed, i as u64),
                    participant: if count == 1 { participant.clone() } else { format!("{participant}-{i}") },
                    stratum: stratum.clone(),
                    plan: plan.clone(),
                    delay: Duration::from_millis(delay_ms),
                    questionnaire: true,
                };
                outcomes.push(simulate_participant(&req)?);
            }
            if let Some(out) = out {
                write_json(&out, &outcomes)?;
                Provenance::new("simulate-participant", Some(seed), None)
                    .setting("policy", &format!("{policy:?}"))
                    .setting("count", &count)
                    .output("outcomes", &sha_file(&out)?)
                    .write_beside(&out)?;
            }
            print_json(&outcomes)
        }
        Command::Analyze { inputs, min_duration, out } => {
            let min = min_duration.as_deref().map(parse_duration).transpose()?;
            let sessions = read_trial_logs(&inputs)?;
            if sessions.is_empty() {
                bail!("no trial-log records found");
            }
            let report = analyze(&sessions, min)?;
            write_json(&out, &report)?;
            let mut prov = Provenance::new("analyze", None, None).setting("min_duration", &min_duration);
            for p in &inputs {
                if p.is_file() {
                    prov = prov.input(&p.display().to_string(), &sha_file(p)?);
                }
            }
            prov.output("report", &sha_file(&out)?).write_beside(&out)?;
            print!("{}", render_summary(&report));
            for id in &report.flagged_short {
                println!("flagged (below minimum duration): {id}");
            }
            Ok(())
        }
        Command::Export { study, data_dir, out } => {
            let def = StudyDefinition::load(&study)?;
            let plan = read_plan(&def.plan)?;
            let sessions = SessionStore::open(&data_dir)?.load_all(&plan)?;
            let paths = export_trial_logs(&sessions, &out)?;
            let mut prov = Provenance::new("export", None, None).input("plan", &sha_file(&def.plan)?);
            for p in &paths {
                prov = prov.output(&p.file_name().unwrap_or_default().to_string_lossy(), &sha_file(p)?);
            }
            prov.write_beside(&out.join("export"))?;
            println!("{} session logs written to {}", paths.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
