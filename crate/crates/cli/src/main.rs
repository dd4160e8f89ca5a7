use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use sdm_core::edit::{replay_api_calls, ApiCall};
use sdm_core::geometry::synthetic::{generate_synthetic_dataset, load_dataset};
use sdm_core::geometry::{compute_adjacency, load_model, model_to_json, normalize_model, save_model};
use sdm_core::model::{ModelConfig, SdmModel};
use sdm_core::parser::{
    builtin_corpus, evaluate_corpus, load_corpus, matches_gold, parse_with_grammar, parse_with_llm, Engine, LlmClient,
    ParseResult,
};
use sdm_core::tokenizer::tokenize_model;
use sdm_core::trainer::{evaluate, prepare_models, primary_type, stratified_split, train, TrainConfig};
use sdm_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "sdm", version, about = "Semantic direct modeling workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest an externally tessellated SDM-Mesh JSON file and write it canonically.
    Convert {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Recompute triangle and face adjacency from shared edges.
        #[arg(long)]
        recompute_adjacency: bool,
        /// Center on the bounding box and scale the longest side to 1.
        #[arg(long)]
        normalize: bool,
    },
    /// Generate a labeled synthetic dataset.
    GenData {
        #[arg(long, default_value_t = 550)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a face-set generator and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// JSON `{"train": {...}, "model": {...}}`; either part may be omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Separate validation set; otherwise `--data` is split 80/10/10 and
        /// the last tenth is scored after training.
        #[arg(long)]
        val: Option<PathBuf>,
        /// Write the per-epoch log here.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Parse a command, or score a corpus when only `--gold` is given.
    Parse {
        #[arg(long)]
        text: Option<String>,
        #[arg(long, default_value = "grammar")]
        engine: Engine,
        /// With `--text`: a gold command JSON file. Alone: a JSONL corpus,
        /// or `builtin` for the bundled one.
        #[arg(long)]
        gold: Option<String>,
    },
    /// Replay an API-call log on a model.
    Replay {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calls: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        max_sessions: Option<usize>,
    },
    /// Dump the face tokens of a model.
    Tokens {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        face: Option<usize>,
    },
}

#[derive(Serialize, Deserialize)]
struct RunConfig {
    #[serde(default)]
    train: TrainConfig,
    #[serde(default = "ModelConfig::desk")]
    model: ModelConfig,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn parse_text(text: &str, engine: Engine) -> Result<ParseResult> {
    Ok(match engine {
        Engine::Grammar => parse_with_grammar(text),
        Engine::Llm => {
            let client = LlmClient::from_env().context("the llm engine needs SDM_LLM_ENDPOINT")?;
            parse_with_llm(text, &client)
        }
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convert {
            input,
            out,
            recompute_adjacency,
            normalize,
        } => {
            let mut model = load_model(&input)?;
            if recompute_adjacency {
                model = compute_adjacency(&model);
            }
            if normalize {
                let (m, n) = normalize_model(&model)?;
                model = m;
                eprintln!("normalized: {n:?}");
            }
            model.validate()?;
            save_model(&model, &out)?;
            eprintln!(
                "{}: {} faces, {} triangles, {} labels",
                out.display(),
                model.face_count(),
                model.triangle_count(),
                model.labels.len()
            );
        }
        Command::GenData { count, seed, out } => {
            let manifest = generate_synthetic_dataset(count, seed, &out)?;
            eprintln!("wrote {} models to {}", manifest.generated, out.display());
            print_json(&manifest.per_type)?;
        }
        Command::Train {
            data,
            config,
            out,
            val,
            history,
        } => {
            let cfg: RunConfig = match config {
                Some(p) => read_json(&p)?,
                None => RunConfig {
                    train: TrainConfig::default(),
                    model: ModelConfig::desk(),
                },
            };
            let models = load_dataset(&data)?;
            let (tr, va, te) = match val {
                Some(v) => (models, load_dataset(&v)?, Vec::new()),
                None => {
                    let mut parts =
                        stratified_split(models, primary_type, &[0.8, 0.1, 0.1], cfg.train.seed).into_iter();
                    let mut next = || parts.next().unwrap_or_default();
                    (next(), next(), next())
                }
            };
            eprintln!(
                "training on {} models, validating on {}, holding out {}",
                tr.len(),
                va.len(),
                te.len()
            );
            let (tr, va, te) = (prepare_models(&tr)?, prepare_models(&va)?, prepare_models(&te)?);
            let outcome = train(&tr, &va, &cfg.train, cfg.model, &mut |l| {
                tracing::info!(
                    epoch = l.epoch,
                    loss = l.train_loss,
                    val_iou = l.val_iou,
                    val_em = l.val_em,
                    seconds = l.seconds
                );
            })?;
            outcome.model.save(&out)?;
            if let Some(h) = history {
                write_json(&h, &outcome.history)?;
            }
            eprintln!(
                "best epoch {}; validation iou {:.4} em {:.4}; saved {}",
                outcome.best_epoch,
                outcome.report.iou_mean,
                outcome.report.em_rate,
                out.display()
            );
            if !te.is_empty() {
                let r = evaluate(&outcome.model, &te)?;
                eprintln!(
                    "held-out iou {:.4} em {:.4} over {} samples",
                    r.iou_mean, r.em_rate, r.samples
                );
            }
        }
        Command::Eval { ckpt, data, report } => {
            let model = SdmModel::load(&ckpt)?;
            let r = evaluate(&model, &prepare_models(&load_dataset(&data)?)?)?;
            match report {
                Some(p) => {
                    write_json(&p, &r)?;
                    eprintln!("iou {:.4} em {:.4} over {} samples", r.iou_mean, r.em_rate, r.samples);
                }
                None => print_json(&r)?,
            }
        }
        Command::Parse { text, engine, gold } => match (text, gold) {
            (Some(text), gold) => {
                let result = parse_text(&text, engine)?;
                print_json(&result)?;
                if let Some(g) = gold {
                    let gold: Value = read_json(Path::new(&g))?;
                    let ok = matches_gold(&result, &gold);
                    eprintln!("gold match: {ok}");
                    if !ok {
                        std::process::exit(1);
                    }
                } else if !result.is_success() {
                    std::process::exit(1);
                }
            }
            (None, Some(g)) => {
                let entries = if g == "builtin" {
                    builtin_corpus()
                } else {
                    load_corpus(Path::new(&g))?
                };
                let mut err = None;
                let report = evaluate_corpus(&entries, |t| {
                    parse_text(t, engine).unwrap_or_else(|e| {
                        err.get_or_insert(e);
                        parse_with_grammar("")
                    })
                });
                if let Some(e) = err {
                    return Err(e);
                }
                print_json(&report)?;
                eprintln!(
                    "{}/{} correct ({} simple, {} complex); supported {}/{}",
                    report.correct,
                    report.total,
                    report.simple_correct,
                    report.complex_correct,
                    report.supported_correct,
                    report.supported_total
                );
            }
            (None, None) => bail!("give --text, --gold, or both"),
        },
        Command::Replay { model, calls, out } => {
            let m = load_model(&model)?;
            let calls: Vec<ApiCall> = read_json(&calls)?;
            let result = replay_api_calls(&m, &calls)?;
            match out {
                Some(p) => save_model(&result, p)?,
                None => print!("{}", model_to_json(&result)),
            }
        }
        Command::Serve {
            port,
            checkpoint,
            max_sessions,
        } => {
            let mut config = ServiceConfig::from_env();
            config.port = port.unwrap_or(config.port);
            config.checkpoint = checkpoint.or(config.checkpoint);
            config.max_sessions = max_sessions.unwrap_or(config.max_sessions);
            tokio::runtime::Runtime::new()?.block_on(sdm_service::serve(config))?;
        }
        Command::Tokens { model, face } => {
            let m = load_model(&model)?;
            let tokens = tokenize_model(&m)?;
            match face {
                Some(id) => {
                    let t = tokens
                        .iter()
                        .find(|t| t.face_id == id)
                        .with_context(|| format!("no face {id} (model has {})", tokens.len()))?;
                    print_json(t)?;
                }
                None => print_json(&tokens)?,
            }
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}
