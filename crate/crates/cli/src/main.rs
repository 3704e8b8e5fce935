//! Command-line wiring for the caretag harness.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use caretag_core::analysis::{build_error_report, Lexicon};
use caretag_core::backend::{BackendConfig, ChatBackend, HttpBackend, StubBackend, StubRule};
use caretag_core::cascade::CascadeOptions;
use caretag_core::dataset::{
    balance_epoch, distribution, load_split, DatasetSplit, InputFormat, Label, LabeledExample,
};
use caretag_core::export::{emit_train_config, export_sft_dataset};
use caretag_core::inference::{load_run, run_experiment, FallbackPolicy, RunOptions};
use caretag_core::metrics::report as eval_report;
use caretag_core::prompts::{format_transcript, render, render_training_instance, PromptStrategy};

#[derive(Parser)]
#[command(name = "caretag", version, about = "Prompting and evaluation harness for dementia caregiver tweet classification")]
struct Cli {
    /// Base random seed for balancing, exports, and run records.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Field delimiter of dataset files ("tab" or a single character).
    #[arg(long, global = true, default_value = "tab")]
    delimiter: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArg {
    /// Dataset file with id, text, label columns.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Print the class distribution of a split.
    Inspect(DataArg),
    /// Oversample to exact class balance and emit the balanced split.
    Balance {
        #[command(flatten)]
        data: DataArg,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one example under one strategy to stdout.
    Render {
        #[arg(long)]
        strategy: PromptStrategy,
        /// Tweet text to render directly.
        #[arg(long, conflicts_with = "data")]
        text: Option<String>,
        /// Dataset file to pull the example from (with --id).
        #[arg(long, requires = "id")]
        data: Option<PathBuf>,
        /// Id of the example inside --data.
        #[arg(long)]
        id: Option<String>,
        /// Render the SFT training conversation instead of the inference prompt.
        #[arg(long)]
        training: bool,
        /// Gold label for --text with --training.
        #[arg(long, default_value_t = 1)]
        label: u8,
    },
    /// Run a strategy over a split and persist the run record.
    Run {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        strategy: PromptStrategy,
        /// Run directory for manifest.json and predictions.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Use the deterministic in-process keyword stub.
        #[arg(long)]
        stub: bool,
        /// JSON file with the HTTP backend configuration.
        #[arg(long, conflicts_with = "stub")]
        backend_config: Option<PathBuf>,
        /// Override the credential environment variable name.
        #[arg(long)]
        api_key_env: Option<String>,
        /// What to do with unparseable completions.
        #[arg(long, default_value = "default-pos")]
        fallback: String,
        /// Issue the cascade's third turn and cross-check the model's label.
        #[arg(long)]
        label_turn: bool,
    },
    /// Evaluate a persisted run: confusion counts, per-class P/R/F1, macro F1.
    Eval {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Error analysis: false positives/negatives with keyword statistics.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        data: DataArg,
        /// JSON file overriding the default keyword lexicon.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Export the instruction-tuning dataset, one JSON record per line.
    ExportSft {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        strategy: PromptStrategy,
        #[arg(long, default_value_t = 5)]
        epochs: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit the training-configuration manifest for a fine-tuning job.
    EmitConfig {
        #[arg(long, default_value = "paper_default")]
        preset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn input_format(delimiter: &str) -> Result<InputFormat> {
    let delimiter = match delimiter {
        "tab" | "\\t" => b'\t',
        s if s.chars().count() == 1 && s.is_ascii() => s.as_bytes()[0],
        other => bail!("delimiter must be \"tab\" or a single ASCII character, got {other:?}"),
    };
    Ok(InputFormat { delimiter })
}

fn load(data: &PathBuf, format: InputFormat) -> Result<DatasetSplit> {
    let name = data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "split".into());
    Ok(load_split(data, name, format)?)
}

fn write_split(split: &DatasetSplit, delimiter: u8, out: Option<&PathBuf>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new());
    writer.write_record(["id", "text", "label"])?;
    for e in &split.examples {
        writer.write_record([e.id.as_str(), e.text.as_str(), e.label.as_str()])?;
    }
    let bytes = writer.into_inner()?;
    match out {
        Some(path) => std::fs::write(path, bytes)?,
        None => print!("{}", String::from_utf8(bytes)?),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let format = input_format(&cli.delimiter)?;

    match cli.command {
        Command::Inspect(DataArg { data }) => {
            let split = load(&data, format)?;
            let d = distribution(&split);
            println!("split: {}", split.name);
            println!("label 1: {}", d.count_pos);
            println!("label 0: {}", d.count_neg);
            println!("total:   {}", d.total);
        }
        Command::Balance { data, out } => {
            let split = load(&data.data, format)?;
            let balanced = balance_epoch(&split, cli.seed)?;
            write_split(&balanced, format.delimiter, out.as_ref())?;
        }
        Command::Render { strategy, text, data, id, training, label } => {
            let example = match (text, data) {
                (Some(text), _) => {
                    LabeledExample::new("adhoc", text, Label::try_from(label).map_err(anyhow::Error::msg)?)
                }
                (None, Some(data)) => {
                    let split = load(&data, format)?;
                    let id = id.unwrap();
                    split
                        .examples
                        .iter()
                        .find(|e| e.id == id)
                        .with_context(|| format!("no example with id {id:?}"))?
                        .clone()
                }
                (None, None) => bail!("provide --text or --data with --id"),
            };
            let messages = if training {
                render_training_instance(strategy, &example)?.messages
            } else {
                render(strategy, &example)?.messages
            };
            print!("{}", format_transcript(&messages));
        }
        Command::Run {
            data,
            strategy,
            out,
            stub,
            backend_config,
            api_key_env,
            fallback,
            label_turn,
        } => {
            let split = load(&data.data, format)?;
            let fallback = match fallback.as_str() {
                "default-pos" | "default-1" => FallbackPolicy::DefaultTo(Label::Pos),
                "default-neg" | "default-0" => FallbackPolicy::DefaultTo(Label::Neg),
                "error-out" => FallbackPolicy::ErrorOut,
                other => bail!("unknown fallback policy {other:?}"),
            };

            let (backend, snapshot): (Box<dyn ChatBackend>, serde_json::Value) = if stub {
                let rule = StubRule::default();
                let snapshot = serde_json::json!({"backend": "stub", "rule": rule});
                (Box::new(StubBackend::new(rule)), snapshot)
            } else {
                let path = backend_config
                    .context("provide --backend-config FILE or --stub")?;
                let raw = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let mut config: BackendConfig = serde_json::from_str(&raw)?;
                if let Some(var) = api_key_env {
                    config.api_key_ref = var;
                }
                let snapshot = serde_json::to_value(&config)?;
                (Box::new(HttpBackend::new(config)?), snapshot)
            };

            let options = RunOptions {
                fallback,
                seed: cli.seed,
                cascade: CascadeOptions { issue_label_turn: label_turn },
                max_parallel: snapshot
                    .get("max_parallel")
                    .and_then(|v| v.as_u64())
                    .unwrap_or(1) as usize,
                run_dir: Some(out.clone()),
                config_snapshot: snapshot,
            };
            let record = run_experiment(backend.as_ref(), strategy, &split, &options)?;
            println!(
                "run {} complete: {} predictions in {}",
                record.run_id,
                record.predictions.len(),
                out.display()
            );
        }
        Command::Eval { run, json } => {
            let record = load_run(&run)?;
            let report = eval_report(&record.predictions)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("run {} ({} / {})", record.run_id, record.strategy, record.model_name);
                println!("{report}");
            }
        }
        Command::Report { run, data, lexicon, json } => {
            let record = load_run(&run)?;
            let split = load(&data.data, format)?;
            let lexicon = match lexicon {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => Lexicon::default(),
            };
            let report = build_error_report(&record, &split, &lexicon)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.digest());
            }
        }
        Command::ExportSft { data, strategy, epochs, out } => {
            let split = load(&data.data, format)?;
            let summary = export_sft_dataset(&split, strategy, epochs, cli.seed, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::EmitConfig { preset, out } => {
            let config = emit_train_config(&preset)?;
            let rendered = serde_json::to_string_pretty(&config)?;
            match out {
                Some(path) => std::fs::write(path, rendered)?,
                None => println!("{rendered}"),
            }
        }
    }
    Ok(())
}
