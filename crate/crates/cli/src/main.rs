use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use edgejury_cli::commands::{self, STAT_REPORT_FILE};
use edgejury_cli::config::{BackendConfig, RunConfig};
use edgejury_core::evalharness::load_benchmark;
use edgejury_core::schemas::{Gold, McOption};
use edgejury_core::synthetic::SuiteOptions;
use edgejury_core::{Letter, MethodSpec, PricingModel, Question, QuestionKind};

#[derive(Parser)]
#[command(name = "edgejury", version, about = "Run and evaluate a four-stage small-model council")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Mock fixture file; switches the backend to mock mode.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Overrides `run_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the model-call parallelism bound.
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long, default_value = "edgejury-out")]
    out_dir: PathBuf,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(f) = &self.fixture {
            config.backend = BackendConfig::Mock { fixture: std::path::absolute(f)? };
        }
        if let Some(s) = self.seed {
            config.run_seed = s;
        }
        if let Some(p) = self.parallelism {
            config.parallelism = p;
            config.question_parallelism = p;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ask the council one question.
    Ask {
        #[command(flatten)]
        common: Common,
        /// Question text.
        question: Option<String>,
        /// Benchmark file to take the question from (first item, or --id).
        #[arg(long, conflicts_with = "question")]
        file: Option<PathBuf>,
        /// Question id; fixtures are keyed by it.
        #[arg(long)]
        id: Option<String>,
        /// Multiple-choice option text, repeated in letter order.
        #[arg(long = "option")]
        options: Vec<String>,
    },
    /// Evaluate methods on a benchmark.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        benchmark: PathBuf,
        /// Comma-separated: ej, ej-134, ej-124, ej-noroles, s1, sc<k>, mv, bo3.
        #[arg(long, value_delimiter = ',', default_value = "ej,s1,sc5,mv")]
        methods: Vec<MethodSpec>,
    },
    /// Run the ablation variants against the full council.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        benchmark: PathBuf,
    },
    /// Latency and usage tables from a trace file.
    Report {
        traces: PathBuf,
        /// Config whose pricing rate to use.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Recompute statistics from a results file without model calls.
    Replay {
        results: PathBuf,
        /// Bootstrap seed; defaults to the one in the run's manifest.
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the recomputed report; printed to stdout otherwise.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a synthetic benchmark, mock fixtures and a config.
    Synth {
        #[arg(long, default_value = "edgejury-demo")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        questions: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Include malformed outputs and failed calls.
        #[arg(long)]
        faults: bool,
    },
}

fn ask_question(question: Option<String>, file: Option<PathBuf>, id: Option<String>, options: Vec<String>) -> Result<Question> {
    if let Some(path) = file {
        let set = load_benchmark(&path, None).with_context(|| format!("loading {}", path.display()))?;
        let q = match &id {
            Some(id) => set.items.into_iter().find(|q| &q.id == id),
            None => set.items.into_iter().next(),
        };
        return q.with_context(|| format!("no matching question in {}", path.display()));
    }
    let Some(text) = question else { bail!("give a question or --file") };
    if options.len() > Letter::ALL.len() {
        bail!("at most {} options", Letter::ALL.len());
    }
    let mc = !options.is_empty();
    Ok(Question {
        id: id.unwrap_or_else(|| "ask".into()),
        category: "uncategorized".into(),
        kind: if mc { QuestionKind::MultipleChoice } else { QuestionKind::FreeForm },
        text,
        options: options.into_iter().zip(Letter::ALL).map(|(text, letter)| McOption { letter, text }).collect(),
        // Not scored.
        gold: if mc { Gold::Letter(Letter::A) } else { Gold::Answers(vec![]) },
    })
}

async fn run(cli: Cli) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Ask { common, question, file, id, options } => {
            let config = common.load()?;
            let q = ask_question(question, file, id, options)?;
            commands::ask(&config, &q, &common.out_dir, &mut out).await?;
        }
        Command::Eval { common, benchmark, methods } => {
            let config = common.load()?;
            let outcome = commands::eval("eval", &config, &benchmark, &methods, &common.out_dir).await?;
            commands::print_eval(&outcome, &mut out)?;
        }
        Command::Ablate { common, benchmark } => {
            let mut config = common.load()?;
            config.stats.reference = Some(MethodSpec::EJ_FULL.id());
            let variants = MethodSpec::ablation_variants();
            let outcome = commands::eval("ablate", &config, &benchmark, &variants, &common.out_dir).await?;
            commands::print_ablation(&outcome, &mut out)?;
        }
        Command::Report { traces, config } => {
            let pricing = match config {
                Some(p) => RunConfig::load(&p)?.pricing,
                None => PricingModel::default(),
            };
            commands::report(&traces, &pricing, &mut out)?;
        }
        Command::Replay { results, seed, out_dir } => {
            let mut options = commands::replay_options(&results)?;
            if let Some(s) = seed {
                options.seed = s;
            }
            let report = commands::replay(&results, &options)?;
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    commands::write_stat_report(&dir.join(STAT_REPORT_FILE), &report)?;
                }
                None => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
            }
        }
        Command::Synth { out_dir, questions, seed, faults } => {
            let opts = SuiteOptions { questions, seed, faults, ..SuiteOptions::default() };
            let paths = commands::synth(&out_dir, &opts)?;
            for p in [&paths.benchmark, &paths.seasons, &paths.fixtures, &paths.config] {
                writeln!(out, "wrote {}", display(p))?;
            }
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(tracing_subscriber::filter::LevelFilter::ERROR).init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
