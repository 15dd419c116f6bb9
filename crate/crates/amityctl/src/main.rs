use std::io::{self, IsTerminal};
use std::path::PathBuf;
use std::process::ExitCode;

use amityctl::{cmd_chat, cmd_eval, cmd_seed, cmd_serve, cmd_train, load_bot, ServeOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "amityctl", version, about = "Train, evaluate and serve the AMITY chatbot and peer-support chat")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the intent classifier and write a model artifact
    Train {
        /// Intent corpus JSON (defaults to the bundled sample corpus)
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a model on a tab-separated `utterance<TAB>tag` file
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        evalset: PathBuf,
    },
    /// Run the HTTP/WebSocket server until interrupted
    Serve {
        /// Store directory (created if absent)
        #[arg(long)]
        store: PathBuf,
        /// Model artifact; without it the chatbot endpoint answers 503
        #[arg(long)]
        model: Option<PathBuf>,
        /// Corpus the model was trained on (defaults to the bundled corpus)
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Seed for reply selection
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Load suggestions and doctor profiles from a content JSON file
    Seed {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        content: PathBuf,
    },
    /// Chat with a model on stdin/stdout
    Chat {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Train { corpus, out: path, epochs, seed } => {
            cmd_train(corpus.as_deref(), &path, epochs, seed, &mut out)
        }
        Command::Eval { model, evalset } => cmd_eval(&model, &evalset, &mut out),
        Command::Seed { store, content } => cmd_seed(&store, &content, &mut out),
        Command::Chat { model, corpus, seed } => {
            let bot = load_bot(&model, corpus.as_deref())?;
            let stdin = io::stdin();
            let prompt = stdin.is_terminal();
            cmd_chat(&bot, seed, stdin.lock(), &mut out, prompt)
        }
        Command::Serve { store, model, corpus, addr, seed } => {
            drop(out);
            tracing_subscriber::fmt().with_writer(io::stderr).init();
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(cmd_serve(
                ServeOptions {
                    store: &store,
                    model: model.as_deref(),
                    corpus: corpus.as_deref(),
                    addr: &addr,
                    seed,
                },
                &mut io::stdout(),
            ))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
