//! Subcommand implementations for `amityctl`. Each writes its report to the
//! given writer so it can be driven from tests as well as from `main`.

use std::fs;
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::Path;

use amity_core::corpus::{explode_patterns, load_corpus};
use amity_core::neuralnet::{evaluate, load_model, save_model, train, Architecture, EvalError};
use amity_core::{ChatSession, Dazai, IntentCorpus, TrainConfig};
use amity_server::content::parse_content;
use amity_server::{serve, Event, Gateway, GatewayConfig, Store};
use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The given corpus file, or the bundled sample corpus.
pub fn corpus_or_bundled(path: Option<&Path>) -> Result<IntentCorpus> {
    match path {
        Some(p) => load_corpus(p).with_context(|| format!("loading corpus {}", p.display())),
        None => Ok(IntentCorpus::bundled()),
    }
}

/// Loads a model artifact and pairs it with its corpus's response pools.
pub fn load_bot(model: &Path, corpus: Option<&Path>) -> Result<Dazai> {
    let corpus = corpus_or_bundled(corpus)?;
    let model = load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    Dazai::new(model, &corpus).context("model does not match corpus")
}

pub fn cmd_train(
    corpus: Option<&Path>,
    out: &Path,
    epochs: Option<usize>,
    seed: Option<u64>,
    w: &mut impl Write,
) -> Result<()> {
    let corpus = corpus_or_bundled(corpus)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            bail!("output directory {} does not exist", dir.display());
        }
    }
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        epochs: epochs.unwrap_or(defaults.epochs),
        seed: seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let outcome = train(&corpus, &Architecture::default(), &config)?;

    writeln!(w, "epoch  loss      train_acc")?;
    for e in &outcome.history {
        writeln!(w, "{:>5}  {:<8.4}  {:.4}", e.epoch, e.loss, e.accuracy)?;
    }
    let accuracy = match outcome.final_accuracy() {
        Some(a) => a,
        None => {
            let samples: Vec<(String, String)> = explode_patterns(&corpus)
                .into_iter()
                .map(|s| (s.text, corpus.intents[s.tag_index].tag.clone()))
                .collect();
            evaluate(&outcome.model, &samples)?.accuracy
        }
    };
    save_model(&outcome.model, out).with_context(|| format!("writing {}", out.display()))?;
    writeln!(w, "epochs={} train_acc={accuracy:.4}", config.epochs)?;
    Ok(())
}

/// One evaluation item and the 1-based line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalItem {
    pub utterance: String,
    pub tag: String,
    pub line: usize,
}

/// Parses `utterance<TAB>expected_tag` lines; blank lines are skipped.
pub fn parse_evalset(text: &str) -> Result<Vec<EvalItem>> {
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let (utterance, tag) = raw
            .rsplit_once('\t')
            .ok_or_else(|| anyhow!("line {}: expected <utterance><TAB><tag>", i + 1))?;
        let (utterance, tag) = (utterance.trim(), tag.trim());
        if utterance.is_empty() || tag.is_empty() {
            bail!("line {}: utterance and tag must both be non-empty", i + 1);
        }
        items.push(EvalItem {
            utterance: utterance.to_string(),
            tag: tag.to_string(),
            line: i + 1,
        });
    }
    Ok(items)
}

pub fn cmd_eval(model: &Path, evalset: &Path, w: &mut impl Write) -> Result<()> {
    let model = load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    let text = fs::read_to_string(evalset).with_context(|| format!("reading {}", evalset.display()))?;
    let items = parse_evalset(&text)?;
    let pairs: Vec<(&str, &str)> = items.iter().map(|i| (i.utterance.as_str(), i.tag.as_str())).collect();
    let report = evaluate(&model, &pairs).map_err(|e| match e {
        EvalError::UnknownTag { tag, index } => {
            anyhow!("line {}: unknown tag {tag:?}", items[index].line)
        }
        other => other.into(),
    })?;
    writeln!(w, "{}", report.summary())?;
    write!(w, "{}", report.table())?;
    Ok(())
}

pub fn cmd_seed(store: &Path, content: &Path, w: &mut impl Write) -> Result<()> {
    let text = fs::read_to_string(content).with_context(|| format!("reading {}", content.display()))?;
    let content = parse_content(&text)?;
    let mut store = Store::open(store).with_context(|| format!("opening store {}", store.display()))?;
    let (plans, doctors) = (content.suggestions.len(), content.doctors.len());
    store.append(Event::ContentSeeded(content))?;
    writeln!(w, "seeded {plans} suggestion plans and {doctors} doctors")?;
    Ok(())
}

/// Line-by-line chat against a local model until EOF or `quit`.
pub fn cmd_chat(
    bot: &Dazai,
    seed: Option<u64>,
    input: impl BufRead,
    w: &mut impl Write,
    prompt: bool,
) -> Result<()> {
    let mut rng = match seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s),
        None => ChaCha8Rng::from_entropy(),
    };
    let mut session = ChatSession::new("local");
    let mut clock = 0;
    if prompt {
        write!(w, "you: ")?;
        w.flush()?;
    }
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        if matches!(text, "quit" | "exit") {
            break;
        }
        if !text.is_empty() {
            clock += 1;
            let reply = bot.respond(&mut session, text, &mut rng, clock);
            writeln!(w, "dazai: {}", reply.reply)?;
        }
        if prompt {
            write!(w, "you: ")?;
        }
        w.flush()?;
    }
    Ok(())
}

pub struct ServeOptions<'a> {
    pub store: &'a Path,
    pub model: Option<&'a Path>,
    pub corpus: Option<&'a Path>,
    pub addr: &'a str,
    pub seed: Option<u64>,
}

/// Runs the gateway until SIGINT or SIGTERM.
pub async fn cmd_serve(opts: ServeOptions<'_>, w: &mut (impl Write + Send)) -> Result<()> {
    let addr: SocketAddr = opts
        .addr
        .parse()
        .with_context(|| format!("invalid listen address {:?}", opts.addr))?;
    let bot = opts.model.map(|m| load_bot(m, opts.corpus)).transpose()?;
    let store = Store::open(opts.store).with_context(|| format!("opening store {}", opts.store.display()))?;
    let events = store.last_seq();
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == io::ErrorKind::AddrInUse {
            anyhow!("address {addr} already in use")
        } else {
            anyhow!("binding {addr}: {e}")
        }
    })?;
    let gw = Gateway::new(
        store,
        bot,
        GatewayConfig {
            reply_seed: opts.seed,
            ..GatewayConfig::default()
        },
    )?;
    writeln!(
        w,
        "listening on {} ({events} events replayed, model {})",
        listener.local_addr()?,
        if gw.has_model() { "loaded" } else { "not loaded" }
    )?;
    w.flush()?;
    serve(listener, gw, shutdown_signal()).await?;
    writeln!(w, "shut down cleanly")?;
    Ok(())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = match signal(SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
                return;
            }
        };
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}
