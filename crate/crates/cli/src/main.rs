use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use longdoc::analysis::{profile_layers, run_niah, select_layers, HaystackSpec};
use longdoc::attnscore::Strategy;
use longdoc::config::PipelineConfig;
use longdoc::corpus::{load_dataset, segment_document, write_dataset};
use longdoc::eval::run_eval;
use longdoc::fixtures::{
    planted_layer_profile, planted_niah, planted_retrieval, PlantedOptions, ProfileOptions,
};
use longdoc::retrieve::ViewMode;

/// Long-document paragraph retrieval from attention, embeddings and entities.
#[derive(Parser)]
#[command(name = "longdoc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Retrieve paragraphs for one document, or for every sample of a dataset.
    Retrieve(RetrieveArgs),
    /// Paragraph-level F-1 over a dataset for each k.
    Eval(EvalArgs),
    /// Rank gold paragraphs per layer and subquery; select the best layers.
    AnalyzeLayers(AnalyzeArgs),
    /// Needle-in-a-haystack head counts per depth and layer.
    Niah(NiahArgs),
    /// Generate synthetic datasets with scripted-backend fixtures.
    Fixtures(FixtureArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Ablation {
    AttnOnly,
    EmbOnly,
    NoEntity,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    None,
    Chunked,
    Cascading,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    ablation: Option<Ablation>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RetrieveArgs {
    #[command(flatten)]
    common: Common,
    /// Plain-text document; paragraphs are separated by blank lines.
    #[arg(long, conflicts_with = "dataset", requires = "query")]
    document: Option<PathBuf>,
    #[arg(long)]
    query: Option<String>,
    /// JSONL dataset; prints one result line per sample.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated k values.
    #[arg(long, alias = "k", value_delimiter = ',', default_value = "1,2,3,5")]
    ks: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Layers to profile; defaults to every layer of the attention backend.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NiahArgs {
    #[command(flatten)]
    common: Common,
    /// TOML haystack spec: filler, needle, question, depths, target_tokens.
    #[arg(long)]
    spec: PathBuf,
    /// Layers to probe; defaults to the configured retrieval layers.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    /// Single-gold samples with planted attention and embedding signal.
    Planted,
    /// Multi-hop samples whose subqueries peak at chosen layers.
    Profile,
    /// Needle sweep attention for a haystack spec.
    Niah,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(value_enum)]
    kind: FixtureKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    min_paragraphs: Option<usize>,
    #[arg(long)]
    max_paragraphs: Option<usize>,
    #[arg(long)]
    num_layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    /// Profile: best layer of each subquery.
    #[arg(long, value_delimiter = ',')]
    best_layers: Option<Vec<usize>>,
    /// Niah: haystack spec file.
    #[arg(long, required_if_eq("kind", "niah"))]
    spec: Option<PathBuf>,
    /// Niah: `layer:heads` pairs of needle-attending heads.
    #[arg(long, value_delimiter = ',')]
    plant: Vec<String>,
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(s) = common.strategy {
        cfg.retrieval.long_context.strategy = match s {
            StrategyArg::None => Strategy::None,
            StrategyArg::Chunked => Strategy::Chunked,
            StrategyArg::Cascading => Strategy::Cascading,
        };
    }
    match common.ablation {
        Some(Ablation::AttnOnly) => cfg.retrieval.view = ViewMode::AttnOnly,
        Some(Ablation::EmbOnly) => cfg.retrieval.view = ViewMode::EmbOnly,
        Some(Ablation::NoEntity) => cfg.retrieval.entity_expansion = false,
        None => {}
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_path(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.paths.dataset.clone())
        .ok_or_else(|| {
            longdoc::Error::Config("no dataset given (--dataset or paths.dataset)".into()).into()
        })
}

fn output_dir(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = flag
        .clone()
        .or_else(|| cfg.paths.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("longdoc-out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_retrieve(args: RetrieveArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let retriever = cfg.build_retriever()?;
    let k = args.k.unwrap_or(cfg.retrieval.k);
    if let Some(path) = &args.document {
        let text = fs::read_to_string(path)
            .map_err(|e| longdoc::Error::Config(format!("{}: {e}", path.display())))?;
        let doc = segment_document(&text, &cfg.segmentation)?;
        let query = args
            .query
            .as_deref()
            .expect("clap requires --query with --document");
        let trace = retriever.trace(&doc, query, k)?;
        println!("{}", trace.result.to_json(&trace.index));
        return Ok(());
    }
    let path = dataset_path(&args.dataset, &cfg)?;
    let mut out = std::io::stdout().lock();
    for sample in load_dataset(&path, &cfg.segmentation)? {
        let query = args.query.as_deref().unwrap_or(&sample.query);
        let trace = retriever.trace(&sample.document, query, k)?;
        let mut json = trace.result.to_json(&trace.index);
        json["sample_id"] = sample.sample_id.clone().into();
        writeln!(out, "{json}")?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let samples = load_dataset(dataset_path(&args.dataset, &cfg)?, &cfg.segmentation)?;
    let report = run_eval(&samples, &cfg, &args.ks)?;
    let dir = output_dir(&args.out, &cfg)?;
    write(
        &dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write(&dir.join("report.csv"), report.csv())?;
    for id in &report.failed_ids {
        eprintln!("sample {id} failed; scored 0");
    }
    print!("{}", report.table());
    Ok(())
}

fn cmd_analyze_layers(args: AnalyzeArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let samples = load_dataset(dataset_path(&args.dataset, &cfg)?, &cfg.segmentation)?;
    let backend = cfg.attention_backend()?;
    let layers = args
        .layers
        .unwrap_or_else(|| (0..backend.num_layers()).collect());
    let profile = profile_layers(&samples, &*backend, &layers)?;
    let selected = select_layers(&profile);
    let dir = output_dir(&args.out, &cfg)?;
    let json = serde_json::json!({
        "selected_layers": selected,
        "profile": profile,
        "config_fingerprint": cfg.fingerprint(),
    });
    write(
        &dir.join("layer_profile.json"),
        serde_json::to_string_pretty(&json)?,
    )?;
    write(&dir.join("layer_ranks.csv"), profile.csv())?;
    println!("{}", serde_json::json!({ "selected_layers": selected }));
    Ok(())
}

fn cmd_niah(args: NiahArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| longdoc::Error::Config(format!("{}: {e}", args.spec.display())))?;
    let spec: HaystackSpec = toml::from_str(&text)
        .map_err(|e| longdoc::Error::Config(format!("{}: {e}", args.spec.display())))?;
    let backend = cfg.attention_backend()?;
    let layers = args.layers.unwrap_or_else(|| cfg.retrieval.layers.clone());
    let rows = run_niah(&*backend, &spec, &layers, &cfg.retrieval.long_context)?;
    let mut csv = String::from("depth,layer,head_count,heads,doc_tokens\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.depth, r.layer, r.head_count, r.heads, r.doc_tokens
        ));
    }
    let dir = output_dir(&args.out, &cfg)?;
    write(&dir.join("niah.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn scripted_config(layers: &[usize], extra: &str, with_dataset: bool) -> String {
    let dataset = if with_dataset {
        "dataset = \"dataset.jsonl\"\n"
    } else {
        ""
    };
    format!(
        "[attention]\nbackend = \"scripted\"\nfixture = \"fixture.json\"\n\n{extra}[retrieval]\nlayers = {layers:?}\n\n[paths]\n{dataset}output_dir = \"out\"\n"
    )
}

fn cmd_fixtures(args: FixtureArgs) -> Result<()> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let (fixture, config) = match args.kind {
        FixtureKind::Planted => {
            let d = PlantedOptions::default();
            let opts = PlantedOptions {
                samples: args.samples.unwrap_or(d.samples),
                num_layers: args.num_layers.unwrap_or(d.num_layers),
                heads: args.heads.unwrap_or(d.heads),
                min_paragraphs: args.min_paragraphs.unwrap_or(d.min_paragraphs),
                max_paragraphs: args
                    .max_paragraphs
                    .unwrap_or(d.max_paragraphs.max(args.min_paragraphs.unwrap_or(0))),
                ..d
            };
            let set = planted_retrieval(args.seed, &opts)?;
            write_dataset(args.out.join("dataset.jsonl"), &set.samples)?;
            let layers: Vec<usize> = (0..opts.num_layers).collect();
            let embedding = "[embedding]\nbackend = \"scripted\"\nfixture = \"fixture.json\"\n\n";
            (set.fixture, scripted_config(&layers, embedding, true))
        }
        FixtureKind::Profile => {
            let d = ProfileOptions::default();
            let opts = ProfileOptions {
                samples: args.samples.unwrap_or(d.samples),
                num_layers: args.num_layers.unwrap_or(d.num_layers),
                heads: args.heads.unwrap_or(d.heads),
                best_layers: args.best_layers.clone().unwrap_or(d.best_layers.clone()),
                ..d
            };
            let set = planted_layer_profile(args.seed, &opts)?;
            write_dataset(args.out.join("dataset.jsonl"), &set.samples)?;
            (set.fixture, scripted_config(&opts.best_layers, "", true))
        }
        FixtureKind::Niah => {
            let spec_path = args.spec.as_ref().expect("clap requires --spec for niah");
            let text = fs::read_to_string(spec_path)
                .with_context(|| format!("reading {}", spec_path.display()))?;
            let spec: HaystackSpec =
                toml::from_str(&text).map_err(|e| longdoc::Error::Config(e.to_string()))?;
            let mut planted = Vec::new();
            for p in &args.plant {
                let Some((l, c)) = p.split_once(':') else {
                    bail!(longdoc::Error::Config(format!(
                        "--plant expects layer:heads, got {p:?}"
                    )));
                };
                let parse = |s: &str| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|e| longdoc::Error::Config(format!("--plant {p:?}: {e}")))
                };
                planted.push((parse(l)?, parse(c)?));
            }
            let num_layers = args.num_layers.unwrap_or(8);
            let fixture = planted_niah(
                args.seed,
                &spec,
                num_layers,
                args.heads.unwrap_or(8),
                &planted,
            )?;
            let layers: Vec<usize> = (0..num_layers).collect();
            write(&args.out.join("haystack.toml"), &text)?;
            (fixture, scripted_config(&layers, "", false))
        }
    };
    fixture.save(args.out.join("fixture.json"))?;
    write(&args.out.join("config.toml"), config)?;
    println!(
        "{}",
        serde_json::json!({ "out": args.out, "fixture": "fixture.json", "config": "config.toml" })
    );
    Ok(())
}

/// 2 for configuration and input errors, 3 for backend failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<longdoc::Error>() {
        Some(e) if e.is_backend_failure() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::AnalyzeLayers(a) => cmd_analyze_layers(a),
        Command::Niah(a) => cmd_niah(a),
        Command::Fixtures(a) => cmd_fixtures(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe (`| head`) is a normal way to stop reading.
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
