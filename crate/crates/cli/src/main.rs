use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use rxcheck::dosage::{self, build_graph_with_report, load_graph, recommend, save_graph, DosageError, DosageGraph};
use rxcheck::evaluation::{self, predictions_from_report_json, score, EvalError, MetricsReport};
use rxcheck::gateway::{GatewayConfig, GatewayError, LmGateway, ProviderKind, StubProvider};
use rxcheck::icd::MatchMode;
use rxcheck::interaction::{load_interactions, summarize, InteractionError, StubEmbedder, TripletIndex};
use rxcheck::model::{AgeGroup, PrescriptionCase, DEFAULT_ADULT_AGE};
use rxcheck::monograph::{compute_stats, load_monographs, save_monographs, DrugMonograph, MonographError};
use rxcheck::pipeline::extract::{structure_prescription, ExtractionError};
use rxcheck::pipeline::{Corpus, InteractionGrounding, PipelineError, VerificationReport, Verifier, VerifierConfig};

#[derive(Parser, Debug)]
#[command(name = "rxcheck", version, about = "Verify prescriptions against drug monographs")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Gateway config file (TOML)
    #[arg(long, global = true, env = "RXCHECK_CONFIG")]
    config: Option<PathBuf>,

    /// Override the configured language-model provider
    #[arg(long, global = true, value_enum)]
    provider: Option<Provider>,

    /// Override the configured parameter profile
    #[arg(long, global = true)]
    profile: Option<String>,

    /// ICD-10 lookup table for the stub provider (JSON object of name -> codes)
    #[arg(long, global = true)]
    icd_map: Option<PathBuf>,

    /// Human-readable text instead of JSON
    #[arg(long, global = true)]
    pretty: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Provider {
    Stub,
    Disabled,
    OpenaiCompatible,
}

impl From<Provider> for ProviderKind {
    fn from(p: Provider) -> Self {
        match p {
            Provider::Stub => ProviderKind::Stub,
            Provider::Disabled => ProviderKind::Disabled,
            Provider::OpenaiCompatible => ProviderKind::OpenaiCompatible,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean raw monographs and report corpus statistics
    Ingest {
        #[arg(long)]
        monographs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Build the dosage knowledge graph and save it to a directory
    BuildKg {
        #[arg(long)]
        monographs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Verify one case file, or every case in a directory
    Verify {
        /// Case file (JSON or labeled text) or a directory of them
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        monographs: PathBuf,
        /// Saved graph; built from the monographs when absent
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Interaction triplets used to ground the review
        #[arg(long)]
        interactions: Option<PathBuf>,
        /// Accept an ingredient when any usage category is diagnosed
        #[arg(long)]
        any_overlap: bool,
        /// Send each case to the evaluation prompt as well
        #[arg(long)]
        lm_review: bool,
        /// Worker threads for directory input
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, default_value_t = DEFAULT_ADULT_AGE)]
        adult_age: u32,
        /// Also write one <case_id>.json report per case here
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Score saved reports against gold labels
    Evaluate {
        /// Report file or directory of report files
        #[arg(long)]
        reports: PathBuf,
        /// JSON list of {case_id, ingredient, label}
        #[arg(long)]
        gold: PathBuf,
    },

    /// Recommended dosages for an ingredient, disease and age
    RetrieveDose {
        #[arg(long, required_unless_present = "graph")]
        monographs: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        ingredient: String,
        #[arg(long)]
        disease: String,
        #[arg(long)]
        age: f64,
        #[arg(long, default_value_t = DEFAULT_ADULT_AGE)]
        adult_age: u32,
    },

    /// Nearest interaction triplets for a query
    Interactions {
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(short, default_value_t = 3)]
        k: usize,
        /// Summarize the hits through the gateway
        #[arg(long)]
        summarize: bool,
    },
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Gateway(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Gateway(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn to_json(&self) -> String {
        let (kind, message) = match self {
            CliError::Input(m) => ("input", m),
            CliError::Gateway(m) => ("gateway", m),
            CliError::Internal(m) => ("internal", m),
        };
        json!({ "error": kind, "message": message, "exit_code": self.code() }).to_string()
    }
}

impl From<MonographError> for CliError {
    fn from(e: MonographError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        CliError::Gateway(e.to_string())
    }
}

impl From<DosageError> for CliError {
    fn from(e: DosageError) -> Self {
        match e {
            DosageError::Gateway(g) => g.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<InteractionError> for CliError {
    fn from(e: InteractionError) -> Self {
        match e {
            InteractionError::Gateway(g) => g.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ExtractionError> for CliError {
    fn from(e: ExtractionError) -> Self {
        match e {
            ExtractionError::Gateway(g) => g.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Input(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = serde_json::ser::PrettyFormatter::with_indent(b"    ");
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    String::from_utf8(buf).map_err(|e| CliError::Internal(e.to_string()))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{what} {} does not exist", path.display())))
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn gateway(global: &Global) -> Result<LmGateway> {
    let mut config = match &global.config {
        Some(path) => GatewayConfig::from_file(path)?,
        None => GatewayConfig::default(),
    };
    if let Some(p) = global.provider {
        config.provider = p.into();
    }
    if let Some(p) = &global.profile {
        config.profile = p.clone();
    }
    let mut stub = StubProvider::new();
    if let Some(path) = &global.icd_map {
        require(path, "ICD map")?;
        stub = stub.with_icd_mapping_file(path)?;
    }
    Ok(config.build(stub)?)
}

fn monographs(path: &Path) -> Result<Vec<DrugMonograph>> {
    require(path, "monograph file")?;
    Ok(load_monographs(path)?)
}

fn graph_for(ms: &[DrugMonograph], saved: Option<&Path>, gw: &LmGateway) -> Result<DosageGraph> {
    match saved {
        Some(dir) => {
            require(dir, "graph directory")?;
            Ok(load_graph(dir)?)
        }
        None => Ok(build_graph_with_report(ms, gw)?.0),
    }
}

/// Case files in a directory, sorted by name.
fn case_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|x| x.to_str()), Some("json" | "txt")))
        .collect();
    files.sort();
    Ok(files)
}

fn load_case(path: &Path, gw: &LmGateway) -> Result<PrescriptionCase> {
    let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("case");
    Ok(structure_prescription(&read(path)?, gw)?.into_case(fallback))
}

fn ingest(monographs_path: &Path, out: &Path) -> Result<String> {
    let ms = monographs(monographs_path)?;
    save_monographs(&ms, out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    let stats = compute_stats(&ms);
    to_json(&json!({
        "output": out.display().to_string(),
        "stats": stats,
        "mean_versatility": stats.mean_versatility(),
    }))
}

fn build_kg(global: &Global, monographs_path: &Path, out: &Path) -> Result<String> {
    let ms = monographs(monographs_path)?;
    let gw = gateway(global)?;
    let (graph, skipped) = build_graph_with_report(&ms, &gw)?;
    fs::create_dir_all(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    save_graph(&graph, out)?;
    to_json(&json!({
        "out": out.display().to_string(),
        "nodes": graph.nodes().len(),
        "edges": graph.edges().len(),
        "skipped": skipped,
    }))
}

#[allow(clippy::too_many_arguments)]
fn verify(
    global: &Global,
    case: &Path,
    monographs_path: &Path,
    graph: Option<&Path>,
    interactions: Option<&Path>,
    config: VerifierConfig,
    parallel: usize,
    out: Option<&Path>,
) -> Result<String> {
    require(case, "case path")?;
    if let Some(p) = interactions {
        require(p, "interaction file")?;
    }
    let ms = monographs(monographs_path)?;
    let gw = gateway(global)?;
    let graph = graph_for(&ms, graph, &gw)?;
    let grounding = match interactions {
        Some(p) => {
            let embedder = StubEmbedder::default();
            let index = TripletIndex::build(load_interactions(p)?, &embedder)?;
            Some(InteractionGrounding {
                index,
                embedder: Box::new(embedder),
            })
        }
        None => None,
    };
    let is_batch = case.is_dir();
    let files = if is_batch {
        case_files(case)?
    } else {
        vec![case.to_path_buf()]
    };
    let cases = files.iter().map(|f| load_case(f, &gw)).collect::<Result<Vec<_>>>()?;
    let mut verifier = Verifier::new(Corpus::new(ms), graph, gw).with_config(config);
    if let Some(g) = grounding {
        verifier = verifier.with_interactions(g);
    }
    let reports = verifier.verify_batch(&cases, parallel)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        for r in &reports {
            write(&dir.join(format!("{}.json", r.case_id)), &r.to_json())?;
        }
    }
    if global.pretty {
        return Ok(reports
            .iter()
            .map(VerificationReport::to_text)
            .collect::<Vec<_>>()
            .join("\n"));
    }
    match (is_batch, reports.as_slice()) {
        (false, [single]) => Ok(single.to_json()),
        _ => to_json(&reports),
    }
}

fn evaluate(global: &Global, reports: &Path, gold: &Path) -> Result<String> {
    require(reports, "report path")?;
    require(gold, "gold file")?;
    let files = if reports.is_dir() {
        let mut f = case_files(reports)?;
        f.retain(|p| p.extension().is_some_and(|x| x == "json"));
        f
    } else {
        vec![reports.to_path_buf()]
    };
    let mut predictions = Vec::new();
    for f in &files {
        predictions.extend(predictions_from_report_json(&read(f)?, f)?);
    }
    let gold = evaluation::load_labels(gold)?;
    let report = MetricsReport::new(score(&predictions, &gold)?)?;
    if global.pretty {
        Ok(report.to_text())
    } else {
        to_json(&report)
    }
}

fn retrieve_dose(
    global: &Global,
    monographs_path: Option<&Path>,
    graph: Option<&Path>,
    ingredient: &str,
    disease: &str,
    age: f64,
    adult_age: u32,
) -> Result<String> {
    if !age.is_finite() || age < 0.0 {
        return Err(CliError::Input(format!("invalid age {age}")));
    }
    let gw = gateway(global)?;
    let ms = match monographs_path {
        Some(p) => monographs(p)?,
        None => Vec::new(),
    };
    let graph = graph_for(&ms, graph, &gw)?;
    let group = AgeGroup::from_age(age, adult_age);
    let rec = recommend(&graph, ingredient, group, disease, age, &gw)?;
    if !global.pretty {
        return to_json(&json!({ "ingredient": ingredient, "age_group": group, "recommendation": rec }));
    }
    Ok(match &rec {
        dosage::Recommendation::Found { disease, dosages } => {
            let mut lines = vec![format!("{ingredient} / {disease} ({})", group.graph_label())];
            for d in dosages {
                let tag = if d.baseline { "baseline" } else { "specific" };
                lines.push(format!("  [{tag}] {}", d.dosage_text));
            }
            lines.join("\n")
        }
        dosage::Recommendation::NoInformation { reason } => format!("no information: {reason}"),
    })
}

fn interactions(global: &Global, path: &Path, query: &str, k: usize, summarize_hits: bool) -> Result<String> {
    require(path, "interaction file")?;
    let embedder = StubEmbedder::default();
    let index = TripletIndex::build(load_interactions(path)?, &embedder)?;
    let hits = index.retrieve(query, &embedder, k)?;
    let summary = if summarize_hits {
        let gw = gateway(global)?;
        let triplets: Vec<_> = hits.iter().map(|h| h.triplet).collect();
        Some(summarize(&triplets, &gw)?)
    } else {
        None
    };
    if global.pretty {
        let mut lines: Vec<String> = hits
            .iter()
            .map(|h| format!("{:.4}  {}", h.score, h.triplet.render()))
            .collect();
        if let Some(s) = summary {
            lines.push(String::new());
            lines.push(s);
        }
        return Ok(lines.join("\n"));
    }
    to_json(&json!({ "query": query, "k": k, "results": hits, "summary": summary }))
}

fn run(cli: Cli) -> Result<String> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest { monographs, out } => ingest(&monographs, &out),
        Command::BuildKg { monographs, out } => build_kg(g, &monographs, &out),
        Command::Verify {
            case,
            monographs,
            graph,
            interactions,
            any_overlap,
            lm_review,
            parallel,
            adult_age,
            out,
        } => {
            let config = VerifierConfig {
                match_mode: if any_overlap {
                    MatchMode::AnyOverlap
                } else {
                    MatchMode::AllUsages
                },
                lm_review,
                adult_threshold: adult_age,
                ..VerifierConfig::default()
            };
            verify(
                g,
                &case,
                &monographs,
                graph.as_deref(),
                interactions.as_deref(),
                config,
                parallel,
                out.as_deref(),
            )
        }
        Command::Evaluate { reports, gold } => evaluate(g, &reports, &gold),
        Command::RetrieveDose {
            monographs,
            graph,
            ingredient,
            disease,
            age,
            adult_age,
        } => retrieve_dose(
            g,
            monographs.as_deref(),
            graph.as_deref(),
            &ingredient,
            &disease,
            age,
            adult_age,
        ),
        Command::Interactions {
            interactions: path,
            query,
            k,
            summarize,
        } => interactions(g, &path, &query, k, summarize),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code())
        }
    }
}
