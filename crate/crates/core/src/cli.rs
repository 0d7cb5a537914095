//! Command-line front end. Data goes to stdout, diagnostics to stderr.
//!
//! Exit codes: 0 on success, 1 when an analysis cannot produce a result,
//! 2 on usage or I/O errors.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{load_dataset, load_with_ocr, Cell, ImageRecord, LoadOptions, OcrToken, Report, ReportFormat, Table};
use crate::diagnostics::{
    collision_rate_with, confusion_matrices, divergence_analysis, vocabulary, Stopwords, TextMatcher,
};
use crate::error::{DatasetError, DiagnosticsError, FusionError, InventoryError, MetricsError};
use crate::fusion::{gradient_check, random_regions, text_row, EdgeType, FusionModel, GraphConfig, HashEmbedding, Instance, Loss};
use crate::metrics::{score_corpus, sensitivity_harness, CiderScale, ScoreOptions, ScoreReport, Tokenizer};
use crate::orthography::{normalize, strip_diacritics, tone_stripped};
use crate::phono::{analyze_token, build_tensor_with, FEATURE_NAMES};
use crate::syllable::SyllableInventory;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Dataset(_) | CliError::Inventory(_) => 2,
            CliError::Diagnostics(_) | CliError::Fusion(_) | CliError::Metrics(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Table,
    Delimited,
    Document,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Table => ReportFormat::Table,
            FormatArg::Delimited => ReportFormat::Delimited,
            FormatArg::Document => ReportFormat::Document,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TokenizerArg {
    Space,
    Character,
    Syllable,
}

impl From<TokenizerArg> for Tokenizer {
    fn from(t: TokenizerArg) -> Self {
        match t {
            TokenizerArg::Space => Tokenizer::Space,
            TokenizerArg::Character => Tokenizer::Character,
            TokenizerArg::Syllable => Tokenizer::Syllable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    X1,
    X10,
}

#[derive(Debug, Parser)]
#[command(name = "vitext", version, about = "Vietnamese scene-text analysis toolkit")]
struct Cli {
    /// Output layout.
    #[arg(long, value_enum, default_value = "table", global = true)]
    format: FormatArg,
    /// Syllable inventory file replacing the bundled one.
    #[arg(long, global = true)]
    inventory: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-token tone, base forms and syllable structure.
    Analyze(TokenInput),
    /// Pairwise phonological features of a token set.
    Features(TokenInput),
    /// Collision, divergence, error-type and text-usage analyses of a dataset.
    Diagnose(DiagnoseArgs),
    /// Runs the fusion model and reports text-to-text attention.
    Attention(AttentionArgs),
    /// BLEU, ROUGE-L and CIDEr of candidate captions against a dataset.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
struct TokenInput {
    tokens: Vec<String>,
    /// Whitespace-separated tokens read from a file.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    dataset: PathBuf,
    /// OCR sidecar (JSON lines).
    #[arg(long)]
    ocr: Option<PathBuf>,
    /// Reject entries whose caption numbering is not 1..N with N at most 5.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Stopword list, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AttentionArgs {
    /// Tokens of a single synthetic image; ignored with --dataset.
    tokens: Vec<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    ocr: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
    /// Graph configuration (TOML); defaults to the compact configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds the model weights, the embedding stub and synthetic features.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of visual regions per image.
    #[arg(long, default_value_t = 3)]
    regions: usize,
    /// Also compare analytic and finite-difference gradients (slow).
    #[arg(long)]
    gradcheck: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Candidate captions, one `image_id<TAB>caption` per line.
    candidates: PathBuf,
    /// Dataset whose captions serve as references.
    references: PathBuf,
    #[arg(long, value_enum, default_value = "syllable", conflicts_with = "all_tokenizers")]
    tokenizer: TokenizerArg,
    /// Score under every tokenizer and report the spread.
    #[arg(long)]
    all_tokenizers: bool,
    #[arg(long, value_enum, default_value = "x10")]
    scale: ScaleArg,
    #[arg(long)]
    strict: bool,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let format = ReportFormat::from(cli.format);
    match execute(&cli) {
        Ok(report) => {
            for note in &report.notes {
                eprintln!("note: {note}");
            }
            let mut out = std::io::stdout().lock();
            if out.write_all(report.render(format).as_bytes()).is_err() {
                return 2;
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command line and returns its report.
fn execute(cli: &Cli) -> Result<Report, CliError> {
    let loaded;
    let inventory = match &cli.inventory {
        Some(p) => {
            loaded = SyllableInventory::load(p)?;
            &loaded
        }
        None => SyllableInventory::bundled(),
    };
    match &cli.command {
        Command::Analyze(input) => Ok(analyze(inventory, &read_tokens(input)?)),
        Command::Features(input) => Ok(features(inventory, &read_tokens(input)?)),
        Command::Diagnose(args) => diagnose(inventory, args),
        Command::Attention(args) => attention(args),
        Command::Score(args) => score(args),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn read_tokens(input: &TokenInput) -> Result<Vec<String>, CliError> {
    let mut tokens = input.tokens.clone();
    if let Some(path) = &input.file {
        tokens.extend(read_text(path)?.split_whitespace().map(str::to_string));
    }
    Ok(tokens)
}

fn analyze(inventory: &SyllableInventory, tokens: &[String]) -> Report {
    let mut t = Table::new(
        "tokens",
        &["token", "vietnamese", "tone", "tone_class", "tone_stripped", "base", "onset", "medial", "nucleus", "coda"],
    );
    for token in tokens {
        let base = strip_diacritics(&normalize(token));
        let row = match analyze_token(inventory, token) {
            Some(a) => vec![
                Cell::text(token),
                Cell::text("true"),
                Cell::text(a.tone.name()),
                Cell::text(a.tone_class.name()),
                Cell::text(&a.base),
                Cell::text(base),
                Cell::text(&a.parts.onset),
                Cell::text(&a.parts.medial),
                Cell::text(&a.parts.nucleus),
                Cell::text(&a.parts.coda),
            ],
            None => {
                let stripped = tone_stripped(token).unwrap_or_default();
                let mut row = vec![Cell::text(token), Cell::text("false"), Cell::text(""), Cell::text("")];
                row.extend([Cell::text(stripped), Cell::text(base)]);
                row.extend((0..4).map(|_| Cell::text("")));
                row
            }
        };
        t.push(row);
    }
    let mut report = Report::new("analyze");
    report.tables.push(t);
    report
}

fn features(inventory: &SyllableInventory, tokens: &[String]) -> Report {
    let mut columns = vec!["i", "j", "token_i", "token_j"];
    columns.extend(FEATURE_NAMES);
    let mut t = Table::new("phono_features", &columns);
    let tensor = build_tensor_with(inventory, tokens);
    for (i, a) in tokens.iter().enumerate() {
        for (j, b) in tokens.iter().enumerate() {
            let mut row = vec![i.into(), j.into(), Cell::text(a), Cell::text(b)];
            row.extend(tensor.get(i, j).to_array().map(|v| Cell::Int(i64::from(v))));
            t.push(row);
        }
    }
    let mut report = Report::new("features");
    report.tables.push(t);
    report
}

fn load(args: &DatasetArgs) -> Result<Vec<ImageRecord>, CliError> {
    let options = LoadOptions { strict: args.strict };
    Ok(load_with_ocr(&args.dataset, args.ocr.as_deref(), options)?)
}

fn diagnose(inventory: &SyllableInventory, args: &DiagnoseArgs) -> Result<Report, CliError> {
    let records = load(&args.data)?;
    let stopwords = match &args.stopwords {
        Some(p) => Stopwords::load(p)?,
        None => Stopwords::bundled(),
    };
    let mut report = Report::new("diagnose");
    let vocab = vocabulary(records.iter().flat_map(|r| r.captions.iter().map(|c| c.caption.as_str())));
    match collision_rate_with(inventory, vocab) {
        Ok(c) => {
            report.tables.push(c.summary_table());
            report.tables.push(c.groups_table());
        }
        Err(DiagnosticsError::EmptyVocabulary) => {
            report.notes.push("captions contain no Vietnamese words; collision analysis skipped".into());
        }
        Err(e) => return Err(e.into()),
    }
    if args.data.ocr.is_none() {
        report
            .notes
            .push("no OCR sidecar given; divergence, error-type and usage analyses skipped".into());
        return Ok(report);
    }
    let divergence = divergence_analysis(&records);
    report.tables.push(divergence.table());
    report.tables.push(divergence.error_table());
    report.tables.extend(confusion_matrices(&divergence.labelled_errors()).tables());
    let matcher = TextMatcher::new(stopwords);
    report.tables.push(matcher.usage_table(&records));
    report.tables.push(matcher.copy_table(&records));
    Ok(report)
}

/// Lays bare tokens out left to right on one line.
fn row_layout(tokens: &[String]) -> Vec<OcrToken> {
    tokens
        .iter()
        .zip(text_row(tokens.len()))
        .map(|(t, bbox)| OcrToken::new(t, bbox, 1.0))
        .collect()
}

fn attention(args: &AttentionArgs) -> Result<Report, CliError> {
    let config = match &args.config {
        Some(p) => GraphConfig::load(p)?,
        None => GraphConfig::compact(),
    };
    let images: Vec<(String, Vec<OcrToken>)> = match &args.dataset {
        Some(path) => {
            let options = LoadOptions { strict: args.strict };
            load_with_ocr(path, args.ocr.as_deref(), options)?
                .into_iter()
                .map(|r| (r.image_id, r.ocr_tokens))
                .collect()
        }
        None => vec![("tokens".to_string(), row_layout(&args.tokens))],
    };
    let model = FusionModel::seeded(&config, args.seed)?;
    let provider = HashEmbedding::new(config.linguistic_dim, args.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let tt = config.edge_types.iter().position(|&e| e == EdgeType::TToT);

    let mut weights = Table::new("text_attention", &["image_id", "layer", "query", "key", "weight"]);
    let mut checks = Table::new("gradient_check", &["image_id", "parameters", "max_relative_error", "worst_parameter"]);
    let mut report = Report::new("attention");
    for (image_id, tokens) in &images {
        if tokens.is_empty() {
            report.notes.push(format!("image {image_id:?} has no OCR tokens; skipped"));
            continue;
        }
        let regions = random_regions(&mut rng, args.regions);
        let instance = Instance::from_ocr(tokens, &regions, &config, &provider, args.seed)?;
        let trace = model.forward(&instance)?;
        if let Some(e) = tt {
            for (l, cache) in trace.layers.iter().enumerate() {
                let heads = &cache.edges[e].weights;
                let mean = heads.iter().fold(None, |acc: Option<ndarray::Array2<f64>>, w| match acc {
                    Some(a) => Some(a + w),
                    None => Some(w.clone()),
                });
                let Some(mean) = mean.map(|m| m / heads.len() as f64) else {
                    continue;
                };
                for ((q, k), w) in mean.indexed_iter() {
                    weights.push(vec![
                        Cell::text(image_id),
                        (l + 1).into(),
                        Cell::text(&tokens[q].text),
                        Cell::text(&tokens[k].text),
                        (*w).into(),
                    ]);
                }
            }
        }
        if args.gradcheck {
            let loss = Loss::seeded_linear(tokens.len(), regions.len(), config.model_dim, args.seed);
            let g = gradient_check(&model, &instance, &loss)?;
            checks.push(vec![
                Cell::text(image_id),
                g.parameters_checked.into(),
                g.max_relative_error.into(),
                Cell::text(g.worst_parameter),
            ]);
        }
    }
    if tt.is_none() {
        report.notes.push("configuration has no text-to-text edge".into());
    }
    report.tables.push(weights);
    if args.gradcheck {
        report.tables.push(checks);
    }
    Ok(report)
}

/// Reads `image_id<TAB>caption` lines. Blank lines are skipped.
fn read_candidates(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, caption)) = line.split_once('\t') else {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                column: 1,
                message: "expected image_id<TAB>caption".into(),
            }
            .into());
        };
        out.push((id.trim().to_string(), caption.to_string()));
    }
    Ok(out)
}

fn score(args: &ScoreArgs) -> Result<Report, CliError> {
    let candidates = read_candidates(&args.candidates)?;
    let records = load_dataset(&args.references, LoadOptions { strict: args.strict })?;
    let by_id: HashMap<&str, &ImageRecord> = records.iter().map(|r| (r.image_id.as_str(), r)).collect();
    let mut cands = Vec::with_capacity(candidates.len());
    let mut refs = Vec::with_capacity(candidates.len());
    for (id, caption) in &candidates {
        let record = by_id
            .get(id.as_str())
            .ok_or_else(|| MetricsError::InvalidArgument(format!("candidate for unknown image {id:?}")))?;
        cands.push(caption.as_str());
        refs.push(record.captions.iter().map(|c| c.caption.as_str()).collect::<Vec<_>>());
    }
    let options = ScoreOptions {
        cider_scale: match args.scale {
            ScaleArg::X1 => CiderScale::X1,
            ScaleArg::X10 => CiderScale::X10,
        },
        ..ScoreOptions::default()
    };
    let mut report = Report::new("score");
    if args.all_tokenizers {
        let h = sensitivity_harness(&cands, &refs, &Tokenizer::ALL, options)?;
        report.tables.push(ScoreReport::table(&h.reports));
        report.tables.push(h.delta_table());
    } else {
        let r = score_corpus(&cands, &refs, args.tokenizer.into(), options)?;
        report.tables.push(ScoreReport::table(&[r]));
    }
    Ok(report)
}
