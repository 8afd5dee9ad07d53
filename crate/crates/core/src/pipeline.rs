//! Pipeline stages as file-to-file steps sharing one output directory.
//!
//! Each stage reads its inputs (configured paths or earlier stages' files in
//! `out_dir`) and writes its own outputs there, so stages can be rerun
//! individually.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::breaks::{self, BreakParams, BreakResult};
use crate::corpus::{self, PostFormat, RawPost};
use crate::error::{Error, Result};
use crate::gsdmm::{self, DocSet, GsdmmConfig, ModelExport};
use crate::preprocess::{self, PreprocessOptions, TokenDoc};
use crate::sentiment::{self, Lexicon, ScoreRow, Variant};
use crate::series::{self, CorrelationMethod, DaySeries, LabelMap, ViolinSummary};
use crate::stopwords::{self, StopwordSet};

pub const BREAKS_FILE: &str = "breaks.csv";
pub const WINDOWS_FILE: &str = "windows.csv";
pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const SENTIMENT_FILE: &str = "sentiment.csv";
pub const JOINED_FILE: &str = "joined.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub posts: Option<PathBuf>,
    /// `None` guesses from the extension
    pub posts_format: Option<PostFormat>,
    pub prices: Option<PathBuf>,
    /// precomputed `doc_id,pos,neg,neu` scores; the lexicon is used when unset
    pub scores: Option<PathBuf>,
    /// stopword list for preprocessing; defaults to the one in `out_dir`
    pub stopwords: Option<PathBuf>,
    pub manual_stopwords: Vec<String>,
    pub label_map: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub keep_hashtag_word: bool,
    pub stopword_threshold: f64,
    /// `seed` lives here and drives every random choice in the pipeline
    pub gsdmm: GsdmmConfig,
    pub top_n: usize,
    pub sentiment_variant: Variant,
    pub breaks: BreakParams,
    pub window_before: u32,
    pub window_after: u32,
    pub correlation: CorrelationMethod,
    /// centered moving average applied before correlating; 1 disables it
    pub smooth_window: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            posts: None,
            posts_format: None,
            prices: None,
            scores: None,
            stopwords: None,
            manual_stopwords: Vec::new(),
            label_map: None,
            out_dir: PathBuf::from("out"),
            keep_hashtag_word: false,
            stopword_threshold: stopwords::DEFAULT_DF_RATIO,
            gsdmm: GsdmmConfig::default(),
            top_n: 10,
            sentiment_variant: Variant::default(),
            breaks: BreakParams::default(),
            window_before: 15,
            window_after: 15,
            correlation: CorrelationMethod::default(),
            smooth_window: 1,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidParameter(format!(
            "{key}: expected true or false, got '{value}'"
        ))),
    }
}

impl PipelineConfig {
    /// Set one key. Relative paths are resolved against `base` when given.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let value = value.trim();
        let path = || match base {
            Some(dir) if Path::new(value).is_relative() => dir.join(value),
            _ => PathBuf::from(value),
        };
        match key.trim() {
            "posts" => self.posts = Some(path()),
            "posts_format" => self.posts_format = Some(value.parse()?),
            "prices" => self.prices = Some(path()),
            "scores" => self.scores = Some(path()),
            "stopwords" => self.stopwords = Some(path()),
            "manual_stopwords" => {
                self.manual_stopwords = value
                    .split([',', ' '])
                    .map(|w| w.trim().to_lowercase())
                    .filter(|w| !w.is_empty())
                    .collect()
            }
            "label_map" => self.label_map = Some(path()),
            "out_dir" => self.out_dir = path(),
            "keep_hashtag_word" => self.keep_hashtag_word = parse_bool(key, value)?,
            "stopword_threshold" => self.stopword_threshold = parse_num(key, value)?,
            "k_max" => self.gsdmm.k_max = parse_num(key, value)?,
            "alpha" => self.gsdmm.alpha = parse_num(key, value)?,
            "beta" => self.gsdmm.beta = parse_num(key, value)?,
            "n_iters" => self.gsdmm.n_iters = parse_num(key, value)?,
            "seed" => self.gsdmm.seed = parse_num(key, value)?,
            "top_n" => self.top_n = parse_num(key, value)?,
            "sentiment_variant" => self.sentiment_variant = value.parse()?,
            "trim" => self.breaks.trim = parse_num(key, value)?,
            "min_seg" => self.breaks.min_seg = parse_num(key, value)?,
            "max_breaks" => self.breaks.max_breaks = parse_num(key, value)?,
            "penalty" => self.breaks.penalty = parse_num(key, value)?,
            "window_before" => self.window_before = parse_num(key, value)?,
            "window_after" => self.window_after = parse_num(key, value)?,
            "correlation" => self.correlation = value.parse()?,
            "smooth_window" => self.smooth_window = parse_num(key, value)?,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown config key '{other}'"
                )))
            }
        }
        Ok(())
    }

    /// Apply `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path, base: Option<&Path>) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected key = value"))?;
            self.set(key, value, base)
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    /// Defaults overridden by a config file; relative paths in the file are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::default();
        let base = path.parent().unwrap_or(Path::new("."));
        config.apply_text(&text, path, Some(base))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.gsdmm.validate()?;
        if !(self.stopword_threshold > 0.0 && self.stopword_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "stopword_threshold {} outside (0, 1]",
                self.stopword_threshold
            )));
        }
        if self.smooth_window == 0 || self.smooth_window.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "smooth_window {} must be odd",
                self.smooth_window
            )));
        }
        Ok(())
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::InvalidParameter(format!("no '{key}' path configured")))
    }

    fn prepare_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))
    }

    fn opts(&self) -> PreprocessOptions {
        PreprocessOptions {
            keep_hashtag_word: self.keep_hashtag_word,
        }
    }
}

/// Load and deduplicate the configured posts.
fn load_corpus(config: &PipelineConfig) -> Result<Vec<RawPost>> {
    let path = PipelineConfig::require(&config.posts, "posts")?;
    let format = match config.posts_format {
        Some(f) => f,
        None => PostFormat::from_path(path)?,
    };
    let report = corpus::load_posts(path, format)?;
    if report.dropped > 0 {
        log::warn!(
            "{}: dropped {} malformed rows",
            path.display(),
            report.dropped
        );
    }
    let posts = corpus::dedup(&report.posts);
    log::info!(
        "loaded {} posts ({} after removing duplicates)",
        report.posts.len(),
        posts.len()
    );
    Ok(posts)
}

fn stopword_set(config: &PipelineConfig) -> Result<StopwordSet> {
    let path = match &config.stopwords {
        Some(p) => p.clone(),
        None => config.output(STOPWORDS_FILE),
    };
    if !path.exists() && config.stopwords.is_none() {
        return Err(Error::InvalidParameter(format!(
            "{} not found; run the stopwords stage first or set 'stopwords'",
            path.display()
        )));
    }
    StopwordSet::load(&path)
}

/// Detect breaks and write `breaks.csv` plus `windows.csv`.
pub fn cmd_breaks(config: &PipelineConfig) -> Result<BreakResult> {
    let prices = corpus::load_prices(PipelineConfig::require(&config.prices, "prices")?)?;
    let result = breaks::detect_breaks(&prices, &config.breaks)?;
    log::info!("breaks: {} found", result.breaks.len());
    config.prepare_out_dir()?;
    breaks::write_breaks_csv(&config.output(BREAKS_FILE), &result)?;

    let windows = breaks::windows_around(&result, config.window_before, config.window_after);
    let path = config.output(WINDOWS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(["break_date", "start", "end"])
        .map_err(|e| Error::csv(&path, e))?;
    for (b, win) in result.breaks.iter().zip(&windows.windows) {
        w.write_record([
            b.date.to_string(),
            win.start.to_string(),
            win.end.to_string(),
        ])
        .map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(result)
}

/// Discover corpus-specific stopwords and write `stopwords.txt`.
pub fn cmd_stopwords(config: &PipelineConfig) -> Result<StopwordSet> {
    config.validate()?;
    let posts = load_corpus(config)?;
    let docs: Vec<Vec<String>> = posts
        .iter()
        .map(|p| preprocess::tokenize(&preprocess::clean_with(&p.text, config.opts())))
        .filter(|d| !d.is_empty())
        .collect();
    let set =
        stopwords::discover_stopwords(&docs, config.stopword_threshold, &config.manual_stopwords)?;
    config.prepare_out_dir()?;
    set.save(&config.output(STOPWORDS_FILE))?;
    Ok(set)
}

/// Clean, filter and stem the posts into `corpus.jsonl`.
pub fn cmd_preprocess(config: &PipelineConfig) -> Result<preprocess::Preprocessed> {
    config.validate()?;
    let stop = stopword_set(config)?;
    let posts = load_corpus(config)?;
    let result = preprocess::preprocess_all(&posts, &stop, config.opts());
    if result.docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    log::info!(
        "preprocess: {} documents, vocabulary of {}",
        result.docs.len(),
        result.vocab.len()
    );
    config.prepare_out_dir()?;
    preprocess::write_jsonl(&config.output(CORPUS_FILE), &result.docs, &result.vocab)?;
    Ok(result)
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct LabelRow {
    doc_id: String,
    cluster: usize,
}

/// Fit GSDMM on `corpus.jsonl`; writes `model.json` and `labels.csv`.
pub fn cmd_cluster(config: &PipelineConfig) -> Result<ModelExport> {
    config.validate()?;
    let (docs, vocab) = preprocess::read_jsonl(&config.output(CORPUS_FILE))?;
    let corpus = DocSet::from_token_docs(&docs, &vocab)?;
    let fit = gsdmm::fit(&corpus, &config.gsdmm)?;
    log::info!(
        "cluster: {} non-empty clusters after {} iterations",
        fit.state.non_empty_clusters(),
        config.gsdmm.n_iters
    );
    let export = ModelExport::new(&fit, &config.gsdmm, &docs, &vocab, config.top_n);

    let path = config.output(MODEL_FILE);
    let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(&mut file, &export)?;
    file.write_all(b"\n").map_err(|e| Error::io(&path, e))?;

    let path = config.output(LABELS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    for l in &export.labels {
        w.serialize(LabelRow {
            doc_id: l.doc_id.clone(),
            cluster: l.cluster,
        })
        .map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(export)
}

/// Score every document of `corpus.jsonl`, from the precomputed scores file
/// when configured and the bundled lexicon otherwise. Writes `sentiment.csv`.
pub fn cmd_sentiment(config: &PipelineConfig) -> Result<Vec<ScoreRow>> {
    config.validate()?;
    let (docs, _) = preprocess::read_jsonl(&config.output(CORPUS_FILE))?;
    let variant = config.sentiment_variant;
    let rows: Vec<ScoreRow> = match &config.scores {
        Some(path) => {
            let scores = sentiment::load_scores(path)?;
            docs.iter()
                .map(|d| {
                    scores
                        .get(&d.doc_id)
                        .map(|p| ScoreRow::new(&d.doc_id, p, variant))
                        .ok_or_else(|| {
                            Error::KeyMismatch(format!(
                                "{}: no score for document '{}'",
                                path.display(),
                                d.doc_id
                            ))
                        })
                })
                .collect::<Result<_>>()?
        }
        None => {
            let stop = stopword_set(config)?;
            let texts: BTreeMap<String, String> = load_corpus(config)?
                .into_iter()
                .map(|p| (p.id, p.text))
                .collect();
            let lexicon = Lexicon::embedded();
            docs.iter()
                .map(|d| {
                    let text = texts.get(&d.doc_id).ok_or_else(|| {
                        Error::KeyMismatch(format!("document '{}' not among the posts", d.doc_id))
                    })?;
                    let words = preprocess::content_words(text, &stop, config.opts());
                    Ok(ScoreRow::new(&d.doc_id, &lexicon.score(&words), variant))
                })
                .collect::<Result<_>>()?
        }
    };
    sentiment::write_score_rows(&config.output(SENTIMENT_FILE), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NarrativeSummary {
    pub label: String,
    pub posts: usize,
    pub days: usize,
    pub violin: ViolinSummary,
    /// correlation of the daily mean with log close; absent when the overlap
    /// is too short or either side is constant
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub correlation_method: CorrelationMethod,
    pub smooth_window: usize,
    pub narratives: Vec<NarrativeSummary>,
}

/// Join labels, scores and days into narrative series. Writes `joined.csv`
/// and `summary.json`.
pub fn cmd_series(config: &PipelineConfig) -> Result<SeriesSummary> {
    config.validate()?;
    let (docs, _) = preprocess::read_jsonl(&config.output(CORPUS_FILE))?;
    let days: BTreeMap<String, _> = docs
        .iter()
        .map(|d: &TokenDoc| (d.doc_id.clone(), d.day))
        .collect();

    let path = config.output(LABELS_FILE);
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    let labels: BTreeMap<String, usize> = rdr
        .deserialize()
        .map(|r| r.map(|l: LabelRow| (l.doc_id, l.cluster)))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::csv(&path, e))?;

    let composites: BTreeMap<String, f64> =
        sentiment::read_score_rows(&config.output(SENTIMENT_FILE))?
            .into_iter()
            .map(|r| (r.doc_id, r.composite))
            .collect();

    let map = match &config.label_map {
        Some(p) => LabelMap::load(p)?,
        None => LabelMap::new(),
    };
    map.validate(config.gsdmm.k_max)?;

    let prices = corpus::load_prices(PipelineConfig::require(&config.prices, "prices")?)?;
    let log_close: DaySeries = prices
        .points()
        .iter()
        .map(|p| (p.date, p.close.ln()))
        .collect();

    let narratives = series::build_series(&labels, &composites, &days, &map)?;
    let violins = series::violin_summary(&labels, &composites, &map)?;
    series::export_joined(&narratives, &prices, &config.output(JOINED_FILE))?;

    let mut summaries = Vec::with_capacity(narratives.len());
    for (s, violin) in narratives.iter().zip(violins) {
        let means = series::smooth(&s.means(), config.smooth_window)?;
        let correlation = match series::correlate(&means, &log_close, config.correlation) {
            Ok(r) => Some(r),
            Err(e @ (Error::InsufficientOverlap(_) | Error::ZeroVariance)) => {
                log::warn!("{}: correlation omitted: {e}", s.label);
                None
            }
            Err(e) => return Err(e),
        };
        summaries.push(NarrativeSummary {
            label: s.label.clone(),
            posts: s.total_posts(),
            days: s.days.len(),
            violin,
            correlation,
        });
    }
    let summary = SeriesSummary {
        correlation_method: config.correlation,
        smooth_window: config.smooth_window,
        narratives: summaries,
    };
    let path = config.output(SUMMARY_FILE);
    let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(&mut file, &summary)?;
    file.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

/// Every stage in order.
pub fn run_all(config: &PipelineConfig) -> Result<()> {
    cmd_breaks(config)?;
    cmd_stopwords(config)?;
    cmd_preprocess(config)?;
    cmd_cluster(config)?;
    cmd_sentiment(config)?;
    cmd_series(config)?;
    Ok(())
}
