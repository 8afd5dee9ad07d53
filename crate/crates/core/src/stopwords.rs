//! Stopword discovery: a fixed English base list, manual additions, and terms
//! whose document frequency marks them as ubiquitous.
//!
//! TF-IDF uses the natural log with `+1` smoothing on the document frequency,
//! `idf(t) = max(0, ln(N / (df(t) + 1)))`. The clamp makes terms that occur in
//! (nearly) every document score exactly zero instead of going negative.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::hash::Hash;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

const BASE_LIST: &str = include_str!("../data/stopwords_en.txt");

/// Default document-frequency ratio above which a term is flagged.
pub const DEFAULT_DF_RATIO: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Base,
    Manual,
    Tfidf,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Base => "base",
            Provenance::Manual => "manual",
            Provenance::Tfidf => "tfidf",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "base" => Ok(Provenance::Base),
            "manual" => Ok(Provenance::Manual),
            "tfidf" => Ok(Provenance::Tfidf),
            other => Err(Error::InvalidParameter(format!(
                "unknown provenance '{other}'"
            ))),
        }
    }
}

/// Lowercase stopwords, each tagged with where it came from. The first
/// provenance recorded for a token wins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopwordSet {
    words: BTreeMap<String, Provenance>,
}

impl StopwordSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// The embedded English base list.
    pub fn base() -> Self {
        let mut set = Self::new();
        for line in BASE_LIST.lines().map(str::trim) {
            if !line.is_empty() && !line.starts_with('#') {
                set.insert(line, Provenance::Base);
            }
        }
        set
    }

    /// Returns false if the token was already present.
    pub fn insert(&mut self, token: &str, provenance: Provenance) -> bool {
        let token = token.trim().to_lowercase();
        if token.is_empty() || self.words.contains_key(&token) {
            return false;
        }
        self.words.insert(token, provenance);
        true
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains_key(token)
    }

    pub fn provenance(&self, token: &str) -> Option<Provenance> {
        self.words.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Provenance)> {
        self.words.iter().map(|(w, p)| (w.as_str(), *p))
    }

    pub fn is_superset(&self, other: &StopwordSet) -> bool {
        other.words.keys().all(|w| self.words.contains_key(w))
    }

    /// One token per line, grouped under `# provenance: <tag>` lines, sorted
    /// within each group.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# stopwords\n");
        for tag in [Provenance::Base, Provenance::Manual, Provenance::Tfidf] {
            let mut group = self.iter().filter(|(_, p)| *p == tag).peekable();
            if group.peek().is_none() {
                continue;
            }
            out.push_str(&format!("# provenance: {tag}\n"));
            for (w, _) in group {
                out.push_str(w);
                out.push('\n');
            }
        }
        out
    }

    /// Parse the format written by [`StopwordSet::to_text`]. Tokens before any
    /// provenance line count as manual.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut set = Self::new();
        let mut current = Provenance::Manual;
        for line in text.lines().map(str::trim) {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(tag) = rest.trim().strip_prefix("provenance:") {
                    current = tag.parse()?;
                }
                continue;
            }
            if !line.is_empty() {
                set.insert(line, current);
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }
}

/// Term frequency of `term` in `doc`: count / length. Zero for an empty doc.
pub fn tf<T: PartialEq>(term: &T, doc: &[T]) -> f64 {
    if doc.is_empty() {
        return 0.0;
    }
    let count = doc.iter().filter(|t| *t == term).count();
    count as f64 / doc.len() as f64
}

/// `max(0, ln(n_docs / (df + 1)))`.
pub fn idf_from_counts(n_docs: usize, df: usize) -> f64 {
    if n_docs == 0 {
        return 0.0;
    }
    (n_docs as f64 / (df as f64 + 1.0)).ln().max(0.0)
}

/// Document frequencies over a corpus of token sequences.
#[derive(Debug, Clone)]
pub struct DocFreq<T: Hash + Eq> {
    n_docs: usize,
    df: HashMap<T, usize>,
}

impl<T: Hash + Eq + Clone> DocFreq<T> {
    pub fn new<D: AsRef<[T]>>(corpus: &[D]) -> Self {
        let mut df: HashMap<T, usize> = HashMap::new();
        for doc in corpus {
            let distinct: HashSet<&T> = doc.as_ref().iter().collect();
            for t in distinct {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        Self {
            n_docs: corpus.len(),
            df,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn df(&self, term: &T) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &T) -> f64 {
        idf_from_counts(self.n_docs, self.df(term))
    }

    pub fn tfidf(&self, term: &T, doc: &[T]) -> f64 {
        tf(term, doc) * self.idf(term)
    }
}

/// IDF of `term` over `corpus`.
pub fn idf<T: Hash + Eq + Clone, D: AsRef<[T]>>(term: &T, corpus: &[D]) -> f64 {
    DocFreq::new(corpus).idf(term)
}

/// TF-IDF of `term` in `doc` relative to `corpus`.
pub fn tfidf<T: Hash + Eq + Clone, D: AsRef<[T]>>(term: &T, doc: &[T], corpus: &[D]) -> f64 {
    DocFreq::new(corpus).tfidf(term, doc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermStats {
    pub term: String,
    pub df: usize,
    /// mean TF-IDF over the documents that contain the term
    pub mean_tfidf: f64,
}

/// Per-term statistics, sorted by descending df then term.
pub fn term_stats<D: AsRef<[String]>>(corpus: &[D]) -> Vec<TermStats> {
    let freq = DocFreq::new(corpus);
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for doc in corpus {
        let doc = doc.as_ref();
        let distinct: HashSet<&String> = doc.iter().collect();
        for t in distinct {
            *sums.entry(t.as_str()).or_default() += freq.tfidf(t, doc);
        }
    }
    let mut stats: Vec<TermStats> = sums
        .into_iter()
        .map(|(term, sum)| {
            let df = freq.df(&term.to_string());
            TermStats {
                term: term.to_string(),
                df,
                mean_tfidf: sum / df as f64,
            }
        })
        .collect();
    stats.sort_by(|a, b| b.df.cmp(&a.df).then_with(|| a.term.cmp(&b.term)));
    stats
}

/// Base list ∪ manual additions ∪ every term with `df / N >= df_ratio_threshold`.
///
/// `corpus` holds cleaned, unstemmed token sequences.
pub fn discover_stopwords<D: AsRef<[String]>>(
    corpus: &[D],
    df_ratio_threshold: f64,
    manual: &[String],
) -> Result<StopwordSet> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(df_ratio_threshold > 0.0 && df_ratio_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "df ratio threshold {df_ratio_threshold} outside (0, 1]"
        )));
    }
    let mut set = StopwordSet::base();
    for w in manual {
        set.insert(w, Provenance::Manual);
    }
    let freq = DocFreq::new(corpus);
    let n = freq.n_docs() as f64;
    let mut flagged: Vec<&String> = freq
        .df
        .iter()
        .filter(|(_, &df)| df as f64 / n >= df_ratio_threshold)
        .map(|(t, _)| t)
        .collect();
    flagged.sort();
    for t in flagged {
        if set.insert(t, Provenance::Tfidf) {
            log::info!(
                "stopwords: flagged '{t}' (df {}/{})",
                freq.df(t),
                freq.n_docs()
            );
        }
    }
    Ok(set)
}
