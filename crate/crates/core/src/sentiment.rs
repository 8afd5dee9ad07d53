//! Per-post sentiment probabilities and the composite score.
//!
//! The composite score is `C = (pos − neg) · (1 + F(neu))` with `F` the
//! identity (`cs1`) or the square root (`cs2`). Over the probability simplex
//! the `cs2` raw value peaks at 32/27 (at pos = 8/9, neu = 1/9), so results are
//! clamped into `[−1, 1]`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of input probabilities. Scorer outputs are often
/// rounded to two or three decimals, so sums like 1.004 must pass.
pub const SUM_TOLERANCE: f64 = 1e-2;

const POSITIVE_WORDS: &str = include_str!("../data/positive.txt");
const NEGATIVE_WORDS: &str = include_str!("../data/negative.txt");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentProbs {
    pos: f64,
    neg: f64,
    neu: f64,
}

impl SentimentProbs {
    /// Validate a triple (non-negative, summing to 1 within
    /// [`SUM_TOLERANCE`]) and renormalize it to sum to 1.
    pub fn new(pos: f64, neg: f64, neu: f64) -> Result<Self> {
        for (name, v) in [("pos", pos), ("neg", neg), ("neu", neu)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidProbs(format!("{name} = {v}")));
            }
        }
        // pos + neg first so that swapping them cannot change the sum
        let sum = (pos + neg) + neu;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidProbs(format!("sum {sum} is not 1")));
        }
        Ok(Self {
            pos: pos / sum,
            neg: neg / sum,
            neu: neu / sum,
        })
    }

    pub fn pos(&self) -> f64 {
        self.pos
    }

    pub fn neg(&self) -> f64 {
        self.neg
    }

    pub fn neu(&self) -> f64 {
        self.neu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// F(neu) = neu
    Cs1,
    /// F(neu) = √neu
    #[default]
    Cs2,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cs1" => Ok(Variant::Cs1),
            "cs2" => Ok(Variant::Cs2),
            other => Err(Error::InvalidParameter(format!(
                "unknown composite variant '{other}'"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Cs1 => "cs1",
            Variant::Cs2 => "cs2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeScore {
    pub value: f64,
    pub variant: Variant,
}

/// Unclamped `(pos − neg) · (1 + F(neu))`.
pub fn raw_composite(p: &SentimentProbs, variant: Variant) -> f64 {
    let f = match variant {
        Variant::Cs1 => p.neu,
        Variant::Cs2 => p.neu.sqrt(),
    };
    (p.pos - p.neg) * (1.0 + f)
}

pub fn composite(p: &SentimentProbs, variant: Variant) -> CompositeScore {
    CompositeScore {
        value: raw_composite(p, variant).clamp(-1.0, 1.0),
        variant,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Pos,
    Neg,
    Neu,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Pos => "POS",
            Label::Neg => "NEG",
            Label::Neu => "NEU",
        })
    }
}

/// Argmax label; ties go NEU, then POS, then NEG.
pub fn label(p: &SentimentProbs) -> Label {
    let max = p.pos.max(p.neg).max(p.neu);
    if p.neu == max {
        Label::Neu
    } else if p.pos == max {
        Label::Pos
    } else {
        Label::Neg
    }
}

/// Positive and negative word lists.
#[derive(Debug, Clone)]
pub struct Lexicon {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

fn word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

static EMBEDDED: LazyLock<Lexicon> = LazyLock::new(|| Lexicon {
    positive: word_list(POSITIVE_WORDS),
    negative: word_list(NEGATIVE_WORDS),
});

impl Lexicon {
    pub fn embedded() -> &'static Lexicon {
        &EMBEDDED
    }

    pub fn from_lists(positive: &str, negative: &str) -> Self {
        Self {
            positive: word_list(positive),
            negative: word_list(negative),
        }
    }

    pub fn is_positive(&self, word: &str) -> bool {
        self.positive.contains(word)
    }

    pub fn is_negative(&self, word: &str) -> bool {
        self.negative.contains(word)
    }

    /// With `p` positive and `n` negative hits: `pos = p/(p+n+1)`,
    /// `neg = n/(p+n+1)`, `neu` takes the rest.
    pub fn score<S: AsRef<str>>(&self, tokens: &[S]) -> SentimentProbs {
        let (mut p, mut n) = (0usize, 0usize);
        for t in tokens {
            let t = t.as_ref();
            if self.positive.contains(t) {
                p += 1;
            } else if self.negative.contains(t) {
                n += 1;
            }
        }
        let denom = (p + n + 1) as f64;
        let pos = p as f64 / denom;
        let neg = n as f64 / denom;
        SentimentProbs {
            pos,
            neg,
            neu: 1.0 / denom,
        }
    }
}

/// Score tokens with the embedded lexicon.
pub fn lexicon_score<S: AsRef<str>>(tokens: &[S]) -> SentimentProbs {
    Lexicon::embedded().score(tokens)
}

/// Load externally computed probabilities from a CSV with header
/// `doc_id,pos,neg,neu`. Extra columns are ignored.
pub fn load_scores(path: &Path) -> Result<BTreeMap<String, SentimentProbs>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column '{name}'")))
    };
    let cols = [col("doc_id")?, col("pos")?, col("neg")?, col("neu")?];

    let mut out = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::csv(path, e))?;
        let id = record.get(cols[0]).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty doc_id"));
        }
        let mut vals = [0.0; 3];
        for (v, &c) in vals.iter_mut().zip(&cols[1..]) {
            let field = record.get(c).unwrap_or("").trim();
            *v = field
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad number '{field}'")))?;
        }
        let probs = SentimentProbs::new(vals[0], vals[1], vals[2])
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        if out.insert(id.clone(), probs).is_some() {
            return Err(Error::parse(path, line, format!("duplicate doc_id '{id}'")));
        }
    }
    Ok(out)
}

/// One row of a scored-posts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub doc_id: String,
    pub pos: f64,
    pub neg: f64,
    pub neu: f64,
    pub composite: f64,
    pub label: Label,
}

impl ScoreRow {
    pub fn new(doc_id: &str, p: &SentimentProbs, variant: Variant) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            pos: p.pos,
            neg: p.neg,
            neu: p.neu,
            composite: composite(p, variant).value,
            label: label(p),
        }
    }
}

pub fn write_score_rows(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_score_rows(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::csv(path, e)))
        .collect()
}
