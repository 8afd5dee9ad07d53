//! Text cleaning, tokenization, stopword filtering and stemming.
//!
//! Stage order is fixed: [`clean`] → [`tokenize`] → stopword removal on the
//! unstemmed lowercase tokens → [`stem`] → vocabulary registration.

mod porter;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;

use chrono::NaiveDate;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{RawPost, Vocabulary};
use crate::error::{Error, Result};
use crate::stopwords::StopwordSet;

pub use porter::stem;

static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S*").unwrap());
static HANDLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").unwrap());
static HASHTAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\w+").unwrap());
static MEDIA_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)[\[(<]\s*/?\s*(?:audio|video)\b[^\])>]*[\])>]").unwrap());

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessOptions {
    /// Keep the word after `#` instead of dropping the whole hashtag.
    pub keep_hashtag_word: bool,
}

/// Clean with default options.
pub fn clean(text: &str) -> String {
    clean_with(text, PreprocessOptions::default())
}

/// Strip links, handles, hashtags and media tags, lowercase, drop everything
/// that is not an ASCII letter, drop single letters and collapse whitespace.
pub fn clean_with(text: &str, opts: PreprocessOptions) -> String {
    let text = URL.replace_all(text, " ");
    let text = HANDLE.replace_all(&text, " ");
    let text = if opts.keep_hashtag_word {
        text.replace('#', " ").into()
    } else {
        HASHTAG.replace_all(&text, " ")
    };
    let text = MEDIA_TAG.replace_all(&text, " ").to_lowercase();

    let letters: String = text
        .chars()
        .filter(|&c| c != '\'' && c != '\u{2019}')
        .map(|c| if c.is_ascii_lowercase() { c } else { ' ' })
        .collect();

    let mut out = String::with_capacity(letters.len());
    for word in letters.split_whitespace().filter(|w| w.len() > 1) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Cleaned, tokenized and stopword-filtered words, before stemming.
pub fn content_words(text: &str, stopwords: &StopwordSet, opts: PreprocessOptions) -> Vec<String> {
    tokenize(&clean_with(text, opts))
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect()
}

/// The pure part of the pipeline: stemmed content words of `text`.
pub fn analyze(text: &str, stopwords: &StopwordSet, opts: PreprocessOptions) -> Vec<String> {
    content_words(text, stopwords, opts)
        .iter()
        .map(|t| stem(t))
        .collect()
}

/// A preprocessed post: stemmed token ids plus its UTC day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenDoc {
    pub doc_id: String,
    pub day: NaiveDate,
    pub tokens: Vec<u32>,
}

impl TokenDoc {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `(token id, multiplicity)` pairs sorted by id.
    pub fn word_counts(&self) -> Vec<(u32, u32)> {
        let mut ids = self.tokens.clone();
        ids.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::new();
        for id in ids {
            match out.last_mut() {
                Some((last, n)) if *last == id => *n += 1,
                _ => out.push((id, 1)),
            }
        }
        out
    }
}

/// Run one post through the full pipeline. `None` when nothing survives.
pub fn pipeline(
    post: &RawPost,
    stopwords: &StopwordSet,
    vocab: &mut Vocabulary,
    opts: PreprocessOptions,
) -> Option<TokenDoc> {
    let words = analyze(&post.text, stopwords, opts);
    if words.is_empty() {
        return None;
    }
    Some(TokenDoc {
        doc_id: post.id.clone(),
        day: post.day(),
        tokens: words.iter().map(|w| vocab.register(w)).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub docs: Vec<TokenDoc>,
    pub vocab: Vocabulary,
    pub dropped: usize,
}

/// Preprocess a whole corpus. Text analysis runs in parallel; vocabulary
/// registration happens afterwards in post order, so ids match a sequential
/// run of [`pipeline`].
pub fn preprocess_all(
    posts: &[RawPost],
    stopwords: &StopwordSet,
    opts: PreprocessOptions,
) -> Preprocessed {
    let analyzed: Vec<Vec<String>> = posts
        .par_iter()
        .map(|p| analyze(&p.text, stopwords, opts))
        .collect();

    let mut vocab = Vocabulary::new();
    let mut docs = Vec::with_capacity(posts.len());
    let mut dropped = 0;
    for (post, words) in posts.iter().zip(analyzed) {
        if words.is_empty() {
            dropped += 1;
            continue;
        }
        docs.push(TokenDoc {
            doc_id: post.id.clone(),
            day: post.day(),
            tokens: words.iter().map(|w| vocab.register(w)).collect(),
        });
    }
    if dropped > 0 {
        log::info!("preprocess: dropped {dropped} posts with no surviving tokens");
    }
    Preprocessed {
        docs,
        vocab,
        dropped,
    }
}

#[derive(Serialize, Deserialize)]
struct AuditRecord<'a> {
    doc_id: std::borrow::Cow<'a, str>,
    day: NaiveDate,
    tokens: Vec<std::borrow::Cow<'a, str>>,
}

/// Write the cleaned corpus as JSON lines `{doc_id, day, tokens}`.
pub fn write_jsonl(path: &Path, docs: &[TokenDoc], vocab: &Vocabulary) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for doc in docs {
        let record = AuditRecord {
            doc_id: doc.doc_id.as_str().into(),
            day: doc.day,
            tokens: doc
                .tokens
                .iter()
                .map(|&id| vocab.token(id).unwrap_or_default().into())
                .collect(),
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a corpus written by [`write_jsonl`]. Token ids are re-registered in
/// file order, which reproduces the ids of the run that wrote it.
pub fn read_jsonl(path: &Path) -> Result<(Vec<TokenDoc>, Vocabulary)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut vocab = Vocabulary::new();
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AuditRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if record.tokens.is_empty() {
            return Err(Error::parse(path, i + 1, "document without tokens"));
        }
        docs.push(TokenDoc {
            doc_id: record.doc_id.into_owned(),
            day: record.day,
            tokens: record.tokens.iter().map(|t| vocab.register(t)).collect(),
        });
    }
    Ok((docs, vocab))
}
