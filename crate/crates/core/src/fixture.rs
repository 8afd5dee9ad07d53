//! Deterministic synthetic data: the bundled demo corpus and price series,
//! and disjoint-vocabulary corpora for checking cluster recovery.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A corpus of token-id documents with the group each was generated from.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub docs: Vec<Vec<u32>>,
    pub groups: Vec<usize>,
    pub vocab_size: usize,
}

/// `n_docs` documents of `doc_len` tokens. Each picks one of `n_groups`
/// uniformly, then draws its tokens uniformly from that group's private block
/// of `words_per_group` ids.
pub fn disjoint_vocab_corpus(
    n_groups: usize,
    words_per_group: usize,
    n_docs: usize,
    doc_len: usize,
    seed: u64,
) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(n_docs);
    let mut groups = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let g = rng.random_range(0..n_groups);
        let base = (g * words_per_group) as u32;
        docs.push(
            (0..doc_len)
                .map(|_| base + rng.random_range(0..words_per_group as u32))
                .collect(),
        );
        groups.push(g);
    }
    SyntheticCorpus {
        docs,
        groups,
        vocab_size: n_groups * words_per_group,
    }
}

struct Narrative {
    words: &'static [&'static str],
    /// baseline probability that an injected sentiment word is positive,
    /// per price regime
    positivity: [f64; 3],
}

const NARRATIVES: [Narrative; 4] = [
    Narrative {
        words: &[
            "invest",
            "portfolio",
            "buying",
            "profit",
            "traders",
            "market",
            "fund",
            "holding",
            "asset",
            "returns",
            "wealth",
            "retirement",
            "savings",
            "investor",
            "allocation",
            "dividends",
            "position",
            "shares",
        ],
        positivity: [0.45, 0.8, 0.3],
    },
    Narrative {
        words: &[
            "regulator",
            "law",
            "government",
            "senate",
            "tax",
            "compliance",
            "legal",
            "court",
            "policy",
            "rules",
            "congress",
            "license",
            "oversight",
            "lawmakers",
            "treasury",
            "framework",
            "bill",
            "ruling",
        ],
        positivity: [0.4, 0.5, 0.2],
    },
    Narrative {
        words: &[
            "blockchain",
            "network",
            "node",
            "mining",
            "protocol",
            "developer",
            "code",
            "wallet",
            "lightning",
            "transaction",
            "hashrate",
            "layer",
            "scaling",
            "software",
            "consensus",
            "taproot",
            "miners",
            "block",
        ],
        positivity: [0.55, 0.85, 0.6],
    },
    Narrative {
        words: &[
            "exchange",
            "password",
            "breach",
            "custody",
            "keys",
            "attack",
            "vulnerability",
            "withdrawal",
            "audit",
            "phishing",
            "account",
            "insurance",
            "cold",
            "storage",
            "exploit",
            "patch",
            "incident",
            "hardware",
        ],
        positivity: [0.3, 0.4, 0.15],
    },
];

const POSITIVE: &[&str] = &[
    "good",
    "great",
    "bullish",
    "gains",
    "strong",
    "win",
    "happy",
    "love",
    "rally",
    "optimistic",
];
const NEGATIVE: &[&str] = &[
    "bad", "crash", "scam", "fear", "dump", "worried", "loss", "panic", "bearish", "weak",
];
const FILLER: &[&str] = &[
    "the", "is", "to", "and", "of", "for", "this", "it", "we", "on",
];
const NOISE: &[&str] = &[
    "#crypto",
    "#btc",
    "@satoshi",
    "@whale_alert",
    "https://t.co/abc123",
    "$60k",
    "2021",
    "!!",
];

/// Days in the bundled price series.
pub const FIXTURE_DAYS: usize = 200;
/// Posts in the bundled corpus, before deduplication.
pub const FIXTURE_POSTS: usize = 500;
/// First sample of each new price regime.
pub const FIXTURE_BREAKS: [usize; 2] = [70, 140];

const FIXTURE_SEED: u64 = 20_140_304;

fn fixture_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date")
}

fn regime(day: usize) -> usize {
    FIXTURE_BREAKS.iter().filter(|&&b| day >= b).count()
}

/// `date,close` CSV with two level shifts in log price.
pub fn price_csv() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED);
    let noise = Normal::new(0.0, 0.02).expect("valid sigma");
    let levels: [f64; 3] = [10.3, 10.7, 10.4];
    let mut out = String::from("date,close\n");
    for i in 0..FIXTURE_DAYS {
        let date = fixture_start() + Duration::days(i as i64);
        let close = (levels[regime(i)] + noise.sample(&mut rng)).exp();
        writeln!(out, "{},{:.2}", date.format("%Y-%m-%d"), close).expect("string write");
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `id,created_at,text` CSV of synthetic posts: four narratives with their
/// own vocabulary, a ubiquitous "bitcoin", sentiment words whose polarity
/// drifts with the price regime, social-media noise and a few exact
/// duplicates.
pub fn posts_csv() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED + 1);
    let mut texts: Vec<String> = Vec::with_capacity(FIXTURE_POSTS);
    let mut out = String::from("id,created_at,text\n");
    for i in 0..FIXTURE_POSTS {
        let day = rng.random_range(0..FIXTURE_DAYS);
        let secs = rng.random_range(0..86_400);
        let ts = (fixture_start() + Duration::days(day as i64))
            .and_hms_opt(0, 0, 0)
            .expect("midnight")
            + Duration::seconds(secs);

        // every 50th post repeats an earlier text verbatim
        let text = if i % 50 == 49 {
            texts[rng.random_range(0..texts.len())].clone()
        } else {
            let narrative = &NARRATIVES[rng.random_range(0..NARRATIVES.len())];
            let mut words: Vec<&str> = Vec::new();
            if rng.random_bool(0.9) {
                words.push(if rng.random_bool(0.5) {
                    "Bitcoin"
                } else {
                    "bitcoin"
                });
            }
            for _ in 0..rng.random_range(5..=8) {
                words.push(narrative.words.choose(&mut rng).expect("non-empty"));
            }
            for _ in 0..rng.random_range(1..=3) {
                words.push(FILLER.choose(&mut rng).expect("non-empty"));
            }
            for _ in 0..rng.random_range(0..=2) {
                let positive = rng.random_bool(narrative.positivity[regime(day)]);
                let list = if positive { POSITIVE } else { NEGATIVE };
                words.push(list.choose(&mut rng).expect("non-empty"));
            }
            if rng.random_bool(0.4) {
                words.push(NOISE.choose(&mut rng).expect("non-empty"));
            }
            words.shuffle(&mut rng);
            words.join(" ")
        };
        texts.push(text.clone());
        writeln!(
            out,
            "p{:04},{},{}",
            i + 1,
            ts.format("%Y-%m-%dT%H:%M:%SZ"),
            csv_field(&text)
        )
        .expect("string write");
    }
    out
}

/// Config for running the whole pipeline on the bundled files.
pub fn pipeline_conf() -> String {
    "\
# demo pipeline over the bundled synthetic data
posts = posts.csv
prices = prices.csv
seed = 42
k_max = 20
alpha = 0.1
beta = 0.1
n_iters = 30
stopword_threshold = 0.4
manual_stopwords = hodl
sentiment_variant = cs2
min_seg = 20
trim = 0.05
window_before = 15
window_after = 15
"
    .to_string()
}

/// Write `posts.csv`, `prices.csv` and `pipeline.conf` into `dir`.
pub fn write_fixture(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, contents) in [
        ("posts.csv", posts_csv()),
        ("prices.csv", price_csv()),
        ("pipeline.conf", pipeline_conf()),
    ] {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_corpus_shape() {
        let c = disjoint_vocab_corpus(4, 50, 100, 8, 1);
        assert_eq!(c.docs.len(), 100);
        assert_eq!(c.vocab_size, 200);
        for (doc, &g) in c.docs.iter().zip(&c.groups) {
            assert_eq!(doc.len(), 8);
            assert!(doc.iter().all(|&w| w as usize / 50 == g));
        }
    }

    #[test]
    fn fixture_is_deterministic() {
        assert_eq!(posts_csv(), posts_csv());
        assert_eq!(price_csv(), price_csv());
        assert_eq!(posts_csv().lines().count(), FIXTURE_POSTS + 1);
        assert_eq!(price_csv().lines().count(), FIXTURE_DAYS + 1);
    }
}
