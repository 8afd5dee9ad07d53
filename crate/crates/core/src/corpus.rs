//! Ingestion of posts and price data, deduplication, and the token vocabulary.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One ingested short post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
}

impl RawPost {
    /// UTC calendar day the post falls on.
    pub fn day(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostFormat {
    Csv,
    Jsonl,
}

impl FromStr for PostFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(PostFormat::Csv),
            "jsonl" | "ndjson" => Ok(PostFormat::Jsonl),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl PostFormat {
    /// Guess the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        ext.parse()
    }
}

/// Posts that survived loading plus the number of rows that were dropped.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub posts: Vec<RawPost>,
    pub dropped: usize,
}

/// Parse an ISO-8601 timestamp. Offsets are converted to UTC; naive values
/// are taken to be UTC already. Sub-second precision is discarded.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    let ts = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.with_timezone(&Utc)
    } else {
        let naive = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
            .iter()
            .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
            .or_else(|| {
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .ok()
                    .and_then(|d| d.and_hms_opt(0, 0, 0))
            })?;
        naive.and_utc()
    };
    ts.with_nanosecond(0)
}

fn accept(id: Option<&str>, ts: Option<&str>, text: Option<&str>) -> Option<RawPost> {
    let id = id.map(str::trim).filter(|s| !s.is_empty())?;
    let text = text.filter(|t| !t.trim().is_empty())?;
    let timestamp = parse_timestamp(ts?)?;
    Some(RawPost {
        id: id.to_string(),
        timestamp,
        text: text.to_string(),
    })
}

/// Load posts from a CSV (header with `id`, `created_at`, `text`) or JSON-lines
/// file. Rows with a missing id, empty text or unparseable timestamp are
/// dropped and counted. File order is preserved.
pub fn load_posts(path: &Path, format: PostFormat) -> Result<LoadReport> {
    let report = match format {
        PostFormat::Csv => load_posts_csv(path)?,
        PostFormat::Jsonl => load_posts_jsonl(path)?,
    };
    if report.posts.is_empty() {
        return Err(Error::NoRows {
            path: path.to_path_buf(),
            dropped: report.dropped,
        });
    }
    if report.dropped > 0 {
        log::info!("{}: dropped {} rows", path.display(), report.dropped);
    }
    Ok(report)
}

fn load_posts_csv(path: &Path) -> Result<LoadReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.is_empty() {
        return Ok(LoadReport {
            posts: Vec::new(),
            dropped: 0,
        });
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column '{name}'")))
    };
    let (id_col, ts_col, text_col) = (col("id")?, col("created_at")?, col("text")?);

    let mut posts = Vec::new();
    let mut dropped = 0;
    for record in rdr.records() {
        let Ok(record) = record else {
            dropped += 1;
            continue;
        };
        match accept(record.get(id_col), record.get(ts_col), record.get(text_col)) {
            Some(p) => posts.push(p),
            None => dropped += 1,
        }
    }
    Ok(LoadReport { posts, dropped })
}

fn load_posts_jsonl(path: &Path) -> Result<LoadReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut posts = Vec::new();
    let mut dropped = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let Ok(value) = serde_json::from_str::<serde_json::Value>(&line) else {
            dropped += 1;
            continue;
        };
        // numeric ids are common in exported payloads
        let id = match value.get("id") {
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(serde_json::Value::Number(n)) => Some(n.to_string()),
            _ => None,
        };
        let ts = value.get("created_at").and_then(|v| v.as_str());
        let text = value.get("text").and_then(|v| v.as_str());
        match accept(id.as_deref(), ts, text) {
            Some(p) => posts.push(p),
            None => dropped += 1,
        }
    }
    Ok(LoadReport { posts, dropped })
}

/// Keep the first occurrence of each exact text string.
pub fn dedup(posts: &[RawPost]) -> Vec<RawPost> {
    let mut seen = HashSet::with_capacity(posts.len());
    posts
        .iter()
        .filter(|p| seen.insert(p.text.as_str()))
        .cloned()
        .collect()
}

/// Keep posts whose timestamp lies in `[start, end]` (either bound optional).
pub fn filter_window(
    posts: Vec<RawPost>,
    start: Option<DateTime<Utc>>,
    end: Option<DateTime<Utc>>,
) -> Vec<RawPost> {
    posts
        .into_iter()
        .filter(|p| start.is_none_or(|s| p.timestamp >= s) && end.is_none_or(|e| p.timestamp <= e))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub date: NaiveDate,
    pub close: f64,
}

/// Daily closing prices with strictly increasing dates and positive closes.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    points: Vec<PricePoint>,
}

impl PriceSeries {
    pub fn new(points: Vec<PricePoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.close > 0.0) || !p.close.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-positive close {} on {}",
                    p.close, p.date
                )));
            }
            if i > 0 && points[i - 1].date >= p.date {
                return Err(Error::InvalidParameter(format!(
                    "dates not strictly increasing at {}",
                    p.date
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.points.iter().map(|p| p.date)
    }

    pub fn log_closes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.close.ln()).collect()
    }
}

/// Load a `date,close` CSV with `YYYY-MM-DD` dates.
pub fn load_prices(path: &Path) -> Result<PriceSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column '{name}'")))
    };
    let (date_col, close_col) = (col("date")?, col("close")?);

    let mut points: Vec<PricePoint> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::csv(path, e))?;
        let date = NaiveDate::parse_from_str(record.get(date_col).unwrap_or("").trim(), "%Y-%m-%d")
            .map_err(|e| Error::parse(path, line, format!("bad date: {e}")))?;
        let close: f64 = record
            .get(close_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::parse(path, line, format!("bad close: {e}")))?;
        if !(close > 0.0) {
            return Err(Error::parse(
                path,
                line,
                format!("non-positive close {close}"),
            ));
        }
        if let Some(prev) = points.last() {
            if prev.date >= date {
                return Err(Error::parse(
                    path,
                    line,
                    format!("date {date} does not follow {}", prev.date),
                ));
            }
        }
        points.push(PricePoint { date, close });
    }
    PriceSeries::new(points)
}

/// Bidirectional token/id map with dense ids in `[0, len)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Id for `token`, registering it if unseen.
    pub fn register(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn post(id: &str, text: &str) -> RawPost {
        RawPost {
            id: id.into(),
            timestamp: parse_timestamp("2021-05-01T10:00:00Z").unwrap(),
            text: text.into(),
        }
    }

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_drops_empty_text() {
        let f = write_tmp(
            "id,created_at,text\n1,2021-05-01T10:00:00Z,hello world\n2,2021-05-01T11:00:00Z,\n3,2021-05-02 09:30:00,moon soon\n",
            ".csv",
        );
        let report = load_posts(f.path(), PostFormat::Csv).unwrap();
        assert_eq!(report.posts.len(), 2);
        assert_eq!(report.dropped, 1);
        assert_eq!(report.posts[1].id, "3");
        assert_eq!(
            report.posts[1].day(),
            NaiveDate::from_ymd_opt(2021, 5, 2).unwrap()
        );
    }

    #[test]
    fn duplicates_survive_loading() {
        let f = write_tmp(
            "{\"id\":\"a\",\"created_at\":\"2021-05-01T10:00:00+02:00\",\"text\":\"same\"}\n\
             {\"id\":7,\"created_at\":\"2021-05-01T11:00:00Z\",\"text\":\"same\"}\n\
             {\"id\":\"c\",\"created_at\":\"not a date\",\"text\":\"x\"}\n",
            ".jsonl",
        );
        let report = load_posts(f.path(), PostFormat::Jsonl).unwrap();
        assert_eq!(report.posts.len(), 2);
        assert_eq!(report.dropped, 1);
        assert_eq!(report.posts[1].id, "7");
        assert_eq!(
            report.posts[0].timestamp.to_rfc3339(),
            "2021-05-01T08:00:00+00:00"
        );
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("", ".csv");
        assert!(matches!(
            load_posts(f.path(), PostFormat::Csv),
            Err(Error::NoRows { .. })
        ));
        let f = write_tmp("id,created_at,text\n", ".csv");
        assert!(matches!(
            load_posts(f.path(), PostFormat::Csv),
            Err(Error::NoRows { .. })
        ));
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(
            "xml".parse::<PostFormat>(),
            Err(Error::UnknownFormat(_))
        ));
        assert_eq!(
            PostFormat::from_path(Path::new("a.jsonl")).unwrap(),
            PostFormat::Jsonl
        );
    }

    #[test]
    fn dedup_examples() {
        let a = post("1", "A");
        let out = dedup(&[a.clone(), post("2", "A"), post("3", "B")]);
        assert_eq!(
            out.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(),
            ["1", "3"]
        );

        let distinct: Vec<_> = (0..5)
            .map(|i| post(&i.to_string(), &format!("t{i}")))
            .collect();
        assert_eq!(dedup(&distinct), distinct);

        // 10 posts, 4 share one text
        let mut ten: Vec<_> = (0..6)
            .map(|i| post(&i.to_string(), &format!("u{i}")))
            .collect();
        ten.extend((6..10).map(|i| post(&i.to_string(), "shared")));
        assert_eq!(dedup(&ten).len(), 7);
    }

    #[test]
    fn window_filter() {
        let early = post("1", "a");
        let mut late = post("2", "b");
        late.timestamp = parse_timestamp("2021-06-01T00:00:00Z").unwrap();
        let out = filter_window(
            vec![early, late],
            parse_timestamp("2021-05-15T00:00:00Z"),
            None,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "2");
    }

    #[test]
    fn prices() {
        let f = write_tmp(
            "date,close\n2021-01-01,10\n2021-01-02,11\n2021-01-03,12.5\n2021-01-04,9\n2021-01-05,10\n",
            ".csv",
        );
        assert_eq!(load_prices(f.path()).unwrap().len(), 5);

        let f = write_tmp("date,close\n2021-01-01,10\n2021-01-02,0\n", ".csv");
        assert!(load_prices(f.path()).is_err());

        let f = write_tmp("date,close\n2021-01-02,10\n2021-01-01,11\n", ".csv");
        assert!(load_prices(f.path()).is_err());
    }

    #[test]
    fn vocabulary_ids_are_dense() {
        let mut v = Vocabulary::new();
        assert_eq!(v.register("moon"), 0);
        assert_eq!(v.register("btc"), 1);
        assert_eq!(v.register("moon"), 0);
        assert_eq!(v.len(), 2);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.lookup(t), Some(i as u32));
            assert_eq!(v.token(i as u32), Some(t.as_str()));
        }
    }
}
