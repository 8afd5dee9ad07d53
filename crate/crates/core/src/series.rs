//! Per-narrative daily sentiment series, co-movement statistics and
//! distribution summaries.
//!
//! A day with no posts for a narrative is absent from its series. It is a gap,
//! never a zero: it contributes no pair to a correlation and exports as an
//! empty CSV cell.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::PriceSeries;
use crate::error::{Error, Result};

/// Values keyed by calendar day.
pub type DaySeries = BTreeMap<NaiveDate, f64>;

/// Cluster id → narrative label. Unmapped clusters are called `cluster-<id>`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    labels: BTreeMap<usize, String>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cluster: usize, label: &str) -> Result<()> {
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "empty label for cluster {cluster}"
            )));
        }
        self.labels.insert(cluster, label.to_string());
        Ok(())
    }

    pub fn label(&self, cluster: usize) -> String {
        self.labels
            .get(&cluster)
            .cloned()
            .unwrap_or_else(|| format!("cluster-{cluster}"))
    }

    /// Parse `cluster_id=label` lines; `#` starts a comment line.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut map = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, label) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("<label map>", i + 1, "expected cluster_id=label"))?;
            let id: usize = id.trim().parse().map_err(|_| {
                Error::parse("<label map>", i + 1, format!("bad cluster id '{id}'"))
            })?;
            map.insert(id, label)
                .map_err(|e| Error::parse("<label map>", i + 1, e.to_string()))?;
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::parse(path, line, msg),
            other => other,
        })
    }

    /// Every key must be a cluster id below `k_max`.
    pub fn validate(&self, k_max: usize) -> Result<()> {
        match self.labels.keys().find(|&&k| k >= k_max) {
            Some(k) => Err(Error::InvalidParameter(format!(
                "label map names cluster {k}, but k_max is {k_max}"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayStat {
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeSeries {
    pub label: String,
    pub days: BTreeMap<NaiveDate, DayStat>,
}

impl NarrativeSeries {
    pub fn means(&self) -> DaySeries {
        self.days.iter().map(|(d, s)| (*d, s.mean)).collect()
    }

    pub fn total_posts(&self) -> usize {
        self.days.values().map(|s| s.count).sum()
    }
}

fn check_keys<A, B>(
    left: &BTreeMap<String, A>,
    right: &BTreeMap<String, B>,
    what: &str,
) -> Result<()> {
    if left.len() == right.len() && left.keys().zip(right.keys()).all(|(a, b)| a == b) {
        return Ok(());
    }
    let missing = left.keys().find(|k| !right.contains_key(*k));
    let extra = right.keys().find(|k| !left.contains_key(*k));
    Err(Error::KeyMismatch(format!(
        "{what}: first missing {:?}, first unexpected {:?}",
        missing, extra
    )))
}

fn check_score(id: &str, v: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "composite {v} for {id} outside [-1, 1]"
        )))
    }
}

/// Mean composite per (narrative, day). All three maps must share one key set.
/// Series come back sorted by label.
pub fn build_series(
    labels: &BTreeMap<String, usize>,
    composites: &BTreeMap<String, f64>,
    days: &BTreeMap<String, NaiveDate>,
    map: &LabelMap,
) -> Result<Vec<NarrativeSeries>> {
    check_keys(labels, composites, "composites")?;
    check_keys(labels, days, "days")?;

    let mut sums: BTreeMap<String, BTreeMap<NaiveDate, (f64, usize)>> = BTreeMap::new();
    for (id, &cluster) in labels {
        let score = composites[id];
        check_score(id, score)?;
        let slot = sums
            .entry(map.label(cluster))
            .or_default()
            .entry(days[id])
            .or_insert((0.0, 0));
        slot.0 += score;
        slot.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(label, by_day)| NarrativeSeries {
            label,
            days: by_day
                .into_iter()
                .map(|(d, (sum, count))| {
                    let mean = (sum / count as f64).clamp(-1.0, 1.0);
                    (d, DayStat { mean, count })
                })
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

impl FromStr for CorrelationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pearson" => Ok(Self::Pearson),
            "spearman" => Ok(Self::Spearman),
            other => Err(Error::InvalidParameter(format!(
                "unknown correlation '{other}'"
            ))),
        }
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties share their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Correlation over the days present in both series.
pub fn correlate(a: &DaySeries, b: &DaySeries, method: CorrelationMethod) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .iter()
        .filter_map(|(d, &va)| b.get(d).map(|&vb| (va, vb)))
        .unzip();
    if x.len() < 3 {
        return Err(Error::InsufficientOverlap(x.len()));
    }
    match method {
        CorrelationMethod::Pearson => pearson(&x, &y),
        CorrelationMethod::Spearman => pearson(&ranks(&x), &ranks(&y)),
    }
}

/// Centered moving average over calendar days. `window` must be odd; days
/// missing from the input stay missing and are not averaged in.
pub fn smooth(series: &DaySeries, window: usize) -> Result<DaySeries> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "smoothing window {window} must be odd"
        )));
    }
    let half = Duration::days((window / 2) as i64);
    Ok(series
        .keys()
        .map(|&d| {
            let (sum, n) = series
                .range(d - half..=d + half)
                .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
            (d, sum / n as f64)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolinSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Order statistics of a non-empty sample. Quartiles are medians of the lower
/// and upper halves, excluding the overall median when `n` is odd.
pub fn order_stats(label: &str, values: &[f64]) -> Option<ViolinSummary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = median_sorted(&v);
    let (q1, q3) = if n == 1 {
        (v[0], v[0])
    } else {
        (
            median_sorted(&v[..n / 2]),
            median_sorted(&v[n.div_ceil(2)..]),
        )
    };
    Some(ViolinSummary {
        label: label.to_string(),
        n,
        mean: v.iter().sum::<f64>() / n as f64,
        median,
        q1,
        q3,
        min: v[0],
        max: v[n - 1],
    })
}

/// Per-narrative distribution of per-post composites, sorted by label.
pub fn violin_summary(
    labels: &BTreeMap<String, usize>,
    composites: &BTreeMap<String, f64>,
    map: &LabelMap,
) -> Result<Vec<ViolinSummary>> {
    check_keys(labels, composites, "composites")?;
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (id, &cluster) in labels {
        groups
            .entry(map.label(cluster))
            .or_default()
            .push(composites[id]);
    }
    Ok(groups
        .iter()
        .filter_map(|(label, values)| order_stats(label, values))
        .collect())
}

fn fmt_f64(v: f64) -> String {
    // Display prints the shortest string that parses back to the same value
    format!("{v}")
}

/// Joined CSV: `date,log_close`, then `<label>_mean,<label>_count` per
/// narrative. One row per date seen in the prices or any series; missing
/// values are empty cells.
pub fn export_joined(series: &[NarrativeSeries], prices: &PriceSeries, path: &Path) -> Result<()> {
    let log_close: BTreeMap<NaiveDate, f64> = prices
        .points()
        .iter()
        .map(|p| (p.date, p.close.ln()))
        .collect();
    let mut dates: BTreeSet<NaiveDate> = log_close.keys().copied().collect();
    for s in series {
        dates.extend(s.days.keys().copied());
    }

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["date".to_string(), "log_close".to_string()];
    for s in series {
        header.push(format!("{}_mean", s.label));
        header.push(format!("{}_count", s.label));
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;

    for d in dates {
        let mut row = vec![
            d.format("%Y-%m-%d").to_string(),
            log_close.get(&d).map(|v| fmt_f64(*v)).unwrap_or_default(),
        ];
        for s in series {
            match s.days.get(&d) {
                Some(stat) => {
                    row.push(fmt_f64(stat.mean));
                    row.push(stat.count.to_string());
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joined {
    pub log_close: DaySeries,
    pub series: Vec<NarrativeSeries>,
}

/// Read back a file written by [`export_joined`].
pub fn read_joined(path: &Path) -> Result<Joined> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.len() < 2
        || (header.len() - 2) % 2 != 0
        || &header[0] != "date"
        || &header[1] != "log_close"
    {
        return Err(Error::parse(path, 1, "unexpected header"));
    }
    let mut series: Vec<NarrativeSeries> = Vec::new();
    for i in (2..header.len()).step_by(2) {
        let label = header[i].strip_suffix("_mean").ok_or_else(|| {
            Error::parse(
                path,
                1,
                format!("column '{}' is not a _mean column", &header[i]),
            )
        })?;
        series.push(NarrativeSeries {
            label: label.to_string(),
            days: BTreeMap::new(),
        });
    }

    let mut log_close = DaySeries::new();
    for (n, record) in rdr.records().enumerate() {
        let line = n + 2;
        let record = record.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| Error::parse(path, line, format!("bad {what}"));
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|_| bad("date"))?;
        if !record[1].is_empty() {
            log_close.insert(date, record[1].parse().map_err(|_| bad("log_close"))?);
        }
        for (j, s) in series.iter_mut().enumerate() {
            let (mean, count) = (&record[2 + 2 * j], &record[3 + 2 * j]);
            if mean.is_empty() {
                continue;
            }
            s.days.insert(
                date,
                DayStat {
                    mean: mean.parse().map_err(|_| bad("mean"))?,
                    count: count.parse().map_err(|_| bad("count"))?,
                },
            );
        }
    }
    Ok(Joined { log_close, series })
}
