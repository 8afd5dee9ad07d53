//! Structural breaks in the level of a (log) price series by penalized binary
//! segmentation.
//!
//! The first and last `trim` fraction of samples are excluded from analysis.
//! Splitting a segment of length `n` at `τ` lowers the squared error around
//! the segment mean by `n_l·n_r/n · (mean_l − mean_r)²`. The best split over
//! all current segments is accepted while that reduction exceeds
//! `penalty · σ̂² · ln(T)`, where `T` is the analyzed length and σ̂² a
//! noise variance estimated from the median absolute deviation of first
//! differences (insensitive to the level shifts themselves).

use std::fs::File;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::PriceSeries;
use crate::error::{Error, Result};

/// Consistency constant for the MAD of a normal sample.
const MAD_SCALE: f64 = 1.482_602_218_505_602;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakParams {
    /// fraction of samples excluded at each end, in `[0, 0.5)`
    pub trim: f64,
    /// minimum samples between a break and a segment edge
    pub min_seg: usize,
    pub max_breaks: usize,
    pub penalty: f64,
}

impl Default for BreakParams {
    fn default() -> Self {
        Self {
            trim: 0.05,
            min_seg: 20,
            max_breaks: 12,
            // ln T per free parameter, and a break adds two (location and mean)
            penalty: 2.0,
        }
    }
}

impl BreakParams {
    fn validate(&self, len: usize) -> Result<()> {
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::InvalidParameter(format!(
                "trim {} outside [0, 0.5)",
                self.trim
            )));
        }
        if self.min_seg == 0 {
            return Err(Error::InvalidParameter("min_seg must be positive".into()));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "penalty {} must be >= 0",
                self.penalty
            )));
        }
        let needed = 2 * self.min_seg;
        if len < needed {
            return Err(Error::SeriesTooShort { len, needed });
        }
        Ok(())
    }
}

/// Breaks found in a plain signal. Indices refer to the full signal; a break
/// at `i` means sample `i` is the first of the new regime.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBreaks {
    pub indices: Vec<usize>,
    /// squared-error reduction of each break, aligned with `indices`
    pub criteria: Vec<f64>,
    /// means of the analyzed segments, `indices.len() + 1` entries
    pub segment_means: Vec<f64>,
    /// analyzed half-open range `[start, end)`
    pub analyzed: (usize, usize),
    pub noise_var: f64,
    pub threshold: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Robust noise variance from first differences.
fn noise_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mut diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let center = median(&mut diffs);
    let mut dev: Vec<f64> = diffs.iter().map(|d| (d - center).abs()).collect();
    let sigma = MAD_SCALE * median(&mut dev) / std::f64::consts::SQRT_2;
    sigma * sigma
}

/// Best split of `x[start..end]` as `(τ, reduction)`, `τ` absolute.
fn best_split(x: &[f64], start: usize, end: usize, min_seg: usize) -> Option<(usize, f64)> {
    let n = end - start;
    if n < 2 * min_seg {
        return None;
    }
    let seg = &x[start..end];
    let mean = seg.iter().sum::<f64>() / n as f64;
    let total: f64 = seg.iter().map(|v| v - mean).sum();
    let mut left = 0.0;
    let mut best: Option<(usize, f64)> = None;
    // left holds the centered sum of seg[..i]
    for i in 1..=n - min_seg {
        left += seg[i - 1] - mean;
        if i < min_seg {
            continue;
        }
        let (nl, nr) = (i as f64, (n - i) as f64);
        let diff = left / nl - (total - left) / nr;
        let reduction = nl * nr / n as f64 * diff * diff;
        if best.is_none_or(|(_, r)| reduction > r) {
            best = Some((start + i, reduction));
        }
    }
    best
}

/// Binary segmentation on an arbitrary signal.
pub fn segment_signal(x: &[f64], params: &BreakParams) -> Result<SignalBreaks> {
    params.validate(x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "signal contains non-finite values".into(),
        ));
    }
    let trimmed = (params.trim * x.len() as f64).ceil() as usize;
    let (lo, hi) = (trimmed, x.len() - trimmed);
    let region = &x[lo..hi];
    let len = region.len();

    let scale = region.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64;
    let floor = 1e-12 * scale.max(1.0);
    let noise_var = noise_variance(region);
    let threshold = params.penalty * noise_var.max(floor) * (len.max(2) as f64).ln();

    // (start, end, best split) over the region's own coordinates
    type Segment = (usize, usize, Option<(usize, f64)>);
    let mut segments: Vec<Segment> = vec![(0, len, best_split(region, 0, len, params.min_seg))];
    let mut accepted: Vec<(usize, f64)> = Vec::new();

    while accepted.len() < params.max_breaks {
        let candidate = segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.2.map(|(tau, r)| (i, tau, r)))
            .fold(None, |best: Option<(usize, usize, f64)>, c| match best {
                Some(b) if b.2 >= c.2 => Some(b),
                _ => Some(c),
            });
        let Some((i, tau, reduction)) = candidate else {
            break;
        };
        if reduction <= threshold {
            break;
        }
        let (start, end, _) = segments[i];
        segments[i] = (start, tau, best_split(region, start, tau, params.min_seg));
        segments.insert(
            i + 1,
            (tau, end, best_split(region, tau, end, params.min_seg)),
        );
        accepted.push((tau, reduction));
    }

    accepted.sort_by_key(|&(tau, _)| tau);
    let segment_means = segments
        .iter()
        .map(|&(s, e, _)| region[s..e].iter().sum::<f64>() / (e - s) as f64)
        .collect();
    Ok(SignalBreaks {
        indices: accepted.iter().map(|&(tau, _)| lo + tau).collect(),
        criteria: accepted.iter().map(|&(_, r)| r).collect(),
        segment_means,
        analyzed: (lo, hi),
        noise_var,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Break {
    pub index: usize,
    pub date: NaiveDate,
    pub left_mean: f64,
    pub right_mean: f64,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakResult {
    pub breaks: Vec<Break>,
    /// means of log close per analyzed segment
    pub segment_means: Vec<f64>,
    pub trim: f64,
    pub analyzed: (NaiveDate, NaiveDate),
}

impl BreakResult {
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.breaks.iter().map(|b| b.date).collect()
    }
}

/// Breaks in the log closing price.
pub fn detect_breaks(series: &PriceSeries, params: &BreakParams) -> Result<BreakResult> {
    let signal = series.log_closes();
    let found = segment_signal(&signal, params)?;
    let dates: Vec<NaiveDate> = series.dates().collect();
    let breaks = found
        .indices
        .iter()
        .zip(&found.criteria)
        .enumerate()
        .map(|(j, (&index, &criterion))| Break {
            index,
            date: dates[index],
            left_mean: found.segment_means[j],
            right_mean: found.segment_means[j + 1],
            criterion,
        })
        .collect();
    Ok(BreakResult {
        breaks,
        segment_means: found.segment_means,
        trim: params.trim,
        analyzed: (dates[found.analyzed.0], dates[found.analyzed.1 - 1]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Windows {
    pub windows: Vec<Window>,
    /// pairs of window indices that overlap
    pub overlaps: Vec<(usize, usize)>,
}

/// `[date − before, date + after]` around each break date.
pub fn windows_for_dates(dates: &[NaiveDate], before_days: u32, after_days: u32) -> Windows {
    let windows: Vec<Window> = dates
        .iter()
        .map(|&d| Window {
            start: d - Duration::days(before_days as i64),
            end: d + Duration::days(after_days as i64),
        })
        .collect();
    let mut overlaps = Vec::new();
    for i in 0..windows.len() {
        for j in i + 1..windows.len() {
            if windows[i].start <= windows[j].end && windows[j].start <= windows[i].end {
                log::warn!(
                    "collection windows overlap: {}..{} and {}..{}",
                    windows[i].start,
                    windows[i].end,
                    windows[j].start,
                    windows[j].end
                );
                overlaps.push((i, j));
            }
        }
    }
    Windows { windows, overlaps }
}

pub fn windows_around(breaks: &BreakResult, before_days: u32, after_days: u32) -> Windows {
    windows_for_dates(&breaks.dates(), before_days, after_days)
}

#[derive(Serialize)]
struct BreakRow {
    break_date: NaiveDate,
    left_mean: f64,
    right_mean: f64,
    criterion: f64,
}

/// CSV `break_date,left_mean,right_mean,criterion`.
pub fn write_breaks_csv(path: &Path, result: &BreakResult) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    w.write_record(["break_date", "left_mean", "right_mean", "criterion"])
        .map_err(|e| Error::csv(path, e))?;
    for b in &result.breaks {
        w.serialize(BreakRow {
            break_date: b.date,
            left_mean: b.left_mean,
            right_mean: b.right_mean,
            criterion: b.criterion,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
