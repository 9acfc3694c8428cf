//! Interval-matching detection of meme periods from two rank paths.
//!
//! Per pair: take the rank-1 spans, bridge transitory falls, and keep spans
//! that are long enough and preceded by enough clean days. Across pairs:
//! match spans whose starts are close, intersect matched spans, and keep
//! intersections that are long enough. The three condition masks the report
//! carries are: jointly cointegrated (falls bridged), in a matched span
//! union, and jointly persistence-passing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regimes::RegimeIntervals;
use crate::vecm::RankPath;

/// Whether bridging or persistence filtering runs first within a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineOrder {
    /// Bridge transitory falls first so they cannot split a long span into
    /// fragments the duration filter would kill.
    #[default]
    MergeThenFilter,
    /// Duration/persistence filter first, then bridge the survivors.
    FilterThenMerge,
}

fn default_dc() -> usize {
    2
}
fn default_dp() -> usize {
    2
}
fn default_df() -> usize {
    1
}
fn default_dw() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Minimum duration of a cointegrated span, in trading days.
    #[serde(default = "default_dc")]
    pub d_c: usize,
    /// Minimum run of non-cointegrated days required before a span starts.
    #[serde(default = "default_dp")]
    pub d_p: usize,
    /// Maximum fall duration that is bridged away between spans.
    #[serde(default = "default_df")]
    pub d_f: usize,
    /// Maximum difference between matched span starts.
    #[serde(default = "default_dw")]
    pub d_w: usize,
    #[serde(default)]
    pub order: PipelineOrder,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { d_c: 2, d_p: 2, d_f: 1, d_w: 1, order: PipelineOrder::MergeThenFilter }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_c < 1 {
            return Err(Error::Config("d_c must be at least 1".into()));
        }
        Ok(())
    }
}

/// Inclusive day-index interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    /// Inclusive day count; a span is never empty.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, day: usize) -> bool {
        (self.start..=self.end).contains(&day)
    }
}

/// Sorted, disjoint rank-1 spans over a horizon of T days.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CointSpans {
    pub spans: Vec<Span>,
    pub horizon: usize,
}

impl CointSpans {
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.spans.iter().enumerate() {
            if s.end < s.start || s.end >= self.horizon {
                return Err(Error::Validation(format!(
                    "span ({}, {}) outside horizon {}",
                    s.start, s.end, self.horizon
                )));
            }
            if i > 0 && s.start <= self.spans[i - 1].end {
                return Err(Error::Validation(format!(
                    "spans not sorted and disjoint at index {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn covers(&self, day: usize) -> bool {
        self.spans.iter().any(|s| s.contains(day))
    }
}

/// Rank-1 intervals of a regime decomposition.
pub fn coint_spans(intervals: &RegimeIntervals) -> CointSpans {
    let spans = intervals
        .intervals
        .iter()
        .filter(|(_, _, rank)| *rank == 1)
        .map(|(start, end, _)| Span { start: *start, end: *end })
        .collect();
    CointSpans { spans, horizon: intervals.calendar.len() }
}

/// Rank-1 runs straight from a rank sequence.
pub fn coint_spans_from_ranks(ranks: &[usize]) -> CointSpans {
    let mut spans = Vec::new();
    let mut start = None;
    for (t, r) in ranks.iter().enumerate() {
        match (start, *r == 1) {
            (None, true) => start = Some(t),
            (Some(s), false) => {
                spans.push(Span { start: s, end: t - 1 });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(Span { start: s, end: ranks.len() - 1 });
    }
    CointSpans { spans, horizon: ranks.len() }
}

/// Merge consecutive spans separated by gaps of at most d_f days.
pub fn merge_falls(spans: &CointSpans, d_f: usize) -> CointSpans {
    let mut out: Vec<Span> = Vec::with_capacity(spans.spans.len());
    for s in &spans.spans {
        match out.last_mut() {
            Some(prev) if s.start - prev.end - 1 <= d_f => prev.end = s.end,
            _ => out.push(*s),
        }
    }
    CointSpans { spans: out, horizon: spans.horizon }
}

/// Keep spans lasting at least d_c days whose start follows at least d_p
/// consecutive non-cointegrated days. The clean-day count before a span is
/// its gap to the previous span in the input, or its start index if none
/// precedes it, so a span beginning the sample fails whenever d_p ≥ 1.
pub fn persistence_filter(spans: &CointSpans, d_c: usize, d_p: usize) -> CointSpans {
    let mut out = Vec::with_capacity(spans.spans.len());
    for (i, s) in spans.spans.iter().enumerate() {
        let clean = if i == 0 { s.start } else { s.start - spans.spans[i - 1].end - 1 };
        if s.len() >= d_c && clean >= d_p {
            out.push(*s);
        }
    }
    CointSpans { spans: out, horizon: spans.horizon }
}

/// Bridged and persistence-passing span sets of one pair. Masks need both:
/// joint cointegration is judged on the bridged spans, matching and the
/// persistence mask on the filtered ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSpans {
    pub merged: CointSpans,
    pub filtered: CointSpans,
}

/// Run one pair's span pipeline in the configured order.
pub fn pair_spans(ranks: &[usize], cfg: &DetectorConfig) -> PairSpans {
    let raw = coint_spans_from_ranks(ranks);
    let merged = merge_falls(&raw, cfg.d_f);
    let filtered = match cfg.order {
        PipelineOrder::MergeThenFilter => persistence_filter(&merged, cfg.d_c, cfg.d_p),
        PipelineOrder::FilterThenMerge => {
            merge_falls(&persistence_filter(&raw, cfg.d_c, cfg.d_p), cfg.d_f)
        }
    };
    PairSpans { merged, filtered }
}

/// A meme-period report over one shared calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct MementumReport {
    pub calendar: Vec<NaiveDate>,
    /// Accepted periods as inclusive day-index pairs, sorted.
    pub periods: Vec<(usize, usize)>,
    pub cond1_mask: Vec<bool>,
    pub cond2_mask: Vec<bool>,
    pub cond3_mask: Vec<bool>,
    pub config: DetectorConfig,
    /// Hashes of the two regime inputs, price pair first.
    pub input_hashes: Vec<String>,
    /// Hash of the estimation run the inputs came from, when known.
    pub run_config_hash: String,
}

impl MementumReport {
    pub fn period_dates(&self) -> Vec<(NaiveDate, NaiveDate)> {
        self.periods
            .iter()
            .map(|(s, e)| (self.calendar[*s], self.calendar[*e]))
            .collect()
    }

    /// True on days inside an accepted period.
    pub fn mementum_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.calendar.len()];
        for (s, e) in &self.periods {
            for d in mask.iter_mut().take(e + 1).skip(*s) {
                *d = true;
            }
        }
        mask
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.calendar.len();
        if self.cond1_mask.len() != t || self.cond2_mask.len() != t || self.cond3_mask.len() != t {
            return Err(Error::Dim("mask lengths differ from the calendar".into()));
        }
        for (s, e) in &self.periods {
            if *e < *s || *e >= t {
                return Err(Error::Validation(format!("period ({s}, {e}) out of range")));
            }
            if e - s + 1 < self.config.d_c {
                return Err(Error::Validation(format!(
                    "period ({s}, {e}) shorter than d_c = {}",
                    self.config.d_c
                )));
            }
            for d in *s..=*e {
                if !(self.cond1_mask[d] && self.cond2_mask[d] && self.cond3_mask[d]) {
                    return Err(Error::Validation(format!(
                        "period ({s}, {e}) covers day {d} where a condition fails"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Match filtered spans across the two pairs by start date, intersect each
/// matched pair of spans, and keep intersections of at least d_c days.
pub fn match_and_intersect(
    pr: &PairSpans,
    vol: &PairSpans,
    cfg: &DetectorConfig,
    calendar: &[NaiveDate],
) -> Result<MementumReport> {
    cfg.validate()?;
    let t = calendar.len();
    for spans in [&pr.merged, &pr.filtered, &vol.merged, &vol.filtered] {
        spans.validate()?;
        if spans.horizon != t {
            return Err(Error::Dim(format!(
                "span horizon {} differs from calendar length {t}",
                spans.horizon
            )));
        }
    }

    // Candidate matches sorted by start distance, then by position; each
    // span participates in at most one match.
    let mut candidates = Vec::new();
    for (i, a) in pr.filtered.spans.iter().enumerate() {
        for (j, b) in vol.filtered.spans.iter().enumerate() {
            let diff = a.start.abs_diff(b.start);
            if diff <= cfg.d_w {
                candidates.push((diff, a.start.min(b.start), i, j));
            }
        }
    }
    candidates.sort();
    let mut pr_used = vec![false; pr.filtered.spans.len()];
    let mut vol_used = vec![false; vol.filtered.spans.len()];
    let mut matches = Vec::new();
    for (_, _, i, j) in candidates {
        if !pr_used[i] && !vol_used[j] {
            pr_used[i] = true;
            vol_used[j] = true;
            matches.push((pr.filtered.spans[i], vol.filtered.spans[j]));
        }
    }
    matches.sort_by_key(|(a, _)| a.start);

    let mut cond2_mask = vec![false; t];
    let mut periods = Vec::new();
    for (a, b) in &matches {
        for d in a.start..=a.end {
            cond2_mask[d] = true;
        }
        for d in b.start..=b.end {
            cond2_mask[d] = true;
        }
        let start = a.start.max(b.start);
        let end = a.end.min(b.end);
        if end >= start && end - start + 1 >= cfg.d_c {
            periods.push((start, end));
        }
    }
    periods.sort();

    let cond1_mask: Vec<bool> = (0..t)
        .map(|d| pr.merged.covers(d) && vol.merged.covers(d))
        .collect();
    let cond3_mask: Vec<bool> = (0..t)
        .map(|d| pr.filtered.covers(d) && vol.filtered.covers(d))
        .collect();

    let report = MementumReport {
        calendar: calendar.to_vec(),
        periods,
        cond1_mask,
        cond2_mask,
        cond3_mask,
        config: *cfg,
        input_hashes: Vec::new(),
        run_config_hash: String::new(),
    };
    report.validate()?;
    Ok(report)
}

/// Full pipeline from two rank paths on a shared calendar.
pub fn detect(
    pr_path: &RankPath,
    vol_path: &RankPath,
    calendar: &[NaiveDate],
    cfg: &DetectorConfig,
) -> Result<MementumReport> {
    if pr_path.len() != vol_path.len() || pr_path.len() != calendar.len() {
        return Err(Error::Dim(format!(
            "path lengths {} and {} must both match the calendar length {}",
            pr_path.len(),
            vol_path.len(),
            calendar.len()
        )));
    }
    let pr = pair_spans(&pr_path.ranks(), cfg);
    let vol = pair_spans(&vol_path.ranks(), cfg);
    match_and_intersect(&pr, &vol, cfg, calendar)
}

/// JSON document form of a report; dates are ISO-8601 strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub config: DetectorConfig,
    pub input_hashes: Vec<String>,
    #[serde(default)]
    pub run_config_hash: String,
    pub calendar: Vec<NaiveDate>,
    pub periods: Vec<(NaiveDate, NaiveDate)>,
    pub cond1_mask: Vec<bool>,
    pub cond2_mask: Vec<bool>,
    pub cond3_mask: Vec<bool>,
    pub mementum_mask: Vec<bool>,
}

impl MementumReport {
    pub fn to_doc(&self) -> ReportDoc {
        ReportDoc {
            config: self.config,
            input_hashes: self.input_hashes.clone(),
            run_config_hash: self.run_config_hash.clone(),
            calendar: self.calendar.clone(),
            periods: self.period_dates(),
            cond1_mask: self.cond1_mask.clone(),
            cond2_mask: self.cond2_mask.clone(),
            cond3_mask: self.cond3_mask.clone(),
            mementum_mask: self.mementum_mask(),
        }
    }
}

pub fn write_report_json(path: &Path, report: &MementumReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &report.to_doc())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_report_json(path: &Path) -> Result<ReportDoc> {
    let r = std::io::BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

/// `date,cond1,cond2,cond3,mementum` rows with 0/1 flags, preceded by the
/// run hash when one is known.
pub fn write_masks_csv(path: &Path, report: &MementumReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if !report.run_config_hash.is_empty() {
        writeln!(w, "# config_hash: {}", report.run_config_hash)?;
    }
    writeln!(w, "date,cond1,cond2,cond3,mementum")?;
    let mem = report.mementum_mask();
    for (t, date) in report.calendar.iter().enumerate() {
        writeln!(
            w,
            "{date},{},{},{},{}",
            report.cond1_mask[t] as u8,
            report.cond2_mask[t] as u8,
            report.cond3_mask[t] as u8,
            mem[t] as u8
        )?;
    }
    w.flush()?;
    Ok(())
}
