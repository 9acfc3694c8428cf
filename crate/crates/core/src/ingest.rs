//! Loading, validation, alignment, and transformation of the raw daily
//! series into the bivariate pairs the model consumes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum pair length the estimation pipeline accepts.
pub const DEFAULT_MIN_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Price,
    Volume,
    Tweets,
}

impl SeriesKind {
    fn name(self) -> &'static str {
        match self {
            SeriesKind::Price => "price",
            SeriesKind::Volume => "volume",
            SeriesKind::Tweets => "tweets",
        }
    }
}

/// One raw daily series as found on disk: strictly increasing dates, kind-
/// dependent value constraints (prices positive; volume and post counts
/// nonnegative integers stored as reals).
#[derive(Debug, Clone)]
pub struct RawSeries {
    pub ticker: String,
    pub kind: SeriesKind,
    pub observations: Vec<(NaiveDate, f64)>,
}

impl RawSeries {
    pub fn new(
        ticker: impl Into<String>,
        kind: SeriesKind,
        mut observations: Vec<(NaiveDate, f64)>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Validation(format!(
                "no observations in {} series",
                kind.name()
            )));
        }
        observations.sort_by_key(|(d, _)| *d);
        for w in observations.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Validation(format!(
                    "duplicate date {} in {} series",
                    w[0].0,
                    kind.name()
                )));
            }
        }
        for (date, v) in &observations {
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite {} value on {date}",
                    kind.name()
                )));
            }
            match kind {
                SeriesKind::Price => {
                    if *v <= 0.0 {
                        return Err(Error::Validation(format!(
                            "price must be strictly positive, got {v} on {date}"
                        )));
                    }
                }
                SeriesKind::Volume | SeriesKind::Tweets => {
                    if *v < 0.0 {
                        return Err(Error::Validation(format!(
                            "negative {} count {v} on {date}",
                            kind.name()
                        )));
                    }
                    if v.fract() != 0.0 {
                        return Err(Error::Validation(format!(
                            "{} count must be a whole number, got {v} on {date}",
                            kind.name()
                        )));
                    }
                }
            }
        }
        Ok(Self {
            ticker: ticker.into(),
            kind,
            observations,
        })
    }

    pub fn with_ticker(mut self, ticker: impl Into<String>) -> Self {
        self.ticker = ticker.into();
        self
    }

    fn date_range(&self) -> (NaiveDate, NaiveDate) {
        (
            self.observations.first().unwrap().0,
            self.observations.last().unwrap().0,
        )
    }
}

/// The three series for one ticker on a shared trading-day calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeriesSet {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    pub price: Vec<f64>,
    pub volume: Vec<f64>,
    pub tweets: Vec<f64>,
}

impl AlignedSeriesSet {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.dates.len();
        if t == 0 {
            return Err(Error::Validation("aligned set is empty".into()));
        }
        if self.price.len() != t || self.volume.len() != t || self.tweets.len() != t {
            return Err(Error::Dim(format!(
                "aligned lengths differ: {t} dates, {} price, {} volume, {} tweets",
                self.price.len(),
                self.volume.len(),
                self.tweets.len()
            )));
        }
        if self.dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("aligned dates not strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceTransform {
    Log,
    Level,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountTransform {
    Log1p,
    Level,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeekendPolicy {
    /// Add post counts from non-trading days to the next trading day.
    SumForward,
    /// Discard post counts on non-trading days.
    Drop,
}

/// How the raw levels are mapped into model space, and what happens to post
/// counts that fall on non-trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub price_transform: PriceTransform,
    pub volume_transform: CountTransform,
    pub tweets_transform: CountTransform,
    pub weekend_policy: WeekendPolicy,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self {
            price_transform: PriceTransform::Log,
            volume_transform: CountTransform::Log1p,
            tweets_transform: CountTransform::Log1p,
            weekend_policy: WeekendPolicy::SumForward,
        }
    }
}

impl TransformSpec {
    pub fn levels() -> Self {
        Self {
            price_transform: PriceTransform::Level,
            volume_transform: CountTransform::Level,
            tweets_transform: CountTransform::Level,
            weekend_policy: WeekendPolicy::SumForward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    PrTw,
    VolTw,
}

impl PairKind {
    pub fn labels(self) -> (String, String) {
        match self {
            PairKind::PrTw => ("pr".into(), "tw".into()),
            PairKind::VolTw => ("vol".into(), "tw".into()),
        }
    }
}

/// A transformed bivariate series ready for estimation; rows are days.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSeries {
    pub labels: (String, String),
    pub y: DMatrix<f64>,
    pub dates: Vec<NaiveDate>,
}

impl PairSeries {
    pub fn t_len(&self) -> usize {
        self.y.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.nrows() != self.dates.len() {
            return Err(Error::Dim(format!(
                "pair has {} rows but {} dates",
                self.y.nrows(),
                self.dates.len()
            )));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("pair contains non-finite values".into()));
        }
        Ok(())
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

fn parse_value(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes())
}

/// Parse a two-column `date,value` file. The header row is optional: a first
/// row whose date field does not parse is skipped as a header.
pub fn parse_series_csv(text: &str, kind: SeriesKind, origin: &str) -> Result<RawSeries> {
    let mut obs = Vec::new();
    for (i, rec) in csv_reader(text).records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() < 2 || rec.iter().all(|f| f.is_empty()) {
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            return Err(Error::Parse {
                path: origin.into(),
                row,
                msg: format!("expected two columns, got {}", rec.len()),
            });
        }
        let date = match parse_date(&rec[0]) {
            Some(d) => d,
            None if i == 0 => continue, // header
            None => {
                return Err(Error::Parse {
                    path: origin.into(),
                    row,
                    msg: format!("unparsable date {:?}", &rec[0]),
                })
            }
        };
        let value = parse_value(&rec[1]).ok_or_else(|| Error::Parse {
            path: origin.into(),
            row,
            msg: format!("unparsable number {:?}", &rec[1]),
        })?;
        obs.push((date, value));
    }
    if obs.is_empty() {
        return Err(Error::Validation(format!("no observations in {origin}")));
    }
    RawSeries::new("", kind, obs)
}

pub fn load_csv(path: &Path, kind: SeriesKind) -> Result<RawSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_series_csv(&text, kind, &path.display().to_string())
}

/// Parse a four-column `date,price,volume,tweets` file into the three raw
/// series (ticker left empty).
pub fn parse_combined_csv(text: &str, origin: &str) -> Result<(RawSeries, RawSeries, RawSeries)> {
    let mut price = Vec::new();
    let mut volume = Vec::new();
    let mut tweets = Vec::new();
    for (i, rec) in csv_reader(text).records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() < 4 {
            return Err(Error::Parse {
                path: origin.into(),
                row,
                msg: format!("expected four columns, got {}", rec.len()),
            });
        }
        let date = match parse_date(&rec[0]) {
            Some(d) => d,
            None if i == 0 => continue,
            None => {
                return Err(Error::Parse {
                    path: origin.into(),
                    row,
                    msg: format!("unparsable date {:?}", &rec[0]),
                })
            }
        };
        let mut vals = [0.0; 3];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = parse_value(&rec[k + 1]).ok_or_else(|| Error::Parse {
                path: origin.into(),
                row,
                msg: format!("unparsable number {:?}", &rec[k + 1]),
            })?;
        }
        price.push((date, vals[0]));
        volume.push((date, vals[1]));
        tweets.push((date, vals[2]));
    }
    if price.is_empty() {
        return Err(Error::Validation(format!("no observations in {origin}")));
    }
    Ok((
        RawSeries::new("", SeriesKind::Price, price)?,
        RawSeries::new("", SeriesKind::Volume, volume)?,
        RawSeries::new("", SeriesKind::Tweets, tweets)?,
    ))
}

pub fn load_combined_csv(path: &Path) -> Result<(RawSeries, RawSeries, RawSeries)> {
    let text = std::fs::read_to_string(path)?;
    parse_combined_csv(&text, &path.display().to_string())
}

/// Put the three series on one trading-day calendar.
///
/// The shared range is the intersection of the three date ranges; within it,
/// trading days are the union of price and volume dates, and a day carrying
/// only one of the two market series is an error. Post counts on non-trading
/// days are folded per the weekend policy; trading days without a post
/// observation get zero.
pub fn align(
    price: &RawSeries,
    volume: &RawSeries,
    tweets: &RawSeries,
    policy: WeekendPolicy,
) -> Result<AlignedSeriesSet> {
    for (s, want) in [
        (price, SeriesKind::Price),
        (volume, SeriesKind::Volume),
        (tweets, SeriesKind::Tweets),
    ] {
        if s.kind != want {
            return Err(Error::Validation(format!(
                "expected a {} series, got {}",
                want.name(),
                s.kind.name()
            )));
        }
    }
    if price.ticker != volume.ticker || price.ticker != tweets.ticker {
        return Err(Error::Validation(format!(
            "ticker mismatch: {:?} / {:?} / {:?}",
            price.ticker, volume.ticker, tweets.ticker
        )));
    }

    let ranges = [price.date_range(), volume.date_range(), tweets.date_range()];
    let lo = ranges.iter().map(|r| r.0).max().unwrap();
    let hi = ranges.iter().map(|r| r.1).min().unwrap();
    if lo > hi {
        return Err(Error::Validation(format!(
            "empty overlap between the three series ({lo} > {hi})"
        )));
    }

    let in_range = |d: &NaiveDate| (lo..=hi).contains(d);
    let price_map: BTreeMap<_, _> = price
        .observations
        .iter()
        .filter(|(d, _)| in_range(d))
        .copied()
        .collect();
    let volume_map: BTreeMap<_, _> = volume
        .observations
        .iter()
        .filter(|(d, _)| in_range(d))
        .copied()
        .collect();

    let grid: BTreeSet<NaiveDate> = price_map.keys().chain(volume_map.keys()).copied().collect();
    let missing: Vec<String> = grid
        .iter()
        .filter(|d| !price_map.contains_key(d) || !volume_map.contains_key(d))
        .map(|d| d.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "market value missing on trading days: {}",
            missing.join(", ")
        )));
    }

    let mut tweet_totals: BTreeMap<NaiveDate, f64> = grid.iter().map(|d| (*d, 0.0)).collect();
    for (d, v) in tweets.observations.iter().filter(|(d, _)| in_range(d)) {
        if tweet_totals.contains_key(d) {
            *tweet_totals.get_mut(d).unwrap() += v;
        } else {
            match policy {
                WeekendPolicy::SumForward => {
                    // Fold into the next trading day; counts past the last
                    // trading day have nowhere to go and are dropped.
                    if let Some(next) = grid.range(d..).next() {
                        *tweet_totals.get_mut(next).unwrap() += v;
                    }
                }
                WeekendPolicy::Drop => {}
            }
        }
    }

    let dates: Vec<NaiveDate> = grid.into_iter().collect();
    let set = AlignedSeriesSet {
        ticker: price.ticker.clone(),
        price: dates.iter().map(|d| price_map[d]).collect(),
        volume: dates.iter().map(|d| volume_map[d]).collect(),
        tweets: dates.iter().map(|d| tweet_totals[d]).collect(),
        dates,
    };
    set.validate()?;
    Ok(set)
}

fn apply_price(v: f64, t: PriceTransform, date: NaiveDate) -> Result<f64> {
    match t {
        PriceTransform::Log => {
            if v <= 0.0 {
                Err(Error::Validation(format!(
                    "log transform needs strictly positive values, got {v} on {date}"
                )))
            } else {
                Ok(v.ln())
            }
        }
        PriceTransform::Level => Ok(v),
    }
}

fn apply_count(v: f64, t: CountTransform, date: NaiveDate) -> Result<f64> {
    match t {
        CountTransform::Log1p => {
            if v < 0.0 {
                Err(Error::Validation(format!(
                    "log1p transform needs nonnegative values, got {v} on {date}"
                )))
            } else {
                Ok(v.ln_1p())
            }
        }
        CountTransform::Level => Ok(v),
    }
}

/// Build one model pair from the aligned set. `min_len` is the shortest
/// acceptable series; the pipeline uses [`DEFAULT_MIN_LEN`].
pub fn make_pair(
    set: &AlignedSeriesSet,
    pair: PairKind,
    spec: &TransformSpec,
    min_len: usize,
) -> Result<PairSeries> {
    set.validate()?;
    let t = set.len();
    if t < min_len {
        return Err(Error::Validation(format!(
            "series length {t} below the minimum of {min_len}"
        )));
    }
    let mut y = DMatrix::zeros(t, 2);
    for i in 0..t {
        let d = set.dates[i];
        y[(i, 0)] = match pair {
            PairKind::PrTw => apply_price(set.price[i], spec.price_transform, d)?,
            PairKind::VolTw => apply_count(set.volume[i], spec.volume_transform, d)?,
        };
        y[(i, 1)] = apply_count(set.tweets[i], spec.tweets_transform, d)?;
    }
    let out = PairSeries {
        labels: pair.labels(),
        y,
        dates: set.dates.clone(),
    };
    out.validate()?;
    Ok(out)
}

/// Shortest-round-trip float formatting, so written files reload bit-for-bit.
fn fmt_value(v: f64) -> String {
    format!("{v}")
}

pub fn write_series_csv(series: &RawSeries, path: &Path) -> Result<()> {
    let mut out = String::from("date,value\n");
    for (d, v) in &series.observations {
        out.push_str(&format!("{d},{}\n", fmt_value(*v)));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_combined_csv(set: &AlignedSeriesSet, path: &Path) -> Result<()> {
    std::fs::write(path, combined_csv_bytes(set))?;
    Ok(())
}

/// The canonical on-disk form of an aligned set; also the byte stream that
/// gets content-hashed into run manifests.
pub fn combined_csv_bytes(set: &AlignedSeriesSet) -> Vec<u8> {
    let mut out = String::from("date,price,volume,tweets\n");
    for i in 0..set.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            set.dates[i],
            fmt_value(set.price[i]),
            fmt_value(set.volume[i]),
            fmt_value(set.tweets[i])
        ));
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn obs(rows: &[(&str, f64)]) -> Vec<(NaiveDate, f64)> {
        rows.iter().map(|(s, v)| (d(s), *v)).collect()
    }

    #[test]
    fn parse_two_column_file() {
        let s = parse_series_csv(
            "2021-01-12,7060665\n2021-01-13,144501736\n",
            SeriesKind::Volume,
            "mem",
        )
        .unwrap();
        assert_eq!(s.observations.len(), 2);
        assert_eq!(s.observations[0], (d("2021-01-12"), 7_060_665.0));
        assert_eq!(s.observations[1], (d("2021-01-13"), 144_501_736.0));
    }

    #[test]
    fn parse_sorts_and_accepts_header() {
        let s = parse_series_csv(
            "date,value\n2021-01-13,5\n2021-01-12,9\n",
            SeriesKind::Tweets,
            "mem",
        )
        .unwrap();
        assert_eq!(s.observations[0].0, d("2021-01-12"));
        assert_eq!(s.observations[1].0, d("2021-01-13"));
    }

    #[test]
    fn parse_rejects_empty_and_malformed() {
        assert!(matches!(
            parse_series_csv("", SeriesKind::Price, "mem"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_series_csv("date,value\n", SeriesKind::Price, "mem"),
            Err(Error::Validation(_))
        ));
        let err = parse_series_csv(
            "2021-01-12,5\nnot-a-date,6\n",
            SeriesKind::Tweets,
            "mem",
        )
        .unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err =
            parse_series_csv("2021-01-12,abc\n", SeriesKind::Tweets, "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
    }

    #[test]
    fn validation_rules_per_kind() {
        assert!(RawSeries::new("", SeriesKind::Tweets, obs(&[("2021-01-12", -1.0)])).is_err());
        assert!(RawSeries::new("", SeriesKind::Tweets, obs(&[("2021-01-12", 1.5)])).is_err());
        assert!(RawSeries::new("", SeriesKind::Price, obs(&[("2021-01-12", 0.0)])).is_err());
        assert!(RawSeries::new(
            "",
            SeriesKind::Price,
            obs(&[("2021-01-12", 1.0), ("2021-01-12", 2.0)])
        )
        .is_err());
        assert!(RawSeries::new("", SeriesKind::Volume, obs(&[("2021-01-12", 0.0)])).is_ok());
    }

    fn fixture() -> (RawSeries, RawSeries, RawSeries) {
        // Fri 8th, Mon 11th, Tue 12th trading days; posts also on Sat/Sun.
        let price = RawSeries::new(
            "GME",
            SeriesKind::Price,
            obs(&[("2021-01-08", 10.0), ("2021-01-11", 11.0), ("2021-01-12", 12.0)]),
        )
        .unwrap();
        let volume = RawSeries::new(
            "GME",
            SeriesKind::Volume,
            obs(&[("2021-01-08", 100.0), ("2021-01-11", 200.0), ("2021-01-12", 300.0)]),
        )
        .unwrap();
        let tweets = RawSeries::new(
            "GME",
            SeriesKind::Tweets,
            obs(&[
                ("2021-01-08", 1.0),
                ("2021-01-09", 5.0),
                ("2021-01-10", 3.0),
                ("2021-01-11", 10.0),
                ("2021-01-12", 2.0),
            ]),
        )
        .unwrap();
        (price, volume, tweets)
    }

    #[test]
    fn align_sum_forward_folds_weekend_into_monday() {
        let (p, v, t) = fixture();
        let set = align(&p, &v, &t, WeekendPolicy::SumForward).unwrap();
        assert_eq!(set.dates, vec![d("2021-01-08"), d("2021-01-11"), d("2021-01-12")]);
        assert_eq!(set.tweets, vec![1.0, 18.0, 2.0]);
    }

    #[test]
    fn align_drop_discards_weekend() {
        let (p, v, t) = fixture();
        let set = align(&p, &v, &t, WeekendPolicy::Drop).unwrap();
        assert_eq!(set.tweets, vec![1.0, 10.0, 2.0]);
    }

    #[test]
    fn align_missing_tweet_day_is_zero() {
        let (p, v, _) = fixture();
        let t = RawSeries::new("GME", SeriesKind::Tweets, obs(&[("2021-01-08", 4.0), ("2021-01-12", 6.0)]))
            .unwrap();
        let set = align(&p, &v, &t, WeekendPolicy::SumForward).unwrap();
        // Range starts at the tweets series' first day, so all three trading
        // days survive and the Monday gets zero.
        assert_eq!(set.tweets, vec![4.0, 0.0, 6.0]);
    }

    #[test]
    fn align_rejects_empty_overlap() {
        let p = RawSeries::new("X", SeriesKind::Price, obs(&[("2021-01-04", 1.0)])).unwrap();
        let v = RawSeries::new("X", SeriesKind::Volume, obs(&[("2021-01-04", 1.0)])).unwrap();
        let t = RawSeries::new("X", SeriesKind::Tweets, obs(&[("2021-04-01", 1.0)])).unwrap();
        let err = align(&p, &v, &t, WeekendPolicy::Drop).unwrap_err();
        assert!(err.to_string().contains("empty overlap"), "{err}");
    }

    #[test]
    fn align_rejects_one_sided_market_day() {
        let (p, _, t) = fixture();
        let v = RawSeries::new(
            "GME",
            SeriesKind::Volume,
            obs(&[("2021-01-08", 100.0), ("2021-01-12", 300.0)]),
        )
        .unwrap();
        let err = align(&p, &v, &t, WeekendPolicy::Drop).unwrap_err();
        assert!(err.to_string().contains("2021-01-11"), "{err}");
    }

    #[test]
    fn align_rejects_ticker_mismatch() {
        let (p, v, t) = fixture();
        let t = t.with_ticker("AMC");
        assert!(align(&p, &v, &t, WeekendPolicy::Drop).is_err());
    }

    #[test]
    fn align_idempotent_on_trading_day_input() {
        let (p, v, t) = fixture();
        let set = align(&p, &v, &t, WeekendPolicy::SumForward).unwrap();
        let p2 = RawSeries::new("GME", SeriesKind::Price, set.dates.iter().copied().zip(set.price.iter().copied()).collect()).unwrap();
        let v2 = RawSeries::new("GME", SeriesKind::Volume, set.dates.iter().copied().zip(set.volume.iter().copied()).collect()).unwrap();
        let t2 = RawSeries::new("GME", SeriesKind::Tweets, set.dates.iter().copied().zip(set.tweets.iter().copied()).collect()).unwrap();
        for policy in [WeekendPolicy::SumForward, WeekendPolicy::Drop] {
            assert_eq!(align(&p2, &v2, &t2, policy).unwrap(), set);
        }
    }

    #[test]
    fn make_pair_analytic_transforms() {
        let e = std::f64::consts::E;
        let set = AlignedSeriesSet {
            ticker: "T".into(),
            dates: vec![d("2021-01-04"), d("2021-01-05")],
            price: vec![e, e * e],
            volume: vec![0.0, 99.0],
            tweets: vec![0.0, 9.0],
        };
        let spec = TransformSpec::default();
        let pr = make_pair(&set, PairKind::PrTw, &spec, 2).unwrap();
        assert_eq!(pr.labels, ("pr".to_string(), "tw".to_string()));
        assert!((pr.y[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((pr.y[(1, 0)] - 2.0).abs() < 1e-12);
        assert!(pr.y[(0, 1)].abs() < 1e-12);
        assert!((pr.y[(1, 1)] - 10.0_f64.ln()).abs() < 1e-12);

        let set2 = AlignedSeriesSet {
            tweets: vec![0.0, 0.0],
            ..set.clone()
        };
        let vol = make_pair(&set2, PairKind::VolTw, &spec, 2).unwrap();
        assert_eq!(vol.labels.0, "vol");
        assert!(vol.y[(0, 0)].abs() < 1e-12);
        assert!((vol.y[(1, 0)] - 100.0_f64.ln()).abs() < 1e-12);
        assert_eq!(vol.y.column(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
    }

    #[test]
    fn make_pair_enforces_min_len_and_positivity() {
        let set = AlignedSeriesSet {
            ticker: "T".into(),
            dates: vec![d("2021-01-04"), d("2021-01-05")],
            price: vec![1.0, 2.0],
            volume: vec![1.0, 2.0],
            tweets: vec![0.0, 0.0],
        };
        assert!(make_pair(&set, PairKind::PrTw, &TransformSpec::default(), 10).is_err());
        let mut bad = set.clone();
        bad.price[0] = 0.0; // legal only under level transform
        assert!(make_pair(&bad, PairKind::PrTw, &TransformSpec::default(), 2).is_err());
        assert!(make_pair(&bad, PairKind::PrTw, &TransformSpec::levels(), 2).is_ok());
    }

    #[test]
    fn combined_csv_round_trip_is_bit_exact() {
        let set = AlignedSeriesSet {
            ticker: "".into(),
            dates: vec![d("2021-01-04"), d("2021-01-05"), d("2021-01-06")],
            price: vec![0.1 + 0.2, 123.456789012345, 1e-8],
            volume: vec![0.0, 7060665.0, 144501736.0],
            tweets: vec![3.0, 0.0, 12.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("combined.csv");
        write_combined_csv(&set, &path).unwrap();
        let (p, v, t) = load_combined_csv(&path).unwrap();
        let back = align(&p, &v, &t, WeekendPolicy::SumForward).unwrap();
        assert_eq!(back, set);
    }

    proptest! {
        #[test]
        fn prop_round_trip_and_no_nan(
            seed_days in 3usize..40,
            start in 0u32..2000,
            values in proptest::collection::vec((1u32..1_000_000, 0u32..10_000_000, 0u32..100_000), 3..40),
        ) {
            let n = seed_days.min(values.len());
            let base = d("2015-01-05") + chrono::Days::new(start as u64);
            let mut dates = Vec::new();
            let mut day = base;
            while dates.len() < n {
                let wd = chrono::Datelike::weekday(&day);
                if wd != chrono::Weekday::Sat && wd != chrono::Weekday::Sun {
                    dates.push(day);
                }
                day = day.succ_opt().unwrap();
            }
            let set = AlignedSeriesSet {
                ticker: "".into(),
                dates: dates.clone(),
                price: values[..n].iter().map(|v| v.0 as f64 / 100.0).collect(),
                volume: values[..n].iter().map(|v| v.1 as f64).collect(),
                tweets: values[..n].iter().map(|v| v.2 as f64).collect(),
            };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.csv");
            write_combined_csv(&set, &path).unwrap();
            let (p, v, t) = load_combined_csv(&path).unwrap();
            let back = align(&p, &v, &t, WeekendPolicy::SumForward).unwrap();
            prop_assert_eq!(&back, &set);

            let pair = make_pair(&set, PairKind::PrTw, &TransformSpec::default(), 3).unwrap();
            prop_assert!(pair.y.iter().all(|x| x.is_finite()));
            let pair = make_pair(&set, PairKind::VolTw, &TransformSpec::default(), 3).unwrap();
            prop_assert!(pair.y.iter().all(|x| x.is_finite()));
        }
    }
}
