//! Posterior summaries of the hidden rank path and their CSV form.
//!
//! `summarize` turns retained state draws into per-day state probabilities
//! and the pointwise posterior-mode path; `to_intervals` compresses a path
//! into maximal constant-rank intervals. The CSV round-trips losslessly
//! because floats are written in shortest-exact form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Per-day posterior over the hidden states plus the pointwise mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPosterior {
    /// t_len × n_states matrix of state probabilities, states 1-based by
    /// column index + 1.
    pub probs: DMatrix<f64>,
    /// Pointwise posterior-mode state per day; ties resolve to the lower
    /// state so ambiguity never invents cointegration.
    pub map_path: Vec<usize>,
}

impl RankPosterior {
    pub fn t_len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_states(&self) -> usize {
        self.probs.ncols()
    }

    /// Rank of the mode path at day t.
    pub fn map_rank(&self, t: usize) -> usize {
        self.map_path[t] - 1
    }
}

/// Tally state draws into per-day probabilities and the mode path.
pub fn summarize(states: &[Vec<u8>], n_states: usize) -> Result<RankPosterior> {
    if states.is_empty() {
        return Err(Error::Dim("no retained draws to summarize".into()));
    }
    let t_len = states[0].len();
    if t_len == 0 {
        return Err(Error::Dim("empty state paths".into()));
    }
    let mut counts = DMatrix::<f64>::zeros(t_len, n_states);
    for draw in states {
        if draw.len() != t_len {
            return Err(Error::Dim(format!(
                "draw has {} days, expected {t_len}",
                draw.len()
            )));
        }
        for (t, s) in draw.iter().enumerate() {
            let s = *s as usize;
            if s < 1 || s > n_states {
                return Err(Error::Validation(format!(
                    "state {s} at day {t} outside 1..={n_states}"
                )));
            }
            counts[(t, s - 1)] += 1.0;
        }
    }
    let k = states.len() as f64;
    let probs = counts / k;
    let map_path = (0..t_len)
        .map(|t| {
            let mut best = 0;
            for j in 1..n_states {
                if probs[(t, j)] > probs[(t, best)] {
                    best = j;
                }
            }
            best + 1
        })
        .collect();
    Ok(RankPosterior { probs, map_path })
}

/// Posterior concentrated entirely on one known path; the form ground-truth
/// regime files take.
pub fn one_hot_posterior(states: &[usize], n_states: usize) -> Result<RankPosterior> {
    for (t, s) in states.iter().enumerate() {
        if *s < 1 || *s > n_states {
            return Err(Error::Validation(format!(
                "state {s} at day {t} outside 1..={n_states}"
            )));
        }
    }
    let mut probs = DMatrix::zeros(states.len(), n_states);
    for (t, s) in states.iter().enumerate() {
        probs[(t, s - 1)] = 1.0;
    }
    Ok(RankPosterior { probs, map_path: states.to_vec() })
}

/// Maximal constant-rank intervals of a state path, 0-based inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeIntervals {
    /// (start, end, rank) with end inclusive.
    pub intervals: Vec<(usize, usize, usize)>,
    pub calendar: Vec<NaiveDate>,
}

pub fn to_intervals(map_path: &[usize], calendar: &[NaiveDate]) -> Result<RegimeIntervals> {
    if map_path.len() != calendar.len() {
        return Err(Error::Dim(format!(
            "path has {} days but calendar has {}",
            map_path.len(),
            calendar.len()
        )));
    }
    let mut intervals = Vec::new();
    let mut start = 0;
    for t in 1..=map_path.len() {
        if t == map_path.len() || map_path[t] != map_path[start] {
            intervals.push((start, t - 1, map_path[start] - 1));
            start = t;
        }
    }
    Ok(RegimeIntervals { intervals, calendar: calendar.to_vec() })
}

/// One estimated pair's regime file: the calendar, the posterior, and the
/// hashes tying it back to its run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeFile {
    pub ticker: String,
    pub config_hash: String,
    pub dates: Vec<NaiveDate>,
    pub posterior: RankPosterior,
}

impl RegimeFile {
    pub fn t_len(&self) -> usize {
        self.dates.len()
    }
}

/// Write `date,state,rank,p_rank0,...` rows preceded by hash and ticker
/// comment lines. Probabilities use the shortest representation that
/// parses back to the identical float.
pub fn write_regime_csv(path: &Path, file: &RegimeFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_regime_csv_to(&mut w, file)?;
    w.flush()?;
    Ok(())
}

fn write_regime_csv_to(w: &mut impl Write, file: &RegimeFile) -> Result<()> {
    let ns = file.posterior.n_states();
    if file.posterior.t_len() != file.dates.len() {
        return Err(Error::Dim(format!(
            "posterior covers {} days but calendar has {}",
            file.posterior.t_len(),
            file.dates.len()
        )));
    }
    writeln!(w, "# config_hash: {}", file.config_hash)?;
    writeln!(w, "# ticker: {}", file.ticker)?;
    write!(w, "date,state,rank")?;
    for r in 0..ns {
        write!(w, ",p_rank{r}")?;
    }
    writeln!(w)?;
    for (t, date) in file.dates.iter().enumerate() {
        let state = file.posterior.map_path[t];
        write!(w, "{date},{state},{}", state - 1)?;
        for r in 0..ns {
            write!(w, ",{}", file.posterior.probs[(t, r)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_regime_csv(path: &Path) -> Result<RegimeFile> {
    let origin = path.display().to_string();
    let r = BufReader::new(File::open(path)?);
    let mut config_hash = None;
    let mut ticker = None;
    let mut header: Option<Vec<String>> = None;
    let mut dates = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut map_path = Vec::new();

    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let row = idx + 1;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("config_hash:") {
                config_hash = Some(v.trim().to_string());
            } else if let Some(v) = rest.strip_prefix("ticker:") {
                ticker = Some(v.trim().to_string());
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if header.is_none() {
            if fields.len() < 4 || fields[0] != "date" || fields[1] != "state" || fields[2] != "rank"
            {
                return Err(Error::Parse {
                    path: origin.clone(),
                    row,
                    msg: "expected header date,state,rank,p_rank0,...".into(),
                });
            }
            for (i, f) in fields[3..].iter().enumerate() {
                if *f != format!("p_rank{i}") {
                    return Err(Error::Parse {
                        path: origin.clone(),
                        row,
                        msg: format!("unexpected probability column {f}"),
                    });
                }
            }
            header = Some(fields.iter().map(|s| s.to_string()).collect());
            continue;
        }
        let ncols = header.as_ref().unwrap().len();
        if fields.len() != ncols {
            return Err(Error::Parse {
                path: origin.clone(),
                row,
                msg: format!("expected {ncols} fields, got {}", fields.len()),
            });
        }
        let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d").map_err(|e| Error::Parse {
            path: origin.clone(),
            row,
            msg: format!("bad date {}: {e}", fields[0]),
        })?;
        let state: usize = fields[1].parse().map_err(|_| Error::Parse {
            path: origin.clone(),
            row,
            msg: format!("bad state {}", fields[1]),
        })?;
        let rank: usize = fields[2].parse().map_err(|_| Error::Parse {
            path: origin.clone(),
            row,
            msg: format!("bad rank {}", fields[2]),
        })?;
        if state == 0 || rank != state - 1 {
            return Err(Error::Parse {
                path: origin.clone(),
                row,
                msg: format!("rank {rank} does not match state {state}"),
            });
        }
        let mut probs = Vec::with_capacity(ncols - 3);
        for f in &fields[3..] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                path: origin.clone(),
                row,
                msg: format!("bad probability {f}"),
            })?;
            if !(0.0..=1.0 + 1e-12).contains(&v) {
                return Err(Error::Parse {
                    path: origin.clone(),
                    row,
                    msg: format!("probability {v} outside [0, 1]"),
                });
            }
            probs.push(v);
        }
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::Parse {
                    path: origin.clone(),
                    row,
                    msg: format!("dates not strictly increasing at {date}"),
                });
            }
        }
        dates.push(date);
        map_path.push(state);
        rows.push(probs);
    }

    let header = header.ok_or_else(|| Error::Validation(format!("{origin}: no header row")))?;
    if dates.is_empty() {
        return Err(Error::Validation(format!("{origin}: no data rows")));
    }
    let ns = header.len() - 3;
    for (t, s) in map_path.iter().enumerate() {
        if *s > ns {
            return Err(Error::Validation(format!(
                "{origin}: state {s} at row {} exceeds {ns} states",
                t + 1
            )));
        }
    }
    let probs = DMatrix::from_fn(dates.len(), ns, |i, j| rows[i][j]);
    Ok(RegimeFile {
        ticker: ticker.unwrap_or_default(),
        config_hash: config_hash.unwrap_or_default(),
        dates,
        posterior: RankPosterior { probs, map_path },
    })
}
