//! On-disk formats for estimation output: a little-endian columnar binary
//! file for the retained draws and a JSON manifest describing the run.
//!
//! Binary layout: magic `MMDR`, version u32, column count u64, then each
//! column as name (u64 length + UTF-8), dtype byte (0 = f64, 1 = u8),
//! rows u64, cols u64, and row-major data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::vecm::StaticParams;

use super::{Bookkeeping, McmcSettings, PosteriorDraws, PriorSpec};

pub const MAGIC: [u8; 4] = *b"MMDR";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    F64(Vec<f64>),
    U8(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: ColumnData,
}

impl Column {
    pub fn f64(name: &str, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dim(format!(
                "column {name}: {} values for {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Self { name: name.into(), rows, cols, data: ColumnData::F64(data) })
    }

    pub fn u8(name: &str, rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dim(format!(
                "column {name}: {} values for {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Self { name: name.into(), rows, cols, data: ColumnData::U8(data) })
    }
}

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn write_columns(path: &Path, columns: &[Column]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_u64(&mut w, columns.len() as u64)?;
    for col in columns {
        let name = col.name.as_bytes();
        write_u64(&mut w, name.len() as u64)?;
        w.write_all(name)?;
        match &col.data {
            ColumnData::F64(v) => {
                w.write_all(&[0u8])?;
                write_u64(&mut w, col.rows as u64)?;
                write_u64(&mut w, col.cols as u64)?;
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            ColumnData::U8(v) => {
                w.write_all(&[1u8])?;
                write_u64(&mut w, col.rows as u64)?;
                write_u64(&mut w, col.cols as u64)?;
                w.write_all(v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_columns(path: &Path) -> Result<Vec<Column>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Validation(format!(
            "{}: not a draws file (bad magic)",
            path.display()
        )));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    let ver = u32::from_le_bytes(ver);
    if ver != VERSION {
        return Err(Error::Validation(format!(
            "{}: unsupported draws file version {ver}",
            path.display()
        )));
    }
    let n_cols = read_u64(&mut r)? as usize;
    let mut out = Vec::with_capacity(n_cols);
    for _ in 0..n_cols {
        let name_len = read_u64(&mut r)? as usize;
        if name_len > 4096 {
            return Err(Error::Validation(format!(
                "{}: column name of {name_len} bytes is implausible",
                path.display()
            )));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Validation(format!("{}: column name not UTF-8", path.display())))?;
        let mut dtype = [0u8; 1];
        r.read_exact(&mut dtype)?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Validation(format!("{}: column shape overflows", path.display())))?;
        let data = match dtype[0] {
            0 => {
                let mut bytes = vec![0u8; len * 8];
                r.read_exact(&mut bytes)?;
                let v = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                ColumnData::F64(v)
            }
            1 => {
                let mut v = vec![0u8; len];
                r.read_exact(&mut v)?;
                ColumnData::U8(v)
            }
            d => {
                return Err(Error::Validation(format!(
                    "{}: unknown column dtype {d}",
                    path.display()
                )))
            }
        };
        out.push(Column { name, rows, cols, data });
    }
    Ok(out)
}

/// The retained draws as stored on disk. Factor paths stay in memory only:
/// they are large, and nothing downstream of estimation reads them back.
#[derive(Debug, Clone)]
pub struct SavedDraws {
    pub n: usize,
    pub t_len: usize,
    pub states: Vec<Vec<u8>>,
    pub p: Vec<DMatrix<f64>>,
    pub statics: Vec<StaticParams>,
    pub w_l: Vec<Vec<f64>>,
    pub w_a: Vec<Vec<f64>>,
    pub loglik: Vec<f64>,
}

fn row_major(rows: usize, cols: usize, get: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            v.push(get(i, j));
        }
    }
    v
}

pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let k = draws.n_retained();
    let n = draws.n;
    let ns = n + 1;
    let t_len = draws.t_len;
    let states: Vec<u8> = draws.states.iter().flatten().copied().collect();
    let columns = vec![
        Column::u8("states", k, t_len, states)?,
        Column::f64("p", k, ns * ns, row_major(k, ns * ns, |i, j| draws.p[i][(j / ns, j % ns)]))?,
        Column::f64("c", k, n, row_major(k, n, |i, j| draws.statics[i].c[j]))?,
        Column::f64("b", k, n * n, row_major(k, n * n, |i, j| draws.statics[i].b[(j / n, j % n)]))?,
        Column::f64(
            "sigma",
            k,
            n * n,
            row_major(k, n * n, |i, j| draws.statics[i].sigma[(j / n, j % n)]),
        )?,
        Column::f64("w_l", k, n * (n - 1) / 2, row_major(k, n * (n - 1) / 2, |i, j| draws.w_l[i][j]))?,
        Column::f64("w_a", k, n * n, row_major(k, n * n, |i, j| draws.w_a[i][j]))?,
        Column::f64("loglik", k, 1, draws.loglik.clone())?,
    ];
    write_columns(path, &columns)
}

fn take_f64(cols: &mut Vec<Column>, name: &str, path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let idx = cols
        .iter()
        .position(|c| c.name == name)
        .ok_or_else(|| Error::Validation(format!("{}: missing column {name}", path.display())))?;
    let col = cols.remove(idx);
    match col.data {
        ColumnData::F64(v) => Ok((col.rows, col.cols, v)),
        ColumnData::U8(_) => Err(Error::Validation(format!(
            "{}: column {name} has the wrong dtype",
            path.display()
        ))),
    }
}

pub fn read_draws(path: &Path) -> Result<SavedDraws> {
    let mut cols = read_columns(path)?;

    let st_idx = cols
        .iter()
        .position(|c| c.name == "states")
        .ok_or_else(|| Error::Validation(format!("{}: missing column states", path.display())))?;
    let st = cols.remove(st_idx);
    let (k, t_len) = (st.rows, st.cols);
    let states: Vec<Vec<u8>> = match st.data {
        ColumnData::U8(v) => v.chunks(t_len.max(1)).map(|c| c.to_vec()).collect(),
        ColumnData::F64(_) => {
            return Err(Error::Validation(format!(
                "{}: column states has the wrong dtype",
                path.display()
            )))
        }
    };

    let (pk, pc, pv) = take_f64(&mut cols, "p", path)?;
    let ns = (pc as f64).sqrt().round() as usize;
    if pk != k || ns * ns != pc || ns < 2 {
        return Err(Error::Validation(format!("{}: malformed p column", path.display())));
    }
    let n = ns - 1;
    let p: Vec<DMatrix<f64>> = (0..k)
        .map(|i| DMatrix::from_fn(ns, ns, |r, c| pv[i * pc + r * ns + c]))
        .collect();

    let (ck, cc, cv) = take_f64(&mut cols, "c", path)?;
    let (bk, bc, bv) = take_f64(&mut cols, "b", path)?;
    let (sk, sc, sv) = take_f64(&mut cols, "sigma", path)?;
    if ck != k || cc != n || bk != k || bc != n * n || sk != k || sc != n * n {
        return Err(Error::Validation(format!(
            "{}: static coefficient columns are malformed",
            path.display()
        )));
    }
    let statics: Vec<StaticParams> = (0..k)
        .map(|i| StaticParams {
            c: nalgebra::RowDVector::from_fn(n, |_, j| cv[i * n + j]),
            b: DMatrix::from_fn(n, n, |r, c| bv[i * n * n + r * n + c]),
            sigma: DMatrix::from_fn(n, n, |r, c| sv[i * n * n + r * n + c]),
        })
        .collect();

    let (wlk, wlc, wlv) = take_f64(&mut cols, "w_l", path)?;
    let (wak, wac, wav) = take_f64(&mut cols, "w_a", path)?;
    if wlk != k || wlc != n * (n - 1) / 2 || wak != k || wac != n * n {
        return Err(Error::Validation(format!(
            "{}: increment variance columns are malformed",
            path.display()
        )));
    }
    let w_l: Vec<Vec<f64>> = wlv.chunks(wlc.max(1)).take(k).map(|c| c.to_vec()).collect();
    let w_a: Vec<Vec<f64>> = wav.chunks(wac.max(1)).map(|c| c.to_vec()).collect();

    let (lk, lc, loglik) = take_f64(&mut cols, "loglik", path)?;
    if lk != k || lc != 1 {
        return Err(Error::Validation(format!("{}: malformed loglik column", path.display())));
    }

    Ok(SavedDraws { n, t_len, states, p, statics, w_l, w_a, loglik })
}

/// Run description written next to the draws; no timestamps, so reruns with
/// identical inputs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub pair: String,
    pub labels: (String, String),
    pub ticker: String,
    pub n: usize,
    pub t_len: usize,
    pub n_retained: usize,
    pub priors: PriorSpec,
    pub settings: McmcSettings,
    pub bookkeeping: Bookkeeping,
    /// Hash of the aligned input data both pairs were derived from.
    pub input_sha256: String,
    /// Hash identifying the full run configuration; regime files carry it
    /// so detection can refuse to mix incompatible runs.
    pub config_hash: String,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let r = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{run_mcmc, McmcSettings, PriorSpec};
    use nalgebra::DMatrix;

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn columns_round_trip_exact_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cols.bin");
        let vals = vec![0.0, -0.0, 1.5e-308, f64::MAX, -3.25, 7.0];
        let cols = vec![
            Column::f64("x", 2, 3, vals.clone()).unwrap(),
            Column::u8("s", 3, 2, vec![1, 2, 3, 1, 2, 3]).unwrap(),
        ];
        write_columns(&path, &cols).unwrap();
        let back = read_columns(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].name, "x");
        match (&back[0].data, &cols[0].data) {
            (ColumnData::F64(a), ColumnData::F64(b)) => {
                for (x, y) in a.iter().zip(b) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            _ => panic!("dtype mismatch"),
        }
        assert_eq!(back[1], cols[1]);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.bin");
        std::fs::write(&bad, b"NOPE").unwrap();
        assert!(read_columns(&bad).is_err());

        let path = dir.path().join("cols.bin");
        let cols = vec![Column::f64("x", 1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap()];
        write_columns(&path, &cols).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(read_columns(&path).is_err());
    }

    #[test]
    fn draws_round_trip() {
        let mut y = DMatrix::zeros(15, 2);
        for t in 0..15 {
            y[(t, 0)] = (t as f64 * 0.7).sin();
            y[(t, 1)] = (t as f64 * 0.3).cos();
        }
        let priors = PriorSpec::default_for(2);
        let settings = McmcSettings { n_draws: 8, n_burnin: 2, thin: 1, seed: 5 };
        let draws = run_mcmc(&y, &priors, &settings).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.bin");
        write_draws(&path, &draws).unwrap();
        let back = read_draws(&path).unwrap();

        assert_eq!(back.n, 2);
        assert_eq!(back.t_len, 15);
        assert_eq!(back.states, draws.states);
        assert_eq!(back.p, draws.p);
        assert_eq!(back.loglik, draws.loglik);
        for (a, b) in back.statics.iter().zip(&draws.statics) {
            assert_eq!(a, b);
        }
        for (a, b) in back.w_a.iter().zip(&draws.w_a) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn manifest_round_trips_and_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = RunManifest {
            pair: "price_tweets".into(),
            labels: ("log_price".into(), "log_tweets".into()),
            ticker: "DEMO".into(),
            n: 2,
            t_len: 120,
            n_retained: 5000,
            priors: PriorSpec::default_for(2),
            settings: McmcSettings::default(),
            bookkeeping: Bookkeeping::default(),
            input_sha256: sha256_hex(b"input"),
            config_hash: sha256_hex(b"config"),
        };
        write_manifest(&path, &m).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);
        write_manifest(&path, &m).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}
