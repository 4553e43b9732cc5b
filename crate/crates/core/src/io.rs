//! Plain-text file formats: comma-separated rows preceded by `# key=value`
//! metadata lines.
//!
//! * series: one trajectory per row, in time order;
//! * kernel: one row `s_j, Σ_j1, …, Σ_jJ` per grid point;
//! * acvf: rows `lag, γ(lag)`;
//! * ensemble: one limit draw per row.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{AcvfSequence, GridCovariance};
use crate::limitlaw::{grid_hash, LimitEnsemble, LimitMode};

/// Ordered `key=value` header entries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Parse(format!("missing '{key}' header")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|field| {
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {lineno}: cannot parse '{}' as a number", field.trim())))
        })
        .collect()
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    parse_row(s, 0)
}

pub fn write_table<W: Write>(out: W, meta: &Metadata, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(out);
    for (k, v) in meta.entries() {
        writeln!(w, "# {k}={v}")?;
    }
    for row in rows {
        writeln!(w, "{}", join(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(input: R) -> Result<(Metadata, Vec<Vec<f64>>)> {
    let mut meta = Metadata::new();
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if let Some(header) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = header.trim_start().split_once('=') {
                meta.set(k.trim(), v);
            }
        } else if !trimmed.is_empty() {
            rows.push(parse_row(trimmed, i + 1)?);
        }
    }
    Ok((meta, rows))
}

pub fn write_table_file(path: &Path, meta: &Metadata, rows: &[Vec<f64>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_table(fs::File::create(path)?, meta, rows)
}

pub fn read_table_file(path: &Path) -> Result<(Metadata, Vec<Vec<f64>>)> {
    let f = fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_table(f)
}

/// Writes trajectories in time order and marks them so.
pub fn write_series(path: &Path, meta: &Metadata, series: &[Vec<f64>]) -> Result<()> {
    let meta = meta.clone().with("order", "time");
    write_table_file(path, &meta, series)
}

pub fn read_series(path: &Path) -> Result<(Metadata, Vec<Vec<f64>>)> {
    let (meta, rows) = read_table_file(path)?;
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no series", path.display())));
    }
    Ok((meta, rows))
}

pub fn write_kernel(path: &Path, meta: &Metadata, cov: &GridCovariance) -> Result<()> {
    let meta = meta
        .clone()
        .with("grid_size", cov.size())
        .with("psd_repaired", cov.psd_repaired());
    let m = cov.matrix();
    let rows: Vec<Vec<f64>> = (0..cov.size())
        .map(|j| {
            let mut row = Vec::with_capacity(cov.size() + 1);
            row.push(cov.grid()[j]);
            row.extend(m.row(j).iter());
            row
        })
        .collect();
    write_table_file(path, &meta, &rows)
}

pub fn read_kernel(path: &Path) -> Result<(Metadata, GridCovariance)> {
    let (meta, rows) = read_table_file(path)?;
    let j = rows.len();
    if j == 0 || rows.iter().any(|r| r.len() != j + 1) {
        return Err(Error::Parse(format!("{}: kernel rows must have J+1 fields", path.display())));
    }
    let grid = rows.iter().map(|r| r[0]).collect();
    let matrix = DMatrix::from_fn(j, j, |r, c| rows[r][c + 1]);
    let repaired = meta.get("psd_repaired") == Some("true");
    Ok((meta, GridCovariance::new(grid, matrix, repaired)?))
}

pub fn write_acvf(path: &Path, meta: &Metadata, acvf: &AcvfSequence) -> Result<()> {
    let meta = meta.clone().with("mean", fmt_f64(acvf.mean()));
    let rows: Vec<Vec<f64>> = acvf.gamma().iter().enumerate().map(|(k, g)| vec![k as f64, *g]).collect();
    write_table_file(path, &meta, &rows)
}

pub fn write_ensemble(path: &Path, meta: &Metadata, ens: &LimitEnsemble) -> Result<()> {
    let meta = meta
        .clone()
        .with("mode", ens.mode())
        .with("seed", ens.seed())
        .with("draws", ens.len())
        .with("grid_hash", ens.grid_hash())
        .with("grid", join(ens.grid()));
    let rows: Vec<Vec<f64>> = ens.draws().iter().map(|d| vec![*d]).collect();
    write_table_file(path, &meta, &rows)
}

/// Reads an ensemble back, checking the draw count and grid hash.
pub fn read_ensemble(path: &Path) -> Result<(Metadata, LimitEnsemble)> {
    let (meta, rows) = read_table_file(path)?;
    let mode: LimitMode = meta.require("mode")?.parse()?;
    let seed: u64 = meta
        .require("seed")?
        .parse()
        .map_err(|_| Error::Parse("bad 'seed' header".into()))?;
    let grid = parse_list(meta.require("grid")?)?;
    if grid_hash(&grid) != meta.require("grid_hash")? {
        return Err(Error::Parse(format!("{}: grid does not match its hash", path.display())));
    }
    if rows.iter().any(|r| r.len() != 1) {
        return Err(Error::Parse(format!("{}: one draw per line expected", path.display())));
    }
    let draws: Vec<f64> = rows.into_iter().map(|r| r[0]).collect();
    if meta.require("draws")? != draws.len().to_string() {
        return Err(Error::Parse(format!("{}: draw count does not match header", path.display())));
    }
    let ens = LimitEnsemble::new(draws, mode, grid, seed)?;
    Ok((meta, ens))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip_is_exact() {
        let meta = Metadata::new().with("a", 1).with("b", "x=y");
        let rows = vec![vec![0.1, -3e-300, 1.0 / 3.0], vec![1e22, 5.0]];
        let mut buf = Vec::new();
        write_table(&mut buf, &meta, &rows).unwrap();
        let (m2, r2) = read_table(&buf[..]).unwrap();
        assert_eq!(m2, meta);
        assert_eq!(r2, rows);
        assert_eq!(m2.get("b"), Some("x=y"));
    }

    #[test]
    fn bad_numbers_are_parse_errors() {
        assert!(matches!(read_table("1,2\nx,3\n".as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn kernel_and_ensemble_files() {
        let dir = tempfile::tempdir().unwrap();
        let cov = GridCovariance::new(vec![0.0, 1.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 2.0]), true).unwrap();
        let kp = dir.path().join("k.csv");
        write_kernel(&kp, &Metadata::new().with("source", "model"), &cov).unwrap();
        let (meta, back) = read_kernel(&kp).unwrap();
        assert_eq!(back, cov);
        assert_eq!(meta.get("source"), Some("model"));

        let ens = LimitEnsemble::new(vec![0.5, 0.25, 2.0], LimitMode::Pairwise, vec![0.0, 1.0], 4).unwrap();
        let ep = dir.path().join("e.csv");
        write_ensemble(&ep, &Metadata::new(), &ens).unwrap();
        let (_, back) = read_ensemble(&ep).unwrap();
        assert_eq!(back, ens);

        let text = fs::read_to_string(&ep).unwrap().replace("# grid=0.0,1.0", "# grid=0.0,2.0");
        fs::write(&ep, text).unwrap();
        assert!(read_ensemble(&ep).is_err());
    }
}
