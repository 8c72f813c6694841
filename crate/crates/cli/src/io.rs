//! CSV and JSON emission with atomic writes, and the CSV readers used by
//! configs and `invert --data`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fracschro::Mat;
use serde::Serialize;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Header row followed by rows of a leading label and numeric values.
pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for (label, values) in rows {
        w.write_record(std::iter::once(label).chain(values.into_iter().map(num)))?;
    }
    write_atomic(path, &w.into_inner()?)
}

/// `node,<cols…>` header and one `node,values` row per entry of `rows`.
pub fn write_matrix(path: &Path, m: &Mat, rows: &[usize], cols: &[usize]) -> Result<()> {
    let header: Vec<String> = std::iter::once("node".to_string()).chain(cols.iter().map(|c| c.to_string())).collect();
    write_table(path, &header, rows.iter().enumerate().map(|(a, &i)| (i.to_string(), m.row(a).to_vec())))
}

pub fn write_nodal(path: &Path, values: &[f64]) -> Result<()> {
    let header = ["node".to_string(), "value".to_string()];
    write_table(path, &header, values.iter().enumerate().map(|(i, &v)| (i.to_string(), vec![v])))
}

/// File name for the source-to-solution matrix at shift `beta`.
pub fn sigma_file(beta: f64) -> String {
    format!("sigma_{}.csv", num(beta))
}

fn parse_row(rec: &csv::StringRecord, line: usize, path: &Path) -> Result<Option<Vec<f64>>> {
    let parsed: Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
    match parsed {
        Ok(v) => Ok(Some(v)),
        Err(_) if line == 0 => Ok(None),
        Err(e) => bail!("{}: row {}: {e}", path.display(), line + 1),
    }
}

/// Numeric rows; a non-numeric first row is taken as a header and skipped.
pub fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        if let Some(v) = parse_row(&rec?, line, path)? {
            rows.push(v);
        }
    }
    Ok(rows)
}

/// `node,value` rows covering every node exactly once.
pub fn read_potential_csv(path: &Path, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; n];
    for row in read_numeric_csv(path)? {
        if row.len() != 2 {
            bail!("{}: expected node,value rows", path.display());
        }
        let i = row[0] as usize;
        if row[0] != i as f64 || i >= n {
            bail!("{}: invalid node {}", path.display(), row[0]);
        }
        if !out[i].is_nan() {
            bail!("{}: node {i} listed twice", path.display());
        }
        out[i] = row[1];
    }
    if let Some(i) = out.iter().position(|v| v.is_nan()) {
        bail!("{}: node {i} missing", path.display());
    }
    Ok(out)
}

/// A matrix written by [`write_matrix`], with its row and column node labels.
pub struct LabeledMatrix {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub matrix: Mat,
}

pub fn read_matrix(path: &Path) -> Result<LabeledMatrix> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let cols = r
        .headers()?
        .iter()
        .skip(1)
        .map(|h| h.trim().parse::<usize>().with_context(|| format!("{}: bad column label {h:?}", path.display())))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec.iter().map(|f| f.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>()?;
        if v.len() != cols.len() + 1 {
            bail!("{}: row has {} fields, expected {}", path.display(), v.len(), cols.len() + 1);
        }
        rows.push(v[0] as usize);
        values.push(v[1..].to_vec());
    }
    let matrix = Mat::from_rows(&values)?;
    Ok(LabeledMatrix { rows, cols, matrix })
}

/// `sigma_<β>.csv` files in `dir`, sorted by β.
pub fn read_sigma_dir(dir: &Path) -> Result<Vec<(f64, LabeledMatrix)>> {
    let mut found: Vec<(f64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(beta) = name.strip_prefix("sigma_").and_then(|b| b.strip_suffix(".csv")) {
            let beta: f64 = beta.parse().with_context(|| format!("bad shift in file name {name}"))?;
            found.push((beta, path));
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    found.into_iter().map(|(b, p)| Ok((b, read_matrix(&p)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mat::from_rows(&[vec![1.0 / 3.0, 2.0], vec![-1e-17, 4.0]]).unwrap();
        let path = dir.path().join(sigma_file(0.5));
        write_matrix(&path, &m, &[7, 9], &[1, 2]).unwrap();
        let back = read_sigma_dir(dir.path()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].0, 0.5);
        assert_eq!(back[0].1.rows, vec![7, 9]);
        assert_eq!(back[0].1.cols, vec![1, 2]);
        assert_eq!(back[0].1.matrix, m);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn potential_csv_requires_every_node() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        write_nodal(&path, &[0.5, 1.5, 2.5]).unwrap();
        assert_eq!(read_potential_csv(&path, 3).unwrap(), vec![0.5, 1.5, 2.5]);
        assert!(read_potential_csv(&path, 4).is_err());
    }
}
