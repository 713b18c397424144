//! Text and binary formats for traffic series, distances and node ids.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use super::{DistanceMap, TrafficTensor};
use crate::error::{Error, Result};

const BIN_MAGIC: &[u8; 4] = b"BGTT";
const BIN_VERSION: u32 = 1;

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_cell(cell: &str) -> Option<f64> {
    let c = cell.trim();
    if c.is_empty() || c.eq_ignore_ascii_case("nan") || c.eq_ignore_ascii_case("na") {
        return Some(f64::NAN);
    }
    c.parse::<f64>().ok()
}

/// Reads `time,<node_id>,...` with one row per timestamp into an N×T×1 tensor.
/// Empty, `NaN` and `NA` cells load as NaN (missing).
pub fn load_traffic_csv(path: &Path) -> Result<TrafficTensor> {
    let reader = open(path)?;
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::parse(path, 1, "empty file")),
    };
    let mut cols = header.trim_end().split(',');
    if cols.next().map(str::trim) != Some("time") {
        return Err(Error::parse(path, 1, "header must start with 'time'"));
    }
    let node_ids: Vec<String> = cols.map(|c| c.trim().to_string()).collect();
    if node_ids.is_empty() {
        return Err(Error::parse(path, 1, "header names no nodes"));
    }
    let n = node_ids.len();
    let mut timestamps = Vec::new();
    let mut flat = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.trim_end().split(',');
        timestamps.push(cells.next().unwrap_or_default().trim().to_string());
        let row: Vec<&str> = cells.collect();
        if row.len() != n {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {n} values, found {}", row.len()),
            ));
        }
        for (k, cell) in row.iter().enumerate() {
            let v = parse_cell(cell).ok_or_else(|| {
                Error::parse(path, lineno, format!("non-numeric value '{cell}' for node {}", node_ids[k]))
            })?;
            flat.push(v);
        }
    }
    let t = timestamps.len();
    if t == 0 {
        return Err(Error::parse(path, 1, "no data rows"));
    }
    // flat is T×N; reorder to N×T×1
    let values = Array3::from_shape_fn((n, t, 1), |(i, s, _)| flat[s * n + i]);
    let feature = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "flow".into());
    TrafficTensor::new(values, node_ids, timestamps, vec![feature])
}

/// Writes feature `feature` of a tensor in the `time,<node_id>,...` layout.
pub fn write_traffic_csv(path: &Path, tensor: &TrafficTensor, feature: usize) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    write!(w, "time").map_err(io_err)?;
    for id in &tensor.node_ids {
        write!(w, ",{id}").map_err(io_err)?;
    }
    writeln!(w).map_err(io_err)?;
    for (s, ts) in tensor.timestamps.iter().enumerate() {
        write!(w, "{ts}").map_err(io_err)?;
        for i in 0..tensor.num_nodes() {
            write!(w, ",{}", tensor.values[[i, s, feature]]).map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Binary container: magic `BGTT`, u32 version, u64 N, T, D, then N·T·D little-endian f64 in
/// N-major order. Node ids and timestamps default to their indices.
pub fn load_traffic_bin(path: &Path) -> Result<TrafficTensor> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::parse(path, 0, msg.to_string());
    if bytes.len() < 32 || &bytes[..4] != BIN_MAGIC {
        return Err(bad("not a BGTT container"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BIN_VERSION {
        return Err(Error::Version {
            found: version,
            expected: BIN_VERSION,
        });
    }
    let dim = |k: usize| u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap()) as usize;
    let (n, t, d) = (dim(0), dim(1), dim(2));
    let body = &bytes[32..];
    if body.len() != n * t * d * 8 {
        return Err(Error::Shape(format!(
            "{}: header declares {n}x{t}x{d} but payload holds {} values",
            path.display(),
            body.len() / 8
        )));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Array3::from_shape_vec((n, t, d), flat).map_err(|e| Error::Shape(e.to_string()))?;
    TrafficTensor::new(
        values,
        (0..n).map(|i| i.to_string()).collect(),
        (0..t).map(|i| i.to_string()).collect(),
        (0..d).map(|i| format!("feature{i}")).collect(),
    )
}

pub fn write_traffic_bin(path: &Path, tensor: &TrafficTensor) -> Result<()> {
    let mut w = create(path)?;
    let (n, t, d) = tensor.values.dim();
    let mut buf = Vec::with_capacity(32 + n * t * d * 8);
    buf.extend_from_slice(BIN_MAGIC);
    buf.extend_from_slice(&BIN_VERSION.to_le_bytes());
    for k in [n, t, d] {
        buf.extend_from_slice(&(k as u64).to_le_bytes());
    }
    for v in tensor.values.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads one `.bin` container or one-or-more per-feature CSV files (stacked along D).
pub fn load_traffic(paths: &[&Path]) -> Result<TrafficTensor> {
    match paths {
        [] => Err(Error::InvalidArgument("no traffic files given".into())),
        [p] if p.extension().is_some_and(|e| e == "bin") => load_traffic_bin(p),
        _ => {
            let parts = paths
                .iter()
                .map(|p| load_traffic_csv(p))
                .collect::<Result<Vec<_>>>()?;
            let first = &parts[0];
            for (p, part) in paths.iter().zip(&parts).skip(1) {
                if part.node_ids != first.node_ids || part.timestamps != first.timestamps {
                    return Err(Error::Shape(format!(
                        "{}: nodes/timestamps differ from {}",
                        p.display(),
                        paths[0].display()
                    )));
                }
            }
            let (n, t, _) = first.values.dim();
            let d = parts.len();
            let values = Array3::from_shape_fn((n, t, d), |(i, s, f)| parts[f].values[[i, s, 0]]);
            TrafficTensor::new(
                values,
                first.node_ids.clone(),
                first.timestamps.clone(),
                parts.iter().flat_map(|p| p.feature_names.clone()).collect(),
            )
        }
    }
}

/// Reads `from,to,cost` rows with integer node indices. Duplicate pairs are rejected.
pub fn load_distance_csv(path: &Path) -> Result<DistanceMap> {
    let reader = open(path)?;
    let mut map = DistanceMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if idx == 0 && cells.first().is_some_and(|c| *c == "from") {
            continue;
        }
        if cells.len() != 3 {
            return Err(Error::parse(path, lineno, format!("expected 3 fields, found {}", cells.len())));
        }
        let from: usize = cells[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node index '{}'", cells[0])))?;
        let to: usize = cells[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node index '{}'", cells[1])))?;
        let cost: f64 = cells[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("non-numeric cost '{}'", cells[2])))?;
        if map.insert((from, to), cost).is_some() {
            return Err(Error::parse(path, lineno, format!("duplicate pair ({from}, {to})")));
        }
    }
    Ok(map)
}

pub fn write_distance_csv(path: &Path, distances: &DistanceMap) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "from,to,cost").map_err(io_err)?;
    for (&(i, j), d) in distances {
        writeln!(w, "{i},{j},{d}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// One node id per line; blank lines skipped.
pub fn load_node_ids(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn write_node_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut w = create(path)?;
    for id in ids {
        writeln!(w, "{id}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Dense matrix, one comma-separated row per line. Values use Rust's shortest round-trip form.
pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let reader = open(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| Error::parse(path, idx + 1, format!("non-numeric cell '{c}'"))))
            .collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(Error::parse(path, idx + 1, format!("expected {c} columns, found {}", vals.len())))
            }
            _ => {}
        }
        data.extend(vals);
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| Error::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn two_nodes_three_steps() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "flow.csv", "time,a,b\n0,1,2\n5,3,4\n10,5,6\n");
        let t = load_traffic_csv(&p).unwrap();
        assert_eq!(t.values.dim(), (2, 3, 1));
        assert_eq!(t.values[[1, 2, 0]], 6.0);
        assert_eq!(t.node_ids, vec!["a", "b"]);
        assert_eq!(t.feature_names, vec!["flow"]);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "f.csv", "time,a,b\n0,1,2\n5,3\n");
        let err = load_traffic_csv(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        let p = write(dir.path(), "g.csv", "time,a,b\n0,1,x\n");
        let err = load_traffic_csv(&p).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("'x'"), "{err}");
    }

    #[test]
    fn missing_cells_become_nan() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "f.csv", "time,a\n0,\n1,NaN\n2,3\n");
        let t = load_traffic_csv(&p).unwrap();
        assert!(t.values[[0, 0, 0]].is_nan() && t.values[[0, 1, 0]].is_nan());
        let (clean, dropped) = t.drop_missing();
        assert_eq!(dropped, vec![0, 1]);
        assert_eq!(clean.timestamps, vec!["2"]);
    }

    #[test]
    fn edge_list_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "from,to,cost\n0,1,3.5\n");
        let d = load_distance_csv(&p).unwrap();
        assert_eq!(d[&(0, 1)], 3.5);
        let p = write(dir.path(), "dup.csv", "from,to,cost\n0,1,3.5\n0,1,4\n");
        let err = load_distance_csv(&p).unwrap_err().to_string();
        assert!(err.contains("(0, 1)"), "{err}");
    }

    #[test]
    fn multiple_feature_files_stack() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "flow.csv", "time,a,b\n0,1,2\n5,3,4\n");
        let b = write(dir.path(), "speed.csv", "time,a,b\n0,10,20\n5,30,40\n");
        let t = load_traffic(&[&a, &b]).unwrap();
        assert_eq!(t.values.dim(), (2, 2, 2));
        assert_eq!(t.values[[1, 1, 1]], 40.0);
        let c = write(dir.path(), "bad.csv", "time,a,c\n0,1,2\n5,3,4\n");
        assert!(load_traffic(&[&a, &c]).is_err());
    }

    #[test]
    fn binary_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let values = Array3::from_shape_fn((3, 4, 2), |(i, j, k)| (i * 100 + j * 10 + k) as f64 + 0.25);
        let t = TrafficTensor::new(
            values,
            (0..3).map(|i| i.to_string()).collect(),
            (0..4).map(|i| i.to_string()).collect(),
            vec!["feature0".into(), "feature1".into()],
        )
        .unwrap();
        let p = dir.path().join("x.bin");
        write_traffic_bin(&p, &t).unwrap();
        assert_eq!(load_traffic(&[&p]).unwrap(), t);
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_traffic_bin(&p), Err(Error::Shape(_))));
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = ndarray::array![[0.1, -2.5e-7], [1.0 / 3.0, 4.0]];
        write_matrix_csv(&p, &m).unwrap();
        assert_eq!(load_matrix_csv(&p).unwrap(), m);
    }
}
