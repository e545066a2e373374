use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use super::{ExperimentError, Result};

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ExperimentError::parse(path, e.to_string()))
}

fn field<T: std::str::FromStr>(path: &Path, record: &csv::StringRecord, i: usize) -> Result<T> {
    let line = record.position().map_or(0, |p| p.line());
    let raw = record
        .get(i)
        .ok_or_else(|| ExperimentError::parse(path, format!("line {line}: missing column {i}")))?;
    raw.parse()
        .map_err(|_| ExperimentError::parse(path, format!("line {line}: bad value {raw:?}")))
}

/// Reads a `block_id,value` CSV. Ids must cover `0..n` exactly once, in any order.
pub fn read_index_values(path: &Path) -> Result<Vec<f64>> {
    let mut rows = Vec::new();
    for record in reader(path)?.records() {
        let record = record.map_err(|e| ExperimentError::parse(path, e.to_string()))?;
        rows.push((field::<usize>(path, &record, 0)?, field::<f64>(path, &record, 1)?));
    }
    if rows.is_empty() {
        return Err(ExperimentError::parse(path, "no rows"));
    }
    let mut values = vec![None; rows.len()];
    for (id, v) in rows {
        match values.get_mut(id) {
            Some(slot @ None) => *slot = Some(v),
            Some(Some(_)) => return Err(ExperimentError::parse(path, format!("block {id} repeated"))),
            None => return Err(ExperimentError::parse(path, format!("block {id} out of range"))),
        }
    }
    Ok(values.into_iter().map(|v| v.expect("every id seen once")).collect())
}

pub fn write_index_values<W: Write>(out: W, schema: &str, column: &str, values: &[f64]) -> Result<()> {
    let mut out = out;
    let wrap = |e: std::io::Error| ExperimentError::io("<output>", e);
    writeln!(out, "# stocoap {schema} v1").map_err(wrap)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["block_id", column]).map_err(|e| wrap(e.into()))?;
    for (id, v) in values.iter().enumerate() {
        w.write_record([id.to_string(), v.to_string()])
            .map_err(|e| wrap(e.into()))?;
    }
    w.flush().map_err(wrap)
}

/// Reads a one-column `block_id` CSV.
pub fn read_region(path: &Path) -> Result<BTreeSet<usize>> {
    let mut region = BTreeSet::new();
    for record in reader(path)?.records() {
        let record = record.map_err(|e| ExperimentError::parse(path, e.to_string()))?;
        region.insert(field(path, &record, 0)?);
    }
    Ok(region)
}

pub fn write_region<W: Write>(out: W, region: &BTreeSet<usize>) -> Result<()> {
    let mut out = out;
    let wrap = |e: std::io::Error| ExperimentError::io("<output>", e);
    writeln!(out, "# stocoap region v1").map_err(wrap)?;
    writeln!(out, "block_id").map_err(wrap)?;
    for id in region {
        writeln!(out, "{id}").map_err(wrap)?;
    }
    Ok(())
}

/// 1-based datagram sequence numbers to drop, one per line or comma separated.
pub fn read_drop_script(path: &Path) -> Result<BTreeSet<u64>> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    let mut drops = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split([',', ' ', '\t']).filter(|t| !t.is_empty()) {
            let seq: u64 = tok.parse().map_err(|_| {
                ExperimentError::parse(path, format!("line {}: bad sequence number {tok:?}", n + 1))
            })?;
            if seq == 0 {
                return Err(ExperimentError::parse(path, "sequence numbers start at 1"));
            }
            drops.insert(seq);
        }
    }
    Ok(drops)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_values_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let values = [0.5, 0.0, 2.25, 1e-9];
        write_index_values(std::fs::File::create(&path).unwrap(), "heatmap", "value", &values).unwrap();
        assert_eq!(read_index_values(&path).unwrap(), values);
    }

    #[test]
    fn index_values_any_order_but_complete() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "# c\nblock_id,value\n1, 3\n0,1\n").unwrap();
        assert_eq!(read_index_values(&path).unwrap(), vec![1.0, 3.0]);
        std::fs::write(&path, "block_id,value\n0,1\n0,2\n").unwrap();
        assert!(read_index_values(&path).is_err());
        std::fs::write(&path, "block_id,value\n0,1\n2,2\n").unwrap();
        assert!(read_index_values(&path).is_err());
        std::fs::write(&path, "block_id,value\n0,x\n").unwrap();
        assert!(read_index_values(&path).is_err());
        std::fs::write(&path, "block_id,value\n").unwrap();
        assert!(read_index_values(&path).is_err());
    }

    #[test]
    fn region_and_script() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let region: BTreeSet<usize> = [3, 1, 8].into();
        write_region(std::fs::File::create(&path).unwrap(), &region).unwrap();
        assert_eq!(read_region(&path).unwrap(), region);
        let script = dir.path().join("drops.txt");
        std::fs::write(&script, "# drops\n2\n5, 7\n").unwrap();
        assert_eq!(read_drop_script(&script).unwrap(), [2, 5, 7].into());
        std::fs::write(&script, "0\n").unwrap();
        assert!(read_drop_script(&script).is_err());
    }
}
