//! On-disk formats: the `GSAM` matrix container, the chain manifest, the
//! protocol config, canonical (byte-stable) JSON reports, and PGM/CSV
//! matrix emission.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::certificate::{CertificateReport, ProtocolConfig};
use crate::error::{GsaError, Result};
use crate::matrix::LayerMatrix;

pub const CONTAINER_MAGIC: [u8; 4] = *b"GSAM";
pub const CONTAINER_VERSION: u16 = 1;

/// Header: magic "GSAM", version u16 LE, rows u32 LE, cols u32 LE; payload
/// rows*cols f64 LE row-major.
pub fn write_matrix(path: &Path, matrix: &LayerMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + matrix.rows() * matrix.cols() * 8);
    buf.extend_from_slice(&CONTAINER_MAGIC);
    buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    for v in matrix.row_major() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn container_err(path: &Path, offset: u64, reason: impl Into<String>) -> GsaError {
    GsaError::Container {
        file: path.display().to_string(),
        offset,
        reason: reason.into(),
    }
}

pub fn read_matrix(path: &Path, label: impl Into<String>) -> Result<LayerMatrix> {
    let mut f = fs::File::open(path)
        .map_err(|e| container_err(path, 0, format!("cannot open: {e}")))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    read_matrix_impl(path, &bytes, label.into())
}

fn read_matrix_impl(path: &Path, bytes: &[u8], label: String) -> Result<LayerMatrix> {
    const HEADER: usize = 4 + 2 + 4 + 4;
    if bytes.len() < HEADER {
        return Err(container_err(path, bytes.len() as u64, "truncated header"));
    }
    if bytes[0..4] != CONTAINER_MAGIC {
        return Err(container_err(path, 0, "bad magic (want GSAM)"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CONTAINER_VERSION {
        return Err(container_err(path, 4, format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let want = HEADER + rows * cols * 8;
    if bytes.len() != want {
        return Err(container_err(
            path,
            bytes.len().min(want) as u64,
            format!("payload length {} != expected {}", bytes.len() - HEADER, want - HEADER),
        ));
    }
    let mut entries = Vec::with_capacity(rows * cols);
    for i in 0..rows * cols {
        let off = HEADER + i * 8;
        let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(container_err(path, off as u64, "non-finite entry"));
        }
        entries.push(v);
    }
    LayerMatrix::from_rows(rows, cols, &entries, label)
}

/// One manifest entry: file, label, and the declared operator provenance
/// (which model layer/block the matrix came from and how it was flattened).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: String,
    #[serde(default)]
    pub provenance: String,
}

/// Ordered chain manifest; order defines interface indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub matrices: Vec<ManifestEntry>,
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| GsaError::Manifest {
        file: path.display().to_string(),
        reason: format!("cannot read: {e}"),
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| GsaError::Manifest {
        file: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if manifest.matrices.is_empty() {
        return Err(GsaError::Manifest {
            file: path.display().to_string(),
            reason: "manifest lists no matrices".to_string(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for entry in &manifest.matrices {
        if !seen.insert(&entry.label) {
            return Err(GsaError::Manifest {
                file: path.display().to_string(),
                reason: format!("duplicate label `{}`", entry.label),
            });
        }
    }
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let value = serde_json::to_value(manifest).expect("manifest serializes");
    fs::write(path, to_canonical_json(&value))?;
    Ok(())
}

/// Load the chain named by a manifest; file paths resolve relative to the
/// manifest's directory.
pub fn load_chain(manifest_path: &Path) -> Result<Vec<LayerMatrix>> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::with_capacity(manifest.matrices.len());
    for entry in &manifest.matrices {
        let path: PathBuf = dir.join(&entry.file);
        if !path.exists() {
            return Err(GsaError::Manifest {
                file: manifest_path.display().to_string(),
                reason: format!("references missing file `{}`", entry.file),
            });
        }
        out.push(read_matrix(&path, entry.label.clone())?);
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<ProtocolConfig> {
    let text = fs::read_to_string(path).map_err(|e| GsaError::Config {
        file: path.display().to_string(),
        reason: format!("cannot read: {e}"),
    })?;
    serde_json::from_str(&text).map_err(|e| GsaError::Config {
        file: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn write_config(path: &Path, config: &ProtocolConfig) -> Result<()> {
    let value = serde_json::to_value(config).expect("config serializes");
    fs::write(path, to_canonical_json(&value))?;
    Ok(())
}

/// External row-partition import: one line per row with its group id
/// (0 = residual). Line number is the row index.
pub fn read_partition(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path)?;
    let mut assignments = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let gid: usize = t.parse().map_err(|_| GsaError::Config {
            file: path.display().to_string(),
            reason: format!("line {}: `{t}` is not a group id", lineno + 1),
        })?;
        assignments.push(gid);
    }
    if assignments.is_empty() {
        return Err(GsaError::Config {
            file: path.display().to_string(),
            reason: "partition file assigns no rows".to_string(),
        });
    }
    let k = assignments.iter().copied().max().unwrap();
    let mut groups = vec![Vec::new(); k + 1];
    for (row, gid) in assignments.into_iter().enumerate() {
        groups[gid].push(row);
    }
    Ok(groups)
}

/// Canonical JSON: keys sorted (serde_json's default map is ordered),
/// floats at 17 significant digits, no insignificant whitespace. Identical
/// values give identical bytes.
pub fn to_canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().expect("numeric");
                out.push_str(&format!("{f:.16e}"));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serializes"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push(':');
                write_value(v, out);
            }
            out.push('}');
        }
    }
}

pub fn write_report(path: &Path, report: &CertificateReport) -> Result<()> {
    let value = serde_json::to_value(report).map_err(|e| GsaError::Config {
        file: path.display().to_string(),
        reason: format!("report serialization: {e}"),
    })?;
    fs::write(path, to_canonical_json(&value))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<CertificateReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| GsaError::Config {
        file: path.display().to_string(),
        reason: format!("report parse: {e}"),
    })
}

/// Scaling metadata written next to every PGM so the numeric values stay
/// recoverable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgmSidecar {
    pub rows: usize,
    pub cols: usize,
    pub min: f64,
    pub max: f64,
    pub scaling: String,
    pub maxval: u16,
}

/// 8-bit binary PGM (P5) with linear min-max scaling; the sidecar JSON is
/// written at `<path>.json`.
pub fn write_pgm(path: &Path, matrix: &DMatrix<f64>) -> Result<PgmSidecar> {
    let (rows, cols) = (matrix.nrows(), matrix.ncols());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in matrix.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 0.0;
    }
    let span = hi - lo;
    let mut bytes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let b = if span > 0.0 {
                (((matrix[(r, c)] - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0u8
            };
            bytes.push(b);
        }
    }
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{cols} {rows}\n255\n")?;
    f.write_all(&bytes)?;
    let sidecar = PgmSidecar {
        rows,
        cols,
        min: lo,
        max: hi,
        scaling: "linear-minmax".to_string(),
        maxval: 255,
    };
    let sidecar_path = PathBuf::from(format!("{}.json", path.display()));
    let value = serde_json::to_value(&sidecar).expect("sidecar serializes");
    fs::write(sidecar_path, to_canonical_json(&value))?;
    Ok(sidecar)
}

/// Plain numeric CSV at 17 significant digits.
pub fn write_csv(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for r in 0..matrix.nrows() {
        for c in 0..matrix.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.16e}", matrix[(r, c)]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Block-energy entries as CSV.
pub fn write_block_energy_csv(path: &Path, entries: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    for row in entries {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:.16e}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::{analyze_chain, emit_report};
    use crate::synth::{gen_power_law_chain, SynthChainSpec};

    fn tmpdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("gsa-io-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn container_roundtrip_bit_exact() {
        let dir = tmpdir("rt");
        let path = dir.join("w.gsam");
        let entries: Vec<f64> = (0..12)
            .map(|i| (i as f64 * 0.37 - 1.0) * 1e-3 + 1.0 / 3.0)
            .collect();
        let w = LayerMatrix::from_rows(3, 4, &entries, "w").unwrap();
        write_matrix(&path, &w).unwrap();
        let back = read_matrix(&path, "w").unwrap();
        assert_eq!(w.data(), back.data());
    }

    #[test]
    fn container_rejects_bad_magic() {
        let dir = tmpdir("magic");
        let path = dir.join("bad.gsam");
        fs::write(&path, b"NOPE\x01\x00\x01\x00\x00\x00\x01\x00\x00\x00").unwrap();
        match read_matrix(&path, "x") {
            Err(GsaError::Container { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected container error, got {other:?}"),
        }
    }

    #[test]
    fn container_rejects_truncated_payload() {
        let dir = tmpdir("trunc");
        let path = dir.join("short.gsam");
        let w = LayerMatrix::from_rows(2, 2, &[1.0, 2.0, 3.0, 4.0], "w").unwrap();
        write_matrix(&path, &w).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_matrix(&path, "w"),
            Err(GsaError::Container { .. })
        ));
    }

    #[test]
    fn container_rejects_non_finite_with_offset() {
        let dir = tmpdir("nan");
        let path = dir.join("nan.gsam");
        let w = LayerMatrix::from_rows(1, 2, &[1.0, 2.0], "w").unwrap();
        write_matrix(&path, &w).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[14 + 8..14 + 16].copy_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        match read_matrix(&path, "w") {
            Err(GsaError::Container { offset, .. }) => assert_eq!(offset, 22),
            other => panic!("expected container error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_roundtrip_and_chain_load() {
        let dir = tmpdir("manifest");
        let w0 = LayerMatrix::from_rows(2, 2, &[1.0, 0.0, 0.0, 2.0], "a").unwrap();
        let w1 = LayerMatrix::from_rows(2, 2, &[2.0, 0.0, 0.0, 1.0], "b").unwrap();
        write_matrix(&dir.join("a.gsam"), &w0).unwrap();
        write_matrix(&dir.join("b.gsam"), &w1).unwrap();
        let manifest = Manifest {
            matrices: vec![
                ManifestEntry {
                    file: "a.gsam".to_string(),
                    label: "a".to_string(),
                    provenance: "block0.mlp".to_string(),
                },
                ManifestEntry {
                    file: "b.gsam".to_string(),
                    label: "b".to_string(),
                    provenance: "block1.mlp".to_string(),
                },
            ],
        };
        let mpath = dir.join("chain.json");
        write_manifest(&mpath, &manifest).unwrap();
        let chain = load_chain(&mpath).unwrap();
        assert_eq!(chain.len(), 2);
        assert_eq!(chain[0].label(), "a");
        assert_eq!(chain[1].data(), w1.data());

        // Missing backing file is a manifest error.
        let manifest2 = Manifest {
            matrices: vec![ManifestEntry {
                file: "missing.gsam".to_string(),
                label: "z".to_string(),
                provenance: String::new(),
            }],
        };
        let mpath2 = dir.join("bad.json");
        write_manifest(&mpath2, &manifest2).unwrap();
        assert!(matches!(
            load_chain(&mpath2),
            Err(GsaError::Manifest { .. })
        ));
    }

    #[test]
    fn partition_file_parses() {
        let dir = tmpdir("part");
        let path = dir.join("groups.txt");
        fs::write(&path, "1\n1\n2\n0\n# comment\n2\n").unwrap();
        let groups = read_partition(&path).unwrap();
        assert_eq!(groups[0], vec![3]);
        assert_eq!(groups[1], vec![0, 1]);
        assert_eq!(groups[2], vec![2, 4]);
        fs::write(&path, "x\n").unwrap();
        assert!(read_partition(&path).is_err());
    }

    #[test]
    fn canonical_json_floats_and_key_order() {
        let value = serde_json::json!({
            "b": 0.5,
            "a": 1,
            "c": [true, null, "s"],
        });
        let text = to_canonical_json(&value);
        assert_eq!(text, "{\"a\":1,\"b\":5.0000000000000000e-1,\"c\":[true,null,\"s\"]}");
    }

    #[test]
    fn report_roundtrip_and_byte_stability() {
        let spec = SynthChainSpec::new(12, vec![1.0, 1.1], 5);
        let chain = gen_power_law_chain(&spec).unwrap();
        let protocol = crate::certificate::ProtocolConfig {
            rank_rule: crate::certificate::RankRule::Energy(0.25),
            theta_row: 1e-6,
            ..Default::default()
        };
        let analysis = analyze_chain(&chain, &protocol).unwrap();
        let report = emit_report(&analysis, &[]);
        let dir = tmpdir("report");
        let path = dir.join("report.json");
        write_report(&path, &report).unwrap();
        let text1 = fs::read_to_string(&path).unwrap();
        write_report(&path, &report).unwrap();
        let text2 = fs::read_to_string(&path).unwrap();
        assert_eq!(text1, text2);
        let back = read_report(&path).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn pgm_header_payload_and_sidecar() {
        let dir = tmpdir("pgm");
        let path = dir.join("m.pgm");
        let m = DMatrix::from_row_slice(2, 3, &[0.0, 0.5, 1.0, -1.0, 0.25, 2.0]);
        let sidecar = write_pgm(&path, &m).unwrap();
        assert_eq!(sidecar.min, -1.0);
        assert_eq!(sidecar.max, 2.0);
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 6);
        // min -> 0, max -> 255.
        let payload = &bytes[header.len()..];
        assert_eq!(payload[3], 0);
        assert_eq!(payload[5], 255);
        let meta: PgmSidecar = serde_json::from_str(
            &fs::read_to_string(format!("{}.json", path.display())).unwrap(),
        )
        .unwrap();
        assert_eq!(meta, sidecar);
    }

    #[test]
    fn csv_writes_parseable_floats() {
        let dir = tmpdir("csv");
        let path = dir.join("m.csv");
        let m = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, -0.125, 7.0, 0.0]);
        write_csv(&path, &m).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let parsed: Vec<Vec<f64>> = text
            .lines()
            .map(|l| l.split(',').map(|t| t.parse().unwrap()).collect())
            .collect();
        assert_eq!(parsed[0][0], 1.0 / 3.0);
        assert_eq!(parsed[1][0], 7.0);
    }
}
