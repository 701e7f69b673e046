//! Run artifacts on disk: flat binary weight and report blobs, and the CSV
//! outputs of a federation run.
//!
//! Weight blob layout: feature count and class count as little-endian u64,
//! then the weight matrix row-major as little-endian f64, bias vector last.
//! A report blob extends it with the smoothing confidence (f64), the moment
//! vector length (u64), and the moment payload (f64s).
//!
//! CSV outputs contain no wall-clock or host-dependent fields, so a rerun
//! with the same seed produces byte-identical files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::federation::RoundRecord;
use crate::metrics::ClientReport;
use crate::model::LinearModelWeights;
use crate::partition::PartitionAssignment;

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    fn take_u64(&mut self) -> Result<u64> {
        let bytes: [u8; 8] = self
            .bytes
            .get(self.offset..self.offset + 8)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| self.truncated())?;
        self.offset += 8;
        Ok(u64::from_le_bytes(bytes))
    }

    fn take_f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.take_u64()?))
    }

    fn truncated(&self) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: 0,
            message: format!("binary blob truncated at byte {}", self.offset),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(Error::Parse {
                path: self.path.clone(),
                line: 0,
                message: format!(
                    "{} trailing bytes after the payload",
                    self.bytes.len() - self.offset
                ),
            });
        }
        Ok(())
    }
}

fn weights_to_bytes(weights: &LinearModelWeights, buf: &mut Vec<u8>) {
    push_u64(buf, weights.num_features() as u64);
    push_u64(buf, weights.num_classes() as u64);
    for &x in weights.weight.iter() {
        push_f64(buf, x);
    }
    for &b in weights.bias.iter() {
        push_f64(buf, b);
    }
}

fn weights_from_cursor(cur: &mut Cursor) -> Result<LinearModelWeights> {
    let f = cur.take_u64()? as usize;
    let c = cur.take_u64()? as usize;
    let mut weight = Array2::zeros((f, c));
    for i in 0..f {
        for j in 0..c {
            weight[[i, j]] = cur.take_f64()?;
        }
    }
    let mut bias = Array1::zeros(c);
    for j in 0..c {
        bias[j] = cur.take_f64()?;
    }
    Ok(LinearModelWeights { weight, bias })
}

/// Writes model weights as a flat binary blob.
pub fn write_weights(weights: &LinearModelWeights, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * weights.weight.len() + 8 * weights.bias.len());
    weights_to_bytes(weights, &mut buf);
    fs::write(path, buf)?;
    Ok(())
}

/// Reads model weights written by [`write_weights`], rejecting truncated or
/// oversized blobs.
pub fn read_weights(path: &Path) -> Result<LinearModelWeights> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        offset: 0,
        path: path.display().to_string(),
    };
    let weights = weights_from_cursor(&mut cur)?;
    cur.finish()?;
    Ok(weights)
}

/// The serialized portion of a client report: the weight blob followed by
/// the smoothing confidence and the moment fingerprint. Client identity and
/// sample count travel out of band (the file name and the dataset masks).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBlob {
    pub weights: LinearModelWeights,
    pub confidence: f64,
    pub moments: Vec<f64>,
}

/// Writes a client report's serializable payload.
pub fn write_report(report: &ClientReport, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    weights_to_bytes(&report.weights, &mut buf);
    push_f64(&mut buf, report.confidence);
    push_u64(&mut buf, report.moments.len() as u64);
    for &m in &report.moments {
        push_f64(&mut buf, m);
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads a report blob written by [`write_report`].
pub fn read_report(path: &Path) -> Result<ReportBlob> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        offset: 0,
        path: path.display().to_string(),
    };
    let weights = weights_from_cursor(&mut cur)?;
    let confidence = cur.take_f64()?;
    let len = cur.take_u64()? as usize;
    let mut moments = Vec::with_capacity(len.min(1 << 20));
    for _ in 0..len {
        moments.push(cur.take_f64()?);
    }
    cur.finish()?;
    Ok(ReportBlob {
        weights,
        confidence,
        moments,
    })
}

fn join<T: ToString>(values: impl IntoIterator<Item = T>, sep: &str) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

/// Writes one row per round: the round index, global test accuracy, the
/// sampled client ids (';'-joined), and per-client local test accuracies
/// (';'-joined, NaN for clients without test nodes). Wall-clock timings are
/// deliberately omitted so identical seeds give identical bytes.
pub fn write_rounds_csv(records: &[RoundRecord], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "round,global_accuracy,participants,local_accuracies")?;
    for rec in records {
        writeln!(
            out,
            "{},{},{},{}",
            rec.round,
            rec.global_accuracy,
            join(rec.participants.iter(), ";"),
            join(rec.local_accuracy.iter(), ";"),
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the node-to-client map, one `node,client` row per node.
pub fn write_assignment_csv(assignment: &PartitionAssignment, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "node,client")?;
    for (node, &client) in assignment.assignment().iter().enumerate() {
        writeln!(out, "{node},{client}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a node-to-client map written by [`write_assignment_csv`]; rows must
/// cover nodes 0..n in order.
pub fn read_assignment_csv(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut assignment = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let parse_error = |message: String| Error::Parse {
            path: display.clone(),
            line: i + 1,
            message,
        };
        if i == 0 {
            if line.trim() != "node,client" {
                return Err(parse_error(format!(
                    "expected header 'node,client', found {line:?}"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (node_text, client_text) = line
            .split_once(',')
            .ok_or_else(|| parse_error("expected 'node,client'".into()))?;
        let node: usize = node_text
            .trim()
            .parse()
            .map_err(|e| parse_error(format!("node id {node_text:?}: {e}")))?;
        if node != assignment.len() {
            return Err(parse_error(format!(
                "expected node {} on this row, found {node}",
                assignment.len()
            )));
        }
        let client: usize = client_text
            .trim()
            .parse()
            .map_err(|e| parse_error(format!("client id {client_text:?}: {e}")))?;
        assignment.push(client);
    }
    Ok(assignment)
}

/// Writes a per-client label histogram, one row per client.
pub fn write_label_distribution_csv(counts: &Array2<u64>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(
        out,
        "client,{}",
        join((0..counts.ncols()).map(|c| format!("class_{c}")), ",")
    )?;
    for (client, row) in counts.rows().into_iter().enumerate() {
        writeln!(out, "{client},{}", join(row.iter(), ","))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a square client-by-client matrix (similarity or membership) with
/// the given client ids as both header and row labels.
pub fn write_client_matrix_csv<T: ToString + Copy>(
    matrix: &Array2<T>,
    client_ids: &[usize],
    path: &Path,
) -> Result<()> {
    if matrix.nrows() != client_ids.len() || matrix.ncols() != client_ids.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix for {} client ids",
            matrix.nrows(),
            matrix.ncols(),
            client_ids.len()
        )));
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(
        out,
        "client,{}",
        join(client_ids.iter().map(|id| format!("client_{id}")), ",")
    )?;
    for (row, &id) in matrix.rows().into_iter().zip(client_ids) {
        writeln!(out, "client_{id},{}", join(row.iter().copied(), ","))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample_weights() -> LinearModelWeights {
        LinearModelWeights {
            weight: array![[0.25, -1.5, 3.0], [f64::MIN_POSITIVE, 0.1 + 0.2, -0.0]],
            bias: array![1e-300, 7.25, -2.0],
        }
    }

    #[test]
    fn weight_blob_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let w = sample_weights();
        write_weights(&w, &path).unwrap();
        let r = read_weights(&path).unwrap();
        for (a, b) in w.weight.iter().zip(r.weight.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in w.bias.iter().zip(r.bias.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn weight_blob_layout_is_header_then_rows_then_bias() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let w = LinearModelWeights {
            weight: array![[1.0, 2.0]],
            bias: array![3.0, 4.0],
        };
        write_weights(&w, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 4 * 8);
        assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        let cell = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        assert_eq!(cell, 1.0);
        let last = f64::from_le_bytes(bytes[40..48].try_into().unwrap());
        assert_eq!(last, 4.0);
    }

    #[test]
    fn corrupt_blobs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let w = sample_weights();
        write_weights(&w, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        assert!(read_weights(&path).is_err());
        bytes.extend_from_slice(&[0u8; 16]);
        fs::write(&path, &bytes).unwrap();
        assert!(read_weights(&path).is_err());
    }

    #[test]
    fn report_blob_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.bin");
        let report = ClientReport {
            client_id: 3,
            weights: sample_weights(),
            sample_count: 11,
            confidence: 4.75,
            moments: vec![0.5, -0.25, 1e-12],
        };
        write_report(&report, &path).unwrap();
        let blob = read_report(&path).unwrap();
        assert_eq!(blob.weights, report.weights);
        assert_eq!(blob.confidence, 4.75);
        assert_eq!(blob.moments, report.moments);
    }

    #[test]
    fn rounds_csv_is_stable_and_skips_timings() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![RoundRecord {
            round: 1,
            participants: vec![0, 2],
            local_accuracy: vec![0.5, f64::NAN, 1.0],
            global_accuracy: 0.75,
            client_seconds: 1.23,
            server_seconds: 4.56,
        }];
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_rounds_csv(&records, &a).unwrap();
        let mut tweaked = records.clone();
        tweaked[0].client_seconds = 99.0;
        write_rounds_csv(&tweaked, &b).unwrap();
        let text_a = fs::read_to_string(&a).unwrap();
        let text_b = fs::read_to_string(&b).unwrap();
        assert_eq!(text_a, text_b);
        assert_eq!(
            text_a,
            "round,global_accuracy,participants,local_accuracies\n1,0.75,0;2,0.5;NaN;1\n"
        );
    }

    #[test]
    fn assignment_csv_round_trip_and_error_lines() {
        use crate::graph::{build_graph, Masks, UNLABELED};
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("assignment.csv");
        let g = build_graph(
            &[(0, 1), (1, 2), (2, 3)],
            Array2::zeros((4, 1)),
            vec![UNLABELED; 4],
            Masks {
                train: vec![false; 4],
                val: vec![false; 4],
                test: vec![false; 4],
            },
        )
        .unwrap();
        let p = PartitionAssignment::from_assignment(&g, vec![0, 0, 1, 1], 2).unwrap();
        write_assignment_csv(&p, &path).unwrap();
        assert_eq!(read_assignment_csv(&path).unwrap(), vec![0, 0, 1, 1]);
        fs::write(&path, "node,client\n0,0\n2,1\n").unwrap();
        assert!(matches!(
            read_assignment_csv(&path),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn client_matrix_csv_has_labeled_axes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sim.csv");
        let m = array![[1.0, 0.5], [0.5, 1.0]];
        write_client_matrix_csv(&m, &[4, 7], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "client,client_4,client_7\nclient_4,1,0.5\nclient_7,0.5,1\n"
        );
        assert!(write_client_matrix_csv(&m, &[1], &path).is_err());
    }
}
