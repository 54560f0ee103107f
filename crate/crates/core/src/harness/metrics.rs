use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One checkpoint of one repetition. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub instance_id: String,
    pub strategy: String,
    /// Repetition index; the RNG stream is derived from it and the master seed.
    pub seed: u64,
    pub t: usize,
    /// Posterior probability that the oracle returns the true best target.
    pub posterior_confidence: f64,
    /// Whether the empirical best target is the true one.
    pub z_hat_correct: u8,
    pub rejections_cumulative: u64,
    /// Time spent inside the strategy, excluding metric computation.
    pub wall_ms: f64,
}

/// A repetition that failed; the other repetitions are unaffected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub instance_id: String,
    pub strategy: String,
    pub seed: u64,
    pub t: usize,
    pub error: String,
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    if rows.is_empty() {
        // The serializer only emits headers alongside a record.
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "instance_id",
            "strategy",
            "seed",
            "t",
            "posterior_confidence",
            "z_hat_correct",
            "rejections_cumulative",
            "wall_ms",
        ])?;
        w.flush()?;
        return Ok(());
    }
    write_rows(out, rows)
}

pub fn read_metrics<R: Read>(input: R) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_errors<W: Write>(out: W, rows: &[ErrorRow]) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["instance_id", "strategy", "seed", "t", "error"])?;
        w.flush()?;
        return Ok(());
    }
    write_rows(out, rows)
}

pub fn write_metrics_file(path: &Path, rows: &[MetricRow]) -> Result<()> {
    write_metrics(std::io::BufWriter::new(std::fs::File::create(path)?), rows)
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricRow>> {
    read_metrics(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row_strategy() -> impl Strategy<Value = MetricRow> {
        (
            "[a-z0-9_-]{1,8}",
            "[a-z,\" ]{1,8}",
            any::<u64>(),
            0usize..100_000,
            0.0f64..=1.0,
            0u8..=1,
            any::<u64>(),
            0.0f64..1e6,
        )
            .prop_map(|(i, s, seed, t, c, z, r, w)| MetricRow {
                instance_id: i,
                strategy: s,
                seed,
                t,
                posterior_confidence: c,
                z_hat_correct: z,
                rejections_cumulative: r,
                wall_ms: w,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in proptest::collection::vec(row_strategy(), 0..20)) {
            let mut buf = Vec::new();
            write_metrics(&mut buf, &rows).unwrap();
            let back = read_metrics(buf.as_slice()).unwrap();
            prop_assert_eq!(back, rows);
        }
    }

    #[test]
    fn header_order() {
        let mut buf = Vec::new();
        write_metrics(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim(),
            "instance_id,strategy,seed,t,posterior_confidence,z_hat_correct,rejections_cumulative,wall_ms"
        );
    }
}
