//! Measurement records and CSV persistence.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One channel of one evaluated point.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub scheme: String,
    pub spans: usize,
    pub tx_spans: usize,
    pub distance_km: f64,
    pub power_dbm: f64,
    pub channel: usize,
    pub snr_db: f64,
    pub snr_x_db: f64,
    pub snr_y_db: f64,
    pub seed: u64,
    pub realization: usize,
    /// Wall time of the whole point; not persisted, so files stay reproducible.
    pub wall_time_s: f64,
}

#[derive(Serialize, Deserialize)]
struct Row {
    scheme: String,
    spans: usize,
    tx_spans: usize,
    distance_km: f64,
    power_dbm: f64,
    channel: usize,
    snr_db: f64,
    snr_x_db: f64,
    snr_y_db: f64,
    seed: u64,
    realization: usize,
}

fn scheme_rank(label: &str) -> u8 {
    match label {
        "edc" => 0,
        "tx_dbp" => 1,
        "rx_dbp" => 2,
        "split" => 3,
        _ => 4,
    }
}

/// Canonical order: scheme, spans, split, power, realization, channel.
pub fn canonical_cmp(a: &MeasurementRecord, b: &MeasurementRecord) -> Ordering {
    scheme_rank(&a.scheme)
        .cmp(&scheme_rank(&b.scheme))
        .then_with(|| a.scheme.cmp(&b.scheme))
        .then(a.spans.cmp(&b.spans))
        .then(a.tx_spans.cmp(&b.tx_spans))
        .then(a.power_dbm.total_cmp(&b.power_dbm))
        .then(a.realization.cmp(&b.realization))
        .then(a.channel.cmp(&b.channel))
}

pub fn sort_records(records: &mut [MeasurementRecord]) {
    records.sort_by(canonical_cmp);
}

/// Write records in canonical order with the fixed results header.
pub fn write_csv<W: Write>(records: &[MeasurementRecord], writer: W) -> Result<()> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::Writer::from_writer(writer);
    for r in &sorted {
        w.serialize(Row {
            scheme: r.scheme.clone(),
            spans: r.spans,
            tx_spans: r.tx_spans,
            distance_km: r.distance_km,
            power_dbm: r.power_dbm,
            channel: r.channel,
            snr_db: r.snr_db,
            snr_x_db: r.snr_x_db,
            snr_y_db: r.snr_y_db,
            seed: r.seed,
            realization: r.realization,
        })?;
    }
    if sorted.is_empty() {
        w.write_record(["scheme", "spans", "tx_spans", "distance_km", "power_dbm", "channel", "snr_db", "snr_x_db", "snr_y_db", "seed", "realization"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<MeasurementRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize::<Row>() {
        let row = row?;
        out.push(MeasurementRecord {
            scheme: row.scheme,
            spans: row.spans,
            tx_spans: row.tx_spans,
            distance_km: row.distance_km,
            power_dbm: row.power_dbm,
            channel: row.channel,
            snr_db: row.snr_db,
            snr_x_db: row.snr_x_db,
            snr_y_db: row.snr_y_db,
            seed: row.seed,
            realization: row.realization,
            wall_time_s: 0.0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(scheme: &str, power: f64, channel: usize) -> MeasurementRecord {
        MeasurementRecord {
            scheme: scheme.into(),
            spans: 4,
            tx_spans: 2,
            distance_km: 307.84,
            power_dbm: power,
            channel,
            snr_db: 20.5,
            snr_x_db: 20.4,
            snr_y_db: 20.6,
            seed: 42,
            realization: 0,
            wall_time_s: 1.5,
        }
    }

    #[test]
    fn header_and_canonical_order() {
        let records = vec![rec("split", 1.0, 0), rec("edc", 2.0, 1), rec("edc", 2.0, 0), rec("edc", -1.0, 0)];
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scheme,spans,tx_spans,distance_km,power_dbm,channel,snr_db,snr_x_db,snr_y_db,seed,realization"
        );
        assert!(lines.next().unwrap().starts_with("edc,4,2,307.84,-1.0,0,"));
        let back = read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back[3].scheme, "split");
    }

    #[test]
    fn empty_file_still_has_header() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("scheme,spans"));
    }
}
