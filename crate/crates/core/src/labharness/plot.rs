//! Per-figure series files derived from a results CSV.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::records::MeasurementRecord;
use super::sweep::{extract_peaks, pooled_snr_db};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct PlotFiles {
    pub snr_vs_power: PathBuf,
    pub gain_vs_split: PathBuf,
    pub peak_vs_distance: PathBuf,
}

#[derive(Serialize)]
struct PowerRow<'a> {
    scheme: &'a str,
    spans: usize,
    tx_spans: usize,
    power_dbm: f64,
    snr_db: f64,
}

#[derive(Serialize)]
struct SplitRow<'a> {
    spans: usize,
    tx_spans: usize,
    scheme: &'a str,
    peak_power_dbm: f64,
    peak_snr_db: f64,
    gain_over_edc_db: Option<f64>,
}

#[derive(Serialize)]
struct DistanceRow<'a> {
    scheme: &'a str,
    spans: usize,
    tx_spans: usize,
    distance_km: f64,
    peak_power_dbm: f64,
    peak_snr_db: f64,
}

/// Write SNR-versus-power curves, peak gain versus split and peak SNR versus
/// distance into `dir`, averaging channels and realizations.
pub fn write_plot_series(records: &[MeasurementRecord], dir: &Path) -> Result<PlotFiles> {
    std::fs::create_dir_all(dir)?;
    let files = PlotFiles {
        snr_vs_power: dir.join("snr_vs_power.csv"),
        gain_vs_split: dir.join("gain_vs_split.csv"),
        peak_vs_distance: dir.join("peak_vs_distance.csv"),
    };

    let mut sorted = records.to_vec();
    super::records::sort_records(&mut sorted);
    let mut w = csv::Writer::from_path(&files.snr_vs_power)?;
    let mut i = 0;
    while i < sorted.len() {
        let r = &sorted[i];
        let j = sorted[i..]
            .iter()
            .position(|o| o.scheme != r.scheme || o.spans != r.spans || o.tx_spans != r.tx_spans || o.power_dbm != r.power_dbm)
            .map_or(sorted.len(), |d| i + d);
        if let Some(snr) = pooled_snr_db(sorted[i..j].iter().map(|o| o.snr_db)) {
            w.serialize(PowerRow { scheme: &r.scheme, spans: r.spans, tx_spans: r.tx_spans, power_dbm: r.power_dbm, snr_db: snr })?;
        }
        i = j;
    }
    w.flush()?;

    let peaks = extract_peaks(records);
    let mut w = csv::Writer::from_path(&files.gain_vs_split)?;
    for p in &peaks {
        let edc = peaks.iter().find(|e| e.scheme == "edc" && e.spans == p.spans);
        w.serialize(SplitRow {
            spans: p.spans,
            tx_spans: p.tx_spans,
            scheme: &p.scheme,
            peak_power_dbm: p.power_dbm,
            peak_snr_db: p.snr_db,
            gain_over_edc_db: edc.map(|e| p.snr_db - e.snr_db),
        })?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&files.peak_vs_distance)?;
    for p in &peaks {
        w.serialize(DistanceRow {
            scheme: &p.scheme,
            spans: p.spans,
            tx_spans: p.tx_spans,
            distance_km: p.distance_km,
            peak_power_dbm: p.power_dbm,
            peak_snr_db: p.snr_db,
        })?;
    }
    w.flush()?;
    Ok(files)
}
