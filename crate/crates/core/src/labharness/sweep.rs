//! Power, split and distance campaigns, peak extraction and calibration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::records::{sort_records, MeasurementRecord};
use super::{Experiment, PeakSearch};
use crate::analytic::{self, BudgetCoefficients, CalibrationPoint, Crossover, LinkBudget, Scheme};
use crate::error::{Error, Result};
use crate::nlc::split_tx_spans;
use crate::rxchain::TrxNoiseSpec;
use crate::sigkit::{db_to_lin, lin_to_db};

/// Mean SNR of a set of records, averaging error power rather than dB.
pub fn pooled_snr_db(snrs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = snrs.into_iter().fold((0.0, 0usize), |(s, n), v| (s + db_to_lin(-v), n + 1));
    (n > 0).then(|| -lin_to_db(sum / n as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub power_dbm: f64,
    pub snr_db: f64,
}

/// Optimum of one SNR-versus-power curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub scheme: String,
    pub spans: usize,
    pub tx_spans: usize,
    pub distance_km: f64,
    pub power_dbm: f64,
    pub snr_db: f64,
    /// The best sample sits at the end of the evaluated range, so the true peak may lie beyond it.
    pub on_edge: bool,
}

impl Peak {
    pub fn scheme(&self) -> Option<Scheme> {
        scheme_from_label(&self.scheme, self.spans, self.tx_spans)
    }
}

pub(crate) fn scheme_from_label(label: &str, spans: usize, tx_spans: usize) -> Option<Scheme> {
    match label {
        "edc" => Some(Scheme::Edc),
        "tx_dbp" => Some(Scheme::TxDbp),
        "rx_dbp" => Some(Scheme::RxDbp),
        "split" => Some(Scheme::from_split(spans, tx_spans)),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitGain {
    pub spans: usize,
    pub tx_spans: usize,
    pub scheme: String,
    pub peak_snr_db: f64,
    /// Peak SNR over the EDC peak at the same span count.
    pub gain_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverNote {
    /// `None` when no crossover exists within the search limit.
    pub spans: Option<usize>,
    pub distance_km: Option<f64>,
}

impl From<Option<Crossover>> for CrossoverNote {
    fn from(c: Option<Crossover>) -> Self {
        Self { spans: c.map(|c| c.spans), distance_km: c.map(|c| c.distance_km) }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SweepOutput {
    pub records: Vec<MeasurementRecord>,
    pub peaks: Vec<Peak>,
    pub gains: Vec<SplitGain>,
    pub calibration: Option<BudgetCoefficients>,
    pub budget: Option<LinkBudget>,
    pub crossover: Option<CrossoverNote>,
    pub failures: Vec<String>,
}

/// Sidecar written next to the results CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub campaign: String,
    pub peaks: Vec<Peak>,
    pub gains: Vec<SplitGain>,
    pub calibration: Option<BudgetCoefficients>,
    pub budget: Option<LinkBudget>,
    /// Present whenever transceiver noise is finite.
    pub crossover: Option<CrossoverNote>,
    pub failures: Vec<String>,
}

impl Summary {
    pub fn new(campaign: &str, out: &SweepOutput) -> Self {
        Self {
            campaign: campaign.into(),
            peaks: out.peaks.clone(),
            gains: out.gains.clone(),
            calibration: out.calibration,
            budget: out.budget,
            crossover: out.crossover.clone(),
            failures: out.failures.clone(),
        }
    }
}

pub fn summary_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("summary.json")
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(summary)?)?;
    Ok(())
}

/// Maximum of a sampled curve, refined by a parabola through the best sample and its neighbours.
pub fn peak_of(points: &[CurvePoint]) -> Option<(f64, f64, bool)> {
    let mut pts: Vec<CurvePoint> = points.iter().copied().filter(|p| p.snr_db.is_finite()).collect();
    pts.sort_by(|a, b| a.power_dbm.total_cmp(&b.power_dbm));
    let (i, best) = pts.iter().enumerate().max_by(|a, b| a.1.snr_db.total_cmp(&b.1.snr_db).then(b.0.cmp(&a.0)))?;
    if i == 0 || i + 1 == pts.len() {
        return Some((best.power_dbm, best.snr_db, true));
    }
    let (a, b, c) = (pts[i - 1], pts[i], pts[i + 1]);
    let (x0, x1, x2) = (a.power_dbm, b.power_dbm, c.power_dbm);
    let (y0, y1, y2) = (a.snr_db, b.snr_db, c.snr_db);
    // Lagrange parabola y = p·x² + q·x + r through the three samples
    let d = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let p = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / d;
    let q = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / d;
    if !(p < 0.0) {
        return Some((x1, y1, false));
    }
    let xv = (-q / (2.0 * p)).clamp(x0, x2);
    let r = y1 - p * x1 * x1 - q * x1;
    Some((xv, p * xv * xv + q * xv + r, false))
}

type CurveKey = (String, usize, usize);
/// Power bin (µdBm) → (power, distance, SNRs).
type PowerBins = BTreeMap<i64, (f64, f64, Vec<f64>)>;

/// Per-curve averaged points keyed by (scheme label, spans, tx_spans).
fn curves(records: &[MeasurementRecord]) -> BTreeMap<CurveKey, (f64, Vec<CurvePoint>)> {
    let mut grouped: BTreeMap<CurveKey, PowerBins> = BTreeMap::new();
    for r in records {
        let key = (r.scheme.clone(), r.spans, r.tx_spans);
        let pk = (r.power_dbm * 1e6).round() as i64;
        grouped
            .entry(key)
            .or_default()
            .entry(pk)
            .or_insert_with(|| (r.power_dbm, r.distance_km, Vec::new()))
            .2
            .push(r.snr_db);
    }
    grouped
        .into_iter()
        .map(|(k, pts)| {
            let distance = pts.values().next().map_or(0.0, |v| v.1);
            let points = pts
                .into_values()
                .filter_map(|(p, _, snrs)| pooled_snr_db(snrs).map(|s| CurvePoint { power_dbm: p, snr_db: s }))
                .collect();
            (k, (distance, points))
        })
        .collect()
}

/// Peak of every curve present in `records`.
pub fn extract_peaks(records: &[MeasurementRecord]) -> Vec<Peak> {
    let mut peaks: Vec<Peak> = curves(records)
        .into_iter()
        .filter_map(|((scheme, spans, tx_spans), (distance_km, points))| {
            peak_of(&points).map(|(power_dbm, snr_db, on_edge)| Peak {
                scheme,
                spans,
                tx_spans,
                distance_km,
                power_dbm,
                snr_db,
                on_edge,
            })
        })
        .collect();
    peaks.sort_by(|a, b| {
        let ra = MeasurementRecord { scheme: a.scheme.clone(), spans: a.spans, tx_spans: a.tx_spans, ..blank() };
        let rb = MeasurementRecord { scheme: b.scheme.clone(), spans: b.spans, tx_spans: b.tx_spans, ..blank() };
        super::records::canonical_cmp(&ra, &rb)
    });
    for p in peaks.iter().filter(|p| p.on_edge) {
        warn!("{} at N={} k={}: best SNR on the edge of the evaluated powers", p.scheme, p.spans, p.tx_spans);
    }
    peaks
}

fn blank() -> MeasurementRecord {
    MeasurementRecord {
        scheme: String::new(),
        spans: 0,
        tx_spans: 0,
        distance_km: 0.0,
        power_dbm: 0.0,
        channel: 0,
        snr_db: 0.0,
        snr_x_db: 0.0,
        snr_y_db: 0.0,
        seed: 0,
        realization: 0,
        wall_time_s: 0.0,
    }
}

/// All realizations of one power; failures are reported, not raised.
fn evaluate(exp: &Experiment, spans: usize, scheme: Scheme, power: f64) -> (Vec<MeasurementRecord>, Vec<String>) {
    let results: Vec<Result<Vec<MeasurementRecord>>> = (0..exp.config.seeds.realizations)
        .into_par_iter()
        .map(|r| exp.run_point(spans, scheme, power, r))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for res in results {
        match res {
            Ok(r) => records.extend(r),
            Err(e) => {
                warn!("{e}");
                failures.push(e.to_string());
            }
        }
    }
    (records, failures)
}

struct Traced {
    records: Vec<MeasurementRecord>,
    failures: Vec<String>,
}

fn grid_power(exp: &Experiment, i: i64) -> f64 {
    let p = &exp.config.power;
    p.min_dbm + i as f64 * p.step_db
}

/// Every grid power of one curve.
fn trace_full(exp: &Experiment, spans: usize, scheme: Scheme) -> Traced {
    let grid = exp.config.power.grid();
    let parts: Vec<_> = grid.par_iter().map(|&p| evaluate(exp, spans, scheme, p)).collect();
    let mut out = Traced { records: Vec::new(), failures: Vec::new() };
    for (r, f) in parts {
        out.records.extend(r);
        out.failures.extend(f);
    }
    out
}

/// Hill climb on the power grid from its centre, allowed to run past either edge by
/// `max_grid_extension` steps.
fn trace_climb(exp: &Experiment, spans: usize, scheme: Scheme) -> Traced {
    let n = exp.config.power.grid().len() as i64;
    let ext = exp.config.max_grid_extension as i64;
    let (lo, hi) = (-ext, n - 1 + ext);
    let mut seen: BTreeMap<i64, Option<f64>> = BTreeMap::new();
    let mut out = Traced { records: Vec::new(), failures: Vec::new() };
    let mut i = (n - 1) / 2;
    loop {
        let todo: Vec<i64> = [i - 1, i, i + 1].into_iter().filter(|j| (lo..=hi).contains(j) && !seen.contains_key(j)).collect();
        let parts: Vec<_> = todo.par_iter().map(|&j| (j, evaluate(exp, spans, scheme, grid_power(exp, j)))).collect();
        for (j, (records, failures)) in parts {
            seen.insert(j, pooled_snr_db(records.iter().map(|r| r.snr_db)));
            out.records.extend(records);
            out.failures.extend(failures);
        }
        let score = |j: i64| seen.get(&j).copied().flatten().unwrap_or(f64::NEG_INFINITY);
        let here = score(i);
        let (left, right) = (score(i - 1), score(i + 1));
        if !here.is_finite() {
            break;
        }
        if right > here && right >= left {
            i += 1;
        } else if left > here {
            i -= 1;
        } else {
            break;
        }
    }
    out
}

fn trace_all(exp: &Experiment, curves: &[(usize, Scheme)], mode: PeakSearch) -> SweepOutput {
    let traced: Vec<Traced> = curves
        .par_iter()
        .map(|&(n, s)| match mode {
            PeakSearch::Full => trace_full(exp, n, s),
            PeakSearch::Climb => trace_climb(exp, n, s),
        })
        .collect();
    let mut out = SweepOutput::default();
    for t in traced {
        out.records.extend(t.records);
        out.failures.extend(t.failures);
    }
    sort_records(&mut out.records);
    out.failures.sort();
    out.peaks = extract_peaks(&out.records);
    out
}

/// Every configured plan at every configured span count over the full power grid.
pub fn sweep_power(exp: &Experiment) -> Result<SweepOutput> {
    let mut curves = Vec::new();
    for &n in &exp.config.link.span_counts {
        for s in exp.config.schemes(n)? {
            curves.push((n, s));
        }
    }
    info!("power sweep: {} curves x {} powers", curves.len(), exp.config.power.grid().len());
    Ok(trace_all(exp, &curves, PeakSearch::Full))
}

/// Peak SNR for each transmitter share `k` at `N` spans, with gains over EDC.
pub fn sweep_split(exp: &Experiment, spans: usize) -> Result<SweepOutput> {
    let ks: Vec<usize> = match &exp.config.split_tx_spans {
        Some(v) => v.clone(),
        None => (0..=spans).collect(),
    };
    if let Some(&k) = ks.iter().find(|&&k| k > spans) {
        return Err(Error::Config(format!("split {k} exceeds {spans} spans")));
    }
    let mut curves = vec![(spans, Scheme::Edc)];
    for k in ks {
        let s = Scheme::from_split(spans, k);
        if !curves.contains(&(spans, s)) {
            curves.push((spans, s));
        }
    }
    let mut out = trace_all(exp, &curves, exp.config.peak_search);
    out.gains = split_gains(&out.peaks);
    Ok(out)
}

fn split_gains(peaks: &[Peak]) -> Vec<SplitGain> {
    let mut gains = Vec::new();
    for p in peaks {
        let Some(edc) = peaks.iter().find(|e| e.scheme == "edc" && e.spans == p.spans) else { continue };
        gains.push(SplitGain {
            spans: p.spans,
            tx_spans: p.tx_spans,
            scheme: p.scheme.clone(),
            peak_snr_db: p.snr_db,
            gain_db: if p.scheme == "edc" { 0.0 } else { p.snr_db - edc.snr_db },
        });
    }
    gains
}

/// EDC, Tx-DBP, Rx-DBP and the half split at every configured span count,
/// with the analytic budget calibrated on the result and the crossover annotation.
pub fn sweep_distance(exp: &Experiment) -> Result<SweepOutput> {
    let mut curves = Vec::new();
    for &n in &exp.config.link.span_counts {
        for s in [Scheme::Edc, Scheme::TxDbp, Scheme::RxDbp, Scheme::from_split(n, split_tx_spans(n, 0.5)?)] {
            let s = if n == 0 && s.is_dbp() { Scheme::RxDbp } else { s };
            if !curves.contains(&(n, s)) {
                curves.push((n, s));
            }
        }
    }
    let mut out = trace_all(exp, &curves, exp.config.peak_search);
    out.gains = split_gains(&out.peaks);
    let budget = link_budget(exp);
    out.budget = Some(budget);
    match calibrate_budget(exp, &out.records) {
        Ok(c) => {
            out.calibration = Some(c);
            if exp.config.trx.tx_snr_db.is_finite() || exp.config.trx.rx_snr_db.is_finite() {
                out.crossover = Some(analytic::crossover_distance(&budget, &c)?.into());
            }
        }
        Err(e) => {
            warn!("budget calibration skipped: {e}");
            out.failures.push(format!("calibration: {e}"));
        }
    }
    Ok(out)
}

/// Budget terms of the configured link and transceiver.
pub fn link_budget(exp: &Experiment) -> LinkBudget {
    let cfg = &exp.config;
    LinkBudget::from_span(&cfg.link.span(), cfg.center_frequency(), cfg.symbol_rate(), cfg.trx.tx_snr_db, cfg.trx.rx_snr_db)
}

/// Fit the budget's nonlinear coefficients to swept records (span count ≥ 1).
pub fn calibrate_budget(exp: &Experiment, records: &[MeasurementRecord]) -> Result<BudgetCoefficients> {
    let budget = link_budget(exp);
    let points: Vec<CalibrationPoint> = curves(records)
        .into_iter()
        .filter(|((_, spans, _), _)| *spans > 0)
        .flat_map(|((label, spans, k), (_, pts))| {
            let scheme = scheme_from_label(&label, spans, k);
            pts.into_iter().filter_map(move |p| {
                scheme.map(|scheme| CalibrationPoint { scheme, spans, power_dbm: p.power_dbm, snr_db: p.snr_db })
            })
        })
        .collect();
    if points.is_empty() {
        return Err(Error::Calibration("no records with spans to calibrate against".into()));
    }
    analytic::fit_coefficients(&budget, &points, 0.0)
}

/// Find transmitter and receiver SNRs, with a `tx_share` fraction of the noise
/// power coming from the transmitter, that give `target_snr_db` back to back
/// on the centre channel.
pub fn calibrate_b2b(exp: &Experiment, target_snr_db: f64, tx_share: f64) -> Result<TrxNoiseSpec> {
    if !(0.0..=1.0).contains(&tx_share) {
        return Err(Error::Calibration(format!("tx share {tx_share} outside [0, 1]")));
    }
    let centre = exp.config.superchannel.channel_count / 2;
    let split = |level_db: f64| {
        let part = |share: f64| if share == 0.0 { f64::INFINITY } else { level_db - lin_to_db(share) };
        TrxNoiseSpec { tx_snr_db: part(tx_share), rx_snr_db: part(1.0 - tx_share), ..exp.config.trx }
    };
    let measure = |trx: &TrxNoiseSpec| -> Result<f64> {
        let r = exp.run_point_with(0, Scheme::Edc, 0.0, 0, trx)?;
        Ok(r[centre].snr_db)
    };
    let floor = measure(&split(f64::INFINITY))?;
    if floor < target_snr_db + 0.3 {
        return Err(Error::Calibration(format!(
            "target {target_snr_db} dB is above the noiseless back-to-back floor of {floor:.2} dB"
        )));
    }
    let (mut lo, mut hi) = (target_snr_db - 1.0, target_snr_db + 20.0);
    let mut best = split(target_snr_db);
    for _ in 0..40 {
        let mid = (lo + hi) / 2.0;
        let trx = split(mid);
        let got = measure(&trx)?;
        best = trx;
        if (got - target_snr_db).abs() <= 0.01 {
            break;
        }
        if got < target_snr_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labharness::tests::small_config;
    use crate::labharness::{write_csv, ExperimentConfig, PowerSweep};

    #[test]
    fn parabola_recovers_vertex() {
        let pts: Vec<CurvePoint> = [-1.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|&x: &f64| CurvePoint { power_dbm: x, snr_db: 20.0 - (x - 0.3f64).powi(2) })
            .collect();
        let (p, s, edge) = peak_of(&pts).unwrap();
        assert!((p - 0.3).abs() < 1e-9 && (s - 20.0).abs() < 1e-9 && !edge);
        let rising: Vec<CurvePoint> = (0..3).map(|i| CurvePoint { power_dbm: i as f64, snr_db: i as f64 }).collect();
        assert!(peak_of(&rising).unwrap().2);
    }

    #[test]
    fn pooled_snr_averages_error_power() {
        let v = pooled_snr_db([10.0, 20.0]).unwrap();
        assert!((v - (-lin_to_db((0.1 + 0.01) / 2.0))).abs() < 1e-12);
        assert!(pooled_snr_db(std::iter::empty()).is_none());
    }

    fn unimodal_config() -> ExperimentConfig {
        let mut cfg = small_config();
        cfg.link.noise_figure_db = Some(5.0);
        cfg.link.span_counts = vec![2];
        cfg.ssfm.steps_per_span = 10;
        cfg.power = PowerSweep { min_dbm: -2.0, max_dbm: 14.0, step_db: 4.0 };
        cfg
    }

    #[test]
    fn edc_power_curve_is_unimodal() {
        let mut cfg = unimodal_config();
        cfg.plans = vec![crate::labharness::PlanSpec::Keyword(crate::labharness::PlanKeyword::Edc)];
        let exp = Experiment::new(cfg).unwrap();
        let out = sweep_power(&exp).unwrap();
        let snr: Vec<f64> = out.records.iter().map(|r| r.snr_db).collect();
        let top = snr.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(top > 0 && top + 1 < snr.len(), "{snr:?}");
        assert!(snr[..=top].windows(2).all(|w| w[1] > w[0]) && snr[top..].windows(2).all(|w| w[1] < w[0]), "{snr:?}");
        assert_eq!(out.peaks.len(), 1);
        assert!(!out.peaks[0].on_edge);
    }

    #[test]
    fn climb_matches_full_grid_peak() {
        let cfg = ExperimentConfig { peak_search: PeakSearch::Climb, max_grid_extension: 0, ..unimodal_config() };
        let exp = Experiment::new(cfg).unwrap();
        let climbed = sweep_split(&exp, 2).unwrap();
        let full = sweep_power(&exp).unwrap();
        for p in &climbed.peaks {
            let f = full.peaks.iter().find(|q| q.scheme == p.scheme && q.tx_spans == p.tx_spans).unwrap();
            assert!((p.snr_db - f.snr_db).abs() < 1e-9, "{p:?} vs {f:?}");
        }
        let edc = climbed.gains.iter().find(|g| g.scheme == "edc").unwrap();
        assert_eq!(edc.gain_db, 0.0);
    }

    #[test]
    fn csv_is_independent_of_worker_count() {
        let cfg = ExperimentConfig { seeds: crate::labharness::SeedConfig { master: 3, realizations: 2 }, ..unimodal_config() };
        let exp = Experiment::new(cfg).unwrap();
        let run = |w: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap();
            let out = pool.install(|| sweep_power(&exp)).unwrap();
            let mut buf = Vec::new();
            write_csv(&out.records, &mut buf).unwrap();
            buf
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn b2b_calibration_hits_target() {
        let mut cfg = small_config();
        cfg.superchannel.modulation.payload_symbols = 16384;
        let exp = Experiment::new(cfg).unwrap();
        let trx = calibrate_b2b(&exp, 22.0, 0.5).unwrap();
        assert!((trx.tx_snr_db - 25.0).abs() < 0.3 && (trx.rx_snr_db - trx.tx_snr_db).abs() < 1e-9);
        let got = exp.run_point_with(0, Scheme::Edc, 0.0, 0, &trx).unwrap()[0].snr_db;
        assert!((got - 22.0).abs() <= 0.1);
        let tx_only = calibrate_b2b(&exp, 22.0, 1.0).unwrap();
        assert!(tx_only.rx_snr_db.is_infinite() && (tx_only.tx_snr_db - 22.0).abs() < 0.3);
        assert!(matches!(calibrate_b2b(&exp, 80.0, 0.5), Err(Error::Calibration(_))));
    }
}
