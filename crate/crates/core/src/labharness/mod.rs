//! Experiment orchestration: configuration, single points, sweeps,
//! calibration and result files.

mod config;
mod plot;
mod records;
mod sweep;

use std::time::Instant;

pub use config::{
    ExperimentConfig, LinkConfig, PeakSearch, PlanKeyword, PlanSpec, PowerSweep, SeedConfig, SuperchannelConfig,
};
pub use plot::{write_plot_series, PlotFiles};
pub use records::{canonical_cmp, read_csv, sort_records, write_csv, MeasurementRecord};
pub use sweep::{
    calibrate_b2b, calibrate_budget, extract_peaks, link_budget, peak_of, pooled_snr_db, CrossoverNote, summary_path, sweep_distance, sweep_power,
    sweep_split, write_summary, CurvePoint, Peak, SplitGain, Summary, SweepOutput,
};

use crate::analytic::Scheme;
use crate::error::{Error, Result};
use crate::fiberchannel::propagate_link;
use crate::nlc::{edc, plan_split, postcompensate, precompensate};
use crate::rxchain::{coherent_front_end, receive_channel, TrxNoiseSpec};
use crate::seed;
use crate::sigkit::{dbm_to_watts, DualPolSignal};
use crate::txchain::{apply_transmitter_noise, generate_superchannel, SuperchannelSpec, TxFrame};

/// Run `f` on a pool of `workers` threads (default: available parallelism).
/// Results never depend on the worker count.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

/// Transmitted frames and the composite waveform with every channel at 1 W.
struct Prepared {
    spec: SuperchannelSpec,
    frames: Vec<TxFrame>,
    signal: DualPolSignal,
}

/// A validated configuration with its transmitter waveforms generated once per realization.
pub struct Experiment {
    config: ExperimentConfig,
    prepared: Vec<Prepared>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let fs = config.composite_rate();
        let prepared = (0..config.seeds.realizations)
            .map(|r| {
                let spec = config.superchannel_spec(r)?;
                let tx = generate_superchannel(&spec, &config.lasers(r), config.pulse_filter(), fs)?;
                Ok(Prepared { spec, frames: tx.frames, signal: tx.signal })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, prepared })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Seed shared by every scheme at the same span count, power and realization.
    pub fn point_seed(&self, spans: usize, power_dbm: f64, realization: usize) -> u64 {
        let millidbm = (power_dbm * 1000.0).round() as i64;
        seed::derive(
            self.config.seeds.master,
            &[seed::stream::POINT, spans as u64, millidbm as u64, realization as u64],
        )
    }

    /// Evaluate one realization of one point with the configured transceiver noise.
    pub fn run_point(&self, spans: usize, scheme: Scheme, power_dbm: f64, realization: usize) -> Result<Vec<MeasurementRecord>> {
        self.run_point_with(spans, scheme, power_dbm, realization, &self.config.trx)
    }

    pub fn run_point_with(
        &self,
        spans: usize,
        scheme: Scheme,
        power_dbm: f64,
        realization: usize,
        trx: &TrxNoiseSpec,
    ) -> Result<Vec<MeasurementRecord>> {
        let started = Instant::now();
        let wrap = |e: Error| Error::Point {
            scheme: scheme.label().to_string(),
            spans,
            tx_spans: scheme.tx_spans(spans),
            power_dbm,
            source: Box::new(e),
        };
        let prepared = self.prepared.get(realization).ok_or_else(|| {
            wrap(Error::Config(format!("realization {realization} beyond the configured {}", self.prepared.len())))
        })?;
        let seed_value = self.point_seed(spans, power_dbm, realization);
        let received = self.propagate(prepared, spans, scheme, power_dbm, trx, seed_value).map_err(wrap)?;

        let offsets = prepared.spec.channel_offsets();
        let wall = started.elapsed().as_secs_f64();
        let distance_km = spans as f64 * self.config.link.fiber.length_km;
        let mut out = Vec::with_capacity(offsets.len());
        for (c, off) in offsets.iter().enumerate() {
            let rx = receive_channel(&received, *off, &prepared.spec.per_channel[c], &prepared.frames[c], &self.config.rx)
                .map_err(wrap)?;
            out.push(MeasurementRecord {
                scheme: scheme.label().to_string(),
                spans,
                tx_spans: scheme.tx_spans(spans),
                distance_km,
                power_dbm,
                channel: c,
                snr_db: rx.snr.snr_db,
                snr_x_db: rx.snr.snr_x_db,
                snr_y_db: rx.snr.snr_y_db,
                seed: seed_value,
                realization,
                wall_time_s: wall,
            });
        }
        let total = started.elapsed().as_secs_f64();
        out.iter_mut().for_each(|r| r.wall_time_s = total);
        Ok(out)
    }

    /// Transmitter through receiver front end and compensation, before per-channel DSP.
    fn propagate(
        &self,
        prepared: &Prepared,
        spans: usize,
        scheme: Scheme,
        power_dbm: f64,
        trx: &TrxNoiseSpec,
        seed_value: u64,
    ) -> Result<DualPolSignal> {
        let cfg = &self.config;
        let channel_power = dbm_to_watts(power_dbm);
        let mut signal = prepared.signal.clone();
        signal.scale(channel_power.sqrt());

        let link = cfg.link.link(spans, cfg.center_frequency());
        let plan = if scheme.is_dbp() && spans > 0 {
            Some(plan_split(spans, scheme.tx_spans(spans), cfg.ssfm)?)
        } else {
            None
        };
        if let Some(plan) = &plan {
            signal = precompensate(&signal, &link, plan)?;
        }
        signal = apply_transmitter_noise(
            &signal,
            &prepared.spec,
            channel_power,
            trx.tx_snr_db,
            trx.awg_bandwidth,
            seed::derive(seed_value, &[seed::stream::TX_NOISE]),
        )?;
        if spans > 0 {
            signal = propagate_link(&signal, &link, &cfg.ssfm, seed_value)?;
        }
        signal = coherent_front_end(&signal, trx, &prepared.spec, channel_power, seed_value)?;
        if spans > 0 {
            signal = match &plan {
                Some(plan) => postcompensate(&signal, &link, plan)?,
                None => edc(&signal, &link)?,
            };
        }
        if signal.x.iter().chain(&signal.y).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("non-finite samples after propagation".into()));
        }
        Ok(signal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txchain::LaserSpec;

    pub(crate) fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.superchannel.modulation.payload_symbols = 4096;
        cfg.superchannel.laser = LaserSpec { linewidth: 0.0, ..LaserSpec::default() };
        cfg.trx = TrxNoiseSpec::noiseless();
        cfg.link.noise_figure_db = None;
        cfg.ssfm.steps_per_span = 20;
        cfg.seeds.realizations = 1;
        cfg
    }

    #[test]
    fn back_to_back_noise_bookkeeping() {
        let mut cfg = small_config();
        cfg.superchannel.modulation.payload_symbols = 32768;
        cfg.superchannel.laser = LaserSpec::default();
        cfg.trx = TrxNoiseSpec { tx_snr_db: 25.0, rx_snr_db: 25.0, ..TrxNoiseSpec::default() };
        let exp = Experiment::new(cfg).unwrap();
        let r = exp.run_point(0, Scheme::Edc, 0.0, 0).unwrap();
        assert!((r[0].snr_db - 22.0).abs() <= 0.2, "{}", r[0].snr_db);
    }

    #[test]
    fn noiseless_round_trip_floor() {
        let mut cfg = small_config();
        cfg.ssfm.steps_per_span = 20;
        let exp = Experiment::new(cfg).unwrap();
        for k in 0..=4 {
            let r = exp.run_point(4, Scheme::from_split(4, k), -4.0, 0).unwrap();
            assert!(r[0].snr_db >= 35.0, "k={k}: {}", r[0].snr_db);
        }
    }

    #[test]
    fn schemes_share_a_seed() {
        let exp = Experiment::new(small_config()).unwrap();
        let a = exp.run_point(2, Scheme::TxDbp, 0.0, 0).unwrap();
        let b = exp.run_point(2, Scheme::RxDbp, 0.0, 0).unwrap();
        let c = exp.run_point(2, Scheme::Split { tx_spans: 1 }, 0.0, 0).unwrap();
        assert_eq!(a[0].seed, b[0].seed);
        assert_eq!(b[0].seed, c[0].seed);
        assert_eq!((a[0].tx_spans, b[0].tx_spans, c[0].tx_spans), (2, 0, 1));
        assert_eq!(a[0].scheme, "tx_dbp");
    }

    #[test]
    fn bad_realization_is_point_error() {
        let exp = Experiment::new(small_config()).unwrap();
        let e = exp.run_point(0, Scheme::Edc, 0.0, 5).unwrap_err();
        assert!(matches!(e, Error::Point { .. }));
        assert_eq!(e.exit_code(), 2);
    }
}
