//! Experiment configuration (JSON).

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::analytic::Scheme;
use crate::error::{Error, Result};
use crate::fiberchannel::{AmpSpec, FiberParams, LinkSpec, SpanSpec, SsfmConfig, SPEED_OF_LIGHT};
use crate::nlc::split_tx_spans;
use crate::rxchain::{RxConfig, TrxNoiseSpec};
use crate::sigkit::PulseFilter;
use crate::txchain::{samples_for, LaserSpec, ModulationSpec, SuperchannelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuperchannelConfig {
    pub channel_count: usize,
    /// Hz.
    pub spacing: f64,
    pub modulation: ModulationSpec,
    pub center_wavelength: f64,
    /// Composite sample rate in multiples of the symbol rate.
    pub samples_per_symbol: f64,
    /// Transmitter laser template; each channel gets its own derived phase-noise seed.
    pub laser: LaserSpec,
    /// Truncated RRC span in symbols; `None` uses the exact periodic filter.
    pub rrc_taps_span: Option<usize>,
}

impl Default for SuperchannelConfig {
    fn default() -> Self {
        Self {
            channel_count: 1,
            spacing: 50e9,
            modulation: ModulationSpec::default(),
            center_wavelength: 1553e-9,
            samples_per_symbol: 4.0,
            laser: LaserSpec::default(),
            rrc_taps_span: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub fiber: FiberParams,
    /// Amplifier gain; `None` compensates the span loss exactly.
    pub gain_db: Option<f64>,
    /// `None` makes the amplifiers noiseless.
    pub noise_figure_db: Option<f64>,
    pub span_counts: Vec<usize>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self { fiber: FiberParams::default(), gain_db: None, noise_figure_db: Some(5.0), span_counts: vec![13] }
    }
}

impl LinkConfig {
    pub fn span(&self) -> SpanSpec {
        SpanSpec {
            fiber: self.fiber,
            amp: AmpSpec {
                gain_db: self.gain_db.unwrap_or_else(|| self.fiber.span_loss_db()),
                noise_figure_db: self.noise_figure_db.unwrap_or(f64::NEG_INFINITY),
                prng_seed: 0,
            },
        }
    }

    pub fn link(&self, spans: usize, center_frequency: f64) -> LinkSpec {
        LinkSpec { spans: vec![self.span(); spans], center_frequency }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKeyword {
    Edc,
    TxDbp,
    RxDbp,
    /// `round(N/2)` spans at the transmitter.
    Half,
}

/// A backpropagation plan: a keyword, an explicit `k:N` pair, or a transmitter fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanSpec {
    Keyword(PlanKeyword),
    Fixed { tx_spans: usize, spans: usize },
    Fraction { fraction: f64 },
}

impl PlanSpec {
    /// Scheme at `N` spans, or `None` if an explicit pair is for another span count.
    pub fn resolve(&self, spans: usize) -> Result<Option<Scheme>> {
        Ok(match *self {
            PlanSpec::Keyword(PlanKeyword::Edc) => Some(Scheme::Edc),
            PlanSpec::Keyword(PlanKeyword::TxDbp) => Some(Scheme::TxDbp),
            PlanSpec::Keyword(PlanKeyword::RxDbp) => Some(Scheme::RxDbp),
            PlanSpec::Keyword(PlanKeyword::Half) => Some(Scheme::from_split(spans, split_tx_spans(spans, 0.5)?)),
            PlanSpec::Fixed { tx_spans, spans: n } if n == spans => Some(Scheme::from_split(spans, tx_spans)),
            PlanSpec::Fixed { .. } => None,
            PlanSpec::Fraction { fraction } => Some(Scheme::from_split(spans, split_tx_spans(spans, fraction)?)),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSweep {
    pub min_dbm: f64,
    pub max_dbm: f64,
    pub step_db: f64,
}

impl Default for PowerSweep {
    fn default() -> Self {
        Self { min_dbm: -4.0, max_dbm: 6.0, step_db: 1.0 }
    }
}

impl PowerSweep {
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.max_dbm - self.min_dbm) / self.step_db + 1e-9).floor() as usize;
        (0..=n).map(|i| self.min_dbm + i as f64 * self.step_db).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PeakSearch {
    /// Evaluate every grid power.
    Full,
    /// Climb from the grid centre to the first local maximum, extending past the grid edges if needed.
    #[default]
    Climb,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedConfig {
    pub master: u64,
    pub realizations: usize,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { master: 1, realizations: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub superchannel: SuperchannelConfig,
    pub link: LinkConfig,
    pub plans: Vec<PlanSpec>,
    /// Transmitter span counts for split sweeps; `None` tries every `k` in `0..=N`.
    pub split_tx_spans: Option<Vec<usize>>,
    pub power: PowerSweep,
    pub peak_search: PeakSearch,
    /// Extra grid steps a climb may take beyond either edge.
    pub max_grid_extension: usize,
    pub trx: TrxNoiseSpec,
    pub ssfm: SsfmConfig,
    pub rx: RxConfig,
    pub seeds: SeedConfig,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            superchannel: SuperchannelConfig::default(),
            link: LinkConfig::default(),
            plans: vec![
                PlanSpec::Keyword(PlanKeyword::Edc),
                PlanSpec::Keyword(PlanKeyword::TxDbp),
                PlanSpec::Keyword(PlanKeyword::RxDbp),
                PlanSpec::Keyword(PlanKeyword::Half),
            ],
            split_tx_spans: None,
            power: PowerSweep::default(),
            peak_search: PeakSearch::default(),
            max_grid_extension: 6,
            trx: TrxNoiseSpec::default(),
            ssfm: SsfmConfig::default(),
            rx: RxConfig::default(),
            seeds: SeedConfig::default(),
            output: PathBuf::from("results.csv"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn symbol_rate(&self) -> f64 {
        self.superchannel.modulation.symbol_rate
    }

    pub fn composite_rate(&self) -> f64 {
        self.superchannel.samples_per_symbol * self.symbol_rate()
    }

    pub fn center_frequency(&self) -> f64 {
        SPEED_OF_LIGHT / self.superchannel.center_wavelength
    }

    pub fn pulse_filter(&self) -> PulseFilter {
        let roll_off = self.superchannel.modulation.roll_off;
        match self.superchannel.rrc_taps_span {
            None => PulseFilter::Exact { roll_off },
            Some(span) => PulseFilter::Taps(crate::sigkit::RrcSpec {
                roll_off,
                span_symbols: span,
                samples_per_symbol: self.superchannel.samples_per_symbol.round() as usize,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.link.span_counts.is_empty() {
            return bad("span_counts is empty".into());
        }
        if self.plans.is_empty() {
            return bad("no plans configured".into());
        }
        for plan in &self.plans {
            match *plan {
                PlanSpec::Fixed { tx_spans, spans } if tx_spans > spans => {
                    return bad(format!("plan {tx_spans}:{spans} has more transmitter spans than spans"));
                }
                PlanSpec::Fraction { fraction } if !(0.0..=1.0).contains(&fraction) => {
                    return bad(format!("split fraction {fraction} outside [0, 1]"));
                }
                _ => {}
            }
        }
        let p = &self.power;
        if !(p.step_db > 0.0) || !(p.max_dbm >= p.min_dbm) || !p.min_dbm.is_finite() || !p.max_dbm.is_finite() {
            return bad(format!("power sweep {}..{} step {} is empty or malformed", p.min_dbm, p.max_dbm, p.step_db));
        }
        if self.seeds.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if !(self.superchannel.samples_per_symbol >= 2.0) {
            return bad("samples_per_symbol must be at least 2".into());
        }
        self.trx.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.ssfm.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.link.fiber.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Smallest payload at or above the configured one that is a whole number of
    /// pilot periods, puts every channel on a DFT bin and gives an integral
    /// sample count.
    pub fn aligned_payload(&self) -> Result<usize> {
        let m = &self.superchannel.modulation;
        let sps = self.superchannel.samples_per_symbol;
        let ratio = self.superchannel.spacing / m.symbol_rate;
        let ok = |payload: usize| {
            if !payload.is_multiple_of(m.pilot_rate_inverse.max(1)) {
                return false;
            }
            let frame = (m.pilot_preamble_len + payload) as f64;
            let integral = |v: f64| (v - v.round()).abs() < 1e-6;
            integral(frame * sps) && (self.superchannel.channel_count == 1 || integral(frame * ratio))
        };
        let found = (m.payload_symbols..m.payload_symbols + 100_000).find(|&p| ok(p));
        match found {
            Some(p) => {
                if p != m.payload_symbols {
                    info!("payload {} rounded up to {p} to keep channels on the DFT grid", m.payload_symbols);
                }
                Ok(p)
            }
            None => Err(Error::Config("no payload length puts the channel grid on DFT bins".into())),
        }
    }

    /// Superchannel with the aligned payload and per-channel data seeds for one realization.
    pub fn superchannel_spec(&self, realization: usize) -> Result<SuperchannelSpec> {
        let payload = self.aligned_payload()?;
        let modulation = ModulationSpec {
            payload_symbols: payload,
            prng_seed: crate::seed::derive(self.seeds.master, &[crate::seed::stream::DATA, realization as u64]),
            ..self.superchannel.modulation.clone()
        };
        let mut spec = SuperchannelSpec::uniform(self.superchannel.channel_count, self.superchannel.spacing, modulation);
        spec.center_wavelength = self.superchannel.center_wavelength;
        let frame = spec.per_channel[0].frame_len();
        samples_for(frame, self.symbol_rate(), self.composite_rate())?;
        spec.validate(self.composite_rate()).map_err(|e| match e {
            Error::Parameter(m) => Error::Config(m),
            other => other,
        })?;
        Ok(spec)
    }

    /// Transmitter lasers for one realization.
    pub fn lasers(&self, realization: usize) -> Vec<LaserSpec> {
        (0..self.superchannel.channel_count)
            .map(|c| LaserSpec {
                prng_seed: crate::seed::derive(
                    self.seeds.master,
                    &[crate::seed::stream::LASER, c as u64, realization as u64, self.superchannel.laser.prng_seed],
                ),
                ..self.superchannel.laser
            })
            .collect()
    }

    /// Schemes configured at `N` spans, in configuration order without duplicates.
    pub fn schemes(&self, spans: usize) -> Result<Vec<Scheme>> {
        let mut out = Vec::new();
        for p in &self.plans {
            if let Some(s) = p.resolve(spans)? {
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let mut cfg = ExperimentConfig::default();
        cfg.trx.tx_snr_db = 24.0;
        cfg.plans.push(PlanSpec::Fixed { tx_spans: 5, spans: 13 });
        cfg.plans.push(PlanSpec::Fraction { fraction: 0.25 });
        cfg.split_tx_spans = Some(vec![0, 3, 5]);
        cfg.link.noise_figure_db = None;
        let text = cfg.to_json().unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn missing_fields_take_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"plans": ["edc", {"tx_spans": 5, "spans": 13}]}"#).unwrap();
        assert_eq!(cfg.superchannel.modulation.qam_order, 64);
        assert_eq!(cfg.schemes(13).unwrap(), vec![Scheme::Edc, Scheme::Split { tx_spans: 5 }]);
        assert_eq!(cfg.schemes(4).unwrap(), vec![Scheme::Edc]);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        assert!(matches!(ExperimentConfig::from_json("{"), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::default();
        cfg.power.step_db = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ExperimentConfig { plans: vec![PlanSpec::Fixed { tx_spans: 6, spans: 4 }], ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn three_channel_payload_is_aligned() {
        let mut cfg = ExperimentConfig::default();
        cfg.superchannel.channel_count = 3;
        cfg.superchannel.modulation.payload_symbols = 32768;
        assert_eq!(cfg.aligned_payload().unwrap(), 33824);
        cfg.superchannel.modulation.payload_symbols = 2048;
        assert_eq!(cfg.aligned_payload().unwrap(), 2144);
        let spec = cfg.superchannel_spec(0).unwrap();
        assert_eq!(spec.per_channel[0].frame_len() % 99, 0);
    }

    #[test]
    fn power_grid_and_keywords() {
        assert_eq!(PowerSweep { min_dbm: -2.0, max_dbm: 2.0, step_db: 1.0 }.grid(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let cfg = ExperimentConfig::default();
        assert_eq!(
            cfg.schemes(13).unwrap(),
            vec![Scheme::Edc, Scheme::TxDbp, Scheme::RxDbp, Scheme::Split { tx_spans: 7 }]
        );
    }
}
